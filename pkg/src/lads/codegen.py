"""LLM-driven pipeline route: skeleton assembly, generation, validation, fixing.

A skeleton is a runnable script template with byte-frozen scaffolding
(data loading, the 8:2 split, metric emission, model persistence,
submission writing) and editable USER CODE regions. Generated code must
reproduce every protected block verbatim and in order; violations force a
fix cycle and can never validate. The fix loop is budgeted by
max_fix_iterations and returns the best artifact on exhaustion.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from .bench import Direction, metric_direction
from .config import Config, DEFAULT_CONFIG
from .errors import LoopBudgetExhausted, NoCodeBlock, UnresolvedReflection
from .gateway import LLMGateway
from .intake import split_indices
from .reflection import TaskReflection
from .sandbox import ExecutionResult, execute, parse_metrics

MODEL_ARTIFACT = "model_artifact"
DEFAULT_SUBMISSION = "submission.csv"


class BackendKind(str, Enum):
    GENERIC = "GENERIC"
    ENGINE_SPECIFIC = "ENGINE_SPECIFIC"


@dataclass(frozen=True)
class Region:
    label: str
    start_marker: str
    end_marker: str
    content: str  # full block, markers included


@dataclass
class Skeleton:
    body: str
    protected_regions: list[Region]
    user_regions: list[str]


@dataclass
class CodeArtifact:
    code: str
    generation: int = 0
    parent: "CodeArtifact | None" = None
    origin_prompt_id: str = "codegen"


class VerdictStatus(str, Enum):
    VALID = "VALID"
    EXEC_FAILED = "EXEC_FAILED"
    NO_SUBMISSION = "NO_SUBMISSION"
    NO_METRIC = "NO_METRIC"
    BELOW_BASELINE = "BELOW_BASELINE"


@dataclass
class ValidationVerdict:
    status: VerdictStatus
    details: str
    metric_value: float | None = None


@dataclass
class PipelineArtifact:
    """A candidate solution with its execution evidence and verdict."""

    artifact: CodeArtifact
    execution: ExecutionResult
    verdict: ValidationVerdict
    metrics: dict[str, float]
    predictions_path: Path | None
    workdir: Path
    metric_name: str
    target: str
    validated: bool
    protected_ok: bool
    submission_name: str = DEFAULT_SUBMISSION
    report: str | None = None

    def primary_metric(self) -> tuple[str, float]:
        if self.metric_name in self.metrics:
            return self.metric_name, self.metrics[self.metric_name]
        if self.metrics:
            name = list(self.metrics)[-1]
            return name, self.metrics[name]
        raise ValueError("pipeline has no parsed metrics")

    def model_artifact_path(self) -> Path:
        return self.workdir / MODEL_ARTIFACT


# --- skeleton construction ------------------------------------------------------


def _frozen_block(label: str, inner: str) -> tuple[str, Region]:
    start = f"### frozen: {label} (do not modify) ###"
    end = f"### end frozen: {label} ###"
    block = f"{start}\n{inner}\n{end}"
    return block, Region(label=label, start_marker=start, end_marker=end, content=block)


def _user_block(label: str, inner: str) -> tuple[str, list[Region]]:
    start = f"### USER CODE: {label} ###"
    end = f"### END USER CODE: {label} ###"
    block = f"{start}\n{inner}\n{end}"
    # the marker comments themselves are protected; only the inner text is editable
    return block, [
        Region(label=f"{label} (begin marker)", start_marker=start, end_marker=start, content=start),
        Region(label=f"{label} (end marker)", start_marker=end, end_marker=end, content=end),
    ]


def build_skeleton(sections: list[tuple[str, str, str]]) -> Skeleton:
    """Assemble a skeleton from ("frozen"|"user", label, inner_text) sections."""
    blocks: list[str] = []
    regions: list[Region] = []
    user_labels: list[str] = []
    for kind, label, inner in sections:
        if kind == "frozen":
            block, region = _frozen_block(label, inner)
            regions.append(region)
        elif kind == "user":
            block, pair = _user_block(label, inner)
            regions.extend(pair)
            user_labels.append(label)
        else:
            raise ValueError(f"unknown section kind: {kind}")
        blocks.append(block)
    return Skeleton(body="\n\n".join(blocks) + "\n", protected_regions=regions, user_regions=user_labels)


_CLASSIFICATION_METRICS = {"accuracy", "auc", "f1", "logloss"}

_METRIC_SNIPPETS = {
    "accuracy": "from sklearn.metrics import accuracy_score\nscore = accuracy_score(val_target, val_pred)",
    "auc": "from sklearn.metrics import roc_auc_score\nscore = roc_auc_score(val_target, val_pred)",
    "f1": "from sklearn.metrics import f1_score\nscore = f1_score(val_target, val_pred)",
    "logloss": "from sklearn.metrics import log_loss\nscore = log_loss(val_target, val_pred)",
    "rmse": "from sklearn.metrics import mean_squared_error\nscore = float(np.sqrt(mean_squared_error(val_target, val_pred)))",
    "rmsle": "from sklearn.metrics import mean_squared_log_error\nscore = float(np.sqrt(mean_squared_log_error(val_target, np.clip(val_pred, 0, None))))",
    "mae": "from sklearn.metrics import mean_absolute_error\nscore = mean_absolute_error(val_target, val_pred)",
    "r2-score": "from sklearn.metrics import r2_score\nscore = r2_score(val_target, val_pred)",
}

_SUBMISSION_NAME_RE = re.compile(r"([\w\-]+\.csv)")


def submission_filename(reflection: TaskReflection) -> str:
    if reflection.submission_format:
        m = _SUBMISSION_NAME_RE.search(reflection.submission_format)
        if m:
            return m.group(1)
    return DEFAULT_SUBMISSION


def assemble_skeleton(
    reflection: TaskReflection,
    backend_kind: BackendKind,
    dataset_csv: str | Path,
    config: Config | None = None,
    id_column: str | None = None,
    engine_block: str | None = None,
) -> Skeleton:
    """Build the pipeline skeleton for a resolved reflection.

    GENERIC skeletons leave preprocessing and modeling as USER CODE;
    ENGINE_SPECIFIC skeletons freeze the engine invocation scaffold
    (engine_block) in place of the modeling region.
    """
    config = config or DEFAULT_CONFIG
    if not reflection.resolved:
        raise UnresolvedReflection("target variable or evaluation metric is not resolved")
    metric = reflection.evaluation_metric
    if metric not in _METRIC_SNIPPETS:
        raise UnresolvedReflection(f"metric has no scoring snippet: {metric!r}")
    target = reflection.target_variable
    task_kind = "classification" if metric in _CLASSIFICATION_METRICS else "regression"
    submission = submission_filename(reflection)

    setup = f'''import pickle

import numpy as np
import pandas as pd

SEED = {config.code_seed}
SPLIT_SEED = {config.split_seed}
np.random.seed(SEED)
TRAIN_PATH = {str(dataset_csv)!r}
TARGET = {target!r}
METRIC = {metric!r}
TASK_KIND = {task_kind!r}
ID_COLUMN = {id_column!r}
SUBMISSION_PATH = {submission!r}
MODEL_PATH = {MODEL_ARTIFACT!r}

df = pd.read_csv(TRAIN_PATH)
perm = np.random.RandomState(SPLIT_SEED).permutation(len(df))
n_train = int(np.floor(0.8 * len(df)))
train_df = df.iloc[perm[:n_train]].reset_index(drop=True)
val_df = df.iloc[perm[n_train:]].reset_index(drop=True)'''

    preprocessing_stub = '''def preprocess(frame):
    # Feature engineering shared by training, validation and inference.
    # The target column may be absent from the incoming frame.
    return frame'''

    modeling_stub = '''def fit_model(train_frame):
    # Fit and return a picklable model. train_frame includes TARGET.
    # The returned object must not reference classes defined in this script.
    raise NotImplementedError("write the model fitting code")


def predict_model(model, frame):
    # Return one prediction per row of a preprocessed frame without TARGET.
    # For auc/logloss return positive-class scores, otherwise labels/values.
    raise NotImplementedError("write the prediction code")'''

    score_lines = _METRIC_SNIPPETS[metric]
    evaluation = f'''train_ready = preprocess(train_df.copy())
val_ready = preprocess(val_df.drop(columns=[TARGET]).copy())
model = fit_model(train_ready)
val_pred = np.asarray(predict_model(model, val_ready))
val_target = val_df[TARGET]
{score_lines}
print("LADS_METRIC " + METRIC + "=" + repr(float(score)))
feature_columns = [c for c in df.columns if c != TARGET]
with open(MODEL_PATH, "wb") as fh:
    pickle.dump(
        {{
            "model": model,
            "target": TARGET,
            "feature_columns": feature_columns,
            "metric": METRIC,
            "task_kind": TASK_KIND,
            "seed": SEED,
        }},
        fh,
    )'''

    submission_block = '''submission = pd.DataFrame()
if ID_COLUMN is not None and ID_COLUMN in val_df.columns:
    submission[ID_COLUMN] = val_df[ID_COLUMN]
else:
    submission["row_id"] = np.arange(len(val_df))
submission[TARGET] = val_pred
submission.to_csv(SUBMISSION_PATH, index=False)'''

    sections: list[tuple[str, str, str]] = [("frozen", "setup", setup)]
    sections.append(("user", "preprocessing", preprocessing_stub))
    if backend_kind is BackendKind.ENGINE_SPECIFIC:
        sections.append(("frozen", "engine invocation", engine_block or modeling_stub))
    else:
        sections.append(("user", "modeling", modeling_stub))
    sections.append(("frozen", "evaluation", evaluation))
    sections.append(("frozen", "submission", submission_block))
    return build_skeleton(sections)


# --- user-region helpers ----------------------------------------------------------


def user_region_span(code: str, label: str) -> tuple[int, int] | None:
    start = f"### USER CODE: {label} ###"
    end = f"### END USER CODE: {label} ###"
    i = code.find(start)
    if i == -1:
        return None
    j = code.find(end, i)
    if j == -1:
        return None
    return i + len(start), j


def extract_user_region(code: str, label: str) -> str | None:
    span = user_region_span(code, label)
    if span is None:
        return None
    return code[span[0] : span[1]].strip("\n")


def extract_frozen_region(code: str, label: str) -> str | None:
    start = f"### frozen: {label} (do not modify) ###"
    end = f"### end frozen: {label} ###"
    i = code.find(start)
    if i == -1:
        return None
    j = code.find(end, i)
    if j == -1:
        return None
    return code[i + len(start) : j].strip("\n")


def fill_user_region(code: str, label: str, inner: str) -> str:
    span = user_region_span(code, label)
    if span is None:
        raise ValueError(f"no user region {label!r} in code")
    return code[: span[0]] + "\n" + inner.strip("\n") + "\n" + code[span[1] :]


# --- generation ---------------------------------------------------------------------

_CODE_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_-]*)\n(.*?)```", re.DOTALL)


def _extract_code(gateway: LLMGateway, prompt: str, template_id: str) -> str:
    """First fenced code block from the response, with one repair retry."""
    raw = gateway.complete(prompt, template_id=template_id)
    m = _CODE_FENCE_RE.search(raw)
    if m:
        return m.group(1)
    repair = prompt + "\n\nRespond with the complete script in a single fenced code block."
    raw = gateway.complete(repair, template_id=template_id)
    m = _CODE_FENCE_RE.search(raw)
    if m:
        return m.group(1)
    raise NoCodeBlock("no fenced code block in response after repair retry")


def generate(
    gateway: LLMGateway,
    skeleton: Skeleton,
    reflection: TaskReflection,
    dataset_path: str | Path,
) -> CodeArtifact:
    prompt = gateway.render(
        "codegen",
        {
            "reflection": reflection.raw_text,
            "dataset_path": str(dataset_path),
            "skeleton": skeleton.body,
        },
    )
    code = _extract_code(gateway, prompt, "codegen")
    return CodeArtifact(code=code, generation=0, origin_prompt_id="codegen")


def check_protected(skeleton: Skeleton, artifact: CodeArtifact) -> tuple[bool, Region | None]:
    """Pass iff every protected block occurs byte-identically and in order."""
    cursor = 0
    for region in skeleton.protected_regions:
        idx = artifact.code.find(region.content, cursor)
        if idx == -1:
            return False, region
        cursor = idx + len(region.content)
    return True, None


def validate(
    artifact: CodeArtifact,
    exec_result: ExecutionResult,
    baseline: float,
    direction: Direction,
    metric_name: str | None = None,
    submission_name: str = DEFAULT_SUBMISSION,
) -> ValidationVerdict:
    """Grade one execution: crash, missing submission, missing metric, baseline."""
    if exec_result.exit_code != 0:
        detail = exec_result.stderr.strip().splitlines()[-1:] or ["nonzero exit"]
        return ValidationVerdict(
            status=VerdictStatus.EXEC_FAILED,
            details=f"exit code {exec_result.exit_code}: {detail[0]}",
        )
    if submission_name not in exec_result.files_created:
        return ValidationVerdict(
            status=VerdictStatus.NO_SUBMISSION,
            details=f"submission file {submission_name!r} was not created",
        )
    emissions = {m.name: m.value for m in parse_metrics(exec_result.stdout)}
    if metric_name is not None:
        value = emissions.get(metric_name)
    else:
        value = list(emissions.values())[-1] if emissions else None
    if value is None:
        return ValidationVerdict(
            status=VerdictStatus.NO_METRIC,
            details="no metric emission line found on stdout",
        )
    worse = value < baseline if direction == Direction.LARGER_BETTER else value > baseline
    if worse:
        return ValidationVerdict(
            status=VerdictStatus.BELOW_BASELINE,
            details=f"metric below baseline ({value!r} vs baseline {baseline!r})",
            metric_value=value,
        )
    return ValidationVerdict(status=VerdictStatus.VALID, details="goal satisfied", metric_value=value)


_TAIL_CHARS = 4000


def _tail(text: str) -> str:
    if len(text) <= _TAIL_CHARS:
        return text
    return "… [truncated]\n" + text[-_TAIL_CHARS:]


def improve(
    gateway: LLMGateway,
    artifact: CodeArtifact,
    exec_result: ExecutionResult,
    reflection: TaskReflection,
    dataset_path: str | Path,
    msg: str = "",
) -> CodeArtifact:
    prompt = gateway.render(
        "fix_solution",
        {
            "reflection": reflection.raw_text,
            "dataset_path": str(dataset_path),
            "code_recent_solution": artifact.code,
            "msg_section": f"# Execution Message: {msg}" if msg else "",
            "stdout": _tail(exec_result.stdout),
            "stderr": _tail(exec_result.stderr),
        },
    )
    code = _extract_code(gateway, prompt, "fix_solution")
    return CodeArtifact(
        code=code,
        generation=artifact.generation + 1,
        parent=artifact,
        origin_prompt_id="fix_solution",
    )


# --- baseline oracle ----------------------------------------------------------------


def compute_baseline(frame: pd.DataFrame, target: str, metric: str, seed: int) -> float:
    """Naive floor for VALID: majority class (classification) or train mean (regression),
    scored on the same seeded 8:2 validation fold the skeleton uses."""
    train_idx, val_idx = split_indices(len(frame), seed)
    y_train = frame[target].iloc[train_idx]
    y_val = frame[target].iloc[val_idx]
    if metric == "auc":
        return 0.5  # any constant score ranks nothing
    if metric in ("accuracy", "f1", "logloss"):
        majority = y_train.mode(dropna=True).iloc[0]
        if metric == "accuracy":
            return float((y_val == majority).mean())
        if metric == "f1":
            positive = 1 if (y_train == 1).any() else y_train.max()
            tp = float(((y_val == positive) & (majority == positive)).sum())
            pred_pos = float(len(y_val)) if majority == positive else 0.0
            actual_pos = float((y_val == positive).sum())
            if pred_pos + actual_pos == 0:
                return 0.0
            return 2 * tp / (pred_pos + actual_pos)
        prevalence = float((y_train == 1).mean())
        p = min(max(prevalence, 1e-15), 1 - 1e-15)
        y = (y_val == 1).astype(float).to_numpy()
        return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())
    mean = float(y_train.mean())
    y = y_val.to_numpy(dtype=float)
    if metric == "rmse":
        return float(np.sqrt(((y - mean) ** 2).mean()))
    if metric == "mae":
        return float(np.abs(y - mean).mean())
    if metric == "rmsle":
        clipped = np.clip(mean, 0, None)
        return float(np.sqrt(((np.log1p(y) - np.log1p(clipped)) ** 2).mean()))
    if metric == "r2-score":
        ss_res = float(((y - mean) ** 2).sum())
        ss_tot = float(((y - y.mean()) ** 2).sum())
        return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    raise ValueError(f"no baseline rule for metric {metric!r}")


# --- the loop -----------------------------------------------------------------------


def run_codegen(
    gateway: LLMGateway,
    reflection: TaskReflection,
    frame: pd.DataFrame,
    dataset_csv: str | Path,
    workdir: str | Path,
    config: Config | None = None,
    emit: Callable[[str, str], None] | None = None,
    backend: BackendKind = BackendKind.GENERIC,
    skeleton: Skeleton | None = None,
    initial: CodeArtifact | None = None,
) -> PipelineArtifact:
    """assemble -> generate -> (execute -> check -> validate -> improve)* loop.

    Returns the validated pipeline, or raises LoopBudgetExhausted carrying
    the best artifact seen. ``skeleton``/``initial`` let the AutoML branch
    inject adapter-emitted scripts while reusing the same loop.
    """
    config = config or DEFAULT_CONFIG
    emit = emit or (lambda step, detail: None)
    workdir = Path(workdir)

    id_column = next(
        (name for name, kind in reflection.feature_classes.items() if kind.value == "ID"), None
    )
    if skeleton is None:
        skeleton = assemble_skeleton(
            reflection, backend, dataset_csv, config=config, id_column=id_column
        )
        emit("skeleton", f"assembled {backend.value} skeleton, {len(skeleton.protected_regions)} protected regions")

    metric = reflection.evaluation_metric
    direction = metric_direction(metric)
    baseline = compute_baseline(frame, reflection.target_variable, metric, config.split_seed)
    submission = submission_filename(reflection)

    artifact = initial if initial is not None else generate(gateway, skeleton, reflection, dataset_csv)
    if initial is None:
        emit("generate", f"generation 0 produced {len(artifact.code)} bytes of code")

    best: PipelineArtifact | None = None
    for attempt in range(config.max_fix_iterations + 1):
        attempt_dir = workdir / f"attempt-{artifact.generation}"
        exec_result = execute(artifact.code, attempt_dir, config=config)
        emit(
            "execute",
            f"generation {artifact.generation}: exit {exec_result.exit_code} in {exec_result.duration:.2f}s",
        )
        prot_ok, violated = check_protected(skeleton, artifact)
        verdict = validate(
            artifact, exec_result, baseline, direction, metric_name=metric, submission_name=submission
        )
        emissions = {m.name: m.value for m in parse_metrics(exec_result.stdout)}
        predictions = attempt_dir / submission
        pipeline = PipelineArtifact(
            artifact=artifact,
            execution=exec_result,
            verdict=verdict,
            metrics=emissions,
            predictions_path=predictions if predictions.exists() else None,
            workdir=attempt_dir,
            metric_name=metric,
            target=reflection.target_variable,
            validated=verdict.status is VerdictStatus.VALID and prot_ok,
            protected_ok=prot_ok,
            submission_name=submission,
        )
        if not prot_ok:
            emit("validate", f"protected region violated: {violated.label}")
        else:
            emit("validate", f"verdict {verdict.status.value}: {verdict.details}")
        if pipeline.validated:
            return pipeline
        best = _better(best, pipeline, direction)
        if attempt == config.max_fix_iterations:
            break
        msg = (
            f"protected scaffolding was modified (region: {violated.label}); restore it verbatim"
            if not prot_ok
            else verdict.details
        )
        artifact = improve(gateway, artifact, exec_result, reflection, dataset_csv, msg=msg)
        emit("improve", f"produced generation {artifact.generation} after: {msg}")

    raise LoopBudgetExhausted(
        f"no VALID artifact after {config.max_fix_iterations} fix iterations", best=best
    )


def _better(
    current: PipelineArtifact | None, candidate: PipelineArtifact, direction: Direction
) -> PipelineArtifact:
    if current is None:
        return candidate
    c_val = candidate.verdict.metric_value
    b_val = current.verdict.metric_value
    if c_val is None:
        return current
    if b_val is None:
        return candidate
    if direction == Direction.LARGER_BETTER:
        return candidate if c_val >= b_val else current
    return candidate if c_val <= b_val else current

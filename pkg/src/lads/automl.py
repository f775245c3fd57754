"""AutoML branch: router tokens, config extraction, engine adapters.

The router speaks a frozen three-token protocol (NO / LAMA / FEDOT).
Engine adapters emit standalone pipeline scripts with the engine
invocation frozen inside protected scaffolding, so every run is
reproducible from the exported code; they never call engines in-process.
A deterministic stub adapter ships in-tree so the whole branch is
testable without heavyweight engines.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

from .codegen import (
    BackendKind,
    CodeArtifact,
    PipelineArtifact,
    Skeleton,
    assemble_skeleton,
    run_codegen,
)
from .config import Config, DEFAULT_CONFIG
from .errors import CapabilityMismatch, InvalidConfig, UnknownEngine
from .gateway import LLMGateway
from .intake import ColumnKind, load, profile
from .reflection import TaskReflection


class RouteToken(str, Enum):
    NO = "NO"
    LAMA = "LAMA"
    FEDOT = "FEDOT"


TASK_METRIC_PAIRING = {"reg": "r2-score", "binary": "auc"}


@dataclass(frozen=True)
class AutoMLConfig:
    task_type: str  # "reg" | "binary"
    target: str
    task_metric: str  # "r2-score" | "auc"

    def __post_init__(self):
        if self.task_type not in TASK_METRIC_PAIRING:
            raise InvalidConfig(f"unsupported task_type: {self.task_type!r}")
        if TASK_METRIC_PAIRING[self.task_type] != self.task_metric:
            raise InvalidConfig(
                f"metric pairing violated: {self.task_type!r} requires "
                f"{TASK_METRIC_PAIRING[self.task_type]!r}, got {self.task_metric!r}"
            )


@dataclass
class BackendParams:
    engine_id: str
    time_budget: float
    extra: dict = field(default_factory=dict)


def route(gateway: LLMGateway, query: str) -> RouteToken:
    """Ask the router which engine (if any) the user requested."""
    if not query.strip():
        raise ValueError("query must be non-empty")
    prompt = gateway.render("automl_router", {"query": query})
    token = gateway.complete_token(
        prompt, allowed=[t.value for t in RouteToken], template_id="automl_router"
    )
    return RouteToken(token)


def extract_config(
    gateway: LLMGateway,
    task: str,
    file_name: str,
    columns: list[str],
    head: str,
) -> AutoMLConfig:
    """Extract the engine training configuration as strict JSON."""
    if not columns:
        raise ValueError("columns must be non-empty")
    prompt = gateway.render(
        "automl_config",
        {
            "task": task,
            "file_name": file_name,
            "df_columns": ", ".join(columns),
            "df_head": head,
        },
    )
    required = {"task_type", "target", "task_metric"}
    obj = gateway.complete_json(prompt, required, template_id="automl_config")
    try:
        return _config_from(obj, columns)
    except InvalidConfig as first:
        repair = (
            prompt
            + "\n\nThe previous configuration was invalid: "
            + str(first)
            + '\nRemember: task_type "reg" pairs with task_metric "r2-score", task_type '
            '"binary" pairs with task_metric "auc", and target must be one of the column names.'
        )
        obj = gateway.complete_json(repair, required, template_id="automl_config")
        return _config_from(obj, columns)


def _config_from(obj: dict, columns: list[str]) -> AutoMLConfig:
    cfg = AutoMLConfig(
        task_type=str(obj["task_type"]),
        target=str(obj["target"]),
        task_metric=str(obj["task_metric"]),
    )
    if cfg.target not in columns:
        raise InvalidConfig(f"target {cfg.target!r} is not a dataset column")
    return cfg


_TIME_BUDGET_RE = re.compile(r"time[\s_-]*budget\D{0,12}(\d+(?:\.\d+)?)", re.IGNORECASE)


def gen_params(
    gateway: LLMGateway,
    reflection: TaskReflection,
    engine_id: str,
    config: Config | None = None,
) -> BackendParams:
    """Let the provider propose engine knobs; clamp to registered bounds."""
    config = config or DEFAULT_CONFIG
    raw = gateway.ask("gen_params", {"reflection": reflection.raw_text})
    time_budget = config.default_time_budget
    extra: dict = {}
    try:
        obj = gateway._parse_json(raw, set())
        if "time_budget" in obj:
            time_budget = float(obj["time_budget"])
        extra = {k: v for k, v in obj.items() if k != "time_budget"}
    except Exception:
        m = _TIME_BUDGET_RE.search(raw)
        if m:
            time_budget = float(m.group(1))
    ceiling = config.sandbox_ceiling()
    time_budget = min(max(time_budget, config.min_time_budget), ceiling)
    return BackendParams(engine_id=engine_id, time_budget=time_budget, extra=extra)


# --- adapters -----------------------------------------------------------------


class EngineAdapter(Protocol):
    engine_id: str
    capabilities: frozenset[str]

    def emit(
        self,
        automl_config: AutoMLConfig,
        params: BackendParams,
        dataset_csv: str | Path,
        reflection: TaskReflection,
        config: Config,
    ) -> Skeleton: ...


def _render_block(template: str, values: dict) -> str:
    out = template
    for name, value in values.items():
        out = out.replace("{" + name + "}", str(value))
    return out


_STUB_BLOCK = '''def fit_model(train_frame):
    # Deterministic naive model: single best-correlating numeric feature.
    y = train_frame[TARGET].astype(float)
    X = train_frame.drop(columns=[TARGET])
    num = X.select_dtypes(include="number")
    best_name, best_corr = None, 0.0
    for col in num.columns:
        v = num[col].astype(float)
        if v.std(ddof=0) == 0 or y.std(ddof=0) == 0:
            continue
        c = float(((v - v.mean()) * (y - y.mean())).mean() / (v.std(ddof=0) * y.std(ddof=0)))
        if abs(c) > abs(best_corr):
            best_name, best_corr = col, c
    if best_name is None:
        return {"kind": "constant", "value": float(y.mean())}
    v = num[best_name].astype(float)
    if TASK_KIND == "regression":
        slope = best_corr * y.std(ddof=0) / v.std(ddof=0)
        return {
            "kind": "linear",
            "feature": best_name,
            "slope": float(slope),
            "intercept": float(y.mean() - slope * v.mean()),
            "fill": float(v.mean()),
        }
    return {
        "kind": "threshold",
        "feature": best_name,
        "sign": 1.0 if best_corr >= 0 else -1.0,
        "center": float(v.mean()),
        "scale": float(v.std(ddof=0) or 1.0),
        "fill": float(v.mean()),
    }


def predict_model(model, frame):
    if model["kind"] == "constant":
        return np.full(len(frame), model["value"])
    v = frame[model["feature"]].astype(float).fillna(model["fill"]).to_numpy()
    if model["kind"] == "linear":
        return model["intercept"] + model["slope"] * v
    z = model["sign"] * (v - model["center"]) / model["scale"]
    return 1.0 / (1.0 + np.exp(-np.clip(z, -30.0, 30.0)))'''


@dataclass
class BlockAdapter:
    """Adapter defined by a frozen engine-invocation block slotted into the
    standard engine-specific skeleton."""

    engine_id: str
    capabilities: frozenset[str]
    block_template: str

    def emit(self, automl_config, params, dataset_csv, reflection, config):
        block = _render_block(
            self.block_template,
            {
                "engine_id": self.engine_id,
                "task_type": automl_config.task_type,
                "metric": automl_config.task_metric,
                "time_budget": params.time_budget,
                "seed": config.code_seed,
            },
        )
        id_column = next(
            (name for name, kind in reflection.feature_classes.items() if kind == ColumnKind.ID),
            None,
        )
        return assemble_skeleton(
            reflection,
            BackendKind.ENGINE_SPECIFIC,
            dataset_csv,
            config=config,
            id_column=id_column,
            engine_block=block,
        )


def _load_engine_template(name: str) -> str:
    return resources.files("lads").joinpath("engines", name).read_text()


_ADAPTERS: dict[str, EngineAdapter] = {}


def register_adapter(adapter: EngineAdapter) -> None:
    _ADAPTERS[adapter.engine_id] = adapter


def get_adapter(engine_id: str) -> EngineAdapter:
    if engine_id not in _ADAPTERS:
        raise UnknownEngine(f"no adapter registered for engine {engine_id!r}")
    return _ADAPTERS[engine_id]


def registered_engines() -> list[str]:
    return sorted(_ADAPTERS)


def load_adapter_registry(path: str | Path) -> list[str]:
    """Register adapters from a JSON file: [{engine_id, template, capabilities}]."""
    entries = json.loads(Path(path).read_text())
    loaded = []
    for entry in entries:
        template_path = Path(entry["template"])
        if not template_path.is_absolute():
            template_path = Path(path).parent / template_path
        register_adapter(
            BlockAdapter(
                engine_id=entry["engine_id"],
                capabilities=frozenset(entry["capabilities"]),
                block_template=template_path.read_text(),
            )
        )
        loaded.append(entry["engine_id"])
    return loaded


register_adapter(
    BlockAdapter(engine_id="stub", capabilities=frozenset({"binary", "reg"}), block_template=_STUB_BLOCK)
)
register_adapter(
    BlockAdapter(
        engine_id="lama",
        capabilities=frozenset({"binary", "reg"}),
        block_template=_load_engine_template("lama.py.tmpl"),
    )
)
register_adapter(
    BlockAdapter(
        engine_id="fedot",
        capabilities=frozenset({"binary", "reg"}),
        block_template=_load_engine_template("fedot.py.tmpl"),
    )
)


# --- running -------------------------------------------------------------------


def reflection_from_config(
    automl_config: AutoMLConfig, feature_classes: dict[str, ColumnKind], task: str = ""
) -> TaskReflection:
    """Minimal reflection carrying the engine configuration downstream."""
    raw = json.dumps(
        {
            "task": task,
            "task_type": automl_config.task_type,
            "target": automl_config.target,
            "task_metric": automl_config.task_metric,
        },
        indent=2,
    )
    return TaskReflection(
        overview=task or None,
        files=[],
        problem_definition=task or None,
        feature_classes=dict(feature_classes),
        target_variable=automl_config.target,
        evaluation_metric=automl_config.task_metric,
        submission_format=None,
        other_aspects=None,
        raw_text=raw,
        absent_sections=[],
    )


def run_automl(
    gateway: LLMGateway,
    automl_config: AutoMLConfig,
    params: BackendParams,
    train_path: str | Path,
    test_path: str | Path | None = None,
    workdir: str | Path = "automl-run",
    config: Config | None = None,
    emit: Callable[[str, str], None] | None = None,
    frame=None,
    reflection: TaskReflection | None = None,
    dataset_csv: str | Path | None = None,
) -> PipelineArtifact:
    """Emit the adapter's pipeline script and run it through the shared
    execute/validate/fix loop."""
    config = config or DEFAULT_CONFIG
    emit = emit or (lambda step, detail: None)

    adapter = get_adapter(params.engine_id)
    if automl_config.task_type not in adapter.capabilities:
        raise CapabilityMismatch(
            f"engine {params.engine_id!r} supports {sorted(adapter.capabilities)}, "
            f"not {automl_config.task_type!r}"
        )

    if frame is None or dataset_csv is None:
        table = load(train_path, config=config)
        frame = table.frame
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        dataset_csv = workdir / "dataset.csv"
        frame.to_csv(dataset_csv, index=False)
        eda = profile(table, config=config)
        feature_classes = {c.name: c.inferred_kind for c in eda.columns}
    else:
        workdir = Path(workdir)
        feature_classes = (
            dict(reflection.feature_classes) if reflection is not None else {}
        )
    if automl_config.target not in frame.columns:
        raise InvalidConfig(f"target {automl_config.target!r} is not a dataset column")

    if reflection is None:
        reflection = reflection_from_config(automl_config, feature_classes)

    skeleton = adapter.emit(automl_config, params, dataset_csv, reflection, config)
    emit("automl_script", f"engine {params.engine_id}: emitted {len(skeleton.body)} byte script")
    initial = CodeArtifact(code=skeleton.body, generation=0, origin_prompt_id=f"engine:{params.engine_id}")
    return run_codegen(
        gateway,
        reflection,
        frame,
        dataset_csv,
        workdir,
        config=config,
        emit=emit,
        backend=BackendKind.ENGINE_SPECIFIC,
        skeleton=skeleton,
        initial=initial,
    )

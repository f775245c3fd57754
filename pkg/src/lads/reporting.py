"""Step event stream, plain-language summaries, final reports, inference export.

Every workflow step lands in an append-only per-session event log with a
technical detail line (for the expert panel) and a plain-language summary
(for the non-technical panel). Summaries degrade to fixed template strings
whenever the provider is unavailable; reporting never blocks the pipeline.
"""

from __future__ import annotations

import json
import re
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import MissingSections, NoModelArtifact
from .gateway import LLMGateway

if TYPE_CHECKING:
    from .codegen import PipelineArtifact


@dataclass(frozen=True)
class StepEvent:
    session_id: str
    seq: int
    step_name: str
    technical_detail: str
    plain_summary: str | None
    timestamp: float

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "step_name": self.step_name,
            "technical_detail": self.technical_detail,
            "plain_summary": self.plain_summary,
            "timestamp": self.timestamp,
        }


# Offline fallbacks for the non-technical panel, keyed by step name.
_STEP_SUMMARIES = {
    "split": "We set aside part of the data: 80% for learning, 20% for checking the results.",
    "dispatch": "We figured out what kind of help is needed.",
    "route": "We chose the best way to build the solution.",
    "reflect": "We studied the task and the data to understand the goal.",
    "plan": "We laid out the steps for building the solution.",
    "skeleton": "We prepared a safe script template for the solution.",
    "generate": "The assistant wrote the first draft of the solution code.",
    "execute": "We ran the solution and watched how it behaved.",
    "validate": "We checked whether the solution works and how good its answers are.",
    "improve": "The assistant revised the code to fix what went wrong.",
    "automl_script": "We configured an automatic model builder for this task.",
    "automl_config": "We translated the task into settings for the automatic model builder.",
    "report": "We wrote up a summary of the results.",
    "export": "We packaged the finished model so it can make new predictions.",
}


def fallback_summary(step_name: str) -> str:
    return _STEP_SUMMARIES.get(step_name, f"Completed step: {step_name}")


def summarize_step(step_name: str, technical_detail: str, gateway: LLMGateway | None = None) -> str:
    """Plain-language one-liner for a step; never raises."""
    if gateway is not None:
        try:
            text = gateway.ask(
                "step_summary",
                {"step_name": step_name, "technical_detail": technical_detail},
            ).strip()
            if text:
                return text.splitlines()[0]
        except Exception:
            pass
    return fallback_summary(step_name)


class EventLog:
    """Append-only, strictly ordered event store with NDJSON persistence."""

    def __init__(self, session_id: str, path: Path | None = None, gateway: LLMGateway | None = None):
        self.session_id = session_id
        self.path = path
        self.gateway = gateway
        self.events: list[StepEvent] = []

    def emit(self, step_name: str, technical_detail: str) -> StepEvent:
        if not technical_detail:
            raise ValueError("technical_detail must be non-empty")
        event = StepEvent(
            session_id=self.session_id,
            seq=len(self.events),
            step_name=step_name,
            technical_detail=technical_detail,
            plain_summary=summarize_step(step_name, technical_detail, self.gateway),
            timestamp=time.time(),
        )
        self.events.append(event)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(event.to_json()) + "\n")
        return event

    def since(self, seq: int) -> list[StepEvent]:
        return self.events[seq:]


# --- final report ----------------------------------------------------------------

REPORT_SECTIONS = [
    "Overview",
    "Data Preprocessing",
    "Pipeline Summary",
    "Code Highlights",
    "Metrics",
    "Takeaways",
]


@dataclass
class FinalReport:
    markdown: str
    sections_present: set[str] = field(default_factory=set)


def _section_present(markdown: str, name: str) -> bool:
    pattern = rf"^\s*(?:#{{1,6}}\s*|\d+[.)]\s*|\*\*)\**\s*{re.escape(name)}"
    return re.search(pattern, markdown, re.IGNORECASE | re.MULTILINE) is not None


def missing_report_sections(markdown: str) -> list[str]:
    return [name for name in REPORT_SECTIONS if not _section_present(markdown, name)]


def compile_report(
    gateway: LLMGateway,
    pipeline: "PipelineArtifact",
    metrics: dict[str, float],
    code: str,
    pipeline_text: str | None = None,
) -> FinalReport:
    """Render the reporter prompt and require all six outline sections,
    with one repair retry."""
    bindings = {
        "pipeline": pipeline_text or _describe_pipeline(pipeline),
        "code": code,
        "metrics": json.dumps(metrics),
    }
    prompt = gateway.render("reporter", bindings)
    markdown = gateway.complete(prompt, template_id="reporter")
    missing = missing_report_sections(markdown)
    if missing:
        repair = prompt + "\n\nThe report must contain all these section headers: " + ", ".join(
            REPORT_SECTIONS
        )
        markdown = gateway.complete(repair, template_id="reporter")
        missing = missing_report_sections(markdown)
        if missing:
            raise MissingSections(missing)
    present = {name for name in REPORT_SECTIONS if _section_present(markdown, name)}
    return FinalReport(markdown=markdown, sections_present=present)


def _describe_pipeline(pipeline: "PipelineArtifact") -> str:
    name, value = pipeline.primary_metric()
    return (
        f"pipeline generation {pipeline.artifact.generation}, "
        f"validation {name}={value}, submission {pipeline.submission_name}"
    )


def fallback_report(
    pipeline: "PipelineArtifact", metrics: dict[str, float], code: str, pipeline_text: str = ""
) -> FinalReport:
    """Deterministic local report used when the provider cannot produce one."""
    metric_lines = "\n".join(f"- `{k}` = {v}" for k, v in metrics.items()) or "- (no metrics)"
    md = f"""# Overview
- An automated pipeline was built and checked on held-out data.
- Goal: predict `{pipeline.target}` from the uploaded table.

# Data Preprocessing
- The data was split 80/20 into learning and checking portions.
- {pipeline_text or 'Preprocessing is defined in the script below.'}

# Pipeline Summary
- Generation {pipeline.artifact.generation} of the solution passed validation.
- Submission file: `{pipeline.submission_name}`.

# Code Highlights
```python
{code}
```

# Metrics
{metric_lines}

# Takeaways
- The pipeline runs end to end and its score on unseen rows is reported above.
"""
    return FinalReport(markdown=md, sections_present=set(REPORT_SECTIONS))


# --- inference export ---------------------------------------------------------------

_INFERENCE_TEMPLATE = '''"""Standalone inference script generated from a validated pipeline run.

Usage: python predict.py <input_table.csv> [output.csv]
The input must contain the training schema minus the target column.
"""

import pickle
import sys
from pathlib import Path

import numpy as np
import pandas as pd

MODEL_FILE = "model_artifact"
TARGET = {target!r}
METRIC = {metric!r}
TASK_KIND = {task_kind!r}
SEED = {seed!r}
REQUIRED_COLUMNS = {required_columns!r}

{preprocess_block}

{predict_block}


def main():
    if len(sys.argv) < 2:
        print("usage: python predict.py <input_table.csv> [output.csv]", file=sys.stderr)
        return 2
    table = pd.read_csv(sys.argv[1])
    missing = [c for c in REQUIRED_COLUMNS if c not in table.columns]
    if missing:
        print("schema error: input is missing columns: " + ", ".join(missing), file=sys.stderr)
        return 1
    with open(Path(__file__).resolve().parent / MODEL_FILE, "rb") as fh:
        bundle = pickle.load(fh)
    features = table[REQUIRED_COLUMNS].copy()
    predictions = np.asarray(predict_model(bundle["model"], preprocess(features)))
    out_path = sys.argv[2] if len(sys.argv) > 2 else "predictions.csv"
    pd.DataFrame({{TARGET: predictions}}).to_csv(out_path, index=False)
    print(f"wrote {{len(predictions)}} predictions to {{out_path}}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
'''


@dataclass
class InferencePackage:
    script: str
    model_artifact_refs: list[str]
    input_contract: str
    package_dir: Path | None = None


def export_inference(pipeline: "PipelineArtifact", out_dir: str | Path) -> InferencePackage:
    """Build a self-contained prediction package from a validated pipeline.

    The package reuses the run's preprocessing and prediction code (lifted
    from the pipeline script's marked regions) plus the persisted model.
    """
    from .codegen import extract_frozen_region, extract_user_region

    if not pipeline.validated:
        raise NoModelArtifact("pipeline is not validated; nothing to export")
    model_path = pipeline.model_artifact_path()
    if not model_path.exists():
        raise NoModelArtifact(f"model artifact missing: {model_path}")

    code = pipeline.artifact.code
    preprocess_block = extract_user_region(code, "preprocessing")
    predict_block = extract_user_region(code, "modeling") or extract_frozen_region(
        code, "engine invocation"
    )
    if preprocess_block is None or predict_block is None:
        raise NoModelArtifact("pipeline code lacks the marked regions needed for export")

    import pickle

    with model_path.open("rb") as fh:
        bundle = pickle.load(fh)
    required_columns = list(bundle.get("feature_columns", []))

    script = _INFERENCE_TEMPLATE.format(
        target=pipeline.target,
        metric=bundle.get("metric", pipeline.metric_name),
        task_kind=bundle.get("task_kind", "classification"),
        seed=bundle.get("seed", 42),
        required_columns=required_columns,
        preprocess_block=preprocess_block,
        predict_block=predict_block,
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "predict.py").write_text(script)
    shutil.copy2(model_path, out_dir / "model_artifact")
    contract = (
        f"input table must provide columns: {', '.join(required_columns)}; "
        f"predictions are written for target {pipeline.target!r}"
    )
    (out_dir / "manifest.json").write_text(
        json.dumps(
            {
                "target": pipeline.target,
                "required_columns": required_columns,
                "metric": pipeline.metric_name,
            },
            indent=2,
        )
    )
    return InferencePackage(
        script=script,
        model_artifact_refs=["model_artifact"],
        input_contract=contract,
        package_dir=out_dir,
    )

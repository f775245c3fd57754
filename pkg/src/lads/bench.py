"""Normalized performance scoring, benchmark runs and comparison tables.

A raw metric value s maps to a normalized performance score: ``1/(1+s)``
when smaller is better, ``s`` unchanged otherwise. Metric directions come
from a frozen registry. Benchmark runs execute one BUILD turn per
(bundle, tool) cell and append rows to benchmark_results.csv.
"""

from __future__ import annotations

import csv
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .config import Config, DEFAULT_CONFIG
from .errors import NegativeLossScore, UnknownMetric


class Direction(str, Enum):
    SMALLER_BETTER = "SMALLER_BETTER"
    LARGER_BETTER = "LARGER_BETTER"


# Frozen registry: which way each supported metric points.
METRIC_DIRECTIONS: dict[str, Direction] = {
    "accuracy": Direction.LARGER_BETTER,
    "auc": Direction.LARGER_BETTER,
    "r2-score": Direction.LARGER_BETTER,
    "f1": Direction.LARGER_BETTER,
    "rmse": Direction.SMALLER_BETTER,
    "rmsle": Direction.SMALLER_BETTER,
    "logloss": Direction.SMALLER_BETTER,
    "mae": Direction.SMALLER_BETTER,
}

_METRIC_ALIASES = {
    "acc": "accuracy",
    "roc_auc": "auc",
    "roc-auc": "auc",
    "roc auc": "auc",
    "auc-roc": "auc",
    "r2": "r2-score",
    "r2 score": "r2-score",
    "r2_score": "r2-score",
    "r^2": "r2-score",
    "f1-score": "f1",
    "f1_score": "f1",
    "log loss": "logloss",
    "log-loss": "logloss",
    "root mean squared error": "rmse",
    "mean absolute error": "mae",
}


def resolve_metric(name: str) -> str | None:
    """Map a metric mention to a registry key, or None if unknown."""
    key = name.strip().lower()
    if key in METRIC_DIRECTIONS:
        return key
    return _METRIC_ALIASES.get(key)


def metric_direction(name: str) -> Direction:
    resolved = resolve_metric(name)
    if resolved is None:
        raise UnknownMetric(f"metric not in registry: {name!r}")
    return METRIC_DIRECTIONS[resolved]


def normalize_score(s: float, direction: Direction) -> float:
    """Normalized performance score: 1/(1+s) if smaller is better, else s."""
    if direction == Direction.SMALLER_BETTER:
        if s < 0:
            raise NegativeLossScore(f"loss-type score must be >= 0, got {s}")
        return 1.0 / (1.0 + s)
    return s


@dataclass(frozen=True)
class NPSRecord:
    raw_score: float
    direction: Direction
    nps: float


def nps_record(raw_score: float, direction: Direction) -> NPSRecord:
    return NPSRecord(raw_score=raw_score, direction=direction, nps=normalize_score(raw_score, direction))


# --- task bundles -------------------------------------------------------------


@dataclass
class TaskBundle:
    """A competition-style task: train/test tables, sample submission, description."""

    name: str
    train_path: Path
    test_path: Path
    sample_submission_path: Path
    description: str
    metric_name: str


def load_bundle(bundle_dir: str | Path) -> TaskBundle:
    """Load a bundle directory.

    Layout: bundle.json ({"name", "metric"}), description.txt|md, and
    train.*, test.*, sample_submission.* data files.
    """
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / "bundle.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"bundle manifest missing: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    name = manifest.get("name") or bundle_dir.name
    metric = manifest["metric"]
    if resolve_metric(metric) is None:
        raise UnknownMetric(f"bundle {name}: metric not in registry: {metric!r}")

    def find(stem: str) -> Path:
        hits = sorted(p for p in bundle_dir.iterdir() if p.stem == stem and p.is_file())
        if not hits:
            raise FileNotFoundError(f"bundle {name}: no {stem}.* file in {bundle_dir}")
        return hits[0]

    description = ""
    for candidate in ("description.txt", "description.md"):
        p = bundle_dir / candidate
        if p.exists():
            description = p.read_text()
            break

    return TaskBundle(
        name=name,
        train_path=find("train"),
        test_path=find("test"),
        sample_submission_path=find("sample_submission"),
        description=description,
        metric_name=resolve_metric(metric),
    )


def discover_bundles(root: str | Path) -> list[TaskBundle]:
    root = Path(root)
    return [load_bundle(d) for d in sorted(root.iterdir()) if (d / "bundle.json").exists()]


# --- benchmark rows and CSV -----------------------------------------------------

CSV_COLUMNS = ["dataset", "tool", "metric_name", "raw_score", "nps", "timestamp"]


@dataclass(frozen=True)
class BenchmarkRow:
    dataset: str
    tool: str
    metric_name: str
    raw_score: float | None
    nps: float | None
    timestamp: str

    @property
    def failed(self) -> bool:
        return self.raw_score is None


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


_csv_lock = threading.Lock()


def append_rows(csv_path: str | Path, rows: list[BenchmarkRow]) -> None:
    """Append rows to benchmark_results.csv, writing the header once."""
    csv_path = Path(csv_path)
    with _csv_lock:
        new_file = not csv_path.exists() or csv_path.stat().st_size == 0
        with csv_path.open("a", newline="") as fh:
            writer = csv.writer(fh)
            if new_file:
                writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow(
                    [
                        row.dataset,
                        row.tool,
                        row.metric_name,
                        "" if row.raw_score is None else repr(row.raw_score),
                        "" if row.nps is None else repr(row.nps),
                        row.timestamp,
                    ]
                )


def read_rows(csv_path: str | Path) -> list[BenchmarkRow]:
    rows = []
    with Path(csv_path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                BenchmarkRow(
                    dataset=rec["dataset"],
                    tool=rec["tool"],
                    metric_name=rec["metric_name"],
                    raw_score=float(rec["raw_score"]) if rec["raw_score"] else None,
                    nps=float(rec["nps"]) if rec["nps"] else None,
                    timestamp=rec["timestamp"],
                )
            )
    return rows


# --- running -------------------------------------------------------------------

CODEGEN_TOOL = "codegen"


def run_benchmark(
    bundles: list[TaskBundle],
    tools: list[str],
    seed: int,
    gateway=None,
    config: Config | None = None,
    csv_path: str | Path = "benchmark_results.csv",
) -> list[BenchmarkRow]:
    """Run one BUILD turn per (bundle, tool) cell and append result rows.

    A tool is either "codegen" or a registered AutoML engine id; the route
    is forced accordingly so cells are deterministic. Per-cell failures
    become rows with an empty raw_score.
    """
    config = config or DEFAULT_CONFIG
    rows: list[BenchmarkRow] = []
    for bundle in bundles:
        for tool in tools:
            row = _run_cell(bundle, tool, seed, gateway, config)
            rows.append(row)
            append_rows(csv_path, [row])
    return rows


def _run_cell(bundle: TaskBundle, tool: str, seed: int, gateway, config: Config) -> BenchmarkRow:
    from .session import run_forced_build

    metric = bundle.metric_name
    try:
        pipeline = run_forced_build(
            query=bundle.description or f"solve the {bundle.name} task",
            dataset_path=bundle.train_path,
            tool=tool,
            seed=seed,
            gateway=gateway,
            config=config,
        )
        name, value = pipeline.primary_metric()
        metric = resolve_metric(name) or metric
        direction = metric_direction(metric)
        return BenchmarkRow(
            dataset=bundle.name,
            tool=tool,
            metric_name=metric,
            raw_score=value,
            nps=normalize_score(value, direction),
            timestamp=_now_iso(),
        )
    except Exception:
        return BenchmarkRow(
            dataset=bundle.name,
            tool=tool,
            metric_name=metric,
            raw_score=None,
            nps=None,
            timestamp=_now_iso(),
        )


# --- summarizing ----------------------------------------------------------------


@dataclass
class Summary:
    datasets: list[str]
    tools: list[str]
    cells: dict[tuple[str, str], float | None]
    tool_means: dict[str, tuple[float | None, int]]
    quartiles: dict[str, tuple[float, float, float]] | None = None

    def render(self) -> str:
        """Plain-text table: datasets as rows, tools as columns, Avg last."""
        headers = ["dataset"] + self.tools
        if self.quartiles is not None:
            headers += ["Q25", "Q50", "Q75"]
        body: list[list[str]] = []
        for ds in self.datasets:
            line = [ds]
            for tool in self.tools:
                value = self.cells.get((ds, tool))
                line.append("-" if value is None else f"{value:.3f}")
            if self.quartiles is not None:
                q = self.quartiles.get(ds)
                line += ["-", "-", "-"] if q is None else [f"{v:.3f}" for v in q]
            body.append(line)
        avg = ["Avg score"]
        for tool in self.tools:
            mean, n = self.tool_means[tool]
            if mean is None:
                avg.append("-")
            elif n < len(self.datasets):
                avg.append(f"{mean:.3f} (n={n})")
            else:
                avg.append(f"{mean:.3f}")
        if self.quartiles is not None:
            for i in range(3):
                vals = [q[i] for q in self.quartiles.values()]
                avg.append(f"{sum(vals) / len(vals):.3f}" if vals else "-")
        widths = [max(len(r[i]) for r in [headers] + body + [avg]) for i in range(len(headers))]
        fmt = lambda row: "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        return "\n".join([fmt(headers)] + [fmt(r) for r in body] + [fmt(avg)])


def summarize(
    rows: list[BenchmarkRow],
    quartiles: dict[str, tuple[float, float, float]] | None = None,
) -> Summary:
    """Per-tool arithmetic means of nps over datasets; failed cells excluded."""
    if not rows:
        raise ValueError("summarize requires at least one row")
    datasets = list(dict.fromkeys(r.dataset for r in rows))
    tools = list(dict.fromkeys(r.tool for r in rows))
    cells: dict[tuple[str, str], float | None] = {}
    for r in rows:
        cells[(r.dataset, r.tool)] = r.nps  # last write wins
    tool_means: dict[str, tuple[float | None, int]] = {}
    for tool in tools:
        values = [cells[(ds, tool)] for ds in datasets if cells.get((ds, tool)) is not None]
        tool_means[tool] = (sum(values) / len(values), len(values)) if values else (None, 0)
    return Summary(datasets=datasets, tools=tools, cells=cells, tool_means=tool_means, quartiles=quartiles)


def read_quartiles(path: str | Path) -> dict[str, tuple[float, float, float]]:
    """Read an external leaderboard quartile file: dataset,q25,q50,q75."""
    out: dict[str, tuple[float, float, float]] = {}
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            out[rec["dataset"]] = (float(rec["q25"]), float(rec["q50"]), float(rec["q75"]))
    return out

"""Structured task analysis (eight-section reflection) and build planning.

The reflection prompt asks the provider for a numbered eight-aspect
analysis; the parser locates sections by their numbered headings, then
cross-checks the extracted target column against the table and the
extracted metric against the metric registry. Up to two sections may be
missing (marked absent); more than two is a parse failure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .bench import resolve_metric
from .errors import SectionMissing
from .gateway import LLMGateway
from .intake import ColumnKind, EDAProfile

SECTION_TITLES = [
    (1, "overview", r"competition\s+overview|overview"),
    (2, "files", r"files"),
    (3, "problem_definition", r"problem\s+definition"),
    (4, "data_information", r"data\s+information"),
    (5, "target_variable", r"target\s+variable"),
    (6, "evaluation_metric", r"evaluation\s+metrics?"),
    (7, "submission_format", r"submission\s+format"),
    (8, "other_aspects", r"other\s+key\s+aspects|other\s+aspects"),
]

MAX_ABSENT_SECTIONS = 2


@dataclass
class TaskReflection:
    overview: str | None
    files: list[tuple[str, str]]
    problem_definition: str | None
    feature_classes: dict[str, ColumnKind]
    target_variable: str | None
    evaluation_metric: str | None
    submission_format: str | None
    other_aspects: str | None
    raw_text: str
    absent_sections: list[str] = field(default_factory=list)

    @property
    def resolved(self) -> bool:
        return self.target_variable is not None and self.evaluation_metric is not None


class RouteHint(str, Enum):
    CODEGEN = "CODEGEN"
    AUTOML = "AUTOML"
    EITHER = "EITHER"


@dataclass
class BuildPlan:
    steps: list[tuple[str, str]]
    route_hint: RouteHint


def reflect(
    gateway: LLMGateway,
    description: str,
    file_inventory: str,
    eda: EDAProfile,
) -> TaskReflection:
    """Run the analysis prompt and parse the response into a TaskReflection."""
    if not description.strip():
        raise ValueError("description must be non-empty")
    files_and_content = description.strip()
    if file_inventory.strip():
        files_and_content += "\n\n" + file_inventory.strip()
    prompt = gateway.render(
        "reflection",
        {"data_files_and_content": files_and_content, "dataset_eda": eda.text},
    )
    raw = gateway.complete(prompt, template_id="reflection")
    return parse_reflection(raw, eda)


_HEADING_LINE_RE = re.compile(r"^\s{0,8}(?:#{1,4}\s*)?(?:\*\*)?\s*(\d)[.)]?\s*(.+)$")


def _locate_sections(raw: str) -> dict[str, str]:
    """Split the response into section bodies keyed by canonical field name."""
    lines = raw.splitlines()
    marks: list[tuple[int, str, str]] = []  # (line index, field, inline remainder)
    for i, line in enumerate(lines):
        m = _HEADING_LINE_RE.match(line)
        if not m:
            continue
        num, rest = int(m.group(1)), m.group(2)
        for want_num, fieldname, pattern in SECTION_TITLES:
            if num == want_num and re.match(pattern, rest.strip("*# "), re.IGNORECASE):
                inline = re.sub(pattern, "", rest, count=1, flags=re.IGNORECASE)
                inline = inline.strip("*# ").lstrip(":").strip()
                marks.append((i, fieldname, inline))
                break
    sections: dict[str, str] = {}
    for j, (start, fieldname, inline) in enumerate(marks):
        end = marks[j + 1][0] if j + 1 < len(marks) else len(lines)
        body = "\n".join(lines[start + 1 : end]).strip()
        if inline:
            body = (inline + "\n" + body).strip()
        if fieldname not in sections:
            sections[fieldname] = body
    return sections


_FILE_LINE_RE = re.compile(
    r"([\w.\- ]+\.(?:csv|xlsx|parquet|txt|md|json))\s*[:\-]?\s*(.*)", re.IGNORECASE
)

_KIND_WORDS = {
    "id": ColumnKind.ID,
    "numerical": ColumnKind.NUMERICAL,
    "numeric": ColumnKind.NUMERICAL,
    "categorical": ColumnKind.CATEGORICAL,
    "datetime": ColumnKind.DATETIME,
}


def parse_reflection(raw: str, eda: EDAProfile) -> TaskReflection:
    sections = _locate_sections(raw)
    absent = [name for _, name, _ in SECTION_TITLES if name not in sections]
    if len(absent) > MAX_ABSENT_SECTIONS:
        raise SectionMissing(absent)

    column_names = [c.name for c in eda.columns]

    files: list[tuple[str, str]] = []
    for line in sections.get("files", "").splitlines():
        m = _FILE_LINE_RE.search(line)
        if m:
            files.append((m.group(1).strip(), m.group(2).strip()))

    feature_classes = {c.name: c.inferred_kind for c in eda.columns}
    for line in sections.get("data_information", "").splitlines():
        lowered = line.lower()
        for word, kind in _KIND_WORDS.items():
            if f"{word} type" in lowered:
                for col in _columns_mentioned(line, column_names):
                    feature_classes[col] = kind
                break

    target = None
    mentioned = _columns_mentioned(sections.get("target_variable", ""), column_names)
    if mentioned:
        target = mentioned[0]

    metric = None
    metric_text = sections.get("evaluation_metric", "")
    for candidate in _metric_mentions(metric_text):
        resolved = resolve_metric(candidate)
        if resolved:
            metric = resolved
            break

    return TaskReflection(
        overview=sections.get("overview"),
        files=files,
        problem_definition=sections.get("problem_definition"),
        feature_classes=feature_classes,
        target_variable=target,
        evaluation_metric=metric,
        submission_format=sections.get("submission_format"),
        other_aspects=sections.get("other_aspects"),
        raw_text=raw,
        absent_sections=absent,
    )


def _columns_mentioned(text: str, column_names: list[str]) -> list[str]:
    """Column names appearing in text as whole words, in order of appearance."""
    hits: list[tuple[int, str]] = []
    for name in column_names:
        m = re.search(rf"(?<![\w]){re.escape(name)}(?![\w])", text)
        if m:
            hits.append((m.start(), name))
    return [name for _, name in sorted(hits)]


def _metric_mentions(text: str):
    for m in re.finditer(r"[A-Za-z][\w^ .-]*", text):
        chunk = m.group(0).strip(" .")
        yield chunk
        for word in chunk.split():
            yield word


# --- planning -------------------------------------------------------------------

REQUIRED_STEPS = [
    ("preprocessing", ("preprocess", "cleaning", "feature")),
    ("model_fitting", ("model", "fit", "train")),
    ("validation", ("valid", "evaluat")),
    ("submission_writing", ("submi",)),
]

_STEP_LINE_RE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*]\s*)?([\w ]+?)\s*[:\-]\s+(.+)$")


def plan(gateway: LLMGateway, reflection: TaskReflection) -> BuildPlan:
    """Produce an ordered build plan from the reflection.

    The provider proposes steps; any of the four mandatory stages it left
    out are appended, and validation is kept ahead of submission writing.
    An unresolved reflection gets a leading clarification step.
    """
    raw = gateway.ask("planner", {"reflection": reflection.raw_text})
    steps: list[tuple[str, str]] = []
    seen: set[str] = set()
    for line in raw.splitlines():
        m = _STEP_LINE_RE.match(line)
        if not m:
            continue
        name = m.group(1).strip().lower().replace(" ", "_")
        if name and name not in seen:
            seen.add(name)
            steps.append((name, m.group(2).strip()))

    for required, stems in REQUIRED_STEPS:
        if not any(any(stem in name for stem in stems) for name, _ in steps):
            steps.append((required, f"default {required.replace('_', ' ')} stage"))
            seen.add(required)

    def index_of(stems):
        for i, (name, _) in enumerate(steps):
            if any(stem in name for stem in stems):
                return i
        return None

    v, s = index_of(("valid", "evaluat")), index_of(("submi",))
    if v is not None and s is not None and v > s:
        steps.insert(s, steps.pop(v))

    if not reflection.resolved:
        steps.insert(
            0,
            (
                "confirm_target",
                "ask the user to confirm the target column and evaluation metric",
            ),
        )

    return BuildPlan(steps=steps, route_hint=_route_hint(reflection))


_AUTOML_HINT_RE = re.compile(r"\bautoml\b|\blightautoml\b|\blama\b|\bfedot\b", re.IGNORECASE)
_CODEGEN_HINT_RE = re.compile(r"\bcodegen\b|custom code|hand-written|scikit|sklearn", re.IGNORECASE)


def _route_hint(reflection: TaskReflection) -> RouteHint:
    text = reflection.raw_text
    if _AUTOML_HINT_RE.search(text):
        return RouteHint.AUTOML
    if _CODEGEN_HINT_RE.search(text):
        return RouteHint.CODEGEN
    return RouteHint.EITHER

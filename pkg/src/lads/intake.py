"""Tabular dataset loading, column profiling and the evaluation split.

Supported input formats: csv (RFC-4180, delimiter sniffed among comma,
semicolon and tab), xlsx (first sheet, parsed with a minimal stdlib
reader since no xlsx library is assumed) and parquet.

Columns are classified into four kinds: ID, NUMERICAL, CATEGORICAL and
DATETIME. The train/validation split is a deterministic seeded shuffle
with ``|train| = floor(0.8 * n_rows)``.
"""

from __future__ import annotations

import csv
import io
import re
import uuid
import zipfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from xml.etree import ElementTree

import numpy as np
import pandas as pd

from .config import Config, DEFAULT_CONFIG
from .errors import ParseError, TooFewRows, UnsupportedFormat

TRAIN_FRACTION = 0.8


class TableFormat(str, Enum):
    CSV = "csv"
    XLSX = "xlsx"
    PARQUET = "parquet"


class ColumnKind(str, Enum):
    ID = "ID"
    NUMERICAL = "NUMERICAL"
    CATEGORICAL = "CATEGORICAL"
    DATETIME = "DATETIME"


@dataclass(frozen=True)
class ColumnProfile:
    name: str
    inferred_kind: ColumnKind
    distinct_count: int
    null_fraction: float
    sample_values: tuple[str, ...]


@dataclass
class TableHandle:
    """Immutable view of a loaded table. ``frame`` is not mutated after load."""

    source_path: Path
    n_rows: int
    n_cols: int
    columns: list[ColumnProfile]
    format: TableFormat
    frame: pd.DataFrame = field(repr=False)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass
class EDAProfile:
    columns: list[ColumnProfile]
    target_candidates: list[str]
    text: str


# --- loading -----------------------------------------------------------------


def load(path: str | Path, config: Config | None = None) -> TableHandle:
    """Load a tabular file by extension and profile its columns."""
    config = config or DEFAULT_CONFIG
    path = Path(path)
    if not path.exists():
        raise ParseError(f"file does not exist: {path}")
    ext = path.suffix.lower().lstrip(".")
    if ext == "csv":
        frame, fmt = _read_csv(path), TableFormat.CSV
    elif ext == "xlsx":
        frame, fmt = _read_xlsx(path), TableFormat.XLSX
    elif ext == "parquet":
        frame, fmt = _read_parquet(path), TableFormat.PARQUET
    else:
        raise UnsupportedFormat(ext)

    names = [str(c).strip() for c in frame.columns]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ParseError(f"duplicate column names after normalization: {dupes}")
    frame.columns = names

    profiles = [_profile_column(frame[name], len(frame), config) for name in names]
    return TableHandle(
        source_path=path,
        n_rows=len(frame),
        n_cols=len(names),
        columns=profiles,
        format=fmt,
        frame=frame,
    )


def _read_csv(path: Path) -> pd.DataFrame:
    sample = path.read_text(errors="replace")[:65536]
    delimiter = ","
    if sample:
        try:
            delimiter = csv.Sniffer().sniff(sample.splitlines()[0], delimiters=",;\t").delimiter
        except (csv.Error, IndexError):
            delimiter = ","
    try:
        return pd.read_csv(path, sep=delimiter)
    except pd.errors.EmptyDataError as exc:
        raise ParseError(f"empty csv file: {path}") from exc
    except pd.errors.ParserError as exc:
        raise ParseError(str(exc)) from exc


def _read_parquet(path: Path) -> pd.DataFrame:
    try:
        return pd.read_parquet(path)
    except Exception as exc:  # pyarrow raises its own hierarchy
        raise ParseError(f"cannot parse parquet file {path}: {exc}") from exc


_XLSX_NS = "{http://schemas.openxmlformats.org/spreadsheetml/2006/main}"
_CELL_REF_RE = re.compile(r"([A-Z]+)(\d+)")


def _read_xlsx(path: Path) -> pd.DataFrame:
    """Minimal xlsx reader: first worksheet, shared/inline strings, numbers."""
    try:
        with zipfile.ZipFile(path) as zf:
            shared: list[str] = []
            if "xl/sharedStrings.xml" in zf.namelist():
                root = ElementTree.fromstring(zf.read("xl/sharedStrings.xml"))
                for si in root.iter(f"{_XLSX_NS}si"):
                    shared.append("".join(t.text or "" for t in si.iter(f"{_XLSX_NS}t")))
            sheet_names = sorted(
                n for n in zf.namelist() if re.fullmatch(r"xl/worksheets/sheet\d+\.xml", n)
            )
            if not sheet_names:
                raise ParseError(f"no worksheet found in {path}")
            sheet = ElementTree.fromstring(zf.read(sheet_names[0]))
    except (zipfile.BadZipFile, ElementTree.ParseError) as exc:
        raise ParseError(f"cannot parse xlsx file {path}: {exc}") from exc

    rows: dict[int, dict[int, object]] = {}
    for cell in sheet.iter(f"{_XLSX_NS}c"):
        ref = cell.get("r", "")
        m = _CELL_REF_RE.fullmatch(ref)
        if not m:
            continue
        col_idx = _col_letters_to_index(m.group(1))
        row_idx = int(m.group(2)) - 1
        ctype = cell.get("t", "n")
        v = cell.find(f"{_XLSX_NS}v")
        value: object = None
        if ctype == "s" and v is not None and v.text is not None:
            value = shared[int(v.text)]
        elif ctype == "inlineStr":
            is_el = cell.find(f"{_XLSX_NS}is")
            if is_el is not None:
                value = "".join(t.text or "" for t in is_el.iter(f"{_XLSX_NS}t"))
        elif v is not None and v.text is not None:
            if ctype == "b":
                value = bool(int(v.text))
            else:
                try:
                    num = float(v.text)
                    value = int(num) if num.is_integer() else num
                except ValueError:
                    value = v.text
        if value is not None:
            rows.setdefault(row_idx, {})[col_idx] = value

    if not rows:
        raise ParseError(f"xlsx file has no cells: {path}")
    header_row = min(rows)
    width = max(max(r.keys()) for r in rows.values()) + 1
    header = [str(rows[header_row].get(i, f"col{i}")) for i in range(width)]
    data = []
    for r in sorted(k for k in rows if k > header_row):
        data.append([rows[r].get(i) for i in range(width)])
    return pd.DataFrame(data, columns=header)


def _col_letters_to_index(letters: str) -> int:
    idx = 0
    for ch in letters:
        idx = idx * 26 + (ord(ch) - ord("A") + 1)
    return idx - 1


# --- profiling ---------------------------------------------------------------

_ID_NAME_RE = re.compile(r"^(id|.*_id|.*Id)$", re.IGNORECASE)
_UUID_RE = re.compile(r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$")


def _profile_column(series: pd.Series, n_rows: int, config: Config) -> ColumnProfile:
    non_null = series.dropna()
    distinct = int(non_null.nunique())
    null_fraction = float(series.isna().sum() / n_rows) if n_rows else 0.0
    samples = tuple(str(v) for v in non_null.unique()[:3])
    kind = _classify(series, non_null, distinct, n_rows, config)
    return ColumnProfile(
        name=str(series.name),
        inferred_kind=kind,
        distinct_count=distinct,
        null_fraction=null_fraction,
        sample_values=samples,
    )


def _classify(
    series: pd.Series, non_null: pd.Series, distinct: int, n_rows: int, config: Config
) -> ColumnKind:
    if n_rows > 0 and distinct == n_rows and _looks_like_id(series, non_null):
        return ColumnKind.ID
    if pd.api.types.is_numeric_dtype(series) and not pd.api.types.is_bool_dtype(series):
        return ColumnKind.NUMERICAL
    if len(non_null) == 0:
        return ColumnKind.CATEGORICAL
    as_str = non_null.astype(str)
    parsed = pd.to_datetime(as_str, errors="coerce", format="mixed")
    if parsed.notna().mean() >= config.datetime_parse_threshold and not _mostly_numbers(as_str):
        return ColumnKind.DATETIME
    if _mostly_numbers(as_str):
        return ColumnKind.NUMERICAL
    return ColumnKind.CATEGORICAL


def _mostly_numbers(values: pd.Series) -> bool:
    return pd.to_numeric(values, errors="coerce").notna().all()


def _looks_like_id(series: pd.Series, non_null: pd.Series) -> bool:
    name = str(series.name)
    if _ID_NAME_RE.match(name):
        return True
    if pd.api.types.is_integer_dtype(non_null):
        vals = np.sort(non_null.to_numpy())
        if len(vals) and np.array_equal(vals, np.arange(vals[0], vals[0] + len(vals))):
            return True
    if non_null.dtype == object:
        sample = non_null.astype(str).head(50)
        if len(sample) and all(_UUID_RE.match(v) for v in sample):
            return True
    return False


_TARGET_NAME_HINTS = ("target", "label", "class", "outcome", "y")


def profile(table: TableHandle, config: Config | None = None) -> EDAProfile:
    """Build the prompt-facing EDA profile. Pure: same table, same profile."""
    config = config or DEFAULT_CONFIG
    cols = table.columns
    hinted = [c.name for c in cols if c.name.lower() in _TARGET_NAME_HINTS]
    fallback = [c.name for c in cols if c.inferred_kind != ColumnKind.ID and c.name not in hinted]
    candidates = hinted + fallback

    lines = [f"shape: {table.n_rows} rows x {table.n_cols} columns"]
    for c in cols:
        sample = ", ".join(c.sample_values)
        lines.append(
            f"- {c.name} ({c.inferred_kind.value}): distinct={c.distinct_count}, "
            f"nulls={c.null_fraction:.3f}, sample=[{sample}]"
        )
    lines.append("target candidates: " + (", ".join(candidates) if candidates else "(none)"))
    text = "\n".join(lines)
    if len(text) > config.eda_text_budget:
        text = text[: config.eda_text_budget - 14] + "\n… [truncated]"
    return EDAProfile(columns=list(cols), target_candidates=candidates, text=text)


# --- prompt rendering ----------------------------------------------------------


def head_text(table: TableHandle, n: int, config: Config | None = None) -> str:
    """Deterministic aligned plain-text rendering of the first min(n, n_rows) rows.

    Cell values longer than 40 characters are truncated with a trailing ellipsis.
    The format is frozen: prompts depend on it.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    config = config or DEFAULT_CONFIG
    limit = config.head_cell_limit
    take = min(n, table.n_rows)
    names = table.column_names
    rendered_rows = []
    for _, row in table.frame.head(take).iterrows():
        rendered_rows.append([_render_cell(row[name], limit) for name in names])
    widths = [len(name) for name in names]
    for row in rendered_rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    out = ["  ".join(name.ljust(widths[i]) for i, name in enumerate(names)).rstrip()]
    for row in rendered_rows:
        out.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(out)


def _render_cell(value, limit: int) -> str:
    if value is None:
        return ""
    try:
        if pd.isna(value):
            return ""
    except (TypeError, ValueError):
        pass
    text = str(value)
    if len(text) > limit:
        return text[:limit] + "…"
    return text


# --- splitting -----------------------------------------------------------------


def split_indices(n_rows: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation split: floor(0.8*n) train indices, rest validation."""
    if n_rows < 2:
        raise TooFewRows(f"need at least 2 rows to split, got {n_rows}")
    perm = np.random.RandomState(seed % (2**32)).permutation(n_rows)
    n_train = int(np.floor(TRAIN_FRACTION * n_rows))
    return perm[:n_train], perm[n_train:]


def split_train_val(table: TableHandle, seed: int) -> tuple[pd.DataFrame, pd.DataFrame]:
    train_idx, val_idx = split_indices(table.n_rows, seed)
    return table.frame.iloc[train_idx], table.frame.iloc[val_idx]

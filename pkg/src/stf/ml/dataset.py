"""CSV datasets with typed columns."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

NUMERIC, CATEGORICAL, TIMESTAMP = "numeric", "categorical", "timestamp"
COLUMN_KINDS = (NUMERIC, CATEGORICAL, TIMESTAMP)

# DSL scalar type -> dataset column kind
KIND_OF_TYPE = {
    "Int": NUMERIC, "Float": NUMERIC, "Bool": CATEGORICAL,
    "String": CATEGORICAL, "Timestamp": TIMESTAMP,
}

_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_RFC3339_RE = re.compile(
    r"^\d{4}-\d{2}-\d{2}[Tt]\d{2}:\d{2}:\d{2}(\.\d+)?([Zz]|[+-]\d{2}:\d{2})$")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass
class Dataset:
    """Rectangular table; ``None`` marks a missing cell."""

    columns: list[Column]
    rows: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DatasetError(f"duplicate column names in {names}")
        width = len(self.columns)
        for i, r in enumerate(self.rows):
            if len(r) != width:
                raise DatasetError(f"row {i + 1}: expected {width} cells, got {len(r)}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DatasetError(f"dataset has no column '{name}'") from None

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]

    def values(self, name: str) -> list:
        i = self.index(name)
        return [r[i] for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def extend(self, rows) -> "Dataset":
        return Dataset(list(self.columns), list(self.rows) + [tuple(r) for r in rows])

    def take(self, indices) -> "Dataset":
        return Dataset(list(self.columns), [self.rows[i] for i in indices])


def is_number(text: str) -> bool:
    return bool(_NUMBER_RE.match(text))


def is_timestamp(text: str) -> bool:
    return bool(_RFC3339_RE.match(text))


def parse_timestamp(text: str) -> int:
    """RFC 3339 text (or integer epoch seconds) to integer epoch seconds."""
    if is_number(text):
        return int(float(text))
    if not is_timestamp(text):
        raise ValueError(f"not an RFC 3339 timestamp: {text!r}")
    t = text.replace("z", "Z").replace("t", "T")
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    return int(datetime.fromisoformat(t).timestamp() // 1)


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _normalize_kind(kind: str) -> str:
    k = KIND_OF_TYPE.get(kind, kind.lower())
    if k not in COLUMN_KINDS:
        raise DatasetError(f"unknown column type '{kind}'")
    return k


def read_schema_file(path: Union[str, Path]) -> dict[str, str]:
    """Sidecar schema: one ``name:type`` per line, ``#`` comments allowed."""
    schema = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise DatasetError(f"{path}:{lineno}: expected 'name:type'")
        name, kind = (x.strip() for x in line.split(":", 1))
        schema[name] = _normalize_kind(kind)
    return schema


def _infer_kind(cells: list[str]) -> str:
    present = [c for c in cells if c != ""]
    if present and all(is_number(c) for c in present):
        return NUMERIC
    if present and all(is_timestamp(c) for c in present):
        return TIMESTAMP
    if not present:
        return NUMERIC
    return CATEGORICAL


def _convert(cell: str, kind: str, row: int, col: str):
    if cell == "":
        return None
    try:
        if kind == NUMERIC:
            if not is_number(cell):
                raise ValueError(cell)
            return float(cell)
        if kind == TIMESTAMP:
            return parse_timestamp(cell)
    except ValueError:
        raise DatasetError(
            f"row {row}, column '{col}': cannot parse {cell!r} as {kind}") from None
    return cell


def parse_csv(text: str, schema: Optional[dict[str, str]] = None) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("dataset file is empty (a header row is required)") from None
    header = [h.strip() for h in header]
    raw = []
    for i, r in enumerate(reader, 1):
        if not r:
            continue
        if len(r) != len(header):
            raise DatasetError(f"row {i}: expected {len(header)} cells, got {len(r)} (ragged row)")
        raw.append([c.strip() for c in r])
    schema = {k: _normalize_kind(v) for k, v in (schema or {}).items()}
    columns = []
    for j, name in enumerate(header):
        kind = schema.get(name) or _infer_kind([r[j] for r in raw])
        columns.append(Column(name, kind))
    rows = [tuple(_convert(c, columns[j].kind, i, columns[j].name) for j, c in enumerate(r))
            for i, r in enumerate(raw, 1)]
    return Dataset(columns, rows)


def load_dataset(path: Union[str, Path], schema: Optional[dict[str, str]] = None) -> Dataset:
    """Read a CSV dataset.

    Column types come from ``schema`` when given, then from a ``<path>.schema``
    sidecar file if one exists, and are inferred from the cells otherwise.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    merged: dict[str, str] = {}
    sidecar = path.with_name(path.name + ".schema")
    if sidecar.is_file():
        merged.update(read_schema_file(sidecar))
    if schema:
        merged.update(schema)
    return parse_csv(path.read_text(encoding="utf-8"), merged)


def format_cell(value, kind: str = NUMERIC) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(int(value)) if value.is_integer() and abs(value) < 1e15 else repr(value)
    return str(value)


def write_csv(path: Union[str, Path], header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_cell(v) for v in r])


def append_csv_row(path: Union[str, Path], row: list[str]) -> None:
    with open(path, "a", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(row)

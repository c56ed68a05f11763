"""Dataset model, schema declaration, CSV ingestion and stratified splitting.

Numeric columns (continuous, mixed, regression targets) are stored as float64
arrays with ``nan`` marking a missing cell. Categorical columns (including
classification targets) are object arrays of ``str`` with ``None`` for missing.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    ClassTooSmall,
    DuplicateHeader,
    InputError,
    MissingColumn,
    SchemaError,
    UnparsableCell,
)


class Kind(str, enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"
    MIXED = "mixed"
    TARGET = "target"


class Task(str, enum.Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: Kind
    target_task: Task | None = None
    categorical_values_in_mixed: tuple[float, ...] = ()
    long_tail: bool = False
    general_transform: bool = False
    missing_token: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.target_task is not None:
            object.__setattr__(self, "target_task", Task(self.target_task))
        object.__setattr__(
            self,
            "categorical_values_in_mixed",
            tuple(float(v) for v in self.categorical_values_in_mixed),
        )
        if self.kind is Kind.TARGET and self.target_task is None:
            raise SchemaError(f"target column {self.name!r} needs a target_task")
        if self.kind is not Kind.TARGET and self.target_task is not None:
            raise SchemaError(f"target_task set on non-target column {self.name!r}")
        if (self.kind is Kind.MIXED) != bool(self.categorical_values_in_mixed):
            raise SchemaError(
                f"column {self.name!r}: categorical_values_in_mixed must be non-empty "
                "exactly when kind is mixed"
            )
        if self.long_tail and self.general_transform:
            raise SchemaError(f"column {self.name!r}: long_tail and general_transform are exclusive")
        if self.long_tail and not self.is_numeric:
            raise SchemaError(f"column {self.name!r}: long_tail requires a numeric column")

    @property
    def is_numeric(self) -> bool:
        if self.kind is Kind.TARGET:
            return self.target_task is Task.REGRESSION
        return self.kind in (Kind.CONTINUOUS, Kind.MIXED)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind.value}
        if self.target_task is not None:
            out["target_task"] = self.target_task.value
        if self.categorical_values_in_mixed:
            out["categorical_values_in_mixed"] = list(self.categorical_values_in_mixed)
        if self.long_tail:
            out["long_tail"] = True
        if self.general_transform:
            out["general_transform"] = True
        if self.missing_token is not None:
            out["missing_token"] = self.missing_token
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ColumnSpec":
        try:
            return cls(
                name=str(d["name"]),
                kind=Kind(str(d["kind"]).lower()),
                target_task=Task(str(d["target_task"]).lower()) if d.get("target_task") else None,
                categorical_values_in_mixed=tuple(d.get("categorical_values_in_mixed", ())),
                long_tail=bool(d.get("long_tail", False)),
                general_transform=bool(d.get("general_transform", False)),
                missing_token=d.get("missing_token"),
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad column declaration {dict(d)!r}: {exc}") from exc


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        if sum(c.kind is Kind.TARGET for c in self.columns) > 1:
            raise SchemaError("at most one target column is allowed")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def target(self) -> ColumnSpec | None:
        for c in self.columns:
            if c.kind is Kind.TARGET:
                return c
        return None

    def __getitem__(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"columns": [c.to_dict() for c in self.columns]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TableSchema":
        cols = d["columns"] if isinstance(d, Mapping) else d
        return cls(tuple(ColumnSpec.from_dict(c) for c in cols))

    @classmethod
    def from_json(cls, path: str | Path) -> "TableSchema":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read schema {path}: {exc}") from exc


def _empty_column(spec: ColumnSpec, n: int = 0) -> np.ndarray:
    if spec.is_numeric:
        return np.full(n, np.nan)
    return np.full(n, None, dtype=object)


def _coerce_column(spec: ColumnSpec, values) -> np.ndarray:
    if spec.is_numeric:
        return np.asarray(values, dtype=np.float64)
    arr = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        arr[i] = None if v is None else str(v)
    return arr


@dataclass(frozen=True)
class Dataset:
    schema: TableSchema
    columns: Mapping[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        cols = {}
        n = None
        for spec in self.schema.columns:
            if spec.name not in self.columns:
                raise MissingColumn(spec.name)
            arr = _coerce_column(spec, self.columns[spec.name])
            if n is None:
                n = len(arr)
            elif len(arr) != n:
                raise InputError("columns have different lengths")
            arr.setflags(write=False)
            cols[spec.name] = arr
        object.__setattr__(self, "columns", cols)

    @classmethod
    def empty(cls, schema: TableSchema) -> "Dataset":
        return cls(schema, {c.name: _empty_column(c) for c in schema.columns})

    @classmethod
    def from_rows(cls, schema: TableSchema, rows: Sequence[Sequence[Any]]) -> "Dataset":
        cols: dict[str, list] = {c.name: [] for c in schema.columns}
        for row in rows:
            if len(row) != len(schema.columns):
                raise InputError("row width does not match schema")
            for spec, cell in zip(schema.columns, row):
                if spec.is_numeric:
                    cols[spec.name].append(np.nan if cell is None else float(cell))
                else:
                    cols[spec.name].append(cell)
        if not rows:
            return cls.empty(schema)
        return cls(schema, cols)

    @property
    def row_count(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def __len__(self) -> int:
        return self.row_count

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def rows(self) -> Iterator[tuple]:
        for i in range(self.row_count):
            yield self.row(i)

    def row(self, i: int) -> tuple:
        out = []
        for spec in self.schema.columns:
            v = self.columns[spec.name][i]
            if spec.is_numeric:
                v = None if math.isnan(v) else float(v)
            out.append(v)
        return tuple(out)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, {k: v[idx] for k, v in self.columns.items()})

    def with_columns(self, **replacements: np.ndarray) -> "Dataset":
        cols = dict(self.columns)
        cols.update(replacements)
        return Dataset(self.schema, cols)

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.row_count != other.row_count:
            return False
        for spec in self.schema.columns:
            a, b = self.columns[spec.name], other.columns[spec.name]
            if spec.is_numeric:
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
        return True


def _parse_cell(spec: ColumnSpec, text: str, row: int):
    if text == "" or (spec.missing_token is not None and text == spec.missing_token):
        return None
    if not spec.is_numeric:
        return text
    try:
        value = float(text)
    except ValueError:
        raise UnparsableCell(row, spec.name, text) from None
    if not math.isfinite(value):
        raise UnparsableCell(row, spec.name, text)
    return value


def load_csv(path: str | Path, schema: TableSchema) -> Dataset:
    """Read a comma-separated file with a header row, parsing cells per the schema."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DuplicateHeader(f"duplicate header(s): {dupes}")
        for name in schema.names:
            if name not in header:
                raise MissingColumn(name)
        extra = set(header) - set(schema.names)
        if extra:
            raise InputError(f"columns not in schema: {sorted(extra)}")
        position = [header.index(name) for name in schema.names]
        cols: dict[str, list] = {name: [] for name in schema.names}
        for r, record in enumerate(reader):
            if not record:
                continue
            if len(record) != len(header):
                raise InputError(f"row {r} has {len(record)} fields, expected {len(header)}")
            for spec, pos in zip(schema.columns, position):
                cell = _parse_cell(spec, record[pos], r)
                if spec.is_numeric and cell is None:
                    cell = np.nan
                cols[spec.name].append(cell)
    return Dataset(schema, cols)


def _format_cell(spec: ColumnSpec, value) -> str:
    if spec.is_numeric:
        return "" if math.isnan(value) else repr(float(value))
    return "" if value is None else str(value)


def write_csv(data: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.schema.names)
        cols = [data.columns[c.name] for c in data.schema.columns]
        for i in range(data.row_count):
            writer.writerow(_format_cell(s, col[i]) for s, col in zip(data.schema.columns, cols))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split into (train, test), stratified on a classification target.

    Regression targets (or a schema without target) are split uniformly at random.
    """
    if not 0.0 < test_fraction < 1.0:
        raise InputError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    target = data.schema.target
    n = data.row_count
    test_idx: list[np.ndarray] = []
    if target is not None and target.target_task is Task.CLASSIFICATION:
        labels = np.array(["\0missing" if v is None else v for v in data[target.name]], dtype=object)
        classes = sorted(set(labels))
        for cls in classes:
            members = np.flatnonzero(labels == cls)
            if len(members) < 2:
                raise ClassTooSmall(f"class {cls!r} has {len(members)} row(s); need at least 2")
            k = min(max(_round_half_up(len(members) * test_fraction), 1), len(members) - 1)
            test_idx.append(rng.permutation(members)[:k])
    else:
        k = _round_half_up(n * test_fraction)
        test_idx.append(rng.permutation(n)[:k])
    test = np.sort(np.concatenate(test_idx)) if test_idx else np.array([], dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    return data.take(np.flatnonzero(mask)), data.take(test)

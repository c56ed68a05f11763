"""Per-column encoders and the concatenated row representation.

A row is encoded as the concatenation of ``alpha + beta`` blocks for the
continuous and mixed columns (schema order), followed by the one-hot ``gamma``
blocks of the categorical columns. Columns flagged for the general transform
contribute a single scalar in [-1, 1] and no one-hot part.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .errors import SchemaError, UnknownCategory
from .gmm import GaussianMixture1D, fit_gmm
from .schema import ColumnSpec, Dataset, Kind, TableSchema, Task
from .seeding import derive_seed
from .transforms import (
    GeneralTransformParams,
    LongTailParams,
    gt_forward_array,
    gt_inverse_array,
    long_tail_forward_array,
    long_tail_inverse_array,
)

MISSING = None


def _lt_to_dict(lt):
    return None if lt is None else {"lower_bound": lt.lower_bound, "epsilon": lt.epsilon}


def _lt_from_dict(d):
    return None if d is None else LongTailParams(d["lower_bound"], d["epsilon"])


def encode_value_msn(tau: float, gm: GaussianMixture1D) -> tuple[float, np.ndarray]:
    """Normalize ``tau`` by its most probable mode: alpha = (tau - mu) / (4 sigma)."""
    mode = int(gm.argmax_mode([tau])[0])
    alpha = (tau - gm.means[mode]) / (4.0 * gm.stds[mode])
    beta = np.zeros(gm.k)
    beta[mode] = 1.0
    return float(np.clip(alpha, -1.0, 1.0)), beta


def _msn_encode(values: np.ndarray, gm: GaussianMixture1D) -> tuple[np.ndarray, np.ndarray]:
    modes = gm.argmax_mode(values)
    alpha = np.clip((values - gm.means[modes]) / (4.0 * gm.stds[modes]), -1.0, 1.0)
    return alpha, modes


@dataclass(frozen=True)
class MSNEncoder:
    """Mode-specific normalization of a continuous column."""

    name: str
    gmm: GaussianMixture1D
    long_tail: LongTailParams | None = None
    variant = "msn"
    numeric = True

    @property
    def n_options(self) -> int:
        return self.gmm.k

    @property
    def width(self) -> int:
        return 1 + self.gmm.k

    @property
    def has_alpha(self) -> bool:
        return True

    def encode(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        if np.isnan(v).any():
            raise UnknownCategory(f"missing value in column {self.name!r} without a missing class")
        if self.long_tail is not None:
            v = long_tail_forward_array(v, self.long_tail)
        alpha, modes = _msn_encode(v, self.gmm)
        out = np.zeros((len(v), self.width))
        out[:, 0] = alpha
        out[np.arange(len(v)), 1 + modes] = 1.0
        return out

    def decode(self, block: np.ndarray) -> np.ndarray:
        alpha = np.clip(block[:, 0], -1.0, 1.0)
        modes = np.argmax(block[:, 1:], axis=1)
        v = alpha * 4.0 * self.gmm.stds[modes] + self.gmm.means[modes]
        if self.long_tail is not None:
            v = long_tail_inverse_array(v, self.long_tail)
        return v

    def to_dict(self) -> dict:
        return {"variant": self.variant, "name": self.name, "gmm": self.gmm.to_dict(),
                "long_tail": _lt_to_dict(self.long_tail)}


@dataclass(frozen=True)
class MixedEncoder:
    """Continuous modes plus declared exact values (and optionally a missing class).

    Slot order in the one-hot part: the ``k`` continuous modes, then the
    declared categorical values in declared order, then the missing slot.
    """

    name: str
    gmm: GaussianMixture1D | None
    categorical_values: tuple[float, ...]
    has_missing: bool
    long_tail: LongTailParams | None = None
    variant = "mixed"
    numeric = True

    @property
    def k(self) -> int:
        return 0 if self.gmm is None else self.gmm.k

    @property
    def n_options(self) -> int:
        return self.k + len(self.categorical_values) + int(self.has_missing)

    @property
    def width(self) -> int:
        return 1 + self.n_options

    @property
    def has_alpha(self) -> bool:
        return True

    def _slots(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (slot index or -1 for continuous, continuous mask)."""
        slot = np.full(len(v), -1, dtype=np.int64)
        missing = np.isnan(v)
        if missing.any():
            if not self.has_missing:
                raise UnknownCategory(f"missing value in column {self.name!r} without a missing class")
            slot[missing] = self.k + len(self.categorical_values)
        for j, c in enumerate(self.categorical_values):
            slot[(v == c) & (slot < 0)] = self.k + j
        return slot, slot < 0

    def encode(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        slot, cont = self._slots(v)
        out = np.zeros((len(v), self.width))
        if cont.any():
            if self.gmm is None:
                raise UnknownCategory(f"column {self.name!r} has no continuous part to encode {v[cont][0]}")
            x = v[cont]
            if self.long_tail is not None:
                x = long_tail_forward_array(x, self.long_tail)
            alpha, modes = _msn_encode(x, self.gmm)
            out[cont, 0] = alpha
            slot[cont] = modes
        out[np.arange(len(v)), 1 + slot] = 1.0
        return out

    def decode(self, block: np.ndarray) -> np.ndarray:
        slot = np.argmax(block[:, 1:], axis=1)
        out = np.empty(len(block))
        cont = slot < self.k
        if cont.any():
            m = slot[cont]
            alpha = np.clip(block[cont, 0], -1.0, 1.0)
            x = alpha * 4.0 * self.gmm.stds[m] + self.gmm.means[m]
            if self.long_tail is not None:
                x = long_tail_inverse_array(x, self.long_tail)
            out[cont] = x
        lits = np.array(list(self.categorical_values) + [np.nan])
        out[~cont] = lits[np.minimum(slot[~cont] - self.k, len(lits) - 1)]
        return out

    def to_dict(self) -> dict:
        return {"variant": self.variant, "name": self.name,
                "gmm": None if self.gmm is None else self.gmm.to_dict(),
                "categorical_values": list(self.categorical_values),
                "has_missing": self.has_missing, "long_tail": _lt_to_dict(self.long_tail)}


@dataclass(frozen=True)
class OneHotEncoder:
    """One-hot over an ordered category dictionary; ``None`` is the missing class."""

    name: str
    categories: tuple[Any, ...]
    variant = "onehot"
    numeric = False

    @property
    def n_options(self) -> int:
        return len(self.categories)

    @property
    def width(self) -> int:
        return len(self.categories)

    @property
    def has_alpha(self) -> bool:
        return False

    def index(self, values) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.categories)}
        try:
            return np.array([lookup[v] for v in values], dtype=np.int64)
        except KeyError as exc:
            raise UnknownCategory(f"column {self.name!r}: unknown category {exc.args[0]!r}") from None

    def encode(self, values) -> np.ndarray:
        idx = self.index(values)
        out = np.zeros((len(idx), self.width))
        out[np.arange(len(idx)), idx] = 1.0
        return out

    def decode(self, block: np.ndarray) -> np.ndarray:
        idx = np.argmax(block, axis=1)
        out = np.empty(len(idx), dtype=object)
        for i, k in enumerate(idx):
            out[i] = self.categories[k]
        return out

    def to_dict(self) -> dict:
        return {"variant": self.variant, "name": self.name, "categories": list(self.categories)}


@dataclass(frozen=True)
class GTEncoder:
    """Single scalar in [-1, 1] via the general (min-max) transform."""

    name: str
    params: GeneralTransformParams
    long_tail: LongTailParams | None = None
    variant = "gt"

    @property
    def numeric(self) -> bool:
        return not self.params.is_categorical

    @property
    def n_options(self) -> int:
        return 0

    @property
    def width(self) -> int:
        return 1

    @property
    def has_alpha(self) -> bool:
        return True

    def encode(self, values) -> np.ndarray:
        if self.numeric:
            values = np.asarray(values, dtype=np.float64)
            if self.long_tail is not None:
                values = long_tail_forward_array(values, self.long_tail)
        return gt_forward_array(values, self.params).reshape(-1, 1)

    def decode(self, block: np.ndarray) -> np.ndarray:
        out = gt_inverse_array(block[:, 0], self.params)
        if self.numeric and self.long_tail is not None:
            out = long_tail_inverse_array(out, self.long_tail)
        return out

    def to_dict(self) -> dict:
        p = self.params
        return {"variant": self.variant, "name": self.name, "min_x": p.min_x, "max_x": p.max_x,
                "is_categorical": p.is_categorical,
                "categories": None if p.categories is None else list(p.categories),
                "long_tail": _lt_to_dict(self.long_tail)}


ColumnEncoder = Union[MSNEncoder, MixedEncoder, OneHotEncoder, GTEncoder]


def encoder_from_dict(d: dict) -> ColumnEncoder:
    v = d["variant"]
    if v == "msn":
        return MSNEncoder(d["name"], GaussianMixture1D.from_dict(d["gmm"]), _lt_from_dict(d["long_tail"]))
    if v == "mixed":
        gm = None if d["gmm"] is None else GaussianMixture1D.from_dict(d["gmm"])
        return MixedEncoder(d["name"], gm, tuple(d["categorical_values"]), d["has_missing"],
                            _lt_from_dict(d["long_tail"]))
    if v == "onehot":
        return OneHotEncoder(d["name"], tuple(d["categories"]))
    if v == "gt":
        cats = d["categories"]
        params = GeneralTransformParams(d["min_x"], d["max_x"], d["is_categorical"],
                                        None if cats is None else tuple(cats))
        return GTEncoder(d["name"], params, _lt_from_dict(d["long_tail"]))
    raise SchemaError(f"unknown encoder variant {v!r}")


@dataclass(frozen=True)
class Block:
    name: str
    offset: int
    width: int
    variant: str
    has_alpha: bool
    n_options: int

    @property
    def option_offset(self) -> int:
        """Absolute column of the first one-hot slot."""
        return self.offset + (1 if self.variant in ("msn", "mixed") else 0)


@dataclass(frozen=True)
class EncodedMatrix:
    rows: np.ndarray
    layout: tuple[Block, ...]

    @property
    def total_width(self) -> int:
        return sum(b.width for b in self.layout)

    def __len__(self) -> int:
        return len(self.rows)


def _fit_column(spec: ColumnSpec, values: np.ndarray, seed: int, k_max: int,
                lt_epsilon: float) -> ColumnEncoder:
    regression_target = spec.kind is Kind.TARGET and spec.target_task is Task.REGRESSION
    if spec.is_numeric:
        v = np.asarray(values, dtype=np.float64)
        missing = np.isnan(v)
        literal = np.zeros(len(v), dtype=bool)
        for c in spec.categorical_values_in_mixed:
            literal |= v == c
        cont = v[~missing & ~literal]
        lt = LongTailParams.fit(cont, lt_epsilon) if spec.long_tail and cont.size else None
        if lt is not None:
            cont = long_tail_forward_array(cont, lt)
        if regression_target:
            if missing.any():
                raise SchemaError(f"regression target {spec.name!r} has missing values")
            # the auxiliary regressor needs a scalar target, so targets always use the general transform
            return GTEncoder(spec.name, GeneralTransformParams.fit_numeric(cont), lt)
        if spec.kind is Kind.MIXED or missing.any():
            gm = fit_gmm(cont, k_max, seed) if cont.size else None
            return MixedEncoder(spec.name, gm, spec.categorical_values_in_mixed, bool(missing.any()), lt)
        if spec.general_transform:
            return GTEncoder(spec.name, GeneralTransformParams.fit_numeric(cont), lt)
        return MSNEncoder(spec.name, fit_gmm(cont, k_max, seed), lt)
    if spec.general_transform:
        return GTEncoder(spec.name, GeneralTransformParams.fit_categorical(list(values)))
    present = sorted({v for v in values if v is not None})
    if any(v is None for v in values):
        present.append(None)
    return OneHotEncoder(spec.name, tuple(present))


class TabularEncoder:
    """The fitted encoders of a table plus their block layout."""

    def __init__(self, schema: TableSchema, encoders: dict[str, ColumnEncoder]):
        self.schema = schema
        self.encoders = dict(encoders)
        numeric = [c.name for c in schema.columns if self.encoders[c.name].numeric]
        categorical = [c.name for c in schema.columns if not self.encoders[c.name].numeric]
        blocks, offset = [], 0
        for name in numeric + categorical:
            enc = self.encoders[name]
            blocks.append(Block(name, offset, enc.width, enc.variant, enc.has_alpha, enc.n_options))
            offset += enc.width
        self.layout: tuple[Block, ...] = tuple(blocks)
        self.total_width = offset

    def block(self, name: str) -> Block:
        for b in self.layout:
            if b.name == name:
                return b
        raise KeyError(name)

    def encode(self, data: Dataset) -> EncodedMatrix:
        out = np.zeros((data.row_count, self.total_width))
        for b in self.layout:
            if data.row_count:
                out[:, b.offset:b.offset + b.width] = self.encoders[b.name].encode(data[b.name])
        return EncodedMatrix(out, self.layout)

    def decode(self, rows: np.ndarray) -> Dataset:
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, self.total_width)
        cols = {}
        for b in self.layout:
            cols[b.name] = self.encoders[b.name].decode(rows[:, b.offset:b.offset + b.width])
        return Dataset(self.schema, cols)

    def option_indices(self, matrix: np.ndarray) -> dict[str, np.ndarray]:
        """Active one-hot slot per row for every block that has options."""
        out = {}
        for b in self.layout:
            if b.n_options:
                s = b.option_offset
                out[b.name] = np.argmax(matrix[:, s:s + b.n_options], axis=1)
        return out

    def to_dict(self) -> dict:
        return {"encoders": [self.encoders[c.name].to_dict() for c in self.schema.columns]}

    @classmethod
    def from_dict(cls, schema: TableSchema, d: dict) -> "TabularEncoder":
        encs = [encoder_from_dict(e) for e in d["encoders"]]
        return cls(schema, {e.name: e for e in encs})


def fit_encoders(data: Dataset, seed: int = 0, *, k_max: int = 10,
                 long_tail_epsilon: float = 1.0) -> TabularEncoder:
    """Fit one encoder per column; long-tail columns are log-compressed before the mixture fit."""
    encoders = {}
    for spec in data.schema.columns:
        encoders[spec.name] = _fit_column(spec, data[spec.name], derive_seed(seed, "gmm:" + spec.name),
                                          k_max, long_tail_epsilon)
    return TabularEncoder(data.schema, encoders)


def encode_dataset(data: Dataset, encoder: TabularEncoder) -> EncodedMatrix:
    m = encoder.encode(data)
    for b in m.layout:
        if b.n_options:
            s = b.option_offset
            seg = m.rows[:, s:s + b.n_options]
            assert np.all(seg.sum(axis=1) == 1.0), f"invalid one-hot block in {b.name}"
        if b.has_alpha:
            assert np.all(np.abs(m.rows[:, b.offset]) <= 1.0)
    return m


def decode_row(encoded, encoder: TabularEncoder) -> tuple:
    return encoder.decode(np.asarray(encoded, dtype=np.float64).reshape(1, -1)).row(0)


def encode_value_mixed(cell, enc: MixedEncoder) -> tuple[float, np.ndarray]:
    v = np.nan if cell is None else float(cell)
    row = enc.encode([v])[0]
    return float(row[0]), row[1:]

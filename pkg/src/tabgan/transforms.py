"""Long-tail log compression and min-max "general transform", with inverses."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable

import numpy as np

from .errors import DomainError, SchemaError, UnknownCategory


@dataclass(frozen=True)
class LongTailParams:
    lower_bound: float
    epsilon: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise SchemaError("long-tail epsilon must be positive")

    @classmethod
    def fit(cls, values: Iterable[float], epsilon: float = 1.0) -> "LongTailParams":
        arr = np.asarray(list(values), dtype=np.float64)
        arr = arr[~np.isnan(arr)]
        if arr.size == 0:
            raise DomainError("cannot fit long-tail transform on an empty column")
        return cls(float(arr.min()), epsilon)


def long_tail_forward(tau: float, p: LongTailParams) -> float:
    l = p.lower_bound
    if l > 0:
        if not tau > 0:
            raise DomainError(f"long-tail input {tau} must be positive when lower bound {l} > 0")
        return math.log(tau)
    if tau < l:
        raise DomainError(f"long-tail input {tau} below lower bound {l}")
    return math.log(tau - l + p.epsilon)


def long_tail_inverse(c: float, p: LongTailParams) -> float:
    if p.lower_bound > 0:
        return math.exp(c)
    return math.exp(c) + p.lower_bound - p.epsilon


def long_tail_forward_array(values: np.ndarray, p: LongTailParams) -> np.ndarray:
    """Vectorized forward; values under the training minimum clamp to it, nan passes through."""
    v = np.asarray(values, dtype=np.float64)
    clamped = np.where(np.isnan(v), v, np.maximum(v, p.lower_bound))
    with np.errstate(invalid="ignore"):
        if p.lower_bound > 0:
            return np.log(clamped)
        return np.log(clamped - p.lower_bound + p.epsilon)


def long_tail_inverse_array(values: np.ndarray, p: LongTailParams) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if p.lower_bound > 0:
        return np.exp(v)
    return np.exp(v) + p.lower_bound - p.epsilon


@dataclass(frozen=True)
class GeneralTransformParams:
    min_x: float
    max_x: float
    is_categorical: bool = False
    categories: tuple[Any, ...] | None = None  # index = assigned integer

    def __post_init__(self):
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(self.categories))
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError("general-transform categories must be distinct")

    @property
    def category_to_int(self) -> dict[Any, int] | None:
        if self.categories is None:
            return None
        return {c: i for i, c in enumerate(self.categories)}

    @property
    def span(self) -> float:
        # a constant column has max == min; scale by 1 to keep the map finite
        return (self.max_x - self.min_x) or 1.0

    @classmethod
    def fit_numeric(cls, values: Iterable[float]) -> "GeneralTransformParams":
        arr = np.asarray(list(values), dtype=np.float64)
        arr = arr[~np.isnan(arr)]
        if arr.size == 0:
            raise DomainError("cannot fit general transform on an empty column")
        return cls(float(arr.min()), float(arr.max()))

    @classmethod
    def fit_categorical(cls, values: Iterable[Any]) -> "GeneralTransformParams":
        counts = Counter(values)
        # descending frequency, ties broken lexicographically (missing sorts last)
        order = sorted(counts, key=lambda c: (-counts[c], c is None, "" if c is None else str(c)))
        return cls(0.0, float(max(len(order) - 1, 0)), True, tuple(order))


def gt_forward(x, p: GeneralTransformParams) -> float:
    if p.is_categorical:
        mapping = p.category_to_int
        if x not in mapping:
            raise UnknownCategory(x)
        x = mapping[x]
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"general transform input must be finite, got {x}")
    t = 2.0 * (x - p.min_x) / p.span - 1.0
    return min(1.0, max(-1.0, t))


def gt_inverse(t: float, p: GeneralTransformParams):
    t = min(1.0, max(-1.0, float(t)))
    raw = p.span * (t + 1.0) / 2.0 + p.min_x
    if not p.is_categorical:
        return raw
    idx = int(np.clip(np.rint(raw), 0, len(p.categories) - 1))
    return p.categories[idx]


def gt_forward_array(values, p: GeneralTransformParams) -> np.ndarray:
    if p.is_categorical:
        mapping = p.category_to_int
        try:
            x = np.array([mapping[v] for v in values], dtype=np.float64)
        except KeyError as exc:
            raise UnknownCategory(exc.args[0]) from None
    else:
        x = np.asarray(values, dtype=np.float64)
    return np.clip(2.0 * (x - p.min_x) / p.span - 1.0, -1.0, 1.0)


def gt_inverse_array(t: np.ndarray, p: GeneralTransformParams) -> np.ndarray:
    raw = p.span * (np.clip(t, -1.0, 1.0) + 1.0) / 2.0 + p.min_x
    if not p.is_categorical:
        return raw
    idx = np.clip(np.rint(raw), 0, len(p.categories) - 1).astype(np.int64)
    out = np.empty(len(idx), dtype=object)
    for i, k in enumerate(idx):
        out[i] = p.categories[k]
    return out

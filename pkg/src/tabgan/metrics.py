"""Statistical-similarity and privacy-distance metrics between real and synthetic data."""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import wasserstein_distance

from .errors import EmptyColumn, EmptyDistribution, InputError, TooFewRows
from .schema import Dataset, TableSchema

MISSING_LABEL = "\x00missing"
PERCENTILE = 5.0


# --------------------------------------------------------------- column similarity

def _as_probs(counts) -> np.ndarray:
    p = np.asarray(counts, dtype=np.float64)
    total = p.sum()
    if total <= 0:
        raise EmptyDistribution("distribution has no mass")
    return p / total


def jsd(real_counts, synth_counts) -> float:
    """Jensen-Shannon divergence (log base 2) of two count vectors over one category universe."""
    p, q = _as_probs(real_counts), _as_probs(synth_counts)
    if p.shape != q.shape:
        raise InputError("count vectors must share a category universe")
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))

    # float addition commutes, so swapping p and q gives the identical value
    return min(1.0, max(0.0, 0.5 * (kl(p) + kl(q))))


def category_counts(real_values, synth_values) -> tuple[np.ndarray, np.ndarray, list]:
    r = Counter(MISSING_LABEL if v is None else v for v in real_values)
    s = Counter(MISSING_LABEL if v is None else v for v in synth_values)
    universe = sorted(set(r) | set(s), key=str)
    return (np.array([r[u] for u in universe], dtype=np.float64),
            np.array([s[u] for u in universe], dtype=np.float64), universe)


def jsd_columns(real_values, synth_values) -> float:
    rc, sc, _ = category_counts(real_values, synth_values)
    return jsd(rc, sc)


def _finite(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    return v[np.isfinite(v)]


def wd_1d(real_values, synth_values, *, normalize: bool = True) -> float:
    """Order-1 Wasserstein distance; with ``normalize`` both samples are jointly min-max scaled."""
    r, s = _finite(real_values), _finite(synth_values)
    if r.size == 0 or s.size == 0:
        raise EmptyColumn("Wasserstein distance needs two non-empty samples")
    if normalize:
        lo = min(r.min(), s.min())
        span = max(r.max(), s.max()) - lo
        if span == 0:
            return 0.0
        r, s = (r - lo) / span, (s - lo) / span
    return float(wasserstein_distance(r, s))


# --------------------------------------------------------------- associations

def _entropy(labels) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def theils_u(x, y) -> float:
    """Uncertainty coefficient U(x | y): the share of H(x) explained by y."""
    x, y = np.asarray(x), np.asarray(y)
    hx = _entropy(x)
    if hx == 0:
        return 1.0
    n = len(x)
    h_cond = 0.0
    for level in np.unique(y):
        sel = y == level
        h_cond += sel.sum() / n * _entropy(x[sel])
    return float((hx - h_cond) / hx)


def correlation_ratio(categories, measurements) -> float:
    c = np.asarray(categories)
    m = np.asarray(measurements, dtype=np.float64)
    ok = np.isfinite(m)
    c, m = c[ok], m[ok]
    if m.size == 0:
        return 0.0
    grand = m.mean()
    denom = np.sum((m - grand) ** 2)
    if denom == 0:
        return 0.0
    num = 0.0
    for level in np.unique(c):
        sel = m[c == level]
        num += sel.size * (sel.mean() - grand) ** 2
    return float(np.sqrt(num / denom))


def pearson(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    ok = np.isfinite(x) & np.isfinite(y)
    if not ok.any():
        return 0.0
    x, y = x[ok] - x[ok].mean(), y[ok] - y[ok].mean()
    denom = np.sqrt(np.sum(x * x) * np.sum(y * y))
    if denom == 0:
        return 0.0
    return float(np.sum(x * y) / denom)


def _label_array(values) -> np.ndarray:
    return np.array([MISSING_LABEL if v is None else str(v) for v in values], dtype=object)


def association_matrix(data: Dataset) -> np.ndarray:
    """Pairwise associations: Pearson (numeric-numeric), Theil's U (categorical, asymmetric),
    correlation ratio (categorical-numeric)."""
    specs = data.schema.columns
    cols = [data[s.name] if s.is_numeric else _label_array(data[s.name]) for s in specs]
    k = len(specs)
    out = np.eye(k)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            a, b = specs[i].is_numeric, specs[j].is_numeric
            if a and b:
                out[i, j] = pearson(cols[i], cols[j]) if i < j else out[j, i]
            elif not a and not b:
                out[i, j] = theils_u(cols[i], cols[j])
            elif a:
                out[i, j] = correlation_ratio(cols[j], cols[i])
            else:
                out[i, j] = correlation_ratio(cols[i], cols[j])
    return out


def corr_diff(real: Dataset, synth: Dataset, *, return_matrices: bool = False):
    if real.schema != synth.schema:
        raise InputError("datasets have different schemas")
    a, b = association_matrix(real), association_matrix(synth)
    d = float(np.linalg.norm(a - b))
    return (d, a, b) if return_matrices else d


# --------------------------------------------------------------- privacy space

@dataclass(frozen=True)
class MetricSpace:
    """Min-max scaled numeric columns, one-hot categoricals, indicator bits for mixed values.

    Numeric ranges come from the real data; the one-hot vocabulary covers every
    dataset passed to :meth:`fit`.
    """

    schema: TableSchema
    ranges: Mapping[str, tuple[float, float]]
    literals: Mapping[str, tuple[float, ...]]
    has_missing: Mapping[str, bool]
    vocab: Mapping[str, tuple[str, ...]]
    exclude: tuple[str, ...] = ()

    @classmethod
    def fit(cls, real: Dataset, *others: Dataset, exclude: Sequence[str] = ()) -> "MetricSpace":
        ranges, literals, missing, vocab = {}, {}, {}, {}
        for spec in real.schema.columns:
            if spec.name in exclude:
                continue
            if spec.is_numeric:
                v = _finite(real[spec.name])
                ranges[spec.name] = (float(v.min()), float(v.max())) if v.size else (0.0, 1.0)
                literals[spec.name] = spec.categorical_values_in_mixed
                missing[spec.name] = any(np.isnan(d[spec.name]).any() for d in (real,) + others)
            else:
                labels = set()
                for d in (real,) + others:
                    labels |= set(_label_array(d[spec.name]))
                vocab[spec.name] = tuple(sorted(labels))
        return cls(real.schema, ranges, literals, missing, vocab, tuple(exclude))

    def transform(self, data: Dataset) -> np.ndarray:
        parts = []
        for spec in self.schema.columns:
            if spec.name in self.exclude:
                continue
            if spec.is_numeric:
                v = np.asarray(data[spec.name], dtype=np.float64)
                lo, hi = self.ranges[spec.name]
                span = (hi - lo) or 1.0
                parts.append(np.nan_to_num((v - lo) / span, nan=0.0)[:, None])
                for lit in self.literals[spec.name]:
                    parts.append((v == lit).astype(np.float64)[:, None])
                if self.has_missing[spec.name]:
                    parts.append(np.isnan(v).astype(np.float64)[:, None])
            else:
                labels = _label_array(data[spec.name])
                lookup = {c: i for i, c in enumerate(self.vocab[spec.name])}
                hot = np.zeros((len(labels), len(lookup)))
                hot[np.arange(len(labels)), [lookup[l] for l in labels]] = 1.0
                parts.append(hot)
        if not parts:
            return np.zeros((data.row_count, 0))
        return np.hstack(parts)

    def feature_names(self) -> list[str]:
        """Column labels matching :meth:`transform`, in the same order."""
        names = []
        for spec in self.schema.columns:
            if spec.name in self.exclude:
                continue
            if spec.is_numeric:
                names.append(spec.name)
                names += [f"{spec.name}=={lit:g}" for lit in self.literals[spec.name]]
                if self.has_missing[spec.name]:
                    names.append(f"{spec.name}==missing")
            else:
                names += [f"{spec.name}={c}" for c in self.vocab[spec.name]]
        return names


# --------------------------------------------------------------- nearest neighbours

def _two_nearest(queries: np.ndarray, refs: np.ndarray, exclude_self: bool, chunk: int = 256):
    """Distances to the closest and second-closest reference row."""
    n = len(queries)
    d1, d2 = np.empty(n), np.empty(n)
    for start in range(0, n, chunk):
        q = queries[start:start + chunk]
        # column-by-column accumulation keeps the summation order of a plain loop
        sq = np.zeros((len(q), len(refs)))
        for k in range(q.shape[1]):
            sq += (q[:, k, None] - refs[None, :, k]) ** 2
        dist = np.sqrt(sq)
        if exclude_self:
            rows = np.arange(len(q))
            dist[rows, start + rows] = np.inf
        if dist.shape[1] >= 2:
            part = np.partition(dist, 1, axis=1)
            d1[start:start + chunk], d2[start:start + chunk] = part[:, 0], part[:, 1]
        else:
            d1[start:start + chunk], d2[start:start + chunk] = dist[:, 0], np.inf
    return d1, d2


def _pair(real: np.ndarray, synth: np.ndarray, mode: str):
    real = np.atleast_2d(np.asarray(real, dtype=np.float64))
    synth = np.atleast_2d(np.asarray(synth, dtype=np.float64))
    if mode in ("rs", "R<->S"):
        return synth, real, False
    if mode in ("rr", "within-R"):
        return real, real, True
    if mode in ("ss", "within-S"):
        return synth, synth, True
    raise ValueError(f"unknown mode {mode!r}")


def nn_distances(real, synth, mode: str = "rs") -> np.ndarray:
    q, r, self_ex = _pair(real, synth, mode)
    if self_ex and len(r) < 2:
        raise TooFewRows("within-dataset distances need at least 2 rows")
    if len(r) == 0 or len(q) == 0:
        raise TooFewRows("empty dataset")
    return _two_nearest(q, r, self_ex)[0]


def dcr(real, synth, mode: str = "rs") -> float:
    """5th percentile of distances to the closest record."""
    return float(np.percentile(nn_distances(real, synth, mode), PERCENTILE))


def nndr_ratios(real, synth, mode: str = "rs") -> np.ndarray:
    q, r, self_ex = _pair(real, synth, mode)
    if len(r) < (3 if self_ex else 2):
        raise TooFewRows("nearest-neighbour distance ratio needs two reference neighbours")
    d1, d2 = _two_nearest(q, r, self_ex)
    ratio = np.ones_like(d1)
    distinct = d1 < d2
    ratio[distinct] = d1[distinct] / d2[distinct]
    return ratio


def nndr(real, synth, mode: str = "rs") -> float:
    return float(np.percentile(nndr_ratios(real, synth, mode), PERCENTILE))


# --------------------------------------------------------------- reports

@dataclass
class SimilarityReport:
    jsd: dict[str, float] = field(default_factory=dict)
    wd: dict[str, float] = field(default_factory=dict)
    wd_raw: dict[str, float] = field(default_factory=dict)
    avg_jsd: float | None = None
    avg_wd: float | None = None
    corr_diff: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PrivacyReport:
    dcr_rs: float
    dcr_rr: float
    dcr_ss: float
    nndr_rs: float
    nndr_rr: float
    nndr_ss: float

    def to_dict(self) -> dict:
        return asdict(self)


def similarity_report(real: Dataset, synth: Dataset) -> SimilarityReport:
    if real.schema != synth.schema:
        raise InputError("datasets have different schemas")
    rep = SimilarityReport()
    for spec in real.schema.columns:
        if spec.is_numeric:
            rep.wd[spec.name] = wd_1d(real[spec.name], synth[spec.name])
            rep.wd_raw[spec.name] = wd_1d(real[spec.name], synth[spec.name], normalize=False)
        else:
            rep.jsd[spec.name] = jsd_columns(real[spec.name], synth[spec.name])
    rep.avg_jsd = float(np.mean(list(rep.jsd.values()))) if rep.jsd else None
    rep.avg_wd = float(np.mean(list(rep.wd.values()))) if rep.wd else None
    rep.corr_diff = corr_diff(real, synth)
    return rep


def privacy_report(real: Dataset, synth: Dataset, *, max_rows: int | None = None,
                   seed: int = 0) -> PrivacyReport:
    """DCR and NNDR in the scaled metric space; ``max_rows`` subsamples both sides."""
    space = MetricSpace.fit(real, synth)
    r, s = space.transform(real), space.transform(synth)
    if max_rows is not None:
        rng = np.random.default_rng(seed)
        if len(r) > max_rows:
            r = r[np.sort(rng.choice(len(r), max_rows, replace=False))]
        if len(s) > max_rows:
            s = s[np.sort(rng.choice(len(s), max_rows, replace=False))]
    return PrivacyReport(dcr(r, s, "rs"), dcr(r, s, "rr"), dcr(r, s, "ss"),
                         nndr(r, s, "rs"), nndr(r, s, "rr"), nndr(r, s, "ss"))

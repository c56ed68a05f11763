"""One-dimensional Gaussian mixtures fitted by EM, used for mode-specific normalization.

The number of modes is chosen per column: EM fits for k = 1, 2, ... up to
``k_max`` are compared by BIC, then components below ``prune_threshold`` weight
are dropped. Fitting runs on standardized data whose sign is canonicalized by
skewness, so the result is equivariant under affine maps of the input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

K_MAX = 10
PRUNE_THRESHOLD = 0.005
TOL = 1e-6
MAX_ITER = 300
N_RESTARTS = 3
N_SEED_QUANTILES = 101
SIGMA_FLOOR_FACTOR = 1e-6


@dataclass(frozen=True, eq=False)
class GaussianMixture1D:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        for name in ("weights", "means", "stds"):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.weights) == len(self.means) == len(self.stds) >= 1):
            raise ValueError("mixture needs matching, non-empty parameter vectors")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.stds <= 0):
            raise ValueError("mixture stds must be positive")

    def __eq__(self, other) -> bool:
        if not isinstance(other, GaussianMixture1D):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in ("weights", "means", "stds"))

    __hash__ = None

    @property
    def k(self) -> int:
        return len(self.weights)

    def component_log_density(self, x) -> np.ndarray:
        """log(w_k N(x; mu_k, sigma_k)) as an (n, k) array."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
        z = (x - self.means) / self.stds
        return np.log(self.weights) - 0.5 * z * z - np.log(self.stds) - LOG_SQRT_2PI

    def log_likelihood(self, x) -> float:
        return float(logsumexp(self.component_log_density(x), axis=1).sum())

    def responsibilities(self, x) -> np.ndarray:
        lp = self.component_log_density(x)
        return np.exp(lp - logsumexp(lp, axis=1, keepdims=True))

    def argmax_mode(self, x) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. ties go to the lowest index
        return np.argmax(self.component_log_density(x), axis=1)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d) -> "GaussianMixture1D":
        return cls(d["weights"], d["means"], d["stds"])


def responsibilities(gm: GaussianMixture1D, tau: float) -> np.ndarray:
    return gm.responsibilities([tau])[0]


def argmax_mode(gm: GaussianMixture1D, tau: float) -> int:
    return int(gm.argmax_mode([tau])[0])


@dataclass
class _EMResult:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    log_likelihood: float
    trace: list


def _seed_centers(quantiles: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding over a grid of data quantiles."""
    centers = [quantiles[rng.integers(len(quantiles))]]
    for _ in range(1, k):
        d2 = np.min((quantiles[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            break
        centers.append(quantiles[rng.choice(len(quantiles), p=d2 / total)])
    return np.sort(np.array(centers))


def _em(z: np.ndarray, centers: np.ndarray, var_floor: float, tol: float, max_iter: int) -> _EMResult:
    n = len(z)
    assign = np.argmin(np.abs(z[:, None] - centers[None, :]), axis=1)
    resp = np.zeros((n, len(centers)))
    resp[np.arange(n), assign] = 1.0
    trace: list[float] = []
    prev = -np.inf
    w = mu = var = None
    z2 = z * z
    for _ in range(max_iter):
        nk = resp.sum(axis=0)
        keep = nk > 1e-10
        if not keep.all():
            resp, nk = resp[:, keep], nk[keep]
        w = nk / n
        mu = (z @ resp) / nk
        # E[(z - mu)^2] = E[z^2] - mu^2 under the responsibilities
        var = np.maximum((z2 @ resp) / nk - mu * mu, var_floor)
        lp = z[:, None] - mu
        lp *= lp
        lp *= -0.5 / var
        lp += np.log(w) - 0.5 * np.log(var) - LOG_SQRT_2PI
        top = lp.max(axis=1, keepdims=True)
        np.subtract(lp, top, out=lp)
        np.exp(lp, out=lp)
        total = lp.sum(axis=1, keepdims=True)
        ll = float(np.log(total).sum() + top.sum())
        trace.append(ll)
        resp = lp / total
        if ll - prev < tol * n:
            break
        prev = ll
    return _EMResult(w, mu, np.sqrt(var), trace[-1], trace)


def fit_gmm(
    values,
    k_max: int = K_MAX,
    seed: int = 0,
    *,
    prune_threshold: float = PRUNE_THRESHOLD,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    n_restarts: int = N_RESTARTS,
    trace: list | None = None,
) -> GaussianMixture1D:
    """Fit a 1-D mixture with a data-driven number of modes (at most ``k_max``).

    If ``trace`` is given, the per-iteration log-likelihood of every EM run is
    appended to it (one list per run).
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("cannot fit a mixture to an empty column")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    center, scale = float(x.mean()), float(x.std())
    if scale == 0.0 or np.unique(x).size < 2:
        return GaussianMixture1D([1.0], [float(x[0])], [SIGMA_FLOOR_FACTOR * (scale or 1.0)])

    z = (x - center) / scale
    # canonical orientation makes the fit equivariant under negative scalings too
    sign = -1.0 if np.mean(z**3) < 0 else 1.0
    z = sign * z
    n = len(z)
    var_floor = SIGMA_FLOOR_FACTOR**2
    quantiles = np.unique(np.quantile(z, np.linspace(0.0, 1.0, N_SEED_QUANTILES)))
    rng = np.random.default_rng(seed)

    best: _EMResult | None = None
    best_bic = np.inf
    stale = 0
    for k in range(1, min(k_max, len(quantiles)) + 1):
        fit_k: _EMResult | None = None
        for _ in range(n_restarts if k > 1 else 1):
            res = _em(z, _seed_centers(quantiles, k, rng), var_floor, tol, max_iter)
            if trace is not None:
                trace.append(res.trace)
            if fit_k is None or res.log_likelihood > fit_k.log_likelihood:
                fit_k = res
        bic = -2.0 * fit_k.log_likelihood + (3 * len(fit_k.weights) - 1) * math.log(n)
        if bic < best_bic:
            best, best_bic, stale = fit_k, bic, 0
        else:
            stale += 1
            if stale >= 2:
                break

    w, mu, sd = best.weights, best.means, best.stds
    keep = w >= prune_threshold
    w, mu, sd = w[keep] / w[keep].sum(), mu[keep], sd[keep]
    means = center + scale * sign * mu
    stds = scale * sd
    order = np.argsort(means, kind="stable")
    return GaussianMixture1D(w[order], means[order], stds[order])

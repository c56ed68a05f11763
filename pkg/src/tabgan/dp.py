"""DP-SGD primitives and the Renyi-DP ledger for the critic.

Accounting chain per critic update: the Gaussian mechanism on a clipped
per-sample gradient (sensitivity 2C, C = 1) composed over the B real samples
of a batch gives ``2 B lam / sigma^2``; that cost is amplified by subsampling
at rate q = B / N, summed over updates, and converted to (eps, delta)-DP at the
best order on the integer grid [2, 4096].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import NumericOverflow

LAMBDA_MIN = 2
LAMBDA_MAX = 4096
DEFAULT_DELTA = 1e-5
LOG2 = math.log(2.0)
LOG4 = math.log(4.0)


def clip_and_noise(per_sample_grads, clip: float, sigma: float, rng: np.random.Generator,
                   *, return_clipped: bool = False):
    """Clip each row to L2 norm ``clip``, add N(0, sigma^2 clip^2) per sample, and average."""
    g = np.atleast_2d(np.asarray(per_sample_grads, dtype=np.float64))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    clipped = g / np.maximum(1.0, norms / clip)
    noisy = clipped + rng.normal(0.0, sigma * clip, size=g.shape)
    out = noisy.mean(axis=0)
    return (out, clipped) if return_clipped else out


def gaussian_rdp(lam, sensitivity: float, sigma: float):
    return lam * sensitivity**2 / (2.0 * sigma**2)


def rdp_per_update(lam, batch_size: int, sigma: float):
    """RDP of one critic update: B composed Gaussian mechanisms of sensitivity 2."""
    return batch_size * gaussian_rdp(lam, 2.0, sigma)


def _log_expm1(x: float) -> float:
    """log(e^x - 1) without overflow."""
    if x <= 0:
        return -math.inf if x == 0 else math.nan
    return x + math.log(-math.expm1(-x))


def amplify_by_subsampling(base_eps: Callable, q: float, lam: int) -> float:
    """Upper bound on the RDP of ``mechanism o subsample`` at integer order ``lam``.

    ``base_eps(j)`` is the RDP of the mechanism at order j (vectorized over a
    numpy array of orders). The mechanism is assumed Gaussian, so its order
    infinity RDP is unbounded and every ``min{2, (e^eps(inf) - 1)^j}`` is 2.
    """
    lam = int(lam)
    if lam < 2:
        raise ValueError("subsampled RDP bound needs an integer order >= 2")
    if not 0.0 < q <= 1.0:
        raise ValueError("subsampling rate must lie in (0, 1]")
    log_q = math.log(q)
    eps2 = float(base_eps(np.array([2.0]))[0])
    log_min2 = min(LOG4 + _log_expm1(eps2), LOG2 + eps2)
    terms = [0.0, 2.0 * log_q + math.log(lam * (lam - 1) / 2.0) + log_min2]
    if lam >= 3:
        j = np.arange(3, lam + 1, dtype=np.float64)
        log_binom = gammaln(lam + 1.0) - gammaln(j + 1.0) - gammaln(lam - j + 1.0)
        t = j * log_q + log_binom + (j - 1.0) * np.asarray(base_eps(j), dtype=np.float64) + LOG2
        terms.append(float(logsumexp(t)))
    total = float(logsumexp(terms))
    if not math.isfinite(total):
        raise NumericOverflow(f"subsampled RDP bound is not finite at order {lam}")
    return total / (lam - 1)


def rdp_to_dp(eps_rdp, lam, delta: float):
    return eps_rdp + math.log(1.0 / delta) / (np.asarray(lam, dtype=np.float64) - 1.0)


def amplified_curve(base_eps: Callable, q: float, lam_max: int, chunk: int = 256) -> np.ndarray:
    """:func:`amplify_by_subsampling` for every order 2..lam_max at once."""
    if not 0.0 < q <= 1.0:
        raise ValueError("subsampling rate must lie in (0, 1]")
    lams = np.arange(LAMBDA_MIN, lam_max + 1, dtype=np.float64)
    log_q = math.log(q)
    eps2 = float(base_eps(np.array([2.0]))[0])
    log_min2 = min(LOG4 + _log_expm1(eps2), LOG2 + eps2)
    head = np.logaddexp(0.0, 2.0 * log_q + np.log(lams * (lams - 1.0) / 2.0) + log_min2)
    j = np.arange(3, lam_max + 1, dtype=np.float64)
    # order-independent part of each j term
    a = j * log_q + (j - 1.0) * np.asarray(base_eps(j), dtype=np.float64) + LOG2 - gammaln(j + 1.0)
    log_fact = gammaln(np.arange(lam_max + 1, dtype=np.float64) + 1.0)
    lam_int = np.arange(LAMBDA_MIN, lam_max + 1)
    tail = np.full(len(lams), -np.inf)
    for start in range(0, len(lams), chunk):
        lam = lam_int[start:start + chunk, None]
        width = int(lam[-1, 0]) - 2  # j runs 3..max order of this chunk
        if width <= 0:
            continue
        diff = lam - j[None, :width].astype(np.int64)
        t = np.where(diff >= 0, a[None, :width] - log_fact[np.maximum(diff, 0)], -np.inf)
        top = t.max(axis=1, keepdims=True)
        safe = np.where(np.isfinite(top), top, 0.0)
        with np.errstate(divide="ignore"):
            lse = np.log(np.exp(t - safe).sum(axis=1)) + safe[:, 0]
        tail[start:start + chunk] = lse + log_fact[lam[:, 0]]
    total = np.logaddexp(head, tail)
    if not np.all(np.isfinite(total)):
        raise NumericOverflow("subsampled RDP bound is not finite")
    return total / (lams - 1.0)


@lru_cache(maxsize=64)
def _per_update_curve(sigma: float, batch_size: int, q: float, lam_max: int) -> np.ndarray:
    base = lambda j: rdp_per_update(j, batch_size, sigma)
    lams = np.arange(LAMBDA_MIN, lam_max + 1)
    amplified = amplified_curve(base, q, lam_max)
    # the subsampling bound can be looser than the plain mechanism for large q
    curve = np.minimum(amplified, base(lams.astype(np.float64)))
    curve.setflags(write=False)
    return curve


@dataclass
class PrivacyLedger:
    sigma: float
    batch_size: int
    n_rows: int
    delta: float = DEFAULT_DELTA
    clip: float = 1.0
    lambda_max: int = LAMBDA_MAX
    steps: int = 0
    _curve: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.sigma <= 0 or self.batch_size < 1 or self.n_rows < 1:
            raise ValueError("ledger needs sigma > 0, batch_size >= 1, n_rows >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.batch_size > self.n_rows:
            raise ValueError("batch size cannot exceed the dataset size")

    @property
    def q(self) -> float:
        return self.batch_size / self.n_rows

    @property
    def lambdas(self) -> np.ndarray:
        return np.arange(LAMBDA_MIN, self.lambda_max + 1)

    @property
    def per_update(self) -> np.ndarray:
        if self._curve is None:
            self._curve = _per_update_curve(float(self.sigma), int(self.batch_size), float(self.q),
                                            int(self.lambda_max))
        return self._curve

    def cumulative(self, steps: int | None = None) -> np.ndarray:
        t = self.steps if steps is None else steps
        return t * self.per_update

    def epsilon(self, steps: int | None = None) -> tuple[float, int]:
        """(eps_dp, minimizing order) after ``steps`` updates (default: steps taken)."""
        eps = rdp_to_dp(self.cumulative(steps), self.lambdas, self.delta)
        i = int(np.argmin(eps))
        return float(eps[i]), int(self.lambdas[i])

    def report(self) -> tuple[float, float]:
        return self.epsilon()[0], self.delta

    def max_steps(self, eps_target: float) -> int:
        """Largest T whose (eps, delta) stays within ``eps_target``."""
        slack = eps_target - math.log(1.0 / self.delta) / (self.lambdas - 1.0)
        curve = self.per_update
        with np.errstate(divide="ignore", invalid="ignore"):
            per_order = np.where(slack < 0, -1.0, np.where(curve > 0, np.floor(slack / curve), np.inf))
        best = float(per_order.max())
        if best < 0:
            return 0
        if math.isinf(best):
            raise ValueError("zero per-update privacy cost: the step count is unbounded")
        t = int(best)
        # floor of a float ratio can land one off the exact boundary
        while t > 0 and self.epsilon(t)[0] > eps_target:
            t -= 1
        while self.epsilon(t + 1)[0] <= eps_target:
            t += 1
        return t

    def charge(self, updates: int = 1) -> None:
        self.steps += updates

    def snapshot(self) -> dict:
        eps, lam = self.epsilon()
        return {"sigma": self.sigma, "clip": self.clip, "batch_size": self.batch_size,
                "n_rows": self.n_rows, "q": self.q, "delta": self.delta,
                "lambda_max": self.lambda_max, "steps": self.steps, "epsilon": eps, "best_lambda": lam}

    @classmethod
    def from_snapshot(cls, d: dict) -> "PrivacyLedger":
        return cls(d["sigma"], d["batch_size"], d["n_rows"], d["delta"], d["clip"],
                   d["lambda_max"], d["steps"])


def ledger_report(ledger: PrivacyLedger) -> tuple[float, float]:
    return ledger.report()


def max_steps(ledger: PrivacyLedger, eps_target: float) -> int:
    return ledger.max_steps(eps_target)

"""Limit law of the squared coherence.

Under the null, ``n L^2 - 4 log p + log log p`` converges to the type-I
extreme value law

    F(y) = exp(-exp(-y / 2) / sqrt(8 pi)).

If G is standard Gumbel then ``2 (G + log c)`` with ``c = 1/sqrt(8 pi)`` has
law F, which gives the mean and standard deviation below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SQRT_8PI = math.sqrt(8.0 * math.pi)
EULER_GAMMA = 0.5772156649015329
LIMIT_MEAN = 2.0 * (EULER_GAMMA - math.log(SQRT_8PI))
LIMIT_SD = 2.0 * math.pi / math.sqrt(6.0)


def evt_cdf(y):
    """F(y); accepts scalars or arrays."""
    y = np.asarray(y, dtype=float)
    out = np.exp(-np.exp(-y / 2.0) / SQRT_8PI)
    return float(out) if out.ndim == 0 else out


def evt_sf(y):
    """1 - F(y), accurate in the upper tail."""
    y = np.asarray(y, dtype=float)
    out = -np.expm1(-np.exp(-y / 2.0) / SQRT_8PI)
    return float(out) if out.ndim == 0 else out


def evt_quantile(q):
    """Inverse of F: ``-2 log(sqrt(8 pi) log(1/q))`` for ``0 < q < 1``."""
    q = np.asarray(q, dtype=float)
    if np.any(~((q > 0) & (q < 1))):
        raise DomainError("quantile level must lie in (0, 1)")
    out = -2.0 * np.log(SQRT_8PI * -np.log(q))
    return float(out) if out.ndim == 0 else out


def evt_isf(s):
    """Inverse of the survival function ``1 - F``, accurate for small ``s``."""
    s = np.asarray(s, dtype=float)
    if np.any(~((s > 0) & (s < 1))):
        raise DomainError("tail probability must lie in (0, 1)")
    out = -2.0 * np.log(SQRT_8PI * -np.log1p(-s))
    return float(out) if out.ndim == 0 else out


def _check_np(n, p):
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if p < 3:
        raise DomainError(f"p must be >= 3 so that log log p > 0, got {p}")


def transformed_value(L, n, p):
    """``n L^2 - 4 log p + log log p``."""
    _check_np(n, p)
    logp = math.log(p)
    return n * np.square(L) - 4.0 * logp + math.log(logp)


@dataclass(frozen=True)
class EvtStatistic:
    raw: float
    n: int
    p: int
    transformed: float
    pvalue: float
    lln_ratio: float

    def to_dict(self):
        return {"raw": self.raw, "n": self.n, "p": self.p, "transformed": self.transformed,
                "pvalue": self.pvalue, "lln_ratio": self.lln_ratio}


def transform_statistic(L: float, n: int, p: int) -> EvtStatistic:
    """Transformed statistic, its limit-law p-value and the LLN ratio ``sqrt(n/log p) L``."""
    _check_np(n, p)
    if not math.isfinite(L) or L < 0:
        raise DomainError(f"statistic must be finite and nonnegative, got {L}")
    y = float(transformed_value(L, n, p))
    return EvtStatistic(raw=float(L), n=int(n), p=int(p), transformed=y,
                        pvalue=float(evt_sf(y)), lln_ratio=math.sqrt(n / math.log(p)) * L)


def test_threshold(alpha: float, n: int, p: int) -> float:
    """Size-alpha rejection threshold on ``L^2``:

    ``(4 log p - log log p - log(8 pi) - 2 log log(1/(1-alpha))) / n``.

    It can be negative for small p; callers just compare.
    """
    if not (0 < alpha < 1):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    _check_np(n, p)
    logp = math.log(p)
    return (4.0 * logp - math.log(logp) - math.log(8.0 * math.pi)
            - 2.0 * math.log(-math.log1p(-alpha))) / n


test_threshold.__test__ = False  # not a pytest test despite the name

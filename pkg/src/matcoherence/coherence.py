"""Coherence statistics of a data matrix.

All statistics are a maximum of ``|y_i . y_j|`` over column pairs ``i < j``
with ``j - i >= tau``, for some column transform ``y``:

===========  ==============================================  =============
kind         column transform                                 mean mode
===========  ==============================================  =============
L            (x - mean(x)) / ||x - mean(x)||                  unknown
L_tilde      (x - mu) / ||x - mu||                            known
W, V         x (raw columns; W for tau = 1, V for tau > 1)    none
J, U         (x - mu) / sigma  (J for tau = 1, U for tau > 1) known + sigma
===========  ==============================================  =============

The maximum is found by a blocked Gram kernel: column blocks of edge
``block_size`` are multiplied panel by panel over the upper triangle only,
masked to ``j - i >= tau`` and reduced to per-panel champions.  Pairs whose
panel value is within a rounding slack of the overall maximum are then
re-evaluated by one fixed-order dot product each, and the winner is the
lexicographically smallest pair at the top value.  That final pass makes the
value and argmax independent of block size and thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateColumnError, EmptyPairError, NumericError, ParameterError
from .randmat import DataMatrix

DEFAULT_BLOCK = 256

COHERENCE_KINDS = ("L", "L_tilde")
GRAM_KINDS = ("W", "V", "J", "U")

# candidates within this relative gap of the panel-level maximum are re-evaluated
_CANDIDATE_RTOL = 1e-9
_CANDIDATE_ATOL = 1e-13
_RECOMPUTE_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class MeanMode:
    """How columns are centred.

    ``MeanMode()`` is the unknown-mean (Pearson) mode.  ``MeanMode.known(mu,
    sigma)`` centres at a known mean; ``mu`` and ``sigma`` are scalars or
    length-p vectors and ``sigma`` is only needed for the J/U statistics.
    """

    mu: object = None
    sigma: object = None

    @classmethod
    def unknown(cls):
        return cls()

    @classmethod
    def known(cls, mu=0.0, sigma=None):
        if mu is None:
            raise ParameterError("known mean mode needs mu")
        if sigma is not None and np.any(np.asarray(sigma, dtype=float) <= 0):
            raise ParameterError("sigma must be strictly positive")
        return cls(mu=mu, sigma=sigma)

    @property
    def is_known(self) -> bool:
        return self.mu is not None

    def mu_vector(self, p: int) -> np.ndarray:
        return _as_vector(self.mu, p, "mu")

    def sigma_vector(self, p: int) -> np.ndarray:
        if self.sigma is None:
            raise ParameterError("sigma is required for the J and U statistics")
        sigma = _as_vector(self.sigma, p, "sigma")
        if np.any(sigma <= 0):
            raise ParameterError("sigma must be strictly positive")
        return sigma

    def to_dict(self):
        if not self.is_known:
            return {"mode": "unknown"}
        out = {"mode": "known", "mu": _jsonable(self.mu)}
        if self.sigma is not None:
            out["sigma"] = _jsonable(self.sigma)
        return out


UNKNOWN = MeanMode()


def _jsonable(v):
    arr = np.asarray(v, dtype=float)
    return float(arr) if arr.ndim == 0 else arr.tolist()


def _as_vector(value, p, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(p, float(arr))
    if arr.shape != (p,):
        raise ParameterError(f"{name} must be a scalar or have length p={p}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class CoherenceResult:
    kind: str
    tau: int
    value: float
    argmax: tuple
    n: int
    p: int

    def to_dict(self):
        return {"kind": self.kind, "value": self.value, "argmax": list(self.argmax),
                "n": self.n, "p": self.p, "tau": self.tau}


@dataclass(frozen=True)
class Standardized:
    """Transformed columns, stored transposed (row ``j`` is column ``j``).

    ``centred`` holds ``x_j - centre_j`` and ``rows`` the same scaled to unit
    norm; ``sq_norms`` are the squared norms of ``centred`` and
    ``h_j = ||x_j - centre_j|| / sqrt(n)``.
    """

    rows: np.ndarray
    centred: np.ndarray
    sq_norms: np.ndarray
    center: np.ndarray
    h: np.ndarray

    @property
    def columns(self) -> np.ndarray:
        return self.rows.T


def _values(X):
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


def _row_dots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # fixed summation order per row, independent of how many rows are passed
    return (a * b).sum(axis=1)


def standardize_columns(X, mode: MeanMode = UNKNOWN) -> Standardized:
    """Centre each column and scale it to unit Euclidean norm.

    Raises DegenerateColumnError for a column that is (numerically) zero
    after centring, e.g. a constant column in unknown-mean mode.
    """
    values = _values(X)
    n, p = values.shape
    center = mode.mu_vector(p) if mode.is_known else values.mean(axis=0)
    centred = np.ascontiguousarray(values.T) - center[:, None]
    sq = _row_dots(centred, centred)
    norms = np.sqrt(sq)
    scale = np.max(np.abs(values), axis=0) + np.abs(center)
    bad = np.nonzero(norms <= 16 * np.finfo(float).eps * math.sqrt(n) * scale)[0]
    if bad.size:
        raise DegenerateColumnError(int(bad[0]))
    return Standardized(rows=centred / norms[:, None], centred=centred, sq_norms=sq,
                        center=center, h=norms / math.sqrt(n))


# ---------------------------------------------------------------------------
# blocked kernel
# ---------------------------------------------------------------------------

def _panel_candidates(rows, a0, a1, tau, block, slack_atol):
    """Scan panels (a-block, b-block) for b-block >= a-block; return per-panel
    (panel_max, I, J) for pairs near the panel maximum."""
    p = rows.shape[0]
    A = rows[a0:a1]
    out = []
    for b0 in range(a0, p, block):
        b1 = min(b0 + block, p)
        # largest j - i in this panel
        if (b1 - 1) - a0 < tau:
            continue
        P = np.abs(A @ rows[b0:b1].T)
        k = tau - (b0 - a0)  # admissible iff c - r >= k
        if k > -(a1 - a0 - 1):
            r = np.arange(a1 - a0)[:, None]
            c = np.arange(b1 - b0)[None, :]
            P[c - r < k] = -1.0
        pm = float(P.max())
        if pm < 0:
            continue
        cut = pm - (_CANDIDATE_RTOL * pm + slack_atol)
        ri, ci = np.nonzero(P >= cut)
        out.append((pm, ri + a0, ci + b0))
    return out


def _canonical_values(rows, I, J, sq_norms=None):
    """Re-evaluate candidate pairs one fixed-order dot product at a time.

    With ``sq_norms`` the dot is divided by ``sqrt(sq_i * sq_j)``; identical
    rows then give exactly 1 because ``sqrt(x * x) == x`` in IEEE arithmetic.
    """
    vals = np.empty(I.size)
    for s in range(0, I.size, _RECOMPUTE_CHUNK):
        sl = slice(s, s + _RECOMPUTE_CHUNK)
        i, j = I[sl], J[sl]
        v = np.abs(_row_dots(rows[i], rows[j]))
        if sq_norms is not None:
            v = v / np.sqrt(sq_norms[i] * sq_norms[j])
        vals[sl] = v
    return vals


def max_abs_pair(rows: np.ndarray, tau: int = 1, block_size: int = DEFAULT_BLOCK,
                 threads: int = 1, *, exact_rows: Optional[np.ndarray] = None,
                 exact_sq_norms: Optional[np.ndarray] = None) -> tuple:
    """Maximum of ``|rows[i] . rows[j]|`` over ``i < j``, ``j - i >= tau``.

    The panels run on ``rows``; the final candidates are re-scored on
    ``exact_rows`` (default ``rows``), normalised by ``exact_sq_norms`` when
    given.  Returns ``(value, (i, j))`` with ties broken by smallest ``(i, j)``.
    """
    p = rows.shape[0]
    if tau < 1:
        raise ParameterError(f"tau must be >= 1, got {tau}")
    if p < tau + 1:
        raise EmptyPairError(p, tau)
    block = max(1, int(block_size))
    sq = np.einsum("ij,ij->i", rows, rows)
    slack_atol = _CANDIDATE_ATOL * float(sq.max())
    starts = list(range(0, p, block))

    def scan(a0):
        return _panel_candidates(rows, a0, min(a0 + block, p), tau, block, slack_atol)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(scan, starts))
    else:
        chunks = [scan(a0) for a0 in starts]
    panels = [c for chunk in chunks for c in chunk]
    top = max(pm for pm, _, _ in panels)
    cut = top - (_CANDIDATE_RTOL * top + slack_atol)
    I = np.concatenate([i for pm, i, _ in panels if pm >= cut])
    J = np.concatenate([j for pm, _, j in panels if pm >= cut])
    vals = _canonical_values(rows if exact_rows is None else exact_rows, I, J, exact_sq_norms)
    best = vals.max()
    winners = np.nonzero(vals == best)[0]
    order = np.lexsort((J[winners], I[winners]))
    w = winners[order[0]]
    return float(best), (int(I[w]), int(J[w]))


def _check_tau(tau, p):
    if isinstance(tau, bool) or int(tau) != tau or tau < 1:
        raise ParameterError(f"tau must be a positive integer, got {tau!r}")
    tau = int(tau)
    if p < tau + 1:
        raise EmptyPairError(p, tau)
    return tau


def coherence(X, tau: int = 1, mode: MeanMode = UNKNOWN, *, block_size: int = DEFAULT_BLOCK,
              threads: int = 1) -> CoherenceResult:
    """Largest ``|rho_ij|`` over ``j - i >= tau``: L (``tau=1``) or the banded
    L_{n,tau}; with a known mean, the tilde versions."""
    values = _values(X)
    n, p = values.shape
    tau = _check_tau(tau, p)
    std = standardize_columns(values, mode)
    value, arg = max_abs_pair(std.rows, tau, block_size, threads,
                              exact_rows=std.centred, exact_sq_norms=std.sq_norms)
    kind = "L_tilde" if mode.is_known else "L"
    return CoherenceResult(kind=kind, tau=tau, value=min(value, 1.0), argmax=arg, n=n, p=p)


def _gram_rows(values, mode: Optional[MeanMode]):
    p = values.shape[1]
    if mode is None:
        return np.ascontiguousarray(values.T), False
    if not mode.is_known:
        raise ParameterError("gram statistics take no mean mode (W/V) or a known mean with sigma (J/U)")
    mu = mode.mu_vector(p)
    sigma = mode.sigma_vector(p)
    return (np.ascontiguousarray(values.T) - mu[:, None]) / sigma[:, None], True


def gram_offdiag_max(X, tau: int = 1, mode: Optional[MeanMode] = None, *,
                     block_size: int = DEFAULT_BLOCK, threads: int = 1) -> CoherenceResult:
    """Unnormalised statistic: raw ``|x_i . x_j|`` (W, or V for ``tau > 1``)
    when ``mode`` is None, else ``|(x_i - mu_i).(x_j - mu_j)| / (sigma_i sigma_j)``
    (J, or U for ``tau > 1``)."""
    values = _values(X)
    n, p = values.shape
    tau = _check_tau(tau, p)
    rows, centred = _gram_rows(values, mode)
    value, arg = max_abs_pair(rows, tau, block_size, threads)
    kind = ("J" if tau == 1 else "U") if centred else ("W" if tau == 1 else "V")
    return CoherenceResult(kind=kind, tau=tau, value=value, argmax=arg, n=n, p=p)


def pair_statistic(X, i: int, j: int, kind: str = "L", mode: Optional[MeanMode] = None) -> float:
    """Evaluate one pair's term of a statistic directly from the raw columns."""
    values = _values(X)
    n, p = values.shape
    xi = values[:, i].astype(float)
    xj = values[:, j].astype(float)
    if kind == "L":
        xi = xi - xi.mean()
        xj = xj - xj.mean()
    elif kind in ("L_tilde", "J", "U"):
        mu = mode.mu_vector(p)
        xi = xi - mu[i]
        xj = xj - mu[j]
    if kind in ("L", "L_tilde"):
        return abs(float(np.dot(xi, xj))) / (np.linalg.norm(xi) * np.linalg.norm(xj))
    if kind in ("J", "U"):
        sigma = mode.sigma_vector(p)
        return abs(float(np.dot(xi, xj))) / (sigma[i] * sigma[j])
    return abs(float(np.dot(xi, xj)))


# ---------------------------------------------------------------------------
# approximation diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GramDiagnostics:
    b1: float
    b3: float
    b4: float
    W: float
    lemma_bound: float
    actual_dev: float

    @property
    def holds(self) -> bool:
        return self.actual_dev <= self.lemma_bound

    def to_dict(self):
        return {"b1": self.b1, "b3": self.b3, "b4": self.b4, "W": self.W,
                "lemma_bound": self.lemma_bound, "actual_dev": self.actual_dev}


def lemma_bound_diagnostics(X, *, block_size: int = DEFAULT_BLOCK) -> GramDiagnostics:
    """Compare ``n * Gamma_n`` with the raw Gram matrix ``X^T X`` off the diagonal.

    With ``h_i = ||x_i - xbar_i|| / sqrt(n)``, ``b1 = max |h_i - 1|``,
    ``b3 = min h_i``, ``b4 = max |xbar_i|`` and ``W`` the largest off-diagonal
    ``|x_i . x_j|``, the deviation obeys

        max_{i != j} |n rho_ij - x_i . x_j| <= (b1^2 + 2 b1) W / b3^2 + n b4^2 / b3^2.

    Both sides are computed; NumericError is raised if the inequality fails
    by more than floating-point rounding.
    """
    values = _values(X)
    n, p = values.shape
    if p < 2:
        raise EmptyPairError(p, 1)
    std = standardize_columns(values, UNKNOWN)
    raw = np.ascontiguousarray(values.T)
    b1 = float(np.max(np.abs(std.h - 1.0)))
    b3 = float(np.min(std.h))
    b4 = float(np.max(np.abs(std.center)))
    W = 0.0
    dev = 0.0
    block = max(1, int(block_size))
    for a0 in range(0, p, block):
        a1 = min(a0 + block, p)
        for b0 in range(a0, p, block):
            c1 = min(b0 + block, p)
            G = raw[a0:a1] @ raw[b0:c1].T
            D = np.abs(n * (std.rows[a0:a1] @ std.rows[b0:c1].T) - G)
            G = np.abs(G)
            if a0 == b0:
                iu = np.triu_indices(a1 - a0, 1, c1 - b0)
                G, D = G[iu], D[iu]
            if G.size:
                W = max(W, float(G.max()))
                dev = max(dev, float(D.max()))
    bound = (b1 * b1 + 2 * b1) * W / b3 ** 2 + n * b4 ** 2 / b3 ** 2
    slack = 64 * np.finfo(float).eps * (n + W) * (1 + 1 / b3 ** 2)
    if dev > bound + slack:
        raise NumericError(f"Gram deviation {dev!r} exceeds bound {bound!r}")
    return GramDiagnostics(b1=b1, b3=b3, b4=b4, W=W, lemma_bound=bound, actual_dev=dev)

"""Seeded generation of the random matrix ensembles.

Every column draws from its own Philox stream keyed by the matrix seed, with
the column index written into the high counter word.  Column ``j`` therefore
depends only on ``(seed, j)``: columns can be generated in any order or in
parallel and dropping a column never changes the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, NotPositiveDefiniteError, ParameterError

IID_FAMILIES = ("gaussian", "scaled_gaussian", "rademacher", "sparse_ternary")
FAMILIES = IID_FAMILIES + ("banded_gaussian", "block_gaussian")

PIVOT_RTOL = 1e-10

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# counter word 3 separates the stream kinds drawn under one key
_STREAM_IID = 0
_STREAM_BANDED = 1
_STREAM_BLOCK = 2


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Keyed 64-bit hash of ``(master_seed, index)``.

    For a fixed master seed the map ``index -> seed`` is a bijection on
    64-bit integers, so distinct replicate indices never share a seed.
    """
    key = _splitmix64(master_seed & _MASK64)
    return _splitmix64((key + _GOLDEN * (index & _MASK64)) & _MASK64)


def column_stream(seed: int, column: int, stream: int = _STREAM_IID) -> np.random.Generator:
    key = np.array([seed & _MASK64, _splitmix64(seed & _MASK64)], dtype=np.uint64)
    counter = np.array([0, 0, column, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _check_size(name, value):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


# ---------------------------------------------------------------------------
# banded covariance
# ---------------------------------------------------------------------------

def banded_cholesky(bands: np.ndarray, pivot_rtol: float = PIVOT_RTOL) -> np.ndarray:
    """Cholesky factor of a symmetric banded matrix in band storage.

    ``bands[d, i]`` holds ``A[i, i + d]`` for offsets ``d = 0..tau-1``.
    Returns ``low`` with ``low[d, i] = L[i, i - d]`` (entries with ``i < d``
    are zero).  Cost is O(p * tau^2).

    A pivot at or below ``pivot_rtol * max(diag)`` raises
    NotPositiveDefiniteError naming the (1-based) leading minor.
    """
    tau, p = bands.shape
    low = np.zeros((tau, p))
    cutoff = pivot_rtol * float(np.max(bands[0]))
    for i in range(p):
        first = max(0, i - tau + 1)
        for k in range(first, i):
            d = i - k
            a_ik = bands[d, k]
            ms = np.arange(first, k)
            s = float(np.dot(low[i - ms, i], low[k - ms, k])) if ms.size else 0.0
            low[d, i] = (a_ik - s) / low[0, k]
        ms = np.arange(first, i)
        pivot = bands[0, i] - float(np.dot(low[i - ms, i], low[i - ms, i]))
        if not pivot > cutoff:
            raise NotPositiveDefiniteError(i + 1, pivot)
        low[0, i] = math.sqrt(pivot)
    return low


@dataclass(frozen=True, eq=False)
class BandedCovSpec:
    """A p x p covariance stored by its band.

    ``bands[d]`` is the length-p vector of covariances ``sigma[i, i+d]``;
    positions ``i >= p - d`` are padding and ignored.  Entries at offsets
    ``>= tau`` are zero by construction.  The constructor factors the band
    and rejects anything that is not positive definite.
    """

    p: int
    tau: int
    bands: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = _check_size("p", self.p)
        tau = _check_size("tau", self.tau)
        bands = np.array(self.bands, dtype=float, ndmin=2)
        if bands.shape != (tau, p):
            raise ParameterError(f"bands must have shape (tau, p) = ({tau}, {p}), got {bands.shape}")
        if not np.all(np.isfinite(bands)):
            raise ParameterError("bands must be finite")
        if np.any(bands[0] <= 0):
            raise ParameterError("diagonal variances must be positive")
        for d in range(1, tau):
            bands[d, p - d:] = 0.0
        bands.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "bands", bands)
        factor = banded_cholesky(bands)
        factor.setflags(write=False)
        object.__setattr__(self, "factor", factor)

    @classmethod
    def constant(cls, p: int, values) -> "BandedCovSpec":
        """Toeplitz band: ``values[d]`` on every entry at offset ``d``."""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        tau = min(len(values), p)
        return cls(p=p, tau=tau, bands=np.repeat(values[:tau, None], p, axis=1))

    @classmethod
    def identity(cls, p: int) -> "BandedCovSpec":
        return cls.constant(p, [1.0])

    def dense(self) -> np.ndarray:
        out = np.diag(self.bands[0].copy())
        for d in range(1, self.tau):
            off = self.bands[d, : self.p - d]
            out += np.diag(off, d) + np.diag(off, -d)
        return out

    def to_dict(self):
        return {"p": self.p, "tau": self.tau, "bands": self.bands.tolist()}


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """Which ensemble to draw and at what size.

    ``mean``/``sd`` apply to ``gaussian``; ``cov`` and ``mu`` (scalar or
    length-p) to ``banded_gaussian``; ``block_size``/``num_blocks`` to
    ``block_gaussian``, where ``p`` must equal their product.
    """

    family: str
    n: int
    p: int
    mean: float = 0.0
    sd: float = 1.0
    cov: Optional[BandedCovSpec] = None
    mu: object = 0.0
    block_size: Optional[int] = None
    num_blocks: Optional[int] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "n", _check_size("n", self.n))
        object.__setattr__(self, "p", _check_size("p", self.p))
        if self.family == "gaussian":
            if not (math.isfinite(self.sd) and self.sd > 0):
                raise ParameterError(f"gaussian sd must be > 0, got {self.sd}")
            if not math.isfinite(self.mean):
                raise ParameterError("gaussian mean must be finite")
        elif self.family == "banded_gaussian":
            if self.cov is None:
                raise ParameterError("banded_gaussian requires cov")
            if self.cov.p != self.p:
                raise ParameterError(f"cov.p={self.cov.p} does not match p={self.p}")
            mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (self.p,))
            if not np.all(np.isfinite(mu)):
                raise ParameterError("mu must be finite")
        elif self.family == "block_gaussian":
            nb = _check_size("block_size", self.block_size)
            m = _check_size("num_blocks", self.num_blocks)
            if nb * m != self.p:
                raise ParameterError(f"p={self.p} must equal block_size*num_blocks={nb * m}")

    @property
    def is_iid(self):
        return self.family in IID_FAMILIES

    def entry_mean(self) -> float:
        """Mean of a single entry for the i.i.d. families (used as known mean)."""
        return self.mean if self.family == "gaussian" else 0.0

    def entry_sd(self) -> float:
        if self.family == "gaussian":
            return self.sd
        return 1.0 / math.sqrt(self.n)

    def to_dict(self):
        out = {"family": self.family, "n": self.n, "p": self.p}
        if self.family == "gaussian":
            out.update(mean=self.mean, sd=self.sd)
        elif self.family == "banded_gaussian":
            out.update(cov=self.cov.to_dict(), mu=np.broadcast_to(
                np.asarray(self.mu, dtype=float), (self.p,)).tolist())
        elif self.family == "block_gaussian":
            out.update(block_size=self.block_size, num_blocks=self.num_blocks)
        return out


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An immutable n x p data matrix (rows are observations).

    ``values`` is stored column-major.  ``spec``/``seed`` record how it was
    generated; both are None for matrices read from a file.
    """

    values: np.ndarray
    spec: Optional[EnsembleSpec] = None
    seed: Optional[int] = None
    source: str = "generated"

    def __post_init__(self):
        values = np.asfortranarray(np.array(self.values, dtype=np.float64, ndmin=2))
        if values.ndim != 2 or values.size == 0:
            raise DataError(f"data matrix must be a non-empty 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("data matrix contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def external(cls, values, source="external file") -> "DataMatrix":
        return cls(values=values, source=source)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def provenance(self):
        if self.spec is None:
            return {"source": self.source}
        return {"source": self.source, "seed": self.seed, "spec": self.spec.to_dict()}


def _iid_column(spec: EnsembleSpec, gen: np.random.Generator) -> np.ndarray:
    n = spec.n
    if spec.family == "gaussian":
        return spec.mean + spec.sd * gen.standard_normal(n)
    if spec.family == "scaled_gaussian":
        return gen.standard_normal(n) / math.sqrt(n)
    if spec.family == "rademacher":
        scale = 1.0 / math.sqrt(n)
        return np.where(gen.random(n) < 0.5, scale, -scale)
    # sparse_ternary: +/- sqrt(3/n) w.p. 1/6 each, 0 w.p. 2/3
    u = gen.random(n)
    a = math.sqrt(3.0 / n)
    out = np.zeros(n)
    out[u < 1.0 / 6.0] = a
    out[(u >= 1.0 / 6.0) & (u < 1.0 / 3.0)] = -a
    return out


def _normal_columns(seed: int, n: int, p: int, stream: int) -> np.ndarray:
    z = np.empty((n, p), order="F")
    for j in range(p):
        z[:, j] = column_stream(seed, j, stream).standard_normal(n)
    return z


def gen_iid(spec: EnsembleSpec, seed: int) -> DataMatrix:
    """Draw an n x p matrix with i.i.d. entries from one of the four families."""
    if not spec.is_iid:
        raise ParameterError(f"gen_iid needs an i.i.d. family, got {spec.family!r}")
    values = np.empty((spec.n, spec.p), order="F")
    for j in range(spec.p):
        values[:, j] = _iid_column(spec, column_stream(seed, j, _STREAM_IID))
    return DataMatrix(values=values, spec=spec, seed=seed)


def gen_banded_gaussian(spec: EnsembleSpec, seed: int) -> DataMatrix:
    """Rows i.i.d. N_p(mu, Sigma) with banded Sigma, using its band Cholesky factor.

    Row draw x = mu + L z, so column i is ``sum_d L[i, i-d] * z[:, i-d]``;
    total cost O(n * p * tau) after the O(p * tau^2) factorization.
    """
    if spec.family != "banded_gaussian":
        raise ParameterError(f"gen_banded_gaussian needs banded_gaussian, got {spec.family!r}")
    n, p = spec.n, spec.p
    low = spec.cov.factor
    z = _normal_columns(seed, n, p, _STREAM_BANDED)
    values = z * low[0]
    for d in range(1, spec.cov.tau):
        values[:, d:] += z[:, : p - d] * low[d, d:]
    values += np.broadcast_to(np.asarray(spec.mu, dtype=float), (p,))
    return DataMatrix(values=values, spec=spec, seed=seed)


def gen_block_counterexample(block_size: int, num_blocks: int, n: int, seed: int) -> DataMatrix:
    """Rows ``(z1,...,z1, z2,...,z2, ...)``: each of ``num_blocks`` i.i.d. N(0,1)
    values repeated ``block_size`` times (covariance ``diag(H, ..., H)`` with H
    the all-ones block)."""
    spec = EnsembleSpec("block_gaussian", n=n, p=block_size * num_blocks,
                        block_size=block_size, num_blocks=num_blocks)
    z = _normal_columns(seed, spec.n, num_blocks, _STREAM_BLOCK)
    values = np.asfortranarray(np.repeat(z, block_size, axis=1))
    return DataMatrix(values=values, spec=spec, seed=seed)


def generate(spec: EnsembleSpec, seed: int) -> DataMatrix:
    if spec.is_iid:
        return gen_iid(spec, seed)
    if spec.family == "banded_gaussian":
        return gen_banded_gaussian(spec, seed)
    return gen_block_counterexample(spec.block_size, spec.num_blocks, spec.n, seed)

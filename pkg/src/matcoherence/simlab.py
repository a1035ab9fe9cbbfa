"""Monte Carlo checks of the limit theorems.

A simulation draws ``replicates`` matrices from one scenario, computes the
configured coherence statistic for each and compares the transformed values
``n L^2 - 4 log p + log log p`` with the limit law F.

Scenarios:

* ``iid``: i.i.d. entries from one family (null, ``tau`` free).
* ``banded``: Gaussian rows with a banded covariance whose bandwidth does
  not exceed the tested ``tau`` (null for the bandedness test).
* ``remark23``: identity covariance with ``p = 2n`` and ``tau = n``.  Far too
  few pairs are admissible, and the transformed statistic plus ``log 16``
  is what converges to F, so the target law is F shifted by ``-log 16``.
* ``remark24``: rows built from ``num_blocks`` normals, each repeated
  ``block_size`` times, tested at ``tau = block_size``.  Here the statistic
  plus ``16 log log p`` converges to F; the target shift is
  ``-16 log log p``.  ``num_blocks`` is a free parameter.

Replicate ``r`` uses seed ``derive_seed(master_seed, r)``, so a report is a
pure function of its configuration, whatever the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coherence import MeanMode, UNKNOWN, coherence
from .csmip import g_of_t
from .errors import DomainError, ParameterError
from .evtlaw import LIMIT_MEAN, evt_cdf, test_threshold, transformed_value
from .randmat import BandedCovSpec, EnsembleSpec, IID_FAMILIES, derive_seed, generate

SCENARIOS = ("iid", "banded", "remark23", "remark24")
ECDF_POINTS = 512
MIN_REPLICATES = 100


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    scenario: str
    n: int
    p: Optional[int] = None
    tau: Optional[int] = None
    replicates: int = 1000
    master_seed: int = 0
    family: str = "gaussian"
    mean_mode: str = "unknown"
    alpha: Optional[float] = None
    cov: Optional[BandedCovSpec] = None
    mu: float = 0.0
    block_size: Optional[int] = None
    num_blocks: Optional[int] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ParameterError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.mean_mode not in ("unknown", "known"):
            raise ParameterError(f"mean_mode must be 'unknown' or 'known', got {self.mean_mode!r}")
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        if self.alpha is not None and not (0 < self.alpha < 1):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.scenario == "remark23":
            self._force("p", 2 * self.n)
            self._force("tau", self.n)
        elif self.scenario == "remark24":
            if self.block_size is None or self.num_blocks is None:
                raise ParameterError("remark24 needs block_size and num_blocks")
            self._force("p", self.block_size * self.num_blocks)
            self._force("tau", self.block_size)
        else:
            if self.p is None:
                raise ParameterError(f"scenario {self.scenario} needs p")
            if self.tau is None:
                object.__setattr__(self, "tau", 1)
        if self.scenario == "iid" and self.family not in IID_FAMILIES:
            raise ParameterError(f"iid scenario needs one of {IID_FAMILIES}, got {self.family!r}")
        if self.scenario == "banded":
            if self.cov is None:
                raise ParameterError("banded scenario needs cov")
            if self.cov.p != self.p:
                raise ParameterError(f"cov.p={self.cov.p} does not match p={self.p}")
            if self.cov.tau > self.tau:
                raise ParameterError(
                    f"covariance bandwidth {self.cov.tau} exceeds tested tau={self.tau}: not a null scenario")

    def _force(self, name, value):
        given = getattr(self, name)
        if given is not None and given != value:
            raise ParameterError(f"{self.scenario} fixes {name}={value}, got {given}")
        object.__setattr__(self, name, value)

    def ensemble(self) -> EnsembleSpec:
        if self.scenario == "iid":
            return EnsembleSpec(self.family, n=self.n, p=self.p)
        if self.scenario == "banded":
            return EnsembleSpec("banded_gaussian", n=self.n, p=self.p, cov=self.cov, mu=self.mu)
        if self.scenario == "remark23":
            return EnsembleSpec("gaussian", n=self.n, p=self.p)
        return EnsembleSpec("block_gaussian", n=self.n, p=self.p,
                            block_size=self.block_size, num_blocks=self.num_blocks)

    def statistic_mode(self) -> MeanMode:
        if self.mean_mode == "unknown":
            return UNKNOWN
        if self.scenario == "iid":
            spec = self.ensemble()
            return MeanMode.known(spec.entry_mean(), spec.entry_sd())
        if self.scenario == "banded":
            return MeanMode.known(self.mu, np.sqrt(self.cov.bands[0]))
        return MeanMode.known(0.0, 1.0)

    def target_shift(self) -> float:
        if self.scenario == "remark23":
            return -math.log(16.0)
        if self.scenario == "remark24":
            return -16.0 * math.log(math.log(self.p))
        return 0.0

    def to_dict(self):
        out = {"scenario": self.scenario, "n": self.n, "p": self.p, "tau": self.tau,
               "replicates": self.replicates, "master_seed": self.master_seed,
               "mean_mode": self.mean_mode, "alpha": self.alpha}
        if self.scenario == "iid":
            out["family"] = self.family
        if self.scenario == "banded":
            out["cov"] = self.cov.to_dict()
            out["mu"] = self.mu
        if self.scenario == "remark24":
            out.update(block_size=self.block_size, num_blocks=self.num_blocks)
        return out


@dataclass(frozen=True)
class LawComparison:
    ks_distance: float
    mean: float
    shift_estimate: float


def ks_distance(values, shift: float = 0.0) -> float:
    """Exact sup-distance between the ECDF of ``values`` and ``y -> F(y - shift)``."""
    v = np.sort(np.asarray(values, dtype=float))
    N = v.size
    Fv = evt_cdf(v - shift)
    i = np.arange(1, N + 1)
    return float(max(np.max(i / N - Fv), np.max(Fv - (i - 1) / N)))


def compare_to_law(values, shift: float = 0.0) -> LawComparison:
    """Compare a sample with the limit law translated by ``shift``.

    ``shift_estimate`` is the sample mean minus the translated law's mean.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("no values to compare")
    mean = float(v.mean())
    return LawComparison(ks_distance=ks_distance(v, shift), mean=mean,
                         shift_estimate=mean - (LIMIT_MEAN + shift))


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    raw: np.ndarray
    transformed: np.ndarray
    ecdf_grid: np.ndarray
    ecdf: np.ndarray
    ks_distance: float
    mean_transformed: float
    mean_lln_ratio: float
    target_shift: float
    shift_estimate: float
    rejection_rate: Optional[float] = None
    warnings: list = field(default_factory=list)

    @property
    def deficit(self) -> float:
        """How far the mean transformed value sits below the mean of F."""
        return -self.shift_estimate

    def to_dict(self, include_values: bool = True):
        out = {
            "config": self.config.to_dict(),
            "ks_distance": self.ks_distance,
            "mean_transformed": self.mean_transformed,
            "mean_lln_ratio": self.mean_lln_ratio,
            "target_shift": self.target_shift,
            "shift_estimate": self.shift_estimate,
            "rejection_rate": self.rejection_rate,
            "ecdf": {"grid": self.ecdf_grid.tolist(), "values": self.ecdf.tolist()},
            "warnings": list(self.warnings),
        }
        if include_values:
            out["raw"] = self.raw.tolist()
            out["transformed"] = self.transformed.tolist()
        return out


def _replicate(config: SimulationConfig, spec: EnsembleSpec, mode: MeanMode, r: int) -> float:
    X = generate(spec, derive_seed(config.master_seed, r))
    return coherence(X, config.tau, mode).value


def replicate_statistics(config: SimulationConfig, threads: int = 1) -> np.ndarray:
    spec = config.ensemble()
    mode = config.statistic_mode()

    def run(r):
        return _replicate(config, spec, mode, r)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.fromiter(pool.map(run, range(config.replicates)), float, config.replicates)
    return np.fromiter(map(run, range(config.replicates)), float, config.replicates)


def simulate(config: SimulationConfig, threads: int = 1) -> SimulationReport:
    raw = replicate_statistics(config, threads)
    n, p = config.n, config.p
    y = np.asarray(transformed_value(raw, n, p), dtype=float)
    shift = config.target_shift()
    cmp = compare_to_law(y, shift)
    ys = np.sort(y)
    grid = np.linspace(ys[0] - 1.0, ys[-1] + 1.0, ECDF_POINTS)
    ecdf = np.searchsorted(ys, grid, side="right") / ys.size
    rejection = None
    if config.alpha is not None:
        rejection = float(np.mean(raw ** 2 >= test_threshold(config.alpha, n, p)))
    warnings = []
    if config.replicates < MIN_REPLICATES:
        warnings.append(f"only {config.replicates} replicates; CDF summaries are noisy")
    return SimulationReport(
        config=config, raw=raw, transformed=y, ecdf_grid=grid, ecdf=ecdf,
        ks_distance=cmp.ks_distance, mean_transformed=cmp.mean,
        mean_lln_ratio=float(np.mean(math.sqrt(n / math.log(p)) * raw)),
        target_shift=shift, shift_estimate=cmp.mean - LIMIT_MEAN,
        rejection_rate=rejection, warnings=warnings,
    )


@dataclass(frozen=True)
class TailCoverage:
    t: float
    frequency: float
    standard_error: float
    bound: float
    covered: bool

    def to_dict(self):
        return {"t": self.t, "frequency": self.frequency, "standard_error": self.standard_error,
                "bound": self.bound, "covered": self.covered}


def tail_coverage(raw, ts, family: str, n: int, p: int, n_se: float = 3.0) -> list:
    """Check ``P(L~ >= t) <= 3 p^2 exp(-n g(t))`` against Monte Carlo frequencies.

    ``covered`` means the frequency minus ``n_se`` binomial standard errors
    does not exceed the bound.
    """
    raw = np.asarray(raw, dtype=float)
    out = []
    for t in ts:
        f = float(np.mean(raw >= t))
        se = math.sqrt(f * (1 - f) / raw.size)
        bound = 3.0 * p * p * math.exp(-n * g_of_t(family, t))
        out.append(TailCoverage(t=float(t), frequency=f, standard_error=se, bound=bound,
                                covered=f <= bound + n_se * se))
    return out

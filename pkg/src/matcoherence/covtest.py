"""Test that a Gaussian covariance is tau-banded (tau = 1: independence).

H0: sigma_ij = 0 for all |i - j| >= tau.  Reject when the squared banded
coherence reaches the size-alpha threshold from the limit law.

The limit theory needs ``log p = o(n^{1/3})``, ``tau = o(p^t)`` for every
``t > 0`` and that few coordinates are nearly collinear with another.  The
first two are screened heuristically (``log p > n^{1/3}``, ``tau >= p^{0.1}``)
and a small-n warning is raised below ``n = 30``.  The third depends on the
unknown true covariance and is not checked.  Warnings never block the test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .coherence import UNKNOWN, CoherenceResult, MeanMode, coherence, DEFAULT_BLOCK
from .errors import DomainError, EmptyPairError
from .evtlaw import EvtStatistic, test_threshold, transform_statistic
from .randmat import DataMatrix

SMALL_N = 30


@dataclass(frozen=True)
class TestConfig:
    tau: int = 1
    alpha: float = 0.05
    mean_mode: MeanMode = UNKNOWN

    __test__ = False

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class AssumptionWarning:
    code: str
    message: str

    def to_dict(self):
        return {"code": self.code, "message": self.message}


@dataclass(frozen=True)
class TestResult:
    statistic: CoherenceResult
    evt: EvtStatistic
    threshold_L2: float
    alpha: float
    reject: bool
    warnings: list = field(default_factory=list)

    __test__ = False

    def to_dict(self):
        return {
            "statistic": self.statistic.to_dict(),
            "evt": self.evt.to_dict(),
            "threshold_L2": self.threshold_L2,
            "alpha": self.alpha,
            "reject": self.reject,
            "warnings": [w.to_dict() for w in self.warnings],
        }


def assumption_warnings(n: int, p: int, tau: int, gaussian=None) -> list:
    """Advisory diagnostics for the asymptotic regime.

    ``gaussian`` is True/False when the data's ensemble is known, None when not.
    """
    out = []
    if math.log(p) > n ** (1.0 / 3.0):
        out.append(AssumptionWarning(
            "log_p_vs_n", f"log p = {math.log(p):.3g} exceeds n^(1/3) = {n ** (1 / 3):.3g}; "
                          "the limit law needs log p = o(n^(1/3))"))
    if tau >= p ** 0.1:
        out.append(AssumptionWarning(
            "tau_vs_p", f"tau = {tau} >= p^0.1 = {p ** 0.1:.3g}; the limit law needs tau = o(p^t) "
                        "for every t > 0"))
    if n < SMALL_N:
        out.append(AssumptionWarning("small_n", f"n = {n} < {SMALL_N}; asymptotic calibration is dubious"))
    if tau >= 2 and gaussian is False:
        out.append(AssumptionWarning(
            "non_gaussian", "the bandedness limit law (tau >= 2) is established for Gaussian rows only"))
    return out


def _is_gaussian(X):
    spec = getattr(X, "spec", None)
    if spec is None:
        return None
    return spec.family in ("gaussian", "scaled_gaussian", "banded_gaussian", "block_gaussian")


def run_test(X, cfg: TestConfig = TestConfig(), *, block_size: int = DEFAULT_BLOCK,
             threads: int = 1) -> TestResult:
    values = X.values if isinstance(X, DataMatrix) else X
    n, p = values.shape
    if p < 3:
        raise DomainError(f"the test needs p >= 3, got {p}")
    if cfg.tau >= p:
        raise EmptyPairError(p, cfg.tau)
    stat = coherence(X, cfg.tau, cfg.mean_mode, block_size=block_size, threads=threads)
    evt = transform_statistic(stat.value, n, p)
    thr = test_threshold(cfg.alpha, n, p)
    reject = stat.value ** 2 >= thr
    return TestResult(statistic=stat, evt=evt, threshold_L2=thr, alpha=cfg.alpha,
                      reject=bool(reject),
                      warnings=assumption_warnings(n, p, cfg.tau, _is_gaussian(X)))

"""Mutual-incoherence certification for compressed-sensing matrices.

A matrix whose known-mean coherence satisfies ``(2k - 1) L~ < 1`` recovers
every k-sparse signal exactly by l1 minimisation.  For i.i.d. ensembles the
tail bound

    P(L~ >= t) <= 3 p^2 exp(-n g(t)),   g(t) = min(I1(t/2), I2(1/2)),

turns into a lower bound on the probability that a k-sparse MIP holds.  I1
and I2 are the Cramer rate functions of ``xi * eta`` and ``xi ** 2`` for
i.i.d. standardised entries ``xi``, ``eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, special

from .coherence import MeanMode, coherence, DEFAULT_BLOCK
from .errors import DomainError, NumericError, ParameterError

INF = math.inf

LEGENDRE_TOL = 1e-12
LEGENDRE_MAX_ITER = 200


# ---------------------------------------------------------------------------
# cumulants and the Legendre transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cumulant:
    """Cumulant generating function ``log E exp(theta Z)`` on an open interval.

    ``d1``/``d2`` are the first two derivatives; when absent they are taken
    by central differences.
    """

    value: Callable[[float], float]
    domain: tuple = (-INF, INF)
    d1: Optional[Callable[[float], float]] = None
    d2: Optional[Callable[[float], float]] = None

    def _step(self, theta):
        h = 1e-5 * max(1.0, abs(theta))
        lo, hi = self.domain
        return min(h, 0.5 * (theta - lo), 0.5 * (hi - theta))

    def deriv(self, theta):
        if self.d1 is not None:
            return self.d1(theta)
        h = self._step(theta)
        return (self.value(theta + h) - self.value(theta - h)) / (2 * h)

    def deriv2(self, theta):
        if self.d2 is not None:
            return self.d2(theta)
        h = self._step(theta)
        return (self.deriv(theta + h) - self.deriv(theta - h)) / (2 * h)


def legendre(cum: Cumulant, x: float, tol: float = LEGENDRE_TOL,
             max_iter: int = LEGENDRE_MAX_ITER) -> float:
    """``sup_theta {theta x - cum(theta)}`` for a convex cumulant.

    The derivative ``x - cum'(theta)`` is decreasing, so the maximiser is
    bracketed by expanding away from 0 until it changes sign, then located by
    Newton steps that fall back to bisection whenever they leave the bracket.
    """
    slope0 = x - cum.deriv(0.0)
    if slope0 == 0:
        return 0.0
    direction = 1.0 if slope0 > 0 else -1.0
    edge = cum.domain[1] if direction > 0 else cum.domain[0]

    inner = 0.0
    outer = None
    for k in range(1, 4 * max_iter):
        if math.isfinite(edge):
            cand = edge * (1.0 - 2.0 ** -k)
            at_edge = abs(edge - cand) <= 4 * np.finfo(float).eps * max(1.0, abs(edge))
        else:
            cand = direction * 2.0 ** (k - 1)
            at_edge = abs(cand) > 1e12
        slope = x - cum.deriv(cand)
        if slope * direction <= 0:
            outer = cand
            break
        inner = cand
        if at_edge:
            # no interior maximiser: sup is the limit at the boundary
            if not math.isfinite(edge) and slope * direction > 1e-8:
                return INF
            return cand * x - cum.value(cand)
    if outer is None:
        raise NumericError(f"could not bracket the Legendre maximiser at x={x}")

    a, b = sorted((inner, outer))
    theta = 0.5 * (a + b)
    for _ in range(max_iter):
        g = x - cum.deriv(theta)
        if g == 0:
            break
        if g * direction > 0:
            a, b = (theta, b) if direction > 0 else (a, theta)
        else:
            a, b = (a, theta) if direction > 0 else (theta, b)
        curv = cum.deriv2(theta)
        new = theta + g / curv if curv > 0 else None
        if new is None or not (a < new < b):
            new = 0.5 * (a + b)
        done = abs(new - theta) <= tol * max(1.0, abs(theta)) or (b - a) <= tol * max(1.0, abs(theta))
        theta = new
        if done:
            break
    else:
        raise NumericError(f"Legendre transform did not converge in {max_iter} iterations at x={x}")
    return theta * x - cum.value(theta)


def _logcosh(t):
    a = abs(t)
    return a + math.log1p(math.exp(-2 * a)) - math.log(2.0)


def _ternary_product_value(t):
    a = 3 * abs(t)
    e = math.exp(-a)
    return a + math.log(8.0 / 9.0 * e + (1.0 + e * e) / 18.0)


def _ternary_product_d1(t):
    a = 3 * abs(t)
    e = math.exp(-a)
    return math.copysign(3 * (1 - e * e) / (16 * e + 1 + e * e), t)


def _ternary_product_d2(t):
    a = 3 * abs(t)
    e = math.exp(-a)
    sech = 2 * e / (1 + e * e)
    return 9 * (8 * sech + sech * sech) / (8 * sech + 1) ** 2


def _ternary_square_value(t):
    if t > 0:
        return 3 * t + math.log(2.0 / 3.0 * math.exp(-3 * t) + 1.0 / 3.0)
    return math.log(2.0 / 3.0 + math.exp(3 * t) / 3.0)


def _ternary_square_d1(t):
    if t > 0:
        return 3.0 / (1 + 2 * math.exp(-3 * t))
    e = math.exp(3 * t)
    return 3 * e / (2 + e)


def _ternary_square_d2(t):
    if t > 0:
        e = math.exp(-3 * t)
        return 18 * e / (1 + 2 * e) ** 2
    e = math.exp(3 * t)
    return 18 * e / (2 + e) ** 2


CUMULANTS = {
    # xi*eta for xi, eta iid N(0,1): E exp(theta xi eta) = (1 - theta^2)^(-1/2)
    "gaussian_product": Cumulant(
        value=lambda t: -0.5 * math.log1p(-t * t), domain=(-1.0, 1.0),
        d1=lambda t: t / (1 - t * t), d2=lambda t: (1 + t * t) / (1 - t * t) ** 2),
    "gaussian_square": Cumulant(
        value=lambda t: -0.5 * math.log1p(-2 * t), domain=(-INF, 0.5),
        d1=lambda t: 1 / (1 - 2 * t), d2=lambda t: 2 / (1 - 2 * t) ** 2),
    "rademacher_product": Cumulant(
        value=_logcosh, d1=math.tanh, d2=lambda t: 1 - math.tanh(t) ** 2),
    "rademacher_square": Cumulant(value=lambda t: t, d1=lambda t: 1.0, d2=lambda t: 0.0),
    # Z = xi*eta in {-3, 0, 3} with P(+-3) = 1/18
    "ternary_product": Cumulant(
        value=_ternary_product_value, d1=_ternary_product_d1, d2=_ternary_product_d2),
    # xi^2 in {0, 3} with P(3) = 1/3
    "ternary_square": Cumulant(
        value=_ternary_square_value, d1=_ternary_square_d1, d2=_ternary_square_d2),
}


# ---------------------------------------------------------------------------
# rate functions
# ---------------------------------------------------------------------------

def _i1_gaussian(x):
    s = math.sqrt(4 * x * x + 1)
    return (s - 1) / 2 - 0.5 * math.log((s + 1) / 2)


def _i2_gaussian(x):
    return (x - 1 - math.log(x)) / 2 if x > 0 else INF


def _i1_rademacher(x):
    a = abs(x)
    if a < 1:
        return a * math.atanh(a) + 0.5 * math.log1p(-a * a)
    return math.log(2.0) if a == 1 else INF


def _i2_rademacher(x):
    return 0.0 if x == 1 else INF


def _i2_ternary(x):
    if not (0 <= x <= 3):
        return INF
    return float(special.xlogy(x / 3, x) + special.xlogy(1 - x / 3, (3 - x) / 2))


@dataclass(frozen=True)
class RateFunction:
    """A Cramer rate function: closed form where one exists, otherwise the
    numeric Legendre transform of ``cumulant``.  Values are ``+inf`` outside
    the effective domain."""

    label: str
    cumulant: Optional[Cumulant] = None
    closed_form: Optional[Callable[[float], float]] = field(default=None, repr=False)

    def __call__(self, x: float) -> float:
        x = float(x)
        if self.closed_form is not None:
            return self.closed_form(x)
        return self.numeric(x)

    def numeric(self, x: float) -> float:
        if self.cumulant is None:
            raise ParameterError(f"rate function {self.label} has no cumulant")
        return legendre(self.cumulant, float(x))

    @classmethod
    def from_cumulant(cls, value, domain=(-INF, INF), d1=None, d2=None) -> "RateFunction":
        return cls(label="numeric", cumulant=Cumulant(value=value, domain=tuple(domain), d1=d1, d2=d2))


RATE_FUNCTIONS = {
    "I1_gaussian": RateFunction("I1_gaussian", CUMULANTS["gaussian_product"], _i1_gaussian),
    "I2_gaussian": RateFunction("I2_gaussian", CUMULANTS["gaussian_square"], _i2_gaussian),
    "I1_rademacher": RateFunction("I1_rademacher", CUMULANTS["rademacher_product"], _i1_rademacher),
    "I2_rademacher": RateFunction("I2_rademacher", CUMULANTS["rademacher_square"], _i2_rademacher),
    "I1_ternary": RateFunction("I1_ternary", CUMULANTS["ternary_product"]),
    "I2_ternary": RateFunction("I2_ternary", CUMULANTS["ternary_square"], _i2_ternary),
}

FAMILY_ALIASES = {"gaussian": "gaussian", "scaled_gaussian": "gaussian",
                  "rademacher": "rademacher", "sparse_ternary": "ternary", "ternary": "ternary"}

# g(t) >= t^2 / 12 holds for 0 < t <= this value
QUADRATIC_FLOOR_TMAX = {"gaussian": 1.0, "rademacher": 6.0 / 5.0, "ternary": 2.0 / 5.0}

# smallest k for which the simplified bound 1 - 3p^2 exp(-n / (12 (2k-1)^2)) is established
SIMPLIFIED_MIN_K = {"gaussian": 1, "rademacher": 1, "ternary": 2}


def _family(family: str) -> str:
    try:
        return FAMILY_ALIASES[family]
    except KeyError:
        raise ParameterError(f"unknown family {family!r}; expected one of {sorted(FAMILY_ALIASES)}") from None


def rate_eval(rf, x: float) -> float:
    if isinstance(rf, str):
        try:
            rf = RATE_FUNCTIONS[rf]
        except KeyError:
            raise ParameterError(f"unknown rate function {rf!r}") from None
    return rf(x)


def family_rates(family: str) -> tuple:
    fam = _family(family)
    return RATE_FUNCTIONS[f"I1_{fam}"], RATE_FUNCTIONS[f"I2_{fam}"]


def g_of_t(family: str, t: float) -> float:
    """``g(t) = min(I1(t/2), I2(1/2))`` for the family's standardised entries."""
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}")
    i1, i2 = family_rates(family)
    return min(i1(t / 2), i2(0.5))


def quadratic_floor_range(family: str) -> tuple:
    """Interval of t on which ``g(t) >= t^2 / 12`` is guaranteed."""
    return (0.0, QUADRATIC_FLOOR_TMAX[_family(family)])


# ---------------------------------------------------------------------------
# quadratic floor I(x) >= x^2/3
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteDistribution:
    values: tuple
    probs: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.probs, dtype=float)
        if v.shape != w.shape or np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
            raise ParameterError("probabilities must be nonnegative, match values, and sum to 1")
        if not math.isclose(float(w @ v), 0.0, abs_tol=1e-12) or not math.isclose(float(w @ v ** 2), 1.0, rel_tol=1e-12):
            raise ParameterError("Z must have mean 0 and variance 1")

    def weighted_moment(self, alpha: float) -> float:
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.probs, dtype=float)
        return float(np.sum(w * v * v * np.exp(alpha * np.abs(v))))


PRODUCT_DISTRIBUTIONS = {
    "rademacher": DiscreteDistribution((-1.0, 1.0), (0.5, 0.5)),
    "ternary": DiscreteDistribution((-3.0, 0.0, 3.0), (1 / 18, 8 / 9, 1 / 18)),
}

FLOOR_BOUND = 1.5
ALPHA_GRID_STEP = 1e-3


def gaussian_product_moment(alpha: float) -> float:
    """``E[Z^2 exp(alpha |Z|)]`` for Z = xi*eta, xi, eta iid N(0,1).

    Z has density ``K0(|z|) / pi``; finite for ``alpha < 1``.  The scaled
    ``k0e(z) = exp(z) K0(z)`` keeps the integrand finite in the far tail.
    """
    if alpha >= 1:
        return INF
    f = lambda z: z * z * math.exp((alpha - 1) * z) * special.k0e(z) / math.pi
    val, _ = integrate.quad(f, 0, INF, epsabs=1e-10, limit=200)
    return 2 * val


@dataclass(frozen=True)
class FloorCheck:
    alpha: float
    verified_range: tuple
    moment: float


def quadratic_floor_check(distribution) -> Optional[FloorCheck]:
    """Largest ``alpha`` with ``E[Z^2 exp(alpha |Z|)] <= 3/2``.

    Then ``I(x) >= x^2 / 3`` on ``[0, 3 alpha / 2]`` for the rate function I
    of Z.  Discrete distributions are solved exactly by root finding; the
    Gaussian product is scanned on a grid of step 1e-3 with quadrature.
    Returns None when no ``alpha > 0`` qualifies.
    """
    if isinstance(distribution, str):
        fam = _family(distribution)
        distribution = "gaussian" if fam == "gaussian" else PRODUCT_DISTRIBUTIONS[fam]
    if distribution == "gaussian":
        if gaussian_product_moment(ALPHA_GRID_STEP) > FLOOR_BOUND:
            return None
        k = 1
        while gaussian_product_moment((k + 1) * ALPHA_GRID_STEP) <= FLOOR_BOUND:
            k += 1
        alpha = k * ALPHA_GRID_STEP
        return FloorCheck(alpha, (0.0, 1.5 * alpha), gaussian_product_moment(alpha))

    f = lambda a: distribution.weighted_moment(a) - FLOOR_BOUND
    if f(0.0) >= 0:
        return None
    hi = 1.0
    while f(hi) < 0:
        hi *= 2
        if hi > 1e6:
            raise NumericError("weighted moment never reaches 3/2")
    alpha = optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return FloorCheck(alpha, (0.0, 1.5 * alpha), distribution.weighted_moment(alpha))


# ---------------------------------------------------------------------------
# certification and probability bounds
# ---------------------------------------------------------------------------

def certified_sparsity(L_tilde: float) -> Optional[int]:
    """Largest ``k >= 0`` with ``(2k - 1) L~ < 1``; None when ``L~ = 0`` (any k)."""
    if L_tilde < 0 or not math.isfinite(L_tilde):
        raise DomainError(f"coherence must be finite and nonnegative, got {L_tilde}")
    if L_tilde == 0:
        return None
    k = max(0, math.ceil((1 / L_tilde + 1) / 2) - 1)
    while k >= 1 and not (2 * k - 1) * L_tilde < 1:
        k -= 1
    while (2 * (k + 1) - 1) * L_tilde < 1:
        k += 1
    return k


def _clamped_bound(log_defect: float):
    defect = math.exp(log_defect) if log_defect < 700 else INF
    return max(0.0, 1.0 - defect), defect >= 1.0


@dataclass(frozen=True)
class MipBound:
    k: int
    g_bound: float
    g_vacuous: bool
    simplified_bound: Optional[float]
    simplified_vacuous: Optional[bool]
    valid: bool

    def to_dict(self):
        return {"k": self.k, "g_bound": self.g_bound, "g_vacuous": self.g_vacuous,
                "simplified_bound": self.simplified_bound,
                "simplified_vacuous": self.simplified_vacuous, "valid": self.valid}


def mip_prob_bound(family: str, n: int, p: int, k: int) -> MipBound:
    """Lower bounds on ``P((2k - 1) L~ < 1)``.

    ``g_bound = 1 - 3 p^2 exp(-n g(1/(2k-1)))`` always applies.  The
    simplified ``1 - 3 p^2 exp(-n / (12 (2k-1)^2))`` needs ``k >= 1`` for the
    Gaussian and Rademacher ensembles and ``k >= 2`` for the sparse ternary
    one; otherwise it is omitted and ``valid`` is False.  Both clamp at 0.
    """
    fam = _family(family)
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    t = 1.0 / (2 * k - 1)
    log3p2 = math.log(3.0) + 2 * math.log(p)
    g_bound, g_vac = _clamped_bound(log3p2 - n * g_of_t(fam, t))
    valid = k >= SIMPLIFIED_MIN_K[fam]
    s_bound = s_vac = None
    if valid:
        s_bound, s_vac = _clamped_bound(log3p2 - n * t * t / 12.0)
    return MipBound(k=k, g_bound=g_bound, g_vacuous=g_vac, simplified_bound=s_bound,
                    simplified_vacuous=s_vac, valid=valid)


@dataclass(frozen=True)
class MipReport:
    L_tilde: float
    argmax: tuple
    n: int
    p: int
    k_max: Optional[int]
    unbounded: bool
    k_cap: int
    family: Optional[str] = None
    table: list = field(default_factory=list)

    def to_dict(self):
        return {"L_tilde": self.L_tilde, "argmax": list(self.argmax), "n": self.n, "p": self.p,
                "k_max": self.k_max, "unbounded": self.unbounded, "k_cap": self.k_cap,
                "family": self.family, "table": [row.to_dict() for row in self.table]}


def mip_certify(X, mu=0.0, sigma=1.0, family: Optional[str] = None, k_values=None, *,
                block_size: int = DEFAULT_BLOCK, threads: int = 1) -> MipReport:
    """Certify the MIP sparsity level of a concrete matrix.

    ``L~`` uses the known column means ``mu`` (``sigma`` only rescales and
    cancels).  With a named ``family`` the report also carries the
    probability bounds for each ``k`` in ``k_values`` (default
    ``1..max(k_max, 1)``).  Orthogonal columns (``L~ = 0``) give
    ``unbounded=True`` and ``k_max=None``; ``k_cap = n`` is then the
    practical ceiling.
    """
    res = coherence(X, 1, MeanMode.known(mu, sigma), block_size=block_size, threads=threads)
    k_max = certified_sparsity(res.value)
    table = []
    if family is not None:
        if k_values is None:
            k_values = range(1, max(k_max or 1, 1) + 1)
        table = [mip_prob_bound(family, res.n, res.p, int(k)) for k in k_values]
    return MipReport(L_tilde=res.value, argmax=res.argmax, n=res.n, p=res.p, k_max=k_max,
                     unbounded=k_max is None, k_cap=res.n,
                     family=_family(family) if family else None, table=table)

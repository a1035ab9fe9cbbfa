import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from matcoherence.coherence import MeanMode, coherence
from matcoherence.csmip import (CUMULANTS, PRODUCT_DISTRIBUTIONS, QUADRATIC_FLOOR_TMAX, RATE_FUNCTIONS,
                                DiscreteDistribution, RateFunction, certified_sparsity, family_rates,
                                g_of_t, gaussian_product_moment, legendre, mip_certify, mip_prob_bound,
                                quadratic_floor_check, quadratic_floor_range)
from matcoherence.errors import DomainError, ParameterError
from matcoherence.randmat import EnsembleSpec, generate

XS = np.linspace(0.01, 1.5, 150)


def i1_ternary_oracle(x):
    """Closed form via the root u = exp(3 theta) of (3-x)u^2 - 16xu - (3+x) = 0."""
    if x == 0:
        return 0.0
    u = (16 * x + math.sqrt(256 * x * x + 4 * (9 - x * x))) / (2 * (3 - x))
    theta = math.log(u) / 3
    return theta * x - math.log(8 / 9 + (u + 1 / u) / 18)


class TestRateFunctions:
    @pytest.mark.parametrize("name", ["I1_gaussian", "I2_gaussian"])
    def test_numeric_matches_gaussian_closed_form(self, name):
        rf = RATE_FUNCTIONS[name]
        for x in XS:
            assert rf.numeric(x) == pytest.approx(rf(x), abs=1e-8)

    def test_numeric_matches_rademacher_product(self):
        rf = RATE_FUNCTIONS["I1_rademacher"]
        for x in np.linspace(-0.95, 0.95, 39):
            assert rf.numeric(x) == pytest.approx(rf(x), abs=1e-8)

    def test_numeric_matches_ternary_square(self):
        rf = RATE_FUNCTIONS["I2_ternary"]
        for x in np.linspace(0.05, 2.9, 40):
            assert rf.numeric(x) == pytest.approx(rf(x), abs=1e-8)

    def test_ternary_product_against_root_oracle(self):
        rf = RATE_FUNCTIONS["I1_ternary"]
        for x in np.linspace(0.0, 2.9, 59):
            assert rf(x) == pytest.approx(i1_ternary_oracle(x), abs=1e-9)
            assert rf(-x) == pytest.approx(rf(x), abs=1e-12)

    def test_frozen_values(self):
        i2g = RATE_FUNCTIONS["I2_gaussian"](0.5)
        assert i2g == pytest.approx(0.0965736, abs=1e-6)
        assert i2g == pytest.approx((math.log(2) - 0.5) / 2, abs=1e-15)
        assert i2g > 1 / 12
        assert RATE_FUNCTIONS["I1_gaussian"](0.5) == pytest.approx(0.1129935780, abs=1e-9)
        i2t = RATE_FUNCTIONS["I2_ternary"](0.5)
        assert i2t == pytest.approx(0.0704, abs=5e-4)
        assert i2t == pytest.approx(math.log(0.5) / 6 + 5 / 6 * math.log(1.25), abs=1e-14)

    @pytest.mark.parametrize("name", sorted(RATE_FUNCTIONS))
    def test_zero_at_mean_and_convex(self, name):
        rf = RATE_FUNCTIONS[name]
        mean = 1.0 if name.startswith("I2") else 0.0
        assert rf(mean) == pytest.approx(0.0, abs=1e-12)
        if name == "I2_rademacher":
            assert rf(0.9) == math.inf
            return
        xs = mean + np.linspace(-0.8, 0.8, 33) * (0.9 if name.startswith("I2") else 1.0)
        vals = np.array([rf(x) for x in xs])
        assert np.all(vals >= -1e-14)
        assert np.all(np.diff(vals, 2) >= -1e-9)

    def test_outside_domain_is_infinite(self):
        assert RATE_FUNCTIONS["I1_rademacher"](1.5) == math.inf
        assert RATE_FUNCTIONS["I2_gaussian"](-1.0) == math.inf
        assert RATE_FUNCTIONS["I2_ternary"](3.5) == math.inf
        assert RATE_FUNCTIONS["I1_ternary"](3.2) == math.inf
        # approaching the support edge the rate climbs to -log P(Z = 3) = log 18
        assert RATE_FUNCTIONS["I1_ternary"](2.9999) == pytest.approx(math.log(18), abs=1e-3)

    def test_from_cumulant(self):
        # Poisson(1) centred: Lambda = e^t - 1 - t, I(x) = (1+x) log(1+x) - x
        rf = RateFunction.from_cumulant(lambda t: math.expm1(t) - t)
        for x in (-0.5, 0.3, 2.0):
            assert rf(x) == pytest.approx((1 + x) * math.log1p(x) - x, abs=1e-9)

    def test_legendre_direct(self):
        cum = CUMULANTS["gaussian_square"]
        assert legendre(cum, 2.0) == pytest.approx((1 - math.log(2)) / 2, abs=1e-12)


class TestG:
    def test_gaussian_values(self):
        assert g_of_t("gaussian", 1.0) == pytest.approx(0.0965736, abs=1e-6)
        assert g_of_t("scaled_gaussian", 0.4) == pytest.approx(RATE_FUNCTIONS["I1_gaussian"](0.2))

    def test_domain(self):
        with pytest.raises(DomainError):
            g_of_t("gaussian", 0.0)
        with pytest.raises(ParameterError):
            family_rates("cauchy")

    @pytest.mark.parametrize("family", ["gaussian", "rademacher", "sparse_ternary"])
    def test_quadratic_floor_on_range(self, family):
        lo, hi = quadratic_floor_range(family)
        assert hi == QUADRATIC_FLOOR_TMAX[family.replace("sparse_", "")]
        for t in np.linspace(hi / 100, hi, 100):
            assert g_of_t(family, t) >= t * t / 12


class TestQuadraticFloor:
    def test_rademacher_exact(self):
        fc = quadratic_floor_check("rademacher")
        assert fc.alpha == pytest.approx(math.log(1.5), abs=1e-14)
        assert fc.moment == pytest.approx(1.5, abs=1e-12)

    def test_ternary_exact(self):
        fc = quadratic_floor_check("sparse_ternary")
        assert fc.alpha == pytest.approx(math.log(1.5) / 3, abs=1e-14)

    def test_gaussian_moment_against_dblquad(self):
        a = 0.3
        f = lambda y, x: (x * y) ** 2 * math.exp(a * abs(x * y)) * math.exp(-(x * x + y * y) / 2) / (2 * math.pi)
        want = 4 * integrate.dblquad(f, 0, 12, 0, 12, epsabs=1e-11)[0]
        assert gaussian_product_moment(a) == pytest.approx(want, rel=1e-7)
        assert gaussian_product_moment(0.0) == pytest.approx(1.0, abs=1e-9)

    def test_gaussian_grid_alpha(self):
        fc = quadratic_floor_check("gaussian")
        assert fc.moment <= 1.5 < gaussian_product_moment(fc.alpha + 1e-3)
        assert 0 < fc.alpha < 1

    @pytest.mark.parametrize("family,rate", [("gaussian", "I1_gaussian"), ("rademacher", "I1_rademacher"),
                                             ("ternary", "I1_ternary")])
    def test_floor_holds_on_verified_range(self, family, rate):
        fc = quadratic_floor_check(family)
        rf = RATE_FUNCTIONS[rate]
        for x in np.linspace(0, fc.verified_range[1], 80):
            assert rf(x) >= x * x / 3 - 1e-14

    def test_custom_distribution(self):
        d = DiscreteDistribution((-2.0, 0.0, 2.0), (0.125, 0.75, 0.125))
        fc = quadratic_floor_check(d)
        assert d.weighted_moment(fc.alpha) == pytest.approx(1.5, abs=1e-12)
        # 4 exp(2a)/4 = 1.5
        assert fc.alpha == pytest.approx(math.log(1.5) / 2, abs=1e-14)

    def test_bad_distribution(self):
        with pytest.raises(ParameterError):
            DiscreteDistribution((0.0, 1.0), (0.5, 0.5))

    def test_known_tables(self):
        assert set(PRODUCT_DISTRIBUTIONS) == {"rademacher", "ternary"}


class TestCertification:
    @pytest.mark.parametrize("L,k", [(0.1, 5), (1.0, 0), (1 / 3, 1), (0.99, 1), (0.2, 2), (0.05, 10)])
    def test_examples(self, L, k):
        assert certified_sparsity(L) == k

    def test_zero_is_unbounded(self):
        assert certified_sparsity(0.0) is None

    @given(st.floats(1e-6, 1.0))
    @settings(max_examples=300)
    def test_is_largest(self, L):
        k = certified_sparsity(L)
        assert k == 0 or (2 * k - 1) * L < 1
        assert not (2 * (k + 1) - 1) * L < 1

    def test_domain(self):
        with pytest.raises(DomainError):
            certified_sparsity(-0.1)


class TestBounds:
    def test_gaussian_example(self):
        b = mip_prob_bound("gaussian", 10_000, 100, 1)
        want = 1 - 3e4 * math.exp(-1e4 * 0.0965735903)
        assert b.g_bound == pytest.approx(want, abs=1e-12)
        assert b.simplified_bound == pytest.approx(1 - 3e4 * math.exp(-1e4 / 12), abs=1e-12)
        assert b.valid and not b.g_vacuous

    def test_vacuous_clamps(self):
        b = mip_prob_bound("gaussian", 50, 1000, 3)
        assert b.g_bound == 0.0 and b.g_vacuous
        assert b.simplified_bound == 0.0 and b.simplified_vacuous

    def test_ternary_simplified_needs_k2(self):
        b1 = mip_prob_bound("sparse_ternary", 10 ** 5, 10, 1)
        assert not b1.valid and b1.simplified_bound is None
        b2 = mip_prob_bound("sparse_ternary", 10 ** 5, 10, 2)
        assert b2.valid and b2.simplified_bound is not None

    def test_g_bound_at_least_simplified_in_floor_range(self):
        for fam, k in (("gaussian", 1), ("rademacher", 1), ("gaussian", 4), ("sparse_ternary", 3)):
            b = mip_prob_bound(fam, 5000, 50, k)
            assert b.g_bound >= b.simplified_bound

    def test_domain(self):
        with pytest.raises(DomainError):
            mip_prob_bound("gaussian", 1, 10, 1)
        with pytest.raises(DomainError):
            mip_prob_bound("gaussian", 10, 10, 0)


class TestCertify:
    def test_orthogonal_unbounded(self):
        rep = mip_certify(np.eye(4))
        assert rep.unbounded and rep.k_max is None and rep.k_cap == 4

    def test_matches_coherence(self):
        X = generate(EnsembleSpec("scaled_gaussian", n=400, p=60), 3)
        rep = mip_certify(X, family="scaled_gaussian")
        L = coherence(X, 1, MeanMode.known(0.0)).value
        assert rep.L_tilde == L
        assert rep.k_max == certified_sparsity(L)
        assert [row.k for row in rep.table] == list(range(1, max(rep.k_max, 1) + 1))
        assert rep.to_dict()["family"] == "gaussian"

    def test_sigma_cancels(self):
        X = generate(EnsembleSpec("rademacher", n=64, p=30), 1)
        assert mip_certify(X, 0.0, 5.0).L_tilde == mip_certify(X, 0.0, 1.0).L_tilde

    def test_explicit_k_values(self):
        X = generate(EnsembleSpec("rademacher", n=64, p=30), 1)
        rep = mip_certify(X, family="rademacher", k_values=[1, 2, 3])
        assert [r.k for r in rep.table] == [1, 2, 3]

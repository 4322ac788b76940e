import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsys.numerics import (
    DEFAULT_TOL,
    DomainError,
    Grid1D,
    NumericError,
    Tolerance,
    beta_cdf,
    bisect_monotone,
    composite_grid,
    integrate_1d,
    integrate_1d_with_error,
    integrate_2d,
    integrate_2d_with_error,
    log_gamma,
    lower_gamma_regularized,
    upper_gamma_regularized,
)


def simpson(f, lo, hi, n=40001):
    """Brute-force oracle, independent of the composite-GL machinery."""
    xs = np.linspace(lo, hi, n)
    ys = f(xs)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((hi - lo) / (n - 1) / 3.0 * np.dot(w, ys))


class TestLogGamma:
    def test_known_values(self):
        assert log_gamma(1.0) == 0.0
        assert math.isclose(log_gamma(5.0), math.log(24.0), rel_tol=1e-14)
        assert math.isclose(log_gamma(0.5), 0.5 * math.log(math.pi), rel_tol=1e-14)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            log_gamma(bad)

    @given(st.floats(min_value=1e-6, max_value=1e6))
    def test_recurrence(self, x):
        lhs = log_gamma(x + 1.0)
        rhs = log_gamma(x) + math.log(x)
        assert math.isclose(lhs, rhs, rel_tol=1e-10, abs_tol=1e-10)


class TestIncompleteGamma:
    def test_exponential_tail(self):
        for x in [0.0, 0.5, 2.0, 10.0]:
            assert math.isclose(upper_gamma_regularized(1.0, x), math.exp(-x),
                                rel_tol=1e-13)

    def test_full_mass_at_zero(self):
        for r in [0.3, 1.0, 7.5]:
            assert upper_gamma_regularized(r, 0.0) == 1.0

    def test_against_quadrature_oracle(self):
        # Q(2, 1) = int_1^inf t e^-t dt / Gamma(2); truncate where the tail
        # is below 1e-18.
        oracle = simpson(lambda t: t * np.exp(-t), 1.0, 60.0, 400001)
        assert math.isclose(upper_gamma_regularized(2.0, 1.0), oracle, rel_tol=1e-10)

    def test_monotone_in_x(self):
        vals = [upper_gamma_regularized(2.5, x) for x in np.linspace(0, 20, 50)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 7.3])
    @pytest.mark.parametrize("x", [0.1, 1.0, 10.0])
    def test_complement(self, r, x):
        total = upper_gamma_regularized(r, x) + lower_gamma_regularized(r, x)
        assert abs(total - 1.0) < 1e-12

    def test_domain(self):
        with pytest.raises(DomainError):
            upper_gamma_regularized(0.0, 1.0)
        with pytest.raises(DomainError):
            upper_gamma_regularized(1.0, -0.5)


class TestBetaCdf:
    def test_uniform_case(self):
        assert math.isclose(beta_cdf(1.0, 1.0, 0.3), 0.3, rel_tol=1e-14)

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0, 9.0])
    def test_symmetry_at_half(self, a):
        assert math.isclose(beta_cdf(a, a, 0.5), 0.5, rel_tol=1e-13)

    def test_against_quadrature_oracle(self):
        # Beta(2, 3) density is 12 x (1-x)^2
        oracle = simpson(lambda x: 12.0 * x * (1.0 - x) ** 2, 0.0, 0.4, 40001)
        assert math.isclose(beta_cdf(2.0, 3.0, 0.4), oracle, rel_tol=1e-10)

    def test_endpoints(self):
        assert beta_cdf(2.0, 5.0, 0.0) == 0.0
        assert beta_cdf(2.0, 5.0, 1.0) == 1.0

    # x away from 0 and 1: computing 1-x in floats near the endpoints loses
    # bits that the singular density then amplifies past any fixed tolerance.
    @given(st.floats(min_value=0.1, max_value=20.0),
           st.floats(min_value=0.1, max_value=20.0),
           st.floats(min_value=0.001, max_value=0.999))
    def test_complement_identity(self, a, b, x):
        assert abs(beta_cdf(a, b, x) + beta_cdf(b, a, 1.0 - x) - 1.0) < 1e-12

    def test_domain(self):
        with pytest.raises(DomainError):
            beta_cdf(2.0, 3.0, 1.5)
        with pytest.raises(DomainError):
            beta_cdf(-1.0, 3.0, 0.5)


class TestIntegrate1D:
    def test_constant(self):
        assert math.isclose(integrate_1d(lambda x: np.full_like(x, 2.5), 0, 1),
                            2.5, rel_tol=1e-13)

    def test_gamma_integrand(self):
        val = integrate_1d(lambda x: x ** 2 * np.exp(-x), 0.0, 50.0)
        assert math.isclose(val, 2.0, rel_tol=1e-8)

    def test_beta22_density_normalizes(self):
        val = integrate_1d(lambda x: 6.0 * x * (1.0 - x), 0.0, 1.0)
        assert math.isclose(val, 1.0, rel_tol=1e-10)

    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (0.5, 2.0), (2.0, 2.0), (5.0, 1.5)])
    def test_beta_density_mass(self, a, b):
        logc = log_gamma(a + b) - log_gamma(a) - log_gamma(b)

        def density(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(divide="ignore"):
                return np.exp(logc + (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x))

        val = integrate_1d(density, 0.0, 1.0, singular_lo=a < 1, singular_hi=b < 1)
        assert math.isclose(val, 1.0, rel_tol=1e-8)

    @pytest.mark.parametrize("r,lam", [(0.5, 1.0), (1.0, 2.0), (30.0, 300.0)])
    def test_gamma_density_mass(self, r, lam):
        def density(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(divide="ignore"):
                return np.exp(r * math.log(lam) - log_gamma(r)
                              + (r - 1.0) * np.log(x) - lam * x)

        val = integrate_1d(density, 0.0, math.inf, singular_lo=r < 1)
        assert math.isclose(val, 1.0, rel_tol=1e-8)

    def test_sqrt_singularity(self):
        val = integrate_1d(lambda x: 1.0 / np.sqrt(x), 0.0, 1.0, singular_lo=True)
        assert math.isclose(val, 2.0, rel_tol=1e-10)

    def test_breakpoints_help_kinked_integrands(self):
        val = integrate_1d(lambda x: np.abs(x - 0.3), 0.0, 1.0, breakpoints=(0.3,))
        assert math.isclose(val, 0.3 ** 2 / 2 + 0.7 ** 2 / 2, rel_tol=1e-12)

    def test_nonconvergence_carries_best_estimate(self):
        rng = np.random.default_rng(0)

        def noisy(x):
            return rng.standard_normal(np.asarray(x).shape)

        with pytest.raises(NumericError) as err:
            integrate_1d(noisy, 0.0, 1.0, Tolerance(abs=1e-14, rel=0.0, max_iter=3))
        assert err.value.best_estimate is not None
        assert err.value.error_bound is not None

    def test_invalid_interval(self):
        with pytest.raises(DomainError):
            integrate_1d(lambda x: x, 1.0, 0.0)


class TestIntegrate2D:
    def test_constant(self):
        assert math.isclose(integrate_2d(lambda x, y: np.ones(np.broadcast(x, y).shape)),
                            1.0, rel_tol=1e-12)

    def test_abs_difference(self):
        val = integrate_2d(lambda x, y: np.abs(x - y),
                           Tolerance(abs=1e-10, rel=1e-9, max_iter=12))
        assert math.isclose(val, 1.0 / 3.0, rel_tol=1e-8)

    def test_separable_matches_iterated_1d(self):
        f = lambda t: np.exp(np.asarray(t, dtype=float)) * np.sin(3.0 * np.asarray(t))
        g = lambda t: 1.0 / (1.0 + np.asarray(t, dtype=float) ** 2)
        prod = integrate_1d(f, 0, 1) * integrate_1d(g, 0, 1)
        val = integrate_2d(lambda x, y: f(x) * g(y))
        assert math.isclose(val, prod, rel_tol=1e-8)

    def test_pair_density_mass(self):
        # the mass identity for the fixed-size process, n=10, r=2
        from qsys.processes import DensityEvaluator, SystBinomialSpec
        ev = DensityEvaluator(SystBinomialSpec(n=10, r=2.0))
        val = integrate_2d(lambda x, y: ev.pair_density(np.abs(x - y)),
                           Tolerance(abs=1e-9, rel=2e-7, max_iter=12))
        assert abs(val - 90.0) / 90.0 < 1e-6

    def test_diagonal_strip_mode_handles_singular_kernel(self):
        from qsys.processes import DensityEvaluator, SystBinomialSpec
        ev = DensityEvaluator(SystBinomialSpec(n=10, r=0.5))
        val, err = integrate_2d_with_error(
            lambda x, y: ev.pair_density(np.abs(x - y)),
            Tolerance(abs=1e-8, rel=1e-7, max_iter=14), diagonal_strip=True)
        assert abs(val - 90.0) / 90.0 < 1e-6

    def test_split_guard(self):
        def nasty(x, y):
            return np.sin(500.0 * x * y) * np.sin(377.0 * (x - y))

        with pytest.raises(NumericError):
            integrate_2d(nasty, Tolerance(abs=1e-15, rel=1e-15, max_iter=12),
                         max_splits=20)


class TestBisect:
    def test_identity(self):
        x = bisect_monotone(lambda t: t, 0.7, 0.0, 1.0, Tolerance(abs=1e-12, rel=0, max_iter=200))
        assert abs(x - 0.7) < 1e-10

    def test_square(self):
        x = bisect_monotone(lambda t: t * t, 0.25, 0.0, 1.0, Tolerance(abs=1e-12, rel=0, max_iter=200))
        assert abs(x - 0.5) < 1e-10

    def test_beta_cdf_median(self):
        x = bisect_monotone(lambda t: beta_cdf(2.0, 2.0, t), 0.5, 0.0, 1.0,
                            Tolerance(abs=1e-12, rel=0, max_iter=200))
        assert abs(x - 0.5) < 1e-9  # symmetric density has median 1/2

    def test_target_outside_image(self):
        with pytest.raises(DomainError):
            bisect_monotone(lambda t: t, 2.0, 0.0, 1.0)


class TestGridAndTolerance:
    def test_gl_weights_sum_to_length(self):
        grid = composite_grid(np.linspace(0.25, 0.75, 9), order=12)
        assert abs(grid.weights.sum() - 0.5) < 1e-12 * 0.5

    def test_grid_validation(self):
        with pytest.raises(DomainError):
            Grid1D(nodes=np.array([0.0, 0.0, 1.0]), weights=np.ones(3))
        with pytest.raises(DomainError):
            Grid1D(nodes=np.array([0.0, 1.0]), weights=np.array([1.0, -1.0]))

    def test_tolerance_validation(self):
        with pytest.raises(DomainError):
            Tolerance(abs=0.0, rel=0.0)
        with pytest.raises(DomainError):
            Tolerance(abs=1e-9, rel=1e-9, max_iter=0)
        assert DEFAULT_TOL.met(1e-12, 1.0)

"""Horvitz-Thompson mean estimation and variance machinery on (0, 1).

Implements the continuous Horvitz-Thompson estimator, its two unbiased
variance estimators (the direct one and the Sen-Yates-Grundy pairwise form
for fixed-size processes), quadrature oracles for the true design variance,
normal-approximation confidence intervals, the endpoint-folding transform
and a numerical check of the stationary renewal identity.

The population interval is (0, 1) throughout, so the |domain| factors of the
general theory are all 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .constants import INTEREST_FUNCTION_MEAN
from .distributions import GammaParams, forward_gamma_pdf
from .numerics import (
    DomainError,
    NumericError,
    Tolerance,
    integrate_1d_with_error,
    leggauss_unit,
    lower_gamma_regularized,
    normal_quantile,
)
from .processes import (
    DensityEvaluator,
    OrderedSample,
    ProcessSpec,
    SystematicSpec,
    SystBinomialSpec,
    SystPoissonSpec,
    first_order_many,
)

VARIANCE_QUADRATURE_TOL = Tolerance(abs=1e-10, rel=1e-7, max_iter=10)


@dataclass(frozen=True)
class IntegrableFunction:
    """An interest function on (0, 1).

    `fn` must accept ndarray input. `known_mean` short-circuits quadrature
    when the mean is already known to high precision; `breakpoints` mark
    interior kinks so quadrature panels can be aligned with them.
    """

    fn: Callable
    known_mean: float | None = None
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return self.fn(x)


def oscillatory_interest_function(x):
    """Smooth but strongly oscillating function with unequal endpoint values."""
    x = np.asarray(x, dtype=float)
    return (100.0 * np.sin(3.0 * x ** 2 / (2.0 * x ** 2 + 1.0))
            * np.exp(-(np.sin(4.0 * np.pi * x) ** 2)))


INTEREST_FUNCTION = IntegrableFunction(
    fn=oscillatory_interest_function,
    known_mean=INTEREST_FUNCTION_MEAN,
)


def fold_endpoints(f: IntegrableFunction) -> IntegrableFunction:
    """Fold f around its right endpoint: traverse forward then backward.

    The folded function g(x) equals f(2x) on [0, 1/2] and f(2 - 2x) on
    (1/2, 1]. It satisfies g(0) = g(1) = f(0) and preserves the integral,
    removing the endpoint mismatch that destabilizes pairwise variance
    estimators on the circle.
    """

    def g(x, _f=f.fn):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.5, _f(np.minimum(2.0 * x, 1.0)),
                        _f(np.maximum(2.0 - 2.0 * x, 0.0)))

    breaks = {0.5}
    for b in f.breakpoints:
        breaks.add(b / 2.0)
        breaks.add(1.0 - b / 2.0)
    return IntegrableFunction(fn=g, known_mean=f.known_mean,
                              breakpoints=tuple(sorted(breaks)))


FOLDED_INTEREST_FUNCTION = fold_endpoints(INTEREST_FUNCTION)


@dataclass(frozen=True)
class EstimateReport:
    """One replicate's estimates. The CI is present iff the selected
    variance estimate (SYG when available, else the direct one) is >= 0."""

    mean_hat: float
    var_hat_cordy: float
    var_hat_syg: float | None
    ci_lo: float | None
    ci_hi: float | None
    sample_size: int

    @property
    def var_hat_selected(self) -> float:
        return self.var_hat_cordy if self.var_hat_syg is None else self.var_hat_syg


@dataclass(frozen=True)
class TrueVarianceReport:
    value: float
    quadrature_error_bound: float
    formula_used: str  # "syg-form" | "ht-form"


def ht_mean(sample: OrderedSample, z: IntegrableFunction, ev) -> float:
    """Continuous Horvitz-Thompson estimator of the mean of z.

    Empty samples contribute the empty sum, i.e. 0.
    """
    pts = sample.points
    if pts.size == 0:
        return 0.0
    pis = first_order_many(ev, pts)
    if np.any(pis <= 0.0):
        raise DomainError("first-order inclusion density vanishes at a sample point")
    return float(np.sum(np.asarray(z(pts), dtype=float) / pis))


def var_hat_cordy(sample: OrderedSample, z: IntegrableFunction, ev) -> float:
    """Unbiased variance estimator valid for any process with positive
    joint density: sum of squared weighted values plus a pairwise
    correction term."""
    pts = sample.points
    k = pts.size
    if k == 0:
        return 0.0
    pis = first_order_many(ev, pts)
    zs = np.asarray(z(pts), dtype=float)
    first = float(np.sum((zs / pis) ** 2))
    if k < 2:
        return first
    pair = ev.second_order_matrix(pts)
    off = ~np.eye(k, dtype=bool)
    pvals = pair[off]
    if np.any(~np.isfinite(pvals)) or np.any(pvals <= 0.0):
        raise DomainError("joint inclusion density must be positive at all selected pairs")
    zz = np.outer(zs, zs)[off]
    pp = np.outer(pis, pis)[off]
    second = float(np.sum(zz * (pvals - pp) / (pp * pvals)))
    return first + second


def var_hat_syg(sample: OrderedSample, z: IntegrableFunction, ev) -> float:
    """Sen-Yates-Grundy variance estimator (fixed-size processes only).

    May be negative when the joint density exceeds the product of the
    marginal densities somewhere; negative values are reported as-is.
    """
    if not ev.is_fixed_size:
        raise DomainError("the SYG estimator requires a fixed-size process")
    pts = sample.points
    k = pts.size
    if k < 2:
        return 0.0
    pis = first_order_many(ev, pts)
    zs = np.asarray(z(pts), dtype=float)
    ratios = zs / pis
    pair = ev.second_order_matrix(pts)
    off = ~np.eye(k, dtype=bool)
    pvals = pair[off]
    if np.any(~np.isfinite(pvals)) or np.any(pvals <= 0.0):
        raise DomainError("joint inclusion density must be positive at all selected pairs")
    contrast = (ratios[:, None] - ratios[None, :])[off]
    pp = np.outer(pis, pis)[off]
    return float(0.5 * np.sum(contrast ** 2 * (pp - pvals) / pvals))


def confidence_interval(report: EstimateReport, level: float
                        ) -> tuple[float, float] | None:
    """Normal-approximation CI from the report's selected variance estimate.

    Absent (None) when the variance estimate is negative; a zero estimate
    yields the degenerate interval [mean, mean].
    """
    if not (0.0 < level < 1.0):
        raise DomainError(f"level must lie in (0, 1), got {level!r}")
    v = report.var_hat_selected
    if v < 0.0:
        return None
    half = normal_quantile(0.5 * (1.0 + level)) * math.sqrt(v)
    return (report.mean_hat - half, report.mean_hat + half)


def estimate_report(sample: OrderedSample, z: IntegrableFunction, ev,
                    ci_level: float = 0.95) -> EstimateReport:
    """Assemble mean and variance estimates plus the CI for one sample."""
    mean = ht_mean(sample, z, ev)
    if sample.size == 0:
        # Empty-sample convention: zero estimates, no interval.
        return EstimateReport(mean_hat=0.0, var_hat_cordy=0.0,
                              var_hat_syg=0.0 if ev.is_fixed_size else None,
                              ci_lo=None, ci_hi=None, sample_size=0)
    cordy = var_hat_cordy(sample, z, ev)
    syg = var_hat_syg(sample, z, ev) if ev.is_fixed_size else None
    partial = EstimateReport(mean_hat=mean, var_hat_cordy=cordy,
                             var_hat_syg=syg, ci_lo=None, ci_hi=None,
                             sample_size=sample.size)
    ci = confidence_interval(partial, ci_level)
    if ci is None:
        return partial
    return EstimateReport(mean_hat=mean, var_hat_cordy=cordy, var_hat_syg=syg,
                          ci_lo=ci[0], ci_hi=ci[1], sample_size=sample.size)


# ---------------------------------------------------------------------------
# True design variance by quadrature
# ---------------------------------------------------------------------------

def _segment_grid(lo: float, hi: float, interior: list[float],
                  panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite GL nodes/weights on [lo, hi] split at interior kinks."""
    cuts = [lo] + sorted(b for b in interior if lo < b < hi) + [hi]
    gx, gw = leggauss_unit(order)
    nodes = []
    weights = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        width = b - a
        k = max(1, int(math.ceil(panels * width / (hi - lo))))
        edges = np.linspace(a, b, k + 1)
        w = np.diff(edges)
        nodes.append((edges[:-1, None] + w[:, None] * gx[None, :]).ravel())
        weights.append((w[:, None] * gw[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def _mean_square_gap(z: IntegrableFunction, h: float,
                     panels: int = 24, order: int = 20) -> float:
    """S(h) = integral over t in (0, 1-h) of [z(t+h) - z(t)]^2."""
    if h >= 1.0:
        return 0.0
    kinks = list(z.breakpoints) + [b - h for b in z.breakpoints]
    nodes, weights = _segment_grid(0.0, 1.0 - h, kinks, panels, order)
    vals = np.asarray(z(nodes + h), dtype=float) - np.asarray(z(nodes), dtype=float)
    return float(np.dot(weights, vals ** 2))


def _cross_product_gap(z: IntegrableFunction, h: float,
                       panels: int = 24, order: int = 20) -> float:
    """C(h) = integral over t in (0, 1-h) of z(t) z(t+h)."""
    if h >= 1.0:
        return 0.0
    kinks = list(z.breakpoints) + [b - h for b in z.breakpoints]
    nodes, weights = _segment_grid(0.0, 1.0 - h, kinks, panels, order)
    vals = np.asarray(z(nodes), dtype=float) * np.asarray(z(nodes + h), dtype=float)
    return float(np.dot(weights, vals))


def function_mean(z: IntegrableFunction,
                  tol: Tolerance = Tolerance(abs=1e-12, rel=1e-10, max_iter=14)
                  ) -> float:
    """Mean of z over (0,1): the known value if frozen, else by quadrature."""
    if z.known_mean is not None:
        return z.known_mean
    value, _ = integrate_1d_with_error(
        lambda x: np.asarray(z(x), dtype=float), 0.0, 1.0, tol,
        breakpoints=z.breakpoints)
    return value


def true_variance(spec: ProcessSpec, z: IntegrableFunction,
                  tol: Tolerance = VARIANCE_QUADRATURE_TOL,
                  form: str | None = None) -> TrueVarianceReport:
    """Design variance of the HT mean estimator, by quadrature.

    Both stationary variance formulas reduce to iterated 1D integrals over
    the gap h = |x - y| because every supported joint density depends on the
    pair only through the gap. The pairwise (SYG) form is used for
    fixed-size processes, the direct form otherwise; `form` overrides
    ("syg-form" / "ht-form") for cross-checking.
    """
    if isinstance(spec, SystematicSpec):
        raise DomainError("the systematic process has no second-order density; "
                          "its design variance is not available by this formula")
    ev = DensityEvaluator(spec)
    if form is None:
        form = "syg-form" if ev.is_fixed_size else "ht-form"
    if form not in ("syg-form", "ht-form"):
        raise DomainError(f"unknown variance form {form!r}")
    if form == "syg-form" and not ev.is_fixed_size:
        raise DomainError("the SYG variance form requires a fixed-size process")
    d = ev.first_order_value
    r_param = getattr(spec, "r", 1.0)
    singular = r_param < 1.0

    if form == "syg-form":
        def outer(harr):
            harr = np.asarray(harr, dtype=float)
            kernel = d * d - ev.pair_density(harr)
            s_vals = np.array([_mean_square_gap(z, float(hh)) for hh in harr.ravel()])
            return kernel * s_vals.reshape(harr.shape)

        val, err = integrate_1d_with_error(outer, 0.0, 1.0, tol,
                                           singular_lo=singular,
                                           initial_panels=8)
        return TrueVarianceReport(value=val / (d * d),
                                  quadrature_error_bound=err / (d * d),
                                  formula_used="syg-form")

    z_sq, z_sq_err = integrate_1d_with_error(
        lambda x: np.asarray(z(x), dtype=float) ** 2, 0.0, 1.0, tol,
        breakpoints=z.breakpoints)

    def outer(harr):
        harr = np.asarray(harr, dtype=float)
        kernel = ev.pair_density(harr) - d * d
        c_vals = np.array([_cross_product_gap(z, float(hh)) for hh in harr.ravel()])
        return kernel * c_vals.reshape(harr.shape)

    val, err = integrate_1d_with_error(outer, 0.0, 1.0, tol,
                                       singular_lo=singular, initial_panels=8)
    value = z_sq / d + 2.0 * val / (d * d)
    bound = z_sq_err / d + 2.0 * err / (d * d)
    return TrueVarianceReport(value=value, quadrature_error_bound=bound,
                              formula_used="ht-form")


# ---------------------------------------------------------------------------
# Stationary renewal identity check
# ---------------------------------------------------------------------------

def _gamma_convolution_density(t: np.ndarray, p: GammaParams, k_max: int
                               ) -> np.ndarray:
    """sum_{k=1..k_max} of the Gamma(k*shape, rate) density at t > 0."""
    k = np.arange(1, k_max + 1, dtype=float)
    kr = k * p.shape
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = (kr * math.log(p.rate) - gammaln(kr)
                + (kr - 1.0)[None, :] * np.log(flat) - p.rate * flat)
        vals = np.exp(logs)
    vals = np.nan_to_num(vals, nan=0.0, posinf=np.inf)
    return vals.sum(axis=1).reshape(t.shape)


def renewal_identity_residual(p: GammaParams, x_grid, k_max: int | None = None,
                              tol: Tolerance = Tolerance(abs=1e-10, rel=1e-9,
                                                         max_iter=12)) -> float:
    """Max residual of the stationary renewal identity on a grid.

    For a Gamma(shape, rate) renewal process the stationary first-gap
    density f0 satisfies f0(x) + int_0^x f0(x-t) * u(t) dt = rate/shape for
    all x >= 0, where u is the sum of all k-fold convolution densities. The
    convolution series is truncated at k_max, which must leave less than
    1e-12 of the Gamma(k_max*shape, rate) mass below max(x_grid).
    """
    grid = np.asarray(x_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0):
        raise DomainError("x_grid must be non-empty and non-negative")
    x_max = float(grid.max())
    if k_max is None:
        k = max(1, int(math.ceil(p.rate * x_max / p.shape)))
        while lower_gamma_regularized(k * p.shape, p.rate * x_max) >= 1e-12:
            k += max(1, k // 4)
            if k > 200_000:
                raise NumericError("could not truncate the convolution series")
        k_max = k
    elif lower_gamma_regularized(k_max * p.shape, p.rate * x_max) >= 1e-12:
        raise NumericError(
            f"k_max={k_max} leaves more than 1e-12 convolution mass below {x_max}")

    target = p.rate / p.shape
    # For shape < 1 the convolution series diverges at t = 0 and the
    # stationary density has an algebraic cusp at t = x (its tail behaves
    # like 1 - s**shape near zero), so both endpoints get the cascade.
    singular = p.shape < 1.0
    worst = 0.0
    for x in grid:
        if x == 0.0:
            residual = abs(float(forward_gamma_pdf(p, 0.0)) - target)
        else:
            def integrand(t, _x=float(x)):
                t = np.asarray(t, dtype=float)
                return (np.asarray(forward_gamma_pdf(p, np.maximum(_x - t, 0.0)),
                                   dtype=float)
                        * _gamma_convolution_density(t, p, k_max))

            conv, _ = integrate_1d_with_error(integrand, 0.0, float(x), tol,
                                              singular_lo=singular,
                                              singular_hi=singular)
            residual = abs(float(forward_gamma_pdf(p, float(x))) + conv - target)
        worst = max(worst, residual)
    return worst

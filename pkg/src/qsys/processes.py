"""Point-process samplers on (0,1) and their exact inclusion densities.

Five process families are supported: the binomial and Poisson base processes,
plain systematic sampling, and the two quasi-systematic families
(systematic-Poisson and systematic-binomial) whose tuning parameter r > 0
interpolates between the base process (r = 1) and systematic sampling
(r -> infinity). All joint-density arithmetic runs in log space: the series
terms involve ratios like lam**(m*r) / Gamma(m*r) that overflow far below the
parameter ranges of interest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.special import gammaln

from .distributions import (
    DirichletSymParams,
    GammaParams,
    RngState,
    sample_dirichlet_sym,
    sample_forward_gamma,
)
from .numerics import DomainError, Tolerance, leggauss_unit

SERIES_TOL = Tolerance(abs=0.0, rel=1e-12, max_iter=64)


class SampleCollisionError(RuntimeError):
    """Two retries produced coinciding or out-of-range points (prob ~ 0)."""


@dataclass(frozen=True)
class BinomialSpec:
    """n i.i.d. uniform points."""

    n: int

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1):
            raise DomainError(f"sample size must be a positive integer, got {self.n!r}")


@dataclass(frozen=True)
class PoissonSpec:
    """Homogeneous Poisson process with intensity rate."""

    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise DomainError(f"intensity must be positive, got {self.rate!r}")


@dataclass(frozen=True)
class SystematicSpec:
    """Deterministic grid u + k*interval with random phase u ~ U(0, interval)."""

    interval: float

    def __post_init__(self):
        if not (0.0 < self.interval < 1.0):
            raise DomainError(f"interval must lie in (0, 1), got {self.interval!r}")


@dataclass(frozen=True)
class SystPoissonSpec:
    """Systematic thinning (rate 1/r) of a Poisson process; expected size rate/r."""

    r: float
    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise DomainError(f"r must be positive, got {self.r!r}")
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise DomainError(f"rate must be positive, got {self.rate!r}")


@dataclass(frozen=True)
class SystBinomialSpec:
    """Fixed-size-n process with Dirichlet(r * 1_n) circular inter-arrivals."""

    n: int
    r: float

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1):
            raise DomainError(f"sample size must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.r) and self.r > 0):
            raise DomainError(f"r must be positive, got {self.r!r}")


ProcessSpec = Union[BinomialSpec, PoissonSpec, SystematicSpec,
                    SystPoissonSpec, SystBinomialSpec]


@dataclass(frozen=True)
class OrderedSample:
    """Strictly increasing points in the open unit interval, with provenance."""

    points: np.ndarray
    spec: ProcessSpec | None = None
    state: RngState | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise DomainError("points must be a 1D array")
        if pts.size:
            if not (np.all(pts > 0.0) and np.all(pts < 1.0)):
                raise DomainError("points must lie strictly inside (0, 1)")
            if not np.all(np.diff(pts) > 0.0):
                raise DomainError("points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return int(self.points.size)

    def circular_gaps(self) -> np.ndarray:
        """Inter-arrival times on the unit circle, including the wrap-around gap."""
        pts = self.points
        if pts.size == 0:
            return np.array([])
        return np.concatenate([np.diff(pts), [pts[0] - pts[-1] + 1.0]])


def _as_generator(rng) -> tuple[np.random.Generator, RngState | None]:
    if isinstance(rng, RngState):
        return rng.generator(), rng
    if isinstance(rng, np.random.Generator):
        return rng, None
    raise DomainError(f"rng must be an RngState or numpy Generator, got {type(rng)!r}")


def _points_valid(pts: np.ndarray) -> bool:
    if pts.size == 0:
        return True
    return bool(np.all(pts > 0.0) and np.all(pts < 1.0)
                and np.all(np.diff(pts) > 0.0))


def _draw_sample(rng, spec: ProcessSpec, draw: Callable) -> OrderedSample:
    gen, state = _as_generator(rng)
    pts = np.asarray(draw(gen), dtype=float)
    if not _points_valid(pts):
        pts = np.asarray(draw(gen), dtype=float)  # collisions have prob ~ 0
        if not _points_valid(pts):
            raise SampleCollisionError(
                f"two draws in a row violated the sample invariants for {spec}")
    return OrderedSample(points=pts, spec=spec, state=state)


def sample_systematic(rng, c: float) -> OrderedSample:
    """Grid sample u + k*c, u ~ U(0, c), keeping every point below 1."""
    spec = SystematicSpec(interval=c)

    def draw(gen):
        u = gen.uniform(0.0, c)
        count = int(math.ceil((1.0 - u) / c))
        pts = u + c * np.arange(count)
        return pts[pts < 1.0]

    return _draw_sample(rng, spec, draw)


def sample_binomial(rng, n: int) -> OrderedSample:
    """Order statistics of n i.i.d. U(0,1) points."""
    spec = BinomialSpec(n=n)
    return _draw_sample(rng, spec, lambda gen: np.sort(gen.random(n)))


def sample_binomial_dirichlet(rng, n: int) -> OrderedSample:
    """Binomial process built from Dirichlet(1_n) circular inter-arrivals.

    Cumulative gaps plus an independent uniform shift, reduced mod 1: the
    resulting law coincides with sample_binomial.
    """
    spec = BinomialSpec(n=n)

    def draw(gen):
        gaps = sample_dirichlet_sym(gen, DirichletSymParams(n=n, r=1.0))
        u = gen.random()
        return np.sort((np.cumsum(gaps) + u) % 1.0)

    return _draw_sample(rng, spec, draw)


def sample_poisson(rng, rate: float) -> OrderedSample:
    """Poisson process: the r = 1 case of the systematic-Poisson sampler."""
    spec = PoissonSpec(rate=rate)
    return _draw_sample(rng, spec, lambda gen: _draw_syst_poisson(gen, 1.0, rate))


def _draw_syst_poisson(gen: np.random.Generator, r: float, lam: float) -> np.ndarray:
    x = sample_forward_gamma(gen, GammaParams(shape=r, rate=lam))
    if x >= 1.0:
        return np.array([])
    pts = [x]
    while True:
        expected_left = (1.0 - x) * lam / r
        batch = max(8, int(expected_left + 6.0 * math.sqrt(max(expected_left, 1.0)) + 4.0))
        cum = x + np.cumsum(gen.standard_gamma(r, size=batch)) / lam
        inside = int(np.searchsorted(cum, 1.0))
        pts.extend(cum[:inside].tolist())
        if inside < batch:
            return np.array(pts)
        x = float(cum[-1])


def sample_syst_poisson(rng, r: float, lam: float) -> OrderedSample:
    """Delayed Gamma renewal sample: first gap forward-Gamma, later gaps Gamma(r, lam).

    The sample may be empty; its expected size is lam / r.
    """
    spec = SystPoissonSpec(r=r, rate=lam)
    return _draw_sample(rng, spec, lambda gen: _draw_syst_poisson(gen, r, lam))


def sample_syst_binomial_thinning(rng, n: int, r: int) -> OrderedSample:
    """Every r-th order statistic of n*r uniforms, uniformly shifted mod 1.

    Only integer r is meaningful here; use sample_syst_binomial for real r.
    """
    if isinstance(r, float) and not r.is_integer():
        raise DomainError(f"thinning requires integer r, got {r!r}")
    r = int(r)
    if r < 1:
        raise DomainError(f"thinning requires r >= 1, got {r!r}")
    spec = SystBinomialSpec(n=n, r=float(r))

    def draw(gen):
        order_stats = np.sort(gen.random(n * r))
        kept = order_stats[r - 1::r]
        u = gen.random()
        return np.sort((kept + u) % 1.0)

    return _draw_sample(rng, spec, draw)


def sample_syst_binomial(rng, n: int, r: float) -> OrderedSample:
    """Fixed-size sample from Dirichlet(r * 1_n) circular inter-arrivals; any real r > 0."""
    spec = SystBinomialSpec(n=n, r=float(r))

    def draw(gen):
        gaps = sample_dirichlet_sym(gen, DirichletSymParams(n=n, r=float(r)))
        u = gen.random()
        return np.sort((np.cumsum(gaps) + u) % 1.0)

    return _draw_sample(rng, spec, draw)


def sample_process(rng, spec: ProcessSpec) -> OrderedSample:
    """Sample whichever process family `spec` describes."""
    if isinstance(spec, SystematicSpec):
        return sample_systematic(rng, spec.interval)
    if isinstance(spec, BinomialSpec):
        return sample_binomial(rng, spec.n)
    if isinstance(spec, PoissonSpec):
        return sample_poisson(rng, spec.rate)
    if isinstance(spec, SystPoissonSpec):
        return sample_syst_poisson(rng, spec.r, spec.rate)
    if isinstance(spec, SystBinomialSpec):
        return sample_syst_binomial(rng, spec.n, spec.r)
    raise DomainError(f"unknown process spec {spec!r}")


# ---------------------------------------------------------------------------
# Renewal densities (log-space series / finite sums)
# ---------------------------------------------------------------------------

def _renewal_density_syst_poisson(h, r: float, lam: float,
                                  rel_tol: float = 1e-12,
                                  n_terms: int | None = None) -> np.ndarray:
    """Renewal density u(h) = sum_m Gamma(m*r, lam) pdf at h, for h in [0, inf).

    The joint density of the systematic-Poisson process is (lam/r) * u(h).
    Terms are unimodal in m with the peak near m*r = lam*h; the sum is
    truncated once m*r exceeds lam*h + 50*sqrt(lam*h) + 50 and the last
    term's relative contribution is below rel_tol. `n_terms` overrides the
    rule (used to verify truncation is converged).
    """
    h = np.asarray(h, dtype=float)
    out = np.zeros_like(h)
    flat = h.ravel()
    res = out.ravel()
    pos = flat > 0.0
    zero = ~pos
    if np.any(zero):
        if r == 1.0:
            res[zero] = lam
        elif r < 1.0:
            res[zero] = np.inf
        # r > 1: density vanishes at zero gap, which zeros already hold
    if np.any(pos):
        hp = flat[pos]
        z = lam * float(hp.max())
        if n_terms is None:
            m_stop = int(math.ceil((z + 50.0 * math.sqrt(z) + 50.0) / r)) + 1
        else:
            m_stop = int(n_terms)
        total = np.zeros(hp.size)
        log_h = np.log(hp)
        chunk = max(1, int(4_000_000 // max(hp.size, 1)))
        m_start = 1
        while m_start <= m_stop:
            m = np.arange(m_start, min(m_start + chunk, m_stop + 1), dtype=float)
            mr = m * r
            logs = (mr * math.log(lam) - gammaln(mr)
                    + (mr - 1.0)[None, :] * log_h[:, None]
                    - lam * hp[:, None])
            np.exp(logs, out=logs)
            total += logs.sum(axis=1)
            last = logs[:, -1]
            m_start += chunk
        if n_terms is None:
            # safety: extend while the tail still contributes
            while np.any(last > rel_tol * np.maximum(total, 1e-300)):
                m = np.arange(m_start, m_start + 16, dtype=float)
                mr = m * r
                logs = (mr * math.log(lam) - gammaln(mr)
                        + (mr - 1.0)[None, :] * log_h[:, None]
                        - lam * hp[:, None])
                np.exp(logs, out=logs)
                total += logs.sum(axis=1)
                last = logs[:, -1]
                m_start += 16
        res[pos] = total
    return out if out.ndim else out


def second_order_density_syst_poisson(r: float, lam: float, x: float, y: float,
                                      series_tol: Tolerance = SERIES_TOL) -> float:
    """Joint inclusion density of the systematic-Poisson process at (x, y)."""
    if not (math.isfinite(r) and r > 0 and math.isfinite(lam) and lam > 0):
        raise DomainError("r and lam must be positive")
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise DomainError("x and y must lie in (0, 1)")
    h = abs(x - y)
    if h == 0.0:
        if r > 1.0:
            return 0.0
        raise DomainError(
            f"joint density is singular/undefined on the diagonal for r = {r}")
    u = _renewal_density_syst_poisson(np.array([h]), r, lam, rel_tol=series_tol.rel)
    return float(lam / r * u[0])


def _renewal_density_syst_binomial(h, n: int, r: float) -> np.ndarray:
    """Gap density u(h) = sum_{m<n} Beta(m*r, (n-m)*r) pdf at h, h in [0, 1].

    The joint density of the systematic-binomial process is n * u(h).
    """
    h = np.asarray(h, dtype=float)
    if n == 1:
        return np.zeros_like(h)
    m = np.arange(1, n, dtype=float)
    a = m * r - 1.0          # exponent of h
    b = (n - m) * r - 1.0    # exponent of 1 - h
    lg = gammaln(n * r) - gammaln(m * r) - gammaln((n - m) * r)
    flat = h.reshape(-1, 1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_h = np.where(a[None, :] == 0.0, 0.0, a[None, :] * np.log(flat))
        log_1mh = np.where(b[None, :] == 0.0, 0.0, b[None, :] * np.log1p(-flat))
        terms = np.exp(lg[None, :] + log_h + log_1mh)
    terms = np.nan_to_num(terms, nan=0.0, posinf=np.inf)
    return terms.sum(axis=1).reshape(h.shape)


def second_order_density_syst_binomial(n: int, r: float, x: float, y: float) -> float:
    """Joint inclusion density of the systematic-binomial process at (x, y)."""
    if not (isinstance(n, int) and n >= 1):
        raise DomainError(f"n must be a positive integer, got {n!r}")
    if not (math.isfinite(r) and r > 0):
        raise DomainError(f"r must be positive, got {r!r}")
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise DomainError("x and y must lie in (0, 1)")
    if n == 1:
        return 0.0
    h = abs(x - y)
    if h in (0.0, 1.0):
        if r > 1.0:
            return 0.0
        if r == 1.0 and h == 0.0:
            return float(n * (n - 1))
        raise DomainError(
            f"joint density is singular at gap {h} for r = {r}")
    return float(n * _renewal_density_syst_binomial(np.array([h]), n, r)[0])


def nth_order_density_syst_binomial(n: int, r: float, points) -> float:
    """Full joint inclusion density of an ordered systematic-binomial sample."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size != n:
        raise DomainError(f"expected {n} points, got shape {pts.shape}")
    if not (np.all(pts > 0.0) and np.all(pts < 1.0)):
        raise DomainError("points must lie in (0, 1)")
    if n > 1 and not np.all(np.diff(pts) > 0.0):
        raise DomainError("points must be strictly ascending")
    if not (math.isfinite(r) and r > 0):
        raise DomainError(f"r must be positive, got {r!r}")
    gaps = np.concatenate([np.diff(pts), [1.0 + pts[0] - pts[-1]]])
    log_density = (math.log(n) + gammaln(n * r) - n * gammaln(r)
                   + (r - 1.0) * np.log(gaps).sum())
    return float(math.exp(log_density))


# ---------------------------------------------------------------------------
# Density evaluators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityEvaluator:
    """Exact first/second-order inclusion densities for one process spec."""

    spec: ProcessSpec
    series_tol: Tolerance = field(default_factory=lambda: SERIES_TOL)

    @property
    def is_fixed_size(self) -> bool:
        return isinstance(self.spec, (BinomialSpec, SystBinomialSpec))

    @property
    def expected_size(self) -> float:
        s = self.spec
        if isinstance(s, (BinomialSpec, SystBinomialSpec)):
            return float(s.n)
        if isinstance(s, PoissonSpec):
            return s.rate
        if isinstance(s, SystPoissonSpec):
            return s.rate / s.r
        return 1.0 / s.interval

    @property
    def first_order_value(self) -> float:
        """All supported processes have a constant first-order density."""
        return self.expected_size

    def first_order(self, x: float) -> float:
        if not (0.0 < x < 1.0):
            raise DomainError(f"x must lie in (0, 1), got {x!r}")
        return self.first_order_value

    def second_order(self, x: float, y: float) -> float:
        s = self.spec
        if isinstance(s, SystematicSpec):
            raise DomainError(
                "the systematic process has no second-order inclusion density")
        if isinstance(s, BinomialSpec):
            if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
                raise DomainError("x and y must lie in (0, 1)")
            return float(s.n * (s.n - 1))
        if isinstance(s, PoissonSpec):
            if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
                raise DomainError("x and y must lie in (0, 1)")
            return s.rate * s.rate
        if isinstance(s, SystPoissonSpec):
            return second_order_density_syst_poisson(s.r, s.rate, x, y, self.series_tol)
        return second_order_density_syst_binomial(s.n, s.r, x, y)

    def pair_density(self, h) -> np.ndarray:
        """Vectorized joint density as a function of the gap |x - y|.

        Gap values of exactly 0 or 1 are mapped to the continuity limit
        (infinite for r < 1).
        """
        s = self.spec
        h = np.asarray(h, dtype=float)
        if isinstance(s, SystematicSpec):
            raise DomainError(
                "the systematic process has no second-order inclusion density")
        if isinstance(s, BinomialSpec):
            return np.full(h.shape, float(s.n * (s.n - 1)))
        if isinstance(s, PoissonSpec):
            return np.full(h.shape, s.rate * s.rate)
        if isinstance(s, SystPoissonSpec):
            return (s.rate / s.r) * _renewal_density_syst_poisson(
                h, s.r, s.rate, rel_tol=self.series_tol.rel)
        return s.n * _renewal_density_syst_binomial(h, s.n, s.r)

    def second_order_matrix(self, xs: np.ndarray) -> np.ndarray:
        """Joint density at every ordered pair of distinct sample points.

        Returns a (k, k) matrix; the diagonal is set to NaN and must be
        ignored by callers.
        """
        xs = np.asarray(xs, dtype=float)
        gaps = np.abs(xs[:, None] - xs[None, :])
        np.fill_diagonal(gaps, 0.5)  # placeholder, overwritten below
        out = self.pair_density(gaps)
        np.fill_diagonal(out, np.nan)
        return out


class TransformedDensityEvaluator:
    """Densities of a constant-density process pushed through a shape transform."""

    def __init__(self, base: DensityEvaluator, shape: "ShapedDensity"):
        self.base = base
        self.shape = shape

    @property
    def is_fixed_size(self) -> bool:
        return self.base.is_fixed_size

    @property
    def expected_size(self) -> float:
        return self.base.expected_size

    def first_order(self, x: float) -> float:
        if not (0.0 < x < 1.0):
            raise DomainError(f"x must lie in (0, 1), got {x!r}")
        return float(self.base.first_order_value
                     * self.shape.phi(x) / self.shape.total)

    def first_order_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return (self.base.first_order_value / self.shape.total) * self.shape.phi(xs)

    def second_order(self, x: float, y: float) -> float:
        gxy = self.base.second_order(float(self.shape.cum(x)), float(self.shape.cum(y)))
        return float(gxy * self.shape.phi(x) * self.shape.phi(y)
                     / (self.shape.total ** 2))

    def second_order_matrix(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        mapped = np.asarray(self.shape.cum(xs), dtype=float)
        out = self.base.second_order_matrix(mapped)
        dens = np.asarray(self.shape.phi(xs), dtype=float) / self.shape.total
        return out * dens[:, None] * dens[None, :]


def first_order_many(ev, xs: np.ndarray) -> np.ndarray:
    """First-order density at each point, for any evaluator flavor."""
    if hasattr(ev, "first_order_many"):
        return ev.first_order_many(xs)
    return np.full(np.asarray(xs, dtype=float).shape, ev.first_order_value)


# ---------------------------------------------------------------------------
# Unequal-probability transform
# ---------------------------------------------------------------------------

class ShapedDensity:
    """A target density shape on [0,1]: a non-negative phi and its integral.

    The cumulative integral is pre-tabulated on a uniform grid with per-panel
    Gauss-Legendre masses and rescaled so that the full mass maps (0,1) onto
    (0,1); the inverse used for sampling is the piecewise-linear inverse of
    that table.
    """

    def __init__(self, phi: Callable, grid_size: int = 4096,
                 flat_tolerance: float = 1e-6):
        self.phi = phi
        edges = np.linspace(0.0, 1.0, grid_size + 1)
        gl_x, gl_w = leggauss_unit(8)
        widths = np.diff(edges)
        nodes = edges[:-1, None] + widths[:, None] * gl_x[None, :]
        vals = np.asarray(phi(nodes), dtype=float)
        if np.any(vals < 0.0) or not np.all(np.isfinite(vals)):
            raise DomainError("phi must be finite and non-negative on [0, 1]")
        masses = (vals * gl_w[None, :]).sum(axis=1) * widths
        cum = np.concatenate([[0.0], np.cumsum(masses)])
        total = cum[-1]
        if total <= 0.0:
            raise DomainError("phi integrates to zero; shape is degenerate")
        # flat spans wider than flat_tolerance make the cumulative
        # non-invertible at sampling accuracy
        zero_runs = masses == 0.0
        if np.any(zero_runs):
            run = 0
            for flag in zero_runs:
                run = run + 1 if flag else 0
                if run * (1.0 / grid_size) > flat_tolerance:
                    raise DomainError(
                        "phi vanishes on an interval wider than the flat tolerance; "
                        "cumulative integral is not strictly increasing")
        self.grid = edges
        self.total = float(total)
        self.cum_grid = cum / total

    def cum(self, x):
        """Rescaled cumulative integral, mapping [0,1] onto [0,1]."""
        return np.interp(x, self.grid, self.cum_grid)

    def inverse(self, q):
        """Inverse of the rescaled cumulative integral."""
        return np.interp(q, self.cum_grid, self.grid)


def transform_process(rng, base: DensityEvaluator, shape: ShapedDensity
                      ) -> tuple[OrderedSample, TransformedDensityEvaluator]:
    """Reparameterize a constant-density sample to have density prop. to phi.

    Samples the base process and maps every point through the inverse
    rescaled cumulative of phi. The returned evaluator composes the base
    densities with the shape.
    """
    gen, state = _as_generator(rng)

    def draw(g):
        base_sample = sample_process(g, base.spec)
        return np.sort(np.asarray(shape.inverse(base_sample.points), dtype=float))

    sample = _draw_sample(gen, base.spec, draw)
    sample = OrderedSample(points=sample.points, spec=base.spec, state=state)
    return sample, TransformedDensityEvaluator(base, shape)


def syg_ratio_max(spec: ProcessSpec, resolution: int = 20000,
                  series_tol: Tolerance = SERIES_TOL) -> tuple[float, float]:
    """Scan max over gaps of pi2(x,y) / (pi(x) pi(y)) for a stationary spec.

    A maximum <= 1 means the Sen-Yates-Grundy variance estimator is
    non-negative for every sample.
    """
    ev = DensityEvaluator(spec, series_tol)
    h = np.linspace(0.0, 1.0, resolution + 2)[1:-1]
    ratio = ev.pair_density(h) / (ev.first_order_value ** 2)
    idx = int(np.argmax(ratio))
    return float(ratio[idx]), float(h[idx])

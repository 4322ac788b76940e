"""Special functions, quadrature and root finding shared by the whole package.

Everything here is a pure function of its arguments. Quadrature follows a
single recipe: composite Gauss-Legendre panels, refined by doubling the panel
count until two successive estimates agree within tolerance. Integrable
endpoint singularities of power type t**(a-1) are handled by a geometric
cascade of panels (ratio 0.5) toward the singular endpoint, and the 2D
integrator offers a diagonal-strip decomposition for kernels singular on
the line x == y.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import special as sp


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(RuntimeError):
    """A numerical routine failed to converge.

    Carries the best available estimate and a bound on its error so callers
    can decide whether the partial result is still usable.
    """

    def __init__(self, message: str, best_estimate: float | None = None,
                 error_bound: float | None = None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_bound = error_bound


@dataclass(frozen=True)
class Tolerance:
    """Absolute/relative tolerance pair plus an iteration budget."""

    abs: float = 1e-12
    rel: float = 1e-9
    max_iter: int = 14

    def __post_init__(self):
        if not (self.abs >= 0 and self.rel >= 0 and math.isfinite(self.abs)
                and math.isfinite(self.rel)):
            raise DomainError("tolerances must be finite and non-negative")
        if self.abs == 0 and self.rel == 0:
            raise DomainError("at least one of abs, rel must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be a positive integer")

    def met(self, diff: float, value: float) -> bool:
        return abs(diff) <= max(self.abs, self.rel * abs(value))


DEFAULT_TOL = Tolerance()

# Levels in the geometric cascade toward a singular endpoint. With panel
# ratio 0.5 the un-resolved mass below the innermost panel is
# O(2**(-LEVELS*a)) for a t**(a-1) singularity, i.e. < 1e-10 for a >= 0.5.
GEOMETRIC_LEVELS = 72


@dataclass(frozen=True)
class Grid1D:
    """Quadrature nodes and weights on a closed interval."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise DomainError("nodes and weights must be 1D arrays of equal length")
        if nodes.size and not np.all(np.diff(nodes) > 0):
            raise DomainError("nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise DomainError("weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def apply(self, f: Callable) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


@lru_cache(maxsize=32)
def leggauss_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


def composite_grid(edges: Sequence[float], order: int = 12) -> Grid1D:
    """Composite Gauss-Legendre grid over consecutive panels given by `edges`."""
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2 or not np.all(np.diff(edges) > 0):
        raise DomainError("edges must be at least two strictly increasing points")
    x, w = leggauss_unit(order)
    lo = edges[:-1]
    width = np.diff(edges)
    nodes = (lo[:, None] + width[:, None] * x[None, :]).ravel()
    weights = (width[:, None] * w[None, :]).ravel()
    return Grid1D(nodes=nodes, weights=weights)


def _panel_edges(lo: float, hi: float, panels_per_segment: int,
                 breakpoints: Sequence[float], singular_lo: bool,
                 singular_hi: bool) -> np.ndarray:
    """Panel edges on [lo, hi] with breakpoints and geometric cascades."""
    interior = sorted({b for b in breakpoints if lo < b < hi})
    base = [lo] + interior + [hi]
    edges: list[float] = []
    for i, (a, b) in enumerate(zip(base[:-1], base[1:])):
        seg = np.linspace(a, b, panels_per_segment + 1)
        sub: list[float] = []
        for sa, sb in zip(seg[:-1], seg[1:]):
            sub.append(sa)
            if singular_lo and i == 0 and sa == a and a == base[0]:
                w = sb - sa
                casc = [sa + w * 2.0 ** (-j) for j in range(GEOMETRIC_LEVELS, 0, -1)]
                sub.extend(casc)
            if singular_hi and i == len(base) - 2 and sb == b and b == base[-1]:
                w = sb - sa
                casc = [sb - w * 2.0 ** (-j) for j in range(1, GEOMETRIC_LEVELS + 1)]
                sub.extend(casc)
        edges.extend(sub)
    edges.append(hi)
    arr = np.array(sorted(set(edges)))
    # Drop panels narrower than 2**18 ulp of the endpoint. The innermost
    # panel still covers the remainder via the t**2 substitution of
    # _nodes_with_singular_panels, and this floor keeps every transformed
    # node at least one ulp away from the singular endpoint for quadrature
    # orders up to ~20.
    eps = np.finfo(float).eps
    kept = [float(arr[0])]
    for v in arr[1:]:
        if v - kept[-1] > 262144.0 * eps * max(abs(v), abs(kept[-1]), 1e-30):
            kept.append(float(v))
    if kept[-1] != hi:
        if len(kept) > 1:
            kept[-1] = hi
        else:
            kept.append(hi)
    return np.array(kept)


def _nodes_with_singular_panels(edges: np.ndarray, order: int,
                                singular_lo: bool, singular_hi: bool
                                ) -> tuple[np.ndarray, np.ndarray]:
    """Composite GL nodes/weights; innermost singular panels get the
    substitution x = a + w t^2, which turns a t**(a-1) endpoint power with
    a >= 0.5 into a smooth integrand."""
    x, w = leggauss_unit(order)
    node_parts = []
    weight_parts = []
    widths = np.diff(edges)
    los = edges[:-1]
    start = 0
    stop = widths.size
    if singular_lo:
        a, width = los[0], widths[0]
        node_parts.append(a + width * x ** 2)
        weight_parts.append(width * 2.0 * x * w)
        start = 1
    tail = None
    if singular_hi and stop - 1 >= start:
        b = edges[-1]
        width = widths[-1]
        tail = (b - width * x[::-1] ** 2, width * 2.0 * x[::-1] * w[::-1])
        stop -= 1
    if stop > start:
        mid_lo = los[start:stop, None]
        mid_w = widths[start:stop, None]
        node_parts.append((mid_lo + mid_w * x[None, :]).ravel())
        weight_parts.append((mid_w * w[None, :]).ravel())
    if tail is not None:
        node_parts.append(tail[0])
        weight_parts.append(tail[1])
    return np.concatenate(node_parts), np.concatenate(weight_parts)


def integrate_1d_with_error(f: Callable, lo: float, hi: float,
                            tol: Tolerance = DEFAULT_TOL, *,
                            breakpoints: Sequence[float] = (),
                            singular_lo: bool = False,
                            singular_hi: bool = False,
                            order: int = 12,
                            initial_panels: int = 4) -> tuple[float, float]:
    """Adaptive composite Gauss-Legendre integral of f over [lo, hi].

    f must accept ndarray input. `hi` may be +inf (and `lo` -inf); infinite
    ends are mapped to a finite interval by t -> t/(1-t) with a geometric
    cascade toward the mapped endpoint. Returns (value, error_bound).
    Raises NumericError when doubling the panel count max_iter times never
    brings two successive estimates within tolerance.
    """
    if math.isnan(lo) or math.isnan(hi) or lo >= hi:
        raise DomainError(f"invalid interval [{lo}, {hi}]")
    inf_lo = math.isinf(lo)
    inf_hi = math.isinf(hi)
    if inf_lo or inf_hi:
        f_orig = f
        if inf_lo and inf_hi:
            raise DomainError("only one endpoint may be infinite")
        if inf_hi:
            a = lo

            def f(t, _a=a, _g=f_orig):
                s = 1.0 - t
                return _g(_a + t / s) / (s * s)

            mapped_breaks = [b / (1.0 + b) for b in breakpoints
                             if math.isfinite(b) and b > a]
            return integrate_1d_with_error(
                f, 0.0, 1.0, tol, breakpoints=mapped_breaks,
                singular_lo=singular_lo, singular_hi=True,
                order=order, initial_panels=initial_panels)
        b = hi

        def f(t, _b=b, _g=f_orig):
            s = 1.0 - t
            return _g(_b - t / s) / (s * s)

        mapped_breaks = [c / (1.0 + c) for c in ((b - bp) for bp in breakpoints
                                                 if math.isfinite(bp) and bp < b)]
        val, err = integrate_1d_with_error(
            f, 0.0, 1.0, tol, breakpoints=mapped_breaks,
            singular_lo=singular_hi, singular_hi=True,
            order=order, initial_panels=initial_panels)
        return val, err

    prev = None
    best = math.nan
    best_err = math.inf
    panels = initial_panels
    for _ in range(tol.max_iter):
        edges = _panel_edges(lo, hi, panels, breakpoints, singular_lo, singular_hi)
        nodes, weights = _nodes_with_singular_panels(edges, order,
                                                     singular_lo, singular_hi)
        est = float(np.dot(weights, np.asarray(f(nodes), dtype=float)))
        if prev is not None:
            diff = est - prev
            if abs(diff) < best_err:
                best, best_err = est, abs(diff)
            if tol.met(diff, est):
                return est, abs(diff)
        prev = est
        panels *= 2
    raise NumericError(
        f"integrate_1d did not converge within {tol.max_iter} refinements",
        best_estimate=best, error_bound=best_err)


def integrate_1d(f: Callable, lo: float, hi: float,
                 tol: Tolerance = DEFAULT_TOL, **kwargs) -> float:
    value, _ = integrate_1d_with_error(f, lo, hi, tol, **kwargs)
    return value


def integrate_2d_with_error(f: Callable, tol: Tolerance = DEFAULT_TOL, *,
                            order_x: int = 12, order_y: int = 13,
                            diagonal_strip: bool = False,
                            max_splits: int = 400_000) -> tuple[float, float]:
    """Integral of f over the unit square [0,1]^2.

    f must accept broadcastable ndarray arguments (X, Y). The default is a
    greedy adaptive quadtree (split the rectangle with the largest estimated
    error) using tensor Gauss-Legendre rules; distinct x/y orders keep tensor
    nodes off the diagonal x == y. Kernels with an integrable |x-y|**(a-1)
    singularity on the diagonal (a < 1) need diagonal_strip=True, which
    rewrites the integral as an iterated one over the gap h = |x-y| with a
    geometric cascade at h = 0.
    """
    if diagonal_strip:
        xgl, wgl = leggauss_unit(max(order_x, order_y))

        def over_gap(h):
            h = np.asarray(h, dtype=float)
            out = np.empty_like(h)
            for i, hh in enumerate(h.ravel()):
                x_up = hh + (1.0 - hh) * xgl   # x in (h, 1), y = x - h
                x_lo = (1.0 - hh) * xgl        # x in (0, 1-h), y = x + h
                vals = f(x_up, x_up - hh) + f(x_lo, x_lo + hh)
                out.ravel()[i] = (1.0 - hh) * float(np.dot(wgl, vals))
            return out

        # Below gap ~1e-14 the pair coordinates cancel in float64, so the
        # innermost diagonal strip is dropped; for an |x-y|**(a-1) kernel
        # with a >= 0.5 its contribution is O(1e-7) in absolute terms.
        return integrate_1d_with_error(over_gap, 1e-14, 1.0, tol,
                                       singular_lo=True, order=max(order_x, order_y))

    if order_x == order_y:
        order_y += 1  # keep tensor nodes off the diagonal
    nx, wx = leggauss_unit(order_x)
    ny, wy = leggauss_unit(order_y)
    wmat = np.outer(wx, wy)

    def estimates(boxes: np.ndarray) -> np.ndarray:
        xs = boxes[:, 0, None, None] + (boxes[:, 1] - boxes[:, 0])[:, None, None] * nx[None, :, None]
        ys = boxes[:, 2, None, None] + (boxes[:, 3] - boxes[:, 2])[:, None, None] * ny[None, None, :]
        vals = np.asarray(f(xs, ys), dtype=float)
        area = (boxes[:, 1] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 2])
        return area * np.einsum("bij,ij->b", vals, wmat)

    def quarters(boxes: np.ndarray) -> np.ndarray:
        x0, x1, y0, y1 = boxes.T
        xm = 0.5 * (x0 + x1)
        ym = 0.5 * (y0 + y1)
        return np.stack([
            np.stack([x0, xm, y0, ym], axis=1),
            np.stack([xm, x1, y0, ym], axis=1),
            np.stack([x0, xm, ym, y1], axis=1),
            np.stack([xm, x1, ym, y1], axis=1),
        ], axis=1)  # (B, 4, 4)

    root = np.array([[0.0, 1.0, 0.0, 1.0]])
    kids = quarters(root)[0]
    kid_coarse = estimates(kids)
    counter = 0
    heap = []
    for i in range(4):
        grand = quarters(kids[i:i + 1])[0]
        gfine = estimates(grand)
        fine = float(gfine.sum())
        err = abs(fine - kid_coarse[i])
        counter += 1
        heap.append((-err, counter, tuple(kids[i]), fine, tuple(gfine)))
    heapq.heapify(heap)
    total = math.fsum(entry[3] for entry in heap)
    err_total = math.fsum(-entry[0] for entry in heap)

    splits = 0
    while err_total > max(tol.abs, tol.rel * abs(total)):
        if splits >= max_splits or not heap:
            raise NumericError(
                f"integrate_2d exceeded {max_splits} subdivisions",
                best_estimate=total, error_bound=err_total)
        negerr, _, box, fine, kid_est = heapq.heappop(heap)
        total -= fine
        err_total += negerr
        kids = quarters(np.array([box]))[0]
        grand = quarters(kids).reshape(16, 4)
        gest = estimates(grand)
        for i in range(4):
            kfine = float(gest[4 * i:4 * i + 4].sum())
            kerr = abs(kfine - kid_est[i])
            counter += 1
            heapq.heappush(heap, (-kerr, counter, tuple(kids[i]), kfine,
                                  tuple(gest[4 * i:4 * i + 4])))
            total += kfine
            err_total += kerr
        splits += 1
    return total, err_total


def integrate_2d(f: Callable, tol: Tolerance = DEFAULT_TOL, **kwargs) -> float:
    value, _ = integrate_2d_with_error(f, tol, **kwargs)
    return value


def bisect_monotone(g: Callable[[float], float], target: float,
                    lo: float, hi: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """Solve g(x) = target on [lo, hi] for strictly increasing g by bisection."""
    if lo >= hi:
        raise DomainError(f"invalid bracket [{lo}, {hi}]")
    glo = g(lo)
    ghi = g(hi)
    if not (glo <= target <= ghi):
        raise DomainError(
            f"target {target} outside bracket image [{glo}, {ghi}]")
    tol_abs = tol.abs if tol.abs > 0 else tol.rel * max(abs(lo), abs(hi), 1.0)
    a, b = lo, hi
    for _ in range(max(tol.max_iter, 200)):
        mid = 0.5 * (a + b)
        gm = g(mid)
        if abs(gm - target) <= tol_abs or (b - a) <= tol_abs:
            return mid
        if gm < target:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    if not (isinstance(x, (int, float)) and math.isfinite(x) and x > 0):
        raise DomainError(f"log_gamma requires finite x > 0, got {x!r}")
    return math.lgamma(x)


def upper_gamma_regularized(r: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(r, x) = Gamma(r, x) / Gamma(r)."""
    if not (math.isfinite(r) and r > 0):
        raise DomainError(f"shape must be finite and positive, got {r!r}")
    if not (math.isfinite(x) and x >= 0):
        raise DomainError(f"x must be finite and non-negative, got {x!r}")
    return float(sp.gammaincc(r, x))


def lower_gamma_regularized(r: float, x: float) -> float:
    """Regularized lower incomplete gamma P(r, x) = 1 - Q(r, x)."""
    if not (math.isfinite(r) and r > 0):
        raise DomainError(f"shape must be finite and positive, got {r!r}")
    if not (math.isfinite(x) and x >= 0):
        raise DomainError(f"x must be finite and non-negative, got {x!r}")
    return float(sp.gammainc(r, x))


def beta_cdf(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not (math.isfinite(a) and a > 0 and math.isfinite(b) and b > 0):
        raise DomainError(f"beta parameters must be positive, got {a!r}, {b!r}")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x must lie in [0, 1], got {x!r}")
    return float(sp.betainc(a, b, x))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return float(sp.ndtri(p))

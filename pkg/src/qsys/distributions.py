"""Seedable variate generation and exact densities for the process building blocks.

Randomness policy, frozen for reproducibility: every consumer receives a
``numpy.random.Generator`` backed by the counter-based Philox4x64 bit
generator keyed by the pair (seed, stream). Distinct (seed, stream) pairs
give statistically independent streams, and an identical pair reproduces the
identical variate sequence on every platform. Samplers draw from the
generator in the documented order, so golden values stay stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc

from .numerics import DomainError, NumericError

_U64 = 2 ** 64


@dataclass(frozen=True)
class RngState:
    """Seed plus sub-stream index identifying one reproducible random stream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < _U64):
            raise DomainError("seed must fit in an unsigned 64-bit integer")
        if not (0 <= self.stream < _U64):
            raise DomainError("stream must fit in an unsigned 64-bit integer")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, offset: int) -> "RngState":
        return RngState(self.seed, (self.stream + offset) % _U64)


@dataclass(frozen=True)
class GammaParams:
    """Shape/rate parameters; mean is shape/rate."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise DomainError(f"shape must be positive, got {self.shape!r}")
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise DomainError(f"rate must be positive, got {self.rate!r}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate


@dataclass(frozen=True)
class DirichletSymParams:
    """Symmetric Dirichlet: dimension n, common concentration r."""

    n: int
    r: float

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1):
            raise DomainError(f"dimension must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.r) and self.r > 0):
            raise DomainError(f"concentration must be positive, got {self.r!r}")


def sample_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    """One U[lo, hi) variate."""
    if not (lo < hi):
        raise DomainError(f"need lo < hi, got [{lo}, {hi})")
    return float(rng.uniform(lo, hi))


def sample_gamma(rng: np.random.Generator, p: GammaParams) -> float:
    """One Gamma(shape, rate) variate; any real shape > 0 is supported."""
    return float(rng.standard_gamma(p.shape)) / p.rate


def forward_gamma_pdf(p: GammaParams, x) -> float | np.ndarray:
    """Density of the stationary forward recurrence time of a Gamma renewal
    process: (rate/shape) * Q(shape, rate*x) for x >= 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise DomainError("forward_gamma_pdf requires finite x >= 0")
    out = (p.rate / p.shape) * gammaincc(p.shape, p.rate * arr)
    return float(out) if arr.ndim == 0 else out


def forward_gamma_cdf(p: GammaParams, x: float) -> float:
    """CDF matching forward_gamma_pdf, via incomplete-gamma identities."""
    if not math.isfinite(x):
        raise DomainError("x must be finite")
    if x <= 0:
        return 0.0
    q = float(gammaincc(p.shape, p.rate * x))
    return (p.rate / p.shape) * x * q + float(gammainc(p.shape + 1.0, p.rate * x))


def sample_forward_gamma(rng: np.random.Generator, p: GammaParams) -> float:
    """One variate of the stationary forward recurrence distribution.

    Uses the equilibrium identity: U * G with G ~ Gamma(shape+1, rate)
    (length-biased inter-arrival) and U ~ U(0,1) independent. Draw order:
    gamma first, then uniform.
    """
    g = float(rng.standard_gamma(p.shape + 1.0)) / p.rate
    u = float(rng.random())
    return u * g


def sample_dirichlet_sym(rng: np.random.Generator, p: DirichletSymParams) -> np.ndarray:
    """Symmetric Dirichlet vector via normalized Gamma(r, 1) draws.

    Valid for any real r > 0. Underflowed all-zero draws (possible only for
    extremely small r) are retried a bounded number of times.
    """
    for _ in range(8):
        g = rng.standard_gamma(p.r, size=p.n)
        total = g.sum()
        if total > 0 and np.all(g > 0):
            return g / total
    raise NumericError(
        f"gamma draws underflowed to zero for Dirichlet with r={p.r}")

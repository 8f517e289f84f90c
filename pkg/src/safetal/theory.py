"""Local-exploration guarantees for safe learning with stationary kernels.

Provides the probability bound on a far-away point being classified safe,
the largest covariance level delta at which that bound stays below a chosen
safety level, and the resulting exploration radius in input space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .kernels import KernelFamily, radius_for_delta

_BISECT_TOL = 1e-10


@dataclass(frozen=True)
class BoundInputs:
    """Scalar inputs of the safety probability bound.

    delta must lie in the open interval (0, sqrt(k_scale) * sigma / sqrt(N)).
    The bound additionally assumes the observed safety values satisfy
    ||z|| <= sqrt(N); that is a property of the data, not checked here.
    """

    N: int
    delta: float
    sigma: float
    k_scale: float
    T: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be a positive count")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.k_scale > 0:
            raise ValueError("k_scale must be positive")
        upper = math.sqrt(self.k_scale) * self.sigma / math.sqrt(self.N)
        if not (0.0 < self.delta < upper):
            raise ValueError(
                f"delta={self.delta!r} outside open interval (0, {upper:.6g})"
            )


def safety_probability_bound(b: BoundInputs) -> float:
    """Upper bound on p(q(x*) >= T) for x* at least radius r from all data.

    Phi( (N delta / sigma^2 - T) / sqrt(k_scale - N delta^2 / sigma^2) ).
    """
    num = b.N * b.delta / b.sigma**2 - b.T
    denom = math.sqrt(b.k_scale - b.N * (b.delta / b.sigma) ** 2)
    return float(ndtr(num / denom))


def _bound_argument(delta: float, beta_sqrt: float, T: float,
                    k_scale: float, N: int, sigma: float) -> float:
    num = N * delta / sigma**2 - T
    inner = k_scale - N * (delta / sigma) ** 2
    if inner <= 0:
        return math.inf
    return num / math.sqrt(inner) - beta_sqrt


def find_delta(beta: float, T: float, k_scale: float, N: int,
               sigma: float) -> Optional[float]:
    """Largest delta in (0, sqrt(k_scale) sigma / sqrt(N)) with bound <= Phi(sqrt(beta)).

    Returns None when no such delta exists: this requires either T >= 0 with
    sqrt(beta) > 0, or T < 0 with sqrt(beta) > |T| / sqrt(k_scale).
    """
    if N < 1:
        raise ValueError("N must be a positive count")
    if sigma <= 0 or k_scale <= 0:
        raise ValueError("sigma and k_scale must be positive")
    if beta <= 0:
        return None
    beta_sqrt = math.sqrt(beta)
    if T < 0 and beta_sqrt <= abs(T) / math.sqrt(k_scale):
        return None
    delta_max = math.sqrt(k_scale) * sigma / math.sqrt(N)

    # g(delta) = bound argument - sqrt(beta); increasing in delta, -> +inf at
    # the upper edge, with g(0+) = -T/sqrt(k_scale) - sqrt(beta) < 0 here.
    lo = 0.0
    hi = delta_max
    if _bound_argument(hi * (1.0 - 1e-12), beta_sqrt, T, k_scale, N, sigma) <= 0:
        return hi * (1.0 - 1e-12)
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if _bound_argument(mid, beta_sqrt, T, k_scale, N, sigma) <= 0:
            lo = mid
        else:
            hi = mid
    return lo if lo > 0 else None


def exploration_radius(family: KernelFamily, lengthscales: Sequence[float],
                       beta: float, T: float, N: int, sigma: float,
                       k_scale: float) -> Optional[float]:
    """Input-space radius beyond which points cannot be classified safe.

    Converts the covariance level delta to a distance through the kernel
    profile, then rescales by the largest lengthscale (conservative for
    anisotropic kernels since ||d/l|| >= ||d|| / max(l)).

    Returns None when no delta exists (trivially-safe prior regime: the
    prior alone already satisfies the safety level everywhere).
    """
    delta = find_delta(beta, T, k_scale, N, sigma)
    if delta is None:
        return None
    ls = np.atleast_1d(np.asarray(lengthscales, dtype=float))
    if ls.size < 1 or not np.all(ls > 0):
        raise ValueError("lengthscales must be positive")
    # radius_for_delta works on the unit-variance profile, hence delta/k_scale
    return float(np.max(ls)) * radius_for_delta(family, delta / k_scale)


def beta_from_alpha(alpha: float) -> float:
    """beta = (Phi^-1(1 - alpha))^2 for a tail mass alpha in (0, 0.5)."""
    if not (0.0 < alpha < 0.5):
        raise ValueError("alpha must be in (0, 0.5)")
    return float(ndtri(1.0 - alpha)) ** 2


def alpha_from_beta(beta: float) -> float:
    """Tail mass alpha = 1 - Phi(sqrt(beta)) for beta > 0."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return float(1.0 - ndtr(math.sqrt(beta)))

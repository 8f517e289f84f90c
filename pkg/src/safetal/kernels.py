"""Stationary base kernels, multi-output kernel constructions and the
distance-to-covariance inverse used by the exploration-bound analysis.

All kernel objects are immutable; evaluation is pure.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq


class KernelFamily(enum.Enum):
    RBF = "rbf"
    MATERN12 = "matern12"
    MATERN32 = "matern32"
    MATERN52 = "matern52"


SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)


def _base_value(family: KernelFamily, r):
    """Unit-scale kernel value at scaled distance r (array friendly)."""
    r = np.asarray(r, dtype=float)
    if family is KernelFamily.RBF:
        return np.exp(-0.5 * r * r)
    if family is KernelFamily.MATERN12:
        return np.exp(-r)
    if family is KernelFamily.MATERN32:
        return (1.0 + SQRT3 * r) * np.exp(-SQRT3 * r)
    if family is KernelFamily.MATERN52:
        return (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)
    raise ValueError(f"unknown kernel family: {family}")


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel: scale * base(||(x - x') / lengthscales||)."""

    family: KernelFamily
    lengthscales: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ValueError("lengthscales must be a positive finite vector")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError("scale must be positive and finite")
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def with_params(self, lengthscales=None, scale=None) -> "KernelSpec":
        out = self
        if lengthscales is not None:
            out = replace(out, lengthscales=np.asarray(lengthscales, dtype=float))
        if scale is not None:
            out = replace(out, scale=float(scale))
        return out


def _scaled_dists(spec: KernelSpec, X: np.ndarray, X_prime: np.ndarray) -> np.ndarray:
    """Pairwise ||(x - x') / l|| for rows of X against rows of X_prime.

    Computed from explicit coordinate differences rather than the expanded
    inner-product form: the cancellation noise of the latter puts tiny
    nonzero distances on the Gram diagonal, which the Matern-1/2 kernel
    (non-smooth at r = 0) turns into spurious 1e-8 diagonal perturbations.
    """
    diffs = (X[:, None, :] - X_prime[None, :, :]) / spec.lengthscales
    return np.sqrt(np.einsum("ijd,ijd->ij", diffs, diffs))


def _check_inputs(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.dim:
        raise ValueError(
            f"input dimension {X.shape[1]} does not match lengthscale vector "
            f"of length {spec.dim}"
        )
    return X


def eval_kernel(spec: KernelSpec, x, x_prime) -> float:
    """Kernel value between two points."""
    X = _check_inputs(spec, np.atleast_1d(x)[None, :] if np.ndim(x) <= 1 else x)
    Xp = _check_inputs(spec, np.atleast_1d(x_prime)[None, :] if np.ndim(x_prime) <= 1 else x_prime)
    return float(spec.scale * _base_value(spec.family, _scaled_dists(spec, X, Xp))[0, 0])


def kernel_matrix(spec: KernelSpec, X, X_prime=None) -> np.ndarray:
    """Gram matrix between rows of X and rows of X_prime (X itself if None)."""
    X = _check_inputs(spec, X)
    Xp = X if X_prime is None else _check_inputs(spec, X_prime)
    return spec.scale * _base_value(spec.family, _scaled_dists(spec, X, Xp))


def radius_for_delta(family: KernelFamily, delta: float) -> float:
    """Smallest r (in lengthscale units) with unit-scale kernel value <= delta.

    Closed form for RBF and Matern-1/2; monotone bisection for Matern-3/2
    and Matern-5/2.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if family is KernelFamily.RBF:
        return math.sqrt(-2.0 * math.log(delta))
    if family is KernelFamily.MATERN12:
        return -math.log(delta)
    # Matern-3/2 and -5/2 decay monotonically; bracket [0, 50] covers any
    # delta representable above the exp underflow of the bracket endpoint.
    return float(
        brentq(lambda r: float(_base_value(family, r)) - delta, 0.0, 50.0, xtol=1e-6)
    )


class TaskKind(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class TaskTag:
    kind: TaskKind
    source_index: int = 0  # 1-based, only meaningful for SOURCE

    @staticmethod
    def source(p: int) -> "TaskTag":
        if p < 1:
            raise ValueError("source index is 1-based")
        return TaskTag(TaskKind.SOURCE, p)

    @staticmethod
    def target() -> "TaskTag":
        return TaskTag(TaskKind.TARGET)


@dataclass(frozen=True)
class LMCKernel:
    """Linear model of coregionalization over P source tasks and one target.

    Task covariance of latent l is W_l W_l^T + diag(kappa); latent base
    kernels have scale fixed to 1 (absorbed into W and kappa).
    """

    latent_base_kernels: tuple
    W: np.ndarray       # (n_latents, P+1)
    kappa: np.ndarray   # (P+1,) positive

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        kernels = tuple(self.latent_base_kernels)
        n_tasks = kappa.shape[0]
        if W.shape != (len(kernels), n_tasks):
            raise ValueError("W must have shape (n_latents, n_tasks)")
        if np.any(kappa <= 0):
            raise ValueError("kappa entries must be positive")
        for k in kernels:
            if abs(k.scale - 1.0) > 1e-12:
                raise ValueError("LMC latent base kernels must have scale 1")
        object.__setattr__(self, "latent_base_kernels", kernels)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "kappa", kappa)

    @property
    def n_sources(self) -> int:
        return self.kappa.shape[0] - 1

    def task_covariances(self) -> np.ndarray:
        """Per-latent (P+1)x(P+1) coregionalization matrices."""
        B = np.einsum("li,lj->lij", self.W, self.W)
        B += np.diag(self.kappa)[None, :, :]
        return B


@dataclass(frozen=True)
class HGPKernel:
    """Hierarchical multi-output kernel.

    Tasks are ordered source 1..P then target.  Covariance between tasks a
    and b is the sum of the hierarchy kernels up to level min(a, b); the
    target adds a task-specific residual on top of all source levels.
    """

    source_kernels: tuple
    target_residual_kernel: KernelSpec

    def __post_init__(self):
        object.__setattr__(self, "source_kernels", tuple(self.source_kernels))
        if not self.source_kernels:
            raise ValueError("HGP needs at least one source-level kernel")

    @property
    def n_sources(self) -> int:
        return len(self.source_kernels)

    @property
    def levels(self) -> tuple:
        return self.source_kernels + (self.target_residual_kernel,)


@dataclass(frozen=True)
class MultiTaskKernelSpec:
    variant: object  # LMCKernel | HGPKernel

    @property
    def n_sources(self) -> int:
        return self.variant.n_sources

    @property
    def is_lmc(self) -> bool:
        return isinstance(self.variant, LMCKernel)


def _task_index(spec: MultiTaskKernelSpec, tag: TaskTag) -> int:
    P = spec.n_sources
    if tag.kind is TaskKind.TARGET:
        return P
    if not (1 <= tag.source_index <= P):
        raise ValueError(f"source index {tag.source_index} outside 1..{P}")
    return tag.source_index - 1


def multitask_matrix(
    spec: MultiTaskKernelSpec,
    X_a: np.ndarray,
    tag_a: TaskTag,
    X_b: np.ndarray,
    tag_b: TaskTag,
) -> np.ndarray:
    """Cross-covariance block between two task-tagged point sets."""
    a = _task_index(spec, tag_a)
    b = _task_index(spec, tag_b)
    v = spec.variant
    if isinstance(v, LMCKernel):
        B = v.task_covariances()
        out = None
        for l, k_l in enumerate(v.latent_base_kernels):
            w = B[l, a, b]
            if w == 0.0:
                continue
            block = w * kernel_matrix(k_l, X_a, X_b)
            out = block if out is None else out + block
        if out is None:
            out = np.zeros((np.atleast_2d(X_a).shape[0], np.atleast_2d(X_b).shape[0]))
        return out
    if isinstance(v, HGPKernel):
        levels = v.levels[: min(a, b) + 1]
        out = kernel_matrix(levels[0], X_a, X_b)
        for k in levels[1:]:
            out = out + kernel_matrix(k, X_a, X_b)
        return out
    raise ValueError(f"unknown multitask kernel variant: {type(v)}")


def eval_multitask_kernel(spec: MultiTaskKernelSpec, a, b) -> float:
    """Kernel value between two (point, TaskTag) pairs."""
    x_a, tag_a = a
    x_b, tag_b = b
    X_a = np.atleast_2d(np.asarray(x_a, dtype=float))
    X_b = np.atleast_2d(np.asarray(x_b, dtype=float))
    return float(multitask_matrix(spec, X_a, tag_a, X_b, tag_b)[0, 0])


def target_prior_variance(spec: MultiTaskKernelSpec) -> float:
    """k((x,t),(x,t)) for any x; the target task's prior variance."""
    v = spec.variant
    if isinstance(v, LMCKernel):
        B = v.task_covariances()
        return float(B[:, -1, -1].sum())
    return float(sum(k.scale for k in v.levels))

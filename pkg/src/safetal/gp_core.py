"""Single-task Gaussian process regression.

Cholesky-backed posterior inference, exact log marginal likelihood with
analytic gradients, and type-II maximum-likelihood fitting of kernel and
noise hyperparameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .kernels import SQRT3, SQRT5, KernelFamily, KernelSpec, kernel_matrix

LOG_2PI = math.log(2.0 * math.pi)

# relative jitter ladder applied to the mean diagonal before giving up
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

# log-space box constraints on (lengthscales, scale, noise variance)
LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SCALE_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (1e-6, 1e1)


class FactorizationError(RuntimeError):
    """Matrix not positive definite after the jitter ladder."""


class FitError(RuntimeError):
    """No hyperparameter restart produced a finite marginal likelihood."""


@dataclass(frozen=True)
class LabeledDataset:
    """Inputs X (N x D), main output y (N) and safety observations Z (N x J)."""

    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if X.shape[0] != y.shape[0] or X.shape[0] != Z.shape[0]:
            raise ValueError("X, y, Z row counts disagree")
        for arr in (X, y, Z):
            if not np.all(np.isfinite(arr)):
                raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.Z.shape[1]

    def append(self, x, y_new, z_new) -> "LabeledDataset":
        return LabeledDataset(
            np.vstack([self.X, np.atleast_2d(x)]),
            np.append(self.y, y_new),
            np.vstack([self.Z, np.atleast_2d(z_new)]),
        )


@dataclass(frozen=True)
class _TrainingCache:
    X: np.ndarray
    targets: np.ndarray
    L: np.ndarray
    alpha: np.ndarray  # (K + sigma^2 I)^-1 targets


@dataclass(frozen=True)
class GPModel:
    kernel: KernelSpec
    noise_variance: float
    cache: Optional[_TrainingCache] = None

    def __post_init__(self):
        if not (self.noise_variance > 0 and np.isfinite(self.noise_variance)):
            raise ValueError("noise variance must be positive")

    def with_params(self, lengthscales=None, scale=None, noise_variance=None) -> "GPModel":
        kern = self.kernel.with_params(lengthscales, scale)
        nv = self.noise_variance if noise_variance is None else float(noise_variance)
        return GPModel(kern, nv, cache=None)

    def with_cache(self, X, targets) -> "GPModel":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        targets = np.asarray(targets, dtype=float)
        K = kernel_matrix(self.kernel, X) + self.noise_variance * np.eye(X.shape[0])
        L = cholesky_spd(K)
        alpha = cho_solve((L, True), targets)
        return replace(self, cache=_TrainingCache(X, targets, L, alpha))


def cholesky_spd(A: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor, escalating through the jitter ladder."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    n = A.shape[0]
    if n == 0:
        return A.copy()
    mean_diag = float(np.trace(A)) / n
    for jit in JITTER_LADDER:
        try:
            return np.linalg.cholesky(A + (jit * mean_diag) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        f"matrix of size {n} not positive definite after jitter {JITTER_LADDER[-1]:g}"
    )


def posterior(model: GPModel, X, targets, test_X):
    """Predictive mean and variance at test points.

    mean = k*^T (K + s^2 I)^-1 y,  var = k(x*,x*) - k*^T (K + s^2 I)^-1 k*.
    """
    test_X = np.atleast_2d(np.asarray(test_X, dtype=float))
    prior_var = model.kernel.scale
    if X is None or np.size(X) == 0:
        m = test_X.shape[0]
        return np.zeros(m), np.full(m, prior_var)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    targets = np.asarray(targets, dtype=float)
    cache = model.cache
    if cache is None or cache.X.shape != X.shape or not np.array_equal(cache.X, X) \
            or not np.array_equal(cache.targets, targets):
        model = model.with_cache(X, targets)
        cache = model.cache
    k_star = kernel_matrix(model.kernel, X, test_X)
    mean = k_star.T @ cache.alpha
    w = solve_triangular(cache.L, k_star, lower=True)
    var = prior_var - np.sum(w * w, axis=0)
    return mean, np.maximum(var, 0.0)


def log_marginal_likelihood(model: GPModel, X, targets) -> float:
    """log N(targets | 0, K + noise * I)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    targets = np.asarray(targets, dtype=float)
    n = X.shape[0]
    if n < 1:
        raise ValueError("need at least one observation")
    K = kernel_matrix(model.kernel, X) + model.noise_variance * np.eye(n)
    L = cholesky_spd(K)
    alpha = cho_solve((L, True), targets)
    return float(
        -0.5 * targets @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
    )


def _kernel_grads(spec: KernelSpec, X: np.ndarray):
    """K and its gradients w.r.t. each log-lengthscale and log-scale."""
    diffs = X[:, None, :] - X[None, :, :]          # (n, n, D)
    U = (diffs / spec.lengthscales) ** 2           # per-dimension squared scaled terms
    r = np.sqrt(np.maximum(U.sum(axis=2), 0.0))
    s = spec.scale
    fam = spec.family
    if fam is KernelFamily.RBF:
        G = np.exp(-0.5 * r * r)
        factor = G
    elif fam is KernelFamily.MATERN12:
        G = np.exp(-r)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(r > 0, G / r, 0.0)
    elif fam is KernelFamily.MATERN32:
        e = np.exp(-SQRT3 * r)
        G = (1.0 + SQRT3 * r) * e
        factor = 3.0 * e
    elif fam is KernelFamily.MATERN52:
        e = np.exp(-SQRT5 * r)
        G = (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e
        factor = (5.0 / 3.0) * (1.0 + SQRT5 * r) * e
    else:
        raise ValueError(f"unknown kernel family: {fam}")
    K = s * G
    dK_dlog_l = s * factor[:, :, None] * U         # (n, n, D)
    return K, dK_dlog_l, K  # last entry: dK/dlog_scale == K


def lml_and_gradient(model: GPModel, X, targets):
    """LML and its gradient w.r.t. (log lengthscales, log scale, log noise)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    targets = np.asarray(targets, dtype=float)
    n = X.shape[0]
    K, dK_dlog_l, dK_dlog_s = _kernel_grads(model.kernel, X)
    C = K + model.noise_variance * np.eye(n)
    L = cholesky_spd(C)
    alpha = cho_solve((L, True), targets)
    lml = float(-0.5 * targets @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)
    C_inv = cho_solve((L, True), np.eye(n))
    M = np.outer(alpha, alpha) - C_inv
    grad_l = 0.5 * np.einsum("ij,ijd->d", M, dK_dlog_l)
    grad_s = 0.5 * float(np.sum(M * dK_dlog_s))
    grad_noise = 0.5 * model.noise_variance * float(np.trace(M))
    return lml, np.concatenate([grad_l, [grad_s], [grad_noise]])


@dataclass(frozen=True)
class FitOptions:
    n_restarts: int = 5
    seed: int = 0
    fix_scale: bool = False
    max_iterations: int = 200
    lengthscale_bounds: tuple = LENGTHSCALE_BOUNDS
    scale_bounds: tuple = SCALE_BOUNDS
    noise_bounds: tuple = NOISE_BOUNDS
    # restart draws come from a narrower log-uniform range than the hard box
    restart_lengthscale_range: tuple = (0.03, 5.0)
    restart_scale_range: tuple = (0.1, 10.0)
    restart_noise_range: tuple = (1e-4, 0.5)


def _pack(model: GPModel, fix_scale: bool) -> np.ndarray:
    p = list(np.log(model.kernel.lengthscales))
    if not fix_scale:
        p.append(math.log(model.kernel.scale))
    p.append(math.log(model.noise_variance))
    return np.array(p)


def _unpack(model: GPModel, p: np.ndarray, fix_scale: bool) -> GPModel:
    D = model.kernel.dim
    ls = np.exp(p[:D])
    if fix_scale:
        scale = model.kernel.scale
        noise = math.exp(p[D])
    else:
        scale = math.exp(p[D])
        noise = math.exp(p[D + 1])
    return model.with_params(lengthscales=ls, scale=scale, noise_variance=noise)


def fit(model: GPModel, X, targets, opts: FitOptions = FitOptions()) -> GPModel:
    """Maximize the log marginal likelihood over kernel and noise parameters.

    Multi-restart L-BFGS-B on the log parameters; the best finite restart
    wins and the returned model carries a fresh training cache.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    targets = np.asarray(targets, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("fitting needs at least two observations")
    D = model.kernel.dim
    fix_scale = opts.fix_scale
    rng = np.random.default_rng(opts.seed)

    bounds = [tuple(np.log(opts.lengthscale_bounds))] * D
    if not fix_scale:
        bounds.append(tuple(np.log(opts.scale_bounds)))
    bounds.append(tuple(np.log(opts.noise_bounds)))

    def objective(p):
        try:
            lml, grad = lml_and_gradient(_unpack(model, p, fix_scale), X, targets)
        except FactorizationError:
            return np.inf, np.zeros_like(p)
        if not np.isfinite(lml):
            return np.inf, np.zeros_like(p)
        if fix_scale:
            grad = np.concatenate([grad[:D], grad[D + 1:]])
        return -lml, -grad

    starts = [_pack(model, fix_scale)]
    for _ in range(max(opts.n_restarts - 1, 0)):
        p = list(rng.uniform(*np.log(opts.restart_lengthscale_range), size=D))
        if not fix_scale:
            p.append(rng.uniform(*np.log(opts.restart_scale_range)))
        p.append(rng.uniform(*np.log(opts.restart_noise_range)))
        starts.append(np.array(p))

    best_p, best_val = None, np.inf
    for p0 in starts:
        p0 = np.clip(p0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(
            objective, p0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": opts.max_iterations},
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_p = res.fun, res.x
    if best_p is None:
        raise FitError("all restarts diverged; keeping incoming parameters")

    fitted = _unpack(model, best_p, fix_scale)
    return fitted.with_cache(X, targets)

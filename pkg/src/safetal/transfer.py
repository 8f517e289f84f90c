"""Multi-output GP inference and fitting over source and target tasks.

Joint block covariance over sources and target, the two-step block Cholesky
that reuses a cached source factor, and the two fitting regimes: full joint
fitting of all parameters and modular fitting where source parameters are
frozen after a source-only fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from . import gp_core
from .gp_core import (
    LOG_2PI,
    NOISE_BOUNDS,
    FitError,
    FitOptions,
    GPModel,
    cholesky_spd,
)
from .kernels import (
    HGPKernel,
    LMCKernel,
    MultiTaskKernelSpec,
    TaskTag,
    multitask_matrix,
    target_prior_variance,
)


class ConfigurationError(ValueError):
    """Requested model/algorithm combination is not supported."""


@dataclass(frozen=True)
class TaskData:
    """Observations of one task: inputs X (N x D) and values (N,)."""

    X: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 1)
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if X.shape[0] != v.shape[0]:
            raise ValueError("X and values row counts disagree")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class SourceCache:
    """Frozen source-side quantities shared across target refits.

    L_source factorizes the joint source block (kernel plus per-source
    noise); w_source = L_source^{-1} y_source is the half-solved weight
    vector reused by every likelihood evaluation.
    """

    source_X: tuple            # per-task input arrays
    L_source: np.ndarray
    w_source: np.ndarray
    log_det_half: float        # sum log diag L_source

    @property
    def n_points(self) -> int:
        return self.L_source.shape[0]


@dataclass(frozen=True)
class TransferModel:
    kernel: MultiTaskKernelSpec
    source_noise_variances: tuple
    target_noise_variance: float
    source_cache: Optional[SourceCache] = None

    def __post_init__(self):
        snv = tuple(float(v) for v in self.source_noise_variances)
        if len(snv) != self.kernel.n_sources:
            raise ValueError("need one source noise variance per source task")
        if any(v <= 0 for v in snv) or self.target_noise_variance <= 0:
            raise ValueError("noise variances must be positive")
        object.__setattr__(self, "source_noise_variances", snv)

    @property
    def n_sources(self) -> int:
        return self.kernel.n_sources


def _source_blocks(model: TransferModel, source_X: Sequence[np.ndarray]):
    return [
        (np.atleast_2d(np.asarray(X, dtype=float)), TaskTag.source(p + 1),
         model.source_noise_variances[p])
        for p, X in enumerate(source_X)
    ]


def _assemble(model: TransferModel, blocks) -> np.ndarray:
    """Symmetric joint covariance over task-tagged blocks with noise diag."""
    sizes = [b[0].shape[0] for b in blocks]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    n = offs[-1]
    out = np.zeros((n, n))
    for i, (Xi, ti, nvi) in enumerate(blocks):
        if sizes[i] == 0:
            continue
        for j in range(i, len(blocks)):
            Xj, tj, _ = blocks[j]
            if sizes[j] == 0:
                continue
            B = multitask_matrix(model.kernel, Xi, ti, Xj, tj)
            out[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = B
            if j > i:
                out[offs[j]:offs[j + 1], offs[i]:offs[i + 1]] = B.T
        idx = np.arange(offs[i], offs[i + 1])
        out[idx, idx] += nvi
    return out


def joint_covariance(model: TransferModel, source_X: Sequence[np.ndarray],
                     target_X) -> np.ndarray:
    """Block covariance: sources 1..P then target, noise on the diagonal."""
    if len(source_X) != model.n_sources:
        raise ValueError("one source input array per source task required")
    target_X = np.atleast_2d(np.asarray(target_X, dtype=float))
    blocks = _source_blocks(model, source_X)
    blocks.append((target_X, TaskTag.target(), model.target_noise_variance))
    return _assemble(model, blocks)


def two_step_cholesky(L_source: np.ndarray, K_cross: np.ndarray,
                      K_target_block: np.ndarray) -> np.ndarray:
    """Factor [[S, C], [C^T, T]] reusing L_source = chol(S).

    L = [[L_s, 0], [A^T, chol(T - A^T A)]] with A = L_s^{-1} C.  Only the
    N x N Schur complement is factorized fresh.
    """
    ns = L_source.shape[0]
    n = K_target_block.shape[0]
    if K_cross.shape != (ns, n):
        raise ValueError("cross block shape mismatch")
    if ns == 0:
        return cholesky_spd(K_target_block)
    A = solve_triangular(L_source, K_cross, lower=True)
    schur = K_target_block - A.T @ A
    L_t = cholesky_spd(schur)
    L = np.zeros((ns + n, ns + n))
    L[:ns, :ns] = L_source
    L[ns:, :ns] = A.T
    L[ns:, ns:] = L_t
    return L


def _stack_values(source_data: Sequence[TaskData], target_data: TaskData):
    parts = [d.values for d in source_data] + [target_data.values]
    return np.concatenate(parts) if parts else np.zeros(0)


def _cross_to_test(model: TransferModel, source_data, target_data, test_X):
    """Covariance between all training points and test points at target task."""
    tt = TaskTag.target()
    parts = []
    for p, d in enumerate(source_data):
        if d.n:
            parts.append(multitask_matrix(model.kernel, d.X, TaskTag.source(p + 1),
                                          test_X, tt))
    if target_data.n:
        parts.append(multitask_matrix(model.kernel, target_data.X, tt, test_X, tt))
    if not parts:
        return np.zeros((0, test_X.shape[0]))
    return np.vstack(parts)


def _joint_factor(model: TransferModel, source_data, target_data) -> np.ndarray:
    """L(Omega); goes through the cached source factor when applicable."""
    cache = model.source_cache
    source_X = [d.X for d in source_data]
    if cache is not None and all(
        np.array_equal(cx, dx) for cx, dx in zip(cache.source_X, source_X)
    ):
        K_cross = _cross_source_target(model, source_data, target_data.X)
        K_t = multitask_matrix(model.kernel, target_data.X, TaskTag.target(),
                               target_data.X, TaskTag.target())
        K_t = K_t + model.target_noise_variance * np.eye(target_data.n)
        return two_step_cholesky(cache.L_source, K_cross, K_t)
    omega = joint_covariance(model, source_X, target_data.X)
    return cholesky_spd(omega)


def _cross_source_target(model: TransferModel, source_data, target_X) -> np.ndarray:
    target_X = np.atleast_2d(np.asarray(target_X, dtype=float))
    parts = []
    for p, d in enumerate(source_data):
        parts.append(multitask_matrix(model.kernel, d.X, TaskTag.source(p + 1),
                                      target_X, TaskTag.target()))
    if not parts:
        return np.zeros((0, target_X.shape[0]))
    return np.vstack(parts)


def transfer_posterior(model: TransferModel, source_data: Sequence[TaskData],
                       target_data: TaskData, test_X):
    """Predictive mean and variance at the target task."""
    test_X = np.atleast_2d(np.asarray(test_X, dtype=float))
    prior_var = target_prior_variance(model.kernel)
    n_train = sum(d.n for d in source_data) + target_data.n
    if n_train == 0:
        m = test_X.shape[0]
        return np.zeros(m), np.full(m, prior_var)
    L = _joint_factor(model, source_data, target_data)
    y = _stack_values(source_data, target_data)
    v = _cross_to_test(model, source_data, target_data, test_X)
    alpha = cho_solve((L, True), y)
    mean = v.T @ alpha
    w = solve_triangular(L, v, lower=True)
    var = prior_var - np.sum(w * w, axis=0)
    return mean, np.maximum(var, 0.0)


def transfer_lml(model: TransferModel, source_data, target_data) -> float:
    """Joint log marginal likelihood over source and target observations."""
    y = _stack_values(source_data, target_data)
    n = y.shape[0]
    if n < 1:
        raise ValueError("need at least one observation")
    L = _joint_factor(model, source_data, target_data)
    u = solve_triangular(L, y, lower=True)
    return float(-0.5 * u @ u - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


# ---------------------------------------------------------------------------
# Parameter packing for the two fitting regimes
# ---------------------------------------------------------------------------

_W_BOUND = 10.0


def _pack_model(model: TransferModel, modular: bool):
    """Return (p0, bounds, unpack) for the free parameters of the model."""
    variant = model.kernel.variant
    ls_lo, ls_hi = np.log(gp_core.LENGTHSCALE_BOUNDS)
    sc_lo, sc_hi = np.log(gp_core.SCALE_BOUNDS)
    nz_lo, nz_hi = np.log(NOISE_BOUNDS)

    if isinstance(variant, HGPKernel):
        if modular:
            kernels = (variant.target_residual_kernel,)
        else:
            kernels = variant.levels
        p0, bounds = [], []
        for k in kernels:
            p0.extend(np.log(k.lengthscales))
            bounds.extend([(ls_lo, ls_hi)] * k.dim)
            p0.append(math.log(k.scale))
            bounds.append((sc_lo, sc_hi))
        if not modular:
            for nv in model.source_noise_variances:
                p0.append(math.log(nv))
                bounds.append((nz_lo, nz_hi))
        p0.append(math.log(model.target_noise_variance))
        bounds.append((nz_lo, nz_hi))

        def unpack(p):
            i = 0
            new_kernels = []
            for k in kernels:
                ls = np.exp(p[i:i + k.dim]); i += k.dim
                sc = math.exp(p[i]); i += 1
                new_kernels.append(k.with_params(ls, sc))
            if modular:
                new_variant = replace(variant, target_residual_kernel=new_kernels[0])
                snv = model.source_noise_variances
            else:
                new_variant = HGPKernel(tuple(new_kernels[:-1]), new_kernels[-1])
                snv = tuple(math.exp(v) for v in p[i:i + len(model.source_noise_variances)])
                i += len(snv)
            tnv = math.exp(p[i])
            return replace(model, kernel=MultiTaskKernelSpec(new_variant),
                           source_noise_variances=snv, target_noise_variance=tnv)

        return np.array(p0), bounds, unpack

    if isinstance(variant, LMCKernel):
        if modular:
            raise ConfigurationError(
                "source precomputation requires a hierarchical kernel; "
                "the coregionalization variant must be fitted jointly"
            )
        n_latents = len(variant.latent_base_kernels)
        n_tasks = variant.kappa.shape[0]
        p0, bounds = [], []
        for k in variant.latent_base_kernels:
            p0.extend(np.log(k.lengthscales))
            bounds.extend([(ls_lo, ls_hi)] * k.dim)
        p0.extend(variant.W.ravel())
        bounds.extend([(-_W_BOUND, _W_BOUND)] * (n_latents * n_tasks))
        p0.extend(np.log(variant.kappa))
        bounds.extend([(math.log(1e-6), math.log(1e2))] * n_tasks)
        for nv in model.source_noise_variances:
            p0.append(math.log(nv))
            bounds.append((nz_lo, nz_hi))
        p0.append(math.log(model.target_noise_variance))
        bounds.append((nz_lo, nz_hi))

        def unpack(p):
            i = 0
            new_kernels = []
            for k in variant.latent_base_kernels:
                ls = np.exp(p[i:i + k.dim]); i += k.dim
                new_kernels.append(k.with_params(ls, 1.0))
            W = np.array(p[i:i + n_latents * n_tasks]).reshape(n_latents, n_tasks)
            i += n_latents * n_tasks
            kappa = np.exp(p[i:i + n_tasks]); i += n_tasks
            snv = tuple(math.exp(v) for v in p[i:i + len(model.source_noise_variances)])
            i += len(snv)
            tnv = math.exp(p[i])
            new_variant = LMCKernel(tuple(new_kernels), W, kappa)
            return replace(model, kernel=MultiTaskKernelSpec(new_variant),
                           source_noise_variances=snv, target_noise_variance=tnv)

        return np.array(p0), bounds, unpack

    raise ValueError(f"unknown kernel variant: {type(variant)}")


def _maximize(loss, p0, bounds, opts: FitOptions):
    """Multi-restart bounded L-BFGS-B; best finite objective wins."""
    rng = np.random.default_rng(opts.seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts = [np.clip(p0, lo, hi)]
    for _ in range(max(opts.n_restarts - 1, 0)):
        # perturb the incoming point rather than sampling the whole box:
        # coregionalization weights and log-parameters live on very
        # different scales
        starts.append(np.clip(p0 + rng.normal(scale=0.5, size=p0.shape), lo, hi))
    best_p, best_val = None, np.inf
    for s in starts:
        res = minimize(loss, s, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": opts.max_iterations})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_p = res.fun, res.x
    if best_p is None:
        raise FitError("no restart produced a finite marginal likelihood")
    return best_p


def _build_source_cache(model: TransferModel, source_data) -> SourceCache:
    blocks = _source_blocks(model, [d.X for d in source_data])
    K_ss = _assemble(model, blocks)
    L = cholesky_spd(K_ss)
    y_s = np.concatenate([d.values for d in source_data]) if source_data else np.zeros(0)
    w = solve_triangular(L, y_s, lower=True) if y_s.size else y_s
    return SourceCache(
        source_X=tuple(d.X for d in source_data),
        L_source=L,
        w_source=w,
        log_det_half=float(np.sum(np.log(np.diag(L)))) if L.size else 0.0,
    )


def precompute_source(model: TransferModel, source_data: Sequence[TaskData],
                      opts: FitOptions = FitOptions()) -> TransferModel:
    """Fit source-level parameters on source data only, freeze, and cache.

    Under the hierarchical kernel the marginal over source task p is a
    single-task GP with kernel sum(levels up to p), so level kernels are
    fitted sequentially: level 1 directly, each later level with the
    earlier ones frozen.
    """
    variant = model.kernel.variant
    if not isinstance(variant, HGPKernel):
        raise ConfigurationError(
            "source precomputation requires a hierarchical kernel; "
            "the coregionalization variant must be fitted jointly"
        )
    if not source_data or any(d.n == 0 for d in source_data):
        raise ValueError("source precomputation needs nonempty source data")
    if len(source_data) != model.n_sources:
        raise ValueError("one TaskData per source task required")

    # level 1: exact single-task fit on source task 1
    gp = GPModel(variant.source_kernels[0], model.source_noise_variances[0])
    gp = gp_core.fit(gp, source_data[0].X, source_data[0].values, opts)
    new_sources = [gp.kernel]
    new_noises = [gp.noise_variance]

    # later levels: free parameters of level p + its noise, earlier frozen
    for p in range(1, model.n_sources):
        level = variant.source_kernels[p]
        ls_lo, ls_hi = np.log(gp_core.LENGTHSCALE_BOUNDS)
        sc_lo, sc_hi = np.log(gp_core.SCALE_BOUNDS)
        nz_lo, nz_hi = np.log(NOISE_BOUNDS)
        p0 = np.concatenate([np.log(level.lengthscales),
                             [math.log(level.scale)],
                             [math.log(model.source_noise_variances[p])]])
        bounds = [(ls_lo, ls_hi)] * level.dim + [(sc_lo, sc_hi), (nz_lo, nz_hi)]
        frozen_sources = list(new_sources)
        sub_data = source_data[: p + 1]
        frozen_noises = list(new_noises)

        def loss(q, _level=level, _frozen=frozen_sources,
                 _noises=frozen_noises, _data=sub_data):
            # negative LML of the marginal over sources 1..p+1 only
            ls = np.exp(q[:_level.dim])
            sc = math.exp(q[_level.dim])
            nv = math.exp(q[_level.dim + 1])
            noises = tuple(_noises) + (nv,)
            spec = MultiTaskKernelSpec(HGPKernel(
                tuple(_frozen) + (_level.with_params(ls, sc),),
                variant.target_residual_kernel))
            tm = TransferModel(spec, noises, model.target_noise_variance)
            blocks = [(d.X, TaskTag.source(q_idx + 1), noises[q_idx])
                      for q_idx, d in enumerate(_data)]
            K = _assemble(tm, blocks)
            try:
                L = cholesky_spd(K)
            except gp_core.FactorizationError:
                return np.inf
            yv = np.concatenate([d.values for d in _data])
            u = solve_triangular(L, yv, lower=True)
            return float(0.5 * u @ u + np.sum(np.log(np.diag(L)))
                         + 0.5 * yv.size * LOG_2PI)

        best = _maximize(loss, p0, bounds, opts)
        new_sources.append(level.with_params(np.exp(best[:level.dim]),
                                             math.exp(best[level.dim])))
        new_noises.append(math.exp(best[level.dim + 1]))

    new_variant = HGPKernel(tuple(new_sources), variant.target_residual_kernel)
    fitted = replace(model, kernel=MultiTaskKernelSpec(new_variant),
                     source_noise_variances=tuple(new_noises))
    cache = _build_source_cache(fitted, source_data)
    return replace(fitted, source_cache=cache)


def fit_target_given_source(model: TransferModel,
                            source_data: Sequence[TaskData],
                            target_data: TaskData,
                            opts: FitOptions = FitOptions()) -> TransferModel:
    """Maximize the joint LML over target-side parameters only.

    Requires a source cache.  The cross block depends only on frozen source
    kernels, so A = L_source^{-1} K_cross is hoisted out of the likelihood
    loop; each evaluation costs one N x N factorization.
    """
    cache = model.source_cache
    if cache is None:
        raise ConfigurationError("fit_target_given_source requires a source cache")
    if target_data.n < 1:
        raise ValueError("need target observations to fit target parameters")

    K_cross = _cross_source_target(model, source_data, target_data.X)
    A = solve_triangular(cache.L_source, K_cross, lower=True) \
        if cache.n_points else K_cross
    AtA = A.T @ A
    resid = target_data.values - (A.T @ cache.w_source if cache.n_points
                                  else 0.0)
    n_total = cache.n_points + target_data.n
    fixed_quad = float(cache.w_source @ cache.w_source)
    tt = TaskTag.target()

    p0, bounds, unpack = _pack_model(model, modular=True)

    def loss(p):
        trial = unpack(p)
        K_t = multitask_matrix(trial.kernel, target_data.X, tt, target_data.X, tt)
        K_t = K_t + trial.target_noise_variance * np.eye(target_data.n)
        schur = K_t - AtA
        try:
            L_t = cholesky_spd(schur)
        except gp_core.FactorizationError:
            return np.inf
        u_t = solve_triangular(L_t, resid, lower=True)
        lml = (-0.5 * (fixed_quad + float(u_t @ u_t))
               - cache.log_det_half - float(np.sum(np.log(np.diag(L_t))))
               - 0.5 * n_total * LOG_2PI)
        return -lml

    best = _maximize(loss, p0, bounds, opts)
    return unpack(best)


def fit_joint(model: TransferModel, source_data: Sequence[TaskData],
              target_data: TaskData,
              opts: FitOptions = FitOptions()) -> TransferModel:
    """Maximize the joint LML over all kernel and noise parameters."""
    model = replace(model, source_cache=None)
    p0, bounds, unpack = _pack_model(model, modular=False)
    source_X = [d.X for d in source_data]
    y = _stack_values(source_data, target_data)

    def loss(p):
        trial = unpack(p)
        omega = joint_covariance(trial, source_X, target_data.X)
        try:
            L = cholesky_spd(omega)
        except gp_core.FactorizationError:
            return np.inf
        u = solve_triangular(L, y, lower=True)
        return float(0.5 * u @ u + np.sum(np.log(np.diag(L)))
                     + 0.5 * y.size * LOG_2PI)

    best = _maximize(loss, p0, bounds, opts)
    return unpack(best)

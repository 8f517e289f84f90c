"""Safe sequential learning drivers.

Safe-set computation from GP lower confidence bounds, entropy acquisition,
and the three query loops: single-task, transfer with full joint refits,
and transfer with frozen precomputed source parameters.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import gp_core, metrics, transfer
from .datasets import Benchmark, _sample_from_mask
from .gp_core import FitError, FitOptions, GPModel, LabeledDataset
from .kernels import (
    HGPKernel,
    KernelFamily,
    KernelSpec,
    LMCKernel,
    MultiTaskKernelSpec,
)
from .theory import alpha_from_beta, beta_from_alpha  # noqa: F401  (re-export)
from .transfer import TaskData, TransferModel

_MIN_VARIANCE = 1e-12
_HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass
class Pool:
    """Finite candidate set; queried points are never re-selectable."""

    X: np.ndarray
    alive: np.ndarray = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.alive is None:
            self.alive = np.ones(self.X.shape[0], dtype=bool)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def alive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alive)

    def remove(self, index: int) -> None:
        if not self.alive[index]:
            raise ValueError(f"pool index {index} already queried")
        self.alive[index] = False


@dataclass(frozen=True)
class SafeSet:
    member_indices: np.ndarray      # pool indices, sorted
    beta: float
    thresholds: np.ndarray
    noisy_mode: bool

    @property
    def size(self) -> int:
        return self.member_indices.shape[0]

    def __contains__(self, index) -> bool:
        return bool(np.isin(index, self.member_indices))


class Status(enum.Enum):
    COMPLETED = "completed"
    SAFE_SET_EXHAUSTED = "safe_set_exhausted"
    FIT_FAILED = "fit_failed"


@dataclass
class TraceRecord:
    iteration: int
    query_index: int
    x: np.ndarray
    y: float
    z: np.ndarray
    was_safe: bool
    safe_set_size: int
    rmse: float
    tp_rate: float
    fp_rate: float
    region_label: Optional[int]
    fit_seconds: float
    # in-memory diagnostics, not part of the CSV contract
    safety_hyperparams: tuple = ()      # per constraint (lengthscales, scale, noise)
    z_norm_ok: bool = True              # ||z|| <= sqrt(N) at selection time


@dataclass
class ExperimentTrace:
    records: list = field(default_factory=list)
    status: Status = Status.COMPLETED

    @property
    def n_queries(self) -> int:
        return len(self.records)

    def safe_flags(self):
        return [r.was_safe for r in self.records]


# ---------------------------------------------------------------------------
# Predictive model wrappers: uniform predict() over single-task and transfer
# ---------------------------------------------------------------------------

class SingleTaskPredictor:
    def __init__(self, model: GPModel, X, targets):
        self.model = model.with_cache(X, targets) if np.size(X) else model
        self._X, self._targets = X, targets

    @property
    def noise_variance(self) -> float:
        return self.model.noise_variance

    def predict(self, X):
        return gp_core.posterior(self.model, self._X, self._targets, X)


class TransferPredictor:
    def __init__(self, model: TransferModel, source_data, target_data):
        self.model = model
        self._source = source_data
        self._target = target_data

    @property
    def noise_variance(self) -> float:
        return self.model.target_noise_variance

    def predict(self, X):
        return transfer.transfer_posterior(self.model, self._source,
                                           self._target, X)


# ---------------------------------------------------------------------------
# Safe set, acquisition, selection
# ---------------------------------------------------------------------------

def compute_safe_set(safety_models: Sequence, pool: Pool, beta: float,
                     thresholds, noisy_mode: bool = True) -> SafeSet:
    """Pool points whose lower confidence bound clears every threshold.

    mu - sqrt(beta) * sigma >= T_j for all j; in noisy mode the observation
    noise variance is added inside sigma, shrinking the set.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if len(safety_models) != thresholds.shape[0]:
        raise ValueError("one threshold per safety model required")
    alive = pool.alive_indices()
    X = pool.X[alive]
    keep = np.ones(alive.shape[0], dtype=bool)
    sqrt_beta = math.sqrt(beta)
    for model, T in zip(safety_models, thresholds):
        mean, var = model.predict(X)
        if noisy_mode:
            var = var + model.noise_variance
        keep &= mean - sqrt_beta * np.sqrt(np.maximum(var, 0.0)) >= T
    return SafeSet(alive[keep], beta, thresholds, noisy_mode)


def acquisition_scores(models: Sequence, candidates) -> np.ndarray:
    """Summed predictive differential entropies, 0.5 log(2 pi e sigma^2)."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    scores = np.zeros(candidates.shape[0])
    for model in models:
        _, var = model.predict(candidates)
        var = np.maximum(var, _MIN_VARIANCE)
        scores += _HALF_LOG_2PIE + 0.5 * np.log(var)
    return scores


def select_query(scores: np.ndarray, safe_set: SafeSet) -> int:
    """Safe member with maximal score; ties broken by lowest pool index."""
    members = safe_set.member_indices
    if members.size == 0:
        raise LookupError("safe set exhausted")
    member_scores = np.asarray(scores)[members]
    best = np.max(member_scores)
    return int(members[np.flatnonzero(member_scores == best)[0]])


# ---------------------------------------------------------------------------
# Loop configuration and shared mechanics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoopConfig:
    n_query: int
    beta: float = 4.0
    noisy_mode: bool = True
    refit_every: int = 1
    seed: int = 0
    eval_seed: int = 12345
    n_rmse_points: int = 1000
    fit_restarts: int = 3           # used on the first (cold) fit only
    fit_max_iterations: int = 30    # per warm-started refit
    kernel_family: KernelFamily = KernelFamily.MATERN52

    def fit_options(self, iteration: int = 0) -> FitOptions:
        # cold start explores; later refits are warm-started from the
        # previous parameters and need no restarts
        if iteration == 0:
            return FitOptions(n_restarts=self.fit_restarts, seed=self.seed,
                              max_iterations=120)
        return FitOptions(n_restarts=1, seed=self.seed,
                          max_iterations=self.fit_max_iterations)


def _rmse_test_set(bench: Benchmark, cfg: LoopConfig):
    """Noise-free test points resampled from the true safe region."""
    rng = np.random.default_rng(cfg.eval_seed)
    X = _sample_from_mask(bench.oracle.bounds, bench.oracle.ground_truth_safe,
                          cfg.n_rmse_points, rng)
    return X, bench.oracle.true_main(X)


def _initial_single_models(bench: Benchmark, cfg: LoopConfig):
    D = bench.dim
    spec = KernelSpec(cfg.kernel_family, np.full(D, 0.5), 1.0)
    main = GPModel(spec, 1e-4)
    safety = [GPModel(spec, 1e-4) for _ in range(bench.oracle.n_constraints)]
    return main, safety


def _initial_transfer_models(bench: Benchmark, cfg: LoopConfig, variant: str):
    D = bench.dim
    base = KernelSpec(cfg.kernel_family, np.full(D, 0.5), 1.0)
    if variant == "hgp":
        kern = MultiTaskKernelSpec(HGPKernel(
            (base,), KernelSpec(cfg.kernel_family, np.full(D, 0.5), 0.5)))
    elif variant == "lmc":
        latents = (KernelSpec(cfg.kernel_family, np.full(D, 0.5), 1.0),
                   KernelSpec(cfg.kernel_family, np.full(D, 0.7), 1.0))
        W = np.array([[0.8, 0.6], [0.6, -0.8]])
        kern = MultiTaskKernelSpec(LMCKernel(latents, W, np.array([0.1, 0.1])))
    else:
        raise ValueError(f"unknown transfer variant: {variant!r}")
    model = TransferModel(kern, (1e-4,), 1e-4)
    n_safety = bench.oracle.n_constraints
    return model, [model for _ in range(n_safety)]


def _record_metrics(bench: Benchmark, main_predictor, safe_set: SafeSet,
                    test_X, test_y):
    pred_mean, _ = main_predictor.predict(test_X)
    run_rmse = metrics.rmse(pred_mean, test_y)
    tp, fp = metrics.tp_fp_area(safe_set.member_indices, bench.pool_true_safe)
    return run_rmse, tp, fp


def _safety_hyperparams(models):
    out = []
    for m in models:
        if isinstance(m, GPModel):
            out.append((tuple(m.kernel.lengthscales), m.kernel.scale,
                        m.noise_variance))
        else:
            out.append(None)
    return tuple(out)


def _run_loop(bench: Benchmark, cfg: LoopConfig, fit_fn, predict_fn,
              initial_models) -> ExperimentTrace:
    """Shared driver: fit, safe set, acquire, query, record, repeat.

    fit_fn(models, data, iteration) -> (models, fit_seconds) or raises
    FitError; predict_fn(models, data) -> (main predictor, safety list).
    """
    trace = ExperimentTrace()
    data = bench.initial
    pool = Pool(bench.pool.copy())
    test_X, test_y = _rmse_test_set(bench, cfg)
    models = initial_models
    thresholds = bench.thresholds

    for it in range(cfg.n_query):
        try:
            t0 = time.perf_counter()
            if it % cfg.refit_every == 0:
                models = fit_fn(models, data, it)
            fit_seconds = time.perf_counter() - t0
        except (FitError, gp_core.FactorizationError):
            trace.status = Status.FIT_FAILED
            return trace

        main_pred, safety_preds = predict_fn(models, data)
        safe_set = compute_safe_set(safety_preds, pool, cfg.beta,
                                    thresholds, cfg.noisy_mode)
        if safe_set.size == 0:
            trace.status = Status.SAFE_SET_EXHAUSTED
            return trace

        cand = pool.X[safe_set.member_indices]
        cand_scores = acquisition_scores([main_pred] + list(safety_preds), cand)
        scores = np.full(pool.n, -np.inf)
        scores[safe_set.member_indices] = cand_scores
        idx = select_query(scores, safe_set)

        x = pool.X[idx]
        y, z = bench.oracle.query(x)
        was_safe = bool(np.all(z >= thresholds))
        run_rmse, tp, fp = _record_metrics(bench, main_pred, safe_set,
                                           test_X, test_y)
        region = None
        if bench.region_labeling is not None:
            region = metrics.region_of_query(x, bench.region_labeling,
                                             bench.geometry)
        z_col = data.Z[:, 0]
        trace.records.append(TraceRecord(
            iteration=it, query_index=idx, x=x.copy(), y=y, z=z.copy(),
            was_safe=was_safe, safe_set_size=safe_set.size, rmse=run_rmse,
            tp_rate=tp, fp_rate=fp, region_label=region,
            fit_seconds=fit_seconds,
            safety_hyperparams=_safety_hyperparams(safety_preds_models(models)),
            z_norm_ok=bool(np.linalg.norm(z_col) <= math.sqrt(data.n)),
        ))
        data = data.append(x, y, z)
        pool.remove(idx)

    trace.status = Status.COMPLETED
    return trace


def safety_preds_models(models):
    """Safety-side raw models out of a (main, safety-list) bundle."""
    return models[1]


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

def run_sal(bench: Benchmark, cfg: LoopConfig) -> ExperimentTrace:
    """Single-task loop: refit one GP per output on target data only."""

    def fit_fn(models, data: LabeledDataset, it):
        opts = cfg.fit_options(it)
        main, safety = models
        main = gp_core.fit(main, data.X, data.y, opts)
        safety = [gp_core.fit(m, data.X, data.Z[:, j], opts)
                  for j, m in enumerate(safety)]
        return main, safety

    def predict_fn(models, data: LabeledDataset):
        main, safety = models
        return (SingleTaskPredictor(main, data.X, data.y),
                [SingleTaskPredictor(m, data.X, data.Z[:, j])
                 for j, m in enumerate(safety)])

    return _run_loop(bench, cfg, fit_fn, predict_fn,
                     _initial_single_models(bench, cfg))


def _transfer_predict_fn(bench: Benchmark):
    def predict_fn(models, data: LabeledDataset):
        main, safety = models
        main_pred = TransferPredictor(main, [bench.source_main],
                                      TaskData(data.X, data.y))
        safety_preds = [
            TransferPredictor(m, [bench.source_safety[j]],
                              TaskData(data.X, data.Z[:, j]))
            for j, m in enumerate(safety)
        ]
        return main_pred, safety_preds
    return predict_fn


def run_full_transfer(bench: Benchmark, cfg: LoopConfig,
                      variant: str = "hgp") -> ExperimentTrace:
    """Transfer loop with all parameters refit jointly every refit step."""
    main0, safety0 = _initial_transfer_models(bench, cfg, variant)
    if variant == "hgp":
        # warm-start the joint search from a decoupled source-only fit;
        # the default parameters sit in a degenerate basin (tiny noise,
        # mismatched lengthscales) that multi-restart L-BFGS rarely escapes
        source_opts = FitOptions(n_restarts=max(cfg.fit_restarts, 3),
                                 seed=cfg.seed, max_iterations=200)
        main0 = transfer.precompute_source(main0, [bench.source_main],
                                           source_opts)
        safety0 = [transfer.precompute_source(m, [bench.source_safety[j]],
                                              source_opts)
                   for j, m in enumerate(safety0)]

    def fit_fn(models, data: LabeledDataset, it):
        opts = cfg.fit_options(it)
        main, safety = models
        main = transfer.fit_joint(main, [bench.source_main],
                                  TaskData(data.X, data.y), opts)
        safety = [
            transfer.fit_joint(m, [bench.source_safety[j]],
                               TaskData(data.X, data.Z[:, j]), opts)
            for j, m in enumerate(safety)
        ]
        return main, safety

    return _run_loop(bench, cfg, fit_fn, _transfer_predict_fn(bench),
                     (main0, safety0))


def run_modular_transfer(bench: Benchmark, cfg: LoopConfig) -> ExperimentTrace:
    """Transfer loop with source parameters frozen after a one-off source fit."""
    main0, safety0 = _initial_transfer_models(bench, cfg, "hgp")
    # one-off source precomputation with a thorough search
    source_opts = FitOptions(n_restarts=max(cfg.fit_restarts, 3),
                             seed=cfg.seed, max_iterations=200)
    main0 = transfer.precompute_source(main0, [bench.source_main], source_opts)
    safety0 = [transfer.precompute_source(m, [bench.source_safety[j]],
                                          source_opts)
               for j, m in enumerate(safety0)]

    def fit_fn(models, data: LabeledDataset, it):
        opts = cfg.fit_options(it)
        main, safety = models
        main = transfer.fit_target_given_source(
            main, [bench.source_main], TaskData(data.X, data.y), opts)
        safety = [
            transfer.fit_target_given_source(
                m, [bench.source_safety[j]], TaskData(data.X, data.Z[:, j]),
                opts)
            for j, m in enumerate(safety)
        ]
        return main, safety

    return _run_loop(bench, cfg, fit_fn, _transfer_predict_fn(bench),
                     (main0, safety0))

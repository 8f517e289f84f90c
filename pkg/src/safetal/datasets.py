"""Synthetic benchmarks: multi-output GP samples, Branin and Hartmann3
task families, normalization, rejection sampling for disjoint safe regions,
pool construction, and the oracle interface driving the query loop.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .gp_core import LabeledDataset
from .metrics import GridGeometry, RegionLabeling, ccl_label
from .transfer import TaskData

NOISE_STD = 0.01
GRID_SIDE = 100
MAX_REJECTION_ATTEMPTS = 1000

BRANIN_BOUNDS = np.array([[-5.0, 10.0], [0.0, 15.0]])
BRANIN_TARGET = (1.0, 5.1 / (4 * math.pi**2), 5.0 / math.pi, 6.0, 10.0,
                 1.0 / (8 * math.pi))
BRANIN_SOURCE_RANGES = ((0.5, 1.5), (0.1, 0.15), (1.0, 2.0), (5.0, 7.0),
                        (8.0, 12.0), (0.03, 0.05))

HARTMANN_BOUNDS = np.array([[0.0, 1.0]] * 3)
HARTMANN_TARGET = (1.0, 1.2, 3.0, 3.2)
HARTMANN_SOURCE_RANGES = ((1.0, 1.02), (1.18, 1.2), (2.8, 3.0), (3.2, 3.4))
HARTMANN_A = np.array([
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
])
HARTMANN_P = 1e-4 * np.array([
    [3689.0, 1170.0, 2673.0],
    [4699.0, 4387.0, 7470.0],
    [1091.0, 8732.0, 5547.0],
    [381.0, 5743.0, 8828.0],
])


# ---------------------------------------------------------------------------
# Grid functions and oracles
# ---------------------------------------------------------------------------

@dataclass
class GridFunction:
    """Function values on a regular lattice, queried by multilinear
    interpolation over the covering domain."""

    axes: tuple                 # one sorted 1D coordinate array per dim
    values: np.ndarray          # shape len(axes[0]) x ... x len(axes[-1])

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.values = np.asarray(self.values, dtype=float)
        self._interp = RegularGridInterpolator(self.axes, self.values,
                                               method="linear")

    @property
    def dim(self) -> int:
        return len(self.axes)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._interp(X)


@dataclass
class Oracle:
    """Simulated system: noisy observations plus noise-free ground truth.

    shared_channel means the safety observation is the main observation
    itself (q = f), not an independent draw.
    """

    bounds: np.ndarray          # (D, 2)
    noise_std: float
    thresholds: np.ndarray      # (J,)
    main_fn: Callable
    safety_fns: tuple           # J callables
    shared_channel: bool
    rng: np.random.Generator

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def n_constraints(self) -> int:
        return len(self.safety_fns)

    def _check_domain(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if np.any(X < lo - 1e-9) or np.any(X > hi + 1e-9):
            raise ValueError("query outside oracle domain")
        return X

    def query(self, x):
        """Noisy (y, z-vector) at one input."""
        X = self._check_domain(x)
        y = float(self.main_fn(X)[0] + self.rng.normal(scale=self.noise_std))
        if self.shared_channel:
            z = np.array([y])
        else:
            z = np.array([
                float(f(X)[0] + self.rng.normal(scale=self.noise_std))
                for f in self.safety_fns
            ])
        return y, z

    def true_main(self, X) -> np.ndarray:
        return np.asarray(self.main_fn(self._check_domain(X)), dtype=float)

    def true_safety(self, X) -> np.ndarray:
        X = self._check_domain(X)
        return np.column_stack([np.asarray(f(X), dtype=float)
                                for f in self.safety_fns])

    def ground_truth_safe(self, X) -> np.ndarray:
        """Noise-free safety test, all constraints jointly."""
        q = self.true_safety(X)
        return np.all(q >= self.thresholds, axis=1)


# ---------------------------------------------------------------------------
# Multi-output GP sampling (Kronecker-Cholesky)
# ---------------------------------------------------------------------------

def _grid_axes(D: int, lo: float = -2.0, hi: float = 2.0,
               side: int = GRID_SIDE) -> tuple:
    return tuple(np.linspace(lo, hi, side) for _ in range(D))


def _grid_points(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _matern52_cholesky_inplace(Xs: np.ndarray) -> np.ndarray:
    """Cholesky factor of the unit-variance Matern-5/2 Gram matrix.

    Builds the Gram matrix with O(n^2) extra memory (no n x n x D
    temporaries) and factorizes in place; the grids here reach n = 10^4.
    """
    from scipy.linalg import cholesky as _sp_cholesky
    from scipy.spatial.distance import pdist, squareform

    n = Xs.shape[0]
    R = squareform(pdist(Xs)) if n > 1 else np.zeros((1, 1))
    E = np.exp(-math.sqrt(5.0) * R)
    K = 1.0 + math.sqrt(5.0) * R + (5.0 / 3.0) * R**2
    K *= E
    K[np.diag_indices_from(K)] += 1e-8  # sampling jitter
    return _sp_cholesky(K, lower=True, overwrite_a=True, check_finite=False)


def sample_mogp_functions(D: int, seed: int, lengthscale_range=(0.1, 1.0),
                          n_channels: int = 2, grid_side: int = GRID_SIDE):
    """Draw coupled (source, target) function pairs on a grid over [-2, 2]^D.

    The two-output prior is sum_l W_l W_l^T kron k_l with two unit-variance
    Matern-5/2 latents; W rows are normalized to unit norm.  Each channel is
    an independent draw under the same hyperparameters; every output column
    is renormalized to zero mean and unit variance.

    Returns a list of (source GridFunction, target GridFunction) pairs, one
    per channel.
    """
    if D not in (1, 2):
        raise ValueError("grid sampling supports D in {1, 2}")
    rng = np.random.default_rng(seed)
    axes = _grid_axes(D, side=grid_side)
    X = _grid_points(axes)
    n = X.shape[0]

    # per-latent draws for all channels, accumulated to limit peak memory
    F = np.zeros((n_channels, 2, n))
    for _ in range(2):
        W = rng.uniform(-1.0, 1.0, size=(2, 2))
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        if W[0] @ W[1] < 0:
            # hierarchical transfer can only express nonnegative task
            # coupling, so keep the sampled pairs positively coupled
            W[1] = -W[1]
        ls = rng.uniform(*lengthscale_range, size=D)
        L_K = _matern52_cholesky_inplace(X / ls)
        L_W = np.linalg.cholesky(W @ W.T + 1e-12 * np.eye(2))
        for c in range(n_channels):
            U = rng.standard_normal((2, n))
            # (L_W kron L_K) u computed blockwise: row i = sum_j L_W[i,j] L_K u_j
            F[c] += L_W @ (U @ L_K.T)
        del L_K

    out = []
    shape = tuple(len(a) for a in axes)
    for c in range(n_channels):
        pair = []
        for task in range(2):  # row 0 source, row 1 target
            col = F[c, task]
            col = (col - col.mean()) / col.std()
            pair.append(GridFunction(axes, col.reshape(shape)))
        out.append(tuple(pair))
    return out


# ---------------------------------------------------------------------------
# Branin and Hartmann3 families
# ---------------------------------------------------------------------------

def branin(x1, x2, constants=BRANIN_TARGET):
    """a(x2 - b x1^2 + c x1 - r)^2 + s(1 - t) cos(x1) + s on [-5,10]x[0,15]."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(x1 < -5 - 1e-9) or np.any(x1 > 10 + 1e-9) \
            or np.any(x2 < -1e-9) or np.any(x2 > 15 + 1e-9):
        raise ValueError("input outside the Branin domain")
    a, b, c, r, s, t = constants
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


def sample_branin_task(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    return tuple(rng.uniform(lo, hi) for lo, hi in BRANIN_SOURCE_RANGES)


def hartmann3(X, constants=HARTMANN_TARGET):
    """Negated sum of four Gaussian bumps on the unit cube."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.any(X < -1e-9) or np.any(X > 1 + 1e-9):
        raise ValueError("input outside the Hartmann3 domain")
    a = np.asarray(constants, dtype=float)
    expo = np.einsum("ij,nij->ni", HARTMANN_A,
                     (X[:, None, :] - HARTMANN_P[None, :, :]) ** 2)
    return -(np.exp(-expo) @ a)


def sample_hartmann_task(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    return tuple(rng.uniform(lo, hi) for lo, hi in HARTMANN_SOURCE_RANGES)


@dataclass(frozen=True)
class NormalizedFunction:
    """Closed-form function standardized by sampled mean and std."""

    raw: Callable               # (M, D) -> (M,)
    mean: float
    std: float

    def __call__(self, X) -> np.ndarray:
        return (self.raw(np.atleast_2d(np.asarray(X, dtype=float)))
                - self.mean) / self.std


def normalize_function(raw: Callable, bounds: np.ndarray, seed: int,
                       n_samples: int = 20000) -> NormalizedFunction:
    """Standardize by the mean/std of noise-free uniform samples."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n_samples, bounds.shape[0]))
    vals = raw(X)
    return NormalizedFunction(raw, float(np.mean(vals)), float(np.std(vals)))


# ---------------------------------------------------------------------------
# Rejection filter for disjoint safe regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RejectionReport:
    accepted: bool
    failed_condition: Optional[str]     # "disjoint", "shared", "shared_5pct"
    n_target_regions: int
    shared_fractions: tuple             # per target region, fraction of space


def rejection_filter(source_safe, target_safe, D: int,
                     min_shared_fraction: float = 0.05) -> RejectionReport:
    """Accept a task pair only if the target safe layout supports transfer.

    Accepts when at least two disjoint target safe regions each share safe
    area with the source and each shared area exceeds min_shared_fraction of
    the whole space (so at least twice that fraction is safe for both tasks).
    """
    source_safe = np.asarray(source_safe, dtype=bool)
    target_safe = np.asarray(target_safe, dtype=bool)
    labeling = ccl_label(target_safe, D)
    n_cells = target_safe.size
    shared = []
    for region in range(1, labeling.n_regions + 1):
        overlap = np.count_nonzero((labeling.labels == region) & source_safe)
        shared.append(overlap / n_cells)
    shared = tuple(shared)
    if labeling.n_regions < 2:
        return RejectionReport(False, "disjoint", labeling.n_regions, shared)
    if sum(1 for s in shared if s > 0.0) < 2:
        return RejectionReport(False, "shared", labeling.n_regions, shared)
    if sum(1 for s in shared if s > min_shared_fraction) < 2:
        return RejectionReport(False, "shared_5pct", labeling.n_regions, shared)
    return RejectionReport(True, None, labeling.n_regions, shared)


class RejectionSamplingError(RuntimeError):
    def __init__(self, attempts: int, counts: dict):
        worst = max(counts, key=counts.get) if counts else "unknown"
        super().__init__(
            f"no acceptable task pair after {attempts} attempts; "
            f"most frequent failure: condition '{worst}' ({counts})"
        )
        self.failure_counts = counts


# ---------------------------------------------------------------------------
# Pools, initial data, benchmark assembly
# ---------------------------------------------------------------------------

def make_pool(bounds: np.ndarray, n_pool: int, seed: int) -> np.ndarray:
    """Uniform i.i.d. candidate inputs over the box domain."""
    rng = np.random.default_rng(seed)
    bounds = np.asarray(bounds, dtype=float)
    return rng.uniform(bounds[:, 0], bounds[:, 1],
                       size=(n_pool, bounds.shape[0]))


def _sample_from_mask(bounds, accept_fn, n_points, rng,
                      batch: int = 2048, max_batches: int = 500) -> np.ndarray:
    """Uniform samples over the domain filtered by a boolean predicate."""
    bounds = np.asarray(bounds, dtype=float)
    chosen = []
    count = 0
    for _ in range(max_batches):
        X = rng.uniform(bounds[:, 0], bounds[:, 1],
                        size=(batch, bounds.shape[0]))
        ok = accept_fn(X)
        if np.any(ok):
            chosen.append(X[ok])
            count += int(np.count_nonzero(ok))
        if count >= n_points:
            return np.vstack(chosen)[:n_points]
    raise ValueError("designated region too small to place requested points")


def make_initial_target_data(oracle: Oracle, region_accept: Callable,
                             n_init: int, seed: int) -> LabeledDataset:
    """Initial observations inside a designated region, all ground-truth safe."""
    rng = np.random.default_rng(seed)

    def accept(X):
        return region_accept(X) & oracle.ground_truth_safe(X)

    X = _sample_from_mask(oracle.bounds, accept, n_init, rng)
    ys, zs = [], []
    for x in X:
        y, z = oracle.query(x)
        ys.append(y)
        zs.append(z)
    return LabeledDataset(X, np.array(ys), np.vstack(zs))


@dataclass
class Benchmark:
    """Everything one experiment run needs, fixed at generation time."""

    name: str
    dim: int
    oracle: Oracle
    source_main: TaskData               # source observations of f
    source_safety: tuple                # per constraint, TaskData of q^j
    initial: LabeledDataset
    pool: np.ndarray
    pool_true_safe: np.ndarray          # ground-truth mask over the pool
    thresholds: np.ndarray
    geometry: Optional[GridGeometry]    # None when regions are not tracked
    region_labeling: Optional[RegionLabeling]
    metadata: dict = field(default_factory=dict)


DEFAULT_SIZES = {
    "gp1d": dict(n_source=100, n_init=10, n_query=50, n_pool=5000),
    "gp2d": dict(n_source=250, n_init=20, n_query=100, n_pool=5000),
    "branin": dict(n_source=100, n_init=20, n_query=100, n_pool=5000),
    "hartmann3": dict(n_source=100, n_init=20, n_query=100, n_pool=5000),
}


def _largest_shared_region(source_safe, target_safe, D, axes):
    """Accept-predicate for the largest connected source-and-target safe area."""
    shared = np.asarray(source_safe) & np.asarray(target_safe)
    labeling = ccl_label(shared, D)
    if labeling.n_regions == 0:
        raise ValueError("no shared safe area to draw initial data from")
    sizes = [np.count_nonzero(labeling.labels == r)
             for r in range(1, labeling.n_regions + 1)]
    best = int(np.argmax(sizes)) + 1
    geometry = GridGeometry(tuple(axes))

    def accept(X):
        X = np.atleast_2d(X)
        return np.array([labeling.labels[geometry.nearest_cell(x)] == best
                         for x in X])

    return accept


def _source_observations(fn, X, noise_std, rng) -> TaskData:
    vals = np.asarray(fn(X), dtype=float) + rng.normal(scale=noise_std,
                                                       size=X.shape[0])
    return TaskData(X, vals)


def build_gp_benchmark(D: int, seed: int, n_source: int, n_init: int,
                       n_pool: int, threshold: float = 0.0) -> Benchmark:
    """GP1D/GP2D: sampled multi-output functions with disjoint-region filter."""
    counts: dict = {}
    base = np.random.SeedSequence(seed)
    for attempt in range(MAX_REJECTION_ATTEMPTS):
        sub_seed = int(base.spawn(1)[0].generate_state(1)[0])
        channels = sample_mogp_functions(D, sub_seed)
        (f_source, f_target), (q_source, q_target) = channels
        report = rejection_filter(q_source.values >= threshold,
                                  q_target.values >= threshold, D)
        if report.accepted:
            break
        counts[report.failed_condition] = counts.get(report.failed_condition, 0) + 1
    else:
        raise RejectionSamplingError(MAX_REJECTION_ATTEMPTS, counts)

    bounds = np.array([[-2.0, 2.0]] * D)
    rng = np.random.default_rng(seed + 1)
    oracle = Oracle(bounds, NOISE_STD, np.array([threshold]),
                    f_target, (q_target,), shared_channel=False,
                    rng=np.random.default_rng(seed + 2))

    # source inputs drawn uniformly over the source-safe region
    def source_safe(X):
        return np.asarray(q_source(X)) >= threshold

    src_X = _sample_from_mask(bounds, source_safe, n_source, rng)
    source_main = _source_observations(f_source, src_X, NOISE_STD, rng)
    source_safety = (_source_observations(q_source, src_X, NOISE_STD, rng),)

    axes = q_target.axes
    labeling = ccl_label(q_target.values >= threshold, D)
    accept = _largest_shared_region(q_source.values >= threshold,
                                    q_target.values >= threshold, D, axes)
    initial = make_initial_target_data(oracle, accept, n_init, seed + 3)
    pool = make_pool(bounds, n_pool, seed + 4)
    return Benchmark(
        name=f"gp{D}d", dim=D, oracle=oracle, source_main=source_main,
        source_safety=source_safety, initial=initial, pool=pool,
        pool_true_safe=oracle.ground_truth_safe(pool),
        thresholds=np.array([threshold]),
        geometry=GridGeometry(tuple(axes)), region_labeling=labeling,
        metadata={"attempts": attempt + 1, "grid_seed": sub_seed},
    )


def _analytic_benchmark(name, bounds, target_fn, source_fn, metadata, seed,
                        n_source, n_init, n_pool, threshold,
                        track_regions: bool) -> Benchmark:
    oracle = Oracle(bounds, NOISE_STD, np.array([threshold]), target_fn,
                    (target_fn,), shared_channel=True,
                    rng=np.random.default_rng(seed + 2))
    rng = np.random.default_rng(seed + 1)
    # source inputs cover the whole domain for the closed-form families
    src_X = rng.uniform(bounds[:, 0], bounds[:, 1],
                        size=(n_source, bounds.shape[0]))
    source_main = _source_observations(source_fn, src_X, NOISE_STD, rng)
    source_safety = (TaskData(src_X, source_main.values.copy()),)

    geometry = labeling = None
    if track_regions:
        axes = tuple(np.linspace(lo, hi, GRID_SIDE) for lo, hi in bounds)
        grid = _grid_points(axes)
        shape = tuple(len(a) for a in axes)
        t_safe = (target_fn(grid) >= threshold).reshape(shape)
        s_safe = (source_fn(grid) >= threshold).reshape(shape)
        labeling = ccl_label(t_safe, bounds.shape[0])
        geometry = GridGeometry(axes)
        accept = _largest_shared_region(s_safe, t_safe, bounds.shape[0], axes)
    else:
        def accept(X):
            return np.ones(np.atleast_2d(X).shape[0], dtype=bool)

    initial = make_initial_target_data(oracle, accept, n_init, seed + 3)
    pool = make_pool(bounds, n_pool, seed + 4)
    return Benchmark(
        name=name, dim=bounds.shape[0], oracle=oracle,
        source_main=source_main, source_safety=source_safety,
        initial=initial, pool=pool,
        pool_true_safe=oracle.ground_truth_safe(pool),
        thresholds=np.array([threshold]), geometry=geometry,
        region_labeling=labeling, metadata=metadata,
    )


def build_branin_benchmark(seed: int, n_source: int, n_init: int,
                           n_pool: int, threshold: float = 0.0) -> Benchmark:
    counts: dict = {}
    base = np.random.SeedSequence(seed)
    axes = tuple(np.linspace(lo, hi, GRID_SIDE) for lo, hi in BRANIN_BOUNDS)
    grid = _grid_points(axes)
    shape = (GRID_SIDE, GRID_SIDE)

    def as_fn(constants, norm_seed):
        raw = lambda X: branin(X[:, 0], X[:, 1], constants)
        return normalize_function(raw, BRANIN_BOUNDS, norm_seed)

    target_fn = as_fn(BRANIN_TARGET, seed + 10)
    t_safe = (target_fn(grid) >= threshold).reshape(shape)
    for attempt in range(MAX_REJECTION_ATTEMPTS):
        sub_seed = int(base.spawn(1)[0].generate_state(1)[0])
        constants = sample_branin_task(sub_seed)
        source_fn = as_fn(constants, seed + 11)
        s_safe = (source_fn(grid) >= threshold).reshape(shape)
        report = rejection_filter(s_safe, t_safe, 2)
        if report.accepted:
            break
        counts[report.failed_condition] = counts.get(report.failed_condition, 0) + 1
    else:
        raise RejectionSamplingError(MAX_REJECTION_ATTEMPTS, counts)

    meta = {
        "source_constants": tuple(float(c) for c in constants),
        "target_normalization": (target_fn.mean, target_fn.std),
        "source_normalization": (source_fn.mean, source_fn.std),
        "attempts": attempt + 1,
    }
    return _analytic_benchmark("branin", BRANIN_BOUNDS, target_fn, source_fn,
                               meta, seed, n_source, n_init, n_pool,
                               threshold, track_regions=True)


def build_hartmann_benchmark(seed: int, n_source: int, n_init: int,
                             n_pool: int, threshold: float = 0.0) -> Benchmark:
    constants = sample_hartmann_task(seed)
    target_fn = normalize_function(lambda X: hartmann3(X, HARTMANN_TARGET),
                                   HARTMANN_BOUNDS, seed + 10)
    source_fn = normalize_function(lambda X: hartmann3(X, constants),
                                   HARTMANN_BOUNDS, seed + 11)
    meta = {
        "source_constants": tuple(float(c) for c in constants),
        "target_normalization": (target_fn.mean, target_fn.std),
        "source_normalization": (source_fn.mean, source_fn.std),
    }
    return _analytic_benchmark("hartmann3", HARTMANN_BOUNDS, target_fn,
                               source_fn, meta, seed, n_source, n_init,
                               n_pool, threshold, track_regions=False)


def build_benchmark(name: str, seed: int, n_source=None, n_init=None,
                    n_pool=None) -> Benchmark:
    if name not in DEFAULT_SIZES:
        raise ValueError(f"unknown benchmark: {name!r}")
    sizes = DEFAULT_SIZES[name]
    n_source = sizes["n_source"] if n_source is None else n_source
    n_init = sizes["n_init"] if n_init is None else n_init
    n_pool = sizes["n_pool"] if n_pool is None else n_pool
    if name == "gp1d":
        return build_gp_benchmark(1, seed, n_source, n_init, n_pool)
    if name == "gp2d":
        return build_gp_benchmark(2, seed, n_source, n_init, n_pool)
    if name == "branin":
        return build_branin_benchmark(seed, n_source, n_init, n_pool)
    return build_hartmann_benchmark(seed, n_source, n_init, n_pool)


# ---------------------------------------------------------------------------
# CSV import/export
# ---------------------------------------------------------------------------

def write_dataset_csv(path, X, y, Z, task_labels) -> None:
    """Rows `x1..xD, y, z1..zJ, task` with a header, UTF-8, '.' decimals."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    D, J = X.shape[1], Z.shape[1]
    header = [f"x{d + 1}" for d in range(D)] + ["y"] \
        + [f"z{j + 1}" for j in range(J)] + ["task"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(X.shape[0]):
            writer.writerow([repr(float(v)) for v in X[i]]
                            + [repr(float(y[i]))]
                            + [repr(float(v)) for v in Z[i]]
                            + [task_labels[i]])


def read_dataset_csv(path):
    """Inverse of write_dataset_csv; returns (X, y, Z, task_labels)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        D = sum(1 for h in header if h.startswith("x"))
        J = sum(1 for h in header if h.startswith("z"))
        X, y, Z, tasks = [], [], [], []
        for row in reader:
            X.append([float(v) for v in row[:D]])
            y.append(float(row[D]))
            Z.append([float(v) for v in row[D + 1:D + 1 + J]])
            tasks.append(row[-1])
    return np.array(X), np.array(y), np.array(Z), tasks

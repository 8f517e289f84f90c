import math

import numpy as np
import pytest

from safetal.datasets import (
    BRANIN_BOUNDS,
    BRANIN_TARGET,
    GRID_SIDE,
    HARTMANN_BOUNDS,
    GridFunction,
    Oracle,
    RejectionSamplingError,
    branin,
    build_benchmark,
    hartmann3,
    make_pool,
    normalize_function,
    read_dataset_csv,
    rejection_filter,
    sample_branin_task,
    sample_hartmann_task,
    sample_mogp_functions,
    write_dataset_csv,
)


class TestGridFunction:
    def test_exact_at_lattice_points(self):
        axes = (np.linspace(-2, 2, 5), np.linspace(-2, 2, 5))
        vals = np.arange(25, dtype=float).reshape(5, 5)
        gf = GridFunction(axes, vals)
        assert gf([[-2.0, -2.0]])[0] == 0.0
        assert gf([[2.0, 2.0]])[0] == 24.0

    def test_linear_interpolation_between_nodes(self):
        axes = (np.array([0.0, 1.0]),)
        gf = GridFunction(axes, np.array([0.0, 2.0]))
        assert gf([[0.25]])[0] == pytest.approx(0.5)


class TestAnalyticFunctions:
    def test_branin_squared_minimum_is_offset(self):
        # the classic minimizers of the inner surface map to s(1-t)cos + s
        s, t = BRANIN_TARGET[4], BRANIN_TARGET[5]
        x1, x2 = math.pi, 2.275
        expected = s * (1 - t) * math.cos(x1) + s
        assert branin(x1, x2) == pytest.approx(expected, abs=1e-3)

    def test_branin_squared_inner_term(self):
        a, b, c, r, s, t = BRANIN_TARGET
        x1, x2 = 3.0, 4.0
        inner = a * (x2 - b * x1**2 + c * x1 - r) ** 2
        expected = inner + s * (1 - t) * math.cos(x1) + s
        assert branin(x1, x2) == pytest.approx(expected, rel=1e-12)

    def test_hartmann3_known_optimum(self):
        x_star = np.array([[0.114614, 0.555649, 0.852547]])
        assert hartmann3(x_star)[0] == pytest.approx(-3.86278, abs=1e-4)

    def test_hartmann3_range(self):
        X = make_pool(HARTMANN_BOUNDS, 500, seed=0)
        vals = hartmann3(X)
        assert np.all(vals <= 0.0) and np.all(vals > -3.87)

    def test_sampled_tasks_stay_in_constant_ranges(self):
        for seed in range(5):
            consts = sample_branin_task(seed)
            assert 0.5 <= consts[0] <= 1.5
            assert 5.0 <= consts[3] <= 7.0
            consts2 = sample_hartmann_task(seed)
            assert 1.0 <= consts2[0] <= 1.02
            v = hartmann3(np.array([[0.5, 0.5, 0.5]]), consts2)
            assert np.isfinite(v[0])


class TestNormalization:
    def test_standardizes_first_two_moments(self):
        norm = normalize_function(lambda X: branin(X[:, 0], X[:, 1]),
                                  BRANIN_BOUNDS, seed=0)
        rng = np.random.default_rng(1)
        X = rng.uniform(BRANIN_BOUNDS[:, 0], BRANIN_BOUNDS[:, 1],
                        size=(20000, 2))
        vals = norm(X)
        assert abs(np.mean(vals)) < 0.05
        assert abs(np.std(vals) - 1.0) < 0.05

    def test_deterministic_in_seed(self):
        f = lambda X: X[:, 0] ** 2
        a = normalize_function(f, np.array([[0.0, 1.0]]), seed=3)
        b = normalize_function(f, np.array([[0.0, 1.0]]), seed=3)
        assert a.mean == b.mean and a.std == b.std


class TestMogpSampling:
    def test_shapes_and_grid(self):
        channels = sample_mogp_functions(1, seed=0)
        assert len(channels) == 2  # main output and safety output
        for source_fn, target_fn in channels:
            for gf in (source_fn, target_fn):
                assert gf.dim == 1
                assert gf.axes[0].shape == (GRID_SIDE,)
                assert gf.axes[0][0] == -2.0 and gf.axes[0][-1] == 2.0

    def test_columns_standardized(self):
        for pair in sample_mogp_functions(1, seed=1):
            for gf in pair:
                assert abs(np.mean(gf.values)) < 1e-9
                assert np.std(gf.values) == pytest.approx(1.0, abs=1e-9)

    def test_deterministic_in_seed(self):
        a = sample_mogp_functions(1, seed=5)
        b = sample_mogp_functions(1, seed=5)
        np.testing.assert_array_equal(a[0][0].values, b[0][0].values)
        np.testing.assert_array_equal(a[1][1].values, b[1][1].values)

    def test_source_and_target_differ(self):
        source_fn, target_fn = sample_mogp_functions(1, seed=2)[0]
        assert not np.allclose(source_fn.values, target_fn.values)


class TestOracle:
    def make(self, shared=False):
        f = lambda X: np.sin(X[:, 0])
        q = lambda X: np.cos(X[:, 0])
        return Oracle(np.array([[-2.0, 2.0]]), 0.01, np.array([0.0]), f,
                      (f,) if shared else (q,), shared,
                      np.random.default_rng(0))

    def test_query_noise_is_fresh(self):
        o = self.make()
        y1, _ = o.query([0.5])
        y2, _ = o.query([0.5])
        assert y1 != y2
        assert abs(y1 - math.sin(0.5)) < 0.1

    def test_shared_channel_reuses_main_observation(self):
        o = self.make(shared=True)
        y, z = o.query([0.3])
        assert z.shape == (1,)
        assert z[0] == y

    def test_ground_truth_deterministic(self):
        o = self.make()
        X = np.array([[0.0], [1.8]])
        np.testing.assert_array_equal(o.ground_truth_safe(X),
                                      o.ground_truth_safe(X))
        # cos(0) = 1 >= 0 safe; cos(1.8) < 0 unsafe
        np.testing.assert_array_equal(o.ground_truth_safe(X), [True, False])

    def test_domain_check(self):
        with pytest.raises(ValueError):
            self.make().query([3.0])


class TestRejectionFilter:
    def test_accepts_two_shared_regions(self):
        target = np.zeros(100, dtype=bool)
        target[10:30] = True
        target[60:80] = True
        source = np.zeros(100, dtype=bool)
        source[5:70] = True
        rep = rejection_filter(source, target, 1)
        assert rep.accepted
        assert rep.n_target_regions == 2

    def test_rejects_single_region(self):
        target = np.zeros(100, dtype=bool)
        target[10:40] = True
        source = np.ones(100, dtype=bool)
        rep = rejection_filter(source, target, 1)
        assert not rep.accepted
        assert rep.failed_condition == "disjoint"

    def test_rejects_no_overlap(self):
        target = np.zeros(100, dtype=bool)
        target[10:30] = True
        target[60:80] = True
        source = np.zeros(100, dtype=bool)
        source[40:50] = True
        rep = rejection_filter(source, target, 1)
        assert not rep.accepted
        assert rep.failed_condition == "shared"

    def test_rejects_thin_overlap(self):
        target = np.zeros(100, dtype=bool)
        target[10:30] = True
        target[60:80] = True
        source = np.zeros(100, dtype=bool)
        source[28:62] = True  # touches both regions by only 2 cells each
        rep = rejection_filter(source, target, 1)
        assert not rep.accepted
        assert rep.failed_condition == "shared_5pct"

    def test_error_reports_dominant_failure(self):
        err = RejectionSamplingError(7, {"disjoint": 5, "shared": 2})
        assert "disjoint" in str(err)
        assert "7" in str(err)


class TestPoolAndBenchmarks:
    def test_pool_uniform_in_bounds(self):
        pool = make_pool(BRANIN_BOUNDS, 1000, seed=0)
        assert pool.shape == (1000, 2)
        assert pool[:, 0].min() >= -5 and pool[:, 0].max() <= 10
        assert pool[:, 1].min() >= 0 and pool[:, 1].max() <= 15

    def test_gp1d_benchmark_contract(self):
        b = build_benchmark("gp1d", seed=0, n_source=30, n_init=5,
                            n_pool=400)
        assert b.dim == 1
        assert b.source_main.n == 30
        assert len(b.initial.X) == 5
        assert b.pool.shape == (400, 1)
        assert b.pool_true_safe.shape == (400,)
        # every initial observation is genuinely safe
        assert np.all(b.oracle.ground_truth_safe(b.initial.X))
        # region structure available and split in at least two parts
        assert b.region_labeling.n_regions >= 2
        np.testing.assert_array_equal(
            b.pool_true_safe, b.oracle.ground_truth_safe(b.pool))

    def test_branin_benchmark_contract(self):
        b = build_benchmark("branin", seed=0, n_source=40, n_init=8,
                            n_pool=300)
        assert b.dim == 2
        assert b.oracle.shared_channel
        assert np.all(b.oracle.ground_truth_safe(b.initial.X))
        assert b.region_labeling.n_regions >= 2

    def test_hartmann_benchmark_contract(self):
        b = build_benchmark("hartmann3", seed=0, n_source=40, n_init=8,
                            n_pool=300)
        assert b.dim == 3
        assert b.geometry is None and b.region_labeling is None
        assert np.all(b.oracle.ground_truth_safe(b.initial.X))

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            build_benchmark("nope", seed=0)


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(6, 2))
        y = rng.normal(size=6)
        Z = rng.normal(size=(6, 1))
        tasks = ["source1"] * 3 + ["target"] * 3
        path = tmp_path / "data.csv"
        write_dataset_csv(path, X, y, Z, tasks)
        header = path.read_text().splitlines()[0]
        assert header == "x1,x2,y,z1,task"
        X2, y2, Z2, tasks2 = read_dataset_csv(path)
        np.testing.assert_array_equal(X, X2)
        np.testing.assert_array_equal(y, y2)
        np.testing.assert_array_equal(Z, Z2)
        assert tasks == tasks2

import numpy as np
import pytest

from safetal.gp_core import (
    FitOptions,
    GPModel,
    LabeledDataset,
    fit,
    lml_and_gradient,
    log_marginal_likelihood,
    posterior,
)
from safetal.kernels import KernelFamily, KernelSpec, kernel_matrix

ALL_FAMILIES = list(KernelFamily)


def make_model(family=KernelFamily.MATERN52, ls=(0.5,), scale=1.0,
               noise=0.01):
    spec = KernelSpec(family, np.array(ls, dtype=float), scale)
    return GPModel(spec, noise)


def make_data(n=12, d=1, seed=0, noise=0.01):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, d))
    y = np.sin(X.sum(axis=1)) + rng.normal(scale=np.sqrt(noise), size=n)
    return X, y


def dense_posterior(model, X, y, Xs):
    # textbook formulas via explicit inverse, used as oracle only
    K = kernel_matrix(model.kernel, X)
    Om = K + model.noise_variance * np.eye(len(X))
    Om_inv = np.linalg.inv(Om)
    Ks = kernel_matrix(model.kernel, X, Xs)
    Kss = kernel_matrix(model.kernel, Xs)
    mu = Ks.T @ Om_inv @ y
    var = np.diag(Kss - Ks.T @ Om_inv @ Ks)
    return mu, var


def dense_lml(model, X, y):
    K = kernel_matrix(model.kernel, X)
    Om = K + model.noise_variance * np.eye(len(X))
    sign, logdet = np.linalg.slogdet(Om)
    quad = y @ np.linalg.solve(Om, y)
    return -0.5 * quad - 0.5 * logdet - 0.5 * len(X) * np.log(2 * np.pi)


class TestPosterior:
    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_matches_dense_oracle(self, family):
        model = make_model(family, ls=(0.7,), scale=1.3, noise=0.05)
        X, y = make_data(n=15, seed=3)
        Xs = np.linspace(-2.5, 2.5, 11).reshape(-1, 1)
        mu, var = posterior(model, X, y, Xs)
        mu0, var0 = dense_posterior(model, X, y, Xs)
        np.testing.assert_allclose(mu, mu0, atol=1e-8)
        np.testing.assert_allclose(var, var0, atol=1e-8)

    def test_empty_data_reduces_to_prior(self):
        model = make_model(scale=1.7)
        mu, var = posterior(model, np.zeros((0, 1)), np.zeros(0),
                            np.array([[0.4]]))
        assert mu[0] == 0.0
        assert var[0] == pytest.approx(1.7)

    def test_interpolates_with_tiny_noise(self):
        model = make_model(noise=1e-10)
        X, y = make_data(n=8, seed=1, noise=0.0)
        mu, var = posterior(model, X, y, X)
        np.testing.assert_allclose(mu, y, atol=1e-4)
        assert np.all(var < 1e-4)

    def test_variance_nonnegative(self):
        model = make_model(noise=1e-8)
        X, y = make_data(n=40, seed=2)
        Xs = np.vstack([X, np.random.default_rng(5).uniform(-2, 2, (40, 1))])
        _, var = posterior(model, X, y, Xs)
        assert np.all(var >= 0.0)

    def test_variance_shrinks_with_data(self):
        model = make_model()
        Xs = np.array([[0.1]])
        X, y = make_data(n=3, seed=0)
        X_big = np.vstack([X, [[0.1]]])
        y_big = np.append(y, 0.0)
        _, v_small = posterior(model, X, y, Xs)
        _, v_big = posterior(model, X_big, y_big, Xs)
        assert v_big[0] < v_small[0]


class TestLogMarginalLikelihood:
    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_matches_dense_oracle(self, family):
        model = make_model(family, ls=(0.6,), scale=0.9, noise=0.02)
        X, y = make_data(n=14, seed=4)
        assert log_marginal_likelihood(model, X, y) == pytest.approx(
            dense_lml(model, X, y), abs=1e-8)

    def test_2d_anisotropic(self):
        model = make_model(ls=(0.4, 1.5), scale=2.0, noise=0.1)
        X, y = make_data(n=20, d=2, seed=6)
        assert log_marginal_likelihood(model, X, y) == pytest.approx(
            dense_lml(model, X, y), abs=1e-8)


class TestGradient:
    @pytest.mark.parametrize("family", ALL_FAMILIES)
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradient_vs_finite_differences(self, family, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 3))
        model = make_model(family,
                           ls=tuple(rng.uniform(0.3, 1.5, d)),
                           scale=rng.uniform(0.5, 2.0),
                           noise=rng.uniform(0.005, 0.1))
        X, y = make_data(n=12, d=d, seed=seed + 10)
        _, grad = lml_and_gradient(model, X, y)
        theta0 = np.concatenate([
            np.log(model.kernel.lengthscales),
            [np.log(model.kernel.scale), np.log(model.noise_variance)],
        ])
        eps = 1e-6
        for i in range(len(theta0)):
            th = theta0.copy()
            th[i] += eps
            up = _model_from_theta(model, th, d)
            th[i] -= 2 * eps
            dn = _model_from_theta(model, th, d)
            fd = (log_marginal_likelihood(up, X, y)
                  - log_marginal_likelihood(dn, X, y)) / (2 * eps)
            denom = max(abs(fd), 1e-8)
            assert abs(grad[i] - fd) / denom < 1e-4


def _model_from_theta(model, theta, d):
    spec = model.kernel.with_params(np.exp(theta[:d]), np.exp(theta[d]))
    return GPModel(spec, float(np.exp(theta[d + 1])))


class TestFit:
    def test_improves_lml(self):
        X, y = make_data(n=30, seed=7)
        start = make_model(ls=(2.0,), scale=0.3, noise=0.5)
        fitted = fit(start, X, y, FitOptions(n_restarts=2, seed=0))
        assert (log_marginal_likelihood(fitted, X, y)
                >= log_marginal_likelihood(start, X, y))

    def test_recovers_known_hyperparameters(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(-2, 2, size=(120, 1))
        true = make_model(ls=(0.5,), scale=1.0, noise=0.01)
        K = kernel_matrix(true.kernel, X) + 1e-10 * np.eye(120)
        y = np.linalg.cholesky(K) @ rng.normal(size=120)
        y += rng.normal(scale=0.1, size=120)
        fitted = fit(make_model(ls=(1.5,), scale=0.4, noise=0.2), X, y,
                     FitOptions(n_restarts=3, seed=1))
        assert 0.2 < fitted.kernel.lengthscales[0] < 1.5
        assert 1e-3 < fitted.noise_variance < 0.1

    def test_fix_scale(self):
        X, y = make_data(n=20, seed=8)
        fitted = fit(make_model(scale=1.0), X, y,
                     FitOptions(n_restarts=1, seed=0, fix_scale=True))
        assert fitted.kernel.scale == pytest.approx(1.0)

    def test_deterministic_given_seed(self):
        X, y = make_data(n=15, seed=9)
        opts = FitOptions(n_restarts=3, seed=42)
        a = fit(make_model(), X, y, opts)
        b = fit(make_model(), X, y, opts)
        np.testing.assert_array_equal(a.kernel.lengthscales,
                                      b.kernel.lengthscales)
        assert a.noise_variance == b.noise_variance


class TestLabeledDataset:
    def test_append_leaves_original_untouched(self):
        X, y = make_data(n=3)
        data = LabeledDataset(X, y, np.zeros((3, 1)))
        grown = data.append(np.array([0.5]), 1.25, np.array([0.3]))
        assert len(grown.X) == 4
        assert grown.y[-1] == 1.25
        assert grown.Z[-1, 0] == 0.3
        assert len(data.X) == 3

    def test_rejects_mismatched_rows(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((3, 1)), np.zeros(2), np.zeros((3, 1)))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((2, 1)), np.array([0.0, np.nan]),
                           np.zeros((2, 1)))

import warnings

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.stats import spearmanr

from igplvm import FitConfig, fit_gplvm, rbf_unit_amplitude
from igplvm.approach1 import loglik_a1
from igplvm.data import center, pca_init
from igplvm.errors import DomainError
from igplvm.gplvm import GplvmModel, loglik_gplvm, posterior_mean_and_residuals
from igplvm.optim import check_gradient

from conftest import fd_grad, rel_err


def test_center_simple_row():
    obs = center(np.array([[1.0, 2.0, 3.0]]))
    assert np.allclose(obs.values, [[-1.0, 0.0, 1.0]])
    assert obs.means[0] == 2.0


def test_center_idempotent_and_precise(rng):
    Y = rng.standard_normal((4, 50)) + 1e3
    once = center(Y).values
    assert np.all(np.abs(once.mean(axis=1)) < 1e-12)
    assert np.allclose(center(once).values, once, atol=1e-14)


def test_center_constant_row_allowed():
    obs = center(np.array([[5.0, 5.0, 5.0], [1.0, 2.0, 4.0]]))
    assert np.all(obs.values[0] == 0.0)


def test_pca_picks_dominant_row(rng):
    Y = np.vstack([10 * rng.standard_normal(200), 0.1 * rng.standard_normal(200)])
    X = pca_init(Y, 1)
    assert abs(np.corrcoef(X[0], Y[0])[0, 1]) > 0.99


def test_pca_full_basis_reconstructs(rng):
    Y = center(rng.standard_normal((3, 40))).values
    X = pca_init(Y, 3)
    coef = Y @ np.linalg.pinv(X)
    assert np.allclose(coef @ X, Y, atol=1e-8)


def test_pca_unit_variance_orthogonal(rng):
    X = pca_init(rng.standard_normal((2, 500)), 2)
    assert np.allclose(X.var(axis=1), 1.0)
    assert abs(np.mean(X[0] * X[1])) < 1e-10


def test_pca_sign_convention(rng):
    Y = rng.standard_normal((3, 50))
    X1, X2 = pca_init(Y, 2), pca_init(-Y, 2)
    assert np.allclose(X1, -X2)


def test_pca_rank_deficient_warns(rng):
    z = rng.standard_normal(30)
    Y = np.vstack([z, 2 * z, -z])
    with pytest.warns(RuntimeWarning, match="rank"):
        X = pca_init(Y, 2)
    assert np.all(X[1] == 0.0)


def test_pca_d_too_large():
    with pytest.raises(DomainError):
        pca_init(np.ones((2, 5)), 3)


def test_gradient_isotropic_and_scaled(rng):
    Y = center(rng.standard_normal((3, 12))).values
    X = rng.standard_normal((2, 12))
    v, g = loglik_gplvm(Y, X, 0.8, 1.4, 0.6, grad=True)
    num = fd_grad(lambda Z: loglik_gplvm(Y, Z, 0.8, 1.4, 0.6), X)
    assert rel_err(g["X"], num) < 1e-5
    ls = np.log([0.7, 1.1, 0.9])
    _, g2 = loglik_gplvm(Y, X, np.exp(ls), 1.4, 0.6, grad=True)
    num = fd_grad(lambda s: loglik_gplvm(Y, X, np.exp(s), 1.4, 0.6), ls)
    assert rel_err(g2["log_sigma"], num) < 1e-5


def test_objective_passes_check_gradient(rng):
    Y = center(rng.standard_normal((3, 10))).values

    def f(theta):
        X = theta[:20].reshape(2, 10)
        r, gam, s = np.exp(theta[20:])
        v, g = loglik_gplvm(Y, X, s, r, gam, grad=True)
        return v, np.concatenate([g["X"].ravel(), [g["log_r"], g["log_gamma"], g["log_sigma"]]])

    theta = np.concatenate([rng.standard_normal(20), [0.2, -0.3, 0.1]])
    assert check_gradient(f, theta, 1e-6) < 1e-5


def test_reduces_to_approach1_with_scaled_identity(rng):
    Y = center(rng.standard_normal((4, 15))).values
    X = rng.standard_normal((2, 15))
    assert loglik_gplvm(Y, X, 0.6, 1.2, 0.9) == pytest.approx(
        loglik_a1(Y, X, np.eye(4) / 0.6, 1.2, 0.9), rel=1e-13)


def test_baseline_not_invariant_to_linear_maps(rng):
    # isotropic noise is rotation invariant, so use a shear with unequal scales
    Y = center(rng.standard_normal((3, 30))).values
    X = rng.standard_normal((2, 30))
    T = np.array([[3.0, 0.0, 0.0], [2.0, 0.2, 0.0], [0.0, 1.0, 1.0]])

    def prof(Z):
        res = minimize_scalar(lambda ls: -loglik_gplvm(Z, X, np.exp(ls), 1.0, 1.0),
                              bounds=(-5, 5), method="bounded")
        return -res.fun

    gap = prof(T @ Y) - prof(Y) + 30 * np.log(abs(np.linalg.det(T)))
    assert abs(gap) > 1.0


def test_fit_recovers_smooth_latent():
    x = np.sin(np.linspace(0, 3, 40))
    Y = np.vstack([x, x ** 3])
    m = fit_gplvm(Y, 1, FitConfig(max_outer=50))
    assert abs(spearmanr(m.X[0], x).correlation) > 0.95
    assert m.objective >= m.history[0]
    assert m.r > 0 and m.gamma > 0 and np.all(m.sigma > 0)


def _smooth_snr(m):
    K = rbf_unit_amplitude(m.X, m.gamma)
    return m.snr * K[~np.eye(K.shape[0], dtype=bool)].mean()


def test_white_noise_explained_as_noise():
    rng = np.random.default_rng(0)
    m = fit_gplvm(rng.standard_normal((10, 60)), 1, FitConfig(max_outer=50))
    assert _smooth_snr(m) < 0.5
    x = np.linspace(0, 3, 60)
    Y = np.vstack([np.sin(x), np.cos(x), x / 3]) + 0.1 * rng.standard_normal((3, 60))
    assert _smooth_snr(fit_gplvm(Y, 1, FitConfig(max_outer=50))) > 5.0


def test_scaled_variant_has_per_dimension_noise(rng):
    Y = rng.standard_normal((3, 30)) * np.array([[0.1], [1.0], [5.0]])
    m = fit_gplvm(Y, 1, FitConfig(max_outer=5, scaled=True))
    assert m.sigma.shape == (3,) and np.ptp(m.sigma) > 0


def _model(X, r, means):
    D = len(means)
    return GplvmModel(X=X, r=r, gamma=1.0, sigma=np.ones(D), loglik=0.0, means=means)


def test_posterior_limits_and_decomposition(rng):
    X = np.linspace(-20, 20, 20)[None, :]  # well separated, so K is well conditioned
    Y = rng.standard_normal((2, 20)) + 3.0
    means = Y.mean(axis=1)
    G, E = posterior_mean_and_residuals(_model(X, 1e-12, means), Y)
    assert np.allclose(G, means[:, None], atol=1e-9)
    G, E = posterior_mean_and_residuals(_model(X, 1e8, means), Y)
    assert np.max(np.abs(E)) < 1e-3
    G, E = posterior_mean_and_residuals(_model(X, 2.0, means), Y)
    assert np.max(np.abs(G + E - Y)) < 1e-10


def test_fit_rejects_short_sequences():
    with pytest.raises(DomainError):
        fit_gplvm(np.ones((3, 3)) + np.eye(3), 2)

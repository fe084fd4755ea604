"""Invariant GPLVM with a learned triangular noise factor (Approach I).

The noise covariance is ``L L^T`` with ``L`` lower-triangular. Writing
``Ltilde = L^{-1}``, the whitened data ``Ltilde @ Y`` get independent GP rows
with the unit-noise RBF kernel, so the likelihood only needs the ``N x N``
kernel. Given the kernel, the optimal ``Ltilde`` is available in closed form,
and fitting alternates SCG on ``(X, log r, log gamma)`` with that update.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import _fit
from .data import FitConfig, ObservationMatrix, center, pca_init
from .dynamics import DynamicsParams
from .errors import DomainError, KernelError
from .kernels import ObservationKernelParams, rbf_grad_latents, rbf_plus_unit_noise, sq_dists

__all__ = [
    "ModelA1",
    "loglik_a1",
    "profile_loglik_a1",
    "closed_form_Ltilde",
    "fit_a1",
    "reconstruct_a1",
]

_LOG2PI = np.log(2 * np.pi)
# eigenvalue ratios of Y K^-1 Y^T below which it is treated as singular / near-singular
SINGULAR_RATIO = 1e-14
NEAR_SINGULAR_RATIO = 1e-10


def _chol(K, r, gamma):
    try:
        return cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise KernelError(
            f"kernel matrix not positive definite at r={r:g}, gamma={gamma:g}"
        ) from exc


def _check_lower(Lt, D):
    Lt = np.asarray(Lt, dtype=float)
    if Lt.shape != (D, D):
        raise DomainError(f"noise factor must be {D}x{D}, got {Lt.shape}")
    if np.any(np.triu(Lt, 1) != 0):
        raise DomainError("noise factor must be lower-triangular")
    if np.any(np.diag(Lt) <= 0):
        raise DomainError("noise factor must have a positive diagonal")
    return Lt


def _values(Y):
    return Y.values if isinstance(Y, ObservationMatrix) else np.asarray(Y, dtype=float)


def loglik_a1(Y, X, Ltilde, r: float, gamma: float, grad: bool = False):
    """Marginal log-likelihood of centered ``Y`` (``D x N``).

    With ``grad=True`` also returns a dict of gradients keyed ``X``,
    ``log_r``, ``log_gamma`` and ``Ltilde`` (lower triangle only).
    """
    Y = _values(Y)
    D, N = Y.shape
    Lt = _check_lower(Ltilde, D)
    K = rbf_plus_unit_noise(X, ObservationKernelParams(r, gamma))
    c = _chol(K, r, gamma)
    Yi = Lt @ Y
    alpha = cho_solve(c, Yi.T, check_finite=False)  # (N, D)
    value = (N * np.sum(np.log(np.diag(Lt))) - 0.5 * np.sum(Yi.T * alpha)
             - D * np.sum(np.log(np.diag(c[0]))) - 0.5 * D * N * _LOG2PI)
    if not grad:
        return float(value)

    X = np.asarray(X, dtype=float)
    Kinv = cho_solve(c, np.eye(N), check_finite=False)
    G = 0.5 * (alpha @ alpha.T - D * Kinv)
    Kf = K - np.eye(N)
    grads = {
        "X": rbf_grad_latents(X, G, Kf, gamma),
        "log_r": float(np.sum(G * Kf)),
        "log_gamma": float(gamma * np.sum(G * Kf * (-0.5 * sq_dists(X)))),
        "Ltilde": np.tril(N * np.linalg.inv(Lt).T - alpha.T @ Y.T),
    }
    return float(value), grads


def _data_kernel_product(Y, K):
    c = cho_factor(K, lower=True, check_finite=False)
    M = Y @ cho_solve(c, Y.T, check_finite=False)
    return 0.5 * (M + M.T)


def closed_form_Ltilde(Y, K) -> np.ndarray:
    """Noise factor maximizing the likelihood for fixed kernel ``K``.

    The maximizer is the inverse of the lower Cholesky factor of
    ``Y K^{-1} Y^T / N``.
    """
    Y = _values(Y)
    D, N = Y.shape
    M = _data_kernel_product(Y, np.asarray(K, dtype=float)) / N
    ev = np.linalg.eigvalsh(M)
    ratio = ev[0] / ev[-1] if ev[-1] > 0 else 0.0
    if ratio < SINGULAR_RATIO:
        raise KernelError(
            "Y K^-1 Y^T is singular: the data have rank < D; reduce the number "
            "of observed dimensions or add jitter to the data"
        )
    if ratio < NEAR_SINGULAR_RATIO:
        jitter = 1e-8 * np.trace(M) / D
        warnings.warn(f"Y K^-1 Y^T is near-singular; adding jitter {jitter:.3g}",
                      RuntimeWarning, stacklevel=2)
        M = M + jitter * np.eye(D)
    C = np.linalg.cholesky(M)
    return solve_triangular(C, np.eye(D), lower=True)


def profile_loglik_a1(Y, X, r: float, gamma: float) -> float:
    """Likelihood maximized over the noise factor, at fixed ``(X, r, gamma)``."""
    Y = _values(Y)
    K = rbf_plus_unit_noise(X, ObservationKernelParams(r, gamma))
    return loglik_a1(Y, X, closed_form_Ltilde(Y, K), r, gamma)


@dataclass
class ModelA1:
    X: np.ndarray
    Ltilde: np.ndarray
    r: float
    gamma: float
    loglik: float
    means: np.ndarray
    dynamics: DynamicsParams | None = None
    objective: float = float("nan")
    history: list = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False

    @property
    def variant(self) -> str:
        return "igpdm1" if self.dynamics is not None else "igplvm1"

    @property
    def L(self) -> np.ndarray:
        return solve_triangular(self.Ltilde, np.eye(len(self.Ltilde)), lower=True)

    @property
    def noise_cov(self) -> np.ndarray:
        L = self.L
        return L @ L.T

    @property
    def n_noise_params(self) -> int:
        D = len(self.Ltilde)
        return D * (D + 1) // 2


def _validate(obs: ObservationMatrix, d: int):
    D, N = obs.shape
    if not 1 <= d <= D:
        raise DomainError(f"latent dimension d={d} must satisfy 1 <= d <= D={D}")
    if N <= D:
        raise DomainError(f"need more time points than dimensions (N={N}, D={D})")
    if np.linalg.matrix_rank(obs.values) < D:
        raise DomainError("observations must have full row rank D")


def fit_a1(Y, d: int, cfg: FitConfig | None = None,
           dynamics: DynamicsParams | None = None, X0=None) -> ModelA1:
    """Fit Approach I, optionally with the autoregressive latent prior.

    Each sweep refreshes the noise factor in closed form and then runs an SCG
    block on ``(X, log r, log gamma)`` (plus the dynamics parameters).
    """
    cfg = cfg or FitConfig()
    obs = center(Y)
    _validate(obs, d)
    Yc = obs.values
    D, N = Yc.shape
    X = pca_init(obs, d) if X0 is None else np.array(X0, dtype=float)
    block = _fit.LatentBlock(d, N, 2, dynamics is not None)

    def kernel(s):
        return rbf_plus_unit_noise(s["X"], ObservationKernelParams(s["r"], s["gamma"]))

    def update_noise(s, hist):
        return {**s, "Lt": closed_form_Ltilde(Yc, kernel(s))}

    def update_latents(s, hist):
        Lt = s["Lt"]

        def fun(Xb, hyper):
            r, g = np.exp(hyper)
            v, gr = loglik_a1(Yc, Xb, Lt, r, g, grad=True)
            return v, gr["X"], [gr["log_r"], gr["log_gamma"]]

        theta0 = block.pack(s["X"], np.log([s["r"], s["gamma"]]), s["dyn"])
        theta = _fit.scg_block(block.objective(fun), theta0, cfg, hist)
        Xn, hyper, dyn = block.unpack(theta)
        r, g = np.exp(hyper)
        return {**s, "X": Xn.copy(), "r": float(r), "gamma": float(g), "dyn": dyn}

    def objective(s):
        return loglik_a1(Yc, s["X"], s["Lt"], s["r"], s["gamma"]) + _fit.prior_value(s["X"], s["dyn"])

    state = {"X": X, "r": 1.0, "gamma": 1.0, "dyn": dynamics}
    state = update_noise(state, None)
    best, best_val, hist = _fit.alternate(
        state, [update_latents, update_noise], objective, cfg,
        cfg.max_outer or 200, "fit_a1",
    )
    return ModelA1(
        X=best["X"], Ltilde=best["Lt"], r=best["r"], gamma=best["gamma"],
        loglik=loglik_a1(Yc, best["X"], best["Lt"], best["r"], best["gamma"]),
        means=obs.means, dynamics=best["dyn"], objective=best_val,
        history=hist.objective, sweeps=hist.sweeps, converged=hist.converged,
    )


def whitened_posterior_mean(Yi, X, r, gamma):
    """Posterior mean of the smooth part of each row of ``Yi`` (unit noise)."""
    K = rbf_plus_unit_noise(X, ObservationKernelParams(r, gamma))
    c = _chol(K, r, gamma)
    Kf = K - np.eye(K.shape[0])
    return (Kf @ cho_solve(c, Yi.T, check_finite=False)).T


def reconstruct_a1(model: ModelA1, Y):
    """Split ``Y`` into the smooth signal estimate and the residual noise.

    Returns ``(G_hat, E_hat)`` with ``G_hat + E_hat == Y``; the data means
    are carried by ``G_hat``.
    """
    Yraw = Y.uncentered() if isinstance(Y, ObservationMatrix) else np.asarray(Y, dtype=float)
    Yc = Yraw - model.means[:, None]
    Mpost = whitened_posterior_mean(model.Ltilde @ Yc, model.X, model.r, model.gamma)
    G = model.L @ Mpost + model.means[:, None]
    return G, Yraw - G

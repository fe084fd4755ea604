"""Invariant GPLVM with correlated latent functions (Approach II).

The signal is ``G = R G*`` where the rows of ``G*`` are independent GPs with
the unit-amplitude RBF kernel ``Kg``. With ``Rtilde = R^{-1}`` and
``L_R = R^{-1} L``, the transformed data ``Y* = Rtilde Y`` have the
``DN x DN`` covariance::

    K_{Y*} = I_D (x) Kg + Sigma (x) I_N,     Sigma = L_R L_R^T

Rotating by the eigenvectors ``U`` of ``Sigma`` makes this block-diagonal
with blocks ``Kg + lambda_k I``, so one likelihood evaluation costs ``D``
Cholesky factorizations of size ``N`` and never touches the big matrix.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import _fit
from .data import FitConfig, ObservationMatrix, center, pca_init
from .dynamics import DynamicsParams
from .errors import DomainError, KernelError
from .kernels import rbf_grad_latents, rbf_unit_amplitude, sq_dists

__all__ = [
    "ModelA2",
    "StructuredBigKernel",
    "loglik_a2",
    "loglik_a2_dense",
    "posterior_mean_a2",
    "posterior_mean_a2_dense",
    "fit_a2",
    "reconstruct_a2",
    "max_dn",
]

_LOG2PI = np.log(2 * np.pi)


def max_dn(cfg: FitConfig | None = None) -> int:
    """Size cap on ``N * D``; the ``IGPLVM_MAX_DN`` variable overrides the config."""
    env = os.environ.get("IGPLVM_MAX_DN")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise DomainError(f"IGPLVM_MAX_DN must be an integer, got {env!r}") from exc
    return (cfg or FitConfig()).max_dn


def _check_lower(M, D, name):
    M = np.asarray(M, dtype=float)
    if M.shape != (D, D):
        raise DomainError(f"{name} must be {D}x{D}, got {M.shape}")
    if np.any(np.triu(M, 1) != 0):
        raise DomainError(f"{name} must be lower-triangular")
    if np.any(np.diag(M) <= 0):
        raise DomainError(f"{name} must have a positive diagonal")
    return M


@dataclass
class StructuredBigKernel:
    """``I (x) Kg + Sigma (x) I`` held as ``Kg`` plus the eigenpairs of ``Sigma``."""

    Kg: np.ndarray
    Sigma: np.ndarray
    eigvals: np.ndarray
    U: np.ndarray
    chol: list

    @classmethod
    def build(cls, X, L_R, gamma):
        Kg = rbf_unit_amplitude(X, gamma)
        Sigma = L_R @ L_R.T
        Sigma = 0.5 * (Sigma + Sigma.T)
        try:
            lam, U = np.linalg.eigh(Sigma)
        except np.linalg.LinAlgError as exc:
            raise KernelError("eigendecomposition of the noise covariance failed") from exc
        if lam.min() <= 0:
            raise KernelError(f"noise covariance not positive definite (min eigenvalue {lam.min():.3g})")
        N = Kg.shape[0]
        chol = []
        for k, lk in enumerate(lam):
            try:
                chol.append(cho_factor(Kg + lk * np.eye(N), lower=True, check_finite=False))
            except np.linalg.LinAlgError as exc:
                raise KernelError(f"block {k} of the rotated kernel is not positive definite") from exc
        return cls(Kg=Kg, Sigma=Sigma, eigvals=lam, U=U, chol=chol)

    def dense(self) -> np.ndarray:
        D, N = len(self.eigvals), self.Kg.shape[0]
        return np.kron(np.eye(D), self.Kg) + np.kron(self.Sigma, np.eye(N))

    def solve(self, Ystar):
        """``K^{-1} vec(Y*)`` reshaped to ``D x N`` (row ``i`` is dimension ``i``)."""
        Z = self.U.T @ Ystar
        B = np.vstack([cho_solve(c, z, check_finite=False) for c, z in zip(self.chol, Z)])
        return self.U @ B

    def logdet(self) -> float:
        return float(sum(2.0 * np.sum(np.log(np.diag(c[0]))) for c in self.chol))


def loglik_a2(Y, X, L_R, Rtilde, gamma: float, grad: bool = False):
    """Log-likelihood of centered ``Y`` (``D x N``) under Approach II.

    With ``grad=True`` also returns gradients keyed ``X``, ``log_gamma``,
    ``L_R`` and ``Rtilde`` (the last two lower-triangular, w.r.t. the raw
    entries).
    """
    Y = Y.values if isinstance(Y, ObservationMatrix) else np.asarray(Y, dtype=float)
    D, N = Y.shape
    L_R = _check_lower(L_R, D, "L_R")
    Rt = _check_lower(Rtilde, D, "Rtilde")
    if not (np.isfinite(gamma) and gamma > 0):
        raise DomainError(f"gamma must be finite and > 0, got {gamma!r}")
    bk = StructuredBigKernel.build(X, L_R, gamma)
    Ystar = Rt @ Y
    A = bk.solve(Ystar)
    value = (-0.5 * np.sum(Ystar * A) - 0.5 * bk.logdet()
             + N * np.sum(np.log(np.diag(Rt))) - 0.5 * D * N * _LOG2PI)
    if not grad:
        return float(value)

    X = np.asarray(X, dtype=float)
    Qinv = [cho_solve(c, np.eye(N), check_finite=False) for c in bk.chol]
    Gk = 0.5 * (A.T @ A - sum(Qinv))
    tr = np.array([np.trace(q) for q in Qinv])
    S = 0.5 * (A @ A.T - (bk.U * tr) @ bk.U.T)
    grads = {
        "X": rbf_grad_latents(X, Gk, bk.Kg, gamma),
        "log_gamma": float(gamma * np.sum(Gk * bk.Kg * (-0.5 * sq_dists(X)))),
        "L_R": np.tril(2.0 * S @ L_R),
        "Rtilde": np.tril(-A @ Y.T + N * np.linalg.inv(Rt).T),
    }
    return float(value), grads


def loglik_a2_dense(Y, X, L_R, Rtilde, gamma: float) -> float:
    """Reference evaluation with the explicit ``DN x DN`` kernel."""
    Y = np.asarray(Y, dtype=float)
    D, N = Y.shape
    K = np.kron(np.eye(D), rbf_unit_amplitude(X, gamma)) + np.kron(L_R @ L_R.T, np.eye(N))
    y = (Rtilde @ Y).ravel()
    sign, logdet = np.linalg.slogdet(K)
    return float(-0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet
                 + N * np.log(abs(np.linalg.det(Rtilde))) - 0.5 * D * N * _LOG2PI)


def posterior_mean_a2_dense(Y, X, L_R, Rtilde, gamma: float) -> np.ndarray:
    """Reference posterior mean of ``G*`` (``D x N``) from the explicit kernel."""
    Y = np.asarray(Y, dtype=float)
    D, N = Y.shape
    Kgg = np.kron(np.eye(D), rbf_unit_amplitude(X, gamma))
    K = Kgg + np.kron(L_R @ L_R.T, np.eye(N))
    return (Kgg @ np.linalg.solve(K, (Rtilde @ Y).ravel())).reshape(D, N)


@dataclass
class ModelA2:
    X: np.ndarray
    Rtilde: np.ndarray
    L_R: np.ndarray
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
        return "igpdm2" if self.dynamics is not None else "igplvm2"

    @property
    def R(self) -> np.ndarray:
        return solve_triangular(self.Rtilde, np.eye(len(self.Rtilde)), lower=True)

    @property
    def L(self) -> np.ndarray:
        return self.R @ self.L_R

    @property
    def noise_cov(self) -> np.ndarray:
        L = self.L
        return L @ L.T


class _TriPack:
    """Lower-triangular factor as (log diagonal, strictly-lower entries)."""

    def __init__(self, D):
        self.D = D
        self.il = np.tril_indices(D, -1)
        self.size = D * (D + 1) // 2

    def pack(self, M):
        return np.concatenate([np.log(np.diag(M)), M[self.il]])

    def unpack(self, v):
        M = np.zeros((self.D, self.D))
        M[np.diag_indices(self.D)] = np.exp(v[:self.D])
        M[self.il] = v[self.D:]
        return M

    def grad(self, dM, M):
        # chain rule through the exp on the diagonal
        return np.concatenate([np.diag(dM) * np.diag(M), dM[self.il]])


def fit_a2(Y, d: int, cfg: FitConfig | None = None,
           dynamics: DynamicsParams | None = None, X0=None) -> ModelA2:
    """Fit Approach II by alternating SCG blocks.

    One sweep runs ``cfg.inner_iters`` SCG iterations on the two factors
    ``(Rtilde, L_R)`` and then on ``(X, log gamma)`` plus the dynamics
    parameters. Starts from PCA latents, ``gamma = 1`` and identity factors.
    """
    cfg = cfg or FitConfig()
    obs = center(Y)
    Yc = obs.values
    D, N = Yc.shape
    if not 1 <= d <= D:
        raise DomainError(f"latent dimension d={d} must satisfy 1 <= d <= D={D}")
    if N < d + 2:
        raise DomainError(f"need N >= d + 2 time points, got N={N}")
    cap = max_dn(cfg)
    if N * D > cap:
        raise DomainError(
            f"N*D = {N * D} exceeds the Approach II size cap {cap}; "
            "subsample the sequence or raise IGPLVM_MAX_DN"
        )
    tri = _TriPack(D)
    X = pca_init(obs, d) if X0 is None else np.array(X0, dtype=float)
    block = _fit.LatentBlock(d, N, 1, dynamics is not None)

    def update_factors(s, hist):
        def f(theta):
            Rt, LR = tri.unpack(theta[:tri.size]), tri.unpack(theta[tri.size:])
            v, g = loglik_a2(Yc, s["X"], LR, Rt, s["gamma"], grad=True)
            return v, np.concatenate([tri.grad(g["Rtilde"], Rt), tri.grad(g["L_R"], LR)])

        theta0 = np.concatenate([tri.pack(s["Rt"]), tri.pack(s["LR"])])
        theta = _fit.scg_block(f, theta0, cfg, hist)
        return {**s, "Rt": tri.unpack(theta[:tri.size]), "LR": tri.unpack(theta[tri.size:])}

    def update_latents(s, hist):
        Rt, LR = s["Rt"], s["LR"]

        def fun(Xb, hyper):
            v, g = loglik_a2(Yc, Xb, LR, Rt, float(np.exp(hyper[0])), grad=True)
            return v, g["X"], [g["log_gamma"]]

        theta0 = block.pack(s["X"], [np.log(s["gamma"])], s["dyn"])
        theta = _fit.scg_block(block.objective(fun), theta0, cfg, hist)
        Xn, hyper, dyn = block.unpack(theta)
        return {**s, "X": Xn.copy(), "gamma": float(np.exp(hyper[0])), "dyn": dyn}

    def objective(s):
        return loglik_a2(Yc, s["X"], s["LR"], s["Rt"], s["gamma"]) + _fit.prior_value(s["X"], s["dyn"])

    state = {"X": X, "gamma": 1.0, "Rt": np.eye(D), "LR": np.eye(D), "dyn": dynamics}
    best, best_val, hist = _fit.alternate(
        state, [update_factors, update_latents], objective, cfg,
        cfg.max_outer or 100, "fit_a2",
    )
    return ModelA2(
        X=best["X"], Rtilde=best["Rt"], L_R=best["LR"], gamma=best["gamma"],
        loglik=loglik_a2(Yc, best["X"], best["LR"], best["Rt"], best["gamma"]),
        means=obs.means, dynamics=best["dyn"], objective=best_val,
        history=hist.objective, sweeps=hist.sweeps, converged=hist.converged,
    )


def posterior_mean_a2(Yc, X, L_R, Rtilde, gamma) -> np.ndarray:
    """Posterior mean of ``G*`` given centered ``Yc`` (structured)."""
    bk = StructuredBigKernel.build(X, L_R, gamma)
    return (bk.Kg @ bk.solve(Rtilde @ Yc).T).T


def reconstruct_a2(model: ModelA2, Y):
    """``(G_hat, E_hat)`` with ``G_hat = R M*`` plus the data means."""
    Yraw = Y.uncentered() if isinstance(Y, ObservationMatrix) else np.asarray(Y, dtype=float)
    Yc = Yraw - model.means[:, None]
    Mstar = posterior_mean_a2(Yc, model.X, model.L_R, model.Rtilde, model.gamma)
    G = model.R @ Mstar + model.means[:, None]
    return G, Yraw - G

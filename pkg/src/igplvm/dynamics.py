"""First-order autoregressive GP prior over latent trajectories.

The map ``x_{t-1} -> x_t`` gets an RBF-plus-noise GP prior, independently per
latent dimension::

    K_X[s, t] = a * exp(-b/2 |x_s - x_t|^2) + delta_st / w,   s, t < N

over the inputs ``x_1 .. x_{N-1}`` with targets ``x_2 .. x_N``. The first
point has a standard normal prior. Adding this log-density to a latent
variable model's marginal likelihood turns GPLVM into GPDM.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DomainError, KernelError
from .kernels import dynamics_kernel, rbf_grad_latents, sq_dists

__all__ = ["DynamicsParams", "DynamicsLogPrior", "dyn_log_prior"]

_LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class DynamicsParams:
    """Amplitude ``a``, inverse length-scale ``b`` and noise precision ``w``."""

    a: float = 1.0
    b: float = 1.0
    w: float = 10.0
    order: int = 1

    def __post_init__(self):
        for name in ("a", "b", "w"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"dynamics parameter {name} must be finite and > 0, got {v!r}")
        if self.order != 1:
            raise ValueError("only first-order dynamics are supported")

    def log_vector(self) -> np.ndarray:
        return np.log([self.a, self.b, self.w])

    @classmethod
    def from_log_vector(cls, v, order: int = 1) -> "DynamicsParams":
        a, b, w = np.exp(np.asarray(v, dtype=float))
        return cls(a=float(a), b=float(b), w=float(w), order=order)


@dataclass
class DynamicsLogPrior:
    value: float
    dX: np.ndarray
    dlog_params: np.ndarray  # w.r.t. (log a, log b, log w)


def dyn_log_prior(X, p: DynamicsParams, grad: bool = True) -> DynamicsLogPrior:
    """Log-density of the latent trajectory ``X`` (shape ``(d, N)``)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 3:
        raise DomainError("dynamics prior needs a (d, N) trajectory with N >= 3")
    if p.order != 1:
        raise DomainError("only first-order dynamics are supported")
    d, N = X.shape
    Xin, Xout = X[:, :-1], X[:, 1:]
    n = N - 1
    K = dynamics_kernel(Xin, p.a, p.b, p.w)
    try:
        c = cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise KernelError(
            f"dynamics kernel not positive definite (a={p.a:g}, b={p.b:g}, w={p.w:g})"
        ) from exc
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    alpha = cho_solve(c, Xout.T, check_finite=False)  # (n, d)
    x1 = X[:, 0]
    value = (-0.5 * d * logdet - 0.5 * np.sum(Xout.T * alpha) - 0.5 * d * n * _LOG2PI
             - 0.5 * x1 @ x1 - 0.5 * d * _LOG2PI)
    if not grad:
        return DynamicsLogPrior(value=float(value), dX=None, dlog_params=None)

    Kinv = cho_solve(c, np.eye(n), check_finite=False)
    G = 0.5 * (alpha @ alpha.T - d * Kinv)
    Kf = K - np.eye(n) / p.w
    dX = np.zeros_like(X)
    dX[:, :-1] += rbf_grad_latents(Xin, G, Kf, p.b)
    dX[:, 1:] -= alpha.T
    dX[:, 0] -= x1
    dlog_a = np.sum(G * Kf)
    dlog_b = p.b * np.sum(G * Kf * (-0.5 * sq_dists(Xin)))
    dlog_w = -np.trace(G) / p.w
    return DynamicsLogPrior(value=float(value), dX=dX,
                            dlog_params=np.array([dlog_a, dlog_b, dlog_w]))

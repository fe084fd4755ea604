"""RBF kernels over latent coordinates and their analytic derivatives.

Latent points are stored column-wise: ``X`` has shape ``(d, N)``. Three
kernels are provided:

``eq6``
    ``r * exp(-gamma/2 |x_t - x_s|^2) + delta_ts``, the observation kernel
    with unit per-sample noise.
``eq9``
    ``exp(-gamma/2 |x_t - x_s|^2)``, the unit-amplitude shared kernel.
``dynamics``
    ``a * exp(-b/2 |x_t - x_s|^2) + delta_ts / w``, used by the
    autoregressive latent prior.

The delta terms are keyed on the sample index, so two time points that
happen to share coordinates receive no cross-noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "ObservationKernelParams",
    "KernelPartials",
    "sq_dists",
    "rbf_plus_unit_noise",
    "rbf_unit_amplitude",
    "dynamics_kernel",
    "kernel_partials",
    "rbf_grad_latents",
]

KINDS = ("eq6", "eq9", "dynamics")


@dataclass(frozen=True)
class ObservationKernelParams:
    """Signal variance ``r`` and inverse squared length-scale ``gamma``."""

    r: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("r", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")


def _check_latents(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError(f"latents must be a (d, N) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError("latents contain non-finite values")
    return X


def _check_positive(**kw):
    for name, v in kw.items():
        if not np.isfinite(v) or v <= 0:
            raise DomainError(f"{name} must be finite and > 0, got {v!r}")


def sq_dists(X: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between the columns of ``X``."""
    X = _check_latents(X)
    sq = np.sum(X * X, axis=0)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (X.T @ X)
    np.maximum(D2, 0.0, out=D2)
    np.fill_diagonal(D2, 0.0)
    # exact symmetry regardless of rounding in the Gram product
    return 0.5 * (D2 + D2.T)


def rbf_plus_unit_noise(X, p: ObservationKernelParams) -> np.ndarray:
    X = _check_latents(X)
    K = p.r * np.exp(-0.5 * p.gamma * sq_dists(X))
    K[np.diag_indices_from(K)] += 1.0
    return K


def rbf_unit_amplitude(X, gamma: float) -> np.ndarray:
    X = _check_latents(X)
    _check_positive(gamma=gamma)
    return np.exp(-0.5 * gamma * sq_dists(X))


def dynamics_kernel(X, a: float, b: float, w: float) -> np.ndarray:
    X = _check_latents(X)
    _check_positive(a=a, b=b, w=w)
    K = a * np.exp(-0.5 * b * sq_dists(X))
    K[np.diag_indices_from(K)] += 1.0 / w
    return K


def rbf_grad_latents(X: np.ndarray, G: np.ndarray, Kf: np.ndarray,
                     gamma: float) -> np.ndarray:
    """Contract ``dL/dK`` with the derivative of an RBF block w.r.t. ``X``.

    Parameters
    ----------
    X : (d, N) array
        Latent points.
    G : (N, N) array
        Symmetric gradient of a scalar objective w.r.t. the kernel matrix.
    Kf : (N, N) array
        The RBF part of the kernel (amplitude included, no noise term).
    gamma : float
        Inverse squared length-scale of that RBF part.

    Returns
    -------
    (d, N) array
        ``sum_{s,u} G[s,u] dK[s,u]/dX[j,t]``.
    """
    P = G * Kf
    return -2.0 * gamma * (X * P.sum(axis=1)[None, :] - X @ P)


@dataclass
class KernelPartials:
    """Explicit partial derivatives of a kernel matrix.

    ``dX[j, t]`` is the ``(N, N)`` matrix ``dK/dX[j, t]``. ``dhyper`` maps
    each hyperparameter name (natural scale, not log) to ``dK/dtheta``.
    """

    K: np.ndarray
    dX: np.ndarray
    dhyper: dict


def kernel_partials(X, params: dict, kind: str) -> KernelPartials:
    """Full set of kernel partials, for verification and small problems.

    ``params`` holds ``r, gamma`` for ``eq6``, ``gamma`` for ``eq9`` and
    ``a, b, w`` for ``dynamics``. Memory is ``O(d N^3)``; the fitting code
    uses :func:`rbf_grad_latents` instead.
    """
    if kind not in KINDS:
        raise DomainError(f"kind must be one of {KINDS}, got {kind!r}")
    X = _check_latents(X)
    D2 = sq_dists(X)
    if kind == "eq6":
        amp, ls = params["r"], params["gamma"]
        _check_positive(r=amp, gamma=ls)
    elif kind == "eq9":
        amp, ls = 1.0, params["gamma"]
        _check_positive(gamma=ls)
    else:
        amp, ls = params["a"], params["b"]
        _check_positive(a=amp, b=ls, w=params["w"])
    E = np.exp(-0.5 * ls * D2)
    Kf = amp * E

    d, N = X.shape
    # dKf[s,u]/dX[j,t] = -ls * Kf[s,u] * (x_js - x_ju) * (delta_st - delta_ut)
    diff = X[:, :, None] - X[:, None, :]          # (d, N, N): x_js - x_ju
    base = -ls * Kf[None] * diff                    # (d, N, N)
    dX = np.zeros((d, N, N, N))
    for t in range(N):
        dX[:, t, t, :] += base[:, t, :]
        dX[:, t, :, t] -= base[:, :, t]

    dls = -0.5 * D2 * Kf
    if kind == "eq6":
        K = Kf + np.eye(N)
        dhyper = {"r": E, "gamma": dls}
    elif kind == "eq9":
        K = Kf
        dhyper = {"gamma": dls}
    else:
        w = params["w"]
        K = Kf + np.eye(N) / w
        dhyper = {"a": E, "b": dls, "w": -np.eye(N) / w**2}
    return KernelPartials(K=K, dX=dX, dhyper=dhyper)

"""Observation handling, PCA initialization and fit configuration."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["ObservationMatrix", "FitConfig", "center", "pca_init"]


@dataclass(frozen=True)
class ObservationMatrix:
    """Centered observations, ``values`` is ``(D, N)``; ``means`` is ``(D,)``."""

    values: np.ndarray
    means: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def uncentered(self) -> np.ndarray:
        return self.values + self.means[:, None]


@dataclass(frozen=True)
class FitConfig:
    """Schedule shared by all model fits.

    ``inner_iters`` SCG iterations are run per parameter block per outer
    sweep; sweeps stop when the relative objective change drops below
    ``rel_tol`` or after ``max_outer`` sweeps (``None`` picks the
    per-model default).
    """

    inner_iters: int = 10
    max_outer: int | None = None
    rel_tol: float = 1e-6
    scaled: bool = False
    max_dn: int = 5000
    jitter: float = 1e-8

    def __post_init__(self):
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        if self.max_outer is not None and self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")


def as_data_matrix(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.ndim != 2:
        raise DomainError(f"observations must be a (D, N) matrix, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise DomainError("observations contain non-finite values")
    if Y.shape[1] < 2:
        raise DomainError("need at least two time points")
    return Y


def center(Y) -> ObservationMatrix:
    """Subtract each dimension's temporal mean."""
    if isinstance(Y, ObservationMatrix):
        return Y
    Y = as_data_matrix(Y)
    means = Y.mean(axis=1)
    Yc = Y - means[:, None]
    # second pass removes the rounding residue of the first
    Yc -= Yc.mean(axis=1, keepdims=True)
    return ObservationMatrix(values=Yc, means=means)


def pca_init(Y, d: int) -> np.ndarray:
    """Project onto the top ``d`` principal directions, unit variance per row.

    Each direction's largest-magnitude loading is made positive. Directions
    with (numerically) zero variance are returned as zero rows.
    """
    Yc = center(Y).values
    D, N = Yc.shape
    if not 1 <= d <= min(D, N):
        raise DomainError(f"latent dimension d={d} must satisfy 1 <= d <= min(D, N) = {min(D, N)}")
    C = Yc @ Yc.T / N
    evals, evecs = np.linalg.eigh(C)
    order = np.argsort(evals)[::-1][:d]
    evals, U = evals[order], evecs[:, order]
    idx = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[idx, np.arange(d)])[None, :]

    X = U.T @ Yc
    tol = max(evals[0], 0.0) * max(D, N) * np.finfo(float).eps
    keep = evals > tol
    if not np.all(keep):
        warnings.warn(
            f"data rank {int(keep.sum())} is below d={d}; trailing latents set to zero",
            RuntimeWarning, stacklevel=2,
        )
    X[keep] /= np.sqrt(evals[keep])[:, None]
    X[~keep] = 0.0
    return X

"""Baseline GPLVM with independent observation noise.

The noise is isotropic by default (one scale ``sigma`` shared by all
dimensions) or per-dimension when ``FitConfig.scaled`` is set. In both cases
the likelihood is the Approach I likelihood with the noise factor restricted
to ``Ltilde = diag(1 / sigma)``, so ``r`` is the signal-to-noise ratio.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fit
from .approach1 import loglik_a1, whitened_posterior_mean
from .data import FitConfig, ObservationMatrix, center, pca_init
from .dynamics import DynamicsParams
from .errors import DomainError

__all__ = ["GplvmModel", "fit_gplvm", "posterior_mean_and_residuals", "loglik_gplvm"]


def _ltilde(log_sigma, D):
    return np.diag(np.broadcast_to(np.exp(-np.asarray(log_sigma, dtype=float)), (D,)))


def loglik_gplvm(Y, X, sigma, r, gamma, grad=False):
    """Baseline log-likelihood; ``sigma`` is a scalar or a length-``D`` vector.

    Gradients (when requested) are w.r.t. ``X``, ``log_r``, ``log_gamma`` and
    ``log_sigma`` (same shape as ``sigma``).
    """
    Y = Y.values if isinstance(Y, ObservationMatrix) else np.asarray(Y, dtype=float)
    D = Y.shape[0]
    log_sigma = np.log(sigma)
    Lt = _ltilde(log_sigma, D)
    if not grad:
        return loglik_a1(Y, X, Lt, r, gamma)
    v, g = loglik_a1(Y, X, Lt, r, gamma, grad=True)
    dls = -np.diag(g.pop("Ltilde")) * np.diag(Lt)
    g["log_sigma"] = dls if np.ndim(sigma) else float(dls.sum())
    return v, g


@dataclass
class GplvmModel:
    X: np.ndarray
    r: float
    gamma: float
    sigma: np.ndarray
    loglik: float
    means: np.ndarray
    dynamics: DynamicsParams | None = None
    objective: float = float("nan")
    history: list = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False

    @property
    def variant(self) -> str:
        return "gpdm" if self.dynamics is not None else "gplvm"

    @property
    def Ltilde(self) -> np.ndarray:
        return _ltilde(np.log(self.sigma), len(self.means))

    @property
    def L(self) -> np.ndarray:
        return np.diag(np.broadcast_to(self.sigma, self.means.shape).astype(float))

    @property
    def noise_cov(self) -> np.ndarray:
        return self.L ** 2

    @property
    def snr(self) -> float:
        return self.r


def fit_gplvm(Y, d: int, cfg: FitConfig | None = None,
              dynamics: DynamicsParams | None = None, X0=None) -> GplvmModel:
    """Fit the baseline by SCG over latents, kernel and noise scale jointly."""
    cfg = cfg or FitConfig()
    obs = center(Y)
    Yc = obs.values
    D, N = Yc.shape
    if not 1 <= d <= D:
        raise DomainError(f"latent dimension d={d} must satisfy 1 <= d <= D={D}")
    if N < d + 2:
        raise DomainError(f"need N >= d + 2 time points, got N={N}")
    n_sigma = D if cfg.scaled else 1
    X = pca_init(obs, d) if X0 is None else np.array(X0, dtype=float)
    sd = np.sqrt(np.mean(Yc ** 2, axis=1)) if cfg.scaled else np.sqrt(np.mean(Yc ** 2))
    sigma0 = np.maximum(np.atleast_1d(sd), 1e-8)
    block = _fit.LatentBlock(d, N, 2 + n_sigma, dynamics is not None)

    def sig(log_s):
        return np.exp(log_s) if cfg.scaled else float(np.exp(log_s[0]))

    def fun(Xb, hyper):
        r, g = np.exp(hyper[:2])
        v, gr = loglik_gplvm(Yc, Xb, sig(hyper[2:]), r, g, grad=True)
        return v, gr["X"], np.concatenate([[gr["log_r"], gr["log_gamma"]], np.atleast_1d(gr["log_sigma"])])

    def update(s, hist):
        theta0 = block.pack(s["X"], np.concatenate([np.log([s["r"], s["gamma"]]), s["log_sigma"]]), s["dyn"])
        theta = _fit.scg_block(block.objective(fun), theta0, cfg, hist)
        Xn, hyper, dyn = block.unpack(theta)
        r, g = np.exp(hyper[:2])
        return {"X": Xn.copy(), "r": float(r), "gamma": float(g),
                "log_sigma": hyper[2:].copy(), "dyn": dyn}

    def objective(s):
        return (loglik_gplvm(Yc, s["X"], sig(s["log_sigma"]), s["r"], s["gamma"])
                + _fit.prior_value(s["X"], s["dyn"]))

    state = {"X": X, "r": 1.0, "gamma": 1.0, "log_sigma": np.log(sigma0), "dyn": dynamics}
    best, best_val, hist = _fit.alternate(state, [update], objective, cfg,
                                          cfg.max_outer or 200, "fit_gplvm")
    sigma = np.exp(best["log_sigma"])
    return GplvmModel(
        X=best["X"], r=best["r"], gamma=best["gamma"],
        sigma=sigma if cfg.scaled else np.full(D, sigma[0]),
        loglik=loglik_gplvm(Yc, best["X"], sig(best["log_sigma"]), best["r"], best["gamma"]),
        means=obs.means, dynamics=best["dyn"], objective=best_val,
        history=hist.objective, sweeps=hist.sweeps, converged=hist.converged,
    )


def posterior_mean_and_residuals(model: GplvmModel, Y):
    """``(G_hat, E_hat)`` at the training inputs; ``G_hat + E_hat == Y``."""
    Yraw = Y.uncentered() if isinstance(Y, ObservationMatrix) else np.asarray(Y, dtype=float)
    Yc = Yraw - model.means[:, None]
    # per-row noise scales cancel in K_f (K_f + I)^{-1}
    G = whitened_posterior_mean(Yc, model.X, model.r, model.gamma) + model.means[:, None]
    return G, Yraw - G

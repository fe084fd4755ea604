"""Variant dispatch, reconstruction and (de)serialization of fitted models.

Six variants share one interface: ``gplvm``, ``igplvm1`` and ``igplvm2``,
and their dynamic counterparts ``gpdm``, ``igpdm1`` and ``igpdm2``, which add
the autoregressive latent prior.
"""
from __future__ import annotations

import numpy as np

from .approach1 import ModelA1, fit_a1, loglik_a1, reconstruct_a1
from .approach2 import ModelA2, fit_a2, loglik_a2, reconstruct_a2
from .data import FitConfig
from .dynamics import DynamicsParams, dyn_log_prior
from .gplvm import GplvmModel, fit_gplvm, loglik_gplvm, posterior_mean_and_residuals

__all__ = [
    "VARIANTS",
    "fit_model",
    "fit_dynamic",
    "reconstruct",
    "model_loglik",
    "model_to_dict",
    "model_from_dict",
    "noise_factor",
    "canonical_variant",
]

VARIANTS = ("gplvm", "igplvm1", "igplvm2", "gpdm", "igpdm1", "igpdm2")
_STATIC = {"gplvm": "gplvm", "gpdm": "gplvm", "igplvm1": "igplvm1", "igpdm1": "igplvm1",
           "igplvm2": "igplvm2", "igpdm2": "igplvm2"}
_DYNAMIC = {"gplvm": "gpdm", "igplvm1": "igpdm1", "igplvm2": "igpdm2"}
_ALIASES = {"igpdm-a1": "igpdm1", "igpdm-a2": "igpdm2", "igplvm-a1": "igplvm1",
            "igplvm-a2": "igplvm2"}
_FITS = {"gplvm": fit_gplvm, "igplvm1": fit_a1, "igplvm2": fit_a2}


def canonical_variant(variant: str, dynamics: bool = False) -> str:
    """Normalize a variant name; ``dynamics=True`` upgrades a static variant."""
    v = _ALIASES.get(variant.lower(), variant.lower())
    if v not in VARIANTS:
        raise ValueError(f"unknown model variant {variant!r}; choose from {', '.join(VARIANTS)}")
    return _DYNAMIC[v] if dynamics and v in _DYNAMIC else v


def fit_model(Y, variant: str, d: int, cfg: FitConfig | None = None,
              dynamics: DynamicsParams | None = None, X0=None):
    """Fit any variant. Dynamic variants default to ``DynamicsParams()``."""
    v = canonical_variant(variant)
    dyn = None
    if v in ("gpdm", "igpdm1", "igpdm2"):
        dyn = dynamics or DynamicsParams()
    return _FITS[_STATIC[v]](Y, d, cfg, dynamics=dyn, X0=X0)


def fit_dynamic(Y, d: int, variant: str = "igpdm1", cfg: FitConfig | None = None,
                dynamics: DynamicsParams | None = None, X0=None):
    """Fit a dynamic variant (``gpdm``, ``igpdm1`` or ``igpdm2``)."""
    v = canonical_variant(variant, dynamics=True)
    return fit_model(Y, v, d, cfg, dynamics=dynamics, X0=X0)


def reconstruct(model, Y):
    """``(G_hat, E_hat)`` for any fitted model; ``Y`` is raw ``D x N`` data."""
    if isinstance(model, ModelA1):
        return reconstruct_a1(model, Y)
    if isinstance(model, ModelA2):
        return reconstruct_a2(model, Y)
    if isinstance(model, GplvmModel):
        return posterior_mean_and_residuals(model, Y)
    raise TypeError(f"not a fitted model: {type(model).__name__}")


def model_loglik(model, Y, with_prior: bool = False) -> float:
    """Re-evaluate a model's likelihood on raw data ``Y`` with its own means."""
    Yc = np.asarray(Y, dtype=float) - model.means[:, None]
    if isinstance(model, ModelA1):
        v = loglik_a1(Yc, model.X, model.Ltilde, model.r, model.gamma)
    elif isinstance(model, ModelA2):
        v = loglik_a2(Yc, model.X, model.L_R, model.Rtilde, model.gamma)
    elif isinstance(model, GplvmModel):
        sigma = model.sigma if np.ptp(model.sigma) > 0 else float(model.sigma[0])
        v = loglik_gplvm(Yc, model.X, sigma, model.r, model.gamma)
    else:
        raise TypeError(f"not a fitted model: {type(model).__name__}")
    if with_prior and model.dynamics is not None:
        v += dyn_log_prior(model.X, model.dynamics, grad=False).value
    return float(v)


def _dyn_dict(p):
    return None if p is None else {"a": p.a, "b": p.b, "w": p.w, "order": p.order}


def model_to_dict(model) -> dict:
    """JSON-ready dict; floats survive a round trip exactly."""
    out = {
        "variant": model.variant,
        "X": model.X.tolist(),
        "means": model.means.tolist(),
        "gamma": model.gamma,
        "loglik": model.loglik,
        "objective": model.objective,
        "dynamics": _dyn_dict(model.dynamics),
        "sweeps": model.sweeps,
        "converged": model.converged,
        "history": [float(h) for h in model.history],
    }
    if isinstance(model, ModelA1):
        out.update(r=model.r, Ltilde=model.Ltilde.tolist())
    elif isinstance(model, ModelA2):
        out.update(Rtilde=model.Rtilde.tolist(), L_R=model.L_R.tolist())
    else:
        out.update(r=model.r, sigma=model.sigma.tolist())
    return out


def model_from_dict(raw: dict):
    v = canonical_variant(raw["variant"])
    dyn = DynamicsParams(**raw["dynamics"]) if raw.get("dynamics") else None
    common = dict(
        X=np.array(raw["X"], dtype=float), gamma=float(raw["gamma"]),
        loglik=float(raw["loglik"]), means=np.array(raw["means"], dtype=float),
        dynamics=dyn, objective=float(raw["objective"]), history=list(raw.get("history", [])),
        sweeps=int(raw["sweeps"]), converged=bool(raw["converged"]),
    )
    base = _STATIC[v]
    if base == "igplvm1":
        return ModelA1(Ltilde=np.array(raw["Ltilde"], dtype=float), r=float(raw["r"]), **common)
    if base == "igplvm2":
        return ModelA2(Rtilde=np.array(raw["Rtilde"], dtype=float),
                       L_R=np.array(raw["L_R"], dtype=float), **common)
    return GplvmModel(r=float(raw["r"]), sigma=np.array(raw["sigma"], dtype=float), **common)


def noise_factor(model) -> np.ndarray:
    """Lower-triangular ``L`` with noise covariance ``L L^T``."""
    return np.asarray(model.L, dtype=float)

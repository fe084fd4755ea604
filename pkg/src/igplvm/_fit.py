"""Block-alternation driver and latent-block packing shared by the fits."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsParams, dyn_log_prior
from .optim import ScgConfig, scg_maximize


@dataclass
class FitHistory:
    objective: list = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    scg_nonconverged_blocks: int = 0
    nonmonotone_sweeps: int = 0


def alternate(state: dict, steps, objective, cfg, max_outer: int, label: str):
    """Run ``steps`` (each ``state -> state``) in sweeps until the objective settles.

    Returns the best state seen and a :class:`FitHistory`.
    """
    hist = FitHistory()
    current = objective(state)
    hist.objective.append(current)
    best, best_val = state, current
    for sweep in range(1, max_outer + 1):
        for step in steps:
            state = step(state, hist)
        new = objective(state)
        hist.objective.append(new)
        hist.sweeps = sweep
        if new < best_val - 1e-9 * max(1.0, abs(best_val)):
            hist.nonmonotone_sweeps += 1
            warnings.warn(f"{label}: objective decreased in sweep {sweep}; keeping best iterate",
                          RuntimeWarning, stacklevel=3)
        if new >= best_val:
            best, best_val = state, new
        if abs(new - current) <= cfg.rel_tol * max(1.0, abs(current)):
            hist.converged = True
            break
        current = new
    return best, best_val, hist


def scg_block(fun, theta0, cfg, hist: FitHistory):
    theta, trace = scg_maximize(fun, theta0, ScgConfig(max_iters=cfg.inner_iters))
    if trace.nonfinite_steps:
        hist.scg_nonconverged_blocks += 1
    return theta


class LatentBlock:
    """Packs latents, log-hyperparameters and optional dynamics log-parameters.

    ``fun(X, hyper) -> (value, dX, dhyper)`` is extended with the dynamics
    log-prior when ``with_dynamics`` is set; the prior adds to the value and
    to ``dX`` and appends its own three log-parameter gradients.
    """

    def __init__(self, d: int, N: int, n_hyper: int, with_dynamics: bool):
        self.d, self.N, self.n_hyper = d, N, n_hyper
        self.with_dynamics = with_dynamics

    def pack(self, X, hyper, dyn: DynamicsParams | None):
        parts = [np.ravel(X), np.asarray(hyper, dtype=float)]
        if self.with_dynamics:
            parts.append(dyn.log_vector())
        return np.concatenate(parts)

    def unpack(self, theta):
        dN = self.d * self.N
        X = theta[:dN].reshape(self.d, self.N)
        hyper = theta[dN:dN + self.n_hyper]
        dyn = DynamicsParams.from_log_vector(theta[dN + self.n_hyper:]) if self.with_dynamics else None
        return X, hyper, dyn

    def objective(self, fun):
        def f(theta):
            X, hyper, dyn = self.unpack(theta)
            value, dX, dhyper = fun(X, hyper)
            parts = [dX.ravel(), np.asarray(dhyper, dtype=float)]
            if self.with_dynamics:
                prior = dyn_log_prior(X, dyn)
                value = value + prior.value
                parts[0] = parts[0] + prior.dX.ravel()
                parts.append(prior.dlog_params)
            return value, np.concatenate(parts)
        return f


def prior_value(X, dyn: DynamicsParams | None) -> float:
    return 0.0 if dyn is None else dyn_log_prior(X, dyn, grad=False).value

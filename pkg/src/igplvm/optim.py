"""Scaled conjugate gradient minimizer and a finite-difference gradient check.

The optimizer follows Moller's scaled conjugate gradient: a conjugate
direction with a curvature estimate from one extra gradient evaluation, and a
Levenberg-style scale ``lambda`` that is adapted from the ratio of actual to
predicted decrease. No line search is performed.

Objectives are callables returning ``(value, gradient)``. Maximization
problems are negated by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["ScgConfig", "OptimTrace", "scg_minimize", "scg_maximize", "check_gradient"]

_SIGMA0 = 1e-4
_LAMBDA_MIN = 1e-15
_LAMBDA_MAX = 1e100


@dataclass(frozen=True)
class ScgConfig:
    max_iters: int = 100
    grad_tol: float = 1e-8
    objective_tol: float = 1e-10
    initial_lambda: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("grad_tol", "objective_tol", "initial_lambda"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class OptimTrace:
    iterations: int
    accepted_steps: int
    n_evals: int
    final_objective: float
    final_grad_norm: float
    converged: bool
    reason: str
    nonfinite_steps: int = 0
    history: list | None = None


def _evaluate(f, x):
    try:
        v, g = f(x)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError):
        return np.inf, None
    v = float(v)
    if not np.isfinite(v):
        return np.inf, None
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        return np.inf, None
    return v, g


def scg_minimize(f, x0, cfg: ScgConfig | None = None):
    """Minimize ``f`` from ``x0`` with scaled conjugate gradients.

    Parameters
    ----------
    f : callable
        ``f(x) -> (value, grad)``. A ``LinAlgError`` or non-finite output is
        treated as a rejected trial point.
    x0 : array_like
        Flat starting vector.
    cfg : ScgConfig, optional

    Returns
    -------
    x : ndarray
        Best accepted iterate; ``f(x) <= f(x0)``.
    trace : OptimTrace
    """
    cfg = cfg or ScgConfig()
    x = np.array(x0, dtype=float).ravel()
    n = x.size
    fold, grad = _evaluate(f, x)
    if grad is None:
        raise DomainError("objective is not finite at the starting point")
    n_evals = 1
    history = [fold]

    def _trace(it, acc, converged, reason, nonfinite):
        return OptimTrace(
            iterations=it, accepted_steps=acc, n_evals=n_evals,
            final_objective=fold, final_grad_norm=float(np.max(np.abs(grad))) if n else 0.0,
            converged=converged, reason=reason, nonfinite_steps=nonfinite,
            history=history,
        )

    if n == 0 or np.max(np.abs(grad)) <= cfg.grad_tol:
        return x, _trace(0, 0, True, "grad_tol", 0)

    lam = cfg.initial_lambda
    d = -grad
    success = True
    nsuccess = 0
    accepted = 0
    nonfinite = 0
    mu = kappa = theta = 0.0

    for it in range(1, cfg.max_iters + 1):
        if success:
            mu = d @ grad
            if mu >= 0:
                d = -grad
                mu = d @ grad
            kappa = d @ d
            if kappa < np.finfo(float).eps:
                return x, _trace(it - 1, accepted, True, "grad_tol", nonfinite)
            sigma = _SIGMA0 / np.sqrt(kappa)
            _, gplus = _evaluate(f, x + sigma * d)
            n_evals += 1
            if gplus is None:
                # curvature probe failed; fall back to the scale term alone
                theta = 0.0
            else:
                theta = d @ (gplus - grad) / sigma

        delta = theta + lam * kappa
        if delta <= 0:
            delta = lam * kappa
            lam = lam - theta / kappa
        alpha = -mu / delta

        xnew = x + alpha * d
        fnew, gnew = _evaluate(f, xnew)
        n_evals += 1
        if gnew is None:
            nonfinite += 1
            Delta = -np.inf
        else:
            Delta = 2.0 * (fnew - fold) / (alpha * mu)

        if Delta >= 0:
            success = True
            nsuccess += 1
            accepted += 1
            prev_f = fold
            x = xnew
            fold = fnew
            grad_old = grad
            grad = gnew
            history.append(fold)
            if np.max(np.abs(grad)) <= cfg.grad_tol:
                return x, _trace(it, accepted, nonfinite == 0, "grad_tol", nonfinite)
            if abs(fnew - prev_f) <= cfg.objective_tol * max(1.0, abs(prev_f)):
                return x, _trace(it, accepted, nonfinite == 0, "objective_tol", nonfinite)
        else:
            success = False

        if Delta < 0.25:
            lam = min(4.0 * lam, _LAMBDA_MAX)
        if Delta > 0.75:
            lam = max(0.5 * lam, _LAMBDA_MIN)
        if lam >= _LAMBDA_MAX:
            return x, _trace(it, accepted, False, "lambda_overflow", nonfinite)

        if nsuccess == n:
            d = -grad
            nsuccess = 0
        elif success:
            beta = (grad_old - grad) @ grad / mu
            d = beta * d - grad

    return x, _trace(cfg.max_iters, accepted, False, "max_iters", nonfinite)


def scg_maximize(f, x0, cfg: ScgConfig | None = None):
    """Maximize ``f`` by minimizing its negation; the trace keeps the sign of ``-f``."""
    def neg(x):
        v, g = f(x)
        return -v, -np.asarray(g)
    return scg_minimize(neg, x0, cfg)


def check_gradient(f, point, step: float = 1e-5) -> float:
    """Largest discrepancy between analytic and central-difference gradients.

    Returns ``max_i |g_i - g_fd_i| / max(1, |g_fd_i|)``.
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    x = np.array(point, dtype=float).ravel()
    _, g = f(x)
    g = np.asarray(g, dtype=float).ravel()
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        fp, _ = f(x + e)
        fm, _ = f(x - e)
        fd = (fp - fm) / (2 * step)
        worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    return worst

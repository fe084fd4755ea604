"""Synthetic sequences with a circular latent confounder and linear noise structure.

A two-dimensional latent point moves smoothly around a circle. Each observed
dimension is a random mixture of linear, quadratic, cubic and tanh functions
of random projections of the latent point, rescaled to a common standard deviation (``signal_std``). The
noise is ``A @ S`` with ``A`` unit lower-triangular and ``S`` independent
super-Gaussian sources obtained by power-transforming Gaussian samples.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.special import gamma as gamma_fn

__all__ = ["SimSpec", "SyntheticDataset", "generate", "evaluate_run"]

FUNCTION_FAMILIES = ("linear", "square", "cube", "tanh")


@dataclass(frozen=True)
class SimSpec:
    N: int = 400
    D: int = 8
    d: int = 2
    cycles: float = 2.0
    exponent_range: tuple = (1.5, 2.0)
    variance_range: tuple = (0.2, 1.0)
    mixing_range: tuple = (-1.0, 1.0)
    similar_rows: int = 3
    similar_jitter: float = 0.05
    family_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    terms_per_function: int = 3
    signal_std: float = 1.75
    angle_jitter: float = 0.05
    radius_jitter: float = 0.02
    jitter_smoothing: float = 5.0

    def __post_init__(self):
        if self.N < 10:
            raise ValueError("N must be >= 10")
        if not 1 <= self.d < self.D:
            raise ValueError("need 1 <= d < D")
        lo, hi = self.exponent_range
        if not 1.0 <= lo <= hi <= 3.0:
            raise ValueError("exponent range must lie within [1, 3]")
        lo, hi = self.variance_range
        if not 0 < lo <= hi:
            raise ValueError("variance range must be positive")
        if not self.signal_std > 0:
            raise ValueError("signal_std must be > 0")
        if self.similar_rows < 0 or self.similar_rows > self.D - 1:
            raise ValueError("similar_rows must be in [0, D-1]")
        if len(self.family_weights) != len(FUNCTION_FAMILIES) or min(self.family_weights) < 0:
            raise ValueError("family_weights needs one non-negative weight per family")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["exponent_range"] = list(self.exponent_range)
        out["variance_range"] = list(self.variance_range)
        out["mixing_range"] = list(self.mixing_range)
        out["family_weights"] = list(self.family_weights)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "SimSpec":
        kw = dict(raw)
        for key in ("exponent_range", "variance_range", "mixing_range", "family_weights"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class SyntheticDataset:
    Y: np.ndarray
    X_true: np.ndarray
    G_true: np.ndarray
    A: np.ndarray
    S: np.ndarray
    B_implied: np.ndarray
    spec: SimSpec = field(default_factory=SimSpec)
    seed: int = 0
    exponents: np.ndarray | None = None


def _trajectory(spec: SimSpec, rng) -> np.ndarray:
    t = np.arange(spec.N)
    theta = 2 * np.pi * spec.cycles * t / spec.N + rng.uniform(0, 2 * np.pi)
    def smooth_noise(scale):
        z = gaussian_filter1d(rng.standard_normal(spec.N), spec.jitter_smoothing, mode="wrap")
        return scale * z / max(np.std(z), 1e-12)
    theta = theta + smooth_noise(spec.angle_jitter)
    radius = 1.0 + smooth_noise(spec.radius_jitter)
    X = np.vstack([radius * np.cos(theta), radius * np.sin(theta)])
    if spec.d > 2:
        X = np.vstack([X, np.zeros((spec.d - 2, spec.N))])
    return X[:spec.d] if spec.d < 2 else X


_FUNCS = {
    "linear": lambda u: u,
    "square": lambda u: u ** 2,
    "cube": lambda u: u ** 3,
    "tanh": lambda u: np.tanh(2.0 * u),
}


def _smooth_functions(X, spec: SimSpec, rng) -> np.ndarray:
    d, N = X.shape
    probs = np.asarray(spec.family_weights, dtype=float)
    probs = probs / probs.sum()
    G = np.empty((spec.D, N))
    for i in range(spec.D):
        g = np.zeros(N)
        while np.std(g) < 1e-8:
            fams = rng.choice(len(FUNCTION_FAMILIES), size=spec.terms_per_function, p=probs)
            for f in fams:
                w = rng.standard_normal(d)
                w /= np.linalg.norm(w)
                g = g + rng.uniform(0.5, 1.5) * rng.choice([-1, 1]) * _FUNCS[FUNCTION_FAMILIES[f]](w @ X)
        G[i] = spec.signal_std * g / np.std(g)
    return G


def _power_moment(q):
    # E|z|^{2q} for standard normal z
    return 2.0 ** q * gamma_fn(q + 0.5) / np.sqrt(np.pi)


def _sources(spec: SimSpec, rng):
    q = rng.uniform(*spec.exponent_range, size=spec.D)
    var = rng.uniform(*spec.variance_range, size=spec.D)
    Z = rng.standard_normal((spec.D, spec.N))
    S = np.sign(Z) * np.abs(Z) ** q[:, None]
    S *= np.sqrt(var / _power_moment(q))[:, None]
    return S, q


def _mixing(spec: SimSpec, rng) -> np.ndarray:
    D = spec.D
    A = np.tril(rng.uniform(*spec.mixing_range, size=(D, D)), -1)
    if spec.similar_rows:
        base = rng.uniform(*spec.mixing_range, size=D)
        rows = range(1, 1 + spec.similar_rows)
        for i in rows:
            A[i, :i] = np.clip(base[:i] + rng.uniform(-spec.similar_jitter, spec.similar_jitter, size=i),
                               *spec.mixing_range)
    A[np.diag_indices(D)] = 1.0
    return A


def generate(spec: SimSpec | None = None, seed: int = 0) -> SyntheticDataset:
    spec = spec or SimSpec()
    rng = np.random.default_rng(seed)
    X = _trajectory(spec, rng)
    G = _smooth_functions(X, spec, rng)
    S, q = _sources(spec, rng)
    A = _mixing(spec, rng)
    Y = G + A @ S
    B = np.eye(spec.D) - np.linalg.inv(A)
    B[np.diag_indices(spec.D)] = 0.0
    B = np.tril(B, -1)
    return SyntheticDataset(Y=Y, X_true=X, G_true=G, A=A, S=S, B_implied=B,
                            spec=spec, seed=seed, exponents=q)


def evaluate_run(dataset: SyntheticDataset, G_hat=None, E_hat=None, W_hat=None,
                 B_hat=None, ica_seed: int = 0) -> dict:
    """Metrics of a fitted run against the generator's ground truth.

    ``W_hat`` defaults to the ICA unmixing of ``E_hat``. Edge metrics are
    only reported when ``B_hat`` is given.
    """
    from .causal import amari_index, edge_metrics, fastica, mse_g

    out = {}
    if G_hat is not None:
        out["mse_g"] = mse_g(G_hat, dataset.G_true)
    if W_hat is None and E_hat is not None:
        W_hat = fastica(E_hat, seed=ica_seed, strict=False).W
    if W_hat is not None:
        W_hat = np.asarray(W_hat, dtype=float)
        if W_hat.shape != dataset.A.shape:
            raise ValueError(f"unmixing shape {W_hat.shape} does not match mixing shape {dataset.A.shape}")
        out["amari"] = amari_index(W_hat @ dataset.A)
    if B_hat is not None:
        out.update(edge_metrics(B_hat, dataset.B_implied))
    return out

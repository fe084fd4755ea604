"""Linear causal structure of estimated noise terms.

Residuals that pass a Gaussianity test are summarized by the Gaussian Markov
network implied by their precision matrix. Non-Gaussian residuals go through
ICA followed by the LiNGAM permutation/normalization steps, which give an
acyclic influence matrix ``B`` with ``e = B e + disturbance``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, NonLingamError

__all__ = [
    "GaussianityResult",
    "MixingEstimate",
    "InfluenceMatrix",
    "MarkovNetwork",
    "CausalReport",
    "gaussianity_test",
    "fastica",
    "lingam_from_unmixing",
    "causal_order",
    "prune_influences",
    "precision_network",
    "amari_index",
    "mse_g",
    "edge_metrics",
    "discover",
]

EXHAUSTIVE_MAX_D = 8


def _residuals(E) -> np.ndarray:
    E = np.asarray(E, dtype=float)
    if E.ndim == 1:
        E = E[None, :]
    if E.ndim != 2:
        raise DomainError(f"residuals must be a (D, N) matrix, got shape {E.shape}")
    if not np.all(np.isfinite(E)):
        raise DomainError("residuals contain non-finite values")
    return E


# -- Gaussianity -------------------------------------------------------------

@dataclass
class GaussianityResult:
    statistics: np.ndarray
    pvalues: np.ndarray
    reject: np.ndarray
    alpha: float

    @property
    def non_gaussian(self) -> bool:
        return bool(np.any(self.reject))


def gaussianity_test(E, alpha: float = 0.05) -> GaussianityResult:
    """Per-dimension Jarque-Bera test with a Bonferroni-corrected level."""
    E = _residuals(E)
    D, N = E.shape
    if N < 20:
        raise DomainError(f"Gaussianity test needs N >= 20 samples, got {N}")
    res = [stats.jarque_bera(row) for row in E]
    stat = np.array([r.statistic for r in res])
    pval = np.array([r.pvalue for r in res])
    return GaussianityResult(statistics=stat, pvalues=pval, reject=pval < alpha / D, alpha=alpha)


# -- ICA ---------------------------------------------------------------------

@dataclass
class MixingEstimate:
    W: np.ndarray
    sources: np.ndarray
    iterations: int
    restarts: int
    converged: bool = True


def _sym_decorrelate(W):
    s, u = np.linalg.eigh(W @ W.T)
    return (u / np.sqrt(s)) @ u.T @ W


def fastica(E, seed: int = 0, max_iter: int = 500, tol: float = 1e-7,
            max_restarts: int = 5, strict: bool = True) -> MixingEstimate:
    """Symmetric fixed-point ICA with the tanh contrast.

    Returns the unmixing ``W`` (acting on the uncentered input) and the
    recovered sources ``W @ E``. The input must be Gaussian-free for the
    result to mean anything; callers gate on :func:`gaussianity_test`.

    If no restart converges, ``LinAlgError`` is raised, or with
    ``strict=False`` the last iterate is returned with ``converged=False``.
    """
    E = _residuals(E)
    D, N = E.shape
    Ec = E - E.mean(axis=1, keepdims=True)
    C = Ec @ Ec.T / N
    evals, U = np.linalg.eigh(C)
    if evals.min() <= evals.max() * 1e-12:
        raise DomainError("residual covariance is rank deficient; ICA needs full rank")
    V = (U / np.sqrt(evals)).T
    Z = V @ Ec
    rng = np.random.default_rng(seed)
    for restart in range(max_restarts + 1):
        W = _sym_decorrelate(rng.standard_normal((D, D)))
        for it in range(1, max_iter + 1):
            G = np.tanh(W @ Z)
            W_new = G @ Z.T / N - np.mean(1.0 - G ** 2, axis=1)[:, None] * W
            W_new = _sym_decorrelate(W_new)
            lim = np.max(np.abs(np.abs(np.sum(W_new * W, axis=1)) - 1.0))
            W = W_new
            if lim < tol:
                Wfull = W @ V
                return MixingEstimate(W=Wfull, sources=Wfull @ E, iterations=it, restarts=restart)
    if strict:
        raise np.linalg.LinAlgError(f"FastICA did not converge after {max_restarts} restarts")
    Wfull = W @ V
    return MixingEstimate(W=Wfull, sources=Wfull @ E, iterations=max_iter,
                          restarts=max_restarts, converged=False)


# -- LiNGAM ------------------------------------------------------------------

@dataclass
class InfluenceMatrix:
    """Influence matrix with zero diagonal and the causal order it respects.

    ``order`` lists variable indices (0-based) from root to sink, so
    ``B[np.ix_(order, order)]`` is strictly lower-triangular.
    """

    B: np.ndarray
    order: tuple
    threshold: float = 0.0
    upper_mass: float = 0.0


def _row_permutation(W) -> np.ndarray:
    D = W.shape[0]
    absW = np.abs(W)
    with np.errstate(divide="ignore"):
        cost = np.where(absW > 0, 1.0 / np.where(absW > 0, absW, 1.0), np.inf)
    if D <= EXHAUSTIVE_MAX_D:
        perms = np.array(list(itertools.permutations(range(D))))
        totals = cost[perms, np.arange(D)[None, :]].sum(axis=1)
        best = int(np.argmin(totals))
        if not np.isfinite(totals[best]):
            raise NonLingamError("no row permutation gives a nonzero diagonal")
        return perms[best]
    finite = np.where(np.isfinite(cost), cost, 1e300)
    rows, cols = linear_sum_assignment(finite)
    perm = np.empty(D, dtype=int)
    perm[cols] = rows
    if not np.all(np.isfinite(cost[perm, np.arange(D)])):
        raise NonLingamError("no row permutation gives a nonzero diagonal")
    return perm


def causal_order(B) -> tuple[tuple, float]:
    """Order minimizing the squared mass of ``B`` above the diagonal.

    Exhaustive up to eight variables, greedy beyond. Returns the order and
    the remaining upper-triangular mass.
    """
    B = np.asarray(B, dtype=float)
    D = B.shape[0]
    S = B ** 2
    if D <= EXHAUSTIVE_MAX_D:
        perms = np.array(list(itertools.permutations(range(D))))
        iu = np.triu_indices(D, 1)
        masses = S[perms[:, iu[0]], perms[:, iu[1]]].sum(axis=1)
        best = int(np.argmin(masses))
        return tuple(int(i) for i in perms[best]), float(masses[best])
    remaining = list(range(D))
    order = []
    mass = 0.0
    while remaining:
        # the next root is the variable least influenced by the others left
        scores = [S[i, remaining].sum() - S[i, i] for i in remaining]
        k = remaining[int(np.argmin(scores))]
        mass += scores[int(np.argmin(scores))]
        order.append(k)
        remaining.remove(k)
    return tuple(order), float(mass)


def _enforce_order(B, order):
    B = B.copy()
    pos = np.empty(len(order), dtype=int)
    pos[list(order)] = np.arange(len(order))
    B[pos[:, None] <= pos[None, :]] = 0.0
    return B


def lingam_from_unmixing(W) -> InfluenceMatrix:
    """Turn an ICA unmixing matrix into an acyclic influence matrix.

    Rows are permuted to make the diagonal as large as possible, scaled to a
    unit diagonal, ``B = I - W'``, and then a causal order is chosen and the
    entries violating it are zeroed.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DomainError("unmixing matrix must be square")
    D = W.shape[0]
    if np.linalg.matrix_rank(W) < D:
        raise DomainError("unmixing matrix is singular")
    Wp = W[_row_permutation(W)]
    Wp = Wp / np.diag(Wp)[:, None]
    B = np.eye(D) - Wp
    B[np.diag_indices(D)] = 0.0
    order, upper = causal_order(B)
    return InfluenceMatrix(B=_enforce_order(B, order), order=order, upper_mass=upper)


def prune_influences(infl, threshold: float = 0.1, scales=None) -> InfluenceMatrix:
    """Zero influences below ``threshold`` and recompute the order.

    With ``scales`` (per-variable standard deviations), the threshold applies
    to standardized coefficients ``b_ij * scale_j / scale_i``.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    B = np.array(infl.B if isinstance(infl, InfluenceMatrix) else infl, dtype=float)
    D = B.shape[0]
    s = np.ones(D) if scales is None else np.asarray(scales, dtype=float)
    std = B * s[None, :] / s[:, None]
    B[np.abs(std) < threshold] = 0.0
    B[np.diag_indices(D)] = 0.0
    order, upper = causal_order(B)
    return InfluenceMatrix(B=_enforce_order(B, order), order=order,
                           threshold=float(threshold), upper_mass=upper)


# -- Gaussian Markov network --------------------------------------------------

@dataclass
class MarkovNetwork:
    precision: np.ndarray
    partial_correlation: np.ndarray
    edges: list
    threshold: float


def precision_network(E, threshold: float = 0.1) -> MarkovNetwork:
    """Markov network from the precision matrix of unit-variance residuals.

    Edges are ``(i, j, weight, sign)`` with ``i < j``; ``weight`` is the
    partial correlation.
    """
    E = _residuals(E)
    D = E.shape[0]
    sd = E.std(axis=1)
    sd = np.where(sd > 0, sd, 1.0)
    En = (E - E.mean(axis=1, keepdims=True)) / sd[:, None]
    C = np.atleast_2d(np.cov(En, bias=True))
    if np.linalg.cond(C) > 1e12:
        ridge = 1e-6 * np.trace(C) / D
        warnings.warn(f"residual covariance is singular; adding ridge {ridge:.3g}",
                      RuntimeWarning, stacklevel=2)
        C = C + ridge * np.eye(D)
    P = np.linalg.inv(C)
    P = 0.5 * (P + P.T)
    dP = np.sqrt(np.diag(P))
    pc = -P / np.outer(dP, dP)
    pc[np.diag_indices(D)] = 1.0
    edges = [(i, j, float(pc[i, j]), int(np.sign(pc[i, j])))
             for i in range(D) for j in range(i + 1, D) if abs(pc[i, j]) >= threshold]
    return MarkovNetwork(precision=P, partial_correlation=pc, edges=edges, threshold=float(threshold))


# -- Metrics -----------------------------------------------------------------

def amari_index(P) -> float:
    """Normalized Amari index; 0 iff ``P`` is a scaled permutation, at most 1."""
    P = np.abs(np.asarray(P, dtype=float))
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DomainError("Amari index needs a square matrix")
    D = P.shape[0]
    rmax, cmax = P.max(axis=1), P.max(axis=0)
    if np.any(rmax == 0) or np.any(cmax == 0):
        raise DomainError("Amari index undefined with an all-zero row or column")
    if D == 1:
        return 0.0
    # exactly rounded sums make the value independent of row/column order
    rows = math.fsum(math.fsum(r) / m - 1.0 for r, m in zip(P, rmax))
    cols = math.fsum(math.fsum(c) / m - 1.0 for c, m in zip(P.T, cmax))
    return float((rows + cols) / (2 * D * (D - 1)))


def mse_g(G_hat, G_true) -> float:
    """Mean squared error after removing each dimension's mean offset."""
    G_hat = np.asarray(G_hat, dtype=float)
    G_true = np.asarray(G_true, dtype=float)
    if G_hat.shape != G_true.shape:
        raise DomainError(f"shape mismatch: estimate {G_hat.shape} vs truth {G_true.shape}")
    diff = G_hat - G_true
    diff = diff - diff.mean(axis=-1, keepdims=True)
    return float(np.mean(diff ** 2))


def edge_metrics(B_hat, B_true) -> dict:
    """Directed-edge precision, recall and false-positive rate.

    An edge ``j -> i`` exists where ``B[i, j] != 0``. The false-positive
    rate is over ordered pairs that are not true edges.
    """
    B_hat = np.asarray(B_hat, dtype=float)
    B_true = np.asarray(B_true, dtype=float)
    if B_hat.shape != B_true.shape:
        raise DomainError(f"shape mismatch: estimate {B_hat.shape} vs truth {B_true.shape}")
    off = ~np.eye(B_true.shape[0], dtype=bool)
    est = (B_hat != 0) & off
    true = (B_true != 0) & off
    tp = int(np.sum(est & true))
    n_est, n_true = int(est.sum()), int(true.sum())
    n_neg = int(np.sum(off & ~true))
    return {
        "edge_precision": tp / n_est if n_est else 1.0,
        "edge_recall": tp / n_true if n_true else 1.0,
        "edge_false_positive_rate": (n_est - tp) / n_neg if n_neg else 0.0,
    }


# -- Pipeline ----------------------------------------------------------------

@dataclass
class CausalReport:
    branch: str
    residuals: np.ndarray
    gaussianity: GaussianityResult | None = None
    network: MarkovNetwork | None = None
    mixing: MixingEstimate | None = None
    influence: InfluenceMatrix | None = None
    unpruned: InfluenceMatrix | None = None
    diagnostics: dict = field(default_factory=dict)


def discover(E, alpha: float = 0.05, threshold: float = 0.1,
             edge_threshold: float = 0.1, seed: int = 0) -> CausalReport:
    """Gaussianity gate, then LiNGAM or the precision-matrix network."""
    E = _residuals(E)
    D = E.shape[0]
    if D == 1:
        return CausalReport(
            branch="trivial", residuals=E,
            network=MarkovNetwork(precision=np.atleast_2d(1.0 / E.var()),
                                  partial_correlation=np.ones((1, 1)), edges=[],
                                  threshold=edge_threshold),
            influence=InfluenceMatrix(B=np.zeros((1, 1)), order=(0,), threshold=threshold),
            diagnostics={"note": "single variable, no pairs"},
        )
    gt = gaussianity_test(E, alpha)
    diag = {"pvalues": gt.pvalues.tolist(), "bonferroni_level": alpha / D}
    if not gt.non_gaussian:
        net = precision_network(E, edge_threshold)
        diag["n_edges"] = len(net.edges)
        return CausalReport(branch="gaussian", residuals=E, gaussianity=gt,
                            network=net, diagnostics=diag)
    try:
        mix = fastica(E, seed=seed)
        raw = lingam_from_unmixing(mix.W)
    except (NonLingamError, np.linalg.LinAlgError, DomainError) as exc:
        raise type(exc)(f"non-Gaussian branch failed: {exc}") from exc
    pruned = prune_influences(raw, threshold, scales=E.std(axis=1))
    total = float(np.sum(raw.B ** 2)) + raw.upper_mass
    diag.update({
        "ica_iterations": mix.iterations,
        "ica_restarts": mix.restarts,
        "upper_triangular_mass": raw.upper_mass,
        "acyclicity_ratio": raw.upper_mass / total if total > 0 else 0.0,
        "n_edges": int(np.count_nonzero(pruned.B)),
    })
    return CausalReport(branch="lingam", residuals=E, gaussianity=gt, mixing=mix,
                        influence=pruned, unpruned=raw, diagnostics=diag)

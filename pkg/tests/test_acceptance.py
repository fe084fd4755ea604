"""Acceptance criteria. Each test prints one PASS/FAIL line per criterion.

The lines are also collected and repeated in the terminal summary under
"acceptance criteria".
"""
import json
import os
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from igplvm import FitConfig, SimSpec, evaluate_run, fit_model, generate, reconstruct
from igplvm.approach1 import closed_form_Ltilde, loglik_a1, profile_loglik_a1
from igplvm.approach2 import (loglik_a2, loglik_a2_dense, posterior_mean_a2,
                              posterior_mean_a2_dense)
from igplvm.causal import amari_index, discover, edge_metrics, precision_network
from igplvm.cli import main
from igplvm.data import center
from igplvm.dynamics import DynamicsParams, dyn_log_prior
from igplvm.kernels import ObservationKernelParams, rbf_plus_unit_noise, rbf_unit_amplitude, sq_dists

import conftest
from conftest import fd_grad, lingam_data, random_lower


def report(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))) if a.size else 0.0


def _rel_scaled(a, b):
    """Relative error with the denominator floored at the largest entry's scale."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# 1 -------------------------------------------------------------------------------

def test_criterion_1_invariance_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for k in range(20):
        D, N = (3, 5)[k % 2], 40
        Y = center(rng.standard_normal((D, N)) * rng.uniform(0.5, 3.0, (D, 1))).values
        X = rng.standard_normal((2, N))
        r, g = rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)
        base = profile_loglik_a1(Y, X, r, g)
        for _ in range(20):
            T = rng.standard_normal((D, D))
            lhs = profile_loglik_a1(T @ Y, X, r, g)
            rhs = base - N * np.linalg.slogdet(T)[1]
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-8 and elapsed < 60,
           f"400 pairs, worst relative error {worst:.2e}, {elapsed:.1f}s")


# 2 -------------------------------------------------------------------------------

def _a1_point(rng):
    D, d, N = 3, 2, 10
    Y = center(rng.standard_normal((D, N))).values
    return Y, rng.standard_normal((d, N)), random_lower(rng, D), rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0)


def _a1_errors(Y, X, Lt, r, g):
    _, gr = loglik_a1(Y, X, Lt, r, g, grad=True)
    h = 1e-6
    num = {
        "X": fd_grad(lambda Z: loglik_a1(Y, Z, Lt, r, g), X),
        "Ltilde": np.tril(fd_grad(lambda M: loglik_a1(Y, X, np.tril(M), r, g), Lt)),
        "log_r": (loglik_a1(Y, X, Lt, r * np.exp(h), g) - loglik_a1(Y, X, Lt, r * np.exp(-h), g)) / (2 * h),
        "log_gamma": (loglik_a1(Y, X, Lt, r, g * np.exp(h)) - loglik_a1(Y, X, Lt, r, g * np.exp(-h))) / (2 * h),
    }
    return max(_rel_scaled(gr[k], num[k]) for k in num)


def _a2_errors(Y, X, LR, Rt, g):
    _, gr = loglik_a2(Y, X, LR, Rt, g, grad=True)
    h = 1e-6
    num = {
        "X": fd_grad(lambda Z: loglik_a2(Y, Z, LR, Rt, g), X),
        "L_R": np.tril(fd_grad(lambda M: loglik_a2(Y, X, np.tril(M), Rt, g), LR)),
        "Rtilde": np.tril(fd_grad(lambda M: loglik_a2(Y, X, LR, np.tril(M), g), Rt)),
        "log_gamma": (loglik_a2(Y, X, LR, Rt, g * np.exp(h)) - loglik_a2(Y, X, LR, Rt, g * np.exp(-h))) / (2 * h),
    }
    return max(_rel_scaled(gr[k], num[k]) for k in num)


def _dyn_errors(X, p):
    lp = dyn_log_prior(X, p)
    num_x = fd_grad(lambda Z: dyn_log_prior(Z, p, grad=False).value, X)
    num_p = fd_grad(lambda v: dyn_log_prior(X, DynamicsParams.from_log_vector(v), grad=False).value,
                    p.log_vector())
    return max(_rel_scaled(lp.dX, num_x), _rel_scaled(lp.dlog_params, num_p))


def test_criterion_2_gradient_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    e1 = max(_a1_errors(*_a1_point(rng)) for _ in range(50))
    e2 = 0.0
    for _ in range(50):
        D, N = 3, 10
        Y = center(rng.standard_normal((D, N))).values
        e2 = max(e2, _a2_errors(Y, rng.standard_normal((2, N)), random_lower(rng, D),
                                random_lower(rng, D), rng.uniform(0.3, 2.0)))
    e3 = 0.0
    for _ in range(50):
        p = DynamicsParams(a=rng.uniform(0.5, 2.0), b=rng.uniform(0.3, 2.0), w=rng.uniform(2.0, 50.0))
        e3 = max(e3, _dyn_errors(rng.standard_normal((2, 10)), p))
    elapsed = time.perf_counter() - t0
    report(2, e1 <= 1e-5 and e2 <= 1e-4 and e3 <= 1e-4 and elapsed < 120,
           f"worst rel. error: approach I {e1:.1e}, approach II {e2:.1e}, dynamics {e3:.1e}; "
           f"{elapsed:.1f}s")


# 3 -------------------------------------------------------------------------------

def test_criterion_3_closed_form_vs_numeric():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(10):
        D, N = 1 + k % 4, 25
        Y = center(rng.standard_normal((D, N)) @ np.diag(rng.uniform(0.5, 2.0, N))).values
        X = rng.standard_normal((2, N))
        r, g = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
        K = rbf_plus_unit_noise(X, ObservationKernelParams(r, g))
        il = np.tril_indices(D)
        dg = np.diag_indices(D)

        def unpack(v):
            L = np.zeros((D, D))
            L[il] = v
            L[dg] = np.exp(L[dg])
            return L

        def negl(v):
            return -loglik_a1(Y, X, unpack(v), r, g)

        v0 = np.zeros(len(il[0]))
        res = minimize(negl, v0, method="BFGS", options={"gtol": 1e-11, "maxiter": 10000})
        worst = max(worst, float(np.max(np.abs(unpack(res.x) - closed_form_Ltilde(Y, K)))))
    elapsed = time.perf_counter() - t0
    report(3, worst <= 1e-4 and elapsed < 60, f"10 instances, worst entry gap {worst:.1e}, {elapsed:.1f}s")


# 4 -------------------------------------------------------------------------------

def _dense_gradients(Y, X, LR, Rt, g):
    """Gradients of the explicit DN x DN likelihood, written out independently."""
    D, N = Y.shape
    Kg = rbf_unit_amplitude(X, g)
    Sigma = LR @ LR.T
    K = np.kron(np.eye(D), Kg) + np.kron(Sigma, np.eye(N))
    Kinv = np.linalg.inv(K)
    alpha = Kinv @ (Rt @ Y).ravel()
    dK = 0.5 * (np.outer(alpha, alpha) - Kinv)
    blocks = dK.reshape(D, N, D, N)
    dKg = np.einsum("inim->nm", blocks)
    dSigma = np.einsum("injn->ij", blocks)
    diff = X[:, :, None] - X[:, None, :]
    dX = -2.0 * g * np.einsum("nm,anm->an", dKg * Kg, diff)
    return {
        "X": dX,
        "log_gamma": float(np.sum(dKg * Kg * (-0.5 * g * sq_dists(X)))),
        "L_R": np.tril((dSigma + dSigma.T) @ LR),
        "Rtilde": np.tril(-alpha.reshape(D, N) @ Y.T + N * np.linalg.inv(Rt).T),
    }


def test_criterion_4_structured_equals_dense():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = {"loglik": 0.0, "grad": 0.0, "posterior": 0.0}
    for D, N in [(2, 10), (3, 20), (4, 25)]:
        Y = center(rng.standard_normal((D, N))).values
        X = rng.standard_normal((2, N))
        LR, Rt, g = random_lower(rng, D), random_lower(rng, D), float(rng.uniform(0.3, 2.0))
        v, gr = loglik_a2(Y, X, LR, Rt, g, grad=True)
        worst["loglik"] = max(worst["loglik"], _rel(v, loglik_a2_dense(Y, X, LR, Rt, g)))
        dense = _dense_gradients(Y, X, LR, Rt, g)
        worst["grad"] = max(worst["grad"], max(_rel_scaled(gr[k], dense[k]) for k in dense))
        worst["posterior"] = max(worst["posterior"], _rel_scaled(posterior_mean_a2(Y, X, LR, Rt, g),
                                                                 posterior_mean_a2_dense(Y, X, LR, Rt, g)))
    elapsed = time.perf_counter() - t0
    report(4, max(worst.values()) <= 1e-8 and elapsed < 60,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s")


# 5 -------------------------------------------------------------------------------

def _table_row(variant, N, seeds):
    mse, perr = [], []
    for s in seeds:
        ds = generate(SimSpec(N=N), seed=s)
        m = fit_model(ds.Y, variant, 2, FitConfig(max_outer=100))
        G, E = reconstruct(m, ds.Y)
        r = evaluate_run(ds, G_hat=G, E_hat=E)
        mse.append(r["mse_g"])
        perr.append(r["amari"])
    return np.array(mse), np.array(perr)


def test_criterion_5_table_reproduction():
    t0 = time.perf_counter()
    seeds = (0, 1, 2)
    g_mse, g_perr = _table_row("gpdm", 200, seeds)
    a_mse, a_perr = _table_row("igpdm1", 200, seeds)

    ds = generate(SimSpec(N=100, D=4), seed=0)
    m2 = fit_model(ds.Y, "igpdm2", 2)
    a2_ok = np.isfinite(m2.objective) and m2.history[-1] > m2.history[0]
    elapsed = time.perf_counter() - t0

    checks = {
        "mean MSE A1 < GPDM": a_mse.mean() < g_mse.mean(),
        "MSE A1 <= 0.1": a_mse.mean() <= 0.1,
        "P_err A1 <= 0.25": a_perr.mean() <= 0.25,
        "P_err gap >= 0.1": g_perr.mean() - a_perr.mean() >= 0.1,
        "A2 stable": bool(a2_ok),
        "runtime <= 15 min": elapsed <= 900,
    }
    failed = [k for k, ok in checks.items() if not ok]
    detail = (f"GPDM MSE {g_mse.mean():.3f} ± {g_mse.std():.3f}, P_err {g_perr.mean():.3f} ± {g_perr.std():.3f}; "
              f"IGPDM-A1 MSE {a_mse.mean():.3f} ± {a_mse.std():.3f}, P_err {a_perr.mean():.3f} ± {a_perr.std():.3f}; "
              f"A2 objective {m2.history[0]:.1f} -> {m2.history[-1]:.1f}; {elapsed:.0f}s"
              + (f"; failed: {', '.join(failed)}" if failed else ""))
    report(5, not failed, detail)


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get("IGPLVM_SLOW"), reason="set IGPLVM_SLOW=1 for the N=400 run")
def test_criterion_5_full_scale():
    seeds = (0, 1, 2)
    g_mse, g_perr = _table_row("gpdm", 400, seeds)
    a_mse, a_perr = _table_row("igpdm1", 400, seeds)
    within = {
        "GPDM MSE": abs(g_mse.mean() - 0.21) <= 2 * 0.02,
        "GPDM P_err": abs(g_perr.mean() - 0.43) <= 2 * 0.06,
        "A1 MSE": abs(a_mse.mean() - 0.028) <= 2 * 0.022,
        "A1 P_err": abs(a_perr.mean() - 0.13) <= 2 * 0.04,
    }
    failed = [k for k, ok in within.items() if not ok]
    report("5 (N=400)", not failed,
           f"GPDM MSE {g_mse.mean():.3f}, P_err {g_perr.mean():.3f}; IGPDM-A1 MSE {a_mse.mean():.3f}, "
           f"P_err {a_perr.mean():.3f}" + (f"; outside 2 std: {', '.join(failed)}" if failed else ""))


# 6 -------------------------------------------------------------------------------

def test_criterion_6_lingam_oracle_and_pipeline():
    t0 = time.perf_counter()
    hits, rmses = 0, []
    for seed in range(5):
        E, B, order = lingam_data(seed)
        rep = discover(E)
        hits += rep.influence.order == order
        rmses.append(float(np.sqrt(np.mean((rep.influence.B - B) ** 2))))
    oracle_time = time.perf_counter() - t0

    recall, fpr = [], []
    for seed in range(3):
        ds = generate(SimSpec(N=400), seed=seed)
        m = fit_model(ds.Y, "igpdm1", 2, FitConfig(max_outer=100))
        _, E = reconstruct(m, ds.Y)
        rep = discover(E)
        em = edge_metrics(rep.influence.B, ds.B_implied)
        recall.append(em["edge_recall"])
        fpr.append(em["edge_false_positive_rate"])
    checks = {
        "order >= 4/5": hits >= 4,
        "RMSE <= 0.1": max(rmses) <= 0.1,
        "oracle < 2 min": oracle_time < 120,
        "recall >= 0.5": np.mean(recall) >= 0.5,
        "FPR <= 0.2": np.mean(fpr) <= 0.2,
    }
    failed = [k for k, ok in checks.items() if not ok]
    report(6, not failed,
           f"order {hits}/5, max RMSE {max(rmses):.3f}, oracle {oracle_time:.1f}s; pipeline recall "
           f"{np.mean(recall):.2f}, FPR {np.mean(fpr):.2f}" + (f"; failed: {', '.join(failed)}" if failed else ""))


# 7 -------------------------------------------------------------------------------

def test_criterion_7_causal_branches():
    rng = np.random.default_rng(7)
    N = 5000
    e1 = rng.standard_normal(N)
    e2 = 0.8 * e1 + rng.standard_normal(N)
    e3 = 0.8 * e2 + rng.standard_normal(N)
    E = np.vstack([e1, e2, e3])
    rep = discover(E, edge_threshold=0.05)
    pairs = {(i, j) for i, j, _, _ in rep.network.edges} if rep.network else set()
    direct = {(i, j) for i, j, _, _ in precision_network(E, 0.05).edges}
    ok = rep.branch == "gaussian" and pairs == direct == {(0, 1), (1, 2)}
    report(7, ok, f"branch {rep.branch}, edges {sorted(pairs)}")


# 8 -------------------------------------------------------------------------------

def test_criterion_8_amari_axioms():
    rng = np.random.default_rng(8)
    P = np.eye(4)[[3, 0, 2, 1]] @ np.diag([2.0, -3.0, 0.5, 7.0])
    zero = amari_index(P) == 0.0
    one = amari_index(np.ones((2, 2))) == 1.0
    perm = True
    for _ in range(100):
        Q = rng.standard_normal((5, 5))
        P1, P2 = np.eye(5)[rng.permutation(5)], np.eye(5)[rng.permutation(5)]
        perm &= amari_index(P1 @ Q @ P2) == amari_index(Q)
    report(8, zero and one and perm,
           f"scaled permutation -> 0: {zero}, 2x2 ones -> 1: {one}, permutation invariance: {perm}")


# 9 -------------------------------------------------------------------------------

def _pipeline(root):
    sim, run, disc, ev = (root / n for n in ("sim", "run", "disc", "ev"))
    (root / "spec.json").write_text(json.dumps({"N": 80, "D": 4}))
    codes = [
        main(["simulate", "--spec", str(root / "spec.json"), "--seed", "3", "--out", str(sim)]),
        main(["fit", str(sim / "Y.csv"), "--model", "igpdm1", "--iters", "5", "--seed", "3",
              "--out", str(run)]),
        main(["discover", str(run / "model.json"), "--seed", "3", "--out", str(disc)]),
        main(["evaluate", "--truth", str(sim), "--run", str(run), "--seed", "3", "--out", str(ev)]),
    ]
    return codes


def _strip_runtime(obj):
    if isinstance(obj, dict):
        return {k: _strip_runtime(v) for k, v in obj.items()
                if k not in ("runtime_seconds", "data", "out", "truth", "run")}
    if isinstance(obj, list):
        return [_strip_runtime(v) for v in obj]
    return obj


def _snapshot(root):
    snap = {}
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = str(f.relative_to(root))
        if f.suffix == ".json":
            snap[rel] = _strip_runtime(json.loads(f.read_text()))
        elif f.name == "table.csv":
            snap[rel] = [line.rsplit(",", 1)[0] for line in f.read_text().splitlines()]
        else:
            snap[rel] = f.read_bytes()
    return snap


def test_criterion_9_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    codes = _pipeline(a) + _pipeline(b)
    sa, sb = _snapshot(a), _snapshot(b)
    differ = sorted(k for k in sa if sa[k] != sb.get(k))
    ok = all(c == 0 for c in codes) and sa.keys() == sb.keys() and not differ
    report(9, ok, f"{len(sa)} files compared, exit codes {codes[:4]}"
           + (f", differing: {', '.join(differ)}" if differ else ""))

"""Batch command-line interface: ``simulate``, ``fit``, ``discover``, ``evaluate``.

CSV files hold one time point per row and one dimension per column. Exit
codes: 0 success, 1 usage error, 2 data or file error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .causal import amari_index, discover, edge_metrics, fastica, mse_g
from .data import FitConfig
from .errors import DomainError, KernelError, NonLingamError
from .models import (VARIANTS, canonical_variant, fit_model, model_from_dict, model_to_dict,
                     noise_factor, reconstruct)
from .simgen import SimSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    model: str = "igplvm1"
    latent_dim: int = 2
    dynamics: bool = False
    iters: int | None = None
    seed: int = 0
    alpha: float = 0.05
    prune_threshold: float = 0.1
    edge_threshold: float = 0.1
    data: str | None = None
    pretransform: list | None = None
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in VARIANTS:
            raise UsageError(f"unknown model {self.model!r}; choose from {', '.join(VARIANTS)}")
        if self.latent_dim < 1:
            raise UsageError("--latent-dim must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec = SimSpec.from_dict(io.read_json(args.spec)) if args.spec else SimSpec()
    out = io.ensure_dir(args.out)
    ds = generate(spec, seed=args.seed)
    io.write_observations(out / "Y.csv", ds.Y, "y")
    io.write_observations(out / "X_true.csv", ds.X_true, "x")
    io.write_observations(out / "G_true.csv", ds.G_true, "g")
    io.write_csv_matrix(out / "A.csv", ds.A)
    io.write_csv_matrix(out / "B_implied.csv", ds.B_implied)
    io.write_json(out / "spec.json", spec.to_dict())
    (out / "seed.txt").write_text(f"{args.seed}\n", encoding="utf-8")
    print(f"wrote simulated bundle (N={spec.N}, D={spec.D}) to {out}")
    return EXIT_OK


# -- fit ---------------------------------------------------------------------

def _load_pretransform(path, D):
    T, _ = io.read_csv_matrix(path)
    if T.shape != (D, D):
        raise DomainError(f"{path}: pretransform must be {D}x{D}, got {T.shape[0]}x{T.shape[1]}")
    sign, logdet = np.linalg.slogdet(T)
    if sign == 0 or not np.isfinite(logdet):
        raise DomainError(f"{path}: pretransform matrix is singular")
    return T


def _invariance_block(Y, T, model, N):
    """Approach I profile likelihood of the fitted latents/kernel on ``Y`` and ``T Y``."""
    from .approach1 import profile_loglik_a1

    if not hasattr(model, "r"):
        return None
    Yo = Y - Y.mean(axis=1, keepdims=True)
    Yt = T @ Yo
    l_t = profile_loglik_a1(Yt, model.X, model.r, model.gamma)
    l_o = profile_loglik_a1(Yo, model.X, model.r, model.gamma)
    shift = -N * float(np.linalg.slogdet(T)[1])
    return {"profile_loglik_transformed": l_t, "profile_loglik_original": l_o,
            "expected_shift": shift, "identity_residual": l_t - (l_o + shift)}


def cmd_fit(args) -> int:
    variant = canonical_variant(args.model, dynamics=args.dynamics)
    Y = io.read_observations(args.data)
    D, N = Y.shape
    if args.latent_dim >= D:
        raise UsageError(
            f"--latent-dim {args.latent_dim} must be smaller than the number of data "
            f"columns D={D}; choose a value in 1..{D - 1}")
    if N <= D:
        raise DomainError(
            f"{args.data}: need more rows (time points) than columns (dimensions); "
            f"got N={N}, D={D}")
    T = None
    if args.pretransform:
        T = _load_pretransform(args.pretransform, D)
        Y_orig, Y = Y, T @ Y
    cfg_run = RunConfig(model=variant, latent_dim=args.latent_dim, dynamics=variant in ("gpdm", "igpdm1", "igpdm2"),
                        iters=args.iters, seed=args.seed, data=str(Path(args.data).resolve()),
                        pretransform=None if T is None else T.tolist(), out=str(args.out))
    out = io.ensure_dir(args.out)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_model(Y, variant, args.latent_dim, FitConfig(max_outer=args.iters))
    runtime = time.perf_counter() - t0
    G, E = reconstruct(model, Y)
    artifact = {
        "format": "igplvm-model/1",
        "version": io.library_version(),
        "model": model_to_dict(model),
        "config": cfg_run.to_dict(),
        "data_checksum": io.data_checksum(Y),
    }
    io.write_json(out / "model.json", artifact)
    io.write_observations(out / "latents.csv", model.X, "x")
    io.write_observations(out / "residuals.csv", E, "e")
    io.write_observations(out / "signal.csv", G, "g")
    io.write_csv_matrix(out / "noise_factor.csv", noise_factor(model))
    report = {
        "variant": variant,
        "loglik": model.loglik,
        "objective": model.objective,
        "iterations": model.sweeps,
        "converged": model.converged,
        "runtime_seconds": runtime,
        "N": N, "D": D,
        "warnings": sorted({str(w.message) for w in caught}),
        "config": cfg_run.to_dict(),
    }
    if T is not None:
        report["pretransform"] = _invariance_block(Y_orig, T, model, N)
    io.write_json(out / "fit_report.json", report)
    print(f"{variant}: loglik {model.loglik:.6g} after {model.sweeps} sweeps "
          f"({'converged' if model.converged else 'not converged'}); outputs in {out}")
    return EXIT_OK


# -- discover ----------------------------------------------------------------

def _residuals_from_artifact(path, data_override):
    art = io.read_json(path)
    try:
        model = model_from_dict(art["model"])
        cfg = art["config"]
    except (KeyError, TypeError, ValueError) as exc:
        raise io.DataFileError(f"{path}: not a model artifact ({exc})") from exc
    data = data_override or cfg.get("data")
    if not data:
        raise io.DataFileError(f"{path}: artifact records no data file; pass --data")
    Y = io.read_observations(data)
    if cfg.get("pretransform") is not None:
        Y = np.asarray(cfg["pretransform"], dtype=float) @ Y
    if io.data_checksum(Y) != art.get("data_checksum"):
        raise io.DataFileError(f"{data}: data do not match the checksum stored in {path}")
    return reconstruct(model, Y)[1], None


def _dot(report, names):
    lines = []
    if report.branch == "lingam":
        lines.append("digraph causal {")
        edges = [(j, i, report.influence.B[i, j]) for i, j in zip(*np.nonzero(report.influence.B))]
        arrow = "->"
    else:
        lines.append("graph markov {")
        edges = [(i, j, w) for i, j, w, _ in report.network.edges]
        arrow = "--"
    lines += [f'  "{n}";' for n in names]
    lines += [f'  "{names[a]}" {arrow} "{names[b]}" [label="{w:.3f}"];' for a, b, w in edges]
    lines.append("}")
    return "\n".join(lines) + "\n", edges


def cmd_discover(args) -> int:
    src = Path(args.input)
    if src.suffix == ".json":
        E, header = _residuals_from_artifact(src, args.data)
    else:
        M, header = io.read_csv_matrix(src)
        E = M.T.copy()
    D = E.shape[0]
    names = header if header and len(header) == D else [f"e{i + 1}" for i in range(D)]
    rep = discover(E, alpha=args.alpha, threshold=args.prune_threshold,
                   edge_threshold=args.edge_threshold, seed=args.seed)
    out = io.ensure_dir(args.out)
    dot, edges = _dot(rep, names)
    (out / "graph.dot").write_text(dot, encoding="utf-8")
    directed = rep.branch == "lingam"
    io.write_json(out / "graph.json", {
        "directed": directed, "nodes": names,
        "edges": [{"source": names[a], "target": names[b], "weight": float(w)} for a, b, w in edges],
    })
    body = {
        "branch": rep.branch, "alpha": args.alpha, "prune_threshold": args.prune_threshold,
        "edge_threshold": args.edge_threshold, "seed": args.seed, "n_edges": len(edges),
        "pvalues": None if rep.gaussianity is None else rep.gaussianity.pvalues.tolist(),
        "diagnostics": rep.diagnostics,
    }
    if rep.branch == "lingam":
        body["causal_order"] = [names[i] for i in rep.influence.order]
        io.write_csv_matrix(out / "B.csv", rep.influence.B)
    elif rep.branch == "gaussian":
        io.write_csv_matrix(out / "precision.csv", rep.network.precision)
    io.write_json(out / "causal_report.json", body)
    print(f"{rep.branch} branch: {len(edges)} edges; outputs in {out}")
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------

def _fmt(vals):
    vals = [v for v in vals if v is not None]
    if not vals:
        return ""
    return f"{np.mean(vals):.3f} ± {np.std(vals):.3f}"


METRICS = ("mse_g", "amari", "edge_precision", "edge_recall", "runtime_seconds")


def _evaluate_pair(truth: Path, run: Path, seed: int, plot: Path, k: int) -> dict:
    G_true = io.read_observations(truth / "G_true.csv")
    A, _ = io.read_csv_matrix(truth / "A.csv")
    B_true, _ = io.read_csv_matrix(truth / "B_implied.csv")
    G_hat = io.read_observations(run / "signal.csv")
    E_hat = io.read_observations(run / "residuals.csv")
    if G_hat.shape != G_true.shape:
        raise DomainError(f"shape mismatch: {run / 'signal.csv'} is {G_hat.T.shape} "
                          f"but {truth / 'G_true.csv'} is {G_true.T.shape}")
    if E_hat.shape[0] != A.shape[0]:
        raise DomainError(f"shape mismatch: {run / 'residuals.csv'} has {E_hat.shape[0]} columns "
                          f"but {truth / 'A.csv'} is {A.shape[0]}x{A.shape[1]}")
    rec = {"truth": str(truth), "run": str(run), "mse_g": mse_g(G_hat, G_true)}
    W = fastica(E_hat, seed=seed, strict=False).W
    rec["amari"] = amari_index(W @ A)
    rec["edge_precision"] = rec["edge_recall"] = None
    if (run / "B.csv").is_file():
        B_hat, _ = io.read_csv_matrix(run / "B.csv")
        if B_hat.shape != B_true.shape:
            raise DomainError(f"shape mismatch: {run / 'B.csv'} is {B_hat.shape} "
                              f"but {truth / 'B_implied.csv'} is {B_true.shape}")
        rec.update(edge_metrics(B_hat, B_true))
    report = run / "fit_report.json"
    info = io.read_json(report) if report.is_file() else {}
    rec["runtime_seconds"] = info.get("runtime_seconds")
    rec["model"] = info.get("variant", "model")

    Y = io.read_observations(truth / "Y.csv")
    E_true = Y - G_true
    io.write_csv_matrix(plot / f"precision_true_{k}.csv", np.linalg.inv(np.cov(E_true, bias=True)))
    io.write_csv_matrix(plot / f"precision_est_{k}.csv", np.linalg.inv(np.cov(E_hat, bias=True)))
    if (run / "latents.csv").is_file() and (truth / "X_true.csv").is_file():
        X_hat, _ = io.read_csv_matrix(run / "latents.csv")
        X_true, _ = io.read_csv_matrix(truth / "X_true.csv")
        cols = [f"x_true{i + 1}" for i in range(X_true.shape[1])] + \
               [f"x_hat{i + 1}" for i in range(X_hat.shape[1])]
        io.write_csv_matrix(plot / f"latents_{k}.csv", np.hstack([X_true, X_hat]), header=cols)
    return rec


def cmd_evaluate(args) -> int:
    if len(args.truth) != len(args.run):
        raise UsageError(f"--truth given {len(args.truth)} times but --run {len(args.run)} times; "
                         "pass one truth bundle per run directory")
    out = io.ensure_dir(args.out)
    plot = io.ensure_dir(out / "plotdata")
    runs = [_evaluate_pair(Path(t), Path(r), args.seed, plot, k)
            for k, (t, r) in enumerate(zip(args.truth, args.run))]
    summary = {}
    for m in METRICS:
        vals = [r[m] for r in runs if r.get(m) is not None]
        summary[m] = float(np.mean(vals)) if vals else None
        summary.setdefault("std", {})[m] = float(np.std(vals)) if vals else None
    summary["n_runs"] = len(runs)
    summary["runs"] = runs
    io.write_json(out / "metrics.json", summary)

    groups = {}
    for r in runs:
        groups.setdefault(r["model"], []).append(r)
    header = ["model", "MSE(g)", "P_err", "edge_precision", "edge_recall", "runtime_seconds"]
    rows = [[name] + [_fmt([r[m] for r in rs]) for m in METRICS] for name, rs in groups.items()]
    with open(out / "table.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    for row in rows:
        print(f"{row[0]}: MSE(g) {row[1]}, P_err {row[2]}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="igplvm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset bundle")
    s.add_argument("--spec", help="JSON file with generator settings (defaults if omitted)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a latent variable model to a data CSV")
    f.add_argument("data")
    f.add_argument("--model", default="igplvm1", choices=VARIANTS)
    f.add_argument("--latent-dim", type=int, default=2)
    f.add_argument("--dynamics", action="store_true", help="add the autoregressive latent prior")
    f.add_argument("--iters", type=int, default=None, help="maximum outer sweeps")
    f.add_argument("--seed", type=int, default=0, help="recorded; fitting is deterministic")
    f.add_argument("--pretransform", help="D x D CSV matrix T; the fit uses T @ Y")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("discover", help="causal or Markov structure of residuals")
    d.add_argument("input", help="residuals CSV or model.json artifact")
    d.add_argument("--data", help="data CSV for a model artifact (defaults to the recorded path)")
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--prune-threshold", type=float, default=0.1)
    d.add_argument("--edge-threshold", type=float, default=0.1)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("evaluate", help="score run outputs against a simulated truth bundle")
    e.add_argument("--truth", action="append", required=True)
    e.add_argument("--run", action="append", required=True)
    e.add_argument("--seed", type=int, default=0, help="ICA seed for the Amari index")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "iters", None) is not None and args.iters < 1:
        parser.error("--iters must be >= 1")
    if getattr(args, "latent_dim", 1) < 1:
        parser.error("--latent-dim must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"igplvm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KernelError, NonLingamError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"igplvm {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ValueError, OSError) as exc:
        print(f"igplvm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

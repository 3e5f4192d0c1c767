"""Command-line front end.

Every subcommand prints one JSON report (sorted keys, floats with 17
significant digits) on stdout and a short summary on stderr.  Exit codes:
0 when the report passes, 1 when a check fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import fullspace, pipeline, search, subspaces
from .linalg import unitarity_error
from .errors import CapExceededError, DetwalkError, PreconditionError, PromiseViolation, SolverError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
BETA_TARGET_PI = 1.29


class UsageError(Exception):
    pass


# --------------------------------------------------------------- formatting


def _fmt(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{_fmt(k)}: {_fmt(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, set, frozenset, np.ndarray)):
        seq = sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
        return "[" + ", ".join(_fmt(v) for v in seq) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(report: dict) -> str:
    """Deterministic JSON text for a report."""
    return _fmt(report)


def _report(command, config, passed, metrics, artifacts=None) -> dict:
    out = {"command": command, "config": config, "pass": bool(passed), "metrics": metrics}
    if artifacts is not None:
        out["artifacts"] = artifacts
    return out


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",) and v is not None}


def _threads() -> int:
    raw = os.environ.get("DETWALK_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"DETWALK_THREADS must be an integer, got {raw!r}") from None


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing required options: " + ", ".join(missing))


# ---------------------------------------------------------- verify-subspace


def cmd_verify_subspace(args):
    if args.layer == "vertex5":
        _need(args, "N", "r")
        p = subspaces.JohnsonParams(args.N, args.r)
        basis = fullspace.enumerate_vertex_basis(p, K=tuple(args.K) if args.K else (0, 1), cap=args.cap)
        full = fullspace.full_vertex_step(basis, args.theta1, args.theta2)
        w = subspaces.build_vertexwalk_5d(p)
        reduced = subspaces.vertexwalk_step(w, args.theta1, args.theta2)
    elif args.layer == "layer1":
        _need(args, "n", "r1")
        w = subspaces.build_layer1_10d(args.n, args.r1)
        basis = fullspace.enumerate_edge_basis(args.n, args.r1, T=tuple(args.T) if args.T else (0, 1, 2), cap=args.cap)
        full = fullspace.full_edge_step(basis)
        reduced = subspaces.edgewalk_step(w)
    else:
        _need(args, "r1", "r2", "m")
        w = subspaces.build_layer4_9d(args.r1, args.r2, args.m)
        basis = fullspace.enumerate_product_basis(args.r1, args.r2, args.m, cap=args.cap)
        full = fullspace.full_product_step(basis)
        reduced = subspaces.layer4_step(w)
    P = fullspace.class_projector(basis)
    rep = fullspace.verify_reduction(full, P, reduced, args.tol)
    psi_err = fullspace.initial_state_error(P, w.psi0)
    metrics = {
        "maxdev": rep.maxdev,
        "leakage": rep.leakage,
        "psi0_error": psi_err,
        "full_dim": basis.dim,
        "reduced_dim": w.dim,
        "full_unitarity_error": unitarity_error(full),
    }
    passed = rep.passed and psi_err <= args.tol
    print(f"verify-subspace {args.layer}: dim {basis.dim} -> {w.dim}, maxdev {rep.maxdev:.3e}, "
          f"leakage {rep.leakage:.3e}: {'PASS' if passed else 'FAIL'}", file=sys.stderr)
    return _report("verify-subspace", _config(args), passed, metrics)


# -------------------------------------------------------------------- solve


def _beta_arg(args):
    if args.beta is not None and args.beta_pi is not None:
        raise UsageError("give --beta or --beta-pi, not both")
    if args.beta_pi is not None:
        return args.beta_pi * math.pi
    return args.beta


def cmd_solve(args):
    cfg = _config(args)
    try:
        if args.scheme == "long":
            _need(args, "lam")
            plan = search.long_params(args.lam, args.k)
            psi = np.array([math.sqrt(args.lam), math.sqrt(1 - args.lam)])
            fid = search.fidelity(search.run_search_state(psi, 0, plan), 0)
            metrics = {"plan": plan.as_dict(), "fidelity": fid, "k_opt": search.k_opt(args.lam)}
            passed = fid >= 1 - args.tol
        elif args.scheme == "fixed-beta":
            _need(args, "lam")
            beta = _beta_arg(args)
            if beta is None:
                raise UsageError("fixed-beta needs --beta or --beta-pi")
            plan = search.fixed_beta_params(args.lam, beta, args.k, tol=args.tol)
            psi = np.array([math.sqrt(args.lam), math.sqrt(1 - args.lam)])
            fid = search.fidelity(search.run_search_state(psi, 0, plan), 0)
            metrics = {"plan": plan.as_dict(), "fidelity": fid}
            if args.lam < 1:
                metrics["k_lower"] = search.k_lower(args.lam, beta)
            passed = fid >= 1 - args.tol
        else:
            _need(args, "N", "r")
            p = subspaces.JohnsonParams(args.N, args.r)
            sol = search.solve_eedp(p, tuple(args.target), tol=args.tol,
                                    windings=tuple(args.windings), t_factor=args.t_factor)
            wrapped = (sol.t * (sol.theta1 + sol.theta2) / 2) % (2 * math.pi)
            rel = abs((wrapped - sol.beta + math.pi) % (2 * math.pi) - math.pi)
            metrics = {
                "solution": sol.as_dict(),
                "beta_relation_error": rel,
                "t_over_sqrt_r": sol.t / math.sqrt(args.r),
                "beta_limit_over_pi": search.beta_limit(tuple(args.windings)),
            }
            passed = sol.residual <= args.tol and rel <= args.tol
    except SolverError as exc:
        print(f"solve {args.scheme}: FAIL ({exc})", file=sys.stderr)
        return _report("solve", cfg, False, {"error": str(exc), "residual": exc.residual})
    print(f"solve {args.scheme}: {'PASS' if passed else 'FAIL'}", file=sys.stderr)
    return _report("solve", cfg, passed, metrics)


# --------------------------------------------------------------------- plan


def _layer_params(args) -> subspaces.LayerParams:
    base = subspaces.LayerParams.from_n(args.n)
    return subspaces.LayerParams(
        args.n,
        args.r1 if args.r1 is not None else base.r1,
        args.r2 if args.r2 is not None else base.r2,
        args.m if args.m is not None else base.m,
    )


def cmd_plan(args):
    p = _layer_params(args)
    try:
        if args.layer == 1:
            pl = pipeline.plan_layer1(p.n, p.r1)
        elif args.layer == 2:
            pl = pipeline.plan_layer2(p.n1, p.r2, args.scheme.replace("-", "_"))
        elif args.layer == 3:
            pl = pipeline.plan_layer3(p.n, p.r1, p.r2)
        else:
            pl = pipeline.plan_layer4(p.r1, p.r2, p.m)
    except SolverError as exc:
        return _report("plan", _config(args), False, {"error": str(exc), "residual": exc.residual})
    metrics = pl.as_dict()
    metrics.update({"n": p.n, "r1": p.r1, "r2": p.r2, "m": p.m})
    passed = pl.fidelity >= 1 - args.tol
    print(f"plan layer {args.layer} at n={p.n}: fidelity {pl.fidelity:.17g}: {'PASS' if passed else 'FAIL'}",
          file=sys.stderr)
    return _report("plan", _config(args), passed, metrics)


# ----------------------------------------------------------------- simulate


def cmd_simulate(args):
    if args.instance:
        inst = pipeline.load_instance(args.instance)
    else:
        _need(args, "n")
        inst = pipeline.generate_instance(args.n, args.M, args.d, plant=args.plant, seed=args.instance_seed)
    if args.save_instance:
        pipeline.save_instance(inst, args.save_instance)
    try:
        trace = pipeline.emulate(inst, seed=args.seed)
    except SolverError as exc:
        return _report("simulate", _config(args), False, {"error": str(exc), "residual": exc.residual})
    metrics = trace.as_dict()
    passed = trace.matches_oracle and min(trace.fidelities.values()) >= 1 - args.tol
    verdict = metrics["verdict"]
    print(f"simulate n={inst.n}: verdict {verdict}, oracle {metrics['oracle']}: {'PASS' if passed else 'FAIL'}",
          file=sys.stderr)
    return _report("simulate", _config(args), passed, metrics)


# ------------------------------------------------------------------- ledger


def cmd_ledger(args):
    led = pipeline.ledger(args.n, mode=args.mode, u4=args.u4, unit=args.unit)
    metrics = led.as_dict()
    passed = led.composition_gap() == 0.0
    print(f"ledger n={args.n} ({args.mode}): c0 = {led.c0:.6g}, c0/n^(9/7) = {led.ratio:.6g}", file=sys.stderr)
    return _report("ledger", _config(args), passed, metrics)


# -------------------------------------------------------------------- sweep


def parse_range(text: str) -> list[int]:
    """``"2..10"`` or ``"2,3,5"`` (both may be mixed) to a list of integers."""
    out = []
    for part in filter(None, (s.strip() for s in text.split(","))):
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _sweep_ledger(js, args, threads):
    def row(j):
        n = j**7
        plan = pipeline.ledger(n, mode="plan", u4=args.u4)
        formula = pipeline.ledger(n, mode="formula", u4=args.u4)
        return {"j": j, "n": n, "c0_plan": plan.c0, "ratio_plan": plan.ratio, "c0_formula": formula.c0,
                "ratio_formula": formula.ratio, "composition_gap": plan.composition_gap(),
                **{k: v for k, v in plan.counts.items()}}

    rows = _map(row, js, threads)
    summary = {
        "plan_band": pipeline.ratio_band([r["ratio_plan"] for r in rows], 4.0),
        "formula_band": pipeline.ratio_band([r["ratio_formula"] for r in rows], 4.0),
        "composition_exact": all(r["composition_gap"] == 0.0 for r in rows),
    }
    passed = summary["plan_band"]["pass"] and summary["composition_exact"]
    return rows, summary, passed


def _sweep_amplitude(layer, js, args, threads):
    rows = pipeline.amplitude_trend(layer, js)
    summary = {"band": pipeline.band_summary([r["ratio"] for r in rows], 2.0)}
    return rows, summary, summary["band"]["pass"]


def _sweep_eedp(Ns, args, threads):
    def row(N):
        r = subspaces.round_half_away(math.sqrt(N))
        try:
            sol = search.solve_eedp(subspaces.JohnsonParams(N, r), (1, 0), windings=tuple(args.windings),
                                    t_factor=args.t_factor)
        except SolverError as exc:
            return {"N": N, "r": r, "error": str(exc)}
        return {"N": N, "r": r, "t": sol.t, "t_over_sqrt_r": sol.t / math.sqrt(r), "theta1": sol.theta1,
                "theta2": sol.theta2, "beta_over_pi": sol.beta / math.pi, "residual": sol.residual}

    rows = _map(row, Ns, threads)
    ok = [r for r in rows if "error" not in r]
    betas = [r["beta_over_pi"] for r in ok]
    summary = {
        "all_solved": len(ok) == len(rows),
        "residual_ok": all(r["residual"] <= 1e-8 for r in ok),
        "t_within_4_sqrt_r": all(r["t_over_sqrt_r"] <= 4 for r in ok),
        "beta_monotone": all(abs(b - BETA_TARGET_PI) >= abs(c - BETA_TARGET_PI) for b, c in zip(betas, betas[1:])),
        "beta_last_within_0.05": bool(ok) and abs(betas[-1] - BETA_TARGET_PI) <= 0.05,
    }
    return rows, summary, all(summary.values())


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _write_csv(rows, path, what):
    cols = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    buf.write(f"# sweep {what}; columns: {', '.join(cols)}\n")
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in r.items()})
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def cmd_sweep(args):
    threads = _threads()
    if args.what == "eedp":
        grid = parse_range(args.N_list)
    else:
        grid = parse_range(args.n_pows)
    if not grid:
        raise UsageError("empty grid")
    if args.what == "ledger":
        if min(grid) < 2:
            raise UsageError("ledger sweeps need j >= 2")
        rows, summary, passed = _sweep_ledger(grid, args, threads)
    elif args.what == "lemma4":
        rows, summary, passed = _sweep_amplitude(4, grid, args, threads)
    elif args.what == "lemma6":
        rows, summary, passed = _sweep_amplitude(1, grid, args, threads)
    else:
        rows, summary, passed = _sweep_eedp(grid, args, threads)
    if args.out:
        _write_csv(rows, args.out, args.what)
    print(f"sweep {args.what}: {len(rows)} rows: {'PASS' if passed else 'FAIL'}", file=sys.stderr)
    return _report("sweep", _config(args), passed, summary, {"rows": rows})


# ------------------------------------------------------------------- parser


def _windings(text: str):
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("windings must look like 8,10") from None
    return (a, b)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="detwalk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify-subspace", help="compare a reduced walk with brute force")
    v.add_argument("--layer", choices=["vertex5", "layer1", "layer4"], required=True)
    v.add_argument("--N", type=int)
    v.add_argument("--r", type=int)
    v.add_argument("--K", type=int, nargs="+")
    v.add_argument("--theta1", type=float, default=1.1)
    v.add_argument("--theta2", type=float, default=0.7)
    v.add_argument("--n", type=int)
    v.add_argument("--r1", type=int)
    v.add_argument("--r2", type=int)
    v.add_argument("--m", type=int)
    v.add_argument("--T", type=int, nargs=3)
    v.add_argument("--cap", type=int, default=fullspace.DEFAULT_CAP)
    v.add_argument("--tol", type=float, default=1e-10)
    v.set_defaults(func=cmd_verify_subspace)

    s = sub.add_parser("solve", help="solve a deterministic search or walk-phase problem")
    s.add_argument("--scheme", choices=["long", "fixed-beta", "eedp"], required=True)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--k", type=int)
    s.add_argument("--beta", type=float, help="radians")
    s.add_argument("--beta-pi", type=float, help="beta in units of pi")
    s.add_argument("--N", type=int)
    s.add_argument("--r", type=int)
    s.add_argument("--target", type=int, nargs=2, default=[1, 0])
    s.add_argument("--windings", type=_windings, default=(8, 10))
    s.add_argument("--t-factor", type=float, default=12.0)
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_solve)

    p = sub.add_parser("plan", help="build one layer's plan")
    p.add_argument("--layer", type=int, choices=[1, 2, 3, 4], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r1", type=int)
    p.add_argument("--r2", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--scheme", choices=["fixed-beta", "long"], default="fixed-beta")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_plan)

    m = sub.add_parser("simulate", help="emulate the four layers on an instance")
    m.add_argument("--instance", help="JSON instance file")
    m.add_argument("--n", type=int)
    m.add_argument("--M", type=int)
    m.add_argument("--d", type=int, default=0)
    m.add_argument("--plant", action=argparse.BooleanOptionalAction, default=True)
    m.add_argument("--instance-seed", type=int, default=0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--save-instance")
    m.add_argument("--tol", type=float, default=1e-9)
    m.set_defaults(func=cmd_simulate)

    g = sub.add_parser("ledger", help="query-cost recurrences")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--mode", choices=["plan", "formula"], default="plan")
    g.add_argument("--u4", type=float, default=4.0)
    g.add_argument("--unit", action="store_true", help="unit setup and update costs")
    g.set_defaults(func=cmd_ledger)

    w = sub.add_parser("sweep", help="trend sweeps over n = j^7 or N")
    w.add_argument("--what", choices=["ledger", "lemma4", "lemma6", "eedp"], required=True,
                   help="lemma4: layer-4 success amplitude, lemma6: layer-1 success amplitude, "
                        "eedp: walk-phase angles along r = sqrt N")
    w.add_argument("--n-pows", default="2..10", help="values of j, e.g. 2..10")
    w.add_argument("--N-list", default="100,1000,10000", help="eedp sizes N (r = sqrt N)")
    w.add_argument("--u4", type=float, default=4.0)
    w.add_argument("--windings", type=_windings, default=(8, 10))
    w.add_argument("--t-factor", type=float, default=12.0)
    w.add_argument("--out", help="CSV output path")
    w.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "tol", 1.0) is not None and getattr(args, "tol", 1.0) <= 0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = args.func(args)
    except (UsageError, PreconditionError, PromiseViolation, CapExceededError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DetwalkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    sys.stdout.write(dumps(report) + "\n")
    return EXIT_OK if report["pass"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

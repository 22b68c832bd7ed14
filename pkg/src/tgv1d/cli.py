"""Command-line interface: denoise, certify, regions, oracle, compare, sweep.

Exit codes: 0 ok, 2 usage or input error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import oracles
from .certify import (
    Verdict,
    check_optimality,
    check_structure,
    classify_region,
    fit_piecewise,
    region_map,
    structure_ok,
)
from .functionals import LambdaPair, objective_tgv, tgv_value
from .signal_core import (
    DataId,
    GridSignal,
    eval_piecewise,
    format_float,
    read_grid_csv,
    sample,
    sigma_transforms,
    tv_seminorm,
    write_grid_csv,
)
from .solver import ConvergenceError, Problem, SolverConfig, solve

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NOCONV = 0, 2, 3

VERDICT_COLORS = {
    "Zero": "#ffffff",
    "EqualsTV1": "#4c72b0",
    "EqualsTV2": "#dd8452",
    "StrictTGV": "#55a868",
    "Boundary": "#8c8c8c",
    "Failed": "#c44e52",
}


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def read_config(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def solver_config(args) -> SolverConfig:
    opts = read_config(args.config) if getattr(args, "config", None) else {}
    for key in ("max_iters", "tol_gap", "method"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    try:
        return SolverConfig.from_mapping(opts)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def load_data(args) -> tuple[GridSignal, str]:
    if (args.data is None) == (args.input is None):
        raise InputError("give exactly one of --data and --input")
    if args.input is not None:
        try:
            return read_grid_csv(args.input), str(args.input)
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from None
    try:
        data = DataId.parse(args.data)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.n < 4:
        raise InputError("n must be at least 4")
    if data is DataId.IndData and args.n % 4:
        raise InputError("n must be divisible by 4 for the indicator data")
    return sample(data, args.n), data.value


def lam_args(problem: Problem, l1, l2):
    for name, v in (("--l1", l1), ("--l2", l2)):
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise InputError(f"{name} must be positive and finite")
    if problem in (Problem.TV1, Problem.TGV) and l1 is None:
        raise InputError("--l1 is required for this problem")
    if problem in (Problem.TV2, Problem.TGV) and l2 is None:
        raise InputError("--l2 is required for this problem")
    return (l1 if problem is not Problem.TV2 else None), (l2 if problem is not Problem.TV1 else None)


def out_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {p}: {exc}") from None
    if not os.access(p, os.W_OK):
        raise InputError(f"output directory {p} is not writable")
    return p


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in r])


def auto_tol(tol, h):
    # margins of sampled data are accurate to well below h
    return 0.1 * h + 1e-6 if tol is None else tol


def linspace_arg(lo, hi, steps, name):
    if steps is None or steps < 1:
        raise InputError(f"{name}: steps must be at least 1")
    if lo is None or hi is None:
        raise InputError(f"{name}: give both ends of the range")
    if steps == 1:
        return np.array([lo])
    return np.linspace(lo, hi, steps)


# --------------------------------------------------------------------------
# commands


def cmd_denoise(args) -> int:
    f, source = load_data(args)
    problem = Problem.parse(args.problem)
    l1, l2 = lam_args(problem, args.l1, args.l2)
    cfg = solver_config(args)
    out = out_dir(args.out)
    res = solve(f, problem, l1, l2, cfg)
    write_grid_csv(out / "solution.csv", res.u)
    st = sigma_transforms(res.u - f)
    write_rows(
        out / "sigma.csv",
        ["x", "sigma1", "sigma2"],
        [(float(e), float(a), float(b)) for e, a, b in zip(f.edges, st.sigma1, st.sigma2)],
    )
    manifest = {
        "command": "denoise",
        "data": source,
        "n": f.n,
        "problem": problem.value,
        "lambda1": l1,
        "lambda2": l2,
        "config": {"max_iters": cfg.max_iters, "tol_gap": cfg.tol_gap, "step_ratio": cfg.step_ratio, "method": cfg.method},
        "method": res.method,
        "iterations": res.iterations,
        "gap": res.final_gap,
        "converged": res.converged,
    }
    write_json(out / "manifest.json", manifest)
    return EXIT_OK if res.converged else EXIT_NOCONV


def cmd_certify(args) -> int:
    f, _ = load_data(args)
    problem = Problem.parse(args.problem)
    l1, l2 = lam_args(problem, args.l1, args.l2)
    if args.solution is not None:
        try:
            u = read_grid_csv(args.solution)
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from None
        if u.n != f.n:
            raise InputError(f"solution has {u.n} samples, data has {f.n}")
    else:
        res = solve(f, problem, l1, l2, solver_config(args))
        if not res.converged:
            raise ConvergenceError("solve did not converge", res.final_gap)
        u = res.u
    cert = check_optimality(u, f, problem, (l1, l2), tol=args.tol)
    events = check_structure(fit_piecewise(u), f, (l1, l2), problem=problem, u=u)
    cert.structural_events = events
    if not structure_ok(events):
        cert.passed = False
        cert.reasons.append("structure conditions violated")
    text = cert.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _svg(lam1, lam2, names, title) -> str:
    cell = 12
    nx, ny = len(lam1), len(lam2)
    left, top = 60, 30
    W = left + nx * cell + 170
    H = top + ny * cell + 50
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<text x="{left}" y="18" font-family="sans-serif" font-size="12">{title}</text>',
    ]
    for i in range(nx):
        for j in range(ny):
            v = names[i][j]
            y = top + (ny - 1 - j) * cell
            parts.append(
                f'<rect x="{left + i * cell}" y="{y}" width="{cell}" height="{cell}" fill="{VERDICT_COLORS[v]}" '
                f'stroke="#dddddd" stroke-width="0.5" data-lambda1="{format_float(float(lam1[i]))}" '
                f'data-lambda2="{format_float(float(lam2[j]))}" data-verdict="{v}"/>'
            )
    yb = top + ny * cell
    parts.append(f'<text x="{left}" y="{yb + 16}" font-family="sans-serif" font-size="10">lambda1 {lam1[0]:.4g} .. {lam1[-1]:.4g}</text>')
    parts.append(f'<text x="4" y="{top + 10}" font-family="sans-serif" font-size="10">lambda2</text>')
    parts.append(f'<text x="4" y="{top + 22}" font-family="sans-serif" font-size="10">{lam2[-1]:.4g}</text>')
    parts.append(f'<text x="4" y="{yb}" font-family="sans-serif" font-size="10">{lam2[0]:.4g}</text>')
    lx = left + nx * cell + 15
    for k, (name, col) in enumerate(VERDICT_COLORS.items()):
        y = top + k * 18
        parts.append(f'<rect x="{lx}" y="{y}" width="12" height="12" fill="{col}" stroke="#000000" stroke-width="0.5"/>')
        parts.append(f'<text x="{lx + 18}" y="{y + 10}" font-family="sans-serif" font-size="11">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_regions(args) -> int:
    f, source = load_data(args)
    L1 = linspace_arg(args.l1_from, args.l1_to, args.l1_steps, "lambda1 grid")
    L2 = linspace_arg(args.l2_from, args.l2_to, args.l2_steps, "lambda2 grid")
    if np.any(L1 <= 0) or np.any(L2 <= 0):
        raise InputError("lambda grids must be positive")
    cfg = solver_config(args)
    out = out_dir(args.out)
    tol = auto_tol(args.tol, f.h)
    rm = region_map(f, L1, L2, cfg, tol=tol, threads=args.threads, brute=not args.no_brute)
    rows = []
    for i in range(L1.size):
        for j in range(L2.size):
            rv = rm.verdicts[i][j]
            rows.append((float(L1[i]), float(L2[j]), rv.verdict.value, float(rv.margin1), float(rv.margin2)))
    write_rows(out / "regions.csv", ["lambda1", "lambda2", "verdict", "margin1", "margin2"], rows)
    if not args.no_brute:
        brows = []
        for i in range(L1.size):
            for j in range(L2.size):
                brows.append((float(L1[i]), float(L2[j]), rm.brute[i][j].value, float(rm.dist_tv1[i, j]), float(rm.dist_tv2[i, j])))
        write_rows(out / "regions_brute.csv", ["lambda1", "lambda2", "verdict", "dist_tv1", "dist_tv2"], brows)
    (out / "regions.svg").write_text(_svg(L1, L2, rm.verdict_names(), f"regions: {source}, n = {f.n}"))
    frac = rm.success_fraction()
    if frac < 0.95:
        log.error("only %.1f%% of cells succeeded", 100 * frac)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        data = DataId.parse(args.data)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    problem = Problem.parse(args.problem)
    l1, l2 = lam_args(problem, args.l1, args.l2)
    if data is DataId.IndData and args.n % 4:
        raise InputError("n must be divisible by 4 for the indicator data")
    try:
        p = oracles.oracle(data, problem.value, l1, l2)
    except (ValueError, NotImplementedError) as exc:
        raise InputError(str(exc)) from None
    doc = {"data": data.value, "problem": problem.value, "lambda1": l1, "lambda2": l2, "signal": p.to_dict()}
    if problem is Problem.TGV:
        doc["region"] = oracles.analytic_region(data, (l1, l2))
        if data is DataId.AbsData and doc["region"] == "StrictTGV":
            k = oracles.abs_tgv_coefficients((l1, l2))
            mu = oracles.mu_from_lambda_abs((l1, l2))
            doc["coefficients"] = {"c": k.c, "d": k.d}
            doc["mu"] = {"mu1": mu.mu1, "mu2": mu.mu2}
        elif data is DataId.IndData and doc["region"] == "StrictTGV":
            mu = oracles.mu_from_lambda_ind((l1, l2))
            doc["mu"] = {"mu1": mu.mu1, "mu2": mu.mu2}
    out = out_dir(args.out)
    write_json(out / "oracle.json", doc)
    write_grid_csv(out / "oracle.csv", eval_piecewise(p, args.n))
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        a, b = read_grid_csv(args.a), read_grid_csv(args.b)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from None
    if a.n != b.n:
        raise InputError(f"grid sizes differ: {a.n} vs {b.n}")
    d = a - b
    l2 = d.l2()
    linf = float(np.max(np.abs(d.values)))
    rows = [("n", a.n), ("h", a.h), ("l2", l2), ("linf", linf)]
    if args.out:
        write_rows(args.out, ["metric", "value"], rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["metric", "value"])
    for k, v in rows:
        w.writerow([k, format_float(v) if isinstance(v, float) else v])
    return EXIT_OK


def cmd_sweep(args) -> int:
    f, _ = load_data(args)
    cfg = solver_config(args)
    if args.l1 is not None and args.l2_from is not None:
        lams = [(args.l1, float(v)) for v in linspace_arg(args.l2_from, args.l2_to, args.steps, "lambda2 path")]
    elif args.l2 is not None and args.l1_from is not None:
        lams = [(float(v), args.l2) for v in linspace_arg(args.l1_from, args.l1_to, args.steps, "lambda1 path")]
    else:
        raise InputError("give --l1 with --l2-from/--l2-to, or --l2 with --l1-from/--l1-to")
    for l1, l2 in lams:
        if not (l1 > 0 and l2 > 0):
            raise InputError("lambda path must be positive")
    tol = auto_tol(args.tol, f.h)
    rows = []
    status = EXIT_OK
    for l1, l2 in lams:
        lam = LambdaPair(l1, l2)
        res = solve(f, Problem.TGV, l1, l2, cfg)
        if not res.converged:
            status = EXIT_NOCONV
        try:
            rv = classify_region(f, lam, cfg, tol=tol)
            verdict, m1, m2 = rv.verdict.value, rv.margin1, rv.margin2
        except ConvergenceError:
            verdict, m1, m2 = Verdict.Failed.value, math.nan, math.nan
            status = EXIT_NOCONV
        rows.append(
            (
                l1,
                l2,
                objective_tgv(res.u, f, lam),
                tgv_value(res.u, lam),
                tv_seminorm(res.u, 1),
                tv_seminorm(res.u, 2),
                verdict,
                float(m1),
                float(m2),
                res.final_gap,
                "true" if res.converged else "false",
            )
        )
    header = ["lambda1", "lambda2", "objective", "tgv", "tv1", "tv2", "verdict", "margin1", "margin2", "gap", "converged"]
    if args.out:
        write_rows(args.out, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in r])
    return status


# --------------------------------------------------------------------------
# parser


def _add_data(p, n_default=1024):
    p.add_argument("--data", choices=[d.value for d in DataId], help="built-in data set")
    p.add_argument("--input", help="CSV with columns x,value on the midpoint grid")
    p.add_argument("--n", type=int, default=n_default, help="grid size for built-in data")


def _add_solver(p):
    p.add_argument("--config", help="key = value file with solver options")
    p.add_argument("--method", choices=["ipm", "pdhg", "taut_string"])
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tol-gap", dest="tol_gap", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tgv1d", description="1D TV / TV2 / TGV denoising and certificates")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="solve and write solution, sigma and manifest files")
    _add_data(p)
    _add_solver(p)
    p.add_argument("--problem", choices=[q.value for q in Problem], default="tgv")
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("certify", help="optimality certificate as JSON")
    _add_data(p)
    _add_solver(p)
    p.add_argument("--problem", choices=[q.value for q in Problem], default="tgv")
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--solution", help="solution CSV; solved here if omitted")
    p.add_argument("--tol", type=float, default=1e-6, help="relative identity tolerance")
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("regions", help="region verdict map with CSV and SVG output")
    _add_data(p)
    _add_solver(p)
    for k in ("l1", "l2"):
        p.add_argument(f"--{k}-from", dest=f"{k}_from", type=float, required=True)
        p.add_argument(f"--{k}-to", dest=f"{k}_to", type=float, required=True)
        p.add_argument(f"--{k}-steps", dest=f"{k}_steps", type=int, default=20)
    p.add_argument("--tol", type=float, help="boundary tolerance on the margins (default 0.1 h + 1e-6)")
    p.add_argument("--threads", type=int, help="worker threads (default TGV1D_THREADS or 1)")
    p.add_argument("--no-brute", action="store_true", help="skip the brute-force TGV cross-check")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("oracle", help="closed-form minimizer as JSON and sampled CSV")
    p.add_argument("--data", required=True, choices=[d.value for d in DataId])
    p.add_argument("--problem", choices=[q.value for q in Problem], default="tgv")
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="L2 and Linf difference of two solution CSVs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", help="also write the table to this CSV")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="lambda path of objective values, seminorms and verdicts")
    _add_data(p, n_default=2048)
    _add_solver(p)
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--l1-from", dest="l1_from", type=float)
    p.add_argument("--l1-to", dest="l1_to", type=float)
    p.add_argument("--l2-from", dest="l2_from", type=float)
    p.add_argument("--l2-to", dest="l2_to", type=float)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--tol", type=float, help="boundary tolerance on the margins (default 0.1 h + 1e-6)")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

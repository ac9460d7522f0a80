"""Command-line interface: ``oval-lab <command> [options]``.

Exit status: 0 success, 1 invalid input or configuration, 2 numerical
failure, 3 a conjecture-violation candidate was found (a counterexample file
was written). Every output starts with a metadata block holding the tool
version, the resolved configuration and the seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .bridge import functional_ratio_pair, pair_bridge, random_pair, single_bridge, xy_interpretation
from .constants import ConstantsRow, constants_row, known_bounds_table
from .curves import CurveSpec, min_curvature, parse_curve, random_oval
from .errors import ConfigError, InputError, NumericalError
from .line import (
    DEFAULT_HALF_WIDTH,
    DEFAULT_POINTS,
    _require_bound,
    bound_states,
    line_grid,
    lt_ratio,
    parse_potential,
)
from .numerics import parse_grid_spec
from .optimize import (
    CONJECTURE_TOL,
    HALFBOUND_TOL,
    MAXIMIZE,
    OptimizationProblem,
    maximize_lambda1,
    minimize_lambda1,
    perturbation_scan,
    write_counterexample,
    write_dump,
)
from .periodic import METHODS, CurveOperatorSpec, halfbound_certificate, lowest_eigs

SEED_ENV = "OVAL_LAB_SEED"
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_VIOLATION = 0, 1, 2, 3
# execution-only options, kept out of the echoed configuration so output does not depend on them
EXECUTION_KEYS = ("config", "output", "parallelism", "dump_dir", "history_csv", "curve_csv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


class Report:
    """Result of one command: tabular rows or a JSON document, plus the exit status."""

    def __init__(self, columns=None, rows=None, document=None, status=EXIT_OK, summary=None):
        self.columns = columns
        self.rows = rows
        self.document = document
        self.status = status
        self.summary = summary or {}


def _clean(value):
    """Make ``value`` JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _metadata(args) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in EXECUTION_KEYS and k != "handler"}
    return {"tool": "oval-lab", "version": __version__, "command": args.command, "seed": args.seed,
            "config": _clean(config)}


def render(report: Report, args, fmt: str) -> str:
    meta = _metadata(args)
    if report.summary:
        meta["summary"] = _clean(report.summary)
    if fmt == "json":
        body = report.document
        if body is None:
            body = {"columns": report.columns, "rows": report.rows}
        return json.dumps({"metadata": meta, "result": _clean(body)}, indent=2) + "\n"
    if report.rows is None:
        raise ConfigError(f"{args.command} has no tabular form; use --format json")
    out = io.StringIO()
    for key in ("tool", "version", "command", "seed"):
        out.write(f"# {key}: {meta[key]}\n")
    out.write(f"# config: {json.dumps(meta['config'], sort_keys=True)}\n")
    if "summary" in meta:
        out.write(f"# summary: {json.dumps(meta['summary'], sort_keys=True)}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(report.columns)
    for row in report.rows:
        writer.writerow([_format_cell(v) for v in row])
    return out.getvalue()


def _format_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _map(func: Callable, items: Sequence, parallelism: int) -> list:
    """Ordered map, in worker processes when ``parallelism > 1``."""
    if parallelism > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * parallelism))))
    return [func(item) for item in items]


# ---- constants -------------------------------------------------------------

def cmd_constants(args) -> Report:
    gammas = [float(g) for g in parse_grid_spec(args.gamma_grid)]
    rows = [constants_row(g).as_tuple() for g in gammas]
    return Report(list(ConstantsRow.FIELDS), rows, summary={"known_bounds": known_bounds_table()})


# ---- curve-eig -------------------------------------------------------------

def cmd_curve_eig(args) -> Report:
    curve = parse_curve(args.curve)
    spec = CurveOperatorSpec(curve, args.g, args.resolution, args.method, not args.allow_nonconvex)
    spectrum = lowest_eigs(spec, args.k)
    doc = {"curve": curve.to_dict(), "spectrum": spectrum.to_dict()}
    status = EXIT_OK
    if args.g == 1.0 and min_curvature(curve)[0] > 0.0:
        if args.certificate:
            doc["certificate"] = halfbound_certificate(spec).to_dict()
        if spectrum.eigenvalues[0] < 1.0 - CONJECTURE_TOL:
            doc["counterexample"] = str(write_counterexample(curve, args.resolution, args.dump_dir))
            status = EXIT_VIOLATION
    rows = [(i + 1, float(v)) for i, v in enumerate(spectrum.eigenvalues)]
    summary = {key: spectrum.metadata[key] for key in ("delta_lambda1", "resolution_warning")}
    return Report(["index", "eigenvalue"], rows, doc, status, summary)


# ---- bridge ----------------------------------------------------------------

def cmd_bridge(args) -> Report:
    v = parse_potential(args.potential)
    if args.mode == "single":
        spectrum = bound_states(v, 1, args.half_width, args.points)
        report = single_bridge(spectrum.functions()[0])
        w = report.w
        rows = list(zip(w.nodes, w.values))
        return Report(["s", "w"], rows, report.to_dict())
    spectrum = bound_states(v, 2, args.half_width, args.points)
    _require_bound(spectrum, 2, v)
    u1, u2 = spectrum.functions()
    report = pair_bridge(u1, u2, args.s_points)
    xy = xy_interpretation(report.R, report.phi, report.winding)
    doc = report.to_dict() | {"xy_interpretation": xy.to_dict(), "potential": v.describe()}
    rows = [tuple(float(x) for x in r) for r in report.curve_rows()]
    if args.curve_csv:
        _write_curve_csv(args, rows)
    status = EXIT_OK
    if report.ratio_34 < 1.0 - CONJECTURE_TOL:
        doc["counterexample"] = str(write_dump({"kind": "pair", "potential": v.describe(),
                                                "ratio_34": report.ratio_34}, args.dump_dir))
        status = EXIT_VIOLATION
    return Report(["s", "R", "phi", "kappa"], rows, doc, status)


def _write_curve_csv(args, rows):
    rep = Report(["s", "R", "phi", "kappa"], rows)
    Path(args.curve_csv).write_text(render(rep, args, "csv"))


# ---- lt-ratio --------------------------------------------------------------

def cmd_lt_ratio(args) -> Report:
    if not 0.5 < args.gamma <= 1.5:
        raise ConfigError(f"--gamma must lie in (1/2, 3/2], got {args.gamma}")
    v = parse_potential(args.potential)
    report = lt_ratio(v, args.gamma, args.states, args.half_width, args.points)
    doc = report.to_dict()
    status = EXIT_OK
    if args.states == 2 and args.gamma == 1.0 and report.margin < -CONJECTURE_TOL:
        doc["counterexample"] = str(write_dump({"kind": "lieb_thirring", **_clean(doc)}, args.dump_dir))
        status = EXIT_VIOLATION
    columns = ["gamma", "states", "moment_sum", "potential_integral", "ratio", "reference_constant", "margin"]
    row = (report.gamma, args.states, report.moment_sum, report.potential_integral, report.ratio,
           report.reference_constant, report.margin)
    return Report(columns, [row], doc, status)


# ---- optimize --------------------------------------------------------------

def _problem(args) -> OptimizationProblem:
    return OptimizationProblem(
        g=args.g,
        sense=args.sense,
        family=args.family,
        max_harmonic=args.max_harmonic,
        resolution=args.resolution,
        barrier_strength=args.barrier_strength,
        seed=args.seed,
        restarts=args.restarts,
        max_evals=args.max_evals,
        amplitude=args.amplitude,
    )


def cmd_optimize(args) -> Report:
    problem = _problem(args)
    run = maximize_lambda1 if problem.sense == MAXIMIZE else minimize_lambda1
    trace = run(problem, parallelism=args.parallelism, dump_dir=args.dump_dir)
    doc = trace.to_dict()
    if args.history_csv:
        Path(args.history_csv).write_text(render(Report(["eval", "value"], trace.history_rows()), args, "csv"))
    status = EXIT_VIOLATION if trace.counterexample_found else EXIT_OK
    summary = {"best_value": trace.best_value, "termination": trace.termination}
    return Report(["eval", "value"], trace.history_rows(), doc, status, summary)


# ---- scan ------------------------------------------------------------------

def cmd_scan(args) -> Report:
    direction = parse_curve(args.direction)
    eps = [float(e) for e in parse_grid_spec(args.eps_grid)]
    result = perturbation_scan(args.g, direction, eps, args.resolution)
    summary = {"truncated": result.truncated, "truncated_at": result.truncated_at}
    return Report(["eps", "lambda1", "lambda2"], result.rows, result.to_dict(), EXIT_OK, summary)


# ---- sweep -----------------------------------------------------------------

def _oval_point(job):
    seed, g, max_harmonic, amplitude, resolution = job
    curve = random_oval(seed, max_harmonic, amplitude)
    lam = _eigs(curve, g, resolution)
    row = {"seed": seed, "lambda1": lam[0], "lambda2": lam[1]}
    if g == 1.0:
        cert = halfbound_certificate(CurveOperatorSpec(curve, 1.0, resolution))
        row.update(c0_sq=cert.c0_sq, certified_lower_bound=cert.certified_lower_bound,
                   certificate_holds=cert.holds)
    return row


def _eigs(curve, g, resolution):
    from .periodic import eigenvalues

    lam = eigenvalues(CurveOperatorSpec(curve, g, resolution), 2)
    return float(lam[0]), float(lam[1])


def _pair_point(job):
    seed, half_width, points = job
    u1, u2 = random_pair(seed, line_grid(half_width, points))
    return {"seed": seed, "ratio": functional_ratio_pair(u1, u2)}


def _eps_point(job):
    eps, g, direction, resolution = job
    result = perturbation_scan(g, CurveSpec.from_dict(direction), [eps], resolution)
    if result.truncated:
        return {"eps": eps, "lambda1": math.nan, "lambda2": math.nan, "admissible": False}
    _, l1, l2 = result.rows[0]
    return {"eps": eps, "lambda1": l1, "lambda2": l2, "admissible": True}


def _aggregate(values: List[float]) -> dict:
    arr = np.array([v for v in values if math.isfinite(v)])
    if arr.size == 0:
        return {"count": 0}
    return {"count": int(arr.size), "min": float(arr.min()), "max": float(arr.max()), "mean": float(arr.mean())}


def cmd_sweep(args) -> Report:
    status = EXIT_OK
    dumps = []
    if args.axis == "seeds":
        seeds = list(range(args.seed, args.seed + args.count))
        if args.quantity == "oval-lambda1":
            jobs = [(s, args.g, args.max_harmonic, args.amplitude, args.resolution) for s in seeds]
            results = _map(_oval_point, jobs, args.parallelism)
            monitored = "lambda1"
            if args.g == 1.0:
                failed = [r["seed"] for r in results
                          if r["lambda1"] < 0.5 - HALFBOUND_TOL or not r["certificate_holds"]]
                if failed:
                    raise NumericalError(f"half-bound check failed for seeds {failed[:10]}; raise --resolution")
                for r in results:
                    if r["lambda1"] < 1.0 - CONJECTURE_TOL:
                        curve = random_oval(r["seed"], args.max_harmonic, args.amplitude)
                        dumps.append(str(write_counterexample(curve, args.resolution, args.dump_dir)))
        else:
            jobs = [(s, args.half_width, args.points) for s in seeds]
            results = _map(_pair_point, jobs, args.parallelism)
            monitored = "ratio"
            for r in results:
                if r["ratio"] < 1.0 - CONJECTURE_TOL:
                    record = {"kind": "random_pair", "seed": r["seed"], "half_width": args.half_width,
                              "points": args.points, "ratio": r["ratio"]}
                    dumps.append(str(write_dump(record, args.dump_dir)))
    elif args.axis == "eps":
        direction = parse_curve(args.direction).to_dict()
        eps = [float(e) for e in parse_grid_spec(args.eps_grid)]
        results = _map(_eps_point, [(e, args.g, direction, args.resolution) for e in eps], args.parallelism)
        monitored = "lambda1"
    else:
        gammas = [float(g) for g in parse_grid_spec(args.gamma_grid)]
        rows = _map(constants_row, gammas, args.parallelism)
        results = [dict(zip(ConstantsRow.FIELDS, r.as_tuple())) for r in rows]
        monitored = "ratio_R"
    if dumps:
        status = EXIT_VIOLATION
    columns = list(results[0].keys()) if results else []
    rows = [tuple(r[c] for c in columns) for r in results]
    summary = {"monitored": monitored, **_aggregate([float(r[monitored]) for r in results])}
    if dumps:
        summary["counterexamples"] = dumps
    return Report(columns, rows, {"summary": summary, "points": results}, status, summary)


# ---- parser ----------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _common(p: argparse.ArgumentParser, default_format: str):
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=default_format)
    p.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV} or 0")
    p.add_argument("--parallelism", type=_positive_int, default=1)
    p.add_argument("--dump-dir", default="counterexamples", help="directory for counterexample files")


def _line_options(p):
    p.add_argument("--half-width", type=float, default=DEFAULT_HALF_WIDTH)
    p.add_argument("--points", type=int, default=DEFAULT_POINTS)


def build_parser():
    parser = _Parser(prog="oval-lab", description="Curve-operator spectra, Lieb-Thirring ratios and the bridge between them.")
    parser.add_argument("--version", action="version", version=f"oval-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subparsers = {}

    p = sub.add_parser("constants", help="table of sharp constants over a gamma grid")
    p.add_argument("--gamma-grid", default="0.6:1.5:0.1")
    _common(p, "csv")
    p.set_defaults(handler=cmd_constants)
    subparsers["constants"] = p

    p = sub.add_parser("curve-eig", help="lowest eigenvalues of -d^2/ds^2 + g kappa^2 on a curve")
    p.add_argument("--curve", default="circle")
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--k", type=_positive_int, default=3)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--method", choices=METHODS, default=METHODS[0])
    p.add_argument("--allow-nonconvex", action="store_true")
    p.add_argument("--certificate", action="store_true", help="attach the half-bound certificate (g = 1)")
    _common(p, "csv")
    p.set_defaults(handler=cmd_curve_eig)
    subparsers["curve-eig"] = p

    p = sub.add_parser("bridge", help="map line eigenfunctions to curve data")
    p.add_argument("--potential", default="poschl_teller:a=6")
    p.add_argument("--mode", choices=("pair", "single"), default="pair")
    p.add_argument("--s-points", type=int, default=8192)
    p.add_argument("--curve-csv", help="also write the s,R,phi,kappa table here")
    _line_options(p)
    _common(p, "json")
    p.set_defaults(handler=cmd_bridge)
    subparsers["bridge"] = p

    p = sub.add_parser("lt-ratio", help="Lieb-Thirring ratio for a potential")
    p.add_argument("--potential", required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--states", type=int, choices=(1, 2), default=1)
    _line_options(p)
    _common(p, "json")
    p.set_defaults(handler=cmd_lt_ratio)
    subparsers["lt-ratio"] = p

    p = sub.add_parser("optimize", help="Nelder-Mead search for extremal lambda_1")
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--sense", choices=("minimize", "maximize"), default="minimize")
    p.add_argument("--family", choices=("even_harmonic", "general"), default="even_harmonic")
    p.add_argument("--max-harmonic", type=int, default=6)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--barrier-strength", type=float, default=1e-3)
    p.add_argument("--restarts", type=_positive_int, default=10)
    p.add_argument("--max-evals", type=_positive_int, default=5000)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--history-csv", help="also write the eval,value history here")
    _common(p, "json")
    p.set_defaults(handler=cmd_optimize)
    subparsers["optimize"] = p

    p = sub.add_parser("scan", help="lambda_1, lambda_2 along circle + eps * direction")
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--direction", default="harm:n=2,a=0,b=0.5", help="curve syntax; default gives kappa = 1 + eps cos 2s")
    p.add_argument("--eps-grid", default="0:0.8:0.05")
    p.add_argument("--resolution", type=int, default=64)
    _common(p, "csv")
    p.set_defaults(handler=cmd_scan)
    subparsers["scan"] = p

    p = sub.add_parser("sweep", help="parallel sweep over seeds, eps or gamma with aggregate statistics")
    p.add_argument("--axis", choices=("seeds", "eps", "gamma"), required=True)
    p.add_argument("--quantity", choices=("oval-lambda1", "pair-ratio"), default="oval-lambda1")
    p.add_argument("--count", type=_positive_int, default=500)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--max-harmonic", type=int, default=6)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--resolution", type=int, default=48)
    p.add_argument("--direction", default="harm:n=2,a=0,b=0.5")
    p.add_argument("--eps-grid", default="0:0.8:0.05")
    p.add_argument("--gamma-grid", default="0.6:1.5:0.1")
    _line_options(p)
    _common(p, "csv")
    p.set_defaults(handler=cmd_sweep)
    subparsers["sweep"] = p
    return parser, subparsers


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def load_config(path, subparser: argparse.ArgumentParser) -> Dict[str, object]:
    """Parse ``key = value`` lines into typed defaults for ``subparser``; unknown keys are errors."""
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        dest = key.strip().replace("-", "_")
        if dest not in actions or dest == "handler":
            raise ConfigError(f"{path}:{lineno}: unknown key {key.strip()!r}")
        action = actions[dest]
        value = value.strip()
        if isinstance(action, argparse._StoreTrueAction):
            values[dest] = _parse_bool(value)
            continue
        try:
            converted = action.type(value) if action.type else value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key.strip()!r}: {exc}") from None
        if action.choices is not None and converted not in action.choices:
            raise ConfigError(f"{path}:{lineno}: {key.strip()!r} must be one of {list(action.choices)}")
        values[dest] = converted
    return values


def _resolve_seed(args):
    if args.seed is not None:
        return
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        args.seed = 0
        return
    try:
        args.seed = int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _config_path(argv: List[str]) -> Optional[str]:
    for i, item in enumerate(argv):
        if item == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if item.startswith("--config="):
            return item.split("=", 1)[1]
    return None


def parse_args(argv: Optional[Sequence[str]] = None):
    parser, subparsers = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    command = next((a for a in argv if a in subparsers), None)
    path = _config_path(argv)
    if command is not None and path is not None:
        sub = subparsers[command]
        defaults = load_config(path, sub)
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
        sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    _resolve_seed(args)
    return args


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the command and write its report; returns the exit status."""
    try:
        args = parse_args(argv)
        report = args.handler(args)
        text = render(report, args, args.format)
        if args.output:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
        if report.status == EXIT_VIOLATION:
            print("oval-lab: conjecture-violation candidate found; counterexample written", file=sys.stderr)
        return report.status
    except InputError as exc:
        print(f"oval-lab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"oval-lab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"oval-lab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(run())

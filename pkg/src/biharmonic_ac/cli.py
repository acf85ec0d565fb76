"""Command-line front end.

Subcommands: solve1d, radial, grid, sweep, rearrange, verify.
Exit status is 0 on success, 1 if a diagnostic fails and 2 on a usage or
validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from . import __version__, diagnostics, radial
from .core import DIRICHLET, NAVIER, DomainError, EnergyBreakdown, unit_ball_volume
from .minimiser import (GridFunction, Interval, PenaltySchedule, RadialDisk,
                        discrete_laplacian, minimise_penalised)
from .rearrangement import (MeasuredFunction, annular_rearrange, check_lp_preservation,
                            equimeasurability_defect, symmetry_certificate, talenti_w)

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_USAGE = 0, 1, 2
SWEEP_HEADER = ["param", "rho_opt", "energy_total", "energy_dirichlet", "energy_measure", "decision"]

log = logging.getLogger("biharmonic_ac")


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _to_json(obj, indent: int = 0) -> str:
    pad, pad1 = "  " * indent, "  " * (indent + 1)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad1}{json.dumps(str(k))}: {_to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in seq):
            return "[" + ", ".join(_to_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad1 + _to_json(v, indent + 1) for v in seq) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj) -> str:
    """Deterministic JSON: 17 significant digits, non-finite floats as null."""
    return _to_json(obj) + "\n"


def _csv_cell(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif isinstance(v, (list, tuple)):
            if v and isinstance(v[0], dict):
                for i, item in enumerate(v):
                    yield from _flatten(item, f"{key}[{i}].")
            else:
                yield key, " ".join(_csv_cell(x) for x in v)
        else:
            yield key, v


def _emit(args, payload: dict, table: Optional[tuple] = None):
    fmt = args.format or ("csv" if table is not None and args.command == "sweep" else "json")
    if fmt == "json":
        text = dumps_json(payload)
    elif table is not None:
        text = dumps_csv(*table)
    else:
        text = dumps_csv(["key", "value"], list(_flatten(payload)))
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _exit_for(reports) -> int:
    return EXIT_OK if all(r.passed for r in reports) else EXIT_DIAGNOSTIC


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def _positive(name, value):
    if value is None or not math.isfinite(value) or not value > 0:
        raise ConfigError(f"{name}: must be a finite number > 0, got {value}")
    return value


def _grid_size(name, m, minimum=16):
    if m < minimum:
        raise ConfigError(f"{name}: need at least {minimum} nodes, got {m}")
    return m


def _schedule(args) -> PenaltySchedule:
    floor = args.eps_floor
    if not 1e-8 <= floor < 0.1:
        raise ConfigError(f"eps_floor: must lie in [1e-8, 0.1), got {floor}")
    k_end = int(round(-2 * math.log10(floor)))
    eps = tuple(10.0 ** (-k / 2) for k in range(2, k_end + 1))
    if abs(eps[-1] - floor) > 1e-12 * floor:
        eps = tuple(e for e in eps if e > floor) + (floor,)
    return PenaltySchedule(eps, max_inner_iters=args.max_iter)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _agreement(name, computed, reference, rtol):
    diff = abs(computed - reference)
    ok = diff <= rtol * max(1.0, abs(reference))
    return diagnostics.DiagnosticReport(name, float(computed), float(reference), "~=",
                                        diagnostics.PASS if ok else diagnostics.FAIL,
                                        f"relative tolerance {rtol:g}", {"difference": diff})


def cmd_solve1d(args) -> int:
    R = _positive("R", args.R)
    m = _grid_size("m", args.m)
    closed = radial.minimiser_1d(R)
    solve = minimise_penalised(Interval(R, m), NAVIER, 1.0, 1.0, _schedule(args))
    reports = [
        diagnostics.navier_upper_bound(closed.energy.total, 2 * R),
        diagnostics.navier_upper_bound(solve.energy.total, 2 * R),
        diagnostics.stampacchia_check(solve.u, solve.threshold),
        _agreement("energy_agreement", solve.energy.total, closed.energy.total, args.tol),
        _converged(solve),
    ]
    discrepancy = {"energy": solve.energy.total - closed.energy.total}
    if closed.rho_opt is not None and solve.flat_radius_estimate is not None:
        discrepancy["rho"] = solve.flat_radius_estimate - closed.rho_opt
    payload = {
        "command": "solve1d",
        "version": __version__,
        "R": R,
        "closed_form": closed.to_dict(),
        "penalised": solve.to_dict(),
        "discrepancy": discrepancy,
        "diagnostics": [r.to_dict() for r in reports],
    }
    _emit(args, payload)
    return _exit_for(reports)


def _converged(solve) -> diagnostics.DiagnosticReport:
    return diagnostics.DiagnosticReport(
        "solver_converged", float(solve.iterations), float(solve.iterations), "=",
        diagnostics.PASS if solve.converged else diagnostics.FAIL,
        "every penalty stage met its stopping test")


def _infimum(bc, u0, lam):
    return radial.infimum_navier2d(u0, lam) if bc == NAVIER else radial.infimum_dirichlet2d(u0, lam)


def _curve(bc, u0, lam, rhos):
    return (radial.f_lambda if bc == NAVIER else radial.g_energy)(u0, np.asarray(rhos), lam)


def cmd_radial(args) -> int:
    u0 = _positive("u0", args.u0)
    lam = _positive("lambda", args.lam)
    bc = args.bc
    rep = _infimum(bc, u0, lam)
    reports = []
    cand = rep.candidate if rep.candidate is not None else radial.constant_candidate(2, 1.0, u0, bc)
    reports.append(diagnostics.laplacian_jump(cand))
    if bc == NAVIER:
        reports.append(diagnostics.navier_upper_bound(rep.energy.total / lam, math.pi))
    else:
        reports.append(diagnostics.dirichlet_lower_bound(0.0, math.pi, rep.energy.total))
    geo = RadialDisk(2, 1.0, _grid_size("m", args.m))
    exact = GridFunction.sample(geo, bc, u0, cand.value)
    if bc == NAVIER:
        cert = symmetry_certificate(exact, u0, laplacian=cand.laplacian(geo.nodes))
        reports.append(_certificate_report("certificate_exact", cert))
    payload = {
        "command": "radial",
        "version": __version__,
        "bc": bc,
        "u0": u0,
        "lambda": lam,
        "closed_form": rep.to_dict(),
        "candidate": cand.to_dict(),
    }
    if not args.no_penalised:
        solve = minimise_penalised(geo, bc, u0, lam, _schedule(args))
        reports += [
            _agreement("energy_agreement", solve.energy.total, rep.energy.total, args.tol),
            diagnostics.stampacchia_check(solve.u, solve.threshold),
            _converged(solve),
        ]
        if bc == NAVIER:
            reports.append(_certificate_report("certificate_penalised",
                                               symmetry_certificate(solve.u, u0)))
        payload["penalised"] = solve.to_dict()
    rhos = np.linspace(args.curve_from, args.curve_to, args.curve_points)
    payload["curve"] = {"rho": rhos.tolist(), "energy": _curve(bc, u0, lam, rhos).tolist()}
    payload["diagnostics"] = [r.to_dict() for r in reports]
    _emit(args, payload)
    return _exit_for(reports)


def _certificate_report(name, cert) -> diagnostics.DiagnosticReport:
    return diagnostics.DiagnosticReport(name, cert.u0, cert.w1, "<=", cert.status,
                                        "Talenti comparison u0 <= w(1)", cert.to_dict())


def cmd_grid(args) -> int:
    u0 = _positive("u0", args.u0)
    lam = _positive("lambda", args.lam)
    R = _positive("R", args.R)
    m = _grid_size("m", args.m)
    if args.geometry == "interval":
        geo = Interval(R, m)
    else:
        if args.n < 1:
            raise ConfigError(f"n: dimension must be >= 1, got {args.n}")
        geo = RadialDisk(args.n, R, m)
    solve = minimise_penalised(geo, args.bc, u0, lam, _schedule(args),
                               use_closed_form_seed=not args.no_seed)
    reports = [diagnostics.stampacchia_check(solve.u, solve.threshold), _converged(solve)]
    if args.bc == NAVIER:
        reports.append(diagnostics.navier_upper_bound(solve.energy.total / lam, geo.measure))
    payload = {"command": "grid", "version": __version__, "lambda": lam,
               "result": solve.to_dict(include_values=True),
               "diagnostics": [r.to_dict() for r in reports]}
    lap = discrete_laplacian(solve.u)
    table = (["x", "u", "laplacian"], zip(geo.nodes, solve.u.values, lap))
    _emit(args, payload, table)
    return _exit_for(reports)


def _sweep_row(task):
    mode, param, value, bc, u0, lam = task
    if mode == "curve":
        f = radial.f_lambda if bc == NAVIER else radial.g_energy
        e = f(u0, value, lam)
        return [value, value, e.total, e.dirichlet_part, e.measure_part, "Candidate"]
    if param == "u0":
        rep = _infimum(bc, value, lam)
    elif param == "lambda":
        rep = _infimum(bc, u0, value)
    else:
        rep = radial.rescale_to_ball(value, u0, bc)
    e = rep.energy
    return [value, rep.rho_opt, e.total, e.dirichlet_part, e.measure_part, rep.decision]


def cmd_sweep(args) -> int:
    if args.points < 1:
        raise ConfigError(f"points: need at least 1, got {args.points}")
    lo, hi = args.start, args.stop
    if args.mode == "curve":
        lo = 1e-3 if lo is None else lo
        hi = 0.999 if hi is None else hi
        if not 0 < lo <= hi < 1:
            raise ConfigError(f"from/to: curve mode needs 0 < from <= to < 1, got ({lo}, {hi})")
    else:
        if lo is None or hi is None:
            raise ConfigError("from/to: both ends of the range are required")
        if not 0 < lo <= hi or not math.isfinite(hi):
            raise ConfigError(f"from/to: need 0 < from <= to, got ({lo}, {hi})")
    if lo == hi and args.points > 1:
        raise ConfigError("points: an empty range admits a single point only")
    u0 = _positive("u0", args.u0)
    lam = _positive("lambda", args.lam)
    values = np.linspace(lo, hi, args.points)
    tasks = [(args.mode, args.param, float(v), args.bc, u0, lam) for v in values]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    payload = {"command": "sweep", "version": __version__, "mode": args.mode,
               "param": "rho" if args.mode == "curve" else args.param, "bc": args.bc,
               "u0": u0, "lambda": lam, "columns": SWEEP_HEADER, "rows": rows}
    _emit(args, payload, (SWEEP_HEADER, rows))
    return EXIT_OK


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"input: cannot read {what} file {path!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"input: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _number(obj, key, where):
    if key not in obj:
        raise ConfigError(f"{where}.{key}: missing")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {v!r}")
    return float(v)


def parse_cells(data) -> MeasuredFunction:
    """Validate the cell-function schema {n, hole_measure, cells: [{value, measure}]}."""
    if not isinstance(data, dict):
        raise ConfigError("input: top level must be an object")
    if "n" not in data or isinstance(data["n"], bool) or not isinstance(data["n"], int) or data["n"] < 1:
        raise ConfigError(f"n: expected an integer >= 1, got {data.get('n')!r}")
    n = data["n"]
    hole = _number(data, "hole_measure", "input")
    cells = data.get("cells")
    if not isinstance(cells, list) or not cells:
        raise ConfigError("cells: expected a nonempty list")
    vals, meas = [], []
    for i, c in enumerate(cells):
        where = f"cells[{i}]"
        if not isinstance(c, dict):
            raise ConfigError(f"{where}: expected an object with value and measure")
        v, mu = _number(c, "value", where), _number(c, "measure", where)
        if v < 0:
            raise ConfigError(f"{where}.value: must be >= 0, got {v}")
        if not mu > 0:
            raise ConfigError(f"{where}.measure: must be > 0, got {mu}")
        vals.append(v)
        meas.append(mu)
    try:
        return MeasuredFunction(np.array(vals), np.array(meas), hole, n)
    except DomainError as exc:
        raise ConfigError(f"hole_measure/cells: {exc}") from exc


def cmd_rearrange(args) -> int:
    f = parse_cells(_read_json(args.input, "cell function"))
    fstar = annular_rearrange(f)
    w = talenti_w(fstar)
    residuals = {
        "equimeasurability": equimeasurability_defect(f, fstar),
        "l1": check_lp_preservation(f, 1.0),
        "l2": check_lp_preservation(f, 2.0),
        "l4": check_lp_preservation(f, 4.0),
        "monotone": bool(np.all(np.diff(fstar.values) <= 0)),
    }
    payload = {
        "command": "rearrange",
        "version": __version__,
        "n": f.n,
        "r0": f.r0,
        "fstar": {"edges": fstar.edges.tolist(), "values": fstar.values.tolist(),
                  "measures": fstar.measures.tolist()},
        "w": {"r": w.r.tolist(), "values": w.values.tolist()},
        "w1": float(w.values[-1]),
        "residuals": residuals,
    }
    table = (["r_inner", "r_outer", "fstar", "measure", "w_outer"],
             zip(fstar.edges[:-1], fstar.edges[1:], fstar.values, fstar.measures, w.values[1:]))
    _emit(args, payload, table)
    return EXIT_OK


RESIDUAL_RTOL = 1e-8


def load_candidate(data) -> radial.RadialCandidate:
    # accepts a bare candidate or a report carrying one (as `radial` writes)
    if isinstance(data, dict) and isinstance(data.get("candidate"), dict):
        data = data["candidate"]
    elif isinstance(data, dict) and isinstance(data.get("closed_form"), dict):
        data = data["closed_form"].get("candidate")
    if not isinstance(data, dict):
        raise ConfigError("candidate: expected an object with n, rho, R, coeffs, bc, u0")
    for key in ("n", "rho", "R", "coeffs", "bc", "u0"):
        if key not in data:
            raise ConfigError(f"candidate.{key}: missing")
    if not isinstance(data["coeffs"], list) or len(data["coeffs"]) != 4:
        raise ConfigError("candidate.coeffs: expected a list of 4 numbers")
    try:
        c = radial.RadialCandidate.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"candidate: {exc}") from exc
    if c.bc not in (NAVIER, DIRICHLET):
        raise ConfigError(f"candidate.bc: unknown boundary condition {c.bc!r}")
    if not c.R > 0 or not 0 <= c.rho < c.R or c.n < 1:
        raise ConfigError(f"candidate.rho: need 0 <= rho < R and n >= 1, got rho={c.rho}, R={c.R}, n={c.n}")
    return c


def verify_candidate(c: radial.RadialCandidate, m: int = 2048) -> list:
    reports = []
    res = c.residuals()
    worst = max(abs(v) for v in res.values())
    tol = RESIDUAL_RTOL * max(1.0, abs(c.u0))
    reports.append(diagnostics.DiagnosticReport(
        "boundary_conditions", worst, tol, "<=",
        diagnostics.PASS if worst <= tol else diagnostics.FAIL,
        "matching at the free boundary and boundary data", res))
    reports.append(diagnostics.laplacian_jump(c))
    energy = radial.candidate_energy(c)
    measure = unit_ball_volume(c.n) * c.R**c.n
    if c.bc == NAVIER:
        reports.append(diagnostics.navier_upper_bound(energy.total, measure))
    else:
        reports.append(diagnostics.dirichlet_lower_bound(0.0, measure, energy.total))
    geo = RadialDisk(c.n, c.R, m)
    sample = GridFunction.sample(geo, c.bc, c.u0, c.value)
    reports.append(diagnostics.stampacchia_check(sample, 1e-8 * abs(c.u0)))
    if c.bc == NAVIER and c.R == 1.0:
        cert = symmetry_certificate(sample, c.u0, laplacian=c.laplacian(geo.nodes))
        reports.append(_certificate_report("certificate", cert))
    return reports


def cmd_verify(args) -> int:
    c = load_candidate(_read_json(args.input, "candidate"))
    reports = verify_candidate(c, _grid_size("m", args.m))
    payload = {"command": "verify", "version": __version__, "candidate": c.to_dict(),
               "diagnostics": [r.to_dict() for r in reports]}
    _emit(args, payload)
    return _exit_for(reports)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; SUPPRESS keeps
    # the subparser from overwriting a value given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--seed", type=int,
                        help="seed for randomised fixtures; solver numerics never depend on it")
    common.add_argument("-v", "--verbose", action="store_true")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--eps-floor", type=float, default=1e-8, dest="eps_floor",
                        help="final penalty width relative to u0")
    solver.add_argument("--max-iter", type=int, default=1000, dest="max_iter",
                        help="descent steps allowed per penalty stage")

    p = argparse.ArgumentParser(prog="biharmonic-ac", parents=[common],
                                description="Flat sets of biharmonic free-boundary minimisers.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve1d", parents=[common, solver], help="interval (-R, R), Navier data 1")
    s.add_argument("--R", type=float, required=True)
    s.add_argument("--m", type=int, default=4096)
    s.add_argument("--tol", type=float, default=5e-3, help="relative energy agreement tolerance")

    s = sub.add_parser("radial", parents=[common, solver], help="unit disk, radial minimiser")
    s.add_argument("--bc", choices=(NAVIER, DIRICHLET), required=True)
    s.add_argument("--u0", type=float, required=True)
    s.add_argument("--lambda", type=float, default=1.0, dest="lam")
    s.add_argument("--m", type=int, default=2048)
    s.add_argument("--tol", type=float, default=1e-2)
    s.add_argument("--no-penalised", action="store_true")
    s.add_argument("--curve-from", type=float, default=0.01)
    s.add_argument("--curve-to", type=float, default=0.99)
    s.add_argument("--curve-points", type=int, default=99)

    s = sub.add_parser("grid", parents=[common, solver], help="raw penalised solve on a grid")
    s.add_argument("--geometry", choices=("interval", "radial"), default="radial")
    s.add_argument("--bc", choices=(NAVIER, DIRICHLET), default=NAVIER)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--R", type=float, default=1.0)
    s.add_argument("--m", type=int, default=2048)
    s.add_argument("--u0", type=float, default=1.0)
    s.add_argument("--lambda", type=float, default=1.0, dest="lam")
    s.add_argument("--no-seed", action="store_true", help="skip the closed-form seeded run")

    s = sub.add_parser("sweep", parents=[common], help="energy curves and infima over a parameter")
    s.add_argument("--mode", choices=("infimum", "curve"), default="infimum")
    s.add_argument("--param", choices=("u0", "R", "lambda"), default="u0")
    s.add_argument("--from", type=float, dest="start", default=None)
    s.add_argument("--to", type=float, dest="stop", default=None)
    s.add_argument("--points", type=int, default=50)
    s.add_argument("--bc", choices=(NAVIER, DIRICHLET), default=NAVIER)
    s.add_argument("--u0", type=float, default=0.05)
    s.add_argument("--lambda", type=float, default=1.0, dest="lam")
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("rearrange", parents=[common], help="annular rearrangement of a cell function")
    s.add_argument("input", help="JSON file {n, hole_measure, cells: [{value, measure}]}")

    s = sub.add_parser("verify", parents=[common], help="diagnostics for a candidate file")
    s.add_argument("input", help="JSON candidate (as written by `radial`)")
    s.add_argument("--m", type=int, default=2048)
    return p


GLOBAL_DEFAULTS = {"out": None, "format": None, "seed": 0, "verbose": False}

COMMANDS = {
    "solve1d": cmd_solve1d,
    "radial": cmd_radial,
    "grid": cmd_grid,
    "sweep": cmd_sweep,
    "rearrange": cmd_rearrange,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

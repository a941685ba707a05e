"""Command-line interface.

Every command except ``bound`` writes a JSON report (sorted keys, floats
rounded to 12 significant digits) to stdout or ``--out``.  Exit codes:
0 pass, 1 fail, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .ags import (
    TARGETS,
    AgsError,
    Pi1State,
    algebraic_constraint_residual,
    parameter_bound,
    pi1_residual,
    unknowns_class,
)
from .cauchy import CauchyError, PathSpec, default_loop, integrate_along, loop_defect, pack, unpack
from .chart import ChartError, ChartSpec, eval_array, load_chart
from .curves import CurveError, random_seeds, verify_mapping
from .expr import EvaluationError, ExprError, eval_field, parse_expr
from .geometry import (
    CURVATURE_CONVENTION,
    RICCI_CONVENTION,
    ConnectionField,
    GeometryError,
    bianchi_residual,
    check_generalized_ricci_symmetric,
    curvature,
)

SIG_DIGITS = 12
BRACKETS = "(...) cyclic sum without coefficient; [ab] = t_ab - t_ba; |..| excluded"


class InputError(ValueError):
    """Bad command-line input; reported with exit code 2."""


# ---------------------------------------------------------------------------
# report formatting
# ---------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return str(v)
        v = float(f"{v:.{SIG_DIGITS}g}")
        return 0.0 if v == 0 else v
    return obj


def render(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def components(arr: np.ndarray, eps: float = 0.0) -> dict[str, float]:
    """Nonzero components keyed by 1-based comma separated indices."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 0:
        return {"": float(arr)}
    out = {}
    for idx, v in np.ndenumerate(arr):
        if abs(v) > eps:
            out[",".join(str(i + 1) for i in idx)] = float(v)
    return out


def _environment(args, **extra) -> dict:
    env = {
        "version": __version__,
        "curvature_convention": CURVATURE_CONVENTION,
        "ricci_convention": RICCI_CONVENTION,
        "brackets": BRACKETS,
        "index_base": 1,
        "tol": args.tol,
        "seed": args.seed,
        "steps": args.steps,
        "chart": Path(args.chart).name if getattr(args, "chart", None) else None,
    }
    env.update(extra)
    return env


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------

def _chart(args) -> ChartSpec:
    if not args.chart:
        raise InputError("--chart: a chart file is required")
    return load_chart(args.chart)


def _parse_point(text: str, n: int, what: str) -> np.ndarray:
    try:
        vals = [eval_field(parse_expr(p.strip()), ()) for p in text.split(",")]
    except (ExprError, EvaluationError, ValueError, IndexError) as exc:
        raise InputError(f"{what}: cannot read point {text!r}: {exc}") from None
    if len(vals) != n:
        raise InputError(f"{what}: point {text!r} needs {n} coordinates")
    return np.array(vals)


def _points(args, chart: ChartSpec) -> list[np.ndarray]:
    if args.at:
        pts = [_parse_point(p, chart.dim, "--at") for p in args.at]
        for k, p in enumerate(pts, start=1):
            if not chart.contains(p):
                raise InputError(f"--at: point {k} lies outside the chart domain")
        return pts
    return list(chart.sample_points(args.points, seed=args.seed))


def _parse_path(text: str, n: int, steps: int | None) -> PathSpec:
    pts = [_parse_point(p, n, "--path") for p in text.split(";") if p.strip()]
    if len(pts) < 2:
        raise InputError("--path: need at least two waypoints separated by ';'")
    return PathSpec(tuple(map(tuple, pts)), steps)


def load_init_state(path: str, n: int, target: str | None = None):
    """Read an initial-state file; returns ``(unknowns, point or None)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"--init: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"--init: invalid JSON at line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise InputError("--init: expected a JSON object")
    tgt = target or doc.get("target")
    if tgt not in TARGETS:
        raise InputError(f"--init: target must be one of {', '.join(TARGETS)}, got {tgt!r}")
    if doc.get("target") not in (None, tgt):
        raise InputError(f"--init: file is for target {doc['target']!r}, command asked for {tgt!r}")
    if int(doc.get("dimension", n)) != n:
        raise InputError(f"--init: dimension {doc.get('dimension')} does not match the chart ({n})")
    point = doc.get("point")
    point = None if point is None else np.asarray(point, dtype=float)
    at = point if point is not None else np.zeros(n)
    cls = unknowns_class(tgt)
    comps = doc.get("components", {})
    if not isinstance(comps, dict):
        raise InputError("--init: 'components' must be an object")
    unknown = set(comps) - set(cls.SLOTS)
    if unknown:
        raise InputError(f"--init: unknown components {sorted(unknown)}; expected {list(cls.SLOTS)}")
    base = cls.trivial(n)
    values = {}
    for name, val in cls.SLOTS.items():
        entries = comps.get(name)
        if entries is None:
            values[name] = getattr(base, name)
            continue
        if not val:
            try:
                values[name] = eval_field(parse_expr(str(entries)), at)
            except (ExprError, EvaluationError, IndexError) as exc:
                raise InputError(f"--init: components.{name}: {exc}") from None
            continue
        arr = np.zeros((n,) * len(val))  # a given metric replaces the identity entirely
        if not isinstance(entries, dict):
            raise InputError(f"--init: components.{name} must map index keys to expressions")
        for key, text in entries.items():
            try:
                idx = tuple(int(p) - 1 for p in str(key).split(","))
            except ValueError:
                raise InputError(f"--init: components.{name}: bad key {key!r}") from None
            if len(idx) != len(val) or any(not 0 <= i < n for i in idx):
                raise InputError(f"--init: components.{name}: key {key!r} out of range for n={n}")
            try:
                arr[idx] = eval_field(parse_expr(str(text)), at)
            except (ExprError, EvaluationError, IndexError) as exc:
                raise InputError(f"--init: components.{name}[{key}]: {exc}") from None
        values[name] = arr
    return cls(**values), point


def _state_report(u) -> dict:
    return {name: components(getattr(u, name)) for name in type(u).SLOTS}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_curvature(args) -> tuple[dict, bool]:
    chart = _chart(args)
    conn = ConnectionField.from_chart(chart)
    rows, worst_b, worst_a = [], 0.0, 0.0
    for x in _points(args, chart):
        r = curvature(conn, x)
        ric = np.einsum("aija->ij", r.data)
        b = bianchi_residual(r)
        a = float(np.max(np.abs(r.data + np.swapaxes(r.data, 2, 3))))
        worst_b, worst_a = max(worst_b, b), max(worst_a, a)
        rows.append({"x": x, "curvature": components(r.data), "ricci": components(ric),
                     "bianchi_residual": b, "antisymmetry_residual": a})
    ok = worst_b < args.tol and worst_a == 0.0
    return {
        "command": "curvature",
        "points": rows,
        "residuals": {"bianchi": worst_b, "antisymmetry": worst_a},
        "pass": ok,
        "environment": _environment(args),
    }, ok


def cmd_check_grs(args) -> tuple[dict, bool]:
    chart = _chart(args)
    conn = ConnectionField.from_chart(chart)
    rep = check_generalized_ricci_symmetric(conn, _points(args, chart), tol=args.tol)
    return {
        "command": "check-grs",
        "residuals": {"ricci_symmetry": rep.residual},
        "worst_point": rep.worst_point,
        "per_point": rep.per_point,
        "pass": rep.passed,
        "environment": _environment(args, condition="Ric_ij,k + Ric_kj,i = 0"),
    }, rep.passed


def cmd_check_pi1(args) -> tuple[dict, bool]:
    chart = _chart(args)
    if "P" not in chart.fields:
        raise InputError("--chart: check-pi1 needs a field 'P' in the chart's 'fields'")
    conn = ConnectionField.from_chart(chart)
    P = chart.fields["P"].components
    a = chart.fields["a"].components if "a" in chart.fields else None
    per, worst, where = [], 0.0, None
    for x in _points(args, chart):
        aval = eval_array(a, x) if a is not None else np.zeros((chart.dim,) * 2)
        res = pi1_residual(Pi1State(x, eval_array(P, x), aval), conn, P).data
        v = float(np.max(np.abs(res)))
        per.append(v)
        if where is None or v > worst:
            worst, where = v, x
    ok = worst < args.tol
    return {
        "command": "check-pi1",
        "residuals": {"pi1": worst},
        "worst_point": where,
        "per_point": per,
        "pass": ok,
        "environment": _environment(args),
    }, ok


def _integration_setup(args):
    chart = _chart(args)
    if not args.init:
        raise InputError("--init: an initial-state file is required")
    u, point = load_init_state(args.init, chart.dim, args.target)
    return chart, ConnectionField.from_chart(chart), u, point


def _check_start(point, path: PathSpec) -> None:
    if point is not None and np.max(np.abs(np.subtract(point, path.waypoints[0]))) > 1e-12:
        raise InputError("--init: 'point' must coincide with the first waypoint")


def cmd_integrate(args) -> tuple[dict, bool]:
    chart, conn, u, point = _integration_setup(args)
    if not args.path:
        raise InputError("--path: waypoints are required, e.g. '0,0;0.5,0;0.5,0.5'")
    path = _parse_path(args.path, chart.dim, args.steps)
    _check_start(point, path)
    report = {"command": "integrate", "target": u.target, "path": path.waypoints,
              "initial_constraints": algebraic_constraint_residual(u)}
    try:
        res = integrate_along(path, pack(u), conn, chart=chart)
    except CauchyError as exc:
        report.update({"pass": False, "error": str(exc), "environment": _environment(args)})
        return report, False
    final = unpack(res.final)
    report.update({
        "final_state": _state_report(final),
        "residuals": {"max_constraint_drift": res.max_drift, "max_constraint_after_projection": res.max_constraint},
        "final_constraints": algebraic_constraint_residual(final),
        "det_g_trace": res.det_trace,
        "pass": True,
        "environment": _environment(args, steps_per_segment=path.steps),
    })
    return report, True


def cmd_loop_check(args) -> tuple[dict, bool]:
    chart, conn, u, point = _integration_setup(args)
    loop = _parse_path(args.loop, chart.dim, args.steps) if args.loop else default_loop(chart, args.steps)
    if not loop.is_closed():
        raise InputError("--loop: the last waypoint must equal the first")
    _check_start(point, loop)
    report = {"command": "loop-check", "target": u.target, "loop": loop.waypoints}
    try:
        d = loop_defect(loop, pack(u), conn, chart=chart)
    except CauchyError as exc:
        report.update({"pass": False, "error": str(exc), "environment": _environment(args)})
        return report, False
    ok = d < args.tol
    report.update({"residuals": {"loop_defect": d}, "pass": ok,
                   "environment": _environment(args, steps_per_segment=loop.steps)})
    return report, ok


def cmd_geodesic_image(args) -> tuple[dict, bool]:
    chart = _chart(args)
    conn = ConnectionField.from_chart(chart)
    if args.bar_chart:
        bar = load_chart(args.bar_chart)
        if bar.dim != chart.dim:
            raise InputError("--bar-chart: dimension differs from --chart")
        bar_conn = ConnectionField.from_chart(bar)
    elif "P" in chart.fields:
        bar_conn = conn.plus(chart.fields["P"].components)
    else:
        raise InputError("geodesic-image needs --bar-chart or a field 'P' in the chart")
    seeds = random_seeds(chart, args.seeds, seed=args.seed, speed=args.speed)
    steps = args.steps or 200
    rep = verify_mapping(conn, bar_conn, seeds, tol=args.tol, t_end=args.t_end, steps=steps, chart=chart)
    out = rep.as_dict()
    out.update({"command": "geodesic-image", "residuals": {"span": rep.residual},
                "environment": _environment(args, t_end=args.t_end, speed=args.speed, curve_steps=steps)})
    return out, rep.passed


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

DEFAULT_TOL = {
    "curvature": 1e-10,
    "check-grs": 1e-9,
    "check-pi1": 1e-9,
    "integrate": 1e-8,
    "loop-check": 1e-8,
    "geodesic-image": 1e-6,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--chart", help="chart JSON file")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--tol", type=float, help="pass/fail tolerance")
    common.add_argument("--steps", type=int, help="RK4 steps per segment (integration) or per curve")
    common.add_argument("--seed", type=int, default=0, help="seed for random points")

    p = argparse.ArgumentParser(prog="agmap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"agmap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def pts(sp):
        sp.add_argument("--points", type=int, default=10, help="number of random points")
        sp.add_argument("--at", action="append", help="explicit point 'x1,x2,...' (repeatable)")

    sp = sub.add_parser("curvature", parents=[common], help="curvature and Ricci tables")
    pts(sp)
    sp.set_defaults(func=cmd_curvature)
    sp = sub.add_parser("check-grs", parents=[common], help="generalized Ricci-symmetry test")
    pts(sp)
    sp.set_defaults(func=cmd_check_grs)
    sp = sub.add_parser("check-pi1", parents=[common], help="canonical pi_1 residual of chart fields P, a")
    pts(sp)
    sp.set_defaults(func=cmd_check_pi1)
    for name, func in (("integrate", cmd_integrate), ("loop-check", cmd_loop_check)):
        sp = sub.add_parser(name, parents=[common], help=f"{name} for the closed system")
        sp.add_argument("--target", choices=TARGETS)
        sp.add_argument("--init", help="initial-state JSON file")
        if name == "integrate":
            sp.add_argument("--path", help="waypoints 'x1,x2;y1,y2;...'")
        else:
            sp.add_argument("--loop", help="closed waypoint list (default: square of side 0.5 at the domain centre)")
        sp.set_defaults(func=func)
    sp = sub.add_parser("geodesic-image", parents=[common], help="almost-geodesy of geodesic images")
    sp.add_argument("--bar-chart", help="chart with the target connection (default: chart connection + field P)")
    sp.add_argument("--seeds", type=int, default=10)
    sp.add_argument("--t-end", type=float, default=1.0)
    sp.add_argument("--speed", type=float, default=0.5)
    sp.set_defaults(func=cmd_geodesic_image)
    sp = sub.add_parser("bound", help="parameter-count bound")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--target", choices=TARGETS, required=True)
    sp.set_defaults(func=None)
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        if args.command == "bound":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                value = parameter_bound(args.n, args.target)
            for w in caught:
                print(f"agmap: warning: {w.message}", file=sys.stderr)
            print(value)
            return 0
        if args.tol is None:
            args.tol = DEFAULT_TOL[args.command]
        if args.tol <= 0:
            raise InputError("--tol: must be positive")
        if args.steps is not None and args.steps < 1:
            raise InputError("--steps: must be positive")
        if getattr(args, "points", 1) < 1:
            raise InputError("--points: must be positive")
        report, ok = args.func(args)
    except (InputError, ChartError, AgsError, GeometryError, CurveError, ExprError, ValueError) as exc:
        print(f"agmap: error: {exc}", file=sys.stderr)
        return 2
    _emit(render(report), args.out)
    return 0 if ok else 1


__all__ = ["build_parser", "load_init_state", "main", "render"]

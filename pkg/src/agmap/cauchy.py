"""Packing, path integration and loop defects for the closed systems.

Pack order (raw, uncompressed slots):

* Riemannian target: ``g, P, a, a3, K, Rbar, Rbar1``
  (``n^2 + n^3 + n^2 + n^3 + 1 + n^4 + n^5`` entries)
* GRS target: ``P, a, Rbar, Rbar1`` (``n^3 + n^2 + n^4 + n^5``)

Each block is the C-order ravel of the array whose index order is described
in :mod:`agmap.ags.core`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ags import (
    GRS,
    RIEMANNIAN,
    AgsError,
    algebraic_constraint_residual,
    closure_rhs,
    constraint_violation,
    project,
    unknowns_class,
)
from .ags import integrability_residual as _integrability_residual
from .chart import ChartSpec
from .geometry import ConnectionField
from .tensor import UPPER

DRIFT_TOL = 1e-6
DET_TOL = 1e-9
DEFAULT_DIVISIONS = 64
DEFAULT_LOOP_SIDE = 0.5


class CauchyError(RuntimeError):
    """Integration aborted (constraint drift, degenerate metric, domain exit)."""


# ---------------------------------------------------------------------------
# packing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PackedState:
    vector: np.ndarray
    dim: int
    target: str

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        if v.ndim != 1 or v.size != state_length(self.dim, self.target):
            raise AgsError(
                f"packed {self.target} state for n={self.dim} needs length "
                f"{state_length(self.dim, self.target)}, got {v.size}"
            )
        object.__setattr__(self, "vector", v)


def _layout(n: int, target: str) -> list[tuple[str, tuple[int, ...]]]:
    slots = unknowns_class(target).SLOTS
    return [(name, (n,) * len(val)) for name, val in slots.items()]


def state_length(n: int, target: str) -> int:
    return sum(int(np.prod(shape)) for _, shape in _layout(n, target))


def pack(u) -> PackedState:
    parts = [np.ravel(np.asarray(getattr(u, name), dtype=float)) for name, _ in _layout(u.dim, u.target)]
    return PackedState(np.concatenate(parts), u.dim, u.target)


def unpack(ps: PackedState):
    v = ps.vector
    out, pos = {}, 0
    for name, shape in _layout(ps.dim, ps.target):
        size = int(np.prod(shape))
        out[name] = v[pos:pos + size].reshape(shape).copy()
        pos += size
    if "K" in out:
        out["K"] = float(out["K"])
    return unknowns_class(ps.target)(**out)


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------

def _to_partial(value: np.ndarray, cov: np.ndarray, gamma: np.ndarray, valence: str) -> np.ndarray:
    """``d_k u`` from ``u_,k`` (trailing axis) by undoing the connection terms."""
    rank = len(valence)
    if rank == 0:
        return cov
    letters = "bcdefghijlmnopq"[:rank]
    out = letters + "k"
    res = cov.copy()
    for s, kind in enumerate(valence):
        sub = letters[:s] + "a" + letters[s + 1:]
        if kind == UPPER:
            res -= np.einsum(f"{letters[s]}ka,{sub}->{out}", gamma, value)
        else:
            res += np.einsum(f"ak{letters[s]},{sub}->{out}", gamma, value)
    return res


def partial_derivatives(u, conn: ConnectionField, x, **kw) -> dict[str, np.ndarray]:
    """Coordinate derivatives ``d_k`` of every unknown (derivative axis last)."""
    cov = closure_rhs(u, conn, x, **kw)
    gamma = conn.coefficients(x)
    out = {}
    for name, val in type(u).SLOTS.items():
        out[name] = _to_partial(np.asarray(getattr(u, name), dtype=float), cov[name], gamma, val)
    return out


def directional_rhs(ps: PackedState, x, conn: ConnectionField, direction, **kw) -> np.ndarray:
    """Packed derivative of the state along the tangent ``direction``."""
    u = unpack(ps)
    d = partial_derivatives(u, conn, x, **kw)
    direction = np.asarray(direction, dtype=float)
    parts = [np.ravel(d[name] @ direction) for name, _ in _layout(ps.dim, ps.target)]
    return np.concatenate(parts)


def rhs(ps: PackedState, x, conn: ConnectionField, direction: int, **kw) -> np.ndarray:
    """Packed ``d_k`` of the state for the coordinate index ``direction`` (0-based)."""
    e = np.zeros(ps.dim)
    e[direction] = 1.0
    return directional_rhs(ps, x, conn, e, **kw)


# ---------------------------------------------------------------------------
# RK4
# ---------------------------------------------------------------------------

def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4(f, y0, t0: float, t1: float, steps: int, post=None) -> np.ndarray:
    """Fixed-step classic RK4 from ``t0`` to ``t1``; ``post`` is applied after each step."""
    if steps < 1:
        raise ValueError("steps must be positive")
    y = np.asarray(y0, dtype=float)
    h = (t1 - t0) / steps
    for i in range(steps):
        y = rk4_step(f, t0 + i * h, y, h)
        if post is not None:
            y = post(i, t0 + (i + 1) * h, y)
    return y


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathSpec:
    waypoints: tuple[tuple[float, ...], ...]
    steps_per_segment: int | None = None  # None means DEFAULT_DIVISIONS

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.waypoints)
        if len(pts) < 2:
            raise ValueError("a path needs at least two waypoints")
        if len({len(p) for p in pts}) != 1:
            raise ValueError("waypoints have inconsistent dimensions")
        if self.steps_per_segment is not None and int(self.steps_per_segment) < 1:
            raise ValueError("steps_per_segment must be positive")
        object.__setattr__(self, "waypoints", pts)

    @property
    def segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        w = [np.array(p) for p in self.waypoints]
        return list(zip(w[:-1], w[1:]))

    @property
    def steps(self) -> int:
        return int(self.steps_per_segment or DEFAULT_DIVISIONS)

    def is_closed(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(np.subtract(self.waypoints[0], self.waypoints[-1]))) <= tol)

    def check_domain(self, chart: ChartSpec) -> None:
        for k, p in enumerate(self.waypoints, start=1):
            if not chart.contains(p):
                raise ValueError(f"waypoint {k} {p} lies outside the chart domain")


def square_loop(center, side: float, axes: tuple[int, int] = (0, 1), steps: int | None = None) -> PathSpec:
    """Axis-aligned square loop in the coordinate plane ``axes`` (counter-clockwise)."""
    c = np.asarray(center, dtype=float)
    i, j = axes
    offs = [(-1, -1), (1, -1), (1, 1), (-1, 1), (-1, -1)]
    pts = []
    for a, b in offs:
        p = c.copy()
        p[i] += a * side / 2
        p[j] += b * side / 2
        pts.append(tuple(p))
    return PathSpec(tuple(pts), steps)


def default_loop(chart: ChartSpec, steps: int | None = None) -> PathSpec:
    return square_loop(chart.center(), DEFAULT_LOOP_SIDE, steps=steps)


def integrate_field(field_fn, path: PathSpec, y0: np.ndarray, post=None) -> np.ndarray:
    """Integrate ``y`` along the straight segments of ``path``.

    ``field_fn(x, y, d)`` must return the derivative of ``y`` along the
    tangent ``d`` at ``x``.  Each segment ``p -> q`` is parametrised as
    ``x = p + s (q - p)``, ``s`` in [0, 1], and stepped with ``path.steps``
    RK4 steps.  ``post(segment, step, x, y)`` may replace ``y`` after each step.
    """
    y = np.asarray(y0, dtype=float)
    for seg, (p, q) in enumerate(path.segments):
        d = q - p

        def f(s, yy, p=p, d=d):
            return field_fn(p + s * d, yy, d)

        hook = None
        if post is not None:
            def hook(i, s, yy, seg=seg, p=p, d=d):
                return post(seg, i, p + s * d, yy)

        y = rk4(f, y, 0.0, 1.0, path.steps, hook)
    return y


@dataclass
class IntegrationResult:
    final: PackedState
    max_drift: float
    min_det: float | None
    constraint_trace: list[float] = field(default_factory=list)
    det_trace: list[float] = field(default_factory=list)
    max_constraint: float = 0.0


def integrate_along(
    path: PathSpec,
    v0: PackedState,
    conn: ConnectionField,
    *,
    chart: ChartSpec | None = None,
    drift_tol: float = DRIFT_TOL,
    constraint_tol: float = 1e-8,
    **kw,
) -> IntegrationResult:
    """Propagate ``v0`` along ``path`` with RK4 and constraint projection after each step."""
    if chart is not None:
        path.check_domain(chart)
    u0 = unpack(v0)
    if constraint_violation(u0) > constraint_tol:
        raise CauchyError(
            f"initial state violates the algebraic constraints: max residual "
            f"{constraint_violation(u0):.3g} > {constraint_tol:g}"
        )
    n, target = v0.dim, v0.target
    res = IntegrationResult(v0, 0.0, None)
    if target == RIEMANNIAN:
        res.min_det = abs(float(np.linalg.det(u0.g)))

    def fn(x, y, d):
        return directional_rhs(PackedState(y, n, target), x, conn, d, tol=None, **kw)

    def post(seg, i, x, y):
        u = unpack(PackedState(y, n, target))
        drift = constraint_violation(u)
        res.max_drift = max(res.max_drift, drift)
        if drift > drift_tol:
            raise CauchyError(
                f"constraint drift {drift:.3g} > {drift_tol:g} at segment {seg + 1}, step {i + 1}, "
                f"x = ({', '.join(f'{c:.6g}' for c in x)})"
            )
        u = project(u)
        cres = constraint_violation(u)
        res.constraint_trace.append(cres)
        res.max_constraint = max(res.max_constraint, cres)
        if target == RIEMANNIAN:
            det = abs(float(np.linalg.det(u.g)))
            res.det_trace.append(det)
            res.min_det = min(res.min_det, det)
            if det <= DET_TOL:
                raise CauchyError(
                    f"target metric degenerates (|det g| = {det:.3g}) at segment {seg + 1}, step {i + 1}"
                )
        return pack(u).vector

    y = integrate_field(fn, path, v0.vector, post)
    res.final = PackedState(y, n, target)
    return res


def loop_defect(loop: PathSpec, v0: PackedState, conn: ConnectionField, **kw) -> float:
    """``max |v(end) - v0|`` after integrating around the closed ``loop``."""
    if not loop.is_closed():
        raise ValueError("loop does not close on its start point")
    final = integrate_along(loop, v0, conn, **kw).final
    return float(np.max(np.abs(final.vector - v0.vector)))


def integrability_residual(u, conn: ConnectionField, x, **kw) -> np.ndarray:
    """Pointwise integrability residual of the fundamental system (see :mod:`agmap.ags.closure`)."""
    return _integrability_residual(u, conn, x, **kw)


def trivial_state(n: int, target: str) -> PackedState:
    return pack(unknowns_class(target).trivial(n))


__all__ = [
    "CauchyError", "DEFAULT_DIVISIONS", "DRIFT_TOL", "GRS", "IntegrationResult", "PackedState",
    "PathSpec", "RIEMANNIAN", "algebraic_constraint_residual", "default_loop", "directional_rhs",
    "integrability_residual", "integrate_along", "integrate_field", "loop_defect", "pack",
    "partial_derivatives", "rhs", "rk4", "rk4_step", "square_loop", "state_length", "trivial_state",
    "unpack",
]

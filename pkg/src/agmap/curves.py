"""Geodesics of a connection and the almost-geodesy test for sampled curves.

A curve with tangent ``xi`` is almost geodesic for a connection when
``xi2`` lies in ``span(xi, xi1)``, where ``xi1 = nabla_xi xi`` and
``xi2 = nabla_xi xi1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cauchy import rk4_step
from .chart import ChartSpec
from .geometry import ConnectionField

RANK_TOL = 1e-10
EDGE_SAMPLES = 2


class CurveError(ValueError):
    pass


@dataclass(frozen=True)
class CurveSample:
    """Uniformly spaced samples ``(t, x, xi)``; ``accel`` holds ``d xi/dt`` when known exactly."""

    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    accel: np.ndarray | None = None

    def __post_init__(self):
        if len(self.t) < 3:
            raise CurveError("a curve sample needs at least 3 points")
        if np.any(np.linalg.norm(self.xi, axis=1) == 0.0):
            raise CurveError("tangent vanishes at a sample (curve is not regular)")

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])


def integrate_geodesic(
    conn: ConnectionField,
    x0,
    v0,
    t_end: float,
    steps: int,
    chart: ChartSpec | None = None,
) -> CurveSample:
    """RK4 solution of ``x'' + G(x', x') = 0`` in the affine parameter."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        raise CurveError("initial velocity is zero")
    if steps < 2:
        raise CurveError("steps must be at least 2")
    n = len(x0)

    def accel(x, v):
        return -np.einsum("hij,i,j->h", conn.coefficients(x), v, v)

    def f(_t, y):
        x, v = y[:n], y[n:]
        return np.concatenate([v, accel(x, v)])

    h = t_end / steps
    y = np.concatenate([x0, v0])
    xs, vs, acs = [x0], [v0], [accel(x0, v0)]
    for i in range(steps):
        y = rk4_step(f, i * h, y, h)
        x, v = y[:n], y[n:]
        if chart is not None and not chart.contains(x):
            raise CurveError(f"geodesic left the chart domain at t = {(i + 1) * h:.6g}")
        if not np.all(np.isfinite(y)):
            raise CurveError(f"geodesic blew up at t = {(i + 1) * h:.6g}")
        xs.append(x.copy())
        vs.append(v.copy())
        acs.append(accel(x, v))
    t = np.linspace(0.0, t_end, steps + 1)
    return CurveSample(t, np.array(xs), np.array(vs), np.array(acs))


def _ddt(values: np.ndarray, h: float) -> np.ndarray:
    """Second-order finite difference along axis 0 (one-sided at the ends)."""
    return np.gradient(values, h, axis=0, edge_order=2)


def xi_chain(sample: CurveSample, bar_conn: ConnectionField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(xi, xi1, xi2)`` at every sample, derivatives taken with ``bar_conn``."""
    xi = sample.xi
    gam = np.array([bar_conn.coefficients(x) for x in sample.x])
    dxi = sample.accel if sample.accel is not None else _ddt(xi, sample.h)
    xi1 = dxi + np.einsum("thij,ti,tj->th", gam, xi, xi)
    xi2 = _ddt(xi1, sample.h) + np.einsum("thij,ti,tj->th", gam, xi, xi1)
    return xi, xi1, xi2


def span_test(xi, xi1, xi2, tol: float) -> tuple[bool, float]:
    """Relative distance from ``xi2`` to ``span(xi, xi1)``.

    Directions with singular value below ``RANK_TOL`` times the largest are
    dropped, so a dependent ``xi1`` degrades the span to ``span(xi)``.
    """
    xi, xi1, xi2 = (np.asarray(v, dtype=float) for v in (xi, xi1, xi2))
    if not np.any(xi):
        raise CurveError("span test needs a nonzero tangent")
    norm2 = float(np.linalg.norm(xi2))
    if norm2 == 0.0:
        return True, 0.0
    A = np.column_stack([xi, xi1])
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    basis = U[:, s > RANK_TOL * s[0]]
    resid = xi2 - basis @ (basis.T @ xi2)
    r = float(np.linalg.norm(resid)) / norm2
    return r < tol, r


@dataclass
class SeedResult:
    x0: tuple[float, ...]
    v0: tuple[float, ...]
    residual: float
    passed: bool


@dataclass
class MappingReport:
    tol: float
    seeds: list[SeedResult] = field(default_factory=list)

    @property
    def residual(self) -> float:
        return max((s.residual for s in self.seeds), default=0.0)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.seeds)

    def as_dict(self) -> dict:
        return {
            "tol": self.tol,
            "residual": self.residual,
            "pass": self.passed,
            "seeds": [
                {"x0": list(s.x0), "v0": list(s.v0), "residual": s.residual, "pass": s.passed}
                for s in self.seeds
            ],
        }


def verify_mapping(
    conn: ConnectionField,
    bar_conn: ConnectionField,
    seeds,
    tol: float = 1e-6,
    t_end: float = 1.0,
    steps: int = 200,
    chart: ChartSpec | None = None,
) -> MappingReport:
    """Check that geodesics of ``conn`` are almost geodesic for ``bar_conn``.

    Each seed ``(x0, v0)`` is integrated for ``t_end``; the span test runs
    at interior samples (the first and last two are skipped).
    """
    report = MappingReport(tol)
    for x0, v0 in seeds:
        curve = integrate_geodesic(conn, x0, v0, t_end, steps, chart)
        xi, xi1, xi2 = xi_chain(curve, bar_conn)
        worst = 0.0
        for k in range(EDGE_SAMPLES, len(curve.t) - EDGE_SAMPLES):
            worst = max(worst, span_test(xi[k], xi1[k], xi2[k], tol)[1])
        report.seeds.append(
            SeedResult(tuple(map(float, x0)), tuple(map(float, v0)), worst, worst < tol)
        )
    return report


def random_seeds(chart: ChartSpec, count: int, seed: int = 0, speed: float = 0.5):
    """Seeds inside the middle of the domain with random unit directions scaled by ``speed``."""
    rng = np.random.default_rng(seed)
    pts = chart.sample_points(count, seed=seed, margin=0.35)
    out = []
    for x in pts:
        v = rng.normal(size=chart.dim)
        out.append((x, speed * v / np.linalg.norm(v)))
    return out

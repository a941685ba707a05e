"""Connections, metrics, curvature and covariant derivatives on a chart.

Curvature sign convention (used everywhere in the package)::

    R^h_ijk = d_j G^h_ik - d_k G^h_ij + G^h_ja G^a_ik - G^h_ka G^a_ij

so that ``R^h_i(jk) = 0``.  The Ricci tensor contracts the upper index with
the last lower one, ``Ric_ij = R^a_ija``.  With these choices the unit
sphere has ``R^1_212 = sin^2(x1)`` and ``Ric = -g``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import jet as J
from .chart import DET_TOL, ChartSpec, eval_array
from .expr import ONE, ZERO, Expr, diff_field, eval_field
from .tensor import LOWER, UPPER, Tensor

CURVATURE_CONVENTION = "R^h_ijk = d_j G^h_ik - d_k G^h_ij + G^h_ja G^a_ik - G^h_ka G^a_ij"
RICCI_CONVENTION = "Ric_ij = R^a_ija"


class GeometryError(ValueError):
    pass


class _ExprArray:
    """Object array of Exprs with cached partial derivatives of any order."""

    def __init__(self, exprs: np.ndarray):
        self.exprs = exprs
        self._cache: dict[tuple[int, ...], np.ndarray] = {(): exprs}

    @property
    def dim(self) -> int:
        return self.exprs.shape[0]

    def partial(self, ks: Sequence[int]) -> np.ndarray:
        key = tuple(sorted(ks))
        if key not in self._cache:
            base = self.partial(key[:-1])
            out = np.empty(base.shape, dtype=object)
            for idx, e in np.ndenumerate(base):
                out[idx] = diff_field(e, key[-1])
            self._cache[key] = out
        return self._cache[key]

    def partial_jet(self, x, order: int) -> J.Jet:
        """Jet of partial derivatives ``d^k F`` at ``x`` up to ``order``."""
        n = self.dim
        coeffs = []
        for k in range(order + 1):
            c = np.empty(self.exprs.shape + (n,) * k)
            for ds in itertools.product(range(n), repeat=k):
                c[(Ellipsis,) + ds] = eval_array(self.partial(ds), x)
            coeffs.append(c)
        return J.Jet(coeffs)


class ConnectionField:
    """Torsion-free connection coefficients ``G^h_ij`` given as Exprs."""

    def __init__(self, coefficients: np.ndarray, name: str = ""):
        coefficients = np.asarray(coefficients, dtype=object)
        n = coefficients.shape[0]
        if coefficients.shape != (n, n, n):
            raise GeometryError(f"connection needs shape (n, n, n), got {coefficients.shape}")
        self.dim = n
        self.name = name
        self._g = _ExprArray(coefficients)

    @classmethod
    def from_chart(cls, chart: ChartSpec) -> "ConnectionField":
        return cls(chart.connection, name="chart")

    @classmethod
    def flat(cls, n: int) -> "ConnectionField":
        arr = np.empty((n, n, n), dtype=object)
        arr.fill(ZERO)
        return cls(arr, name="flat")

    @property
    def exprs(self) -> np.ndarray:
        return self._g.exprs

    def coefficients(self, x) -> np.ndarray:
        return eval_array(self._g.exprs, x)

    def partial_jet(self, x, order: int) -> J.Jet:
        return self._g.partial_jet(x, order)

    def plus(self, deformation: np.ndarray, name: str = "") -> "ConnectionField":
        """Connection ``G + P`` for an Expr (or numeric) deformation array."""
        arr = np.empty((self.dim,) * 3, dtype=object)
        for idx, e in np.ndenumerate(self.exprs):
            p = deformation[idx]
            arr[idx] = e + (p if isinstance(p, Expr) else float(p))
        return ConnectionField(arr, name=name)


class MetricField:
    """Metric components ``g_ij`` as Exprs; the dual is computed on evaluation."""

    def __init__(self, components: np.ndarray):
        components = np.asarray(components, dtype=object)
        n = components.shape[0]
        if components.shape != (n, n):
            raise GeometryError(f"metric needs shape (n, n), got {components.shape}")
        self.dim = n
        self._g = _ExprArray(components)

    @classmethod
    def from_chart(cls, chart: ChartSpec) -> "MetricField":
        if chart.metric is None:
            raise GeometryError("chart has no metric")
        return cls(chart.metric)

    @property
    def exprs(self) -> np.ndarray:
        return self._g.exprs

    def at(self, x) -> np.ndarray:
        g = eval_array(self._g.exprs, x)
        det = np.linalg.det(g)
        if abs(det) <= DET_TOL:
            raise GeometryError(f"degenerate metric at {tuple(np.round(x, 6))}: |det g| = {abs(det):.3g}")
        return g

    def inverse(self, x) -> np.ndarray:
        return np.linalg.inv(self.at(x))

    def partial_jet(self, x, order: int) -> J.Jet:
        return self._g.partial_jet(x, order)


# ---------------------------------------------------------------------------
# Levi-Civita
# ---------------------------------------------------------------------------

def christoffel(metric: MetricField, x) -> Tensor:
    """Levi-Civita coefficients ``G^h_ij`` of ``metric`` at ``x``."""
    g = metric.at(x)
    ginv = np.linalg.inv(g)
    dg = metric.partial_jet(x, 1).coeffs[1]  # dg[l, j, i] = d_i g_lj
    # first kind: G_lij = (d_i g_lj + d_j g_li - d_l g_ij) / 2
    first = 0.5 * (
        np.einsum("lji->lij", dg) + np.einsum("lij->lij", dg) - np.einsum("ijl->lij", dg)
    )
    return Tensor(metric.dim, (UPPER, LOWER, LOWER), np.einsum("hl,lij->hij", ginv, first))


def _det_expr(m: list[list[Expr]]) -> Expr:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = ZERO
    for j in range(n):
        if m[0][j].is_zero():
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * _det_expr(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def levi_civita_exprs(metric_exprs: np.ndarray) -> np.ndarray:
    """Symbolic Levi-Civita coefficients (adjugate inverse; fine for small n)."""
    n = metric_exprs.shape[0]
    m = [[metric_exprs[i, j] for j in range(n)] for i in range(n)]
    det = _det_expr(m)
    inv = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            minor = [row[:i] + row[i + 1:] for k, row in enumerate(m) if k != j]
            cof = _det_expr(minor) if n > 1 else ONE
            cof = cof if (i + j) % 2 == 0 else -cof
            inv[i, j] = cof / det if not cof.is_zero() else ZERO
    out = np.empty((n, n, n), dtype=object)
    for h, i, j in itertools.product(range(n), repeat=3):
        acc = ZERO
        for l in range(n):
            if inv[h, l].is_zero():
                continue
            s = diff_field(m[l][j], i) + diff_field(m[l][i], j) - diff_field(m[i][j], l)
            if not s.is_zero():
                acc = acc + inv[h, l] * s
        out[h, i, j] = acc * 0.5
    return out


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------

def curvature_partial(gamma: J.Jet) -> J.Jet:
    """Curvature from a partial-derivative jet of the connection coefficients.

    The result is a partial-derivative jet one order lower.  It is built as
    ``X - X`` with ``j, k`` swapped, so antisymmetry in the last pair is exact.
    """
    dg = gamma.D()  # dg[h, i, j, k] = d_k G^h_ij
    x = J.einsum("hikj->hijk", dg) + J.einsum("hja,aik->hijk", gamma, gamma)
    return x.alt(2, 3)


def covariant_step(field: J.Jet, gamma: J.Jet, valence: str) -> J.Jet:
    """Partial-derivative jet of ``field_,m`` given partial jets of field and connection."""
    rank = len(valence)
    letters = "abcdefghijklmnopqrstuv"[:rank]
    m, a = "z", "y"
    out = letters + m
    result = J.einsum(f"{letters}{m}->{out}", field.D())
    for s, kind in enumerate(valence):
        sub = letters[:s] + a + letters[s + 1:]
        if kind == UPPER:
            result = result + J.einsum(f"{letters[s]}{m}{a},{sub}->{out}", gamma, field)
        else:
            result = result - J.einsum(f"{a}{m}{letters[s]},{sub}->{out}", gamma, field)
    return result


def covariant_jet(field: J.Jet, gamma: J.Jet, valence: str, order: int) -> J.Jet:
    """Covariant jet (value, T_,m, T_,mp, ...) from partial jets of field and connection."""
    coeffs = [field.value]
    current, val = field, valence
    for _ in range(order):
        current = covariant_step(current, gamma, val)
        val = val + LOWER
        coeffs.append(current.value)
    return J.Jet(coeffs)


def curvature_jet(conn: ConnectionField, x, order: int) -> J.Jet:
    """Covariant jet of ``R^h_ijk`` at ``x``: (R, R_,l, R_,lm, ...)."""
    gamma = conn.partial_jet(x, order + 1)
    r = curvature_partial(gamma)
    return covariant_jet(r, gamma, "ulll", order)


def curvature(conn: ConnectionField, x) -> Tensor:
    gamma = conn.partial_jet(x, 1)
    return Tensor(conn.dim, "ulll", curvature_partial(gamma).value)


def ricci(conn: ConnectionField, x) -> Tensor:
    r = curvature(conn, x)
    return Tensor(conn.dim, "ll", np.einsum("aija->ij", r.data))


def ricci_jet(conn: ConnectionField, x, order: int) -> J.Jet:
    return J.trace(curvature_jet(conn, x, order), 0, 3)


def bianchi_residual(r: Tensor) -> float:
    """Max-norm of the first Bianchi cyclic sum ``R^h_(ijk)``."""
    from .tensor import cyc

    return float(np.max(np.abs(cyc(r.data, [1, 2, 3]))))


def covariant_derivative(
    field_exprs: np.ndarray, valence: str, conn: ConnectionField, x
) -> Tensor:
    """``T_,k`` of an Expr tensor field; the derivative slot is appended last."""
    valence = "".join(valence)
    f = _ExprArray(np.asarray(field_exprs, dtype=object)) if np.ndim(field_exprs) else None
    if f is None:
        e = field_exprs if isinstance(field_exprs, Expr) else np.asarray(field_exprs).item()
        data = np.array([eval_field(diff_field(e, k), x) for k in range(conn.dim)])
        return Tensor(conn.dim, (LOWER,), data)
    gamma = conn.partial_jet(x, 1)
    fj = f.partial_jet(x, 1)
    step = covariant_step(fj, gamma, valence)
    return Tensor(conn.dim, tuple(valence) + (LOWER,), step.value)


@dataclass
class GrsReport:
    residual: float
    passed: bool
    tol: float
    worst_point: tuple[float, ...] | None
    per_point: list[float]

    def as_dict(self) -> dict:
        return {
            "residual": self.residual,
            "pass": self.passed,
            "tol": self.tol,
            "worst_point": list(self.worst_point) if self.worst_point is not None else None,
            "per_point": list(self.per_point),
        }


def check_generalized_ricci_symmetric(
    conn: ConnectionField, points: Iterable[Sequence[float]], tol: float = 1e-9
) -> GrsReport:
    """Max over ``points`` of ``|Ric_ij,k + Ric_kj,i|``; passes when below ``tol``."""
    worst, where, per = 0.0, None, []
    for x in points:
        dric = ricci_jet(conn, x, 1).coeffs[1]  # dric[i, j, k] = Ric_ij,k
        res = float(np.max(np.abs(dric + np.einsum("kji->ijk", dric))))
        per.append(res)
        if where is None or res > worst:
            worst, where = res, tuple(float(v) for v in x)
    return GrsReport(worst, worst < tol, tol, where, per)

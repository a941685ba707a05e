"""States, the defining residual of a canonical pi_1 mapping, constraints and bounds."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from ..geometry import ConnectionField, covariant_derivative, curvature
from ..tensor import LOWER, UPPER, Tensor, cyc
from .auxiliary import delta_sym, fundamental

RIEMANNIAN = "riemannian"
GRS = "grs"
TARGETS = (RIEMANNIAN, GRS)


class AgsError(ValueError):
    """Invalid unknowns or a violated precondition."""


@dataclass(frozen=True)
class Pi1State:
    """Point data ``(x, P, a, b)``; ``b`` is only meaningful for general pi_1 and stays zero here."""

    x: np.ndarray
    P: np.ndarray
    a: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.x)
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        if self.P.shape != (n, n, n) or self.a.shape != (n, n):
            raise AgsError(f"Pi1State shapes do not match dimension {n}")
        if self.b is not None:
            object.__setattr__(self, "b", np.asarray(self.b, dtype=float))


# slot valences, in pack order
RIEMANN_SLOTS = {
    "g": "ll",
    "P": "ull",
    "a": "ll",
    "a3": "lll",
    "K": "",
    "Rbar": "ulll",
    "Rbar1": "ullll",
}
GRS_SLOTS = {"P": "ull", "a": "ll", "Rbar": "ulll", "Rbar1": "ullll"}


class _Unknowns:
    SLOTS: dict[str, str] = {}
    target = ""

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: np.asarray(getattr(self, name), dtype=float) for name in self.SLOTS}

    def tensors(self) -> dict[str, Tensor]:
        return {name: Tensor(self.dim, tuple(v), np.asarray(getattr(self, name))) for name, v in self.SLOTS.items()}

    def replace(self, **changes):
        return replace(self, **changes)

    def _check(self):
        n = self.P.shape[0]
        for name, val in self.SLOTS.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,) * len(val):
                raise AgsError(f"{name}: expected shape {(n,) * len(val)}, got {arr.shape}")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class RiemannUnknowns(_Unknowns):
    """Unknowns of the Riemannian-target system.

    ``a3[i, j, k] = a_ij,k``, ``Rbar1[h, i, j, k, l] = Rbar^h_ijk,l``.
    """

    g: np.ndarray
    P: np.ndarray
    a: np.ndarray
    a3: np.ndarray
    K: float
    Rbar: np.ndarray
    Rbar1: np.ndarray

    SLOTS = RIEMANN_SLOTS
    target = RIEMANNIAN

    def __post_init__(self):
        self._check()

    @classmethod
    def trivial(cls, n: int) -> "RiemannUnknowns":
        return cls(np.eye(n), np.zeros((n,) * 3), np.zeros((n, n)), np.zeros((n,) * 3), 0.0,
                   np.zeros((n,) * 4), np.zeros((n,) * 5))


@dataclass(frozen=True)
class GrsUnknowns(_Unknowns):
    """Unknowns of the generalized Ricci-symmetric-target system."""

    P: np.ndarray
    a: np.ndarray
    Rbar: np.ndarray
    Rbar1: np.ndarray

    SLOTS = GRS_SLOTS
    target = GRS

    def __post_init__(self):
        self._check()

    @classmethod
    def trivial(cls, n: int) -> "GrsUnknowns":
        return cls(np.zeros((n,) * 3), np.zeros((n, n)), np.zeros((n,) * 4), np.zeros((n,) * 5))


def unknowns_class(target: str):
    if target == RIEMANNIAN:
        return RiemannUnknowns
    if target == GRS:
        return GrsUnknowns
    raise AgsError(f"unknown target {target!r}; expected one of {', '.join(TARGETS)}")


# ---------------------------------------------------------------------------
# deformation and the pi_1 residual
# ---------------------------------------------------------------------------

def deformation(bar_conn: ConnectionField, conn: ConnectionField, x) -> Tensor:
    """``P^h_ij = Gbar^h_ij - G^h_ij`` at ``x``."""
    if bar_conn.dim != conn.dim:
        raise AgsError(f"connections live on different charts (dimensions {bar_conn.dim} and {conn.dim})")
    p = bar_conn.coefficients(x) - conn.coefficients(x)
    return Tensor(conn.dim, (UPPER, LOWER, LOWER), p)


def pi1_residual(s: Pi1State, conn: ConnectionField, P_field: np.ndarray) -> Tensor:
    """``P^h_(ij,k) - a_(ij delta^h_k) + P^h_a(i P^a_jk)`` at ``s.x``.

    ``P_field`` is an Expr array for P, used for the covariant derivative;
    the algebraic terms use ``s.P`` and ``s.a``.
    """
    dP = covariant_derivative(P_field, "ull", conn, s.x).data  # dP[h, i, j, k]
    lhs = cyc(dP, [1, 2, 3])
    quad = cyc(np.einsum("hai,ajk->hijk", s.P, s.P), [1, 2, 3])
    res = lhs - delta_sym(s.a).value + quad
    return Tensor(conn.dim, "ulll", res)


def fundamental_rhs(u, conn: ConnectionField, x) -> Tensor:
    """``P^h_ij,k`` from the fundamental system, with ``Rbar`` taken from ``u``."""
    R = curvature(conn, x).data
    return Tensor(conn.dim, "ulll", fundamental(u.P, u.a, u.Rbar, R).value)


def metric_derivative(P: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``gbar_ij,k = P^a_ik gbar_aj + P^a_jk gbar_ai`` (covariant derivative w.r.t. the base connection)."""
    return np.einsum("aik,aj->ijk", P, g) + np.einsum("ajk,ai->ijk", P, g)


# ---------------------------------------------------------------------------
# algebraic constraints
# ---------------------------------------------------------------------------

def _bianchi(arr: np.ndarray) -> np.ndarray:
    return cyc(arr, [1, 2, 3])


def algebraic_constraint_residual(u) -> dict[str, float]:
    """Max-norm of every algebraic condition on ``u`` (plus ``det_g`` for the Riemannian target)."""
    m = lambda v: float(np.max(np.abs(v))) if np.size(v) else 0.0  # noqa: E731
    out = {
        "P_sym": m(u.P - np.swapaxes(u.P, 1, 2)),
        "a_sym": m(u.a - u.a.T),
        "Rbar_antisym": m(u.Rbar + np.swapaxes(u.Rbar, 2, 3)),
        "Rbar1_antisym": m(u.Rbar1 + np.swapaxes(u.Rbar1, 2, 3)),
    }
    if isinstance(u, RiemannUnknowns):
        out["g_sym"] = m(u.g - u.g.T)
        out["a3_sym"] = m(u.a3 - np.swapaxes(u.a3, 0, 1))
        out["det_g"] = float(abs(np.linalg.det(u.g)))
    else:
        out["Rbar_bianchi"] = m(_bianchi(u.Rbar))
        out["Rbar1_bianchi"] = m(_bianchi(u.Rbar1))
    return out


def constraint_violation(u) -> float:
    """Largest residual among the conditions that must vanish (``det_g`` excluded)."""
    return max(v for k, v in algebraic_constraint_residual(u).items() if k != "det_g")


def project(u):
    """Orthogonal projection of ``u`` onto the linear constraint set."""
    ch = {
        "P": 0.5 * (u.P + np.swapaxes(u.P, 1, 2)),
        "a": 0.5 * (u.a + u.a.T),
        "Rbar": 0.5 * (u.Rbar - np.swapaxes(u.Rbar, 2, 3)),
        "Rbar1": 0.5 * (u.Rbar1 - np.swapaxes(u.Rbar1, 2, 3)),
    }
    if isinstance(u, RiemannUnknowns):
        ch["g"] = 0.5 * (u.g + u.g.T)
        ch["a3"] = 0.5 * (u.a3 + np.swapaxes(u.a3, 0, 1))
    else:
        # removing the totally antisymmetric part keeps antisymmetry in (j, k)
        ch["Rbar"] = ch["Rbar"] - _bianchi(ch["Rbar"]) / 3.0
        ch["Rbar1"] = ch["Rbar1"] - _bianchi(ch["Rbar1"]) / 3.0
    return u.replace(**ch)


# ---------------------------------------------------------------------------
# parameter counts
# ---------------------------------------------------------------------------

def parameter_bound(n: int, target: str) -> int:
    """Upper bound on the number of essential parameters of the solution family."""
    n = int(n)
    if n < 2:
        raise AgsError(f"dimension must be >= 2, got {n}")
    if n == 2:
        warnings.warn("the bounds are stated for n > 2; evaluating the formula at n = 2", stacklevel=2)
    if target == RIEMANNIAN:
        return n * n * (n * n - 1) // 2 + n * (n + 1) ** 2 + 1
    if target == GRS:
        return n * (n + 1) * (2 * n**3 - 4 * n**2 + 5 * n + 3) // 6
    raise AgsError(f"unknown target {target!r}; expected one of {', '.join(TARGETS)}")


__all__ = [
    "AgsError", "GRS", "GRS_SLOTS", "GrsUnknowns", "Pi1State", "RIEMANNIAN", "RIEMANN_SLOTS",
    "RiemannUnknowns", "TARGETS", "algebraic_constraint_residual", "constraint_violation",
    "deformation", "fundamental_rhs", "metric_derivative", "parameter_bound", "pi1_residual",
    "project", "unknowns_class",
]

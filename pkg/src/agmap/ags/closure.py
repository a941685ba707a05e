"""Closed first-order systems: every covariant derivative of every unknown.

Derivative occurrences inside the auxiliary tensors are resolved from the
system itself by building jets of the unknowns order by order:

1. order-0 data gives ``P_,k`` (and for the GRS target ``a_,l``);
2. jets of order 1 give Theta, hence T, N, Omega and (Riemannian) the
   A-chain and ``a_ij,km``; S then gives ``Rbar_,lk``;
3. (Riemannian only) jets of order 2 give the derivative of A6 needed by
   ``K_,b``.

The curvature of the base connection enters as a covariant jet computed
from the chart's connection coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import jet as J
from ..geometry import ConnectionField, curvature_jet
from ..jet import Jet
from . import auxiliary as ax
from .core import AgsError, GrsUnknowns, RiemannUnknowns, constraint_violation, metric_derivative

CONSTRAINT_TOL = 1e-8


def _check(u, tol: float | None) -> None:
    if tol is None:
        return
    v = constraint_violation(u)
    if v > tol:
        raise AgsError(f"algebraic constraints violated: max residual {v:.3g} > {tol:g}")


@dataclass(frozen=True)
class RiemannAux:
    """Auxiliary tensors of the Riemannian closure at one point."""

    theta: np.ndarray
    T: np.ndarray
    N: np.ndarray
    omega: np.ndarray
    S: np.ndarray
    C6: np.ndarray
    B: np.ndarray
    C4: np.ndarray
    mu: np.ndarray
    A4: np.ndarray
    A6: np.ndarray
    A_rho: np.ndarray | None = None

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def _chain(omega: Jet, g: Jet, a: Jet, R: Jet, K: Jet | None, n: int, a6_variant: str) -> dict[str, Jet]:
    ginv = J.inverse(g)
    c6 = ax.build_C6(omega, g, a, R, n)
    b = ax.build_B(c6, ginv, omega, a, R, n)
    c4 = ax.build_C4(c6, b, ginv, a, R, n)
    a4 = ax.build_A4(b, g, ginv, c4, n)
    a6 = ax.build_A6(c6, g, a4, variant=a6_variant)
    out = {"ginv": ginv, "C6": c6, "B": b, "C4": c4, "A4": a4, "A6": a6}
    if K is not None:
        out["mu"] = ax.build_mu(K, g, ginv, c4, n)
    return out


def _riemann_order0(u: RiemannUnknowns, R: Jet, variant: str, a6_variant: str, a_chain: str):
    """Order-0 pass: returns derivative values and the order-0 auxiliaries."""
    n = u.dim
    P0, a0, Rb0, g0, K0 = (Jet([v]) for v in (u.P, u.a, u.Rbar, u.g, u.K))
    dP = ax.fundamental(P0, a0, Rb0, R.truncate(0)).value
    dg = metric_derivative(u.P, u.g)
    aJ1 = Jet.prolong(u.a, u.a3)
    th = ax.theta(Jet.prolong(u.P, dP), aJ1, Jet.prolong(u.Rbar, u.Rbar1), R.truncate(2))
    E = ax.delta_sym(aJ1).D()
    T = ax.build_T(P0, Rb0, E, th)
    N = ax.build_N(T, Rb0, a0, R.truncate(0))
    om = ax.build_omega(N, Rb0)
    ch = _chain(om, g0, a0, R.truncate(0), K0, n, a6_variant)
    if a_chain == "derived":
        d2a = ax.second_derivative_a_derived(om, g0, a0, R.truncate(0), K0, n, variant).value
    else:
        d2a = ax.second_derivative_a(K0, g0, ch["ginv"], ch["A6"], n).value  # a_ij,km
    S = ax.build_S(om, Jet.prolong(u.Rbar, u.Rbar1), Jet.prolong(u.P, dP))
    d2 = ax.delta_sym(Jet([u.a, u.a3, d2a])).D().D()
    dRb1 = ax.rbar_second_derivative(d2, S, variant).value
    aux = {"theta": th.value, "T": T.value, "N": N.value, "omega": om.value, "S": S.value}
    aux.update({k: v.value for k, v in ch.items() if k != "ginv"})
    return {"g": dg, "P": dP, "a": u.a3, "a3": d2a, "Rbar": u.Rbar1, "Rbar1": dRb1}, aux


def _riemann_k_derivative(u: RiemannUnknowns, R: Jet, d: dict, variant: str, a6_variant: str, a_chain: str):
    """``K_,b`` from order-2 jets of the unknowns."""
    n = u.dim
    PJ1 = Jet.prolong(u.P, d["P"])
    aJ1 = Jet.prolong(u.a, u.a3)
    RbJ1 = Jet.prolong(u.Rbar, u.Rbar1)
    gJ1 = Jet.prolong(u.g, d["g"])
    dP_jet = ax.fundamental(PJ1, aJ1, RbJ1, R.truncate(1))
    PJ2 = Jet.prolong(u.P, dP_jet)
    aJ2 = Jet.prolong(u.a, Jet.prolong(u.a3, d["a3"]))
    RbJ2 = Jet.prolong(u.Rbar, Jet.prolong(u.Rbar1, d["Rbar1"]))
    th = ax.theta(PJ2, aJ2, RbJ2, R.truncate(3))
    E = ax.delta_sym(aJ2).D()
    T = ax.build_T(PJ1, RbJ1, E, th)
    N = ax.build_N(T, RbJ1, aJ1, R.truncate(1))
    om = ax.build_omega(N, RbJ1)
    ch = _chain(om, gJ1, aJ1, R.truncate(1), None, n, a6_variant)
    a_rho = ax.build_A_rho(u.a3, R.value, u.K, u.g, d["g"], ch["ginv"].value, ch["A6"], n)
    if a_chain == "derived":
        free = ax.second_derivative_a_derived(om, gJ1, aJ1, R.truncate(1), 0.0, n, variant)
        return ax.k_derivative_derived(free, u.a3, R.value, u.K, gJ1, n), a_rho
    return ax.k_derivative(a_rho, n), a_rho


def riemannian_closure_rhs(
    u: RiemannUnknowns,
    conn: ConnectionField,
    x,
    *,
    tol: float | None = CONSTRAINT_TOL,
    variant: str = "printed",
    a6_variant: str = "printed",
    a_chain: str = "derived",
    with_aux: bool = False,
):
    """Covariant derivatives of all Riemannian-target unknowns at ``x``.

    Returns a dict keyed like the unknowns; each array carries the
    derivative index last (``K`` gives a covector).  With ``with_aux`` a
    :class:`RiemannAux` is returned as well.

    ``a_chain`` selects how ``a_ij,km`` and ``K_,b`` are obtained:
    ``"derived"`` solves the lowered second-derivative equation directly
    (:func:`~agmap.ags.auxiliary.second_derivative_a_derived`), ``"printed"``
    goes through the C6 ... A6 chain and ``A_rho``.  The auxiliary tensors
    returned with ``with_aux`` are the printed chain in both cases.
    """
    if a_chain not in ("derived", "printed"):
        raise ValueError(f"unknown a_chain {a_chain!r}")
    _check(u, tol)
    if abs(np.linalg.det(u.g)) <= 1e-12:
        raise AgsError(f"degenerate target metric: det = {np.linalg.det(u.g):.3g}")
    R = curvature_jet(conn, x, 3)
    d, aux = _riemann_order0(u, R, variant, a6_variant, a_chain)
    dK, a_rho = _riemann_k_derivative(u, R, d, variant, a6_variant, a_chain)
    d["K"] = dK
    out = {k: d[k] for k in RiemannUnknowns.SLOTS}
    if with_aux:
        return out, RiemannAux(**aux, A_rho=a_rho)
    return out


def build_riemannian_aux(u: RiemannUnknowns, conn: ConnectionField, x, **kw) -> RiemannAux:
    """Named auxiliary tensors (Theta ... A6, A_rho) of the Riemannian closure at ``x``."""
    return riemannian_closure_rhs(u, conn, x, with_aux=True, **kw)[1]


def grs_closure_rhs(
    u: GrsUnknowns,
    conn: ConnectionField,
    x,
    *,
    tol: float | None = CONSTRAINT_TOL,
    variant: str = "printed",
    with_aux: bool = False,
):
    """Covariant derivatives of the GRS-target unknowns at ``x``."""
    _check(u, tol)
    n = u.dim
    R = curvature_jet(conn, x, 2)
    P0, a0, Rb0 = Jet([u.P]), Jet([u.a]), Jet([u.Rbar])
    dP = ax.fundamental(P0, a0, Rb0, R.truncate(0)).value
    th0 = ax.theta(P0, a0, Rb0, R.truncate(1))
    da = ax.grs_a_derivative(th0, n).value
    PJ1, aJ1, RbJ1 = Jet.prolong(u.P, dP), Jet.prolong(u.a, da), Jet.prolong(u.Rbar, u.Rbar1)
    th1 = ax.theta(PJ1, aJ1, RbJ1, R.truncate(2))
    aJ2 = Jet.prolong(u.a, ax.grs_a_derivative(th1, n))
    dd = ax.delta_sym(aJ2).D()
    T = ax.build_T(P0, Rb0, dd.truncate(0), th1)
    N = ax.build_N(T, Rb0, a0, R.truncate(0))
    om = ax.build_omega(N, Rb0)
    S = ax.build_S(om, RbJ1, PJ1)
    dRb1 = ax.rbar_second_derivative(dd.D(), S, variant).value
    out = {"P": dP, "a": da, "Rbar": u.Rbar1, "Rbar1": dRb1}
    if with_aux:
        aux = {"theta": th0.value, "T": T.value, "N": N.value, "omega": om.value, "S": S.value}
        return out, aux
    return out


def auxiliary_tensors(u, conn: ConnectionField, x, **kw) -> dict[str, np.ndarray]:
    """Theta, T, N, Omega and S (plus the A-chain for the Riemannian target) at ``x``."""
    if isinstance(u, RiemannUnknowns):
        return build_riemannian_aux(u, conn, x, **kw).as_dict()
    return grs_closure_rhs(u, conn, x, with_aux=True, **kw)[1]


def closure_rhs(u, conn: ConnectionField, x, **kw) -> dict[str, np.ndarray]:
    if isinstance(u, RiemannUnknowns):
        return riemannian_closure_rhs(u, conn, x, **kw)
    if isinstance(u, GrsUnknowns):
        return grs_closure_rhs(u, conn, x, **kw)
    raise AgsError(f"unsupported unknowns type {type(u).__name__}")


def integrability_residual(u, conn: ConnectionField, x, **kw) -> np.ndarray:
    """``Rbar^h_(ij)[k;l] - delta^h_(i a_jk),l + delta^h_(i a_jl),k - Theta^h_ijkl``.

    ``;`` is the covariant derivative of the target connection
    ``G + P``; all derivatives of unknowns come from the closure.
    """
    d = closure_rhs(u, conn, x, **kw)
    R = curvature_jet(conn, x, 1)
    P, Rb = u.P, u.Rbar
    # Rbar^h_ijk;l = Rbar^h_ijk,l + P^h_la Rbar^a_ijk - P^a_li Rbar^h_ajk - ...
    e = np.einsum
    semi = (
        u.Rbar1
        + e("hla,aijk->hijkl", P, Rb)
        - e("ali,hajk->hijkl", P, Rb)
        - e("alj,hiak->hijkl", P, Rb)
        - e("alk,hija->hijkl", P, Rb)
    )
    lhs = semi + np.swapaxes(semi, 1, 2)
    lhs = lhs - np.swapaxes(lhs, 3, 4)
    E = ax.delta_sym(Jet.prolong(u.a, d["a"])).D().value  # E[h,i,j,k,l] = delta^h_(i a_jk),l
    th = ax.theta(Jet([P]), Jet([u.a]), Jet([Rb]), R).value
    return lhs - E + np.swapaxes(E, 3, 4) - th

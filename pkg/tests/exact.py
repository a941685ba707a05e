"""Exact canonical pi_1 solutions (geodesic mappings) with every derivative of every unknown.

The target is the Levi-Civita connection of a metric given as Exprs; ``a`` is
recovered from the defining equation by least squares, as a jet, so its
covariant derivatives are exact up to rounding.
"""
import itertools

import numpy as np

from agmap import jet as J
from agmap.ags import RiemannUnknowns
from agmap.expr import parse_expr
from agmap.geometry import ConnectionField, covariant_jet, curvature_partial


def gnomonic_sphere_metric(n):
    xs = [f"x{i + 1}" for i in range(n)]
    q = "(1+" + "+".join(f"{v}^2" for v in xs) + ")"
    g = np.empty((n, n), dtype=object)
    for i, j in itertools.product(range(n), repeat=2):
        g[i, j] = parse_expr(f"({int(i == j)}*{q}-{xs[i]}*{xs[j]})/{q}^2")
    return g


def gnomonic_sphere_connection(n):
    """Levi-Civita connection of :func:`gnomonic_sphere_metric` (straight lines are geodesics)."""
    xs = [f"x{i + 1}" for i in range(n)]
    q = "(1+" + "+".join(f"{v}^2" for v in xs) + ")"
    G = np.empty((n, n, n), dtype=object)
    for h, i, j in itertools.product(range(n), repeat=3):
        terms = [xs[i]] * (h == j) + [xs[j]] * (h == i)
        G[h, i, j] = parse_expr(f"-({'+'.join(terms)})/{q}" if terms else "0")
    return ConnectionField(G)


def euclidean_metric(n):
    g = np.empty((n, n), dtype=object)
    for i, j in itertools.product(range(n), repeat=2):
        g[i, j] = parse_expr("1" if i == j else "0")
    return g


def delta_operator(n):
    """Pseudo-inverse of a -> delta^h_(i a_jk) on symmetric a, and the fit matrix."""
    cols = []
    for i, j in itertools.product(range(n), repeat=2):
        a = np.zeros((n, n))
        a[i, j] += 0.5
        a[j, i] += 0.5
        d = np.einsum("hi,jk->hijk", np.eye(n), a)
        d = d + np.einsum("hijk->hjki", d) + np.einsum("hijk->hkij", d)
        cols.append(d.ravel())
    M = np.array(cols).T
    return np.linalg.pinv(M), M


def pi1_solution(base: ConnectionField, bar: ConnectionField, target_metric, x, order=2):
    """State and exact covariant derivatives for the mapping base -> bar at x.

    ``bar`` must be the Levi-Civita connection of ``target_metric``.
    """
    n = base.dim
    x = np.asarray(x, dtype=float)
    P_exprs = bar.exprs - base.exprs
    from agmap.geometry import _ExprArray

    gam = base.partial_jet(x, order + 2)
    Pc = covariant_jet(_ExprArray(P_exprs).partial_jet(x, order + 2), gam, "ull", order + 2)
    # W = cyc(P_ij,k) + cyc(P^h_ai P^a_jk) = delta^h_(i a_jk)
    dP = Pc.D()
    W = dP.cyc([1, 2, 3]) + J.einsum("hai,ajk->hijk", Pc, Pc).cyc([1, 2, 3])
    pinv, M = delta_operator(n)
    flatW = W.value.reshape(-1)
    coef = pinv @ flatW
    fit = float(np.max(np.abs(M @ coef - flatW)))
    a = J.einsum("pq,q->p", pinv, J.Jet([c.reshape((n ** 4,) + c.shape[4:]) for c in W.coeffs]))
    a = J.Jet([c.reshape((n, n) + c.shape[1:]) for c in a.coeffs])
    a = 0.5 * (a + J.einsum("ij->ji", a))
    g = covariant_jet(_ExprArray(target_metric).partial_jet(x, order + 2), gam, "ll", order + 1)
    ginv = J.inverse(g)
    Rb = covariant_jet(curvature_partial(bar.partial_jet(x, order + 2)), gam, "ulll", order)
    a2 = a.D().D()  # a_ij,km with its derivative
    K = J.einsum("ijkm,ij,km->", a2, ginv, ginv)
    u = RiemannUnknowns(g.value, Pc.value, a.value, a.coeffs[1], float(K.value), Rb.value, Rb.coeffs[1])
    exact = {
        "g": g.coeffs[1], "P": Pc.coeffs[1], "a": a.coeffs[1], "a3": a.coeffs[2],
        "K": K.coeffs[1], "Rbar": Rb.coeffs[1], "Rbar1": Rb.coeffs[2],
    }
    return u, exact, fit

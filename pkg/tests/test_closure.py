import numpy as np
import pytest

from agmap.ags import (
    AgsError,
    GrsUnknowns,
    RiemannUnknowns,
    auxiliary_tensors,
    closure_rhs,
    integrability_residual,
)
from agmap.ags import auxiliary as ax
from agmap.chart import eval_array
from agmap.geometry import ConnectionField, MetricField, christoffel, curvature, curvature_jet
from agmap.jet import Jet

from conftest import METRIC_CORPUS, chart, random_unknown_pieces


def geodesic_type(psi):
    n = len(psi)
    d = np.eye(n)
    return np.einsum("hi,j->hij", d, psi) + np.einsum("hj,i->hij", d, psi)


def fd_metric_derivative(c, x, h=1e-5):
    n = c.dim
    out = np.zeros((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        out[..., k] = (eval_array(c.metric, x + e) - eval_array(c.metric, x - e)) / (2 * h)
    return out


@pytest.mark.parametrize("target", ["riemannian", "grs"])
@pytest.mark.parametrize("n", [2, 3])
def test_trivial_state_is_stationary_on_flat_base(target, n):
    u = RiemannUnknowns.trivial(n) if target == "riemannian" else GrsUnknowns.trivial(n)
    out = closure_rhs(u, ConnectionField.flat(n), np.zeros(n))
    assert set(out) == set(type(u).SLOTS)
    for name, v in out.items():
        assert not np.any(v), name


@pytest.mark.parametrize("name", METRIC_CORPUS)
def test_metric_derivative_from_closure(name):
    """Flat base, target Levi-Civita: the g-equation reproduces d_k gbar_ij."""
    c = chart(name)
    n = c.dim
    flat = ConnectionField.flat(n)
    met = MetricField.from_chart(c)
    bar = ConnectionField.from_chart(c)
    for x in c.sample_points(3, seed=11):
        g = eval_array(c.metric, x)
        P = christoffel(met, x).data
        Rb = curvature(bar, x).data
        u = RiemannUnknowns(g, P, np.zeros((n, n)), np.zeros((n,) * 3), 0.0, Rb, np.zeros((n,) * 5))
        out = closure_rhs(u, flat, x)
        assert np.allclose(out["g"], fd_metric_derivative(c, x), atol=1e-8)


def test_closure_p_equation_exact_solution():
    """Constant geodesic-type P over a flat base: P is parallel when a = 4 psi psi."""
    psi = np.array([0.3, -0.2, 0.5])
    P = geodesic_type(psi)
    flat = ConnectionField.flat(3)
    x = np.zeros(3)
    Rb = curvature(flat.plus(P), x).data
    u = GrsUnknowns(P, 4 * np.outer(psi, psi), Rb, np.zeros((3,) * 5))
    assert np.abs(closure_rhs(u, flat, x)["P"]).max() < 1e-15
    wrong = u.replace(a=np.zeros((3, 3)))
    assert np.abs(closure_rhs(wrong, flat, x)["P"]).max() > 0.1


def test_theta_exact_solution():
    """Rbar^h_(ij)[k;l] = Theta^h_ijkl for the constant geodesic-type mapping (a parallel, Rbar constant)."""
    psi = np.array([0.3, -0.2, 0.5])
    P = geodesic_type(psi)
    n = 3
    Rb = curvature(ConnectionField.flat(n).plus(P), np.zeros(n)).data
    e = np.einsum
    semi = (e("hla,aijk->hijkl", P, Rb) - e("ali,hajk->hijkl", P, Rb)
            - e("alj,hiak->hijkl", P, Rb) - e("alk,hija->hijkl", P, Rb))
    lhs = semi + np.swapaxes(semi, 1, 2)
    lhs = lhs - np.swapaxes(lhs, 3, 4)
    flat_R = Jet([np.zeros((n,) * 4), np.zeros((n,) * 5)])
    th = ax.theta(P, 4 * np.outer(psi, psi), Rb, flat_R).value
    assert np.abs(th).max() > 0.5
    assert np.allclose(lhs, th, atol=1e-14)


def test_constraint_violation_raises(rng):
    P, a, Rb, Rb1 = random_unknown_pieces(rng, 2)
    P[0, 0, 1] += 1e-6
    u = GrsUnknowns(P, a, Rb, Rb1)
    with pytest.raises(AgsError, match="algebraic constraints violated"):
        closure_rhs(u, ConnectionField.flat(2), np.zeros(2))
    closure_rhs(u, ConnectionField.flat(2), np.zeros(2), tol=None)


def test_degenerate_metric_raises():
    u = RiemannUnknowns.trivial(2).replace(g=np.diag([1.0, 0.0]))
    with pytest.raises(AgsError, match="degenerate"):
        closure_rhs(u, ConnectionField.flat(2), np.zeros(2))


def test_closure_symmetries(rng):
    conn = ConnectionField.from_chart(chart("sphere"))
    x = np.array([1.0, 0.3])
    P, a, Rb, Rb1 = random_unknown_pieces(rng, 2, 0.3)
    g = np.eye(2) + 0.1 * np.array([[0.0, 1.0], [1.0, 0.0]])
    a3 = rng.normal(size=(2, 2, 2)) * 0.3
    a3 = 0.5 * (a3 + a3.transpose(1, 0, 2))
    u = RiemannUnknowns(g, P, a, a3, 0.4, Rb, Rb1)
    out = closure_rhs(u, conn, x)
    assert np.allclose(out["P"], np.swapaxes(out["P"], 1, 2))
    assert np.allclose(out["g"], np.swapaxes(out["g"], 0, 1))
    assert np.allclose(out["a3"], np.swapaxes(out["a3"], 0, 1))
    assert np.array_equal(out["a"], a3)
    assert np.array_equal(out["Rbar"], Rb1)
    assert out["K"].shape == (2,)
    for name, v in out.items():
        assert np.all(np.isfinite(v)), name


def test_auxiliary_tensors_named(rng):
    conn = ConnectionField.from_chart(chart("polynomial2"))
    P, a, Rb, Rb1 = random_unknown_pieces(rng, 2, 0.2)
    aux = auxiliary_tensors(GrsUnknowns(P, a, Rb, Rb1), conn, np.array([0.1, 0.1]))
    assert set(aux) == {"theta", "T", "N", "omega", "S"}
    assert aux["omega"].shape == (2,) * 6
    raux = auxiliary_tensors(RiemannUnknowns.trivial(2), conn, np.array([0.1, 0.1]))
    assert {"C6", "B", "C4", "mu", "A4", "A6", "A_rho"} <= set(raux)


def test_integrability_residual_trivial_and_scaling(rng):
    flat = ConnectionField.flat(2)
    x = np.zeros(2)
    assert not np.any(integrability_residual(GrsUnknowns.trivial(2), flat, x))
    P, a, Rb, Rb1 = random_unknown_pieces(rng, 2)

    def r(eps):
        return integrability_residual(GrsUnknowns(eps * P, eps * a, eps * Rb, eps * Rb1), flat, x)

    # no constant part; the departure from linearity is quadratic in eps
    def nonlin(eps):
        return np.abs(r(2 * eps) - 2 * r(eps)).max()

    assert nonlin(1e-3) / nonlin(5e-4) == pytest.approx(4.0, rel=1e-2)


@pytest.mark.parametrize("n", [2, 3])
def test_closure_preserves_linear_constraints(rng, n):
    """The Rbar equation keeps antisymmetry in (j, k) for any constrained state.

    The first Bianchi identity on the derivative is only a consequence on
    actual solutions (see the identity-mapping tests); elsewhere the
    integrator's projection removes it.
    """
    from agmap.ags import project

    conn = ConnectionField.from_chart(chart("polynomial2" if n == 2 else "conformal3"))
    x = np.full(n, 0.1)
    P, a, Rb, Rb1 = random_unknown_pieces(rng, n, 0.2)
    g = np.eye(n)
    a3 = 0.2 * rng.normal(size=(n,) * 3)
    for u in (project(GrsUnknowns(P, a, Rb, Rb1)), project(RiemannUnknowns(g, P, a, a3, 0.2, Rb, Rb1))):
        d = closure_rhs(u, conn, x)["Rbar1"]
        scale = np.abs(d).max()
        assert np.abs(d + np.swapaxes(d, 2, 3)).max() < 1e-12 * scale


@pytest.mark.parametrize("name", ["sphere", "conformal2", "conformal3"])
def test_identity_mapping_is_fixed_point_riemannian(name):
    """gbar = g, P = a = 0, Rbar = R, Rbar_,l = R_,l is a solution; its derivatives follow the base."""
    c = chart(name)
    conn = ConnectionField.from_chart(c)
    n = c.dim
    for x in c.sample_points(2, seed=3):
        R, R1, R2 = curvature_jet(conn, x, 2).coeffs
        u = RiemannUnknowns(eval_array(c.metric, x), np.zeros((n,) * 3), np.zeros((n, n)),
                            np.zeros((n,) * 3), 0.0, R, R1)
        d = closure_rhs(u, conn, x)
        for name_ in ("g", "P", "a", "a3", "K"):
            assert np.abs(d[name_]).max() < 1e-11, name_
        assert np.allclose(d["Rbar"], R1, atol=1e-12)
        assert np.allclose(d["Rbar1"], R2, atol=1e-11)


@pytest.mark.parametrize("name", ["sphere", "conformal2", "flat3"])
def test_identity_mapping_is_fixed_point_grs(name):
    c = chart(name)
    conn = ConnectionField.from_chart(c)
    n = c.dim
    x = c.sample_points(1, seed=8)[0]
    R, R1, R2 = curvature_jet(conn, x, 2).coeffs
    d = closure_rhs(GrsUnknowns(np.zeros((n,) * 3), np.zeros((n, n)), R, R1), conn, x)
    assert np.abs(d["P"]).max() < 1e-13 and np.abs(d["a"]).max() < 1e-13
    assert np.allclose(d["Rbar1"], R2, atol=1e-12)
    assert np.abs(integrability_residual(GrsUnknowns(np.zeros((n,) * 3), np.zeros((n, n)), R, R1),
                                         conn, x)).max() < 1e-13


def test_identity_mapping_of_non_grs_base_is_rejected():
    """On a base that is not GRS the identity is no GRS-target solution: a_,l comes out nonzero."""
    c = chart("conformal3")
    conn = ConnectionField.from_chart(c)
    x = c.sample_points(1, seed=8)[0]
    R, R1, _ = curvature_jet(conn, x, 2).coeffs
    d = closure_rhs(GrsUnknowns(np.zeros((3,) * 3), np.zeros((3, 3)), R, R1), conn, x, tol=None)
    assert np.abs(d["a"]).max() > 0.1

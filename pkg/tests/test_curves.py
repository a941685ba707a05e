import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agmap.curves import (
    CurveError,
    CurveSample,
    integrate_geodesic,
    random_seeds,
    span_test,
    verify_mapping,
    xi_chain,
)
from agmap.geometry import ConnectionField

from conftest import CORPUS, chart, connection


def circle(steps):
    t = np.linspace(0.0, 1.0, steps + 1)
    x = np.column_stack([np.cos(t), np.sin(t)])
    xi = np.column_stack([-np.sin(t), np.cos(t)])
    return t, CurveSample(t, x, xi)


# --- geodesics --------------------------------------------------------------

def test_flat_geodesic_is_a_straight_line():
    c = integrate_geodesic(ConnectionField.flat(2), (0.0, 0.0), (1.0, 0.0), 1.0, 50)
    assert np.allclose(c.x[-1], [1.0, 0.0], atol=1e-12)
    assert np.allclose(c.xi, [[1.0, 0.0]] * len(c.t), atol=1e-12)


def test_sphere_equator_is_a_geodesic():
    conn = connection("sphere")
    c = integrate_geodesic(conn, (np.pi / 2, 0.0), (0.0, 1.0), 2.0, 200)
    assert np.max(np.abs(c.x[:, 0] - np.pi / 2)) < 1e-8


def test_affine_reparametrization_keeps_endpoint():
    conn = connection("sphere")
    a = integrate_geodesic(conn, (1.0, 0.2), (0.3, 0.4), 1.0, 400)
    b = integrate_geodesic(conn, (1.0, 0.2), (0.6, 0.8), 0.5, 400)
    assert np.allclose(a.x[-1], b.x[-1], atol=1e-10)


def test_geodesic_errors():
    flat = ConnectionField.flat(2)
    with pytest.raises(CurveError, match="zero"):
        integrate_geodesic(flat, (0, 0), (0, 0), 1.0, 10)
    with pytest.raises(CurveError, match="domain"):
        integrate_geodesic(flat, (0, 0), (5, 0), 1.0, 10, chart=chart("flat2"))


def test_curve_sample_rejects_zero_tangent():
    t = np.linspace(0, 1, 4)
    with pytest.raises(CurveError, match="regular"):
        CurveSample(t, np.zeros((4, 2)), np.zeros((4, 2)))


# --- xi chain -------------------------------------------------------------------

def test_geodesic_of_bar_connection_has_vanishing_xi1():
    conn = connection("sphere")
    c = integrate_geodesic(conn, (1.0, 0.0), (0.3, 0.5), 1.0, 200)
    _, xi1, _ = xi_chain(c, conn)
    assert np.max(np.linalg.norm(xi1, axis=1)) < 1e-6


def test_straight_line_has_zero_chain():
    t = np.linspace(0, 1, 11)
    x = np.outer(t, [1.0, 2.0])
    xi = np.tile([1.0, 2.0], (11, 1))
    _, xi1, xi2 = xi_chain(CurveSample(t, x, xi), ConnectionField.flat(2))
    assert not np.any(xi1) and not np.any(xi2)


def test_circle_spot_values():
    t, s = circle(400)
    xi, xi1, xi2 = xi_chain(s, ConnectionField.flat(2))
    assert np.allclose(xi1[0], [-1.0, 0.0], atol=1e-4)
    k = 200
    assert np.allclose(xi1[k], -s.x[k], atol=1e-5)
    assert np.allclose(xi2[k], -xi[k], atol=1e-5)


def test_xi_chain_second_order_convergence():
    errs = []
    for steps in (50, 100, 200):
        _, s = circle(steps)
        _, xi1, xi2 = xi_chain(s, ConnectionField.flat(2))
        k = steps // 2
        errs.append(np.linalg.norm(xi1[k] + s.x[k]) + np.linalg.norm(xi2[k] + s.xi[k]))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 < r < 4.5 for r in ratios), ratios


# --- span test --------------------------------------------------------------------

def test_span_examples():
    e1, e2, e3 = np.eye(3)
    assert span_test(e1, e2, 2 * e1 + 3 * e2, 1e-9) == (True, 0.0)
    ok, r = span_test(e1, e2, e3, 0.5)
    assert not ok and r == pytest.approx(1.0)
    with pytest.raises(CurveError):
        span_test(np.zeros(3), e2, e3, 1e-6)


def test_span_fills_the_plane_in_dimension_two():
    rng = np.random.default_rng(3)
    for _ in range(10):
        xi, xi1, xi2 = rng.normal(size=(3, 2))
        ok, r = span_test(xi, xi1, xi2, 1e-9)
        assert ok and r < 1e-12


def test_dependent_xi1_degrades_to_tangent_span():
    e1, e2, _ = np.eye(3)
    ok, r = span_test(e1, 2 * e1, e2, 0.5)
    assert not ok and r == pytest.approx(1.0)
    assert span_test(e1, 2 * e1, 3 * e1, 1e-9)[0]


vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).map(np.array)
scale = st.floats(0.1, 10).flatmap(lambda v: st.sampled_from([v, -v]))


@settings(max_examples=60, deadline=None)
@given(vec, vec, vec, scale, scale)
def test_span_residual_is_scale_invariant(xi, xi1, xi2, a, b):
    if np.linalg.norm(xi) < 1e-3:
        return
    r0 = span_test(xi, xi1, xi2, 1.0)[1]
    r1 = span_test(a * xi, b * xi1, xi2, 1.0)[1]
    assert r1 == pytest.approx(r0, abs=1e-9)


# --- verify_mapping ---------------------------------------------------------------

@pytest.mark.parametrize("name", CORPUS)
def test_identity_mapping_passes(name):
    c = chart(name)
    conn = ConnectionField.from_chart(c)
    rep = verify_mapping(conn, conn, random_seeds(c, 2, seed=1, speed=0.3), steps=100, chart=c)
    assert rep.passed and rep.residual < 1e-6


def test_geodesic_type_deformation_passes():
    c = chart("geodesic_p3")
    flat = ConnectionField.from_chart(c)
    bar = flat.plus(c.fields["P"].components)
    rep = verify_mapping(flat, bar, random_seeds(c, 10, seed=0), steps=200, chart=c)
    assert rep.passed and rep.residual < 1e-6


def test_generic_deformation_fails():
    c = chart("random_p3")
    flat = ConnectionField.from_chart(c)
    bar = flat.plus(c.fields["P"].components)
    rep = verify_mapping(flat, bar, random_seeds(c, 3, seed=0), steps=200, chart=c)
    assert not rep.passed
    assert rep.residual > 1e-2  # recorded baseline: far outside the tolerance
    d = rep.as_dict()
    assert d["pass"] is False and len(d["seeds"]) == 3

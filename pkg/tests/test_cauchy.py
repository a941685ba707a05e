import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agmap.ags import GrsUnknowns, RiemannUnknowns, constraint_violation, project
from agmap.cauchy import (
    CauchyError,
    PackedState,
    PathSpec,
    _to_partial,
    default_loop,
    integrate_along,
    integrate_field,
    loop_defect,
    pack,
    partial_derivatives,
    rhs,
    rk4,
    square_loop,
    state_length,
    trivial_state,
    unpack,
)
from agmap.ags import AgsError, closure_rhs
from agmap.chart import eval_array
from agmap.geometry import ConnectionField

from conftest import chart, random_unknown_pieces


def test_state_lengths():
    assert state_length(2, "riemannian") == 4 + 8 + 4 + 8 + 1 + 16 + 32 == 73
    assert state_length(2, "grs") == 8 + 4 + 16 + 32 == 60
    with pytest.raises(AgsError, match="needs length"):
        PackedState(np.zeros(5), 2, "grs")


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 3), st.sampled_from(["riemannian", "grs"]), st.integers(0, 2**31))
def test_pack_roundtrip(n, target, seed):
    v = np.random.default_rng(seed).normal(size=state_length(n, target))
    ps = PackedState(v, n, target)
    again = pack(unpack(ps))
    assert np.array_equal(again.vector, v)
    assert again.dim == n and again.target == target


def test_to_partial_recovers_metric_derivative():
    """A parallel metric has zero covariant derivative; undoing the connection gives d_k g."""
    c = chart("sphere")
    x = np.array([0.9, 0.4])
    g = eval_array(c.metric, x)
    gam = ConnectionField.from_chart(c).coefficients(x)
    d = _to_partial(g, np.zeros((2, 2, 2)), gam, "ll")
    assert d[1, 1, 0] == pytest.approx(2 * math.sin(0.9) * math.cos(0.9))
    assert np.allclose(np.delete(d.ravel(), 6), 0.0)  # only d_1 g_22 survives


def test_rhs_on_flat_base_equals_closure(rng):
    P, a, Rb, Rb1 = random_unknown_pieces(rng, 2, 0.3)
    u = project(GrsUnknowns(P, a, Rb, Rb1))
    flat = ConnectionField.flat(2)
    cov = closure_rhs(u, flat, np.zeros(2))
    part = partial_derivatives(u, flat, np.zeros(2))
    for name in cov:
        assert np.array_equal(cov[name], part[name])
    d1 = rhs(pack(u), np.zeros(2), flat, 1)
    assert np.array_equal(d1[:8], cov["P"][..., 1].ravel())


def test_k_needs_no_correction():
    conn = ConnectionField.from_chart(chart("sphere"))
    x = np.array([1.1, 0.2])
    u = RiemannUnknowns.trivial(2).replace(K=0.5)
    assert np.array_equal(partial_derivatives(u, conn, x)["K"], closure_rhs(u, conn, x)["K"])


def test_rk4_exponential():
    y = rk4(lambda t, y: y, np.array([1.0]), 0.0, 1.0, 100)
    assert abs(y[0] - math.e) < 1e-6


def _rotation_error(steps):
    f = lambda t, y: np.array([y[1], -y[0] + math.cos(t) * 0.0]) * (1 + 0.5 * math.sin(t))  # noqa: E731
    # y = (sin s, cos s) with s = t - 0.5 cos t + 0.5
    y = rk4(f, np.array([0.0, 1.0]), 0.0, 2.0, steps)
    s = 2.0 - 0.5 * math.cos(2.0) + 0.5
    return float(np.max(np.abs(y - [math.sin(s), math.cos(s)])))


def test_rk4_order():
    errs = [_rotation_error(s) for s in (10, 20, 40, 80)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(3)]
    assert min(orders) >= 3.5


def _gradient_field(x, y, d):
    # d_k y = (d_k phi) y with phi = sin(x1) x2; exact y = y0 exp(phi - phi0)
    grad = np.array([math.cos(x[0]) * x[1], math.sin(x[0])])
    return float(grad @ d) * y


def test_integrate_field_exact_and_loop_order():
    path = PathSpec(((0.0, 0.0), (0.5, 0.2), (0.3, 0.7)), 32)
    y = integrate_field(_gradient_field, path, np.array([1.0]))
    assert y[0] == pytest.approx(math.exp(math.sin(0.3) * 0.7), rel=1e-9)

    def defect(steps):
        loop = square_loop((0.2, 0.3), 0.5, steps=steps)
        return abs(integrate_field(_gradient_field, loop, np.array([1.0]))[0] - 1.0)

    assert defect(64) < 1e-10
    assert math.log2(defect(16) / defect(32)) >= 3.5


def test_path_additivity():
    a, b, c = (0.0, 0.0), (0.4, -0.1), (0.1, 0.6)
    whole = integrate_field(_gradient_field, PathSpec((a, b, c), 8), np.array([2.0]))
    first = integrate_field(_gradient_field, PathSpec((a, b), 8), np.array([2.0]))
    second = integrate_field(_gradient_field, PathSpec((b, c), 8), first)
    assert np.array_equal(whole, second)


def test_path_validation():
    with pytest.raises(ValueError, match="two waypoints"):
        PathSpec(((0, 0),))
    with pytest.raises(ValueError, match="inconsistent"):
        PathSpec(((0, 0), (1, 1, 1)))
    with pytest.raises(ValueError, match="outside"):
        PathSpec(((0, 0), (5, 0))).check_domain(chart("flat2"))
    with pytest.raises(ValueError, match="does not close"):
        loop_defect(PathSpec(((0, 0), (0.1, 0))), trivial_state(2, "grs"), ConnectionField.flat(2))


def test_default_loop():
    loop = default_loop(chart("flat2"))
    assert loop.waypoints[0] == (-0.25, -0.25)
    assert loop.is_closed() and len(loop.segments) == 4


@pytest.mark.parametrize("target", ["riemannian", "grs"])
def test_trivial_state_stays_zero(target):
    flat = ConnectionField.flat(2)
    v0 = trivial_state(2, target)
    path = PathSpec(((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (0.0, 0.2)), 4)
    res = integrate_along(path, v0, flat)
    assert np.array_equal(res.final.vector, v0.vector)
    assert res.max_constraint == 0.0
    assert loop_defect(square_loop((0, 0), 1.0, steps=4), v0, flat) == 0.0


def test_initial_constraint_violation_rejected(rng):
    P, a, Rb, Rb1 = random_unknown_pieces(rng, 2)
    P[0, 0, 1] += 1e-3
    with pytest.raises(CauchyError, match="initial state"):
        integrate_along(PathSpec(((0, 0), (0.1, 0)), 2), pack(GrsUnknowns(P, a, Rb, Rb1)), ConnectionField.flat(2))


def test_drift_abort(rng):
    conn = ConnectionField.from_chart(chart("polynomial2"))
    u = project(GrsUnknowns(*random_unknown_pieces(rng, 2, 0.3)))
    with pytest.raises(CauchyError, match="constraint drift .* segment 1, step 1"):
        integrate_along(PathSpec(((0, 0), (0.2, 0.1)), 4), pack(u), conn, drift_tol=0.0)


@pytest.mark.parametrize("target", ["riemannian", "grs"])
@pytest.mark.parametrize("n", [2, 3])
def test_constraints_preserved_small_fields(rng, target, n):
    """20 steps from a small random constrained state on a flat base; baseline drift recorded below 1e-6."""
    P, a, Rb, Rb1 = random_unknown_pieces(rng, n, 1e-3)
    if target == "grs":
        u = project(GrsUnknowns(P, a, Rb, Rb1))
    else:
        u = project(RiemannUnknowns(np.eye(n), P, a, 1e-3 * rng.normal(size=(n,) * 3), 1e-3, Rb, Rb1))
    path = PathSpec((tuple([0.0] * n), tuple([0.2, 0.1] + [0.0] * (n - 2))), 20)
    res = integrate_along(path, pack(u), ConnectionField.flat(n))
    assert len(res.constraint_trace) == 20
    assert res.max_constraint < 1e-8
    assert res.max_drift < 1e-6
    assert constraint_violation(unpack(res.final)) < 1e-8
    if target == "riemannian":
        assert len(res.det_trace) == 20 and res.min_det > 0.9

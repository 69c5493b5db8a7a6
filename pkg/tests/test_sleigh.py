import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughnh.dynamics import integrate
from roughnh.errors import InvalidParameter
from roughnh.model import evaluate
from roughnh.sleigh import (
    bump,
    build_sleigh_system,
    calkin_wilf,
    rational_nodes,
    sleigh_circle,
    sleigh_surface,
    surface_profile,
)


def phi_ref(s, delta):
    """Scalar reference for the cut-off, written out directly."""
    t = 2.0 - abs(s) / delta
    if t <= 0:
        return 0.0
    if t >= 1:
        return 1.0
    e0, e1 = math.exp(-1.0 / t), math.exp(-1.0 / (1.0 - t))
    return e0 / (e0 + e1)


def series_ref(x, K, delta, interval=(-3.0, 3.0)):
    total = 0.0
    q = Fraction(1)
    for k in range(1, K + 1):
        xk = interval[0] + (interval[1] - interval[0]) * float(q / (1 + q))
        s = x - xk
        if abs(s) >= 1e-14:
            total += 2.0**-k * phi_ref(s, delta) * s**4 * math.cos(1.0 / s)
        q = 1 / (2 * math.floor(q) - q + 1)
    return total


def test_calkin_wilf_order():
    assert calkin_wilf(7) == [Fraction(1), Fraction(1, 2), Fraction(2), Fraction(1, 3), Fraction(3, 2), Fraction(2, 3), Fraction(3)]


def test_rational_nodes_in_domain():
    np.testing.assert_allclose(rational_nodes(4, (-3.0, 3.0)), [0.0, -1.0, 1.0, -1.5])
    nodes = rational_nodes(50, (-3.0, 3.0))
    assert np.all(np.abs(nodes) < 3.0)
    assert len(np.unique(nodes)) == 50


def test_bump_plateau_and_support():
    s = np.array([-0.3, -0.2, -0.1, -0.05, 0.0, 0.07, 0.1, 0.25])
    phi, _, _ = bump(s, 0.1)
    np.testing.assert_array_equal(phi[[0, 1, 7]], 0.0)
    np.testing.assert_array_equal(phi[[2, 3, 4, 5, 6]], 1.0)
    mid, _, _ = bump(np.array([0.15]), 0.1)
    assert mid[0] == pytest.approx(0.5)


def test_bump_derivatives_match_differences():
    s = np.linspace(-0.25, 0.25, 401)
    h = 1e-6
    phi, d1, d2 = bump(s, 0.1)
    p_plus, d1_plus, _ = bump(s + h, 0.1)
    p_minus, d1_minus, _ = bump(s - h, 0.1)
    np.testing.assert_allclose(d1, (p_plus - p_minus) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(d2, (d1_plus - d1_minus) / (2 * h), atol=2e-4)


def test_surface_vanishes_at_first_node():
    for y in (-1.0, 0.0, 2.5):
        f, g, H = sleigh_surface([0.0, y], K=1, delta=0.1)
        assert f == 0.0
        np.testing.assert_array_equal(g, 0.0)
        np.testing.assert_array_equal(H, 0.0)


def test_surface_vanishes_outside_supports():
    for x in (0.5, -0.5, 2.0, -2.9):
        f, g, _ = sleigh_surface([x, 0.3], K=4, delta=0.1)
        assert f == 0.0 and not g.any()


def test_surface_matches_series_summation():
    x = 0.0 + 0.1 / 2
    f, _, _ = sleigh_surface([x, 0.0], K=3, delta=0.1)
    assert f == pytest.approx(series_ref(x, 3, 0.1), rel=1e-13, abs=1e-18)
    for x in np.linspace(-1.7, 1.2, 37):
        assert surface_profile(np.array([x]), 4, 0.2)[0][0] == pytest.approx(series_ref(x, 4, 0.2), rel=1e-12, abs=1e-18)


def test_surface_derivatives_match_differences():
    x = np.linspace(-1.19, 1.19, 333)
    h = 1e-7
    F, F1, F2 = surface_profile(x, 3, 0.1)
    Fp, F1p, _ = surface_profile(x + h, 3, 0.1)
    Fm, F1m, _ = surface_profile(x - h, 3, 0.1)
    np.testing.assert_allclose(F1, (Fp - Fm) / (2 * h), atol=1e-7)
    # F'' oscillates like cos(1/s) near each node; compare away from them
    far = np.min(np.abs(x[:, None] - rational_nodes(3, (-3, 3))[None, :]), axis=1) > 0.02
    np.testing.assert_allclose(F2[far], ((F1p - F1m) / (2 * h))[far], atol=1e-4)


def test_surface_invalid_K():
    with pytest.raises(InvalidParameter):
        sleigh_surface([0.0, 0.0], K=0, delta=0.1)


@settings(max_examples=80, deadline=None)
@given(x=st.floats(-2.99, 2.99), K=st.integers(1, 8), delta=st.floats(0.02, 0.3))
def test_truncation_tail_bound(x, K, delta):
    fK = surface_profile(np.array([x]), K, delta)[0][0]
    fK1 = surface_profile(np.array([x]), K + 1, delta)[0][0]
    assert abs(fK1 - fK) <= 2.0 ** -(K + 1) * (2 * delta) ** 4 * (1 + 1e-12)


def test_flat_sleigh_metric():
    sys_ = build_sleigh_system(mass=2.0, inertia=0.5, K=0)
    for x in ([0.0, 0.0, 0.0], [1.2, -2.0, 40.0]):
        s = evaluate(sys_, x)
        np.testing.assert_array_equal(s.G, np.diag([2.0, 2.0, 0.5]))
        assert not s.dG.any()
    np.testing.assert_allclose(s.a, [[np.sin(40.0), -np.cos(40.0), 0.0]])


def test_rough_sleigh_metric_is_flat_on_first_node():
    sys_ = build_sleigh_system(mass=1.5, inertia=0.7, K=1)
    s = evaluate(sys_, [0.0, 0.4, 0.3])
    np.testing.assert_array_equal(s.G, np.diag([1.5, 1.5, 0.7]))


def test_rough_sleigh_metric_formula():
    m, J = 1.3, 0.8
    sys_ = build_sleigh_system(mass=m, inertia=J, K=3, delta=0.2)
    x = np.array([-0.93, 0.5, 0.1])
    fx = surface_profile(x[:1], 3, 0.2)[1][0]
    G = sys_.metric(x)
    np.testing.assert_allclose(G, [[m * (1 + fx**2), 0.0, 0.0], [0.0, m, 0.0], [0.0, 0.0, J]], rtol=1e-14)
    assert sys_.c1 <= min(np.linalg.eigvalsh(G)) and max(np.linalg.eigvalsh(G)) <= sys_.c2


def test_build_rejects_bad_parameters():
    with pytest.raises(InvalidParameter):
        build_sleigh_system(mass=0.0)
    with pytest.raises(InvalidParameter):
        build_sleigh_system(inertia=-1.0)
    with pytest.raises(InvalidParameter):
        build_sleigh_system(delta=0.0)


def test_closed_form_circle_is_consistent():
    t = np.linspace(0.0, 2.0, 9)
    pos, vel, acc = sleigh_circle(t, speed=1.5, omega=2.0, theta0=0.3)
    np.testing.assert_allclose(np.sin(pos[:, 2]) * vel[:, 0] - np.cos(pos[:, 2]) * vel[:, 1], 0.0, atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(vel[:, :2], axis=1), 1.5)
    np.testing.assert_allclose(np.linalg.norm(acc[:, :2], axis=1), 1.5 * 2.0)


def test_flat_sleigh_follows_circle():
    sys_ = build_sleigh_system(K=0)
    traj = integrate(sys_, [0.0, 0.0, 0.0], [1.0, 0.0, 2.0], tau=np.pi, dt=np.pi / 2000)
    pos, _, _ = sleigh_circle(traj.times, speed=1.0, omega=2.0)
    assert np.max(np.abs(traj.x - pos)) <= 1e-9
    radius = np.linalg.norm(traj.x[:, :2] - [0.0, 0.5], axis=1)
    np.testing.assert_allclose(radius, 0.5, atol=1e-9)

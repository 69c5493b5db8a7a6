import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughnh.dynamics import (
    acceleration,
    compute_multipliers,
    constraint_drift,
    energy_drift,
    generalized_force,
    integrate,
    max_acceleration,
    pointwise_multipliers,
    project_velocity,
    resample,
)
from roughnh.errors import AnchorViolation, InvalidParameter, LeftSublevel, OutOfDomain, SingularGram, StepTooLarge
from roughnh.model import Field, FieldSample, MechanicalSystem, PolynomialField, evaluate
from roughnh.sleigh import sleigh_circle

from systems import SMOOTH3_V0, SMOOTH3_X0, constant_system, flat_sleigh, free_line, gravity_line, hyperbola, smooth3


def sample(G, a, dG=None, da=None, gradV=None):
    G = np.asarray(G, dtype=float)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m, n = G.shape[0], a.shape[0]
    return FieldSample(
        x=np.zeros(m),
        G=G,
        dG=np.zeros((m, m, m)) if dG is None else dG,
        V=0.0,
        gradV=np.zeros(m) if gradV is None else np.asarray(gradV, dtype=float),
        a=a,
        da=np.zeros((n, m, m)) if da is None else da,
    )


def euler_lagrange_force(system, x, v, h=1e-5):
    """dL/dx - (dG/dt) v with every derivative taken by central differences of raw field values."""
    def lagrangian(y):
        return 0.5 * v @ system.metric(y) @ v - system.potential(y)

    m = len(x)
    dLdx = np.array([(lagrangian(x + h * e) - lagrangian(x - h * e)) / (2 * h) for e in np.eye(m)])
    Gdot = (system.metric(x + h * v) - system.metric(x - h * v)) / (2 * h)
    return dLdx - Gdot @ v


def test_force_vanishes_for_constant_fields():
    s = evaluate(free_line(), [0.2, 0.1])
    np.testing.assert_array_equal(generalized_force(s, [3.0, -2.0]), 0.0)


def test_force_of_linear_potential():
    s = evaluate(gravity_line(), [0.0, 0.0])
    np.testing.assert_allclose(generalized_force(s, [0.3, 1.0]), [-1.0, 0.0])


@pytest.mark.parametrize("x", [[0.0, 0.0], [0.5, 0.3], [-1.2, 2.0]])
def test_force_matches_euler_lagrange_oracle(x):
    lo, hi = -5 * np.ones(2), 5 * np.ones(2)
    sys_ = MechanicalSystem(
        m=2,
        n=1,
        lower=lo,
        upper=hi,
        metric=PolynomialField([[[[1.0, 0, 0], [1.0, 2, 0]], 0.0], [0.0, 1.0]], 2, (2, 2)),
        potential=Field.constant(0.0),
        constraint=Field.constant([[0.0, 1.0]]),
        h=10.0,
    )
    x = np.array(x)
    v = np.array([1.0, 1.0])
    F = generalized_force(evaluate(sys_, x), v)
    np.testing.assert_allclose(F, euler_lagrange_force(sys_, x, v), atol=1e-6)


def test_force_oracle_on_smooth3():
    sys_ = smooth3()
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = rng.uniform(-1.5, 1.5, 3)
        v = rng.normal(size=3)
        np.testing.assert_allclose(generalized_force(evaluate(sys_, x), v), euler_lagrange_force(sys_, x, v), atol=1e-6)


def test_multiplier_examples():
    assert compute_multipliers(evaluate(free_line(), [0, 0]), [0.0, 1.0])[0] == 0.0
    s = evaluate(gravity_line(), [0, 0])
    lam = compute_multipliers(s, [0.0, 1.0])
    assert lam[0] == pytest.approx(1.0)
    np.testing.assert_allclose(acceleration(s, [0.0, 1.0]), [0.0, 0.0], atol=1e-15)
    s = evaluate(hyperbola(), [1.0, 1.0])
    assert compute_multipliers(s, [1.0, -1.0])[0] == pytest.approx(1.0)
    np.testing.assert_allclose(acceleration(s, [1.0, -1.0]), [1.0, 1.0])


def test_acceleration_keeps_constraint_to_first_order():
    sys_ = smooth3()
    s = evaluate(sys_, SMOOTH3_X0)
    acc = acceleration(s, SMOOTH3_V0)
    h = 1e-5
    # a(x(t)) x'(t) along the second-order Taylor path
    def av(t):
        x = SMOOTH3_X0 + t * SMOOTH3_V0 + 0.5 * t * t * acc
        return sys_.constraint(x) @ (SMOOTH3_V0 + t * acc)
    assert abs((av(h) - av(-h)) / (2 * h))[0] <= 1e-8


def test_hyperbola_matches_holonomic_motion():
    # a = (x2, x1) makes x1 x2 constant: free motion on the hyperbola x1 x2 = 1
    traj = integrate(hyperbola(), [1.0, 1.0], [1.0, -1.0], tau=0.5, dt=1e-3)
    np.testing.assert_allclose(traj.x[:, 0] * traj.x[:, 1], 1.0, atol=1e-11)
    np.testing.assert_allclose(traj.acc[0], [1.0, 1.0])
    speed = np.linalg.norm(traj.v, axis=1)
    np.testing.assert_allclose(speed, np.sqrt(2.0), atol=1e-10)


def test_projection_examples():
    s = sample(np.eye(2), [[1.0, 0.0]])
    np.testing.assert_allclose(project_velocity(s, [1.0, 1.0]), [0.0, 1.0])
    np.testing.assert_array_equal(project_velocity(s, [0.0, 3.0]), [0.0, 3.0])
    G = np.diag([4.0, 1.0])
    s = sample(G, [[1.0, 1.0]])
    v = np.array([1.0, 0.0])
    vp = project_velocity(s, v)
    assert abs(np.sum(vp)) <= 1e-15
    # minimise (u - v)^T G (u - v) over u = (t, -t)
    t = (G[0, 0] * v[0] - G[1, 1] * 0.0) / (G[0, 0] + G[1, 1])
    np.testing.assert_allclose(vp, [t, -t])


def test_singular_gram():
    s = sample(np.eye(3), [[1.0, 0.0, 0.0], [1.0, 1e-7, 0.0]])
    with pytest.raises(SingularGram):
        compute_multipliers(s, np.zeros(3))
    with pytest.raises(SingularGram):
        project_velocity(s, np.ones(3))


def random_spd(rng, m):
    M = rng.normal(size=(m, m))
    return M @ M.T + 0.5 * np.eye(m)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 5))
def test_projection_is_idempotent(seed, m):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, m))
    s = sample(random_spd(rng, m), rng.normal(size=(n, m)))
    v = rng.normal(size=m)
    p = project_velocity(s, v)
    np.testing.assert_allclose(project_velocity(s, p), p, atol=1e-12 * (1 + np.linalg.norm(v)))
    assert np.max(np.abs(s.a @ p)) <= 1e-12 * (1 + np.linalg.norm(v)) * np.linalg.norm(s.a)


def test_integrate_linear_motion_exact():
    traj = integrate(free_line(), [0.0, 0.0], [0.0, 1.0], tau=1.0, dt=0.01)
    assert traj.N == 100 and traj.tau == pytest.approx(1.0)
    np.testing.assert_array_equal(traj.x[0], [0.0, 0.0])
    np.testing.assert_array_equal(traj.v[0], [0.0, 1.0])
    np.testing.assert_allclose(traj.x, np.column_stack([np.zeros(101), traj.times]), atol=1e-12)
    assert energy_drift(traj) <= 1e-14


def test_integrate_gravity_line():
    traj = integrate(gravity_line(), [0.0, 0.0], [0.0, 1.0], tau=1.0, dt=0.01)
    np.testing.assert_allclose(traj.x[:, 1], traj.times, atol=1e-12)
    np.testing.assert_allclose(traj.energy, 0.5, atol=1e-14)
    np.testing.assert_allclose(pointwise_multipliers(traj), 1.0)


def test_zero_force_straight_line():
    G = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 3.0]])
    sys_ = constant_system(G, [[1.0, -1.0, 2.0]])
    v0 = np.array([1.0, 1.0, 0.0])
    traj = integrate(sys_, [0.1, 0.2, 0.3], v0, tau=2.0, dt=0.05)
    np.testing.assert_allclose(traj.x, [0.1, 0.2, 0.3] + traj.times[:, None] * v0, atol=1e-13)
    np.testing.assert_allclose(traj.v, np.tile(v0, (41, 1)), atol=1e-14)


def test_flat_sleigh_circle():
    traj = integrate(flat_sleigh(), [0.0, 0.0, 0.0], [1.0, 0.0, 1.0], tau=10.0, dt=1e-3)
    pos, vel, _ = sleigh_circle(traj.times)
    assert np.max(np.abs(traj.x - pos)) <= 1e-6
    np.testing.assert_allclose(traj.x[:, 2], traj.times, atol=1e-10)
    assert energy_drift(traj) <= 1e-8
    assert constraint_drift(traj) <= 1e-10
    np.testing.assert_allclose(pointwise_multipliers(traj), -1.0, atol=1e-9)


def test_energy_drift_under_velocity_scaling():
    traj = integrate(flat_sleigh(), [0.0, 0.0, 0.0], [1.0, 0.0, 1.0], tau=1.0, dt=1e-2)
    quad = np.sum(traj.v**2, axis=1)  # v^T G v with G = I
    scaled = dataclasses.replace(traj, energy=0.5 * np.einsum("ji,ji->j", 2 * traj.v, 2 * traj.v))
    assert energy_drift(scaled) == pytest.approx(1.5 * np.max(quad), rel=1e-12)


def test_integrate_errors():
    with pytest.raises(AnchorViolation):
        integrate(free_line(), [0.0, 0.0], [1.0, 1.0], tau=1.0, dt=0.1)
    with pytest.raises(InvalidParameter):
        integrate(free_line(), [0.0, 0.0], [0.0, 1.0], tau=1.0, dt=0.3)
    with pytest.raises(InvalidParameter):
        integrate(free_line(), [0.0, 0.0], [0.0, 1.0], tau=-1.0, dt=0.1)
    with pytest.raises(OutOfDomain):
        integrate(free_line(), [0.0, 0.0], [0.0, 1.0], tau=10.0, dt=0.1)
    with pytest.raises(LeftSublevel):
        integrate(constant_system(np.eye(2), [[1.0, 0.0]], V=0.0, h=0.4), [0.0, 0.0], [0.0, 1.0], tau=1.0, dt=0.1)


def test_step_too_large():
    sys_ = hyperbola()
    with pytest.raises(StepTooLarge):
        integrate(sys_, [0.2, 0.2], [3.0, -3.0], tau=0.5, dt=0.05, stabilize=False)


def test_rk4_energy_order_on_smooth_system():
    drifts = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        traj = integrate(smooth3(), SMOOTH3_X0, SMOOTH3_V0, tau=2.0, dt=dt, stabilize=False)
        drifts.append(energy_drift(traj))
    orders = np.log2(np.array(drifts[:-1]) / np.array(drifts[1:]))
    assert np.all(orders >= 3.5)


def test_constraint_derivative_along_grid_is_small():
    for dt in (1e-2, 5e-3):
        traj = integrate(smooth3(), SMOOTH3_X0, SMOOTH3_V0, tau=1.0, dt=dt, stabilize=False)
        av = np.einsum("jkl,jl->jk", smooth3().constraint(traj.x), traj.v)
        dav = (av[2:] - av[:-2]) / (2 * dt)
        assert np.max(np.abs(dav)) <= 10.0 * dt**2


def test_resample_reproduces_trajectory_fields():
    traj = integrate(smooth3(), SMOOTH3_X0, SMOOTH3_V0, tau=0.2, dt=0.01)
    again = resample(traj, smooth3())
    np.testing.assert_allclose(again.acc, traj.acc, atol=1e-14)
    np.testing.assert_allclose(again.energy, traj.energy, atol=1e-14)
    assert max_acceleration(again) == pytest.approx(max_acceleration(traj))

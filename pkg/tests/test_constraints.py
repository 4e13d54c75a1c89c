import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from conftest import SinePath
from trayslide.constraints import (
    ConstantAlpha,
    ContactLoss,
    FrictionSpec,
    ObjectSpec,
    PiecewiseLinearAlpha,
    batch_margins,
    batch_margins_jacobian,
    coulomb_margin,
    learned_margin,
    margin_for_objects,
    virtual_tilt_test,
)
from trayslide.planner import PlanRequest, Trajectory, linearize_constraint
from trayslide.robot import JointLimits, JointState, Pose, RobotModel, tray_normal

UP = np.array([0.0, 0.0, 1.0])
finite = st.floats(-20, 20, allow_nan=False)


def test_coulomb_examples():
    assert coulomb_margin([0, 0, 9.81], UP, 0.21) == pytest.approx(2.0601, abs=1e-7)
    assert abs(coulomb_margin([0.21 * 9.81, 0, 9.81], UP, 0.21)) < 1e-9
    assert coulomb_margin([2.5, 0, 9.81], UP, 0.21) == pytest.approx(-0.4399, abs=1e-7)


def test_learned_constant_half():
    assert learned_margin([0, 0, 9.81], UP, 0.3, 0.21, ConstantAlpha(0.5)) == pytest.approx(1.03005, abs=1e-7)


def test_learned_alpha_one_is_coulomb_exactly():
    a = np.array([1.3, -0.7, 9.5])
    assert learned_margin(a, UP, 0.8, 0.21, ConstantAlpha(1.0)) == coulomb_margin(a, UP, 0.21)


@settings(max_examples=200, deadline=None)
@given(st.tuples(finite, finite, st.floats(0.1, 30)), st.floats(0, 1), st.floats(0, 3), st.floats(0, 1.9))
def test_learned_never_exceeds_coulomb(a, alpha, v, mu):
    assert learned_margin(a, UP, v, mu, ConstantAlpha(alpha)) <= coulomb_margin(a, UP, mu)


@settings(max_examples=200, deadline=None)
@given(st.tuples(finite, finite, st.floats(0.1, 30)), st.integers(0, 2**31 - 1), st.floats(0, 1.9))
def test_coulomb_rotation_invariant(a, seed, mu):
    R = Rotation.random(random_state=seed).as_matrix()
    a = np.array(a)
    assert abs(coulomb_margin(R @ a, R @ UP, mu) - coulomb_margin(a, UP, mu)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.tuples(finite, finite, finite))
def test_contact_loss_iff_nonpositive_pressure(a):
    if a[2] <= 0:
        with pytest.raises(ContactLoss):
            coulomb_margin(a, UP, 0.3)
    else:
        coulomb_margin(a, UP, 0.3)


def test_non_unit_normal_rejected():
    with pytest.raises(ValueError):
        coulomb_margin([0, 0, 9.81], [0, 0, 2.0], 0.2)


def test_single_object_at_rest(robot):
    q = robot.home
    m = margin_for_objects(robot, JointState.at_rest(q), [ObjectSpec(0.1, [0, 0, 0], 0.21)], FrictionSpec.coulomb())
    # at rest a = (0, 0, 9.81) in the world; the home pose need not be level
    assert m[0] == pytest.approx(coulomb_margin([0, 0, 9.81], tray_normal(robot, q), 0.21), abs=1e-9)


def test_margins_mass_independent(robot, rng):
    path = SinePath(rng, robot.home)
    q, qd, qdd = path(np.array([0.7]))
    s = JointState(q[0], qd[0], qdd[0])
    light = [ObjectSpec(0.1, [0.02, 0.01, 0.03], 0.3)]
    heavy = [ObjectSpec(7.5, [0.02, 0.01, 0.03], 0.3)]
    spec = FrictionSpec.coulomb()
    assert np.array_equal(margin_for_objects(robot, s, light, spec), margin_for_objects(robot, s, heavy, spec))


def test_mirrored_objects_under_translation():
    # two parallel z joints turning in opposite directions: the tray translates without rotating
    model = RobotModel(np.array([[0.5, 0.0, 0.0, 0.0], [0.2, 0.0, 0.0, 0.0]]), JointLimits.loose(2))
    state = JointState([0.3, 0.4], [1.5, -1.5], [2.0, -2.0])
    objs = [ObjectSpec(0.1, [0.05, 0, 0], 0.2), ObjectSpec(0.1, [-0.05, 0, 0], 0.2)]
    m = margin_for_objects(model, state, objs, FrictionSpec.coulomb())
    assert m[0] == pytest.approx(m[1], abs=1e-12)
    assert m[0] < 0.2 * 9.81 - 1.0  # the tray really is accelerating


def test_rotation_ordering_by_radius():
    omega = 2.0
    model = RobotModel(np.array([[0.0, 0.0, 0.0, 0.0]]), JointLimits.loose(1))
    radii = [0.03, 0.12]
    objs = [ObjectSpec(0.1, [r, 0, 0], 0.3) for r in radii]
    m = margin_for_objects(model, JointState([0.0], [omega], [0.0]), objs, FrictionSpec.coulomb())
    expect = [0.3 * 9.81 - omega**2 * r for r in radii]
    np.testing.assert_allclose(m, expect, atol=1e-7)
    assert m[0] > m[1]


@pytest.mark.parametrize("mu,expected", [(0.0, 0.0100), (0.21, 0.2131), (0.17, 0.1717)])
def test_virtual_tilt_examples(mu, expected):
    assert virtual_tilt_test(mu, 0.01) == pytest.approx(expected, abs=5e-5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1.2))
def test_virtual_tilt_overestimate_bound(mu):
    inc = 0.01
    measured = virtual_tilt_test(mu, inc)
    theta = np.arctan(mu)
    assert mu - 1e-12 <= measured <= mu + (np.tan(theta + inc) - np.tan(theta)) + 1e-12


def _fd_check(robot, spec, objects, q, qd, qdd, h=1e-6):
    margin, dmargin, an, dan = batch_margins_jacobian(robot, q, qd, qdd, objects, spec)
    x = np.concatenate([q, qd, qdd], axis=1)
    n = robot.n
    fd = np.zeros_like(dmargin)
    for k in range(3 * n):
        xp, xm = x.copy(), x.copy()
        xp[:, k] += h
        xm[:, k] -= h
        mp, _ = batch_margins(robot, xp[:, :n], xp[:, n:2 * n], xp[:, 2 * n:], objects, spec)
        mm, _ = batch_margins(robot, xm[:, :n], xm[:, n:2 * n], xm[:, 2 * n:], objects, spec)
        fd[:, :, k] = (mp - mm) / (2 * h)
    err = np.linalg.norm(dmargin - fd, axis=2)
    scale = np.linalg.norm(fd, axis=2)
    assert np.all(err <= 1e-3 * scale + 1e-6), float((err / np.maximum(scale, 1e-12)).max())
    m0, _ = batch_margins(robot, q, qd, qdd, objects, spec)
    np.testing.assert_allclose(margin, m0, atol=1e-12)


@pytest.mark.parametrize("kind", ["coulomb", "ramp", "constant"])
def test_margin_jacobian_finite_difference(robot, kind):
    rng = np.random.default_rng(21)
    spec = {
        "coulomb": FrictionSpec.coulomb(),
        "ramp": FrictionSpec.learned(PiecewiseLinearAlpha([0.0, 2.0], [1.0, 0.2])),
        "constant": FrictionSpec.learned(ConstantAlpha(0.6)),
    }[kind]
    objects = [ObjectSpec(0.1, [0, 0, 0.03], 0.21), ObjectSpec(0.2, [0.05, -0.03, 0.02], 0.4)]
    path = SinePath(rng, robot.home, amp=0.4)
    q, qd, qdd = path(rng.uniform(0, 3, size=8))
    _fd_check(robot, spec, objects, q, qd, qdd)


def test_flat_velocity_directions_at_rest(robot):
    q = robot.home[None]
    z = np.zeros_like(q)
    _, dm, _, _ = batch_margins_jacobian(robot, q, z, z, [ObjectSpec(0.1, [0.02, 0, 0.03], 0.21)], FrictionSpec.coulomb())
    np.testing.assert_allclose(dm[0, 0, 6:12], 0.0, atol=1e-12)


def test_constant_alpha_rows_scale_normal_term(robot, rng):
    path = SinePath(rng, robot.home)
    q, qd, qdd = path(rng.uniform(0, 3, 5))
    objs = [ObjectSpec(0.1, [0, 0, 0.03], 0.21)]
    mc, dmc, an, dan = batch_margins_jacobian(robot, q, qd, qdd, objs, FrictionSpec.coulomb())
    ml, dml, _, _ = batch_margins_jacobian(robot, q, qd, qdd, objs, FrictionSpec.learned(ConstantAlpha(0.4)))
    np.testing.assert_allclose(ml - mc, (0.4 - 1.0) * 0.21 * an, atol=1e-12)
    np.testing.assert_allclose(dml - dmc, (0.4 - 1.0) * 0.21 * dan, atol=1e-10)


def test_linearize_constraint_rows(robot):
    req = PlanRequest(Pose.level([0.5, 0.3, 0.2]), Pose.level([0.3, 0.5, 0.2]), [ObjectSpec(0.1, [0, 0, 0.03], 0.21)],
                      FrictionSpec.coulomb(), robot)
    rng = np.random.default_rng(4)
    path = SinePath(rng, robot.home)
    q, qd, qdd = path(np.linspace(0, 1, 5))
    traj = Trajectory(q, qd, qdd, 0.25)
    J, g = linearize_constraint(req, traj, 2)
    m, dm, _, _ = batch_margins_jacobian(robot, q[2:3], qd[2:3], qdd[2:3], req.objects, FrictionSpec.coulomb())
    assert J.shape == (1, 18)
    np.testing.assert_allclose(g, req.margin_offset - m[0])
    np.testing.assert_allclose(J, -dm[0])
    with pytest.raises(IndexError):
        linearize_constraint(req, traj, 9)


def test_friction_spec_round_trip(tmp_path):
    spec = FrictionSpec.learned(PiecewiseLinearAlpha([0, 1], [1, 0.5]), mu_s=0.3)
    again = FrictionSpec.from_dict(spec.to_dict())
    assert again.variant == "learned" and again.mu_s == 0.3
    v = np.linspace(0, 1.5, 7)
    np.testing.assert_array_equal(again.alpha(v)[0], spec.alpha(v)[0])


def test_alpha_clamp():
    spec = FrictionSpec.learned(PiecewiseLinearAlpha([0, 1], [1.4, -0.5]))
    a, g = spec.alpha(np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(a, [1.0, 0.45, 0.05])
    assert g[0] == 0.0 and g[2] == 0.0 and g[1] != 0.0

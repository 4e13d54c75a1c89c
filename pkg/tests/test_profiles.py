import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from trayslide.pipeline import COLLECT_END, COLLECT_START
from trayslide.profiles import (
    cartesian_samples,
    jerk_at,
    limit_grid,
    line_to_joint_trajectory,
    sample_profile,
    scurve_plan,
)
from trayslide.robot import tray_frames


def integrate_jerk(profile, t_eval):
    """Numerically integrate the emitted jerk signal phase by phase."""
    bounds = np.concatenate([[0.0], np.cumsum(profile.phase_durations)])
    y = np.zeros(3)
    out = np.zeros((t_eval.size, 3))
    for k, j in enumerate(profile.jerks):
        lo, hi = bounds[k], bounds[k + 1]
        if hi <= lo:
            continue
        sol = solve_ivp(lambda t, s, j=j: [s[1], s[2], j], (lo, hi), y, rtol=1e-13, atol=1e-15, method="DOP853",
                        dense_output=True)
        inside = (t_eval >= lo) & (t_eval <= hi)
        if inside.any():
            out[inside] = sol.sol(t_eval[inside]).T
        y = sol.y[:, -1]
    return out


def test_collection_move_integration_oracle():
    prof = scurve_plan(0.5, 2.5, 10.0)
    assert prof.peak_acceleration == pytest.approx(2.5, abs=1e-12)
    t = np.linspace(0, prof.total_time, 301)
    p, v, a = sample_profile(prof, t)
    ref = integrate_jerk(prof, t)
    assert np.abs(p - ref[:, 0]).max() < 1e-9
    assert np.abs(v - ref[:, 1]).max() < 1e-9
    assert p[-1] == pytest.approx(0.5, abs=1e-12)


def test_fig3_event_on_fastest_profile():
    # the fastest grid profile passes (t, v, a) = (0.294, 0.423, 2.5) to display precision
    _, v, a = sample_profile(scurve_plan(0.5, 2.5, 10.0), 0.294)
    assert v == pytest.approx(0.423, abs=1.5e-3)
    assert a == pytest.approx(2.5, abs=1e-12)


def test_triangular_jerk_closed_form():
    d, j = 1e-4, 10.0
    prof = scurve_plan(d, 1e3, j)
    assert prof.total_time == pytest.approx(2 * (4 * d / j) ** (1 / 3), rel=1e-12)
    assert prof.phase_durations[1] == prof.phase_durations[3] == prof.phase_durations[5] == 0.0


def test_sample_endpoints():
    prof = scurve_plan(0.37, 1.3, 4.2)
    assert sample_profile(prof, 0.0) == (0.0, 0.0, 0.0)
    p, v, a = sample_profile(prof, prof.total_time)
    assert p == pytest.approx(0.37, abs=1e-9) and abs(v) < 1e-9 and abs(a) < 1e-9
    with pytest.raises(ValueError):
        sample_profile(prof, prof.total_time + 1.0)


profile_args = st.tuples(st.floats(0.01, 2.0), st.floats(0.2, 5.0), st.floats(0.5, 50.0))


@settings(max_examples=100, deadline=None)
@given(profile_args)
def test_profile_limits_and_monotonicity(args):
    d, a_max, j_max = args
    prof = scurve_plan(d, a_max, j_max)
    t = np.linspace(0, prof.total_time, 400)
    p, v, a = sample_profile(prof, t)
    assert np.all(np.abs(a) <= a_max * (1 + 1e-9))
    assert np.all(np.abs(jerk_at(prof, t)) <= j_max)
    assert np.all(np.diff(p) >= -1e-12)
    assert np.all(v >= -1e-9)
    assert p[-1] == pytest.approx(d, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(profile_args)
def test_doubling_jerk_never_slower(args):
    d, a_max, j_max = args
    assert scurve_plan(d, a_max, 2 * j_max).total_time <= scurve_plan(d, a_max, j_max).total_time * (1 + 1e-12)


def test_invalid_profile_arguments():
    with pytest.raises(ValueError):
        scurve_plan(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        scurve_plan(0.5, -1.0, 1.0)


def test_limit_grid():
    g = limit_grid()
    assert len(g) == 16 and g[0] == (1.0, 1.0) and g[-1] == (2.5, 10.0)


def test_zero_length_line(robot):
    traj = line_to_joint_trajectory(robot, [0.4, 0.3, 0.2], [0.4, 0.3, 0.2], scurve_plan(0.1, 1, 1))
    assert np.ptp(traj.q, axis=0).max() == 0.0 and np.all(traj.qd == 0)


@pytest.fixture(scope="module")
def collection_traj(robot):
    prof = scurve_plan(0.5, 2.5, 10.0)
    start = np.array(COLLECT_START)
    return prof, line_to_joint_trajectory(robot, COLLECT_START, COLLECT_END, prof, 0.002,
                                          yaw=float(np.arctan2(start[1], start[0])))


def test_collection_segment_fk_replay(robot, collection_traj):
    prof, traj = collection_traj
    p, _, _ = sample_profile(prof, np.minimum(traj.times, prof.total_time))
    start, end = np.array(COLLECT_START), np.array(COLLECT_END)
    expected = start + p[:, None] * (end - start) / np.linalg.norm(end - start)
    fr = tray_frames(robot, traj.q)
    assert np.abs(fr["p"] - expected).max() < 1e-4
    np.testing.assert_allclose(fr["R"][:, :, 2], np.tile([0, 0, 1.0], (traj.H + 1, 1)), atol=1e-6)


def test_collection_segment_speed(robot, collection_traj):
    prof, traj = collection_traj
    _, v, _ = sample_profile(prof, np.minimum(traj.times, prof.total_time))
    speed = np.linalg.norm(tray_frames(robot, traj.q, traj.qd)["v"], axis=1)
    assert np.abs(speed - v).max() < 1e-3
    assert traj.integration_residual() < 1e-8


def test_cartesian_samples_match_profile():
    prof = scurve_plan(0.5, 2.0, 7.0)
    t, v, a = cartesian_samples(prof)
    assert t[1] - t[0] == pytest.approx(0.002)
    assert t[-1] >= prof.total_time
    assert v.max() == pytest.approx(prof.peak_velocity, rel=1e-3)

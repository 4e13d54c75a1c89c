"""Jerk-limited rest-to-rest straight-line profiles for data collection.

A seven-phase S-curve (+j, 0, -j, cruise, -j, 0, +j) is the time-optimal
rest-to-rest motion under acceleration and jerk bounds. Phases may collapse:
no constant-acceleration phase when ``a_max`` is never reached, no cruise
when ``v_max`` is never reached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .robot import IKFailure, JointState, Pose, inverse_kinematics

DEFAULT_CONTROL_DT = 0.002


@dataclass(frozen=True)
class ScurveProfile:
    distance: float
    a_max: float
    j_max: float
    v_max: float | None
    phase_durations: tuple
    total_time: float

    @property
    def jerks(self):
        j = self.j_max
        return (j, 0.0, -j, 0.0, -j, 0.0, j)

    @property
    def peak_velocity(self):
        return self._boundaries()[3][1]

    @property
    def peak_acceleration(self):
        return self._boundaries()[1][2]

    def _boundaries(self):
        """(p, v, a) at the start of each phase, plus the final state."""
        states = [(0.0, 0.0, 0.0)]
        p, v, a = 0.0, 0.0, 0.0
        for T, j in zip(self.phase_durations, self.jerks):
            p, v, a = _advance(p, v, a, j, T)
            states.append((p, v, a))
        return states

    def to_dict(self):
        return {
            "distance": self.distance,
            "a_max": self.a_max,
            "j_max": self.j_max,
            "v_max": self.v_max,
            "phase_durations": list(self.phase_durations),
            "total_time": self.total_time,
        }


def _advance(p, v, a, j, T):
    return (
        p + v * T + a * T * T / 2.0 + j * T**3 / 6.0,
        v + a * T + j * T * T / 2.0,
        a + j * T,
    )


def scurve_plan(distance, a_max, j_max, v_max=None):
    """Time-optimal rest-to-rest jerk-limited profile over ``distance``."""
    if not distance > 0 or not a_max > 0 or not j_max > 0:
        raise ValueError("distance, a_max and j_max must be positive")
    if v_max is not None and not v_max > 0:
        raise ValueError("v_max must be positive")
    d, a, j = float(distance), float(a_max), float(j_max)

    def accel_phase(v_peak):
        # jerk time and constant-acceleration time to go from rest to v_peak
        if v_peak * j >= a * a:
            tj = a / j
            return tj, v_peak / a - tj
        return np.sqrt(v_peak / j), 0.0

    def accel_distance(v_peak):
        tj, ta = accel_phase(v_peak)
        return v_peak * (2 * tj + ta) / 2.0  # symmetric velocity ramp

    # largest peak speed that fits in half the distance
    if d >= 2 * a**3 / j**2:
        v_fit = (-a * a / j + np.sqrt(a**4 / j**2 + 4 * a * d)) / 2.0
    else:
        v_fit = j * (d / (2 * j)) ** (2.0 / 3.0)
    v_peak = v_fit if v_max is None else min(v_fit, float(v_max))
    tj, ta = accel_phase(v_peak)
    tv = max(0.0, (d - 2 * accel_distance(v_peak)) / v_peak)
    phases = (tj, ta, tj, tv, tj, ta, tj)
    return ScurveProfile(d, a, j, None if v_max is None else float(v_max), phases, float(sum(phases)))


def sample_profile(profile, t):
    """Position, velocity and acceleration at time ``t`` (scalar or array)."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < -1e-12) or np.any(t_arr > profile.total_time + 1e-12):
        raise ValueError("t outside [0, total_time]")
    starts = np.concatenate([[0.0], np.cumsum(profile.phase_durations)])
    bounds = profile._boundaries()
    idx = np.clip(np.searchsorted(starts, t_arr, side="right") - 1, 0, 6)
    jerks = np.array(profile.jerks)
    p0 = np.array([b[0] for b in bounds])[idx]
    v0 = np.array([b[1] for b in bounds])[idx]
    a0 = np.array([b[2] for b in bounds])[idx]
    tau = np.clip(t_arr - starts[idx], 0.0, None)
    p, v, a = _advance(p0, v0, a0, jerks[idx], tau)
    end = t_arr >= profile.total_time
    p = np.where(end, profile.distance, p)
    v = np.where(end, 0.0, v)
    a = np.where(end, 0.0, a)
    if np.ndim(t) == 0:
        return float(p[0]), float(v[0]), float(a[0])
    return p, v, a


def jerk_at(profile, t):
    starts = np.concatenate([[0.0], np.cumsum(profile.phase_durations)])
    idx = np.clip(np.searchsorted(starts, np.asarray(t, dtype=float), side="right") - 1, 0, 6)
    return np.array(profile.jerks)[idx]


def line_to_joint_trajectory(model, start, end, profile, control_dt=DEFAULT_CONTROL_DT, seed=None, yaw=None,
                             min_manipulability=1e-3):
    """Joint trajectory moving the level tray along the segment ``start -> end``.

    IK is solved sample by sample, each seeded from the previous one. The
    returned waypoints hold piecewise-constant joint accelerations chosen so
    that integrating them reproduces every IK sample exactly.
    """
    from .planner import Trajectory

    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    seg = end - start
    length = float(np.linalg.norm(seg))
    seed = model.home if seed is None else np.asarray(seed, dtype=float)
    if yaw is None:
        yaw = float(np.arctan2(start[1], start[0]))
    if length == 0.0:
        q0 = inverse_kinematics(model, Pose.level(start, yaw), seed)
        return Trajectory.from_points([JointState.at_rest(q0)] * 2, control_dt)
    direction = seg / length
    steps = int(np.ceil(profile.total_time / control_dt - 1e-9))
    times = np.minimum(np.arange(steps + 1) * control_dt, profile.total_time)
    s, _, _ = sample_profile(profile, times)
    s = s * (length / profile.distance)

    qs = np.empty((steps + 1, model.n))
    q = seed
    for k in range(steps + 1):
        target = Pose.level(start + s[k] * direction, yaw)
        try:
            q = inverse_kinematics(model, target, q, min_manipulability=min_manipulability)
        except IKFailure as exc:
            raise IKFailure(f"sample {k} at t={times[k]:.3f}s: {exc}") from exc
        qs[k] = q
    return Trajectory.from_positions(qs, control_dt)


def cartesian_samples(profile, control_dt=DEFAULT_CONTROL_DT):
    """(t, speed, |acc|) of the planned tray motion at controller ticks."""
    steps = int(np.ceil(profile.total_time / control_dt - 1e-9))
    t = np.arange(steps + 1) * control_dt
    _, v, a = sample_profile(profile, np.minimum(t, profile.total_time))
    return t, np.abs(v), np.abs(a)


def limit_grid(a_range=(1.0, 2.5), j_range=(1.0, 10.0), n_acc=4, n_jerk=4):
    acc = np.linspace(a_range[0], a_range[1], n_acc) if n_acc > 1 else np.array([a_range[1]])
    jerk = np.linspace(j_range[0], j_range[1], n_jerk) if n_jerk > 1 else np.array([j_range[1]])
    return [(float(a), float(j)) for a in acc for j in jerk]


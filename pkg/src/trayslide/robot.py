"""Serial-chain kinematics for a tray-carrying arm.

Everything here is a pure function of a :class:`RobotModel` and joint
values. Batched variants accept ``(B, n)`` arrays and are what the planner
and simulator call; the scalar helpers wrap them for single states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels


class DimensionError(ValueError):
    pass


class IKFailure(RuntimeError):
    pass


def _check_rotation(R, tol=1e-9, what="rotation"):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise DimensionError(f"{what} must be 3x3")
    if np.linalg.norm(R.T @ R - np.eye(3)) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError(f"{what} is not a proper rotation")
    return R


def quat_to_rot(wxyz):
    w, x, y, z = np.asarray(wxyz, dtype=float) / np.linalg.norm(wxyz)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(R):
    from scipy.spatial.transform import Rotation

    x, y, z, w = Rotation.from_matrix(R).as_quat()
    q = np.array([w, x, y, z])
    return q if q[0] >= 0 else -q


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_error(R_target, R):
    """Axis-angle vector (world frame) rotating ``R`` onto ``R_target``."""
    from scipy.spatial.transform import Rotation

    return Rotation.from_matrix(R_target @ R.T).as_rotvec()


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if t.shape != (3,):
            raise DimensionError("translation must be a 3-vector")
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def level(cls, position, yaw=0.0):
        """Tray pose with +z up and the given heading about world z."""
        return cls(rot_z(yaw), position)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def to_dict(self):
        return {"quaternion_wxyz": rot_to_quat(self.rotation).tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, data):
        if "rotation" in data:
            R = np.asarray(data["rotation"], dtype=float)
        elif "quaternion_wxyz" in data:
            R = quat_to_rot(data["quaternion_wxyz"])
        else:
            R = rot_z(float(data.get("yaw", 0.0)))
        return cls(R, data["translation"] if "translation" in data else data["position"])


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        for name in ("q", "qd", "qdd"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        if not (self.q.shape == self.qd.shape == self.qdd.shape):
            raise DimensionError("q, qd, qdd must have equal length")

    @classmethod
    def at_rest(cls, q):
        q = np.asarray(q, dtype=float)
        return cls(q, np.zeros_like(q), np.zeros_like(q))


@dataclass(frozen=True)
class JointLimits:
    pos_min: np.ndarray
    pos_max: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    jerk: np.ndarray

    def __post_init__(self):
        for name in ("pos_min", "pos_max", "vel", "acc", "jerk"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if np.any(self.pos_min >= self.pos_max):
            raise ValueError("empty joint position interval")
        if np.any(self.vel <= 0) or np.any(self.acc <= 0) or np.any(self.jerk <= 0):
            raise ValueError("velocity, acceleration and jerk bounds must be positive")

    @classmethod
    def loose(cls, n, bound=1e6):
        big = np.full(n, bound)
        return cls(-big, big, big, big, big)


@dataclass(frozen=True)
class RobotModel:
    """Standard-DH serial chain with a tray rigidly attached to the flange.

    ``dh`` rows are ``(a, d, alpha, theta_offset)``; ``tray`` is the
    flange-to-tray transform; ``gravity`` is the world gravity vector.
    """

    dh: np.ndarray
    limits: JointLimits
    tray: Pose = field(default_factory=Pose.identity)
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    home: np.ndarray | None = None
    name: str = "robot"

    def __post_init__(self):
        dh = np.asarray(self.dh, dtype=float)
        if dh.ndim != 2 or dh.shape[1] != 4 or dh.shape[0] < 1:
            raise DimensionError("dh must have shape (n, 4)")
        object.__setattr__(self, "dh", dh)
        if self.limits.pos_min.shape != (dh.shape[0],):
            raise DimensionError("joint limits must match the number of DH rows")
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(3))
        if self.home is not None:
            object.__setattr__(self, "home", np.asarray(self.home, dtype=float).reshape(dh.shape[0]))

    @property
    def n(self):
        return self.dh.shape[0]

    @property
    def tray_normal_flange(self):
        return self.tray.rotation[:, 2]

    def point_in_flange(self, offset):
        """Flange-frame coordinates of tray-frame point(s)."""
        offset = np.asarray(offset, dtype=float)
        return offset @ self.tray.rotation.T + self.tray.translation

    def with_limits(self, limits):
        return RobotModel(self.dh, limits, self.tray, self.gravity, self.home, self.name)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return {
            "name": self.name,
            "dh_rows": [dict(zip(("a", "d", "alpha", "theta_offset"), map(float, row))) for row in self.dh],
            "joint_limits": [
                {
                    "pos": [float(self.limits.pos_min[i]), float(self.limits.pos_max[i])],
                    "vel": float(self.limits.vel[i]),
                    "acc": float(self.limits.acc[i]),
                    "jerk": float(self.limits.jerk[i]),
                }
                for i in range(self.n)
            ],
            "tray_transform": self.tray.to_dict(),
            "gravity": self.gravity.tolist(),
            "home": None if self.home is None else self.home.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        rows = []
        for row in data["dh_rows"]:
            if isinstance(row, dict):
                rows.append([row["a"], row["d"], row["alpha"], row.get("theta_offset", 0.0)])
            else:
                rows.append(list(row))
        jl = data["joint_limits"]
        limits = JointLimits(
            pos_min=[j["pos"][0] for j in jl],
            pos_max=[j["pos"][1] for j in jl],
            vel=[j["vel"] for j in jl],
            acc=[j["acc"] for j in jl],
            jerk=[j["jerk"] for j in jl],
        )
        tray = Pose.from_dict(data["tray_transform"]) if "tray_transform" in data else Pose.identity()
        return cls(
            dh=np.array(rows, dtype=float),
            limits=limits,
            tray=tray,
            gravity=data.get("gravity", [0.0, 0.0, -9.81]),
            home=data.get("home"),
            name=data.get("name", "robot"),
        )


def load_robot(path=None):
    """Load a robot model JSON file; ``None`` loads the bundled UR5e-like arm."""
    if path is None:
        text = resources.files("trayslide").joinpath("data/ur5e.json").read_text()
    else:
        text = Path(path).read_text()
    return RobotModel.from_dict(json.loads(text))


def default_robot():
    return load_robot(None)


# ---------------------------------------------------------------------------
# batched kinematics
# ---------------------------------------------------------------------------


def _batch(model, q):
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    if q2.shape[1] != model.n:
        raise DimensionError(f"expected {model.n} joint values, got {q2.shape[1]}")
    return q2, single


def flange_kinematics(model, q, qd=None, qdd=None):
    q2, _ = _batch(model, q)
    qd2 = np.zeros_like(q2) if qd is None else np.atleast_2d(np.asarray(qd, dtype=float))
    qdd2 = np.zeros_like(q2) if qdd is None else np.atleast_2d(np.asarray(qdd, dtype=float))
    if qd2.shape != q2.shape or qdd2.shape != q2.shape:
        raise DimensionError("q, qd, qdd shapes differ")
    return kernels.chain(model.dh, q2, qd2, qdd2)


def _cross(a, b):
    # np.cross spends most of its time on axis bookkeeping for small batches
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def tray_frames(model, q, qd=None, qdd=None):
    """Tray-frame kinematics for a batch of states.

    Returns a dict with ``R`` (B,3,3) tray orientation, ``p`` tray origin,
    ``v`` tray-origin velocity, ``acc`` tray-origin linear acceleration
    (without gravity), ``w`` and ``wd`` angular velocity and acceleration.
    """
    R, o, w, wd, v, acc = flange_kinematics(model, q, qd, qdd)
    r = R @ model.tray.translation
    return {
        "R": R @ model.tray.rotation,
        "p": o + r,
        "v": v + _cross(w, r),
        "acc": acc + _cross(wd, r) + _cross(w, _cross(w, r)),
        "w": w,
        "wd": wd,
    }


def forward_kinematics(model, q):
    """Tray pose in the world frame."""
    q2, single = _batch(model, q)
    if not single:
        raise DimensionError("forward_kinematics takes a single configuration; use tray_frames for batches")
    frames = tray_frames(model, q2)
    return Pose(frames["R"][0], frames["p"][0])


def tray_normal(model, q):
    q2, single = _batch(model, q)
    n = tray_frames(model, q2)["R"][:, :, 2]
    return n[0] if single else n


def ee_linear_velocity(model, q, qd):
    q2, single = _batch(model, q)
    v = tray_frames(model, q2, qd)["v"]
    return v[0] if single else v


def centroid_acceleration(model, state, offset=(0.0, 0.0, 0.0)):
    """Specific force the tray must supply to a point fixed at ``offset`` (tray frame).

    Equal to the point's world acceleration minus gravity, so a stationary
    level tray gives ``(0, 0, 9.81)``.
    """
    out = point_specific_force(model, state.q, state.qd, state.qdd, np.asarray(offset, dtype=float)[None, :])
    return out[0, 0]


def point_specific_force(model, q, qd, qdd, offsets):
    """Specific force at tray-frame points, shape (B, m, 3)."""
    R, o, w, wd, v, acc = flange_kinematics(model, q, qd, qdd)
    u = model.point_in_flange(offsets)
    r = np.einsum("bij,mj->bmi", R, u)
    w_ = w[:, None, :]
    return acc[:, None, :] + _cross(wd[:, None, :], r) + _cross(w_, _cross(w_, r)) - model.gravity


def jacobian(model, q):
    """Geometric Jacobian (6 x n) of the tray origin: linear rows, then angular."""
    q = np.asarray(q, dtype=float)
    n = model.n
    # one batch: column j is the tray twist for unit velocity of joint j
    fr = tray_frames(model, np.repeat(q[None, :], n, axis=0), np.eye(n))
    return np.vstack([fr["v"].T, fr["w"].T])


def manipulability(model, q):
    J = jacobian(model, q)
    return float(np.sqrt(max(np.linalg.det(J @ J.T), 0.0)))


def inverse_kinematics(
    model, target, seed, tol=1e-10, max_iter=200, damping=1e-3, max_step=0.3, min_manipulability=1e-4
):
    """Damped least-squares IK for a full tray pose, seeded at ``seed``.

    Raises :class:`IKFailure` when the iteration does not converge or ends
    near a singularity.
    """
    q = np.array(seed, dtype=float)
    for _ in range(max_iter):
        pose = forward_kinematics(model, q)
        err = np.concatenate([target.translation - pose.translation, rotation_error(target.rotation, pose.rotation)])
        if np.linalg.norm(err) < tol:
            break
        J = jacobian(model, q)
        step = J.T @ np.linalg.solve(J @ J.T + damping**2 * np.eye(6), err)
        step_norm = np.linalg.norm(step)
        if step_norm > max_step:
            step *= max_step / step_norm
        q = q + step
    else:
        raise IKFailure(f"IK did not converge (residual {np.linalg.norm(err):.2e})")
    # closest 2*pi-equivalent of the solution to the seed
    seed = np.asarray(seed, dtype=float)
    q = seed + (q - seed + np.pi) % (2.0 * np.pi) - np.pi
    if manipulability(model, q) < min_manipulability:
        raise IKFailure("IK solution is near a singularity")
    return q

"""Jerk-minimizing SQP over waypoint states with a time-shrinking outer loop.

The trajectory has H + 1 waypoints ``x_i = (q_i, qd_i, qdd_i)`` a fixed
``t_step`` apart, with constant joint acceleration on each interval:

    q_{i+1}  = q_i + t qd_i + t^2 qdd_i / 2
    qd_{i+1} = qd_i + t qdd_i

The start state is pinned (rest at the IK solution of ``g_start``), so every
waypoint is a linear function of the stacked accelerations; those are the
decision variables of the QP subproblems. Friction margins are enforced at
each waypoint and at the end of each interval (where the acceleration of the
interval meets the position and velocity of the next waypoint), linearized
around the current iterate and relaxed with L1-penalized slacks.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import clarabel
import numpy as np
from scipy import sparse

from .constraints import FrictionSpec, ObjectSpec, batch_margins, batch_margins_jacobian
from .robot import JointState, Pose, RobotModel, inverse_kinematics

log = logging.getLogger(__name__)

CONTACT_FLOOR = 0.5  # m/s^2, normal specific force demanded when contact is lost


class Infeasible(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# trajectory container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    t_step: float

    def __post_init__(self):
        for name in ("q", "qd", "qdd"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.q.shape == self.qd.shape == self.qdd.shape) or self.q.ndim != 2:
            raise ValueError("q, qd, qdd must share shape (H + 1, n)")
        if self.q.shape[0] < 2:
            raise ValueError("a trajectory needs at least two waypoints")
        if not self.t_step > 0:
            raise ValueError("t_step must be positive")

    @property
    def H(self):
        return self.q.shape[0] - 1

    @property
    def duration(self):
        return self.H * self.t_step

    @property
    def times(self):
        return np.arange(self.H + 1) * self.t_step

    @property
    def points(self):
        return [JointState(self.q[i], self.qd[i], self.qdd[i]) for i in range(self.H + 1)]

    @classmethod
    def from_points(cls, points, t_step):
        return cls(
            np.array([p.q for p in points]),
            np.array([p.qd for p in points]),
            np.array([p.qdd for p in points]),
            t_step,
        )

    @classmethod
    def from_accelerations(cls, q0, qd0, qdd, t_step):
        """Integrate piecewise-constant accelerations from ``(q0, qd0)``."""
        qdd = np.asarray(qdd, dtype=float)
        q = np.empty_like(qdd)
        qd = np.empty_like(qdd)
        q[0] = q0
        qd[0] = qd0
        for i in range(qdd.shape[0] - 1):
            q[i + 1] = q[i] + t_step * qd[i] + 0.5 * t_step * t_step * qdd[i]
            qd[i + 1] = qd[i] + t_step * qdd[i]
        return cls(q, qd, qdd, t_step)

    @classmethod
    def from_positions(cls, qs, t_step):
        """Piecewise-constant accelerations that pass through every sample, from rest."""
        qs = np.asarray(qs, dtype=float)
        qd = np.zeros_like(qs)
        qdd = np.zeros_like(qs)
        for i in range(qs.shape[0] - 1):
            qdd[i] = 2.0 * (qs[i + 1] - qs[i] - t_step * qd[i]) / t_step**2
            qd[i + 1] = qd[i] + t_step * qdd[i]
        return cls.from_accelerations(qs[0], qd[0], qdd, t_step)

    @classmethod
    def constant(cls, q, H, t_step):
        q = np.asarray(q, dtype=float)
        z = np.zeros((H + 1, q.size))
        return cls(z + q, z.copy(), z.copy(), t_step)

    def integration_residual(self):
        t = self.t_step
        rq = self.q[1:] - (self.q[:-1] + t * self.qd[:-1] + 0.5 * t * t * self.qdd[:-1])
        rv = self.qd[1:] - (self.qd[:-1] + t * self.qdd[:-1])
        return max(np.abs(rq).max(initial=0.0), np.abs(rv).max(initial=0.0))

    def jerk(self):
        return np.diff(self.qdd, axis=0) / self.t_step

    def interval_end_states(self):
        """(q_{i+1}, qd_{i+1}, qdd_i) for every interval."""
        return self.q[1:], self.qd[1:], self.qdd[:-1]

    def sample(self, times):
        """Joint state at arbitrary times (held at the last waypoint afterwards)."""
        times = np.asarray(times, dtype=float)
        idx = np.clip(np.floor(times / self.t_step + 1e-9).astype(int), 0, self.H)
        tau = np.clip(times - idx * self.t_step, 0.0, None)
        last = idx >= self.H
        tau = np.where(last, 0.0, tau)
        acc = np.where(last[:, None], 0.0, self.qdd[idx])
        q = self.q[idx] + tau[:, None] * self.qd[idx] + 0.5 * (tau * tau)[:, None] * acc
        qd = self.qd[idx] + tau[:, None] * acc
        if np.any(last):
            qd = np.where(last[:, None], self.qd[self.H], qd)
        return q, qd, acc

    def rescaled(self, t_step):
        """Same waypoint positions traversed with a different step."""
        r = self.t_step / t_step
        return Trajectory(self.q.copy(), self.qd * r, self.qdd * r * r, t_step)

    def to_dict(self):
        return {"t_step": self.t_step, "q": self.q.tolist(), "qd": self.qd.tolist(), "qdd": self.qdd.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["q"]), np.array(d["qd"]), np.array(d["qdd"]), float(d["t_step"]))


# ---------------------------------------------------------------------------
# request / result
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanRequest:
    g_start: Pose
    g_goal: Pose
    objects: tuple
    friction: FrictionSpec
    model: RobotModel
    H: int = 32
    t_step_init: float = 0.25
    t_step_resolution: float = 5e-5
    t_step_max: float = 4.0
    margin_offset: float = 0.05
    max_iter: int = 100
    q_seed: np.ndarray | None = None
    contact_floor: float = CONTACT_FLOOR

    def __post_init__(self):
        if self.H < 2:
            raise ValueError("H must be at least 2")
        if not self.t_step_init > self.t_step_resolution > 0:
            raise ValueError("need t_step_init > t_step_resolution > 0")
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.friction.active and not self.objects:
            raise ValueError("friction constraints need at least one object")

    def endpoints(self):
        """Joint configurations of the start and goal poses (IK from the seed)."""
        seed = self.model.home if self.q_seed is None else np.asarray(self.q_seed, dtype=float)
        if seed is None:
            seed = np.zeros(self.model.n)
        q_start = inverse_kinematics(self.model, self.g_start, seed)
        q_goal = inverse_kinematics(self.model, self.g_goal, q_start)
        return q_start, q_goal

    def replace(self, **kw):
        from dataclasses import replace

        return replace(self, **kw)

    def to_dict(self):
        return {
            "g_start": self.g_start.to_dict(),
            "g_goal": self.g_goal.to_dict(),
            "objects": [o.to_dict() for o in self.objects],
            "friction": self.friction.to_dict(),
            "H": self.H,
            "t_step_init": self.t_step_init,
            "t_step_resolution": self.t_step_resolution,
            "t_step_max": self.t_step_max,
            "margin_offset": self.margin_offset,
            "max_iter": self.max_iter,
            "q_seed": None if self.q_seed is None else list(map(float, self.q_seed)),
        }

    @classmethod
    def from_dict(cls, d, model=None, base_dir=None):
        from .robot import default_robot, load_robot

        if model is None and d.get("robot"):
            path = Path(d["robot"])
            model = load_robot(path if base_dir is None or path.is_absolute() else Path(base_dir) / path)
        elif model is None:
            model = default_robot()
        return cls(
            g_start=_pose_from(d["g_start"]),
            g_goal=_pose_from(d["g_goal"]),
            objects=[ObjectSpec.from_dict(o) for o in d.get("objects", [])],
            friction=FrictionSpec.from_dict(d.get("friction", {"type": "coulomb"}), base_dir=base_dir),
            model=model,
            H=int(d.get("H", 32)),
            t_step_init=float(d.get("t_step_init", 0.25)),
            t_step_resolution=float(d.get("t_step_resolution", 5e-5)),
            t_step_max=float(d.get("t_step_max", 4.0)),
            margin_offset=float(d.get("margin_offset", 0.05)),
            max_iter=int(d.get("max_iter", 100)),
            q_seed=d.get("q_seed"),
        )


def _pose_from(d):
    if isinstance(d, (list, tuple)):
        return Pose.level(d, float(np.arctan2(d[1], d[0])))
    if "quaternion_wxyz" not in d and "rotation" not in d and "yaw" not in d:
        p = d.get("translation", d.get("position"))
        return Pose.level(p, float(np.arctan2(p[1], p[0])))
    return Pose.from_dict(d)


@dataclass
class SQPSolution:
    trajectory: Trajectory
    iterations: int
    merit_history: list
    max_violation: float
    penalty: float
    penalty_history: list = field(default_factory=list)  # weight in force for each merit_history entry


@dataclass
class PlanResult:
    trajectory: Trajectory | None
    duration: float
    margins: np.ndarray
    sqp_iterations: int
    status: str
    t_step: float
    search: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self):
        return {
            "status": self.status,
            "duration": self.duration,
            "t_step": self.t_step,
            "sqp_iterations": self.sqp_iterations,
            "margins": np.asarray(self.margins).tolist(),
            "trajectory": None if self.trajectory is None else self.trajectory.to_dict(),
            "search": [{"t_step": t, "feasible": ok} for t, ok in self.search],
            "wall_time": self.wall_time,
        }


# ---------------------------------------------------------------------------
# sparse QP structure over stacked waypoint states
# ---------------------------------------------------------------------------


class _Layout:
    """Index bookkeeping for x = (q_0, qd_0, qdd_0, ..., q_H, qd_H, qdd_H)."""

    def __init__(self, H, n, t):
        self.H, self.n, self.t = H, n, t
        self.N = 3 * n * (H + 1)

    def idx(self, block, i):
        """Column indices of block 0 (q), 1 (qd) or 2 (qdd) of waypoint(s) i."""
        i = np.atleast_1d(i)
        return (i[:, None] * 3 * self.n + block * self.n + np.arange(self.n)[None, :]).reshape(-1)

    def pack(self, traj):
        return np.stack([traj.q, traj.qd, traj.qdd], axis=1).reshape(-1)

    def unpack(self, x):
        X = x.reshape(self.H + 1, 3, self.n)
        return X[:, 0], X[:, 1], X[:, 2]

    def selector(self, block, waypoints):
        cols = self.idx(block, waypoints)
        return sparse.csr_matrix((np.ones(cols.size), (np.arange(cols.size), cols)), shape=(cols.size, self.N))

    def difference(self, block):
        """Rows x[block, i+1] - x[block, i] for i < H."""
        return self.selector(block, np.arange(1, self.H + 1)) - self.selector(block, np.arange(self.H))

    def row_jacobian(self, dg, iq, ia):
        """Sparse rows from state gradients ``dg`` (R, 3n).

        Row r is evaluated at (q, qd) of waypoint ``iq[r]`` and qdd of
        waypoint ``ia[r]``.
        """
        n = self.n
        R = dg.shape[0]
        cols = np.concatenate(
            [self.idx(0, iq).reshape(R, n), self.idx(1, iq).reshape(R, n), self.idx(2, ia).reshape(R, n)], axis=1
        )
        rows = np.repeat(np.arange(R), 3 * n)
        return sparse.csr_matrix((dg.reshape(-1), (rows, cols.reshape(-1))), shape=(R, self.N))


def _jerk_objective(layout):
    # integral of squared jerk over the horizon, t * sum |dqdd / t|^2, as 1/2 x'Px
    D = layout.difference(2)
    return ((2.0 / layout.t) * (D.T @ D)).tocsc()


def _linear_constraints(layout, model, q0, q_goal, enforce_limits=True):
    """Equalities ``A_eq x = b_eq`` and inequalities ``A_in x <= b_in`` (sparse)."""
    H, n, t = layout.H, layout.n, layout.t
    Dq, Dv = layout.difference(0), layout.difference(1)
    Qi, Vi, Ai = (layout.selector(b, np.arange(H)) for b in range(3))
    integ_q = Dq - t * Vi - 0.5 * t * t * Ai
    integ_v = Dv - t * Ai
    ends = np.array([0, H])
    A_eq = sparse.vstack(
        [integ_q, integ_v, layout.selector(0, ends), layout.selector(1, ends), layout.selector(2, ends)]
    ).tocsr()
    b_eq = np.concatenate([np.zeros(2 * H * n), q0, q_goal, np.zeros(4 * n)])
    if not enforce_limits:
        return A_eq, b_eq, sparse.csr_matrix((0, layout.N)), np.zeros(0)
    lim = model.limits
    every = np.arange(H + 1)
    S = sparse.vstack([layout.selector(b, every) for b in range(3)]).tocsr()
    upper = np.concatenate([np.tile(lim.pos_max, H + 1), np.tile(lim.vel, H + 1), np.tile(lim.acc, H + 1)])
    lower = np.concatenate([np.tile(lim.pos_min, H + 1), -np.tile(lim.vel, H + 1), -np.tile(lim.acc, H + 1)])
    J = layout.difference(2)
    jmax = np.tile(lim.jerk, H) * t
    A_in = sparse.vstack([S, -S, J, -J]).tocsr()
    b_in = np.concatenate([upper, -lower, jmax, jmax])
    return A_eq, b_eq, A_in, b_in


def _solve_qp(P, c, A_eq, b_eq, A_in, b_in):
    """min 1/2 x'Px + c'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.  Returns x or None."""
    n = P.shape[0]
    A = sparse.vstack([A_eq, A_in]).tocsc()
    b = np.concatenate([b_eq, b_in])
    cones = [clarabel.ZeroConeT(A_eq.shape[0])]
    if A_in.shape[0]:
        cones.append(clarabel.NonnegativeConeT(A_in.shape[0]))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-9
    settings.tol_gap_rel = 1e-9
    settings.tol_feas = 1e-9
    settings.max_iter = 200
    solver = clarabel.DefaultSolver(sparse.triu(P, format="csc"), np.asarray(c, dtype=float), A, b, cones, settings)
    sol = solver.solve()
    if "Solved" not in str(sol.status):
        return None
    x = np.asarray(sol.x)
    if x.shape != (n,) or not np.all(np.isfinite(x)):
        return None
    return x


# ---------------------------------------------------------------------------
# constraint rows
# ---------------------------------------------------------------------------


def _row_states(traj):
    """All constraint states: waypoints, then interval ends."""
    qe, qde, qdde = traj.interval_end_states()
    H = traj.H
    q = np.vstack([traj.q, qe])
    qd = np.vstack([traj.qd, qde])
    qdd = np.vstack([traj.qdd, qdde])
    iq = np.concatenate([np.arange(H + 1), np.arange(1, H + 1)])
    ia = np.concatenate([np.arange(H + 1), np.arange(H)])
    return q, qd, qdd, iq, ia


def _margin_spec(request):
    return request.friction if request.friction.active else FrictionSpec.coulomb()


def evaluate_margins(request, traj):
    """Margins (H+1, m) at waypoints and (H, m) at interval ends, plus a.n."""
    q, qd, qdd, _, _ = _row_states(traj)
    m, an = batch_margins(request.model, q, qd, qdd, request.objects, _margin_spec(request))
    H = traj.H
    return m[: H + 1], m[H + 1:], an


def _g_rows(request, q, qd, qdd, with_jac):
    """Rows ``g <= 0`` per (state, object); contact-loss states switch to the pressure row."""
    spec = _margin_spec(request)
    if with_jac:
        margin, dmargin, an, dan = batch_margins_jacobian(request.model, q, qd, qdd, request.objects, spec)
    else:
        margin, an = batch_margins(request.model, q, qd, qdd, request.objects, spec)
    lost = an <= 0.0
    g = np.where(lost, request.contact_floor - an, request.margin_offset - margin)
    if not with_jac:
        return g
    return g, np.where(lost[:, :, None], -dan, -dmargin)


def linearize_constraint(request, trajectory, i):
    """Jacobian rows and offsets of the friction rows at waypoint ``i``.

    Each object's margin is rewritten as ``g(x) = offset - margin(x) <= 0``.
    Returns ``(J, g)`` with ``J`` of shape (m, 3n), the derivative of ``g``
    with respect to ``(q_i, qd_i, qdd_i)``, and ``g`` its value, so the
    linearized row is ``J dx <= -g``. Objects without contact pressure at
    ``x_i`` get the row ``contact_floor - a.n <= 0`` instead.
    """
    if not 0 <= i <= trajectory.H:
        raise IndexError(f"waypoint {i} outside 0..{trajectory.H}")
    g, dg = _g_rows(request, trajectory.q[i][None], trajectory.qd[i][None], trajectory.qdd[i][None], True)
    return dg[0], g[0]


# ---------------------------------------------------------------------------
# SQP
# ---------------------------------------------------------------------------


@dataclass
class _SQPSettings:
    penalty_init: float = 1e3
    penalty_max: float = 1e7
    penalty_factor: float = 10.0
    trust_init: float = 0.1
    trust_min: float = 1e-6
    trust_max: float = 1.0
    shrink: float = 0.5
    grow: float = 1.6
    violation_tol: float = 1e-6
    rel_tol: float = 1e-7
    stall_iters: int = 5
    progress_tol: float = 1e-5
    progress_iters: int = 5


def _initial_point(layout, P, A_eq, b_eq, A_in, b_in, warm_start, t_step):
    if warm_start is None:
        x = _solve_qp(P, np.zeros(layout.N), A_eq, b_eq, A_in, b_in)
    else:
        ws = warm_start if abs(warm_start.t_step - t_step) < 1e-15 else warm_start.rescaled(t_step)
        if ws.H != layout.H or ws.q.shape[1] != layout.n:
            raise ValueError("warm start does not match the request's H and joint count")
        x = layout.pack(ws)
        ok = np.abs(A_eq @ x - b_eq).max() <= 1e-9 and np.all(A_in @ x <= b_in + 1e-9)
        if not ok:
            # phase 1: nearest point satisfying every linear row
            eye = sparse.identity(layout.N, format="csc")
            dx = _solve_qp(eye, np.zeros(layout.N), A_eq, b_eq - A_eq @ x, A_in, b_in - A_in @ x)
            x = None if dx is None else x + dx
    if x is None:
        raise Infeasible(f"linear constraints infeasible at t_step={t_step:.5f}")
    return x


def sqp_solve(request, t_step, warm_start=None, settings=None):
    """Solve the friction-constrained minimum-jerk problem at a fixed step.

    Returns an :class:`SQPSolution`. Raises :class:`Infeasible` when the
    linear rows cannot be met or the friction rows stay violated once the
    penalty weight has reached its cap.
    """
    if not t_step > 0:
        raise ValueError("t_step must be positive")
    cfg = settings or _SQPSettings()
    model = request.model
    n, H = model.n, request.H
    q0, q_goal = request.endpoints()
    layout = _Layout(H, n, t_step)
    P = _jerk_objective(layout)
    A_eq, b_eq, A_in, b_in = _linear_constraints(layout, model, q0, q_goal)

    def objective(x):
        return 0.5 * x @ (P @ x)

    def trajectory(x):
        return Trajectory(*layout.unpack(x), t_step)

    if not request.friction.active:
        x = _solve_qp(P, np.zeros(layout.N), A_eq, b_eq, A_in, b_in)
        if x is None:
            raise Infeasible(f"linear constraints infeasible at t_step={t_step:.5f}")
        return SQPSolution(trajectory(x), 1, [objective(x)], 0.0, 0.0, [0.0])

    x = _initial_point(layout, P, A_eq, b_eq, A_in, b_in, warm_start, t_step)
    m_obj = len(request.objects)

    def rows(x, with_jac):
        q, qd, qdd, iq, ia = _row_states(trajectory(x))
        if not with_jac:
            return _g_rows(request, q, qd, qdd, False).reshape(-1)
        g, dg = _g_rows(request, q, qd, qdd, True)
        G = layout.row_jacobian(dg.reshape(-1, 3 * n), np.repeat(iq, m_obj), np.repeat(ia, m_obj))
        return g.reshape(-1), G

    def merit(x, g, rho):
        return objective(x) + rho * np.maximum(g, 0.0).sum()

    g, G = rows(x, True)
    R = g.size
    N = layout.N
    # QP variables z = (dx, s); s >= 0 is the slack of each friction row
    Pz = sparse.block_diag([P, sparse.csc_matrix((R, R))], format="csc")
    Aeq_z = sparse.hstack([A_eq, sparse.csr_matrix((A_eq.shape[0], R))]).tocsr()
    Ain_lin = sparse.hstack([A_in, sparse.csr_matrix((A_in.shape[0], R))]).tocsr()
    neg_s = sparse.hstack([sparse.csr_matrix((R, N)), -sparse.identity(R)]).tocsr()
    # box trust region on every state entry, merged into the limit rows (the
    # first 2N rows of A_in); velocity and acceleration radii are the
    # position radius scaled by the joint limits
    trust_scale = np.concatenate([np.ones((H + 1) * n), np.tile(model.limits.vel, H + 1),
                                  np.tile(model.limits.acc, H + 1)])
    trust_scale = np.tile(trust_scale, 2)

    rho = cfg.penalty_init
    trust = cfg.trust_init
    phi = merit(x, g, rho)
    history = [phi]
    weights = [rho]
    best_violation = max(g.max(), 0.0)
    stall = 0
    converged = False
    ref_phi, ref_it = phi, 0
    it = 0
    for it in range(1, request.max_iter + 1):
        A_z = sparse.vstack([Ain_lin, sparse.hstack([G, -sparse.identity(R)]), neg_s]).tocsr()
        b_lin = b_in - A_in @ x
        b_lin[: 2 * N] = np.minimum(b_lin[: 2 * N], trust * trust_scale)
        b_z = np.concatenate([b_lin, -g, np.zeros(R)])
        c_z = np.concatenate([P @ x, np.full(R, rho)])
        z = _solve_qp(Pz, c_z, Aeq_z, b_eq - A_eq @ x, A_z, b_z)
        if z is None:
            # numerical trouble in the subproblem; retry in a smaller region
            trust *= cfg.shrink
            if trust < cfg.trust_min:
                raise Infeasible(f"QP subproblem failed at t_step={t_step:.5f}")
            continue
        dx = z[:N]
        model_val = objective(x + dx) + rho * np.maximum(g + G @ dx, 0.0).sum()
        predicted = phi - model_val
        x_new = x + dx
        g_new = rows(x_new, False)
        phi_new = merit(x_new, g_new, rho)
        actual = phi - phi_new
        scale = cfg.rel_tol * (1.0 + abs(phi))

        if predicted <= scale:
            small = True
        elif actual >= 0.1 * predicted:
            x, phi = x_new, phi_new
            g, G = rows(x, True)
            history.append(phi)
            weights.append(rho)
            trust = min(cfg.trust_max, trust * cfg.grow)
            small = predicted <= 10 * scale
        else:
            trust *= cfg.shrink
            small = trust < cfg.trust_min

        violation = max(g.max(), 0.0)
        log.debug("it %d rho %.0e trust %.2e pred %.3e act %.3e viol %.3e phi %.6f", it, rho, trust, predicted, actual,
                  violation, phi)
        if violation < best_violation - 1e-9:
            best_violation, stall = violation, 0
        else:
            stall += 1

        if phi < ref_phi - cfg.progress_tol * (1.0 + abs(ref_phi)):
            ref_phi, ref_it = phi, it
        stagnant = it - ref_it >= cfg.progress_iters
        if (small or stagnant) and violation <= cfg.violation_tol:
            converged = True
            break
        if violation > cfg.violation_tol and (small or stall >= cfg.stall_iters):
            if rho >= cfg.penalty_max:
                break
            rho *= cfg.penalty_factor
            phi = merit(x, g, rho)
            history.append(phi)
            weights.append(rho)
            stall = 0
            ref_phi, ref_it = phi, it

    violation = max(g.max(), 0.0)
    if not converged and violation > cfg.violation_tol:
        raise Infeasible(f"friction rows violated by {violation:.2e} after {it} iterations at t_step={t_step:.5f}")
    return SQPSolution(trajectory(x), it, history, violation, rho, weights)


# ---------------------------------------------------------------------------
# time shrinking
# ---------------------------------------------------------------------------


def bisect_time(solve, t_init, resolution, t_max):
    """Smallest feasible step found by doubling then bisection.

    ``solve(t, warm)`` returns a solution object (with a ``trajectory``
    attribute, or anything truthy) or raises :class:`Infeasible`.
    Returns ``(t_ok, solution, search_log)``.
    """
    search = []

    def attempt(t, warm):
        try:
            sol = solve(t, warm)
        except Infeasible as exc:
            log.debug("t_step %.6f infeasible: %s", t, exc)
            search.append((t, False))
            return None
        search.append((t, True))
        return sol

    t_fail = 0.0
    t_ok = float(t_init)
    best = attempt(t_ok, None)
    while best is None:
        t_fail = t_ok
        t_ok *= 2.0
        if t_ok > t_max:
            raise Infeasible(f"no feasible t_step up to {t_max}")
        best = attempt(t_ok, None)
    while t_ok - t_fail >= resolution:
        mid = 0.5 * (t_ok + t_fail)
        warm = getattr(best, "trajectory", None)
        sol = attempt(mid, warm)
        if sol is None:
            t_fail = mid
        else:
            t_ok, best = mid, sol
    return t_ok, best, search


def plan_time_optimal(request, solve=None):
    """Shortest-duration plan at fixed H (bisection on ``t_step``)."""
    start = time.perf_counter()
    if solve is None:
        if np.allclose(request.g_start.matrix(), request.g_goal.matrix(), rtol=0.0, atol=1e-12):
            res = identity_result(request)
            res.wall_time = time.perf_counter() - start
            return res

        def solve(t, warm):
            return sqp_solve(request, t, warm)

    total_iters = 0

    def counted(t, warm):
        nonlocal total_iters
        sol = solve(t, warm)
        total_iters += getattr(sol, "iterations", 0)
        return sol

    try:
        t_ok, best, search = bisect_time(counted, request.t_step_init, request.t_step_resolution, request.t_step_max)
    except Infeasible:
        return PlanResult(None, float("nan"), np.zeros((0, len(request.objects))), total_iters, "infeasible",
                          float("nan"), wall_time=time.perf_counter() - start)
    traj = getattr(best, "trajectory", None)
    margins = evaluate_margins(request, traj)[0] if traj is not None and request.objects else np.zeros((0, 0))
    return PlanResult(traj, request.H * t_ok, margins, total_iters, "optimal", t_ok, search,
                      wall_time=time.perf_counter() - start)


def plan_fixed_duration(request, duration):
    """Plan with time optimization stopped at ``duration`` (ablation baselines)."""
    start = time.perf_counter()
    t = duration / request.H
    try:
        sol = sqp_solve(request, t)
    except Infeasible:
        return PlanResult(None, duration, np.zeros((0, len(request.objects))), 0, "infeasible", t,
                          [(t, False)], wall_time=time.perf_counter() - start)
    margins = evaluate_margins(request, sol.trajectory)[0] if request.objects else np.zeros((0, 0))
    return PlanResult(sol.trajectory, duration, margins, sol.iterations, "optimal", t, [(t, True)],
                      wall_time=time.perf_counter() - start)


def identity_result(request, q0=None):
    """Zero-duration result for a request whose endpoints coincide.

    The attached trajectory holds ``q0`` at rest so it can still be replayed.
    """
    if q0 is None:
        q0, _ = request.endpoints()
    traj = Trajectory.constant(q0, request.H, request.t_step_init)
    margins = evaluate_margins(request, traj)[0] if request.objects else np.zeros((0, 0))
    return PlanResult(traj, 0.0, margins, 0, "optimal", 0.0, [])

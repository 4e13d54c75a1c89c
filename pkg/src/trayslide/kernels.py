"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Two kernels dominate runtime:

* the serial-chain velocity/acceleration recursion (evaluated at every
  waypoint of every SQP iteration, optionally with forward-mode tangents
  for the constraint Jacobian), and
* the sequential stick-slip integrator used by the simulator.

Set ``TRAYSLIDE_DISABLE_NUMBA=1`` to force the numpy implementations. The
numba versions are compiled lazily on first call and cached on disk.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLED = os.environ.get("TRAYSLIDE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = numba is not None and not _DISABLED


def backend():
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Serial-chain recursion
#
# Standard DH rows (a, d, alpha, theta_offset), revolute joints. Quantities
# are propagated in the world frame: rotation R, origin o, angular velocity
# w, angular acceleration wd, linear velocity v and linear acceleration acc
# of each link frame. Tangent variants additionally carry derivatives with
# respect to the 3n state entries ordered (q, qd, qdd).
# ---------------------------------------------------------------------------


def _dh_rot(theta, alpha):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    B = theta.shape[0]
    A = np.empty((B, 3, 3))
    A[:, 0, 0] = ct
    A[:, 0, 1] = -st * ca
    A[:, 0, 2] = st * sa
    A[:, 1, 0] = st
    A[:, 1, 1] = ct * ca
    A[:, 1, 2] = -ct * sa
    A[:, 2, 0] = 0.0
    A[:, 2, 1] = sa
    A[:, 2, 2] = ca
    return A


def _dh_rot_dtheta(theta, alpha):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    B = theta.shape[0]
    A = np.zeros((B, 3, 3))
    A[:, 0, 0] = -st
    A[:, 0, 1] = -ct * ca
    A[:, 0, 2] = ct * sa
    A[:, 1, 0] = ct
    A[:, 1, 1] = -st * ca
    A[:, 1, 2] = st * sa
    return A


def chain_numpy(dh, q, qd, qdd):
    B, n = q.shape
    R = np.broadcast_to(np.eye(3), (B, 3, 3)).copy()
    o = np.zeros((B, 3))
    w = np.zeros((B, 3))
    wd = np.zeros((B, 3))
    v = np.zeros((B, 3))
    acc = np.zeros((B, 3))
    for i in range(n):
        a_len, d_len, alpha, offset = dh[i]
        theta = q[:, i] + offset
        z = R[:, :, 2]
        w_prev = w
        w = w + qd[:, i, None] * z
        wd = wd + qdd[:, i, None] * z + np.cross(w_prev, qd[:, i, None] * z)
        t = np.stack([a_len * np.cos(theta), a_len * np.sin(theta), np.full(B, d_len)], axis=1)
        r = np.einsum("bij,bj->bi", R, t)
        o = o + r
        v = v + np.cross(w, r)
        acc = acc + np.cross(wd, r) + np.cross(w, np.cross(w, r))
        R = R @ _dh_rot(theta, np.full(B, alpha))
    return R, o, w, wd, v, acc


def chain_tangent_numpy(dh, q, qd, qdd):
    B, n = q.shape
    K = 3 * n
    R = np.broadcast_to(np.eye(3), (B, 3, 3)).copy()
    o = np.zeros((B, 3))
    w = np.zeros((B, 3))
    wd = np.zeros((B, 3))
    v = np.zeros((B, 3))
    acc = np.zeros((B, 3))
    dR = np.zeros((B, K, 3, 3))
    do = np.zeros((B, K, 3))
    dw = np.zeros((B, K, 3))
    dwd = np.zeros((B, K, 3))
    dv = np.zeros((B, K, 3))
    dacc = np.zeros((B, K, 3))
    for i in range(n):
        a_len, d_len, alpha, offset = dh[i]
        theta = q[:, i] + offset
        ct, st = np.cos(theta), np.sin(theta)
        z = R[:, :, 2]
        dz = dR[:, :, :, 2]
        qd_i = qd[:, i, None]
        qdd_i = qdd[:, i, None]

        w_prev, dw_prev = w, dw
        w = w_prev + qd_i * z
        dw = dw_prev + qd_i[:, :, None] * dz
        dw[:, n + i] += z

        wz = np.cross(w_prev, z)
        wd = wd + qdd_i * z + qd_i * wz
        dwd = (
            dwd
            + qdd_i[:, :, None] * dz
            + qd_i[:, :, None] * (np.cross(dw_prev, z[:, None, :]) + np.cross(w_prev[:, None, :], dz))
        )
        dwd[:, 2 * n + i] += z
        dwd[:, n + i] += wz

        t = np.stack([a_len * ct, a_len * st, np.full(B, d_len)], axis=1)
        t_d = np.stack([-a_len * st, a_len * ct, np.zeros(B)], axis=1)
        r = np.einsum("bij,bj->bi", R, t)
        dr = np.einsum("bkij,bj->bki", dR, t)
        dr[:, i] += np.einsum("bij,bj->bi", R, t_d)

        o = o + r
        do = do + dr

        w_ = w[:, None, :]
        r_ = r[:, None, :]
        v = v + np.cross(w, r)
        dv = dv + np.cross(dw, r_) + np.cross(w_, dr)

        wr = np.cross(w, r)
        dwr = np.cross(dw, r_) + np.cross(w_, dr)
        acc = acc + np.cross(wd, r) + np.cross(w, wr)
        dacc = dacc + np.cross(dwd, r_) + np.cross(wd[:, None, :], dr) + np.cross(dw, wr[:, None, :]) + np.cross(w_, dwr)

        al = np.full(B, alpha)
        A = _dh_rot(theta, al)
        A_d = _dh_rot_dtheta(theta, al)
        dR = np.einsum("bkij,bjl->bkil", dR, A)
        dR[:, i] += R @ A_d
        R = R @ A
    return (R, o, w, wd, v, acc), (dR, do, dw, dwd, dv, dacc)


if numba is not None:

    @numba.njit(cache=True)
    def _cross_into(out, a0, a1, a2, b0, b1, b2):
        out[0] = a1 * b2 - a2 * b1
        out[1] = a2 * b0 - a0 * b2
        out[2] = a0 * b1 - a1 * b0

    @numba.njit(cache=True)
    def _chain_numba(dh, q, qd, qdd):
        B, n = q.shape
        R_out = np.zeros((B, 3, 3))
        o_out = np.zeros((B, 3))
        w_out = np.zeros((B, 3))
        wd_out = np.zeros((B, 3))
        v_out = np.zeros((B, 3))
        acc_out = np.zeros((B, 3))
        R = np.zeros((3, 3))
        Rn = np.zeros((3, 3))
        A = np.zeros((3, 3))
        w = np.zeros(3)
        wd = np.zeros(3)
        o = np.zeros(3)
        v = np.zeros(3)
        acc = np.zeros(3)
        r = np.zeros(3)
        tmp = np.zeros(3)
        tmp2 = np.zeros(3)
        for b in range(B):
            for k in range(3):
                for l in range(3):
                    R[k, l] = 1.0 if k == l else 0.0
                w[k] = 0.0
                wd[k] = 0.0
                o[k] = 0.0
                v[k] = 0.0
                acc[k] = 0.0
            for i in range(n):
                a_len = dh[i, 0]
                d_len = dh[i, 1]
                alpha = dh[i, 2]
                theta = q[b, i] + dh[i, 3]
                ct = np.cos(theta)
                st = np.sin(theta)
                ca = np.cos(alpha)
                sa = np.sin(alpha)
                z0 = R[0, 2]
                z1 = R[1, 2]
                z2 = R[2, 2]
                qdi = qd[b, i]
                # wd += qdd z + w_prev x (qd z)
                _cross_into(tmp, w[0], w[1], w[2], z0, z1, z2)
                wd[0] += qdd[b, i] * z0 + qdi * tmp[0]
                wd[1] += qdd[b, i] * z1 + qdi * tmp[1]
                wd[2] += qdd[b, i] * z2 + qdi * tmp[2]
                w[0] += qdi * z0
                w[1] += qdi * z1
                w[2] += qdi * z2
                t0 = a_len * ct
                t1 = a_len * st
                for k in range(3):
                    r[k] = R[k, 0] * t0 + R[k, 1] * t1 + R[k, 2] * d_len
                    o[k] += r[k]
                _cross_into(tmp, w[0], w[1], w[2], r[0], r[1], r[2])
                for k in range(3):
                    v[k] += tmp[k]
                _cross_into(tmp2, w[0], w[1], w[2], tmp[0], tmp[1], tmp[2])
                _cross_into(tmp, wd[0], wd[1], wd[2], r[0], r[1], r[2])
                for k in range(3):
                    acc[k] += tmp[k] + tmp2[k]
                A[0, 0] = ct
                A[0, 1] = -st * ca
                A[0, 2] = st * sa
                A[1, 0] = st
                A[1, 1] = ct * ca
                A[1, 2] = -ct * sa
                A[2, 0] = 0.0
                A[2, 1] = sa
                A[2, 2] = ca
                for k in range(3):
                    for l in range(3):
                        s = 0.0
                        for m in range(3):
                            s += R[k, m] * A[m, l]
                        Rn[k, l] = s
                for k in range(3):
                    for l in range(3):
                        R[k, l] = Rn[k, l]
            for k in range(3):
                for l in range(3):
                    R_out[b, k, l] = R[k, l]
                o_out[b, k] = o[k]
                w_out[b, k] = w[k]
                wd_out[b, k] = wd[k]
                v_out[b, k] = v[k]
                acc_out[b, k] = acc[k]
        return R_out, o_out, w_out, wd_out, v_out, acc_out

    @numba.njit(cache=True)
    def _chain_tangent_numba(dh, q, qd, qdd):
        B, n = q.shape
        K = 3 * n
        R_out = np.zeros((B, 3, 3))
        o_out = np.zeros((B, 3))
        w_out = np.zeros((B, 3))
        wd_out = np.zeros((B, 3))
        v_out = np.zeros((B, 3))
        acc_out = np.zeros((B, 3))
        dR = np.zeros((B, K, 3, 3))
        do = np.zeros((B, K, 3))
        dw = np.zeros((B, K, 3))
        dwd = np.zeros((B, K, 3))
        dv = np.zeros((B, K, 3))
        dacc = np.zeros((B, K, 3))

        R = np.zeros((3, 3))
        Rn = np.zeros((3, 3))
        A = np.zeros((3, 3))
        Ad = np.zeros((3, 3))
        RAd = np.zeros((3, 3))
        w = np.zeros(3)
        wp = np.zeros(3)
        wd = np.zeros(3)
        o = np.zeros(3)
        v = np.zeros(3)
        acc = np.zeros(3)
        r = np.zeros(3)
        rd = np.zeros(3)
        z = np.zeros(3)
        wz = np.zeros(3)
        wr = np.zeros(3)
        tmp = np.zeros(3)
        tmp2 = np.zeros(3)
        dz = np.zeros(3)
        dwp = np.zeros(3)
        dr = np.zeros(3)
        dwr = np.zeros(3)
        dRn = np.zeros((3, 3))

        for b in range(B):
            for k in range(3):
                for l in range(3):
                    R[k, l] = 1.0 if k == l else 0.0
                w[k] = 0.0
                wd[k] = 0.0
                o[k] = 0.0
                v[k] = 0.0
                acc[k] = 0.0
            for i in range(n):
                a_len = dh[i, 0]
                d_len = dh[i, 1]
                alpha = dh[i, 2]
                theta = q[b, i] + dh[i, 3]
                ct = np.cos(theta)
                st = np.sin(theta)
                ca = np.cos(alpha)
                sa = np.sin(alpha)
                qdi = qd[b, i]
                qddi = qdd[b, i]
                for k in range(3):
                    z[k] = R[k, 2]
                    wp[k] = w[k]
                _cross_into(wz, wp[0], wp[1], wp[2], z[0], z[1], z[2])
                for k in range(3):
                    w[k] = wp[k] + qdi * z[k]
                    wd[k] += qddi * z[k] + qdi * wz[k]
                t0 = a_len * ct
                t1 = a_len * st
                td0 = -a_len * st
                td1 = a_len * ct
                for k in range(3):
                    r[k] = R[k, 0] * t0 + R[k, 1] * t1 + R[k, 2] * d_len
                    rd[k] = R[k, 0] * td0 + R[k, 1] * td1
                _cross_into(wr, w[0], w[1], w[2], r[0], r[1], r[2])

                A[0, 0] = ct
                A[0, 1] = -st * ca
                A[0, 2] = st * sa
                A[1, 0] = st
                A[1, 1] = ct * ca
                A[1, 2] = -ct * sa
                A[2, 0] = 0.0
                A[2, 1] = sa
                A[2, 2] = ca
                Ad[0, 0] = -st
                Ad[0, 1] = -ct * ca
                Ad[0, 2] = ct * sa
                Ad[1, 0] = ct
                Ad[1, 1] = -st * ca
                Ad[1, 2] = st * sa
                Ad[2, 0] = 0.0
                Ad[2, 1] = 0.0
                Ad[2, 2] = 0.0
                for k in range(3):
                    for l in range(3):
                        s = 0.0
                        for m in range(3):
                            s += R[k, m] * Ad[m, l]
                        RAd[k, l] = s

                for kk in range(K):
                    for k in range(3):
                        dz[k] = dR[b, kk, k, 2]
                        dwp[k] = dw[b, kk, k]
                    # angular velocity
                    for k in range(3):
                        dw[b, kk, k] = dwp[k] + qdi * dz[k]
                    if kk == n + i:
                        for k in range(3):
                            dw[b, kk, k] += z[k]
                    # angular acceleration
                    _cross_into(tmp, dwp[0], dwp[1], dwp[2], z[0], z[1], z[2])
                    _cross_into(tmp2, wp[0], wp[1], wp[2], dz[0], dz[1], dz[2])
                    for k in range(3):
                        dwd[b, kk, k] += qddi * dz[k] + qdi * (tmp[k] + tmp2[k])
                    if kk == 2 * n + i:
                        for k in range(3):
                            dwd[b, kk, k] += z[k]
                    if kk == n + i:
                        for k in range(3):
                            dwd[b, kk, k] += wz[k]
                    # link vector
                    for k in range(3):
                        dr[k] = dR[b, kk, k, 0] * t0 + dR[b, kk, k, 1] * t1 + dR[b, kk, k, 2] * d_len
                    if kk == i:
                        for k in range(3):
                            dr[k] += rd[k]
                    for k in range(3):
                        do[b, kk, k] += dr[k]
                    # linear velocity
                    _cross_into(tmp, dw[b, kk, 0], dw[b, kk, 1], dw[b, kk, 2], r[0], r[1], r[2])
                    _cross_into(tmp2, w[0], w[1], w[2], dr[0], dr[1], dr[2])
                    for k in range(3):
                        dwr[k] = tmp[k] + tmp2[k]
                        dv[b, kk, k] += dwr[k]
                    # linear acceleration
                    _cross_into(tmp, dwd[b, kk, 0], dwd[b, kk, 1], dwd[b, kk, 2], r[0], r[1], r[2])
                    for k in range(3):
                        dacc[b, kk, k] += tmp[k]
                    _cross_into(tmp, wd[0], wd[1], wd[2], dr[0], dr[1], dr[2])
                    for k in range(3):
                        dacc[b, kk, k] += tmp[k]
                    _cross_into(tmp, dw[b, kk, 0], dw[b, kk, 1], dw[b, kk, 2], wr[0], wr[1], wr[2])
                    for k in range(3):
                        dacc[b, kk, k] += tmp[k]
                    _cross_into(tmp, w[0], w[1], w[2], dwr[0], dwr[1], dwr[2])
                    for k in range(3):
                        dacc[b, kk, k] += tmp[k]
                    # rotation
                    for k in range(3):
                        for l in range(3):
                            s = 0.0
                            for m in range(3):
                                s += dR[b, kk, k, m] * A[m, l]
                            dRn[k, l] = s
                    if kk == i:
                        for k in range(3):
                            for l in range(3):
                                dRn[k, l] += RAd[k, l]
                    for k in range(3):
                        for l in range(3):
                            dR[b, kk, k, l] = dRn[k, l]

                for k in range(3):
                    o[k] += r[k]
                    v[k] += wr[k]
                _cross_into(tmp, wd[0], wd[1], wd[2], r[0], r[1], r[2])
                _cross_into(tmp2, w[0], w[1], w[2], wr[0], wr[1], wr[2])
                for k in range(3):
                    acc[k] += tmp[k] + tmp2[k]
                for k in range(3):
                    for l in range(3):
                        s = 0.0
                        for m in range(3):
                            s += R[k, m] * A[m, l]
                        Rn[k, l] = s
                for k in range(3):
                    for l in range(3):
                        R[k, l] = Rn[k, l]
            for k in range(3):
                for l in range(3):
                    R_out[b, k, l] = R[k, l]
                o_out[b, k] = o[k]
                w_out[b, k] = w[k]
                wd_out[b, k] = wd[k]
                v_out[b, k] = v[k]
                acc_out[b, k] = acc[k]
        return (R_out, o_out, w_out, wd_out, v_out, acc_out), (dR, do, dw, dwd, dv, dacc)


def _as_batch(dh, q, qd, qdd):
    dh = np.ascontiguousarray(dh, dtype=np.float64)
    q = np.ascontiguousarray(np.atleast_2d(q), dtype=np.float64)
    qd = np.ascontiguousarray(np.atleast_2d(qd), dtype=np.float64)
    qdd = np.ascontiguousarray(np.atleast_2d(qdd), dtype=np.float64)
    return dh, q, qd, qdd


def chain(dh, q, qd, qdd):
    """Flange frame (R, o, w, wd, v, acc) for a batch of joint states of shape (B, n)."""
    args = _as_batch(dh, q, qd, qdd)
    if USE_NUMBA:
        return _chain_numba(*args)
    return chain_numpy(*args)


def chain_tangent(dh, q, qd, qdd):
    """As :func:`chain`, plus forward-mode derivatives w.r.t. (q, qd, qdd).

    Tangent arrays carry an extra axis of length 3n after the batch axis.
    """
    args = _as_batch(dh, q, qd, qdd)
    if USE_NUMBA:
        return _chain_tangent_numba(*args)
    return chain_tangent_numpy(*args)


# ---------------------------------------------------------------------------
# Stick-slip integrator
#
# Object coordinates live in the tray plane (tray-frame x, y). Per substep the
# caller supplies the tray rotation, origin acceleration, angular velocity and
# acceleration (world frame) and the effective static coefficient. Returns the
# tray-frame trajectory of the object plus per-step slip flags and relative
# speeds. status: 0 ok, 1 contact lost (normal specific force <= 0).
# ---------------------------------------------------------------------------


def _specific_force(R, acc_o, w, wd, gravity, pos, vel_rel):
    r = R @ pos
    u = R @ vel_rel
    return acc_o + np.cross(wd, r) + np.cross(w, np.cross(w, r)) + 2.0 * np.cross(w, u) - gravity


def stick_slip_python(R, acc_o, w, wd, mu_eff, kinetic_ratio, gravity, pos0, dt, stick_speed):
    N = R.shape[0]
    pos = np.array(pos0, dtype=float)
    vel = np.zeros(3)
    path = np.empty((N + 1, 3))
    path[0] = pos
    slipping = np.zeros(N, dtype=np.bool_)
    rel_speed = np.zeros(N)
    sliding = False
    for s in range(N):
        Rs = R[s]
        normal = Rs[:, 2]
        f = _specific_force(Rs, acc_o[s], w[s], wd[s], gravity, pos, vel)
        fn = f @ normal
        if fn <= 0.0:
            path[s + 1:] = pos
            return path, slipping, rel_speed, 1, s
        ft = f - fn * normal
        ft_mag = np.sqrt(ft @ ft)
        mu_s = mu_eff[s]
        mu_k = kinetic_ratio * mu_s
        if not sliding:
            if ft_mag <= mu_s * fn:
                path[s + 1] = pos
                continue
            sliding = True
            direction = -ft / ft_mag
        else:
            u = Rs @ vel
            speed = np.sqrt(u @ u)
            direction = u / speed
        # relative acceleration in the world frame, tangential to the tray
        rel_acc = -ft - mu_k * fn * direction
        rel_acc_tray = Rs.T @ rel_acc
        rel_acc_tray[2] = 0.0
        new_vel = vel + dt * rel_acc_tray
        if vel @ vel > 0.0 and new_vel @ vel <= 0.0:
            new_vel = np.zeros(3)
        new_speed = np.sqrt(new_vel @ new_vel)
        if new_speed < stick_speed and ft_mag <= mu_s * fn:
            new_vel = np.zeros(3)
            sliding = False
        elif new_speed == 0.0:
            sliding = False
        vel = new_vel
        pos = pos + dt * vel
        path[s + 1] = pos
        slipping[s] = True
        rel_speed[s] = np.sqrt(vel @ vel)
    return path, slipping, rel_speed, 0, N


if numba is not None:

    @numba.njit(cache=True)
    def _stick_slip_numba(R, acc_o, w, wd, mu_eff, kinetic_ratio, gravity, pos0, dt, stick_speed):
        N = R.shape[0]
        pos = pos0.copy()
        vel = np.zeros(3)
        path = np.empty((N + 1, 3))
        for k in range(3):
            path[0, k] = pos[k]
        slipping = np.zeros(N, dtype=np.bool_)
        rel_speed = np.zeros(N)
        sliding = False
        r = np.zeros(3)
        u = np.zeros(3)
        f = np.zeros(3)
        tmp = np.zeros(3)
        tmp2 = np.zeros(3)
        ft = np.zeros(3)
        direction = np.zeros(3)
        rel_acc = np.zeros(3)
        new_vel = np.zeros(3)
        for s in range(N):
            for k in range(3):
                r[k] = R[s, k, 0] * pos[0] + R[s, k, 1] * pos[1] + R[s, k, 2] * pos[2]
                u[k] = R[s, k, 0] * vel[0] + R[s, k, 1] * vel[1] + R[s, k, 2] * vel[2]
            _cross_into(tmp, wd[s, 0], wd[s, 1], wd[s, 2], r[0], r[1], r[2])
            for k in range(3):
                f[k] = acc_o[s, k] + tmp[k] - gravity[k]
            _cross_into(tmp, w[s, 0], w[s, 1], w[s, 2], r[0], r[1], r[2])
            _cross_into(tmp2, w[s, 0], w[s, 1], w[s, 2], tmp[0], tmp[1], tmp[2])
            for k in range(3):
                f[k] += tmp2[k]
            _cross_into(tmp, w[s, 0], w[s, 1], w[s, 2], u[0], u[1], u[2])
            for k in range(3):
                f[k] += 2.0 * tmp[k]
            fn = f[0] * R[s, 0, 2] + f[1] * R[s, 1, 2] + f[2] * R[s, 2, 2]
            if fn <= 0.0:
                for t in range(s + 1, N + 1):
                    for k in range(3):
                        path[t, k] = pos[k]
                return path, slipping, rel_speed, 1, s
            for k in range(3):
                ft[k] = f[k] - fn * R[s, k, 2]
            ft_mag = np.sqrt(ft[0] * ft[0] + ft[1] * ft[1] + ft[2] * ft[2])
            mu_s = mu_eff[s]
            mu_k = kinetic_ratio * mu_s
            if not sliding:
                if ft_mag <= mu_s * fn:
                    for k in range(3):
                        path[s + 1, k] = pos[k]
                    continue
                sliding = True
                for k in range(3):
                    direction[k] = -ft[k] / ft_mag
            else:
                speed = np.sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
                for k in range(3):
                    direction[k] = u[k] / speed
            for k in range(3):
                rel_acc[k] = -ft[k] - mu_k * fn * direction[k]
            dot_old = 0.0
            dot_cross = 0.0
            for k in range(3):
                ra = R[s, 0, k] * rel_acc[0] + R[s, 1, k] * rel_acc[1] + R[s, 2, k] * rel_acc[2]
                if k == 2:
                    ra = 0.0
                new_vel[k] = vel[k] + dt * ra
                dot_old += vel[k] * vel[k]
                dot_cross += new_vel[k] * vel[k]
            if dot_old > 0.0 and dot_cross <= 0.0:
                for k in range(3):
                    new_vel[k] = 0.0
            new_speed = np.sqrt(new_vel[0] ** 2 + new_vel[1] ** 2 + new_vel[2] ** 2)
            if new_speed < stick_speed and ft_mag <= mu_s * fn:
                for k in range(3):
                    new_vel[k] = 0.0
                sliding = False
            elif new_speed == 0.0:
                sliding = False
            for k in range(3):
                vel[k] = new_vel[k]
                pos[k] += dt * vel[k]
                path[s + 1, k] = pos[k]
            slipping[s] = True
            rel_speed[s] = np.sqrt(vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2)
        return path, slipping, rel_speed, 0, N


def stick_slip(R, acc_o, w, wd, mu_eff, kinetic_ratio, gravity, pos0, dt, stick_speed=1e-4):
    """Integrate one object's tray-frame motion over N substeps.

    Returns ``(path, slipping, rel_speed, status, last_step)`` where ``path``
    has N + 1 rows of tray-frame positions.
    """
    args = (
        np.ascontiguousarray(R, dtype=np.float64),
        np.ascontiguousarray(acc_o, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(wd, dtype=np.float64),
        np.ascontiguousarray(mu_eff, dtype=np.float64),
        float(kinetic_ratio),
        np.ascontiguousarray(gravity, dtype=np.float64),
        np.ascontiguousarray(pos0, dtype=np.float64),
        float(dt),
        float(stick_speed),
    )
    if USE_NUMBA:
        return _stick_slip_numba(*args)
    return stick_slip_python(*args)

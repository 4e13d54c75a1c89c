"""Friction-cone margins for objects resting on the tray.

Margins are in acceleration units: the object mass multiplies both the
friction capacity and the tangential demand, so it is divided out. A
positive margin means the object sticks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .robot import point_specific_force, tray_frames

TANGENT_EPS = 1e-8  # m/s^2, smoothing of the tangential norm
SPEED_EPS = 1e-9  # m/s, smoothing of the tray speed
ALPHA_FLOOR = 0.05
ALPHA_CEILING = 1.0


class ContactLoss(ValueError):
    """The tray would have to pull on the object (a . n <= 0)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class ObjectSpec:
    mass: float
    centroid_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mu_s: float = 0.21
    name: str = "object"

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not 0 <= self.mu_s < 2:
            raise ValueError("mu_s must lie in [0, 2)")
        off = np.asarray(self.centroid_offset, dtype=float).reshape(3)
        object.__setattr__(self, "centroid_offset", off)

    def to_dict(self):
        return {"name": self.name, "mass": self.mass, "centroid_offset": self.centroid_offset.tolist(), "mu_s": self.mu_s}

    @classmethod
    def from_dict(cls, d):
        return cls(
            mass=float(d.get("mass", 0.1)),
            centroid_offset=d.get("centroid_offset", [0.0, 0.0, 0.0]),
            mu_s=float(d["mu_s"]),
            name=d.get("name", "object"),
        )


# ---------------------------------------------------------------------------
# alpha functions: anything with value_and_grad(v) -> (alpha, dalpha/dv)
# ---------------------------------------------------------------------------


class ConstantAlpha:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, v):
        return np.full(np.shape(v), self.value)

    def value_and_grad(self, v):
        shape = np.shape(v)
        return np.full(shape, self.value), np.zeros(shape)

    def to_dict(self):
        return {"type": "constant", "value": self.value}

    def __repr__(self):
        return f"ConstantAlpha({self.value})"


class PiecewiseLinearAlpha:
    """Linear interpolation through knots, held constant outside them."""

    def __init__(self, v_knots, alpha_knots):
        self.v = np.asarray(v_knots, dtype=float)
        self.alpha = np.asarray(alpha_knots, dtype=float)
        if self.v.ndim != 1 or self.v.shape != self.alpha.shape or np.any(np.diff(self.v) <= 0):
            raise ValueError("knots must be 1-D, equal length and strictly increasing in v")

    @classmethod
    def ramp(cls, slope, floor, v_max=10.0):
        """``max(floor, 1 - slope * v)``."""
        v_knee = (1.0 - floor) / slope
        return cls([0.0, v_knee, max(v_max, 2 * v_knee)], [1.0, floor, floor])

    def __call__(self, v):
        return np.interp(v, self.v, self.alpha)

    def value_and_grad(self, v):
        v = np.asarray(v, dtype=float)
        slopes = np.diff(self.alpha) / np.diff(self.v)
        idx = np.clip(np.searchsorted(self.v, v, side="right") - 1, 0, len(slopes) - 1)
        grad = np.where((v >= self.v[0]) & (v < self.v[-1]), slopes[idx], 0.0)
        return np.interp(v, self.v, self.alpha), grad

    def to_dict(self):
        return {"type": "piecewise_linear", "v": self.v.tolist(), "alpha": self.alpha.tolist()}


def clamp_alpha(alpha, grad, floor=ALPHA_FLOOR, ceiling=ALPHA_CEILING):
    inside = (alpha > floor) & (alpha < ceiling)
    return np.clip(alpha, floor, ceiling), np.where(inside, grad, 0.0)


@dataclass(frozen=True)
class FrictionSpec:
    """Which friction constraint the planner enforces.

    ``variant`` is ``"coulomb"``, ``"learned"`` or ``"none"`` (no friction
    rows). ``mu_s`` of ``None`` means each object's own coefficient is used.
    """

    variant: str = "coulomb"
    mu_s: float | None = None
    alpha_model: object = None
    alpha_floor: float = ALPHA_FLOOR
    alpha_ceiling: float = ALPHA_CEILING
    model_path: str | None = None

    def __post_init__(self):
        if self.variant not in ("coulomb", "learned", "none"):
            raise ValueError(f"unknown friction variant {self.variant!r}")
        if self.variant == "learned" and self.alpha_model is None:
            raise ValueError("learned friction needs an alpha model")

    @classmethod
    def coulomb(cls, mu_s=None):
        return cls("coulomb", mu_s)

    @classmethod
    def learned(cls, alpha_model, mu_s=None, **kw):
        return cls("learned", mu_s, alpha_model, **kw)

    @classmethod
    def unconstrained(cls):
        return cls("none")

    @property
    def active(self):
        return self.variant != "none"

    def alpha(self, v):
        """Clamped alpha and its derivative with respect to tray speed."""
        v = np.asarray(v, dtype=float)
        if self.variant != "learned":
            return np.ones_like(v), np.zeros_like(v)
        a, g = self.alpha_model.value_and_grad(v)
        return clamp_alpha(a, g, self.alpha_floor, self.alpha_ceiling)

    def to_dict(self):
        d = {"type": self.variant}
        if self.mu_s is not None:
            d["mu_s"] = self.mu_s
        if self.variant == "learned":
            if self.model_path is not None:
                d["model"] = str(self.model_path)
            elif hasattr(self.alpha_model, "to_dict"):
                d["model"] = self.alpha_model.to_dict()
            d["alpha_floor"] = self.alpha_floor
            d["alpha_ceiling"] = self.alpha_ceiling
        return d

    @classmethod
    def from_dict(cls, d, base_dir=None):
        kind = d.get("type", "coulomb")
        mu = d.get("mu_s")
        if kind in ("coulomb", "none", "unconstrained"):
            return cls("none" if kind == "unconstrained" else kind, mu)
        model = d["model"]
        path = None
        if isinstance(model, dict):
            if model.get("type") == "piecewise_linear":
                alpha_model = PiecewiseLinearAlpha(model["v"], model["alpha"])
            elif model.get("type") == "constant":
                alpha_model = ConstantAlpha(model["value"])
            else:
                from .learning import AlphaModel

                alpha_model = AlphaModel.from_dict(model)
        else:
            from .learning import load_model

            path = Path(model)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            alpha_model = load_model(path)
            path = str(path)
        return cls(
            "learned",
            mu,
            alpha_model,
            alpha_floor=d.get("alpha_floor", ALPHA_FLOOR),
            alpha_ceiling=d.get("alpha_ceiling", ALPHA_CEILING),
            model_path=path,
        )


# ---------------------------------------------------------------------------
# scalar margins
# ---------------------------------------------------------------------------


def smooth_norm(x, eps=TANGENT_EPS):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1) + eps * eps)


def _margin(a, n, mu_eff):
    a = np.asarray(a, dtype=float)
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ValueError("normal must be a unit vector")
    an = float(a @ n)
    if an <= 0.0:
        raise ContactLoss(f"no contact pressure (a.n = {an:.4g})")
    return mu_eff * an - float(smooth_norm(a - an * n))


def coulomb_margin(a, n, mu_s):
    """``mu_s (a.n) - |a - (a.n) n|``."""
    return _margin(a, n, mu_s)


def learned_margin(a, n, v_mag, mu_s, model, floor=ALPHA_FLOOR, ceiling=ALPHA_CEILING):
    """Coulomb margin with the coefficient scaled by ``alpha = model(v_mag)``."""
    if v_mag < 0:
        raise ValueError("speed must be non-negative")
    alpha, _ = model.value_and_grad(np.asarray(v_mag, dtype=float))
    alpha, _ = clamp_alpha(alpha, 0.0, floor, ceiling)
    return _margin(a, n, float(alpha) * mu_s)


def _object_mus(objects, spec):
    return np.array([spec.mu_s if spec.mu_s is not None else o.mu_s for o in objects])


def margin_for_objects(model, state, objects, spec):
    """Per-object margin at one joint state."""
    if not objects:
        raise ValueError("need at least one object")
    margins, normal_force = batch_margins(model, state.q[None], state.qd[None], state.qdd[None], objects, spec)
    bad = np.flatnonzero(normal_force[0] <= 0.0)
    if bad.size:
        raise ContactLoss(f"object {bad[0]} loses contact", index=int(bad[0]))
    return margins[0]


def batch_margins(model, q, qd, qdd, objects, spec):
    """Margins (B, m) and normal specific forces (B, m) for a batch of states.

    No ContactLoss is raised here; callers inspect the normal forces.
    """
    offsets = np.array([o.centroid_offset for o in objects])
    a = point_specific_force(model, q, qd, qdd, offsets)
    fr = tray_frames(model, q, qd, qdd)
    n = fr["R"][:, :, 2]
    speed = np.sqrt(np.sum(fr["v"] ** 2, axis=1))
    alpha, _ = spec.alpha(speed)
    an = np.einsum("bmi,bi->bm", a, n)
    at = a - an[:, :, None] * n[:, None, :]
    mu = _object_mus(objects, spec)
    margins = alpha[:, None] * mu[None, :] * an - smooth_norm(at)
    return margins, an


def batch_margins_jacobian(model, q, qd, qdd, objects, spec):
    """Margins, normal forces and their derivatives w.r.t. (q, qd, qdd).

    Returns ``(margin, dmargin, an, dan)`` with shapes (B, m), (B, m, 3n),
    (B, m), (B, m, 3n). Derivatives are exact (forward-mode through the
    chain recursion and the alpha model).
    """
    (R, o, w, wd, v, acc), (dR, do, dw, dwd, dv, dacc) = kernels.chain_tangent(model.dh, q, qd, qdd)
    offsets = np.array([ob.centroid_offset for ob in objects])
    u = model.point_in_flange(offsets)  # (m, 3)
    ut = model.tray.translation

    # tray normal and tray-origin velocity
    nz = model.tray_normal_flange
    n = R @ nz
    dn = dR @ nz  # (B, K, 3)
    r0 = R @ ut
    dr0 = dR @ ut
    v0 = v + np.cross(w, r0)
    dv0 = dv + np.cross(dw, r0[:, None, :]) + np.cross(w[:, None, :], dr0)

    # specific force at each object
    r = np.einsum("bij,mj->bmi", R, u)  # (B, m, 3)
    dr = np.einsum("bkij,mj->bmki", dR, u)  # (B, m, K, 3)
    w_ = w[:, None, :]
    wr = np.cross(w_, r)
    a = acc[:, None, :] + np.cross(wd[:, None, :], r) + np.cross(w_, wr) - model.gravity
    dw_ = dw[:, None, :, :]
    dwr = np.cross(dw_, r[:, :, None, :]) + np.cross(w[:, None, None, :], dr)
    da = (
        dacc[:, None, :, :]
        + np.cross(dwd[:, None, :, :], r[:, :, None, :])
        + np.cross(wd[:, None, None, :], dr)
        + np.cross(dw_, wr[:, :, None, :])
        + np.cross(w[:, None, None, :], dwr)
    )

    an = np.einsum("bmi,bi->bm", a, n)
    dan = np.einsum("bmki,bi->bmk", da, n) + np.einsum("bmi,bki->bmk", a, dn)
    at = a - an[:, :, None] * n[:, None, :]
    tnorm = smooth_norm(at)
    that = at / tnorm[:, :, None]

    speed = np.sqrt(np.sum(v0 * v0, axis=1) + SPEED_EPS**2)
    dspeed = np.einsum("bki,bi->bk", dv0, v0) / speed[:, None]
    alpha, dalpha = spec.alpha(speed)
    mu = _object_mus(objects, spec)
    cap = alpha[:, None] * mu[None, :]

    margin = cap * an - tnorm
    # d|a_t|: that . da - (a.n) that . dn   (that is orthogonal to n)
    dt = np.einsum("bmi,bmki->bmk", that, da) - an[:, :, None] * np.einsum("bmi,bki->bmk", that, dn)
    dmargin = (
        cap[:, :, None] * dan
        + (dalpha[:, None] * mu[None, :] * an)[:, :, None] * dspeed[:, None, :]
        - dt
    )
    return margin, dmargin, an, dan


def tilt_margin(theta, mu, g=9.81):
    """Margin of an object on a static tray tilted by ``theta``."""
    a = np.array([g * np.sin(theta), 0.0, g * np.cos(theta)])
    return coulomb_margin(a, np.array([0.0, 0.0, 1.0]), mu)


def virtual_tilt_test(mu_true, increment=0.01):
    """Measured ``mu_s = tan(theta_min)`` from a simulated incremental tilt."""
    from .simulator import virtual_tilt

    return float(np.tan(virtual_tilt(mu_true, increment)))


"""Stick-slip simulation of objects on the moving tray, and synthetic audio.

Objects are point masses in the tray plane. Each substep compares the
tangential specific force an object needs to follow the tray with the
effective static limit ``mu_s_true * alpha_star(|v_tray|) * (a.n)``; when the
limit is exceeded the object slides under kinetic friction until its
relative speed returns to zero with the demand back inside the cone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .robot import tray_frames

DEFAULT_TRAY_RADIUS = 0.15
DEFAULT_SETTLE = 0.25


@dataclass(frozen=True)
class GroundTruthFriction:
    """Friction the simulated world actually obeys.

    ``alpha_star`` maps tray speed (m/s) to the multiplier on ``mu_s_true``;
    ``None`` means the constant 1. ``mu_s_true`` of ``None`` uses each
    object's own coefficient.
    """

    mu_s_true: float | None = None
    kinetic_ratio: float = 0.9
    alpha_star: object = None

    def __post_init__(self):
        if self.mu_s_true is not None and not self.mu_s_true > 0:
            raise ValueError("mu_s_true must be positive")
        if not 0 < self.kinetic_ratio <= 1:
            raise ValueError("kinetic_ratio must be in (0, 1]")
        if self.alpha_star is not None:
            a0 = float(np.asarray(self.alpha_star(np.array([0.0])))[0])
            if abs(a0 - 1.0) > 1e-12:
                raise ValueError("alpha_star(0) must be 1")

    def alpha(self, v):
        v = np.asarray(v, dtype=float)
        if self.alpha_star is None:
            return np.ones_like(v)
        a = np.asarray(self.alpha_star(v), dtype=float)
        if np.any(a <= 0) or np.any(a > 1.5):
            raise ValueError("alpha_star values must lie in (0, 1.5]")
        return a

    def mu_for(self, obj):
        return obj.mu_s if self.mu_s_true is None else self.mu_s_true


@dataclass(frozen=True)
class SimResult:
    times: np.ndarray  # (N,) substep start times
    sim_dt: float
    displacement_mm: np.ndarray  # (m,)
    slipping: np.ndarray  # (N, m)
    rel_speed: np.ndarray  # (N, m)
    fell_off: np.ndarray  # (m,)
    paths: np.ndarray  # (N + 1, m, 3) tray-frame positions
    ee_speed: np.ndarray  # (N,)
    status: str = "ok"
    contact_lost_at: float | None = None

    @property
    def mean_displacement_mm(self):
        return float(np.mean(self.displacement_mm))

    @property
    def any_slip(self):
        return bool(self.slipping.any())

    def timeline(self, obj=0):
        """(t, slipping, relative speed) per substep for one object."""
        return [(float(t), bool(s), float(r)) for t, s, r in
                zip(self.times, self.slipping[:, obj], self.rel_speed[:, obj])]

    def slip_onset(self, obj=None):
        """Time of the first slipping substep (any object by default), or None."""
        flags = self.slipping.any(axis=1) if obj is None else self.slipping[:, obj]
        idx = np.flatnonzero(flags)
        return None if idx.size == 0 else float(self.times[idx[0]])

    def to_dict(self, timeline=False):
        d = {
            "status": self.status,
            "sim_dt": self.sim_dt,
            "displacement_mm": self.displacement_mm.tolist(),
            "mean_displacement_mm": self.mean_displacement_mm,
            "fell_off": self.fell_off.tolist(),
            "slip_onset": self.slip_onset(),
            "contact_lost_at": self.contact_lost_at,
        }
        if timeline:
            d["timeline"] = [self.timeline(k) for k in range(self.slipping.shape[1])]
        return d


def substep_frames(model, trajectory, sim_dt, settle=0.0):
    """Tray kinematics at substep midpoints over the trajectory plus a settle tail."""
    total = trajectory.duration + settle
    N = int(np.ceil(total / sim_dt - 1e-9))
    starts = np.arange(N) * sim_dt
    q, qd, qdd = trajectory.sample(starts + 0.5 * sim_dt)
    fr = tray_frames(model, q, qd, qdd)
    return starts, fr


def simulate_transport(model, trajectory, objects, friction, tray_radius=DEFAULT_TRAY_RADIUS, sim_dt=None,
                       settle=DEFAULT_SETTLE, stick_speed=1e-4):
    """Simulate every object over ``trajectory`` (then ``settle`` seconds at rest)."""
    if sim_dt is None:
        sim_dt = min(trajectory.t_step / 10.0, 1e-3)
    if not 0 < sim_dt <= trajectory.t_step / 10.0 + 1e-15:
        raise ValueError("sim_dt must be positive and at most t_step / 10")
    objects = list(objects)
    starts, fr = substep_frames(model, trajectory, sim_dt, settle)
    speed = np.linalg.norm(fr["v"], axis=1)
    alpha = friction.alpha(speed)
    N, m = starts.size, len(objects)
    slipping = np.zeros((N, m), dtype=bool)
    rel = np.zeros((N, m))
    paths = np.zeros((N + 1, m, 3))
    status, lost_at = "ok", None
    for k, obj in enumerate(objects):
        mu_eff = friction.mu_for(obj) * alpha
        path, slip, rs, code, last = kernels.stick_slip(
            fr["R"], fr["acc"], fr["w"], fr["wd"], mu_eff, friction.kinetic_ratio, model.gravity,
            np.asarray(obj.centroid_offset, dtype=float), sim_dt, stick_speed,
        )
        paths[:, k] = path
        slipping[:, k] = slip
        rel[:, k] = rs
        if code == 1:
            status = "negative_normal"
            t_lost = float(starts[last])
            lost_at = t_lost if lost_at is None else min(lost_at, t_lost)
    offsets = np.array([np.asarray(o.centroid_offset, dtype=float) for o in objects]).reshape(m, 3)
    disp = np.linalg.norm(paths[-1, :, :2] - offsets[:, :2], axis=1) * 1e3
    radius = np.linalg.norm(paths[:, :, :2], axis=2).max(axis=0) if m else np.zeros(0)
    return SimResult(starts, sim_dt, disp, slipping, rel, radius > tray_radius, paths, speed, status, lost_at)


def virtual_tilt(mu_s_true, increment=0.01, max_angle=np.pi / 2):
    """First angle on the grid k * increment (k >= 1) at which the object slides."""
    if not increment > 0:
        raise ValueError("increment must be positive")
    if mu_s_true < 0:
        raise ValueError("mu_s_true must be non-negative")
    k = max(1, int(np.ceil(np.arctan(mu_s_true) / increment)) - 1)
    while np.tan(k * increment) < mu_s_true:
        k += 1
        if k * increment >= max_angle:
            raise ValueError("object never slides below the maximum tilt")
    return k * increment


# ---------------------------------------------------------------------------
# synthetic contact-microphone audio
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthParams:
    sample_rate: int = 44100
    gain_v: float = 0.02  # per m/s of tray speed
    gain_s: float = 0.05
    v_ref: float = 0.5  # relative speed that doubles the burst level
    noise_sigma: float = 1e-3
    vib_band: tuple = (50.0, 800.0)
    burst_band: tuple = (2000.0, 8000.0)
    seed: int = 0

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def band_noise(rng, n, sample_rate, band):
    """Unit-RMS Gaussian noise restricted to ``band`` (Hz)."""
    if n == 0:
        return np.zeros(0)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[(f < band[0]) | (f > band[1])] = 0.0
    x = np.fft.irfft(spec, n)
    rms = np.sqrt(np.mean(x * x))
    return x / rms if rms > 0 else x


def _hold(times, values, t):
    idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1)
    out = values[idx]
    return np.where(t < times[0], 0.0, out) if len(times) else np.zeros_like(t)


def synth_audio(sim, trajectory=None, params=None, duration=None):
    """Contact-microphone signal for a simulated run.

    The clip spans the simulation (or ``duration`` seconds). Each sample
    holds the tray speed and slip state of the substep it falls in.
    """
    from .acoustic import AudioClip

    p = params or SynthParams()
    rng = np.random.default_rng(p.seed)
    total = sim.times[-1] + sim.sim_dt if duration is None else float(duration)
    n = int(round(total * p.sample_rate))
    t = np.arange(n) / p.sample_rate
    speed = _hold(sim.times, sim.ee_speed, t)
    slip_any = sim.slipping.any(axis=1)
    rel = sim.rel_speed.max(axis=1, initial=0.0)
    slip = _hold(sim.times, slip_any.astype(float), t)
    rel_t = _hold(sim.times, rel, t)
    vib = band_noise(rng, n, p.sample_rate, p.vib_band)
    burst = band_noise(rng, n, p.sample_rate, p.burst_band)
    noise = rng.standard_normal(n) * p.noise_sigma
    x = p.gain_v * speed * vib + p.gain_s * slip * (1.0 + rel_t / p.v_ref) * burst + noise
    return AudioClip(np.clip(x, -1.0, 1.0), p.sample_rate)


def write_wav(path, clip):
    """16-bit PCM mono."""
    from scipy.io import wavfile

    data = np.round(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(str(path), int(clip.sample_rate), data)

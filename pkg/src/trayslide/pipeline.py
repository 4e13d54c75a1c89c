"""End-to-end data collection, training and evaluation runs.

Everything random is derived from one integer seed, so a run directory is
reproducible from its config.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acoustic import pair_trials, unique_events, write_events
from .constraints import ConstantAlpha, FrictionSpec, ObjectSpec, PiecewiseLinearAlpha
from .learning import TrainConfig, augment_dataset, events_to_samples, fit_report, load_model, save_model, train_alpha
from .planner import Infeasible, PlanRequest, plan_fixed_duration, plan_time_optimal
from .profiles import cartesian_samples, limit_grid, line_to_joint_trajectory, scurve_plan
from .robot import Pose, default_robot, load_robot, tray_frames
from .simulator import GroundTruthFriction, SynthParams, simulate_transport, synth_audio, write_wav

log = logging.getLogger(__name__)

EVAL_START = (0.75, 0.30, 0.20)
EVAL_GOAL = (0.15, 0.80, 0.20)
COLLECT_START = (0.20, 0.60, 0.20)
COLLECT_END = (-0.30, 0.60, 0.20)


class EmptyGrid(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------


def alpha_from_config(spec, base_dir=None):
    """Alpha function from a config entry (``None`` means constant 1)."""
    if spec is None:
        return None
    if isinstance(spec, str):
        path = Path(spec)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_model(path)
    kind = spec.get("type")
    if kind == "ramp":
        return PiecewiseLinearAlpha.ramp(float(spec["slope"]), float(spec["floor"]))
    if kind == "piecewise_linear":
        return PiecewiseLinearAlpha(spec["v"], spec["alpha"])
    if kind == "constant":
        return ConstantAlpha(float(spec["value"]))
    if kind == "mlp":
        from .learning import AlphaModel

        return AlphaModel.from_dict(spec)
    raise ValueError(f"unknown alpha spec type {kind!r}")


def ground_truth_from_config(d, base_dir=None):
    d = d or {}
    return GroundTruthFriction(
        mu_s_true=d.get("mu_s_true"),
        kinetic_ratio=float(d.get("kinetic_ratio", 0.9)),
        alpha_star=alpha_from_config(d.get("alpha_star"), base_dir),
    )


def ring_objects(k, mu_s, radius=0.05, height=0.03, mass=0.1):
    """``k`` identical objects evenly spaced on a ring around the tray centre."""
    if k == 1:
        return [ObjectSpec(mass, [0.0, 0.0, height], mu_s)]
    ang = 2 * np.pi * np.arange(k) / k
    return [ObjectSpec(mass, [radius * np.cos(a), radius * np.sin(a), height], mu_s, f"object{i}")
            for i, a in enumerate(ang)]


def objects_from_config(cfg):
    if "objects" in cfg:
        return [ObjectSpec.from_dict(o) for o in cfg["objects"]]
    return ring_objects(int(cfg.get("n_objects", 1)), float(cfg.get("mu_s", 0.21)),
                        float(cfg.get("ring_radius", 0.05)))


def robot_from_config(cfg, base_dir=None):
    path = cfg.get("robot")
    if path is None:
        return default_robot()
    path = Path(path)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return load_robot(path)


def radial_pose(p):
    p = np.asarray(p, dtype=float)
    return Pose.level(p, float(np.arctan2(p[1], p[0])))


def sub_seed(seed, *keys):
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def trajectory_profile(model, trajectory, dt=0.002):
    """(t, |v|, |a|) of the tray origin sampled every ``dt``."""
    t = np.arange(int(np.floor(trajectory.duration / dt + 1e-9)) + 1) * dt
    q, qd, qdd = trajectory.sample(t)
    fr = tray_frames(model, q, qd, qdd)
    return t, np.linalg.norm(fr["v"], axis=1), np.linalg.norm(fr["acc"], axis=1)


# ---------------------------------------------------------------------------
# data collection and training
# ---------------------------------------------------------------------------


@dataclass
class TrialRecord:
    a_max: float
    j_max: float
    duration: float
    slip_onset: float | None
    displacement_mm: float
    events: list = field(default_factory=list)

    def to_dict(self):
        return {
            "a_max": self.a_max,
            "j_max": self.j_max,
            "duration": self.duration,
            "slip_onset": self.slip_onset,
            "displacement_mm": self.displacement_mm,
            "events": [e.to_dict() for e in self.events],
        }


def collect_events(cfg, model=None, seed=0, audio_dir=None, dedup=True):
    """Run every grid point: plan, simulate, synthesize paired audio, detect.

    Returns per-grid-point :class:`TrialRecord` values. Each with-object
    trial contributes its own detection before deduplication, so records
    keep the raw per-trial events when ``dedup`` is False.
    """
    model = model or default_robot()
    col = cfg.get("collection", {})
    if "grid" in col:
        grid = [tuple(map(float, g)) for g in col["grid"]]
    else:
        grid = limit_grid(tuple(col.get("a_range", (1.0, 2.5))), tuple(col.get("j_range", (1.0, 10.0))),
                          int(col.get("n_acc", 4)), int(col.get("n_jerk", 4)))
        if int(col.get("n_acc", 4)) < 1 or int(col.get("n_jerk", 4)) < 1:
            grid = []
    if not grid:
        raise EmptyGrid("the limit grid has no points")
    start = np.asarray(col.get("start", COLLECT_START), dtype=float)
    end = np.asarray(col.get("end", COLLECT_END), dtype=float)
    yaw = col.get("yaw")
    yaw = float(np.arctan2(start[1], start[0])) if yaw is None else float(yaw)
    control_dt = float(col.get("control_dt", 0.002))
    trials = int(col.get("trials", 5))
    obj = ObjectSpec.from_dict(cfg.get("object", {"mu_s": 0.21, "mass": 0.1, "centroid_offset": [0, 0, 0.03]}))
    truth = ground_truth_from_config(cfg.get("ground_truth"))
    synth = cfg.get("synth", {})
    det = cfg.get("detection", {})
    distance = float(np.linalg.norm(end - start))

    records = []
    for gi, (a_max, j_max) in enumerate(grid):
        prof = scurve_plan(distance, a_max, j_max)
        traj = line_to_joint_trajectory(model, start, end, prof, control_dt, yaw=yaw)
        sim = simulate_transport(model, traj, [obj], truth)
        empty = simulate_transport(model, traj, [], truth)
        with_clips, without_clips = [], []
        for k in range(trials):
            pw = SynthParams(**{**synth, "seed": sub_seed(seed, gi, k, 1)})
            pn = SynthParams(**{**synth, "seed": sub_seed(seed, gi, k, 0)})
            with_clips.append(synth_audio(sim, traj, pw))
            without_clips.append(synth_audio(empty, traj, pn))
        if audio_dir is not None:
            audio_dir.mkdir(parents=True, exist_ok=True)
            for k, (cw, cn) in enumerate(zip(with_clips, without_clips)):
                write_wav(audio_dir / f"g{gi:02d}_t{k}_with.wav", cw)
                write_wav(audio_dir / f"g{gi:02d}_t{k}_without.wav", cn)
        events = pair_trials(with_clips, without_clips, cartesian_samples(prof, control_dt), dedup=dedup, **det)
        records.append(TrialRecord(a_max, j_max, prof.total_time, sim.slip_onset(0),
                                   float(sim.displacement_mm[0]), events))
        log.info("grid %d/%d a=%.2f j=%.2f onset=%s events=%d", gi + 1, len(grid), a_max, j_max,
                 sim.slip_onset(0), len(events))
    return records


def run_pipeline(cfg, run_dir, seed=0, base_dir=None):
    """gen-profiles -> simulate + synth-audio -> detect -> train-alpha.

    Writes ``trials.json``, ``events.jsonl``, ``samples.json``,
    ``model.json``, ``report.json`` and ``manifest.json`` to ``run_dir``.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    stages = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except EmptyGrid:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        stages[name] = round(time.perf_counter() - t0, 3)
        return out

    model = stage("load-robot", lambda: robot_from_config(cfg, base_dir))
    audio_dir = run_dir / "audio" if cfg.get("save_audio") else None
    # records keep every trial's detection; the training set keeps unique (v, a) pairs
    records = stage("collect", lambda: collect_events(cfg, model, seed, audio_dir, dedup=False))
    (run_dir / "trials.json").write_text(json.dumps([r.to_dict() for r in records], indent=1))
    events = unique_events([e for r in records for e in r.events])
    write_events(run_dir / "events.jsonl", events)

    mu_s = float(cfg.get("object", {}).get("mu_s", 0.21))
    train_cfg = cfg.get("training", {})

    def make_samples():
        if not events:
            raise ValueError("no sliding events detected")
        return augment_dataset(events_to_samples(events, mu_s), mu_s, float(train_cfg.get("dv", 0.02)))

    samples = stage("samples", make_samples)
    (run_dir / "samples.json").write_text(json.dumps([[s.v, s.alpha] for s in samples]))
    opts = {k: (tuple(v) if k == "hidden" else v) for k, v in train_cfg.items() if k != "dv"}
    tc = TrainConfig(**{**opts, "seed": seed})
    alpha_model = stage("train", lambda: train_alpha(samples, tc))
    save_model(alpha_model, run_dir / "model.json")

    truth = ground_truth_from_config(cfg.get("ground_truth"))
    ref = (lambda v: truth.alpha(v)) if truth.alpha_star is not None else (lambda v: np.ones_like(v))
    report = fit_report(alpha_model, samples, ref)
    sliding = [r for r in records if r.slip_onset is not None]
    trials = int(cfg.get("collection", {}).get("trials", 5))
    report.update({
        "grid_points": len(records),
        "sliding_grid_points": len(sliding),
        "unique_events": len(events),
        "detection": onset_hits(records, trials),
        "wall_time_s": round(time.perf_counter() - t_start, 3),
    })
    (run_dir / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))

    outputs = ["trials.json", "events.jsonl", "samples.json", "model.json", "report.json"]
    manifest = {
        "seed": seed,
        "config": cfg,
        "stages": stages,
        "outputs": {name: file_hash(run_dir / name) for name in outputs},
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str))
    return alpha_model, report


def onset_hits(records, trials, tol=0.002):
    """Detection accuracy over per-trial records (collected with ``dedup=False``).

    Every with-object trial of a sliding grid point counts once; it is a hit
    when its detected onset lies within ``tol`` of the simulator's slip onset.
    Events on grid points that never slide are counted as false alarms.
    """
    hits = total = false_alarms = 0
    for r in records:
        if r.slip_onset is None:
            false_alarms += len(r.events)
            continue
        total += trials
        hits += sum(abs(e.t_sliding - r.slip_onset) <= tol + 1e-12 for e in r.events)
    return {"hits": hits, "sliding_trials": total, "fraction": hits / total if total else float("nan"),
            "false_alarms": false_alarms, "tolerance_s": tol}


def detection_accuracy(cfg, model=None, seed=0, tol=0.002):
    """Fraction of sliding with-object trials whose detected onset is within ``tol``."""
    records = collect_events(cfg, model, seed, dedup=False)
    stats = onset_hits(records, int(cfg.get("collection", {}).get("trials", 5)), tol)
    return stats["fraction"], stats["hits"], stats["sliding_trials"], records


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalRow:
    name: str
    duration: float
    displacement_mm: float
    fell_off: bool
    status: str
    sim_status: str = ""
    error: str = ""
    plan_seconds: float = 0.0

    @property
    def ok(self):
        return self.status == "optimal" and not self.error

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class EvalReport:
    rows: list
    reductions: dict
    results: dict = field(default_factory=dict, repr=False)  # name -> (PlanRequest, PlanResult, SimResult | None)

    def row(self, name):
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {"rows": [r.to_dict() for r in self.rows], "reductions": self.reductions}

    def table(self):
        head = f"{'model':<20} {'duration_s':>10} {'disp_mm':>9} {'fell_off':>8} {'status':>10}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.name:<20} {r.duration:>10.4f} {r.displacement_mm:>9.3f} {str(r.fell_off):>8} "
                         f"{r.status:>10}" + (f"  {r.error}" if r.error else ""))
        for k, v in self.reductions.items():
            lines.append(f"reduction vs coulomb, {k}: {v:.1f}%")
        return "\n".join(lines)

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0].to_dict()))
            w.writeheader()
            for r in self.rows:
                w.writerow(r.to_dict())
        (out_dir / "report.txt").write_text(self.table() + "\n")
        (out_dir / "report.json").write_text(json.dumps(self.to_dict(), indent=1))


def reductions(rows):
    """100 * (1 - d_model / d_coulomb) for each learned row, when both runs succeeded."""
    try:
        base = next(r for r in rows if r.name == "coulomb")
    except StopIteration:
        return {}
    out = {}
    for r in rows:
        if r.name.startswith("learned") and r.ok and base.ok and base.displacement_mm > 0:
            out[r.name] = 100.0 * (1.0 - r.displacement_mm / base.displacement_mm)
    return out


def evaluate(cfg, base_dir=None, jobs=1, out_dir=None):
    """Plan and simulate every friction model for one start/goal request."""
    model = robot_from_config(cfg, base_dir)
    objects = objects_from_config(cfg)
    truth = ground_truth_from_config(cfg.get("ground_truth"), base_dir)
    H = int(cfg.get("H", 32))
    radius = float(cfg.get("tray_radius", 0.15))
    base = PlanRequest(
        radial_pose(cfg.get("start", EVAL_START)), radial_pose(cfg.get("goal", EVAL_GOAL)), objects,
        FrictionSpec.unconstrained(), model, H=H, margin_offset=float(cfg.get("margin_offset", 0.05)),
    )
    learned = []
    for i, entry in enumerate(cfg.get("models", [])):
        name = entry.get("name", f"learned{i}")
        if not name.startswith("learned"):
            name = f"learned-{name}"
        learned.append((name, FrictionSpec.learned(alpha_from_config(entry["model"], base_dir))))

    results = {}

    def run(name, friction, duration=None):
        t0 = time.perf_counter()
        req = base.replace(friction=friction)
        try:
            res = plan_time_optimal(req) if duration is None else plan_fixed_duration(req, duration)
        except Exception as exc:  # recorded per row
            return EvalRow(name, float("nan"), float("nan"), False, "error", error=f"{type(exc).__name__}: {exc}")
        row = EvalRow(name, res.duration, float("nan"), False, res.status, plan_seconds=time.perf_counter() - t0)
        results[name] = (req, res, None)
        if res.trajectory is None:
            return row
        try:
            sim = simulate_transport(model, res.trajectory, objects, truth, radius)
            row.displacement_mm = sim.mean_displacement_mm
            row.fell_off = bool(sim.fell_off.any())
            row.sim_status = sim.status
            results[name] = (req, res, sim)
        except Exception as exc:
            row.error = f"simulation: {type(exc).__name__}: {exc}"
        row.plan_seconds = time.perf_counter() - t0
        return row

    first = [("unconstrained", FrictionSpec.unconstrained()), ("coulomb", FrictionSpec.coulomb()), *learned]
    with ThreadPoolExecutor(max_workers=max(1, int(jobs))) as pool:
        rows = list(pool.map(lambda a: run(*a), first))
        # time-match to every learned plan that exists, even if its simulation failed
        planned = [r for r in rows if r.name.startswith("learned") and r.status == "optimal"]
        if planned:
            t_match = max(r.duration for r in planned)
            ablations = [("AS-coulomb", FrictionSpec.coulomb(), t_match),
                         ("AS-no-constraints", FrictionSpec.unconstrained(), t_match)]
            rows += list(pool.map(lambda a: run(*a), ablations))
    report = EvalReport(rows, reductions(rows), results)
    if out_dir is not None:
        report.write(out_dir)
    return report


__all__ = [
    "EmptyGrid",
    "EvalReport",
    "EvalRow",
    "Infeasible",
    "StageError",
    "collect_events",
    "detection_accuracy",
    "evaluate",
    "run_pipeline",
    "trajectory_profile",
]

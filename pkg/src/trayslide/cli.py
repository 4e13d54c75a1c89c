"""Command-line interface: ``trayslide <command> ...``.

Every command exits 0 on success. Failures print a one-line JSON object
``{"error": ..., "message": ...}`` to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("trayslide")


def _read_json(path):
    return json.loads(Path(path).read_text())


def _write_json(path, obj):
    text = json.dumps(obj, indent=1)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_plan(args):
    from .planner import PlanRequest, plan_time_optimal
    from .robot import tray_frames

    req_path = Path(args.request)
    request = PlanRequest.from_dict(_read_json(req_path), base_dir=req_path.parent)
    result = plan_time_optimal(request)
    _write_json(args.out, result.to_dict())
    if args.csv and result.trajectory is not None:
        traj = result.trajectory
        fr = tray_frames(request.model, traj.q, traj.qd, traj.qdd)
        margins = result.margins
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "x", "y", "z", "speed", "min_margin"])
            for i, t in enumerate(traj.times):
                m = float(margins[i].min()) if margins.size else float("nan")
                w.writerow([f"{t:.6f}", *(f"{c:.6f}" for c in fr["p"][i]), f"{np.linalg.norm(fr['v'][i]):.6f}",
                            f"{m:.6f}"])
    return 0


def cmd_tilt_test(args):
    from .constraints import virtual_tilt_test
    from .simulator import virtual_tilt

    angle = virtual_tilt(args.mu, args.increment)
    _write_json(None, {"mu_true": args.mu, "increment": args.increment, "angle": angle,
                       "mu_measured": virtual_tilt_test(args.mu, args.increment)})
    return 0


def cmd_gen_profiles(args):
    from .pipeline import COLLECT_END, COLLECT_START, EmptyGrid
    from .profiles import limit_grid, line_to_joint_trajectory, scurve_plan
    from .robot import default_robot, load_robot

    model = load_robot(args.robot) if args.robot else default_robot()
    start = np.array(args.start or COLLECT_START, dtype=float)
    end = np.array(args.end or COLLECT_END, dtype=float)
    grid = limit_grid(tuple(args.a_range), tuple(args.j_range), args.n_acc, args.n_jerk)
    if args.n_acc < 1 or args.n_jerk < 1:
        raise EmptyGrid("the limit grid has no points")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for i, (a, j) in enumerate(grid):
        prof = scurve_plan(float(np.linalg.norm(end - start)), a, j)
        traj = line_to_joint_trajectory(model, start, end, prof, args.control_dt, yaw=args.yaw)
        name = f"profile_{i:02d}.json"
        _write_json(out / name, {"profile": prof.to_dict(), "trajectory": traj.to_dict()})
        index.append({"file": name, "a_max": a, "j_max": j, "duration": prof.total_time})
    _write_json(out / "index.json", index)
    _write_json(None, {"profiles": len(index), "out_dir": str(out)})
    return 0


def _load_trajectory(path):
    from .planner import Trajectory

    d = _read_json(path)
    if "trajectory" in d and isinstance(d["trajectory"], dict):
        d = d["trajectory"]
    return Trajectory.from_dict(d)


def _sim_setup(config_path):
    from .pipeline import ground_truth_from_config, objects_from_config, robot_from_config

    cfg = _read_json(config_path) if config_path else {}
    base = Path(config_path).parent if config_path else None
    return (robot_from_config(cfg, base), objects_from_config(cfg), ground_truth_from_config(cfg.get("ground_truth"), base),
            float(cfg.get("tray_radius", 0.15)), cfg)


def cmd_simulate(args):
    from .simulator import simulate_transport

    model, objects, truth, radius, _ = _sim_setup(args.config)
    traj = _load_trajectory(args.trajectory)
    sim = simulate_transport(model, traj, objects, truth, radius, args.sim_dt)
    _write_json(args.out, sim.to_dict(timeline=args.timeline))
    return 0


def cmd_synth_audio(args):
    from .simulator import SynthParams, simulate_transport, synth_audio, write_wav

    model, objects, truth, radius, cfg = _sim_setup(args.config)
    if args.no_object:
        objects = []
    traj = _load_trajectory(args.trajectory)
    sim = simulate_transport(model, traj, objects, truth, radius)
    params = SynthParams(**{**cfg.get("synth", {}), "seed": args.seed})
    clip = synth_audio(sim, traj, params)
    write_wav(args.out, clip)
    _write_json(None, {"wav": args.out, "seconds": clip.duration, "slip_onset": sim.slip_onset()})
    return 0


def cmd_detect(args):
    from .acoustic import pair_trials, read_wav
    from .pipeline import trajectory_profile
    from .robot import default_robot, load_robot

    model = load_robot(args.robot) if args.robot else default_robot()
    traj = _load_trajectory(args.trajectory)
    profile = trajectory_profile(model, traj)
    events = pair_trials([read_wav(p) for p in args.with_object], [read_wav(p) for p in args.without_object], profile)
    lines = [json.dumps(e.to_dict()) for e in events]
    if args.out:
        Path(args.out).write_text("".join(line + "\n" for line in lines))
    else:
        for line in lines:
            print(line)
    return 0


def cmd_train_alpha(args):
    from .acoustic import read_events
    from .learning import TrainConfig, augment_dataset, events_to_samples, fit_report, save_model, train_alpha

    events = read_events(args.events)
    samples = augment_dataset(events_to_samples(events, args.mu), args.mu, args.dv)
    model = train_alpha(samples, TrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed))
    save_model(model, args.out)
    _write_json(args.report, fit_report(model, samples))
    return 0


def cmd_evaluate(args):
    from .pipeline import evaluate

    cfg_path = Path(args.config)
    report = evaluate(_read_json(cfg_path), base_dir=cfg_path.parent, jobs=args.jobs, out_dir=args.out_dir)
    print(report.table())
    return 0


def cmd_pipeline(args):
    from .pipeline import run_pipeline

    cfg_path = Path(args.config)
    cfg = _read_json(cfg_path)
    run_dir = args.run_dir or cfg.get("run_dir") or "run"
    _, report = run_pipeline(cfg, run_dir, seed=args.seed, base_dir=cfg_path.parent)
    _write_json(None, report)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="trayslide", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=0, help="seed for every random component (default 0)")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("plan", help="time-optimal plan for a request JSON")
    s.add_argument("request")
    s.add_argument("--out", default="-")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("tilt-test", help="virtual tilt measurement of mu_s")
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--increment", type=float, default=0.01)
    s.set_defaults(func=cmd_tilt_test)

    s = sub.add_parser("gen-profiles", help="S-curve data-collection trajectories over a limit grid")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--robot")
    s.add_argument("--start", type=float, nargs=3)
    s.add_argument("--end", type=float, nargs=3)
    s.add_argument("--yaw", type=float)
    s.add_argument("--a-range", type=float, nargs=2, default=(1.0, 2.5))
    s.add_argument("--j-range", type=float, nargs=2, default=(1.0, 10.0))
    s.add_argument("--n-acc", type=int, default=4)
    s.add_argument("--n-jerk", type=int, default=4)
    s.add_argument("--control-dt", type=float, default=0.002)
    s.set_defaults(func=cmd_gen_profiles)

    s = sub.add_parser("simulate", help="stick-slip simulation of a trajectory")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--config", help="objects / ground-truth JSON")
    s.add_argument("--sim-dt", type=float)
    s.add_argument("--timeline", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("synth-audio", help="synthetic contact-microphone WAV for a trajectory")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--config")
    s.add_argument("--no-object", action="store_true", help="record the empty tray")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_audio)

    s = sub.add_parser("detect", help="sliding events from paired WAV recordings")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--with-object", nargs="+", required=True)
    s.add_argument("--without-object", nargs="+", required=True)
    s.add_argument("--robot")
    s.add_argument("--out")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("train-alpha", help="fit the alpha model from sliding events")
    s.add_argument("--events", required=True)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--dv", type=float, default=0.02)
    s.add_argument("--epochs", type=int, default=2000)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--out", required=True)
    s.add_argument("--report", default="-")
    s.set_defaults(func=cmd_train_alpha)

    s = sub.add_parser("evaluate", help="plan + simulate every friction model for one request")
    s.add_argument("config")
    s.add_argument("--out-dir")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", help="collect -> detect -> train in a run directory")
    s.add_argument("config")
    s.add_argument("--run-dir")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        stage = getattr(exc, "stage", None)
        if stage is not None:
            err["stage"] = stage
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

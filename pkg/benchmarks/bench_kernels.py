"""Numba vs numpy timings for the two hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends live side by side in ``trayslide.kernels``; this calls them
directly so one process can time both. Outputs are compared before timing.
"""

import argparse
import time

import numpy as np

from trayslide import kernels
from trayslide.robot import default_robot


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def chain_inputs(model, batch, rng):
    q = model.home + rng.uniform(-0.5, 0.5, size=(batch, model.n))
    qd = rng.uniform(-1.0, 1.0, size=(batch, model.n))
    qdd = rng.uniform(-3.0, 3.0, size=(batch, model.n))
    return kernels._as_batch(model.dh, q, qd, qdd)


def slip_inputs(n_steps, rng):
    # level tray swinging along x hard enough to slide part of the time
    t = np.arange(n_steps) * 1e-3
    R = np.repeat(np.eye(3)[None], n_steps, axis=0)
    acc = np.zeros((n_steps, 3))
    acc[:, 0] = 4.0 * np.sin(2 * np.pi * 1.5 * t)
    w = np.zeros((n_steps, 3))
    wd = np.zeros((n_steps, 3))
    mu = np.full(n_steps, 0.21) * (1.0 + 0.01 * rng.standard_normal(n_steps))
    return R, acc, w, wd, mu, 0.9, np.array([0.0, 0.0, -9.81]), np.array([0.0, 0.0, 0.03]), 1e-3, 1e-4


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=33)
    ap.add_argument("--steps", type=int, default=20000)
    args = ap.parse_args(argv)
    if kernels.numba is None:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    model = default_robot()
    cin = chain_inputs(model, args.batch, rng)
    sin = slip_inputs(args.steps, rng)

    cases = [
        ("chain", kernels.chain_numpy, kernels._chain_numba, cin),
        ("chain_tangent", kernels.chain_tangent_numpy, kernels._chain_tangent_numba, cin),
        ("stick_slip", kernels.stick_slip_python, kernels._stick_slip_numba, sin),
    ]
    print(f"{'kernel':<15} {'size':>7} {'numpy_ms':>10} {'numba_ms':>10} {'speedup':>8} {'max_diff':>10}")
    for name, np_fn, nb_fn, a in cases:
        t0 = time.perf_counter()
        out_nb = nb_fn(*a)
        compile_s = time.perf_counter() - t0
        out_np = np_fn(*a)
        flat_np = [np.asarray(x, dtype=float) for x in _flatten(out_np)]
        flat_nb = [np.asarray(x, dtype=float) for x in _flatten(out_nb)]
        diff = max(float(np.max(np.abs(x - y))) if x.size else 0.0 for x, y in zip(flat_np, flat_nb))
        t_np = best_of(lambda: np_fn(*a), args.repeat)
        t_nb = best_of(lambda: nb_fn(*a), args.repeat)
        size = args.steps if name == "stick_slip" else args.batch
        print(f"{name:<15} {size:>7} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>7.1f}x {diff:>10.2e}"
              f"  (first numba call {compile_s:.2f} s)")


def _flatten(x):
    if isinstance(x, (tuple, list)):
        for y in x:
            yield from _flatten(y)
    else:
        yield x


if __name__ == "__main__":
    main()

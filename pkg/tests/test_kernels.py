import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import SinePath
from trayslide import kernels

needs_numba = pytest.mark.skipif(kernels.numba is None, reason="numba not importable")


@pytest.fixture
def states(robot):
    rng = np.random.default_rng(0)
    q, qd, qdd = SinePath(rng, robot.home, amp=1.0)(rng.uniform(0, 5, 40))
    return kernels._as_batch(robot.dh, q, qd, qdd)


def _assert_same(a, b, tol):
    if isinstance(a, tuple):
        for x, y in zip(a, b):
            _assert_same(x, y, tol)
    else:
        np.testing.assert_allclose(a, b, rtol=0, atol=tol)


@needs_numba
def test_chain_parity(states):
    _assert_same(kernels._chain_numba(*states), kernels.chain_numpy(*states), 1e-12)


@needs_numba
def test_chain_tangent_parity(states):
    _assert_same(kernels._chain_tangent_numba(*states), kernels.chain_tangent_numpy(*states), 1e-11)


@needs_numba
def test_stick_slip_parity():
    n = 3000
    t = np.arange(n) * 1e-3
    R = np.repeat(np.eye(3)[None], n, axis=0)
    acc = np.stack([4 * np.sin(5 * t), 2 * np.cos(3 * t), 0.5 * np.sin(t)], axis=1)
    w = np.stack([0 * t, 0 * t, 0.8 * np.sin(2 * t)], axis=1)
    wd = np.stack([0 * t, 0 * t, 1.6 * np.cos(2 * t)], axis=1)
    args = (R, acc, w, wd, np.full(n, 0.21), 0.9, np.array([0, 0, -9.81]), np.array([0.02, 0.0, 0.03]), 1e-3, 1e-4)
    a = kernels._stick_slip_numba(*args)
    b = kernels.stick_slip_python(*args)
    assert a[3] == b[3] and a[4] == b[4]
    assert np.array_equal(a[1], b[1]) and a[1].any()
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)
    np.testing.assert_allclose(a[2], b[2], atol=1e-12)


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(flag, expected):
    if expected == "numba" and kernels.numba is None:
        pytest.skip("numba not importable")
    env = {**os.environ, "TRAYSLIDE_DISABLE_NUMBA": flag}
    out = subprocess.run([sys.executable, "-c", "from trayslide import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected

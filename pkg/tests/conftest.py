import numpy as np
import pytest

from trayslide.robot import default_robot


class SinePath:
    """q(t) = q0 + sum_k A_k sin(w_k t + phi_k), with exact derivatives."""

    def __init__(self, rng, q0, n_terms=3, amp=0.3, omega=(0.5, 3.0)):
        n = len(q0)
        self.q0 = np.asarray(q0, dtype=float)
        self.A = rng.uniform(-amp, amp, size=(n_terms, n)) / n_terms
        self.w = rng.uniform(*omega, size=(n_terms, n))
        self.phi = rng.uniform(0, 2 * np.pi, size=(n_terms, n))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)[:, None, None]
        arg = self.w * t + self.phi
        q = self.q0 + (self.A * np.sin(arg)).sum(axis=1)
        qd = (self.A * self.w * np.cos(arg)).sum(axis=1)
        qdd = -(self.A * self.w**2 * np.sin(arg)).sum(axis=1)
        return q, qd, qdd


@pytest.fixture(scope="session")
def robot():
    return default_robot()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

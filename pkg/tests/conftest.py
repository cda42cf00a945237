import numpy as np
import pytest

from dsre.distributions import AffineFactor, ChiSquare1, StandardNormal, log_moment
from dsre.tail_index import solve_alpha


def random_factor(rng, alpha_range=(0.5, 6.0)):
    """A stationary factor with tail index inside ``alpha_range``, plus that index."""
    while True:
        if rng.random() < 0.5:
            f = AffineFactor(float(rng.choice([0.0, rng.uniform(0.0, 0.5)])), float(rng.uniform(0.3, 1.6)), StandardNormal())
        else:
            f = AffineFactor(float(rng.uniform(0.02, 0.4)), float(rng.uniform(0.1, 1.2)), ChiSquare1())
        if log_moment(f) >= -0.05:
            continue
        a = solve_alpha(f)
        if alpha_range[0] <= a <= alpha_range[1]:
            return f, a


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def record(number, ok, detail):
        line = "criterion %2d: %s  %s" % (number, "PASS" if ok else "FAIL", detail)
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import numpy as np
import pytest


def central_difference(fn, R, step=1e-5):
    """Gradient of scalar ``fn`` at ``R`` by central differences, entry by entry."""
    R = np.array(R, dtype=np.float64)
    grad = np.zeros_like(R)
    for idx in np.ndindex(R.shape):
        orig = R[idx]
        R[idx] = orig + step
        up = fn(R)
        R[idx] = orig - step
        down = fn(R)
        R[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def relative_error(numeric, analytic):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(numeric - analytic)) / scale)


@pytest.fixture
def fd():
    return central_difference


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from largestep.dataset import Dataset, generate_random
from largestep.diagnostics import DerivedConstants, eta0
from largestep.engine import run


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def report_criterion(request):
    """Record a one-line PASS/FAIL verdict; printed again in the terminal summary."""
    lines = request.config._acceptance_lines

    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda item: item[0]):
        terminalreporter.write_line(line)


def random_run(gamma, n, multiplier, seed, grace_steps=200, record_margins=True, d=2):
    """GD on a generated dataset at ``multiplier * eta0``, stopped ``grace_steps`` past tau."""
    ds, cert = generate_random(d, n, gamma, seed)
    eta = multiplier * eta0(n, gamma)
    k = DerivedConstants(eta=eta, gamma=gamma, n=n)
    tr = run(ds, cert, eta, record_margins=record_margins, stop_threshold=k.tau_threshold,
             grace_steps=grace_steps, eta0=k.eta0)
    return ds, cert, k, tr


@pytest.fixture
def unit_square():
    return Dataset(np.array([[1.0, 0.0], [0.0, 1.0]]))

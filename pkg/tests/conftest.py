import numpy as np
import pytest

from birefsim.config import resolve
from birefsim.dynamics import evolve


def pytest_configure(config):
    np.seterr(all="raise", under="ignore")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def experiment_scenario():
    return resolve(preset="experiment")


@pytest.fixture(scope="session")
def experiment_trajectory(experiment_scenario):
    """Full Rb-87 operating point; about 1.5 s, shared across the session."""
    return evolve(experiment_scenario.system)


@pytest.fixture(scope="session")
def fig4a_trajectories():
    out = {}
    for name in ("fig4a_0MHz", "fig4a_4MHz", "fig4a_20MHz"):
        out[name] = evolve(resolve(preset=name).system)
    return out


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    lines = request.config._acceptance_lines = getattr(request.config, "_acceptance_lines", [])

    def report(number, ok, text, soft=None):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {number}: {text}"
        if soft is not None:
            line += f" | soft part: {'PASS' if soft[0] else 'SOFT-FAIL'} ({soft[1]})"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

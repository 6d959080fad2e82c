import math

import pytest

from superefimov.potential import PotentialModel
from superefimov.two_body import build_mu_table, tune_resonance, two_body_grid


@pytest.fixture(scope="session")
def potential():
    return PotentialModel()


@pytest.fixture(scope="session")
def solution(potential):
    sol = tune_resonance(potential, two_body_grid(potential, 800), fit_slope=True)
    build_mu_table(sol, 1e-6, 0.4)
    return sol


@pytest.fixture(scope="session")
def c0_squared(solution):
    return solution.c0_squared


@pytest.fixture(scope="session")
def xi_limit(c0_squared):
    return 2.0 / (math.pi * c0_squared)


@pytest.fixture
def accept(request):
    """Record one ``[ACCEPT]`` line per criterion for the terminal summary."""
    lines = request.config.__dict__.setdefault("_accept_lines", [])

    def report(tag, ok, detail):
        line = f"[ACCEPT] {tag} {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_accept_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

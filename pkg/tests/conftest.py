import numpy as np
import pytest

from diffwave.hydro import GridSpec, SolverConfig, init_state, run
from diffwave.profile import ProfileParams, solve_profile
from diffwave.wave import WaveField

# Frozen with the Chebyshev collocation oracle in tests/oracles.py (n=300, agreement 2.5e-13).
ORACLE_T0 = 0.9981789305763962
ORACLE_TP0 = 0.0797268365225757
ORACLE_T2 = 1.096052398935402
ORACLE_TP2 = 0.010150742506883362


@pytest.fixture(scope="session")
def profile():
    return solve_profile(ProfileParams(0.9, 1.1, 1.0))


@pytest.fixture(scope="session")
def flat_profile():
    return solve_profile(ProfileParams(1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def wave(profile):
    return WaveField(profile, 0.1, t_max=1.0)


@pytest.fixture(scope="session")
def short_run(wave):
    """Canonical data on a small grid, sampled densely over the first unit of tau."""
    grid = GridSpec.for_run(wave.epsilon, 1.0, 512)
    taus = list(np.linspace(0.0, 5.0, 6))
    return run(init_state(wave, grid), 5.0, SolverConfig(), wave, taus)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])

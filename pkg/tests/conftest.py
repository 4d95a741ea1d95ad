import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bathtub_so.model import CostParams, Grid, InitialState, SpeedFunction

settings.register_profile("repo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def small_grid():
    return Grid(t_end=4000.0, n_time=40, x_max=10_000.0, n_length=10, arrival_times=(1500.0, 2200.0, 3000.0))


@pytest.fixture
def pl_speed():
    return SpeedFunction(((0.0, 15.0), (200.0, 10.0), (500.0, 4.0), (900.0, 2.0)), v_min=1.0, v_max=15.0)


@pytest.fixture
def lyon_params():
    return CostParams.lyon()


@pytest.fixture
def ramp_init(small_grid):
    return InitialState(np.linspace(0.01, 0.0, small_grid.n_length), small_grid.dx)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """``verdict(ok, text)`` prints one PASS/FAIL line and repeats it in the terminal summary."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def report(ok: bool, text: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {text}"
        print(line)
        lines.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from holdq.market import MarketState
from holdq.netcore import NetDims, NetworkParams, init_params


def random_params(dims: NetDims, rng, scale=0.5) -> NetworkParams:
    n = init_params(dims, 0).n_params
    return NetworkParams.from_flat(dims, rng.normal(0.0, scale, n))


def random_state(H: int, rng) -> MarketState:
    return MarketState(rng.normal(size=H), int(rng.integers(3)) - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dims():
    return NetDims(input_size=6, lstm_hidden=4, fc_hidden=3)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

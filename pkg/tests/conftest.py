import numpy as np
import pytest

from moxi.game import CachedOracle, TableGame
from moxi.tasks import SetSumGame, SetSumOracle


def g2_table():
    # f({}) = 0, f({0}) = 1, f({1}) = 2, f({0, 1}) = 4
    return TableGame([0.0, 1.0, 2.0, 4.0], name="G2")


def setsum_221():
    return SetSumOracle(SetSumGame((2, 2, 1), id="221"))


@pytest.fixture
def g2():
    return CachedOracle(g2_table())


@pytest.fixture
def g2_raw():
    return g2_table()


@pytest.fixture
def setsum():
    return CachedOracle(setsum_221())


def random_games(count, n_max, seed, n_min=2):
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(count):
        n = int(rng.integers(n_min, n_max + 1))
        out.append(TableGame.random(n, rng))
    return out


# one line per acceptance criterion, shown at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

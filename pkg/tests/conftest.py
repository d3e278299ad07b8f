import numpy as np
import pytest

from mvlbm.engine import FitConfig, run_sem_gibbs
from mvlbm.synthgen import generate, table1_spec


@pytest.fixture(scope="session")
def small_table1():
    """Two-view Table-1 style data, small enough for quick fits."""
    return generate(table1_spec(n=120, d=20, delta_dep=0.875, seed=5))


@pytest.fixture(scope="session")
def small_fit(small_table1):
    ds, _, _ = small_table1
    cfg = FitConfig(total_iters=60, burn_in=40, seed=2)
    return run_sem_gibbs(ds, (3, 3), ((3, 3, 3, 3),) * 2, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(LINES):
            terminalreporter.write_line(LINES[k])

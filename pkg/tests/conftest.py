import numpy as np
import pytest

from aniso_decay.grid_spectral import VelocityField, make_grid
from aniso_decay.presets import preset_initial_data
from aniso_decay.snapshots import SnapshotStore, make_schedule
from aniso_decay.solver import SolverConfig, run


@pytest.fixture(scope="session")
def grid():
    return make_grid(16, 16, 24.0, 8.0)


@pytest.fixture(scope="session")
def fine_grid():
    return make_grid(32, 32, 16.0, 8.0)


@pytest.fixture(scope="session")
def resolved_grid():
    """Fine enough that the sampled corollary data is divergence-free to round-off."""
    return make_grid(128, 64, 24.0, 12.0)


@pytest.fixture(scope="session")
def corollary_u0(grid):
    return preset_initial_data("corollary-phi", 0.5, grid)


@pytest.fixture(scope="session")
def short_schedule():
    return make_schedule(0.05, 0.5, 4, 2.0, extra=(1.0,))


@pytest.fixture(scope="session")
def short_run(corollary_u0, short_schedule):
    """Nonlinear run to t = 2 on the refined schedule; the coarse store is a subsample."""
    config = SolverConfig(dt=0.025, t_end=2.0, progress=False)
    fine, ledger = run(corollary_u0, config, short_schedule.refine())
    coarse = fine.subsample(short_schedule.times)
    return coarse, fine, ledger


@pytest.fixture(scope="session")
def short_store(short_run):
    return short_run[0]


@pytest.fixture(scope="session")
def linear_store(corollary_u0):
    config = SolverConfig(dt=0.1, t_end=4.0, linear_only=True, progress=False)
    store, _ = run(corollary_u0, config, make_schedule(0.1, 0.4, 4, 4.0))
    return store


@pytest.fixture
def zero_store(grid):
    store = SnapshotStore(grid)
    for t in (0.0, 0.5, 1.0, 1.5, 2.0):
        store.append(t, VelocityField.zeros(grid))
    return store


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from hskdv.cli import experiment_setup, experiment_sources
from hskdv.config import ExperimentConfig


@pytest.fixture(scope="session")
def desk_cfg():
    return ExperimentConfig().validate()


@pytest.fixture(scope="session")
def desk(desk_cfg):
    grid, tgrid, solver, w = experiment_setup(desk_cfg)
    xi1, xi2, f3 = experiment_sources(desk_cfg, grid, tgrid, w)
    return {"cfg": desk_cfg, "grid": grid, "tgrid": tgrid, "solver": solver, "w": w,
            "xi1": xi1, "xi2": xi2, "f3": f3}


@pytest.fixture(scope="session")
def small(desk_cfg):
    """Coarse grids for the tests that loop over many solves."""
    cfg = desk_cfg.with_overrides(N=24, M=32)
    grid, tgrid, solver, w = experiment_setup(cfg)
    xi1, xi2, f3 = experiment_sources(cfg, grid, tgrid, w)
    return {"cfg": cfg, "grid": grid, "tgrid": tgrid, "solver": solver, "w": w,
            "xi1": xi1, "xi2": xi2, "f3": f3}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

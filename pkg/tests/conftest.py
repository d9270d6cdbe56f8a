"""Shared model fixtures; session-scoped so assemblies are reused."""

import numpy as np
import pytest

from fsilab import (
    Params,
    ambient_preset,
    assemble_generator,
    build_grid,
    build_metric,
)


def make_model(nx, ny, preset="zero", amplitude=0.0, C1=1.0, C2=1.0,
               nu=1.0, lam=1.0, eta=1.0, Lx=1.0, Ly=1.0):
    grid = build_grid(nx, ny, Lx, Ly)
    U = ambient_preset(preset, amplitude, grid)
    metric = build_metric(U, C1, C2)
    gen = assemble_generator(Params(nu=nu, lam=lam, eta=eta, U=U, metric=metric), grid)
    return grid, U, metric, gen


@pytest.fixture(scope="session")
def model_zero_12():
    return make_model(12, 12)


@pytest.fixture(scope="session")
def model_zero_16():
    return make_model(16, 16)


@pytest.fixture(scope="session")
def model_compressive_12():
    return make_model(12, 12, preset="compressive", amplitude=0.01, C2=0.1)


@pytest.fixture(scope="session")
def model_small_admissible():
    # amplitude small enough that the dissipativity budget genuinely closes
    return make_model(12, 12, preset="compressive", amplitude=1e-3, C1=0.5, C2=4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)

import numpy as np
import pytest

from flows import ModelParams
from spatial import Backend, Grid, build_operator


@pytest.fixture
def unit_params():
    """γ₁ = γ₂ = β = 1, the strong-error parameter set"""
    return ModelParams(1.0, 1.0, 1.0)


@pytest.fixture
def evolution_params():
    return ModelParams(0.08, 0.064, 0.7)


@pytest.fixture
def decoupled_params():
    return ModelParams(0.0, 0.0, 0.0)


@pytest.fixture
def fd_op():
    return build_operator(Grid(64, Backend.FINITE_DIFFERENCE))


@pytest.fixture
def spectral_op():
    return build_operator(Grid(64, Backend.SPECTRAL_GALERKIN))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

import pytest

from carlemanlab.analytic import coefficient_preset, weight_preset
from carlemanlab.geometry import build_grid, interval, sample_coefficients
from carlemanlab.symbols import WeightFunction


@pytest.fixture(scope="session")
def grid_1d():
    return build_grid(interval(observed=("right",)), 64, 64, 1.0)


@pytest.fixture(scope="session")
def coeffs_1d(grid_1d):
    return sample_coefficients(coefficient_preset("identity", 1), grid_1d)


@pytest.fixture(scope="session")
def psi_1d(grid_1d):
    return WeightFunction.on_grid(weight_preset("shifted_square", 1), grid_1d)


@pytest.fixture(scope="session")
def psi_1d_scaled(grid_1d):
    # (x+1)^2/8 keeps exp(2 tau |alpha|) representable across the tau sweep
    return WeightFunction.on_grid(weight_preset("shifted_square", 1, scale=8.0), grid_1d)

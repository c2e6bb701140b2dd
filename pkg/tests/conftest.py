import numpy as np
import pytest

from gnplate.dynamics import assemble
from gnplate.grid import Grid
from gnplate.material import MaterialParams, ModelType
from gnplate.resultants import FIELD_NAMES, State


def reference_material(model: str = "TypeIII", **overrides) -> MaterialParams:
    """The workhorse parameter set used across the suite.

    Every coefficient is O(1) and every definiteness margin is comfortably
    positive, so failures point at code rather than at a borderline material.
    """
    zero = model == "TypeII"
    values = dict(
        lam=1.0, mu=1.0, d1=0.1, d2=0.1, c=1.0, kappa=0.2, r=1.0,
        k1=1.0, h1=1.0, hbar1=0.2,
        k2=0.0 if zero else 0.5,
        h2=0.0 if zero else 0.5,
        hbar2=0.0 if zero else 0.1,
        rho=1.0, T0=1.0, half_thickness=0.5,
    )
    values.update(overrides)
    return MaterialParams(model_type=ModelType.from_string(model), **values)


def random_state(grid: Grid, seed: int, scale: float = 1.0) -> State:
    rng = np.random.default_rng(seed)
    packed = scale * rng.standard_normal(len(FIELD_NAMES) * grid.n_nodes)
    return State.unpack(grid, packed)


@pytest.fixture(scope="session")
def mat3() -> MaterialParams:
    return reference_material("TypeIII")


@pytest.fixture(scope="session")
def mat2() -> MaterialParams:
    return reference_material("TypeII")


@pytest.fixture(scope="session")
def grid8() -> Grid:
    return Grid(1.0, 1.0, 8, 8)


@pytest.fixture(scope="session")
def grid_rect() -> Grid:
    # deliberately anisotropic: catches axis swaps that square grids hide
    return Grid(1.3, 0.7, 10, 6)


@pytest.fixture(scope="session")
def matrices3(mat3, grid8):
    return assemble(mat3, grid8)


@pytest.fixture(scope="session")
def matrices2(mat2, grid8):
    return assemble(mat2, grid8)

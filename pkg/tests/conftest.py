import numpy as np
import pytest

from dualsmooth import verify
from dualsmooth.models import CtmcModel, DiffusionModel1D


@pytest.fixture(scope="session")
def model_f3():
    return verify.load_fixture_model("model_f3.json")


@pytest.fixture(scope="session")
def obs_f3():
    return verify.load_fixture_observations("obs_f3.json")


@pytest.fixture(scope="session")
def lg_model():
    return verify.load_fixture_model("lg_scalar.json")


@pytest.fixture(scope="session")
def obs_lg():
    return verify.load_fixture_observations("obs_lg.json")


@pytest.fixture(scope="session")
def grid_model():
    return verify.load_fixture_model("grid_ou.json")


@pytest.fixture(scope="session")
def f3_result(model_f3, obs_f3):
    from dualsmooth import finite

    return finite.solve(model_f3, obs_f3)


def grid_model_with_n(base: DiffusionModel1D, n: int) -> DiffusionModel1D:
    return DiffusionModel1D(
        a=base._specs["a"],
        sigma=base._specs["sigma"],
        h=base._specs["h"],
        nu0=base._specs["nu0"],
        x_min=base.x_min,
        x_max=base.x_max,
        n=n,
    )


def stationary_distribution(A: np.ndarray) -> np.ndarray:
    """Left null vector of the rate matrix, normalized to a probability."""
    w, V = np.linalg.eig(A.T)
    k = int(np.argmin(np.abs(w)))
    pi = np.real(V[:, k])
    pi = np.abs(pi)
    return pi / pi.sum()


@pytest.fixture(scope="session")
def three_state_symmetric():
    return CtmcModel(
        d=3,
        A=[[-2.0, 1.0, 1.0], [1.0, -2.0, 1.0], [1.0, 1.0, -2.0]],
        h=[-1.0, 0.0, 1.0],
        nu0=[1 / 3, 1 / 3, 1 / 3],
    )

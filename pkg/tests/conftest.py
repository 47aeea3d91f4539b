import pytest

import bfkit

THREADS = 2


@pytest.fixture(scope="session")
def traj():
    return bfkit.solve_rho1(2.0, 1e-4)


@pytest.fixture(scope="session")
def traj_er():
    return bfkit.solve_rho1(1.5, 1e-4, mode="er")

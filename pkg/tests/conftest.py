import pytest

from parakernel import geometry, schrodinger
from parakernel.potentials import Bump


@pytest.fixture(scope="session")
def plane():
    return geometry.flat_plane()


@pytest.fixture(scope="session")
def small_bump():
    # amplitude chosen so the transformed plane stays non-parabolic
    return Bump(2.0, 1.0, 0.27)


@pytest.fixture(scope="session")
def plane_profile(plane, small_bump):
    return schrodinger.solve_profile(plane, small_bump)


@pytest.fixture(scope="session")
def plane_transform(plane, plane_profile):
    return schrodinger.h_transform(plane, plane_profile)

import numpy as np
import pytest

from cone_contact.base_geometry import BaseManifold, FinslerFamily
from cone_contact.cone_structures import ConeStructure
from cone_contact.correspondence import path_from_cone


def wave_b(t, p):
    t = np.asarray(t, dtype=float)
    lead = np.broadcast_shapes(t.shape, np.shape(p)[:-1])
    return np.stack([np.broadcast_to(0.25 * np.sin(t), lead), np.zeros(lead)], axis=-1)


@pytest.fixture
def plane():
    return BaseManifold(2)


@pytest.fixture
def euclidean():
    return FinslerFamily.euclidean(2)


@pytest.fixture
def randers():
    return FinslerFamily.randers(np.eye(2), np.array([0.5, 0.0]))


@pytest.fixture
def anisotropic():
    return FinslerFamily.riemannian(np.diag([4.0, 1.0]))


@pytest.fixture
def randers_wave():
    return FinslerFamily.randers(np.eye(2), wave_b, dimension=2)


@pytest.fixture
def minkowski_cone(plane, euclidean):
    return ConeStructure(plane, euclidean)


@pytest.fixture
def wave_cone(plane, randers_wave):
    return ConeStructure(plane, randers_wave)


@pytest.fixture
def minkowski_path(minkowski_cone):
    return path_from_cone(minkowski_cone, step=1e-3)


@pytest.fixture
def wave_path(wave_cone):
    return path_from_cone(wave_cone, step=1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

from __future__ import annotations

import numpy as np
import pytest

from starjunction import model


def zero_edge_data(xb, x, t):
    return np.zeros(np.shape(xb)[:-1])


def zero_volume_data(p, t):
    return np.zeros(np.shape(p)[:-1])


@pytest.fixture
def square_geom():
    return model.JunctionGeometry(
        ell0=0.25, lengths=(1.0, 1.0, 1.0),
        profiles=tuple(model.constant_profile("square", 0.25) for _ in range(3)))


@pytest.fixture
def asym_geom():
    return model.JunctionGeometry(
        ell0=0.25, lengths=(1.0, 1.0, 1.0),
        profiles=(model.constant_profile("square", 0.25),
                  model.constant_profile("square", 0.25),
                  model.constant_profile("square", 0.5)))


@pytest.fixture
def cosine_nl():
    return model.nonlinearity_from_scalars(
        model.k_cosine(1.0), model.k_michaelis_menten(1.0, 0.5),
        model.k_michaelis_menten(1.0, 1.0), k_plus=2.0)


@pytest.fixture
def zero_data():
    return model.zero_data(T=1.0)


def make_data(f=None, phi0=None, phi=None, T=1.0):
    return model.DataFunctions(
        f=f or zero_volume_data,
        phi0=phi0 or zero_volume_data,
        phi=phi or (zero_edge_data,) * 3,
        T=T)

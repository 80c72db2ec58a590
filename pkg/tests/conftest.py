import numpy as np
import pytest

from ccplap.discretization import WeightField, build_mesh
from ccplap.plap import ProblemSpec, SolverOptions


@pytest.fixture(scope="session")
def mesh256():
    return build_mesh(1, 256)


@pytest.fixture(scope="session")
def opts():
    return SolverOptions()


def make_spec(mesh, p=2.0, q=0.5, sigma=3.0, lam=1.0, k=1.0, h=1.0, sign=1):
    kk = k if isinstance(k, WeightField) else WeightField.constant(mesh, k)
    hh = h if isinstance(h, WeightField) else WeightField.constant(mesh, h)
    return ProblemSpec(p, q, sigma, lam, kk, hh, sign)


@pytest.fixture(scope="session")
def s0(mesh256):
    return make_spec(mesh256)


@pytest.fixture(scope="session")
def s0_minus(mesh256):
    return make_spec(mesh256, lam=1.5, sign=-1)


def rel_sup(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))

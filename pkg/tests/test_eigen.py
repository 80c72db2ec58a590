import math

import numpy as np
import pytest

import oracles
from ccplap.discretization import GridFunction, build_mesh
from ccplap.eigen import eigen_residual, first_eigenpair, rayleigh_quotient


def test_pi_squared_1d(mesh256):
    ep = first_eigenpair(mesh256, 2.0)
    assert ep.lam1 == pytest.approx(math.pi**2, rel=5e-3)
    assert ep.residual <= 1e-7
    assert ep.phi.sup_norm() == pytest.approx(1.0)
    assert np.all(ep.phi.values[mesh256.interior] > 0)


def test_two_pi_squared_2d():
    m = build_mesh(2, 32)
    ep = first_eigenpair(m, 2.0)
    assert ep.lam1 == pytest.approx(2 * math.pi**2, rel=1e-2)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_matches_closed_form_and_shooting(mesh256, p):
    ep = first_eigenpair(mesh256, p)
    assert ep.lam1 == pytest.approx(oracles.lambda1_closed_form(p), rel=1e-2)
    assert ep.lam1 == pytest.approx(oracles.lambda1_shooting(p), rel=1e-2)


def test_eigenfunction_matches_fine_grid(mesh256):
    ep = first_eigenpair(mesh256, 3.0)
    lam, x, phi = oracles.eigen_power(3.0)
    fine = np.interp(mesh256.points[:, 0], x, phi)
    assert np.max(np.abs(ep.phi.values - fine)) <= 1e-3
    assert ep.lam1 == pytest.approx(lam, rel=1e-3)


def test_rayleigh_quotient_is_an_upper_bound(mesh256):
    ep = first_eigenpair(mesh256, 2.0)
    trial = GridFunction.from_function(mesh256, lambda x: x * (1 - x))
    assert rayleigh_quotient(trial, 2.0) >= ep.lam1
    assert eigen_residual(trial, ep.lam1, 2.0) > eigen_residual(ep.phi, ep.lam1, 2.0)


def test_rejects_p_not_above_one(mesh256):
    with pytest.raises(ValueError):
        first_eigenpair(mesh256, 1.0)

import warnings

import numpy as np
import pytest
from conftest import make_spec

from ccplap.discretization import GridFunction, WeightField, build_mesh
from ccplap.errors import DomainError, IncompatibleFieldsError, InvalidSpecError
from ccplap.plap import (
    SolverOptions,
    energy_E,
    energy_F,
    jacobian,
    plap_apply,
    residual_vector,
    weak_residual,
)


def test_plap_p2_matches_three_point_stencil(mesh256):
    u = GridFunction.from_function(mesh256, lambda x: np.sin(np.pi * x))
    h = mesh256.spacing
    r = plap_apply(u, 2.0)
    v = u.values
    stencil = (2 * v[1:-1] - v[:-2] - v[2:]) / h
    assert np.allclose(r[1:-1], stencil, atol=1e-13)
    assert r[0] == 0 and r[-1] == 0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_plap_homogeneity(mesh256, p):
    u = GridFunction.from_function(mesh256, lambda x: x * (1 - x) * (1 + x))
    a = plap_apply(u * 3.0, p)
    b = plap_apply(u, p) * 3.0 ** (p - 1)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_plap_energy_pairing(mesh256):
    u = GridFunction.from_function(mesh256, lambda x: np.sin(np.pi * x) ** 2)
    for p in (1.7, 3.0):
        spec = make_spec(mesh256, p=p, q=0.3, sigma=p)
        grad = plap_apply(u, p) @ u.values
        from ccplap.plap import gradient_energy

        assert grad == pytest.approx(gradient_energy(mesh256, u.values, p), rel=1e-12)
        del spec


def test_spec_validation(mesh256):
    with pytest.raises(InvalidSpecError):
        make_spec(mesh256, q=1.5)
    with pytest.raises(InvalidSpecError):
        make_spec(mesh256, sigma=0.8)
    with pytest.raises(InvalidSpecError):
        make_spec(mesh256, lam=-1)
    with pytest.raises(InvalidSpecError):
        make_spec(mesh256, sign=0)
    with pytest.raises(IncompatibleFieldsError):
        make_spec(mesh256, h=WeightField.constant(build_mesh(1, 8)))


def test_critical_exponent_warns():
    m = build_mesh(2, 4)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        make_spec(m, p=1.5, q=0.2, sigma=6.0)
    assert any("critical" in str(x.message) for x in w)


def test_weak_residual_domain(s0):
    u = GridFunction.from_function(s0.mesh, lambda x: np.sin(2 * np.pi * x))
    with pytest.raises(DomainError):
        weak_residual(u, s0)
    with pytest.raises(IncompatibleFieldsError):
        weak_residual(GridFunction.zeros(build_mesh(1, 8)), s0)


def test_weak_residual_of_zero_is_zero(s0):
    assert np.all(weak_residual(GridFunction.zeros(s0.mesh), s0) == 0)


def test_energies_sign_and_split(s0):
    u = GridFunction.from_function(s0.mesh, lambda x: np.sin(np.pi * x))
    e, f = energy_E(u, s0), energy_F(u, s0)
    from ccplap.plap import energy_terms

    _, _, hint = energy_terms(s0, u.values)
    assert f - e == pytest.approx(2 * hint / (s0.sigma + 1), rel=1e-12)


@pytest.mark.parametrize("p,sign", [(2.0, 1), (3.0, 1), (1.6, -1), (2.5, -1)])
def test_jacobian_matches_finite_differences(p, sign):
    m = build_mesh(1, 24)
    spec = make_spec(m, p=p, q=0.4, sigma=p + 0.5, lam=2.0, k=WeightField.sine(m, 0.3), sign=sign)
    u = GridFunction.from_function(m, lambda x: np.sin(np.pi * x) * (1.2 + x))
    J = jacobian(u, spec, SolverOptions(eps_reg=0.0)).toarray()
    idx = m.interior
    rng = np.random.default_rng(0)
    d = np.zeros(m.num_nodes)
    d[idx] = rng.normal(size=idx.size)
    t = 1e-6
    fd = (residual_vector(spec, u.values + t * d) - residual_vector(spec, u.values - t * d)) / (2 * t)
    assert np.allclose((J @ d)[idx], fd[idx], rtol=1e-5, atol=1e-7)
    assert np.allclose(J, J.T, atol=1e-12)

import numpy as np
import oracles
import pytest
from conftest import rel_sup

from ccplap.discretization import GridFunction, WeightField, build_mesh
from ccplap.errors import NonConvergenceError
from ccplap.nlsolve import newton_engine, solve_concave, solve_load, solve_torsion
from ccplap.plap import SolverOptions, residual_floor


def test_torsion_p2_closed_form(mesh256):
    v = solve_torsion(mesh256, 2.0)
    x = mesh256.points[:, 0]
    assert np.max(np.abs(v.values - x * (1 - x) / 2)) < 1e-12
    assert v.sup_norm() == pytest.approx(0.125, abs=1e-4)


def test_torsion_p3_closed_form(mesh256):
    v = solve_torsion(mesh256, 3.0)
    assert v.sup_norm() == pytest.approx(0.23570, abs=1e-3)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_torsion_matches_fine_grid(mesh256, p):
    v = solve_torsion(mesh256, p)
    _, ref = oracles.torsion(p, 4096)
    assert rel_sup(v.values, ref[::16]) < 1e-3


def test_torsion_2d_positive_and_symmetric():
    m = build_mesh(2, 16)
    v = solve_torsion(m, 2.0)
    assert np.all(v.values[m.interior] > 0)
    # square: ~0.07367 for the continuum problem
    assert v.sup_norm() == pytest.approx(0.07367, rel=2e-2)
    grid = v.values.reshape(17, 17)
    assert np.allclose(grid, grid.T, atol=1e-12)


def test_load_doubling_p2(mesh256):
    a = solve_load(GridFunction(mesh256, np.ones(mesh256.num_nodes)), 2.0)
    b = solve_load(GridFunction(mesh256, 2 * np.ones(mesh256.num_nodes)), 2.0)
    assert np.max(np.abs(b.values - 2 * a.values)) < 1e-12


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_load_homogeneity(mesh256, p):
    g = GridFunction.from_function(mesh256, lambda x: 1 + x)
    a = solve_load(g, p)
    b = solve_load(g * 8.0, p)
    assert rel_sup(b.values, a.values * 8.0 ** (1 / (p - 1))) < 1e-9


def test_load_rejects_bad_input(mesh256):
    with pytest.raises(ValueError):
        solve_load(GridFunction(mesh256, -np.ones(mesh256.num_nodes)), 2.0)
    with pytest.raises(ValueError):
        solve_load(GridFunction.zeros(mesh256), 2.0)


@pytest.mark.parametrize("p,q", [(2.0, 0.5), (3.0, 1.2), (1.6, 0.3)])
def test_concave_matches_fine_grid(mesh256, p, q):
    k = WeightField.sine(mesh256, 0.4)
    w = solve_concave(2.0, k, q, p)
    _, ref = oracles.concave(2.0, lambda x: 1 + 0.4 * np.sin(np.pi * x), q, p)
    assert rel_sup(w.values, ref[::16]) < 1e-3
    assert np.all(w.values[mesh256.interior] > 0)


def test_concave_unique_from_three_starts(mesh256, opts):
    k = WeightField.constant(mesh256, 1.0)
    x = mesh256.points[:, 0]
    ref = solve_concave(3.0, k, 0.5, 2.0, opts)
    for init in (0.01 * np.sin(np.pi * x), 5 * x * (1 - x), np.sin(np.pi * x) ** 4):
        w = solve_concave(3.0, k, 0.5, 2.0, opts, initial=init)
        assert np.max(np.abs(w.values - ref.values)) <= 10 * opts.tol_newton


def test_newton_engine_linear_problem(mesh256):
    from ccplap.plap import load_vector, plap_vector, stiffness_part

    b = load_vector(mesh256, np.ones((mesh256.num_cells, 3)))
    out = newton_engine(
        GridFunction.zeros(mesh256),
        lambda u: plap_vector(mesh256, u, 2.0) - b,
        lambda u: stiffness_part(mesh256, u, 2.0, 0.0),
    )
    assert out.iterations == 1
    assert out.sup_norm() == pytest.approx(0.125, abs=1e-12)


def test_newton_engine_reports_divergence(mesh256):
    # no real root: u + u^2 + 1 = 0 componentwise
    def res(u):
        r = u + u * u + 1.0
        r[mesh256.boundary] = 0.0
        return r

    def jac(u):
        import scipy.sparse as sp

        return sp.diags(1 + 2 * u).tocsr()

    with pytest.raises(NonConvergenceError):
        newton_engine(GridFunction(mesh256, np.zeros(mesh256.num_nodes)), res, jac, SolverOptions(max_iter=20))


@pytest.mark.parametrize("scale", [1e-3, 1.0, 100.0])
def test_singular_range_matches_exact_torsion(mesh256, scale):
    p = 1.2
    a = 1.0 / (p - 1.0)
    x = mesh256.points[:, 0]
    exact = scale**a * (0.5 ** (a + 1) - np.abs(0.5 - x) ** (a + 1)) / (a + 1)
    u = solve_load(GridFunction(mesh256, np.full(mesh256.num_nodes, scale)), p)
    assert rel_sup(u.values, exact) <= 1e-3


def test_residual_floor_only_below_two(mesh256):
    u = np.ones(mesh256.num_nodes)
    assert residual_floor(mesh256, 2.0, u) == 0.0
    assert residual_floor(mesh256, 3.0, u) == 0.0
    assert 0.0 < residual_floor(mesh256, 1.5, u) < residual_floor(mesh256, 1.2, u) < 1.0

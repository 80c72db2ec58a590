"""Acceptance criteria; each test prints one PASS/FAIL line."""

import math

import numpy as np
import pytest

import oracles
from conftest import make_spec, rel_sup
from ccplap.branch import estimate_lambda_star_plus, monotone_iterate, sweep_minimal_branch
from ccplap.discretization import WeightField, build_mesh
from ccplap.eigen import first_eigenpair
from ccplap.nlsolve import solve_concave, solve_torsion
from ccplap.plap import SolverOptions, energy_F, weak_residual
from ccplap.subsuper import build_bundle, condition_terms
from ccplap.varmin import TOL_ENERGY, compute_Lambda, estimate_lambda_star_minus, minimize_F
from ccplap.verify import check_identities, picone_R, random_positive_pair

OPTS = SolverOptions()


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(1, 256)


@pytest.fixture(scope="module")
def s0(mesh):
    return make_spec(mesh)


@pytest.fixture(scope="module")
def bundle(s0):
    return build_bundle(s0.with_lambda(0.0), OPTS)


@pytest.fixture(scope="module")
def star_s0(s0, bundle):
    return estimate_lambda_star_plus(s0, OPTS, bundle)


def random_specs(mesh, count=3, seed=2024):
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(count):
        p = float(rng.uniform(1.5, 4.0))
        q = float(rng.uniform(0.2, 0.8)) * (p - 1.0)
        sigma = p - 1.0 + float(rng.uniform(0.5, 2.5))
        k = WeightField.sine(mesh, float(rng.uniform(-0.8, 0.8)))
        h = WeightField.affine(mesh, float(rng.uniform(0.5, 2.0)), float(rng.uniform(-0.4, 1.0)))
        specs.append(make_spec(mesh, p, q, sigma, 1.0, k, h))
    return specs


@pytest.fixture(scope="module")
def random_estimates(mesh):
    return [(spec, estimate_lambda_star_plus(spec, OPTS)) for spec in random_specs(mesh)]


def test_criterion_01_closed_forms(mesh, report):
    s2 = solve_torsion(mesh, 2.0, OPTS).sup_norm()
    s3 = solve_torsion(mesh, 3.0, OPTS).sup_norm()
    ok = abs(s2 - 0.125) <= 1e-4 and abs(s3 - 0.23570) <= 1e-3
    report(1, "torsion closed forms", ok, f"p=2 sup {s2:.7f}, p=3 sup {s3:.7f}")


def test_criterion_02_eigenvalues(mesh, report):
    l1 = first_eigenpair(mesh, 2.0, OPTS).lam1
    l2 = first_eigenpair(build_mesh(2, 32), 2.0, OPTS).lam1
    l3 = first_eigenpair(mesh, 3.0, OPTS).lam1
    shoot = oracles.lambda1_shooting(3.0)
    e1 = abs(l1 / math.pi**2 - 1)
    e2 = abs(l2 / (2 * math.pi**2) - 1)
    e3 = abs(l3 / shoot - 1)
    ok = e1 <= 5e-3 and e2 <= 1e-2 and e3 <= 1e-2 and abs(shoot - 28.29) <= 0.01 * 28.29
    report(2, "first eigenvalues", ok, f"1-D {l1:.5f} ({e1:.1e}), 2-D {l2:.4f} ({e2:.1e}), p=3 {l3:.4f} vs {shoot:.4f} ({e3:.1e})")


def test_criterion_03_constants(bundle, report):
    b = bundle
    M = b.C * b.lambda0 ** ((2.0 - 1.0) / (3.0 - 0.5))
    t1, t2 = condition_terms(b.lambda0, b.A, b.B, M, 2.0, 0.5, 3.0)
    ok = (
        abs(b.C / 4.595 - 1) <= 1e-3
        and abs(b.lambda0 / 7.197 - 1) <= 1e-3
        and abs(t1 + t2 - 1.0) <= 1e-6
        and abs(t1 - 0.8) <= 1e-6
        and abs(t2 - 0.2) <= 1e-6
        and abs(b.lambda_prime / 9.359 - 1) <= 5e-3
    )
    detail = f"C {b.C:.6f}, lambda0 {b.lambda0:.6f}, terms {t1:.7f}+{t2:.7f}, lambda' {b.lambda_prime:.5f} (lambda1 {b.lambda1:.5f})"
    report(3, "S0 constants", ok, detail)


def test_criterion_04_sandwich(star_s0, random_estimates, report):
    rows = [("S0", star_s0)]
    for i, (spec, est) in enumerate(random_estimates):
        rows.append((f"rand{i} p={spec.p:.2f} q={spec.q:.2f} s={spec.sigma:.2f}", est))
    ok = all(e.lambda0 <= e.estimate <= e.lambda_prime for _, e in rows)
    detail = "; ".join(f"{n}: {e.lambda0:.4g} <= {e.estimate:.5g} <= {e.lambda_prime:.4g}" for n, e in rows)
    report(4, "lambda0 <= lambda*+ <= lambda'", ok, detail)


def test_criterion_05_monotone_chain(s0, star_s0, random_estimates, report):
    runs = [(s0, lam) for lam in range(1, 8)] + [(s0, 0.99 * star_s0.lower)]
    for spec, est in random_estimates:
        runs += [(spec, 0.5 * est.lower), (spec, est.lower)]
    worst, converged = 0.0, 0
    for spec, lam in runs:
        trace = []
        pt = monotone_iterate(spec.with_lambda(lam), OPTS, trace=trace)
        if pt.converged:
            converged += 1
            worst = max([worst] + [v for _, _, v in trace])
    ok = converged == len(runs) and worst <= 1e-8
    report(5, "monotone chain", ok, f"{converged}/{len(runs)} converged runs, worst relative decrease {worst:.2e}")


def test_criterion_06_minimal_branch(s0, report):
    pts = sweep_minimal_branch(s0, range(1, 8), OPTS)
    sups = [pt.sup_norm for pt in pts]
    increasing = all(pt.converged for pt in pts) and all(b > a for a, b in zip(sups, sups[1:]))
    negative = all(pt.energy < 0 for pt in pts)
    ids = [check_identities(pt.solution, s0.with_lambda(pt.lam)) for pt in pts if pt.converged]
    passed = len(ids) == len(pts) and all(r.passed for r in ids)
    ok = increasing and negative and passed
    detail = f"sup {', '.join(f'{s:.4f}' for s in sups)}; max E {max(pt.energy for pt in pts):.3e}; identities {sum(r.passed for r in ids)}/{len(pts)}"
    report(6, "minimal branch", ok, detail)


def test_criterion_07_minus_problem(s0, report):
    sm = s0.replace(sign=-1)
    Lam, rep = compute_Lambda(sm, OPTS)
    gaps = [abs(energy_F(rep.minimizer, sm.with_lambda(lam)) - (Lam - lam)) for lam in (0.5 * Lam, Lam + 1, Lam + 2)]
    star = estimate_lambda_star_minus(sm, OPTS, Lambda=Lam)
    above = minimize_F(sm.with_lambda(Lam + 1.0), opts=OPTS)
    res = float(np.max(np.abs(weak_residual(above.minimizer, sm.with_lambda(Lam + 1.0))[sm.mesh.interior])))
    positive = bool(np.all(above.minimizer.values[sm.mesh.interior] > 0))
    low = minimize_F(sm.with_lambda(0.5 * star.estimate), opts=OPTS)
    ok = max(gaps) <= 1e-6 and star.estimate <= Lam and positive and res <= OPTS.tol_newton and abs(low.value) <= TOL_ENERGY
    detail = (
        f"Lambda {Lam:.6f}, identity gap {max(gaps):.1e}, lambda*- {star.estimate:.5f}, "
        f"residual at Lambda+1 {res:.1e}, F at lambda*-/2 {low.value:.1e}"
    )
    report(7, "minus problem", ok, detail)


def test_criterion_08_scale_covariance(mesh, star_s0, report):
    worst_u, worst_star, parts = 0.0, 0.0, []
    base = monotone_iterate(make_spec(mesh, lam=5.0), OPTS).solution.values
    for c in (2.0, 5.0):
        spec = make_spec(mesh, lam=5.0 / c, k=c)
        u = monotone_iterate(spec, OPTS).solution.values
        worst_u = max(worst_u, float(np.max(np.abs(u - base))))
        est = estimate_lambda_star_plus(spec.with_lambda(1.0), OPTS)
        err = abs(est.estimate * c / star_s0.estimate - 1.0)
        worst_star = max(worst_star, err)
        parts.append(f"c={c:g}: lambda*+ {est.estimate:.5f} (rel {err:.1e})")
    ok = worst_u <= 10 * OPTS.tol_newton and worst_star <= 5e-3
    report(8, "scale covariance", ok, f"max |du| {worst_u:.1e}; " + "; ".join(parts))


def test_criterion_09_picone(mesh, report):
    rng = np.random.default_rng(0)
    worst = math.inf
    for _ in range(100):
        u, v = random_positive_pair(mesh, rng)
        worst = min(worst, picone_R(u, v, float(rng.uniform(1.5, 4.0)))[0])
    v = solve_torsion(mesh, 2.0, OPTS)
    rmin, rint = picone_R(v * 2.0, v, 2.0)
    ok = worst >= -1e-12 and rmin == 0.0 and rint == 0.0
    report(9, "Picone", ok, f"min R over 100 pairs {worst:.3e}; u=2v: min {rmin:.1e}, integral {rint:.1e}")


def _nodes(mesh):
    return mesh.points[:, 0]


def test_criterion_10_oracle_equivalence(mesh, s0, report):
    x = _nodes(mesh)
    one = lambda t: np.ones_like(t)
    errs = {}
    for p in (1.5, 2.0, 3.0, 4.0):
        xf, uf = oracles.torsion(p)
        errs[f"torsion p={p:g}"] = rel_sup(solve_torsion(mesh, p, OPTS).values, np.interp(x, xf, uf))
    for p in (2.0, 3.0):
        _, xf, phi = oracles.eigen_power(p)
        errs[f"eigenfunction p={p:g}"] = rel_sup(first_eigenpair(mesh, p, OPTS).phi.values, np.interp(x, xf, phi))
    xf, wf = oracles.concave(5.0, one, 0.5, 2.0)
    errs["concave lambda=5"] = rel_sup(solve_concave(5.0, s0.k, 0.5, 2.0, OPTS).values, np.interp(x, xf, wf))
    xf, uf = oracles.minimal_solution(5.0, one, one, 0.5, 3.0, 2.0)
    errs["minimal S0 lambda=5"] = rel_sup(monotone_iterate(s0.with_lambda(5.0), OPTS).solution.values, np.interp(x, xf, uf))
    k = lambda t: 1.0 + 0.5 * np.sin(np.pi * t)
    h = lambda t: 1.0 + 0.5 * t
    spec = make_spec(mesh, 3.0, 1.2, 4.0, 10.0, WeightField.sine(mesh, 0.5), WeightField.affine(mesh, 1.0, 0.5))
    xf, uf = oracles.minimal_solution(10.0, k, h, 1.2, 4.0, 3.0)
    errs["minimal p=3 lambda=10"] = rel_sup(monotone_iterate(spec, OPTS).solution.values, np.interp(x, xf, uf))
    sm = s0.replace(sign=-1)
    Lam, _ = compute_Lambda(sm, OPTS)
    xf, uf = oracles.minus_solution(Lam + 1.0, one, one, 0.5, 3.0, 2.0)
    errs[f"minus lambda={Lam + 1:.3f}"] = rel_sup(minimize_F(sm.with_lambda(Lam + 1.0), opts=OPTS).minimizer.values, np.interp(x, xf, uf))
    worst = max(errs.values())
    report(10, "oracle equivalence", worst <= 1e-3, "; ".join(f"{n} {e:.1e}" for n, e in errs.items()))

"""Standalone structural checks on discrete fields.

Covers Picone's inequality, comparison, the branch energy identities, the
discrete Hopf slope and interior positivity, plus a seeded property suite
used by the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretization import GridFunction, WeightField, build_mesh
from .errors import DomainError
from .plap import ProblemSpec, SolverOptions, energy_E, energy_terms, plap_vector


def picone_R(u, v, p):
    """Pointwise minimum and integral of
    R = |∇u|^p − ∇(u^p/v^{p-1})·|∇v|^{p-2}∇v at every quadrature point,
    using ∇(u^p/v^{p-1}) = p(u/v)^{p-1}∇u − (p-1)(u/v)^p∇v.
    """
    mesh = u.mesh
    if not mesh.same_as(v.mesh):
        raise DomainError("u and v live on different meshes")
    uq = mesh.to_qp(u.values)
    vq = mesh.to_qp(v.values)
    # cells with every vertex on the boundary carry u = v = 0 and R = 0
    dead = np.all(np.isin(mesh.cells, mesh.boundary), axis=1)
    dead &= np.all(u.values[mesh.cells] == 0, axis=1) & np.all(v.values[mesh.cells] == 0, axis=1)
    live = ~dead
    if np.any(vq[live] <= 0):
        raise DomainError("v must be positive at every evaluation point")
    if np.any(uq < 0):
        raise DomainError("u must be nonnegative")
    R = np.zeros_like(uq)
    t = uq[live] / vq[live]
    a = np.broadcast_to(mesh.gradients(u.values)[live][:, None, :], t.shape + (mesh.dim,))
    c = t[..., None] * mesh.gradients(v.values)[live][:, None, :]
    R[live] = _picone_density(a, c, p)
    integral = float(np.sum(mesh.measures[:, None] * mesh.qp_weights[None, :] * R))
    return float(R.min()), integral


def _ratio_remainder(x, r):
    """(1+x)^r − 1 − r x, by its binomial series when |x| is small."""
    out = np.empty_like(x)
    small = np.abs(x) < 0.05
    xs = x[small]
    term = np.ones_like(xs) * r
    acc = np.zeros_like(xs)
    power = xs.copy()
    for k in range(2, 16):
        term = term * (r - k + 1) / k
        power = power * xs
        acc = acc + term * power
    out[small] = acc
    xb = x[~small]
    out[~small] = (1.0 + xb) ** r - 1.0 - r * xb
    return out


def _picone_density(a, c, p):
    """|a|^p − p|c|^{p-2}c·a + (p-1)|c|^p, evaluated without cancellation.

    This equals the Bregman remainder |a|^p − |c|^p − p|c|^{p-2}c·(a−c); with
    δ = a − c and x = (2c·δ + |δ|²)/|c|² it is |c|^p[g(x) + (p/2)|δ|²/|c|²],
    g(x) = (1+x)^{p/2} − 1 − (p/2)x.
    """
    cc = np.sum(c * c, axis=-1)
    aa = np.sum(a * a, axis=-1)
    out = aa ** (p / 2.0)
    nz = cc > 0
    if np.any(nz):
        d = a[nz] - c[nz]
        c2 = cc[nz]
        dd = np.sum(d * d, axis=-1)
        x = (2.0 * np.sum(c[nz] * d, axis=-1) + dd) / c2
        out[nz] = c2 ** (p / 2.0) * (_ratio_remainder(x, p / 2.0) + 0.5 * p * dd / c2)
    return out


def picone_R_naive(u, v, p):
    """Direct evaluation of the expanded Picone density (for cross-checking)."""
    mesh = u.mesh
    t = mesh.to_qp(u.values) / mesh.to_qp(v.values)
    gu = mesh.gradients(u.values)[:, None, :]
    gv = mesh.gradients(v.values)[:, None, :]
    nv = np.sqrt(np.sum(gv * gv, axis=-1))
    w = np.zeros_like(nv)
    w[nv > 0] = nv[nv > 0] ** (p - 2.0)
    R = np.sum(gu * gu, axis=-1) ** (p / 2.0) - p * t ** (p - 1.0) * w * np.sum(gu * gv, axis=-1) + (p - 1.0) * t**p * nv**p
    return np.broadcast_to(R, t.shape)


def comparison_premise(u, v, p, tol=0.0):
    """Discrete premise: u ≤ v on the boundary and plap(u) ≤ plap(v) + tol at interior nodes."""
    mesh = u.mesh
    b, idx = mesh.boundary, mesh.interior
    if np.any(u.values[b] > v.values[b]):
        return False
    d = plap_vector(mesh, u.values, p) - plap_vector(mesh, v.values, p)
    return bool(np.all(d[idx] <= tol))


def check_comparison(u, v, p):
    """Discrete conclusion u ≤ v + 1e-10 nodewise (call when the premise holds)."""
    return bool(np.all(u.values <= v.values + 1e-10))


@dataclass
class IdentityReport:
    energy: float
    grad_term: float
    k_term: float
    h_term: float
    stability: float
    stability_literal: float
    balance_defect: float
    gap: float
    scale: float
    slack: float = 1e-6

    @property
    def nontrivial(self):
        return self.scale > 0

    @property
    def energy_ok(self):
        return self.nontrivial and self.energy < 0

    @property
    def balance_ok(self):
        return abs(self.balance_defect) <= self.slack * self.scale

    @property
    def stability_ok(self):
        return self.stability >= -self.slack * self.scale

    @property
    def gap_ok(self):
        return self.gap >= -self.slack * self.scale

    @property
    def passed(self):
        if not self.nontrivial:
            return self.balance_ok
        return self.energy_ok and self.balance_ok and self.stability_ok and self.gap_ok

    def as_dict(self):
        return {
            "energy": self.energy,
            "stability": self.stability,
            "stability_literal": self.stability_literal,
            "balance_defect": self.balance_defect,
            "gap": self.gap,
            "scale": self.scale,
            "passed": self.passed,
        }


def check_identities(u, spec, slack=1e-6):
    """Negative energy, the stability inequality, the energy balance and the
    combined inequality for a solution ``u`` of the plus problem.

    Terms: G = ∫|∇u|^p, K = λ∫k u^{q+1}, H = ∫h u^{σ+1}.
      stability          G − qK/(p−1) − σH/(p−1)       (≥ 0 on the minimal branch)
      stability_literal  G − qK/(p−1) + σH/(p−1)       (opposite sign, reported only)
      balance_defect     G − K − H                     (= 0 for any solution)
      gap                (p−1−q)K − (σ+1−p)H           (≥ 0, from the two above)
    """
    p, q, s = spec.p, spec.q, spec.sigma
    G, Kint, H = energy_terms(spec, u.values)
    K = spec.lam * Kint
    return IdentityReport(
        energy=energy_E(u, spec),
        grad_term=G,
        k_term=K,
        h_term=H,
        stability=G - q * K / (p - 1) - s * H / (p - 1),
        stability_literal=G - q * K / (p - 1) + s * H / (p - 1),
        balance_defect=G - K - H,
        gap=(p - 1 - q) * K - (s + 1 - p) * H,
        scale=max(G, K, H),
        slack=slack,
    )


def boundary_slopes(u, mesh=None):
    """Inward slope at every boundary node, one-sided toward the nearest interior node.

    When the node two steps along that direction exists the second-order
    difference (4u₁ − u₂ − 3u₀)/(2d) is used, otherwise (u₁ − u₀)/d.
    """
    mesh = mesh or u.mesh
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
    pts = mesh.points
    inner = mesh.interior
    if inner.size == 0:
        return np.zeros(mesh.boundary.size)
    lookup = {tuple(np.round(x / mesh.spacing, 6)): i for i, x in enumerate(pts)}
    out = np.empty(mesh.boundary.size)
    for j, b in enumerate(mesh.boundary):
        dist = np.linalg.norm(pts[inner] - pts[b], axis=1)
        i1 = inner[int(np.argmin(dist))]
        step = pts[i1] - pts[b]
        d = float(np.linalg.norm(step))
        i2 = lookup.get(tuple(np.round((pts[b] + 2 * step) / mesh.spacing, 6)))
        if i2 is not None:
            out[j] = (4 * vals[i1] - vals[i2] - 3 * vals[b]) / (2 * d)
        else:
            out[j] = (vals[i1] - vals[b]) / d
    return out


def boundary_slope_check(u, mesh=None):
    """Minimum inward boundary slope; a positive value certifies the discrete Hopf property."""
    return float(boundary_slopes(u, mesh).min())


def interior_positive(u):
    """Strict positivity at every interior node."""
    return bool(np.all(u.values[u.mesh.interior] > 0))


def random_positive_pair(mesh, rng, modes=4):
    """Random (u ≥ 0, v > 0 inside) fields vanishing on the boundary."""
    x = mesh.points
    lo = np.array([e[0] for e in mesh.extent])
    hi = np.array([e[1] for e in mesh.extent])
    z = (x - lo) / (hi - lo)
    base = np.prod(np.sin(np.pi * z), axis=1)

    def modulation():
        coef = rng.normal(size=(modes, mesh.dim))
        mod = np.ones(len(x))
        for m in range(modes):
            mod = mod + 0.3 * np.prod(np.cos((m + 1) * np.pi * z * coef[m]), axis=1) / (m + 1)
        return np.exp(rng.normal(scale=0.5)) * mod

    u = base * modulation() ** 2
    v = base * (0.2 + np.abs(modulation()))
    u[mesh.boundary] = 0.0
    v[mesh.boundary] = 0.0
    return GridFunction(mesh, np.abs(u)), GridFunction(mesh, np.abs(v))


def run_suite(seed=0, n=128, opts=None):
    """Seeded property suite; returns a list of (name, passed, detail)."""
    from .branch import monotone_iterate
    from .nlsolve import solve_load, solve_torsion
    from .subsuper import build_bundle
    from .varmin import compute_Lambda, coercivity_floor, minimize_F

    opts = opts or SolverOptions()
    rng = np.random.default_rng(seed)
    results = []

    def record(name, ok, detail):
        results.append((name, bool(ok), detail))

    mesh = build_mesh(1, n)
    worst = math.inf
    for i in range(100):
        p = float(rng.uniform(1.2, 4.0))
        u, v = random_positive_pair(mesh, rng)
        worst = min(worst, picone_R(u, v, p)[0])
    record("picone_random", worst >= -1e-12, f"min R = {worst:.3e}")
    v = solve_torsion(mesh, 2.0, opts)
    rmin, rint = picone_R(v * 2.0, v, 2.0)
    record("picone_equality", abs(rmin) <= 1e-12 and abs(rint) <= 1e-12, f"min R = {rmin:.3e}")

    u1 = solve_load(GridFunction(mesh, np.ones(mesh.num_nodes)), 2.0, opts)
    u2 = solve_load(GridFunction(mesh, 2 * np.ones(mesh.num_nodes)), 2.0, opts)
    ok = comparison_premise(u1, u2, 2.0, 1e-12) and check_comparison(u1, u2, 2.0)
    record("comparison_loads", ok, f"max|2u1-u2| = {np.max(np.abs(2 * u1.values - u2.values)):.2e}")

    one = WeightField.constant(mesh, 1.0)
    s0 = ProblemSpec(2.0, 0.5, 3.0, 1.0, one, one)
    bundle = build_bundle(s0, opts)
    record(
        "subsuper_order",
        bundle.verified and check_comparison(bundle.sub, bundle.super, 2.0),
        f"margins {bundle.sub_margin:.2e}, {bundle.super_margin:.2e}",
    )

    for lam in (1.0, 5.0):
        pt = monotone_iterate(s0.with_lambda(lam), opts)
        if not pt.converged:
            record(f"identities_lambda_{lam:g}", False, pt.status)
            continue
        rep = check_identities(pt.solution, s0.with_lambda(lam))
        record(f"identities_lambda_{lam:g}", rep.passed, f"E = {rep.energy:.4g}, gap = {rep.gap:.4g}")
        record(f"chain_lambda_{lam:g}", pt.violation <= 1e-8, f"violation {pt.violation:.2e}")
        slope = boundary_slope_check(pt.solution)
        record(f"hopf_lambda_{lam:g}", slope > 0 and interior_positive(pt.solution), f"slope {slope:.4g}")
    record("hopf_torsion", abs(boundary_slope_check(v) - 0.5) <= 1e-3, f"slope {boundary_slope_check(v):.6f}")

    sm = s0.replace(sign=-1)
    Lam, rep = compute_Lambda(sm, opts)
    record("lambda_identity", True, f"Lambda = {Lam:.6g}")
    big = minimize_F(sm.with_lambda(Lam + 1.0), opts=opts)
    floor = coercivity_floor(sm.with_lambda(Lam + 1.0)) * mesh.measures.sum()
    record(
        "minus_minimizer",
        big.value < 0 and interior_positive(big.minimizer) and min(big.history) >= floor,
        f"F = {big.value:.4g}, floor = {floor:.4g}",
    )
    return results

"""Variational side of the minus problem: global minimization of F_λ, the
constrained level Λ, the obstacle problem and the extremal parameter λ*₋.

All descents act on nodal values and keep the iterate nonnegative through
the projection u ← |u| (F_λ(|u|) = F_λ(u)). Search directions are gradients
taken in the metric of the convex part of the functional, i.e. the Hessian
of (1/p)∫|∇u|^p + 1/(σ+1)∫h|u|^{σ+1}; the concave term enters explicitly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .branch import LambdaStarEstimate
from .discretization import GridFunction
from .errors import InvalidObstacleError, InvalidSpecError
from .nlsolve import newton_iterate
from .plap import (
    SolverOptions,
    effective_tol,
    energy_terms,
    jacobian_matrix,
    load_vector,
    mass_weighted,
    plap_vector,
    residual_vector,
    restrict,
    stiffness_part,
)

log = logging.getLogger(__name__)

TOL_ENERGY = 1e-8


@dataclass
class MinimizeReport:
    minimizer: GridFunction
    value: float
    grad_norm: float
    steps: int
    constraint_residual: float | None = None
    converged: bool = True
    multiplier: float | None = None
    history: list = field(default_factory=list, repr=False)

    @property
    def trivial(self):
        return not np.any(self.minimizer.values > 0)


def _require_minus(spec):
    if spec.sign != -1:
        raise InvalidSpecError("variational routines need the minus problem (sign -1)")


def _bump(mesh):
    """Positive product-of-sines bump, zero on the boundary, sup-norm 1."""
    x = mesh.points
    lo = np.array([e[0] for e in mesh.extent])
    hi = np.array([e[1] for e in mesh.extent])
    s = np.prod(np.sin(np.pi * (x - lo) / (hi - lo)), axis=1)
    s[mesh.boundary] = 0.0
    return np.abs(s)


def _k_power(spec, u):
    mesh = spec.mesh
    return load_vector(mesh, mesh.to_qp(spec.k.values) * np.abs(mesh.to_qp(u)) ** spec.q)


def _h_power(spec, u):
    mesh = spec.mesh
    return load_vector(mesh, mesh.to_qp(spec.h.values) * np.abs(mesh.to_qp(u)) ** spec.sigma)


def _convex_value(spec, u):
    grad, _, hint = energy_terms(spec, u)
    return grad / spec.p + hint / (spec.sigma + 1)


def _concave_value(spec, u):
    return energy_terms(spec, u)[1] / (spec.q + 1)


def _F(spec, u, lam):
    return _convex_value(spec, u) - lam * _concave_value(spec, u)


def _convex_grad(spec, u):
    return plap_vector(spec.mesh, u, spec.p, 0.0) + _h_power(spec, u)


def _metric(spec, u, eps0):
    """Convex-part Hessian on the interior, regularized relative to the gradient scale."""
    mesh = spec.mesh
    g = mesh.gradients(u)
    gmax = float(np.max(np.linalg.norm(g, axis=1))) if g.size else 0.0
    eps = max(eps0, 1e-3 * gmax, 1e-12)
    H = stiffness_part(mesh, u, spec.p, eps)
    uq = np.abs(mesh.to_qp(u))
    H = H + mass_weighted(mesh, spec.sigma * mesh.to_qp(spec.h.values) * uq ** (spec.sigma - 1.0))
    return restrict(H, mesh.interior).tocsc()


def _gnorm(r, idx):
    return float(np.max(np.abs(r[idx]))) if idx.size else 0.0


def _descent(spec, u0, lam, opts, tol, max_steps, lower=None):
    """Preconditioned projected descent on F_λ; returns (u, F, grad-norm, steps, history, ok)."""
    mesh = spec.mesh
    idx = mesh.interior
    eps0 = opts.regularization(mesh)
    u = np.abs(np.asarray(u0, dtype=float))
    u[mesh.boundary] = 0.0
    if lower is not None:
        u = np.maximum(u, lower)
    f = _F(spec, u, lam)
    history = [f]

    def proj_grad(x):
        g = _convex_grad(spec, x) - lam * _k_power(spec, x)
        if lower is not None:
            # active nodes with the gradient pushing downward carry no stationarity defect
            act = (x <= lower) & (g > 0)
            g = np.where(act, 0.0, g)
        return g

    g = proj_grad(u)
    gn = _gnorm(g, idx)
    for step in range(max_steps):
        if gn <= tol:
            return u, f, gn, step, history, True
        try:
            d = np.zeros_like(u)
            d[idx] = -spla.spsolve(_metric(spec, u, eps0), g[idx])
        except RuntimeError:
            return u, f, gn, step, history, False
        if not np.all(np.isfinite(d)):
            return u, f, gn, step, history, False
        slope = float(g[idx] @ d[idx])
        if slope >= 0:
            d[idx] = -g[idx]
            slope = -float(g[idx] @ g[idx])
        alpha = 1.0
        accepted = False
        while alpha > 1e-12:
            ut = np.abs(u + alpha * d)
            if lower is not None:
                ut = np.maximum(ut, lower)
            ft = _F(spec, ut, lam)
            if ft <= f + 1e-4 * alpha * slope or (ft < f and alpha < 1e-6):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return u, f, gn, step, history, False
        u, f = ut, ft
        history.append(f)
        g = proj_grad(u)
        gn = _gnorm(g, idx)
    return u, f, gn, max_steps, history, gn <= tol


def _polish(spec, u, lam, opts):
    """Newton on the weak residual of the minus problem; None unless it helps."""
    s = spec.with_lambda(lam)
    if not np.all(u[spec.mesh.interior] > 0):
        return None
    out = newton_iterate(
        spec.mesh,
        u,
        lambda x: residual_vector(s, x),
        lambda x, e: jacobian_matrix(s, x, e),
        opts,
        regularized=True,
        floor_p=spec.p,
    )
    if not out.converged or not np.all(out.values[spec.mesh.interior] > 0):
        return None
    return out


def minimize_F(spec, initial=None, opts=None, tol=None, max_steps=5000, polish=True):
    """Global minimizer of F_λ for the minus problem.

    Starts from ``initial`` (a GridFunction or nodal array) or a positive bump.
    Exit when the sup-norm of the discrete gradient is at most ``tol``
    (default ``opts.tol_newton``). A final Newton polish on the weak residual
    is accepted only when it keeps the field positive and does not raise F.
    The reported value never exceeds F(0) = 0.
    """
    _require_minus(spec)
    opts = opts or SolverOptions()
    tol = opts.tol_newton if tol is None else tol
    mesh = spec.mesh
    lam = spec.lam
    if initial is None:
        u0 = _bump(mesh)
    else:
        u0 = np.asarray(getattr(initial, "values", initial), dtype=float)
    # coarse descent stages, each followed by a Newton attempt: far cheaper
    # than descending all the way when the concave term is stiff
    g0 = _gnorm(_convex_grad(spec, u0) - lam * _k_power(spec, u0), mesh.interior)
    stages = [max(tol, r * g0) for r in (1e-2, 1e-4, 1e-6)] if polish else []
    u, f, gn, steps, history = np.abs(u0), _F(spec, np.abs(u0), lam), math.inf, 0, []
    u[mesh.boundary] = 0.0
    for stage_tol in stages + [tol]:
        stage_tol = effective_tol(mesh, spec.p, u, stage_tol)
        u, f, gn, extra, hist, _ = _descent(spec, u, lam, opts, stage_tol, max_steps)
        steps += extra
        history.extend(hist if not history else hist[1:])
        if gn <= effective_tol(mesh, spec.p, u, tol) or not polish:
            break
        out = _polish(spec, u, lam, opts)
        if out is not None:
            ft = _F(spec, out.values, lam)
            if ft <= f + 1e-12 * max(1.0, abs(f)):
                u, f = out.values, ft
                steps += out.iterations
                history.append(f)
                gn = _gnorm(_convex_grad(spec, u) - lam * _k_power(spec, u), mesh.interior)
                if gn <= effective_tol(mesh, spec.p, u, tol):
                    break
    ok = gn <= effective_tol(mesh, spec.p, u, tol)
    if f > 0.0:
        # zero is feasible and never worse
        u, f = np.zeros_like(u), 0.0
        gn = _gnorm(-lam * _k_power(spec, u), mesh.interior)
    if not ok:
        log.warning("minimize_F stagnated at lambda=%g (gradient %.2e)", lam, gn)
    return MinimizeReport(GridFunction(mesh, u), f, gn, steps, converged=ok, history=history)


def coercivity_floor(spec):
    """min_{t>0} C₂t^{σ+1} − C₁t^{q+1} with C₁ = λ‖k‖∞/(q+1), C₂ = inf h/(σ+1).

    Integrating the pointwise bound gives F_λ(u) ≥ (1/p)∫|∇u|^p + |Ω|·m_floor.
    """
    q, s = spec.q, spec.sigma
    C1 = spec.lam * spec.k.sup / (q + 1)
    C2 = spec.h.inf / (s + 1)
    if C1 == 0:
        return 0.0
    t = (C1 * (q + 1) / (C2 * (s + 1))) ** (1.0 / (s - q))
    return C2 * t ** (s + 1) - C1 * t ** (q + 1)


def coercivity_argmin(spec):
    q, s = spec.q, spec.sigma
    C1 = spec.lam * spec.k.sup / (q + 1)
    C2 = spec.h.inf / (s + 1)
    return (C1 * (q + 1) / (C2 * (s + 1))) ** (1.0 / (s - q))


def _constraint(spec, u):
    return _concave_value(spec, u)


def _rescale(spec, u):
    """t(u)·u with t(u) = [(q+1)/∫k|u|^{q+1}]^{1/(q+1)} so that the constraint is exactly 1."""
    c = _constraint(spec, u)
    if not c > 0:
        return None
    return u * c ** (-1.0 / (spec.q + 1))


def _constrained_descent(spec, v0, opts, tol, max_steps):
    mesh = spec.mesh
    idx = mesh.interior
    eps0 = opts.regularization(mesh)
    v = _rescale(spec, np.abs(v0))
    G = _convex_value(spec, v)
    history = [G]
    mu = 0.0
    gn = math.inf
    for step in range(max_steps + 1):
        g = _convex_grad(spec, v)
        c = _k_power(spec, v)
        H = _metric(spec, v, eps0)
        lu = spla.splu(H)
        Hg = lu.solve(g[idx])
        Hc = lu.solve(c[idx])
        mu = float(c[idx] @ Hg) / float(c[idx] @ Hc)
        r = g - mu * c
        gn = _gnorm(r, idx)
        if gn <= tol or step == max_steps:
            break
        d = np.zeros_like(v)
        d[idx] = -(Hg - mu * Hc)
        slope = float(r[idx] @ d[idx])
        alpha = 1.0
        accepted = False
        while alpha > 1e-12:
            vt = _rescale(spec, np.abs(v + alpha * d))
            if vt is not None:
                Gt = _convex_value(spec, vt)
                if Gt <= G + 1e-4 * alpha * slope or (Gt < G and alpha < 1e-6):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
        v, G = vt, Gt
        history.append(G)
    return v, G, mu, gn, step, history


def _bordered_polish(spec, v, mu, opts, tol):
    """Newton on G'(v) − μK'(v) = 0, K(v) = 1 for (v, μ); None unless it converges."""
    mesh = spec.mesh
    idx = mesh.interior
    eps0 = opts.regularization(mesh)
    x = v.copy()
    for _ in range(opts.max_iter):
        s = spec.with_lambda(mu)
        r = residual_vector(s, x)
        c = _k_power(spec, x)
        kres = _constraint(spec, x) - 1.0
        if _gnorm(r, idx) <= tol and abs(kres) <= 1e-12:
            return x, mu
        J = restrict(jacobian_matrix(s, x, eps0), idx)
        cc = c[idx][:, None]
        K = sp.bmat([[J, sp.csr_matrix(-cc)], [sp.csr_matrix(cc.T), None]], format="csc")
        try:
            d = spla.spsolve(K, -np.concatenate([r[idx], [kres]]))
        except RuntimeError:
            return None
        if not np.all(np.isfinite(d)):
            return None
        f0 = math.hypot(float(np.linalg.norm(r[idx])), kres)
        alpha = 1.0
        while alpha > 1e-6:
            xt = x.copy()
            xt[idx] += alpha * d[:-1]
            mt = mu + alpha * d[-1]
            if np.all(xt[idx] > 0):
                ft = math.hypot(
                    float(np.linalg.norm(residual_vector(spec.with_lambda(mt), xt)[idx])), _constraint(spec, xt) - 1.0
                )
                if ft <= (1 - 1e-4 * alpha) * f0:
                    break
            alpha *= 0.5
        else:
            return None
        x, mu = xt, mt
    return None


def compute_Lambda(spec, opts=None, initial=None, tol=None, max_steps=5000, check_lambdas=None):
    """Λ = min{(1/p)∫|∇v|^p + 1/(σ+1)∫h|v|^{σ+1} : (1/(q+1))∫k|v|^{q+1} = 1}.

    Tangential descent with exact rescaling onto the constraint after each
    step. Returns (Λ, report); the report's ``multiplier`` is the Lagrange
    multiplier. The identity F_λ(v) = Λ − λ is checked at three λ values.
    """
    _require_minus(spec)
    opts = opts or SolverOptions()
    mesh = spec.mesh
    tol = 1e-9 * max(1.0, float(np.max(np.abs(_k_power(spec, _bump(mesh)))))) if tol is None else tol
    v0 = _bump(mesh) if initial is None else np.asarray(getattr(initial, "values", initial), dtype=float)
    if not np.any(np.abs(v0[mesh.interior]) > 0):
        v0 = _bump(mesh)
    g0 = _gnorm(_convex_grad(spec, _rescale(spec, np.abs(v0))), mesh.interior)
    v, Lam, mu, gn, steps, history = None, None, None, math.inf, 0, []
    for stage_tol in (max(tol, 1e-3 * g0), max(tol, 1e-6 * g0)):
        v, Lam, mu, gn, extra, hist = _constrained_descent(spec, v0 if v is None else v, opts, stage_tol, max_steps)
        steps += extra
        history.extend(hist if not history else hist[1:])
        if gn <= tol or not np.all(v[mesh.interior] > 0):
            break
        out = _bordered_polish(spec, v, mu, opts, tol)
        if out is not None and _convex_value(spec, out[0]) <= Lam + 1e-10 * abs(Lam):
            v = _rescale(spec, out[0])
            Lam = _convex_value(spec, v)
            mu = out[1]
            gn = _gnorm(_convex_grad(spec, v) - mu * _k_power(spec, v), mesh.interior)
            history.append(Lam)
            if gn <= tol:
                break
    if gn > tol:
        v, Lam, mu, gn, extra, hist = _constrained_descent(spec, v, opts, tol, max_steps)
        steps += extra
        history.extend(hist[1:])
    cres = abs(_constraint(spec, v) - 1.0)
    if not np.any(v > 0):
        v, Lam, mu, gn, steps, history = _constrained_descent(spec, _bump(mesh), opts, tol, max_steps)
        cres = abs(_constraint(spec, v) - 1.0)
    lams = check_lambdas if check_lambdas is not None else (0.5 * Lam, Lam + 1.0, Lam + 2.0)
    for lam in lams:
        gap = _F(spec, v, lam) - (Lam - lam)
        if abs(gap) > 1e-6:
            raise ArithmeticError(f"identity F(v) = Lambda - lambda off by {gap:g} at lambda={lam}")
    report = MinimizeReport(GridFunction(mesh, v), Lam, gn, steps, cres, gn <= tol, mu, history)
    return Lam, report


def obstacle_minimize(spec, lower, opts=None, initial=None, tol=None, max_steps=5000):
    """min F_λ(v) over v ≥ u_μ by projected descent with clipping v ← max(v, u_μ)."""
    _require_minus(spec)
    opts = opts or SolverOptions()
    mesh = spec.mesh
    if not lower.mesh.same_as(mesh):
        raise InvalidObstacleError("obstacle lives on a different mesh")
    lo = np.asarray(lower.values, dtype=float)
    if not np.all(np.isfinite(lo)):
        raise InvalidObstacleError("obstacle has non-finite values")
    if np.any(np.abs(lo[mesh.boundary]) > 0):
        raise InvalidObstacleError("obstacle must vanish on the boundary")
    lo = np.maximum(lo, 0.0)
    if not np.any(lo > 0):
        return minimize_F(spec, initial, opts, tol)
    tol = opts.tol_newton if tol is None else tol
    if initial is None:
        u0 = lo + _bump(mesh) * float(np.max(lo))
    else:
        u0 = np.asarray(getattr(initial, "values", initial), dtype=float)
    u, f, gn, steps, history, ok = _descent(spec, u0, spec.lam, opts, tol, max_steps, lower=lo)
    if not ok and gn > tol:
        # the constraint is inactive at an interior minimizer; try Newton there
        out = _polish(spec, u, spec.lam, opts)
        if out is not None and np.all(out.values >= lo):
            ft = _F(spec, out.values, spec.lam)
            if ft <= f + 1e-12 * max(1.0, abs(f)):
                u, f, gn = out.values, ft, out.residual
                ok = True
    u = np.maximum(u, lo)
    return MinimizeReport(GridFunction(mesh, u), _F(spec, u, spec.lam), gn, steps, converged=gn <= tol, history=history)


def nontrivial(spec, lam, opts=None, tol_energy=TOL_ENERGY, initial=None):
    """Predicate "minimize_F finds F < −tol_energy" at λ, with its report."""
    rep = minimize_F(spec.with_lambda(lam), initial, opts)
    return rep.value < -tol_energy, rep


def estimate_lambda_star_minus(spec, opts=None, tol_energy=TOL_ENERGY, rtol=1e-3, Lambda=None, max_shrink=60):
    """Bisection for λ*₋ on [λ_lo, Λ̂] with the nontriviality predicate.

    λ_lo starts at Λ̂/2 and is halved until the predicate fails. In the
    continuum every λ > 0 gives inf F_λ < 0 when q+1 < p, so the estimate is
    the threshold at which the negative energy becomes resolvable above
    ``tol_energy``; it always satisfies estimate ≤ Λ̂.
    """
    _require_minus(spec)
    opts = opts or SolverOptions()
    if Lambda is None:
        Lambda, _ = compute_Lambda(spec, opts)
    history = []
    low_conf = False

    def test(lam):
        nonlocal low_conf
        ok, rep = nontrivial(spec, lam, opts, tol_energy)
        if not rep.converged:
            ok2, rep2 = nontrivial(spec, lam, opts.replace(max_iter=4 * opts.max_iter), tol_energy)
            if not rep2.converged:
                low_conf = True
            ok, rep = ok2, rep2
        history.append((lam, "nontrivial" if ok else "trivial"))
        return ok, rep

    hi = Lambda
    ok_hi, rep_hi = test(hi)
    if not ok_hi:
        low_conf = True
        log.warning("predicate false at Lambda=%g", hi)
        return LambdaStarEstimate(hi, hi, hi, "minus", None, None, Lambda, history, True, rep_hi)
    lo = 0.5 * hi
    best = rep_hi
    for _ in range(max_shrink):
        ok, rep = test(lo)
        if not ok:
            break
        hi, best = lo, rep
        lo *= 0.5
    else:
        low_conf = True
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        ok, rep = test(mid)
        if ok:
            hi, best = mid, rep
        else:
            lo = mid
    return LambdaStarEstimate(lo, hi, 0.5 * (lo + hi), "minus", None, None, Lambda, history, low_conf, best)


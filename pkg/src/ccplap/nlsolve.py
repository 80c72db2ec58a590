"""Damped Newton engine and the three auxiliary boundary-value problems:
fixed load, torsion (load 1) and the pure concave problem -Δ_p w = λ k w^q.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .discretization import GridFunction
from .errors import NonConvergenceError
from .plap import (
    SolverOptions,
    concave_floor,
    effective_tol,
    gradient_energy,
    load_vector,
    mass_weighted,
    plap_vector,
    restrict,
    stiffness_part,
)

log = logging.getLogger(__name__)


@dataclass
class NewtonResult:
    values: np.ndarray
    iterations: int
    residual: float
    converged: bool
    diverged: bool = False
    history: list = field(default_factory=list)


def _sup(r, idx):
    return float(np.max(np.abs(r[idx]))) if idx.size else 0.0


def newton_iterate(mesh, x0, residual, jac, opts, merit=None, blowup_ref=None, regularized=False, floor_p=None):
    """Damped Newton on the interior unknowns.

    Backtracking uses the residual 2-norm unless ``merit`` (a scalar function
    of the nodal vector) is given. Convergence is the residual sup-norm
    reaching ``opts.tol_newton``. Never raises; inspect the result flags.

    With ``regularized=True`` the Jacobian is called as ``jac(x, eps)`` and
    the gradient regularization adapts: raised tenfold after a heavily
    damped step, lowered back towards ``opts.eps_reg`` after full steps.

    ``floor_p`` raises the tolerance to the roundoff floor of the p-Laplacian
    residual when 1 < p < 2, and there also accepts a negligible unregularized
    Newton correction.
    """
    eps0 = opts.regularization(mesh)
    eps = eps0
    idx = mesh.interior
    x = np.array(x0, dtype=float)
    x[mesh.boundary] = 0.0
    r = residual(x)
    res = _sup(r, idx)
    history = [res]
    best, since_best = res, 0
    ref = blowup_ref if blowup_ref is not None else max(float(np.max(np.abs(x))), 1.0)

    def tol_at(y):
        return opts.tol_newton if floor_p is None else effective_tol(mesh, floor_p, y, opts.tol_newton)

    tol = tol_at(x)
    for it in range(opts.max_iter):
        if res <= tol:
            return NewtonResult(x, it, res, True, history=history)
        J = restrict(jac(x, eps) if regularized else jac(x), idx).tocsc()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                d = spla.spsolve(J, -r[idx])
        except (RuntimeError, spla.MatrixRankWarning):
            d = np.full(idx.size, np.nan)
        if not np.all(np.isfinite(d)):
            log.debug("singular linearization at Newton step %d", it)
            return NewtonResult(x, it, res, False, history=history)
        step = np.zeros_like(x)
        step[idx] = d
        if floor_p is not None and floor_p < 2.0 and res <= 100.0 * tol and _sup(step, idx) <= 1e-10 * _sup(x, idx):
            # below the residual floor only the Newton correction is meaningful
            return NewtonResult(x, it, res, True, history=history)
        f0 = merit(x) if merit is not None else float(np.linalg.norm(r[idx]))
        alpha = 1.0
        accepted = False
        while alpha >= 1e-10:
            xt = x + alpha * step
            if not np.all(np.isfinite(xt)):
                alpha *= 0.5
                continue
            rt = residual(xt)
            if merit is not None:
                ft = merit(xt)
                ok = ft <= f0 - 1e-4 * alpha * abs(float(step[idx] @ r[idx])) or _sup(rt, idx) <= tol
            else:
                ft = float(np.linalg.norm(rt[idx]))
                ok = ft <= (1.0 - 1e-4 * alpha) * f0
            if ok and np.all(np.isfinite(rt)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if regularized and eps > eps0:
                # an inflated regularization can stall the search; retry sharp
                eps = eps0
                continue
            return NewtonResult(x, it, res, False, history=history)
        if regularized:
            if alpha == 1.0:
                eps = max(eps0, 0.1 * eps)
            elif alpha < 0.25:
                gmax = float(np.max(np.linalg.norm(mesh.gradients(xt), axis=1)))
                eps = min(10.0 * max(eps, 1e-8 * gmax), gmax)
        x, r = xt, rt
        res = _sup(r, idx)
        tol = tol_at(x)
        history.append(res)
        if float(np.max(np.abs(x))) > opts.blowup * ref:
            return NewtonResult(x, it + 1, res, False, diverged=True, history=history)
        if res < 0.999 * best:
            best, since_best = res, 0
        else:
            since_best += 1
            if since_best >= 15 and res > tol:
                return NewtonResult(x, it + 1, res, False, history=history)
    return NewtonResult(x, opts.max_iter, res, res <= tol, history=history)


def newton_engine(initial, residual_map, jacobian_map, opts=None):
    """Damped Newton with backtracking on the residual norm.

    ``residual_map`` and ``jacobian_map`` take and return full nodal arrays
    (the Jacobian as a sparse matrix). Raises :class:`NonConvergenceError`
    with ``diverged`` set when the iterate exceeds the blow-up threshold.
    """
    opts = opts or SolverOptions()
    out = newton_iterate(initial.mesh, initial.values, residual_map, jacobian_map, opts)
    if not out.converged:
        kind = "diverged" if out.diverged else "stagnated"
        raise NonConvergenceError(
            f"Newton {kind} after {out.iterations} steps (residual {out.residual:.3e})",
            last=GridFunction(initial.mesh, out.values),
            diverged=out.diverged,
            iterations=out.iterations,
        )
    result = GridFunction(initial.mesh, out.values)
    result.iterations = out.iterations
    result.history = out.history
    return result


def _linear_guess(mesh, b, p):
    """Laplace solve scaled so the p-energy balances the load along the ray."""
    idx = mesh.interior
    K = restrict(stiffness_part(mesh, np.zeros(mesh.num_nodes), 2.0, 0.0), idx).tocsc()
    z = np.zeros(mesh.num_nodes)
    z[idx] = spla.spsolve(K, b[idx])
    if p == 2.0:
        return z
    work = float(b @ z)
    grad = gradient_energy(mesh, z, p)
    if work <= 0 or grad <= 0:
        return z
    return (work / grad) ** (1.0 / (p - 1.0)) * z


def _regularized_energy(mesh, x, p, eps, b):
    g = mesh.gradients(x)
    s = np.einsum("ed,ed->e", g, g) + eps * eps
    return float(np.sum(mesh.measures * s ** (p / 2.0))) / p - float(b @ x)


def _continuation(mesh, x, b, p, opts):
    """Newton on the regularized convex energy for a decreasing sequence of ε.

    Each stage is a smooth strictly convex minimization, so Newton with an
    energy line search converges from any start; the last stage hands a very
    good guess to the exact-residual solve.
    """
    eps0 = opts.regularization(mesh)
    gmax = float(np.max(np.linalg.norm(mesh.gradients(x), axis=1))) if np.any(x) else 0.0
    eps = max(gmax, float(np.max(np.abs(b))) / mesh.spacing ** (mesh.dim - 1), 1.0)
    while True:
        e = eps

        def residual(y, e=e):
            return plap_vector(mesh, y, p, e) - b

        def jac(y, _unused=None, e=e):
            return stiffness_part(mesh, y, p, e)

        def merit(y, e=e):
            return _regularized_energy(mesh, y, p, e, b)

        stage_tol = max(opts.tol_newton, 1e-8 * float(np.max(np.abs(b))))
        out = newton_iterate(mesh, x, residual, jac, opts.replace(tol_newton=stage_tol, max_iter=200), merit=merit)
        x = out.values
        if eps <= eps0:
            return x
        eps = max(0.1 * eps, eps0)


def solve_rhs(mesh, b, p, opts=None, initial=None):
    """Solve plap(u) = b for a load vector ``b`` (boundary entries ignored).

    Fast path: regularized Newton from the given or a scaled linear guess.
    Fallback: continuation in the gradient regularization, then Newton on the
    exact residual with the convex energy as merit.
    """
    opts = opts or SolverOptions()
    b = np.array(b, dtype=float)
    b[mesh.boundary] = 0.0
    if not np.any(b):
        return np.zeros(mesh.num_nodes)
    # homogeneity: solve for a unit-size load so the regularization floor is
    # never comparable to the gradients, then rescale
    beta = float(np.max(np.abs(b))) / mesh.spacing**mesh.dim
    gamma = beta ** (1.0 / (p - 1.0))
    b = b / beta
    x0 = _linear_guess(mesh, b, p) if initial is None else np.asarray(initial, dtype=float) / gamma
    # absolute tolerance, floored at the roundoff level of large loads
    opts = opts.replace(tol_newton=max(opts.tol_newton / beta, 1e-12 * float(np.max(np.abs(b)))))

    def residual(x):
        return plap_vector(mesh, x, p, 0.0) - b

    def jac(x, eps):
        return stiffness_part(mesh, x, p, eps)

    def merit(x):
        return gradient_energy(mesh, x, p) / p - float(b @ x)

    long = opts.replace(max_iter=4 * opts.max_iter)
    out = newton_iterate(mesh, x0, residual, jac, opts, regularized=True, floor_p=p)
    if not out.converged and not out.diverged and p != 2.0:
        start = _continuation(mesh, _linear_guess(mesh, b, p), b, p, opts)
        out = newton_iterate(mesh, start, residual, jac, long, merit=merit, regularized=True, floor_p=p)
    if not out.converged and not out.diverged:
        out = newton_iterate(mesh, out.values, residual, jac, long, merit=merit, regularized=True, floor_p=p)
    if not out.converged:
        raise NonConvergenceError(
            f"load solve did not converge (residual {beta * out.residual:.3e})",
            last=GridFunction(mesh, gamma * out.values),
            diverged=out.diverged,
            iterations=out.iterations,
        )
    return gamma * out.values


def solve_load(g, p, opts=None, initial=None):
    """Solve -Δ_p u = g with zero boundary values for a nonnegative nodal load ``g``."""
    mesh = g.mesh
    if np.any(g.values < 0):
        raise ValueError("load must be nonnegative")
    if not np.any(g.values > 0):
        raise ValueError("load must not vanish identically")
    b = load_vector(mesh, mesh.to_qp(g.values))
    init = None if initial is None else initial.values
    return GridFunction(mesh, solve_rhs(mesh, b, p, opts, init))


def solve_torsion(mesh, p, opts=None):
    """Torsion function: -Δ_p v = 1, v = 0 on the boundary."""
    return solve_load(GridFunction(mesh, np.ones(mesh.num_nodes)), p, opts)


def _concave_maps(mesh, lam, k, q, p):
    kq = mesh.to_qp(k.values)

    def residual(x):
        uq = np.maximum(mesh.to_qp(x), 0.0)
        return plap_vector(mesh, x, p, 0.0) - load_vector(mesh, lam * kq * uq**q)

    def jac(x, eps):
        uq = np.maximum(mesh.to_qp(x), concave_floor(x))
        return stiffness_part(mesh, x, p, eps) - mass_weighted(mesh, lam * q * kq * uq ** (q - 1.0))

    return residual, jac


def solve_concave(lam, k, q, p, opts=None, initial=None, torsion=None):
    """Unique positive solution of -Δ_p w = λ k w^q, w = 0 on the boundary.

    Newton starts from the torsion function scaled so that
    c^{p-1} = λ k̄ (c‖v‖)^q. If it stalls, the Picard iteration
    w_{n+1} = solve(λ k w_n^q) takes over.
    """
    opts = opts or SolverOptions()
    if not (0 < q < p - 1):
        raise ValueError(f"need 0 < q < p-1, got q={q}, p={p}")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    mesh = k.mesh
    if initial is None:
        v = torsion if torsion is not None else solve_torsion(mesh, p, opts)
        vmax = v.sup_norm()
        kbar = float(np.mean(k.values))
        c = (lam * kbar * vmax**q) ** (1.0 / (p - 1.0 - q))
        x0 = c * v.values
    else:
        x0 = np.asarray(getattr(initial, "values", initial), dtype=float)
    residual, jac = _concave_maps(mesh, lam, k, q, p)
    out = newton_iterate(mesh, x0, residual, jac, opts, regularized=True, floor_p=p)
    if not out.converged:
        log.debug("concave Newton stalled (res %.2e); Picard fallback", out.residual)
        kq = mesh.to_qp(k.values)
        x = np.maximum(out.values, 0.0) if np.max(out.values) > 0 else np.abs(x0)
        for _ in range(opts.max_mono_iter):
            b = load_vector(mesh, lam * kq * np.maximum(mesh.to_qp(x), 0.0) ** q)
            x = solve_rhs(mesh, b, p, opts, initial=x)
            if _sup(residual(x), mesh.interior) <= 1e3 * effective_tol(mesh, p, x, opts.tol_newton):
                break
        out = newton_iterate(mesh, x, residual, jac, opts, regularized=True, floor_p=p)
        if not out.converged:
            raise NonConvergenceError(
                f"concave problem did not converge (residual {out.residual:.3e})",
                last=GridFunction(mesh, out.values),
                iterations=out.iterations,
            )
    return GridFunction(mesh, out.values)

"""Minimal solution branch of the plus problem.

Monotone iteration starts from the concave solution; sweeps over λ and a
bisection for the extremal parameter λ*₊ are built on it."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .discretization import GridFunction
from .errors import CCPlapError, NonConvergenceError
from .nlsolve import newton_iterate, solve_concave, solve_rhs
from .plap import SolverOptions, effective_tol, energy_E, jacobian_matrix, residual_vector, source_vector
from .subsuper import build_bundle

log = logging.getLogger(__name__)

CONVERGED, DIVERGED, STAGNATED = "converged", "diverged", "stagnated"


@dataclass
class BranchPoint:
    lam: float
    solution: GridFunction | None
    sup_norm: float
    energy: float
    iterations: int
    violation: float
    status: str
    residual: float = float("nan")
    polished: bool = False

    @property
    def converged(self):
        return self.status == CONVERGED

    def as_row(self):
        return {
            "lambda": self.lam,
            "sup_norm": self.sup_norm,
            "energy": self.energy,
            "iters": self.iterations,
            "status": self.status,
        }


@dataclass
class LambdaStarEstimate:
    lower: float
    upper: float
    estimate: float
    sign: str = "plus"
    lambda0: float | None = None
    lambda_prime: float | None = None
    Lambda: float | None = None
    history: list = field(default_factory=list)
    low_confidence: bool = False
    point: object = None

    def as_row(self):
        return {
            "sign": self.sign,
            "lambda0": self.lambda0,
            "lambda_prime": self.lambda_prime,
            "Lambda": self.Lambda,
            "lo": self.lower,
            "hi": self.upper,
            "estimate": self.estimate,
        }


def _sup(x):
    return float(np.max(np.abs(x)))


def monotone_iterate(spec, opts=None, w=None, polish=True, trace=None):
    """Iterate -Δ_p u_n = λ k u_{n-1}^q + h u_{n-1}^σ from u_0 = w.

    Converged when the full weak residual drops below ``opts.tol_newton``
    (raised to the roundoff floor when p < 2).
    Diverged when the sup-norm exceeds ``opts.blowup`` times that of w.
    ``violation`` is the largest observed max(u_{n-1} - u_n)/‖u_n‖∞.

    With ``polish`` a Newton solve on the full problem is attempted once the
    increments stall; it is accepted only if it converges to a field that
    dominates the current iterate (the minimal solution lies above every
    iterate), which shortens the slow approach near the fold.
    ``trace``, if a list, receives (n, sup_norm, violation) per step.
    """
    opts = opts or SolverOptions()
    if spec.sign != 1:
        raise ValueError("monotone iteration is for the plus problem")
    if spec.lam <= 0:
        raise ValueError("lambda must be positive")
    mesh = spec.mesh
    idx = mesh.interior
    if w is None:
        w = solve_concave(spec.lam, spec.k, spec.q, spec.p, opts)
    u = w.values.copy()
    ref = _sup(u)
    worst = 0.0
    growth = 0.0
    next_polish = 0

    def finish(status, x, n, res, polished=False):
        if status == CONVERGED:
            sol = GridFunction(mesh, np.maximum(x, 0.0))
            return BranchPoint(spec.lam, sol, _sup(x), energy_E(sol, spec), n, worst, status, res, polished)
        sol = GridFunction(mesh, x) if np.all(np.isfinite(x)) else None
        return BranchPoint(spec.lam, sol, _sup(x) if sol else float("inf"), float("nan"), n, worst, status, res)

    res = _sup(residual_vector(spec, u)[idx])
    if res <= effective_tol(mesh, spec.p, u, opts.tol_newton):
        return finish(CONVERGED, u, 0, res)
    for n in range(1, opts.max_mono_iter + 1):
        b = source_vector(spec, u)
        try:
            new = solve_rhs(mesh, b, spec.p, opts, initial=u)
        except NonConvergenceError as exc:
            last = exc.last.values if exc.last is not None else u
            # a failed load solve during fast growth is the blow-up, not a stall
            fast = (n > 1 and growth > 0.1) or _sup(last) > 2.0 * _sup(u)
            if exc.diverged or fast or not np.all(np.isfinite(last)) or _sup(last) > opts.blowup * ref:
                return finish(DIVERGED, last, n, float("inf"))
            return finish(STAGNATED, u, n, res)
        if not np.all(np.isfinite(new)) or _sup(new) > opts.blowup * ref:
            return finish(DIVERGED, new, n, float("inf"))
        smax = _sup(new)
        growth = smax / _sup(u) - 1.0
        worst = max(worst, float(np.max(u - new)) / smax)
        step = _sup(new - u) / smax
        u = new
        res = _sup(residual_vector(spec, u)[idx])
        if trace is not None:
            trace.append((n, smax, worst))
        if res <= effective_tol(mesh, spec.p, u, opts.tol_newton):
            return finish(CONVERGED, u, n, res)
        if polish and n >= next_polish and step < 1e-3:
            out = newton_iterate(
                mesh, u, lambda x: residual_vector(spec, x), lambda x, e: jacobian_matrix(spec, x, e), opts,
                regularized=True,
                floor_p=spec.p,
            )
            if out.converged and np.all(out.values >= u - 1e-8 * smax):
                return finish(CONVERGED, out.values, n, out.residual, polished=True)
            next_polish = n + max(10, n // 2)
    return finish(STAGNATED, u, opts.max_mono_iter, res)


def _point_task(args):
    spec, opts = args
    try:
        return monotone_iterate(spec, opts)
    except CCPlapError as exc:
        log.warning("lambda=%g failed: %s", spec.lam, exc)
        return BranchPoint(spec.lam, None, float("nan"), float("nan"), 0, 0.0, STAGNATED)


def sweep_minimal_branch(spec, lambdas, opts=None, jobs=1):
    """Monotone-iteration solutions at every λ in ``lambdas``, sorted by λ."""
    opts = opts or SolverOptions()
    lams = sorted(float(x) for x in lambdas)
    tasks = [(spec.with_lambda(lam), opts) for lam in lams]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_point_task, tasks))
    else:
        points = [_point_task(t) for t in tasks]
    return sorted(points, key=lambda pt: pt.lam)


def _exists(spec, lam, opts, history):
    pt = monotone_iterate(spec.with_lambda(lam), opts)
    retried = False
    if pt.status == STAGNATED:
        pt = monotone_iterate(spec.with_lambda(lam), opts.replace(max_mono_iter=4 * opts.max_mono_iter))
        retried = True
    history.append((lam, pt.status))
    return pt, retried and pt.status == STAGNATED


def estimate_lambda_star_plus(spec, opts=None, bundle=None, rtol=1e-3):
    """Bisection for λ*₊ on [λ₀, λ′] with "monotone iteration converges" as predicate.

    The guaranteed sandwich [λ₀, λ′] is carried along; the point estimate is
    the final bracket midpoint and ``point`` is the last converged solution.
    """
    opts = opts or SolverOptions()
    if bundle is None:
        bundle = build_bundle(spec.with_lambda(0.0), opts)
    lam0, lamp = bundle.lambda0, bundle.lambda_prime
    if not lam0 < lamp:
        raise CCPlapError(f"invariant violated: lambda0={lam0} is not below lambda'={lamp}")
    history = []
    low_conf = False
    lo, hi = lam0, lamp
    pt_lo, flag = _exists(spec, lo, opts, history)
    low_conf |= flag
    if not pt_lo.converged:
        low_conf = True
        log.warning("no convergence at lambda0=%g; discrete sandwich violated", lo)
    pt_hi, flag = _exists(spec, hi, opts, history)
    low_conf |= flag
    if pt_hi.converged:
        low_conf = True
        log.warning("converged at lambda'=%g; discrete sandwich violated", hi)
        return LambdaStarEstimate(hi, hi, hi, "plus", lam0, lamp, None, history, True, pt_hi)
    best = pt_lo if pt_lo.converged else None
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        pt, flag = _exists(spec, mid, opts, history)
        low_conf |= flag
        if pt.converged:
            lo, best = mid, pt
        else:
            hi = mid
    return LambdaStarEstimate(lo, hi, 0.5 * (lo + hi), "plus", lam0, lamp, None, history, low_conf, best)

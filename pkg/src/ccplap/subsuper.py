"""Explicit sub/super-solution construction for the plus problem and the
parameter bounds λ₀ (existence) and λ′ (non-existence).

Notation: v is the torsion function, w solves the pure concave problem,
A = ‖k‖∞‖v‖∞^q, B = ‖h‖∞‖v‖∞^σ, and the super-solution is M^{1/(p-1)} v
where M must satisfy 1 ≥ λ A M^a + B M^b with a = (q-p+1)/(p-1),
b = (σ-p+1)/(p-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .discretization import GridFunction
from .eigen import first_eigenpair
from .errors import InvalidSpecError
from .nlsolve import solve_concave, solve_torsion
from .plap import SolverOptions, plap_vector, source_vector


@dataclass
class SubSuperBundle:
    A: float
    B: float
    C: float
    lambda0: float
    lambda0_literal: float
    M: float | None = None
    eps: float | None = None
    lambda_prime: float | None = None
    m: float | None = None
    lambda1: float | None = None
    v: GridFunction | None = None
    w: GridFunction | None = None
    sub: GridFunction | None = None
    super: GridFunction | None = None
    sub_margin: float | None = None
    super_margin: float | None = None
    verified: bool = False

    def exponents(self, p, q, sigma):
        return (q - p + 1) / (p - 1), (sigma - p + 1) / (p - 1)

    def as_row(self):
        return {
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "lambda0": self.lambda0,
            "lambda0_literal": self.lambda0_literal,
            "lambda_prime": self.lambda_prime,
            "lambda1": self.lambda1,
            "m": self.m,
        }


def _check_exponents(p, q, sigma):
    if not (p > 1 and 0 < q < p - 1 < sigma):
        raise InvalidSpecError(f"need 0 < q < p-1 < sigma, got p={p}, q={q}, sigma={sigma}")


def condition_terms(lam, A, B, M, p, q, sigma):
    """The two summands λ A M^a and B M^b of the super-solution condition."""
    a = (q - p + 1) / (p - 1)
    b = (sigma - p + 1) / (p - 1)
    return lam * A * M**a, B * M**b


def minimizer_scale(A, B, p, q, sigma):
    """C with argmin_t (λ A t^a + B t^b) = C λ^{(p-1)/(σ-q)}."""
    return (A / B * (p - 1 - q) / (sigma - p + 1)) ** ((p - 1) / (sigma - q))


def M_of_lambda(C, lam, p, q, sigma):
    return C * lam ** ((p - 1) / (sigma - q))


def lambda0_from(A, B, C, p, q, sigma):
    """Largest λ for which the minimum over M of λ A M^a + B M^b is ≤ 1.

    Returns (corrected, literal): the exponent (σ-q)/(σ-p+1) follows from
    substituting M = Cλ^{(p-1)/(σ-q)}; the literal variant uses the exponent
    (σ-p)/(σ-p+1) instead and is kept for reporting only.
    """
    a = (q - p + 1) / (p - 1)
    b = (sigma - p + 1) / (p - 1)
    level = A * C**a + B * C**b
    corrected = level ** (-(sigma - q) / (sigma - p + 1))
    literal = level ** (-(sigma - p) / (sigma - p + 1)) if sigma != p else math.nan
    return corrected, literal


def condition_min(lam, A, B, p, q, sigma):
    """min over t > 0 of λ A t^a + B t^b by bounded search in log t."""
    a = (q - p + 1) / (p - 1)
    b = (sigma - p + 1) / (p - 1)

    def f(s):
        return lam * A * math.exp(a * s) + B * math.exp(b * s)

    res = minimize_scalar(f, bounds=(-60.0, 60.0), method="bounded", options={"xatol": 1e-12})
    return res.fun, math.exp(res.x)


def compute_constants(spec, v):
    """A, B, C, λ₀ (and the literal-exponent λ₀) from the torsion field ``v``.

    The defining property of λ₀ is re-checked by direct scalar minimization.
    """
    p, q, s = spec.p, spec.q, spec.sigma
    _check_exponents(p, q, s)
    vmax = v.sup_norm()
    A = spec.k.sup * vmax**q
    B = spec.h.sup * vmax**s
    C = minimizer_scale(A, B, p, q, s)
    lam0, lam0_lit = lambda0_from(A, B, C, p, q, s)
    fmin, _ = condition_min(lam0, A, B, p, q, s)
    if abs(fmin - 1.0) > 1e-6:
        raise ArithmeticError(f"lambda0 check failed: min of condition at lambda0 is {fmin}")
    return SubSuperBundle(A=A, B=B, C=C, lambda0=lam0, lambda0_literal=lam0_lit, v=v)


def weight_floor(spec):
    """m = min(ess inf k, ess inf h) over the nodal samples."""
    return min(spec.k.inf, spec.h.inf)


def _inf_level(lam, p, q, sigma):
    """inf over t > 0 of λ t^{q-p+1} + t^{σ-p+1} (numeric, in log t)."""
    al = q - p + 1
    be = sigma - p + 1

    def f(s):
        return lam * math.exp(al * s) + math.exp(be * s)

    res = minimize_scalar(f, bounds=(-60.0, 60.0), method="bounded", options={"xatol": 1e-13})
    return res.fun


def lambda_prime(m, lam1, p, q, sigma):
    """Smallest λ′ with inf_t m(λ′ t^{q-p+1} + t^{σ-p+1}) = λ₁, by bisection."""
    _check_exponents(p, q, sigma)
    if m <= 0 or lam1 <= 0:
        raise ValueError("m and lambda1 must be positive")

    def g(lam):
        return m * _inf_level(lam, p, q, sigma) - lam1

    hi = 1.0
    while g(hi) <= 0:
        hi *= 2.0
    lo = 0.0
    return brentq(g, lo, hi, xtol=1e-14, rtol=1e-13)


def nonexistence_holds(lam, m, lam1, p, q, sigma, ts):
    """Grid check of m(λ t^{q-p+1} + t^{σ-p+1}) > λ₁ for all t in ``ts``."""
    ts = np.asarray(ts, dtype=float)
    vals = m * (lam * ts ** (q - p + 1) + ts ** (sigma - p + 1))
    return bool(np.all(vals > lam1)), float(vals.min())


def build_subsolution(spec, w, eps):
    """ε^{1/(p-1)} w for ε in (0, 1)."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return w * eps ** (1.0 / (spec.p - 1.0))


def build_supersolution(spec, v, M):
    return v * M ** (1.0 / (spec.p - 1.0))


def sub_margin(spec, u):
    """min over interior nodes of load(u) − plap(u); ≥ 0 for a discrete sub-solution."""
    idx = spec.mesh.interior
    d = source_vector(spec, u.values) - plap_vector(spec.mesh, u.values, spec.p)
    return float(d[idx].min())


def super_margin(spec, u):
    """min over interior nodes of plap(u) − load(u); ≥ 0 for a discrete super-solution."""
    return -float((source_vector(spec, u.values) - plap_vector(spec.mesh, u.values, spec.p))[spec.mesh.interior].max())


def build_bundle(spec, opts=None, eps=0.5, eigenpair=None, v=None, w=None, with_lambda_prime=True):
    """Everything needed for the plus problem at ``spec.lam``.

    ε is halved until ε^{1/(p-1)} w ≤ M^{1/(p-1)} v nodewise. ``verified``
    is set when λ ≤ λ₀ and both discrete inequalities hold to 1e-10.
    """
    opts = opts or SolverOptions()
    mesh = spec.mesh
    v = v if v is not None else solve_torsion(mesh, spec.p, opts)
    bundle = compute_constants(spec, v)
    bundle.m = weight_floor(spec)
    if with_lambda_prime:
        ep = eigenpair if eigenpair is not None else first_eigenpair(mesh, spec.p, opts)
        bundle.lambda1 = ep.lam1
        bundle.lambda_prime = lambda_prime(bundle.m, ep.lam1, spec.p, spec.q, spec.sigma)
    if spec.lam > 0:
        w = w if w is not None else solve_concave(spec.lam, spec.k, spec.q, spec.p, opts, torsion=v)
        bundle.w = w
        bundle.M = M_of_lambda(bundle.C, spec.lam, spec.p, spec.q, spec.sigma)
        sup_field = build_supersolution(spec, v, bundle.M)
        e = eps
        sub_field = build_subsolution(spec, w, e)
        while np.any(sub_field.values > sup_field.values) and e > 1e-12:
            e *= 0.5
            sub_field = build_subsolution(spec, w, e)
        bundle.eps = e
        bundle.sub, bundle.super = sub_field, sup_field
        bundle.sub_margin = sub_margin(spec, sub_field)
        bundle.super_margin = super_margin(spec, sup_field)
        bundle.verified = bool(
            spec.lam <= bundle.lambda0 and bundle.sub_margin >= -1e-10 and bundle.super_margin >= -1e-10
        )
    return bundle

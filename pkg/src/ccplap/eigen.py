"""First Dirichlet eigenpair of the discrete p-Laplacian by inverse power iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import GridFunction
from .errors import NonConvergenceError
from .nlsolve import solve_rhs, solve_torsion
from .plap import SolverOptions, gradient_energy, load_vector, plap_vector, residual_floor


@dataclass
class EigenPair:
    lam1: float
    phi: GridFunction
    iterations: int = 0
    residual: float = 0.0


def rayleigh_quotient(u, p):
    """∫|∇u|^p / ∫|u|^p with the same quadrature as the load vectors."""
    mesh = u.mesh
    num = gradient_energy(mesh, u.values, p)
    den = mesh.integrate_qp(np.abs(mesh.to_qp(u.values)) ** p)
    return num / den


def eigen_residual(phi, lam1, p):
    """Sup-norm of plap(φ) − λ load(|φ|^{p-2}φ), relative to the load's sup-norm."""
    mesh = phi.mesh
    uq = mesh.to_qp(phi.values)
    b = load_vector(mesh, _signed_power(uq, p - 1.0))
    r = plap_vector(mesh, phi.values, p) - lam1 * b
    return float(np.max(np.abs(r)) / max(lam1 * np.max(np.abs(b)), 1e-300))


def _signed_power(x, e):
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = np.abs(x[nz]) ** e * np.sign(x[nz])
    return out


def first_eigenpair(mesh, p, opts=None, rtol=1e-8, res_tol=1e-7, max_iter=500):
    """λ₁ and φ₁ (sup-norm 1, positive inside) by repeatedly solving
    -Δ_p z = |φ|^{p-2}φ and renormalizing.

    Stops once the Rayleigh quotient changes by less than ``rtol`` relative
    and the relative eigen-equation residual is below ``res_tol``.
    """
    opts = opts or SolverOptions()
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    phi = solve_torsion(mesh, p, opts).values
    phi = phi / np.max(np.abs(phi))
    lam = rayleigh_quotient(GridFunction(mesh, phi), p)
    z = None
    for it in range(1, max_iter + 1):
        uq = mesh.to_qp(phi)
        b = load_vector(mesh, _signed_power(uq, p - 1.0))
        inner = opts.replace(tol_newton=min(opts.tol_newton, 1e-9 * float(np.max(np.abs(b)))))
        guess = None if z is None else phi * lam ** (-1.0 / (p - 1.0))
        try:
            z = solve_rhs(mesh, b, p, inner, initial=guess)
        except NonConvergenceError as exc:
            # tight inner tolerance can sit at the roundoff floor when p < 2
            z = exc.last.values
            r = plap_vector(mesh, z, p) - b
            if not np.max(np.abs(r)) <= 1e-8 * np.max(np.abs(b)):
                raise
        phi = z / np.max(np.abs(z))
        new = rayleigh_quotient(GridFunction(mesh, phi), p)
        change = abs(new - lam) / new
        lam = new
        if change < rtol:
            res = eigen_residual(GridFunction(mesh, phi), lam, p)
            # the eigen residual has the same roundoff floor as a load solve
            floor = 10.0 * residual_floor(mesh, p, phi) / (lam * float(np.max(np.abs(b))))
            if res < max(res_tol, floor):
                break
    else:
        raise NonConvergenceError(
            f"inverse power iteration did not settle in {max_iter} steps",
            last=GridFunction(mesh, phi),
            iterations=max_iter,
        )
    phi_gf = GridFunction(mesh, phi)
    return EigenPair(lam, phi_gf, it, eigen_residual(phi_gf, lam, p))

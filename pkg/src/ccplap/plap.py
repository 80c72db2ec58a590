"""Discrete p-Laplacian, weak residual of the concave-convex problem, its
Jacobian and the two energy functionals.

Vectors returned here are indexed by *all* mesh nodes; entries at Dirichlet
nodes are set to zero so inner products with nodal fields need no slicing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .discretization import Mesh, WeightField
from .errors import DomainError, IncompatibleFieldsError, InvalidSpecError


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances shared by the solvers.

    ``eps_reg=None`` means 1e-8 divided by the domain diameter. Residual
    tolerances are absolute sup-norms of the nodal residual vector.
    """

    eps_reg: float | None = None
    tol_newton: float = 1e-10
    tol_mono: float = 1e-10
    max_iter: int = 60
    max_mono_iter: int = 20000
    blowup: float = 1e4

    def __post_init__(self):
        if self.tol_newton <= 0 or self.tol_mono <= 0:
            raise ValueError("tolerances must be positive")
        if self.blowup <= 1:
            raise ValueError("blow-up threshold must exceed 1")
        if self.eps_reg is not None and self.eps_reg < 0:
            raise ValueError("eps_reg must be >= 0")

    def regularization(self, mesh):
        if self.eps_reg is not None:
            return self.eps_reg
        return 1e-8 / mesh.diameter

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class ProblemSpec:
    """-Δ_p u = λ k u^q ± h u^σ with zero Dirichlet data.

    ``sign`` is +1 for the convex-plus problem and -1 for the minus problem.
    """

    p: float
    q: float
    sigma: float
    lam: float
    k: WeightField
    h: WeightField
    sign: int = 1

    def __post_init__(self):
        p, q, s = self.p, self.q, self.sigma
        if not p > 1:
            raise InvalidSpecError(f"p must exceed 1, got {p}")
        if not (0 < q < p - 1 < s):
            raise InvalidSpecError(f"exponents must satisfy 0 < q < p-1 < sigma, got q={q}, p={p}, sigma={s}")
        if self.lam < 0:
            raise InvalidSpecError(f"lambda must be >= 0, got {self.lam}")
        if self.sign not in (1, -1):
            raise InvalidSpecError(f"sign must be +1 or -1, got {self.sign}")
        if not self.k.mesh.same_as(self.h.mesh):
            raise IncompatibleFieldsError("weights k and h live on different meshes")
        if self.k.inf <= 0 or self.h.inf <= 0:
            raise InvalidSpecError("weights must be strictly positive")
        N = self.mesh.dim
        if p < N:
            crit = N * p / (N - p) - 1
            if s >= crit:
                warnings.warn(f"sigma={s} is not below the critical exponent {crit:g}", stacklevel=2)

    @property
    def mesh(self) -> Mesh:
        return self.k.mesh

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))

    def replace(self, **kw):
        return replace(self, **kw)


def _flux_coefficient(grads, p, eps):
    """(|∇u|² + ε²)^{(p-2)/2} per element, 0 where the argument vanishes."""
    s = np.einsum("ed,ed->e", grads, grads) + eps * eps
    if p == 2.0:
        return np.ones_like(s), s
    out = np.zeros_like(s)
    nz = s > 0
    out[nz] = s[nz] ** ((p - 2.0) / 2.0)
    return out, s


def plap_vector(mesh, u, p, eps=0.0):
    """Σ_e |e| a_e ∇u·∇φ_i over all nodes (boundary rows zeroed)."""
    g = mesh.gradients(u)
    a, _ = _flux_coefficient(g, p, eps)
    flux = (a * mesh.measures)[:, None] * g  # (E, d)
    local = np.einsum("ead,ed->ea", mesh.basis_grads, flux)
    r = np.bincount(mesh.cells.ravel(), weights=local.ravel(), minlength=mesh.num_nodes)
    r[mesh.boundary] = 0.0
    return r


def plap_apply(u, p, eps_reg=0.0):
    """Discrete weak p-Laplacian of ``u`` tested against every hat function."""
    return plap_vector(u.mesh, u.values, p, eps_reg)


def source_qp(spec, uq, lam=None, sign=None):
    """λ k u^q ± h u^σ at the quadrature points for nonnegative ``uq``."""
    mesh = spec.mesh
    lam = spec.lam if lam is None else lam
    sign = spec.sign if sign is None else sign
    kq = mesh.to_qp(spec.k.values)
    hq = mesh.to_qp(spec.h.values)
    return lam * kq * uq**spec.q + sign * hq * uq**spec.sigma


def load_vector(mesh, qp_values):
    b = mesh.assemble_qp(qp_values)
    b[mesh.boundary] = 0.0
    return b


def source_vector(spec, u, lam=None, sign=None):
    """Load vector of the right-hand side evaluated at the (clipped) field ``u``."""
    mesh = spec.mesh
    uq = np.maximum(mesh.to_qp(u), 0.0)
    return load_vector(mesh, source_qp(spec, uq, lam, sign))


def residual_vector(spec, u, eps=0.0):
    return plap_vector(spec.mesh, u, spec.p, eps) - source_vector(spec, u)


def weak_residual(u, spec, opts=None):
    """plap_apply(u) minus the load of λk u^q ± h u^σ, per node (boundary rows zero).

    Evaluated without gradient regularization; ``opts`` is accepted for
    signature symmetry with the solvers.
    """
    if not u.mesh.same_as(spec.mesh):
        raise IncompatibleFieldsError("field and problem live on different meshes")
    if np.any(u.values < 0.0):
        raise DomainError(f"weak residual needs u >= 0 (min nodal value {u.values.min():g})")
    return plap_vector(spec.mesh, u.values, spec.p, 0.0) - source_vector(spec, u.values)


def gradient_energy(mesh, u, p):
    g = mesh.gradients(u)
    return float(np.sum(mesh.measures * np.einsum("ed,ed->e", g, g) ** (p / 2.0)))


def _weighted(mesh, w, u, r):
    return mesh.integrate_qp(mesh.to_qp(w.values) * np.abs(mesh.to_qp(u)) ** r)


def energy_terms(spec, u):
    """(∫|∇u|^p, ∫k|u|^{q+1}, ∫h|u|^{σ+1}) for a nodal array ``u``."""
    mesh = spec.mesh
    return (
        gradient_energy(mesh, u, spec.p),
        _weighted(mesh, spec.k, u, spec.q + 1),
        _weighted(mesh, spec.h, u, spec.sigma + 1),
    )


def energy_value(spec, u, sign):
    grad, kint, hint = energy_terms(spec, u)
    return grad / spec.p - spec.lam / (spec.q + 1) * kint - sign * hint / (spec.sigma + 1)


def energy_E(u, spec):
    """(1/p)∫|∇u|^p − λ/(q+1)∫k|u|^{q+1} − 1/(σ+1)∫h|u|^{σ+1}."""
    return energy_value(spec, u.values, +1)


def energy_F(u, spec):
    """(1/p)∫|∇u|^p − λ/(q+1)∫k|u|^{q+1} + 1/(σ+1)∫h|u|^{σ+1}."""
    return energy_value(spec, u.values, -1)


def _pattern(mesh):
    nloc = mesh.cells.shape[1]
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    return rows, cols


def stiffness_part(mesh, u, p, eps):
    """Jacobian of ``plap_vector`` with the regularized coefficient."""
    g = mesh.gradients(u)
    a, s = _flux_coefficient(g, p, eps)
    B = mesh.basis_grads
    K = a[:, None, None] * np.einsum("eid,ejd->eij", B, B)
    if p != 2.0:
        b = np.zeros_like(s)
        nz = s > 0
        b[nz] = s[nz] ** ((p - 4.0) / 2.0)
        gB = np.einsum("eid,ed->ei", B, g)
        K = K + (p - 2.0) * b[:, None, None] * gB[:, :, None] * gB[:, None, :]
    K *= mesh.measures[:, None, None]
    rows, cols = _pattern(mesh)
    n = mesh.num_nodes
    return sp.csr_matrix((K.ravel(), (rows, cols)), shape=(n, n))


def mass_weighted(mesh, c_qp):
    """Matrix of ∫ c φ_i φ_j for a coefficient given at the quadrature points."""
    P = mesh.qp_bary  # (Q, d+1)
    w = mesh.measures[:, None] * mesh.qp_weights[None, :] * c_qp  # (E, Q)
    M = np.einsum("eq,qi,qj->eij", w, P, P)
    rows, cols = _pattern(mesh)
    n = mesh.num_nodes
    return sp.csr_matrix((M.ravel(), (rows, cols)), shape=(n, n))


def source_derivative_qp(spec, uq, floor):
    """d/du of λ k u^q ± h u^σ at quadrature points; u^{q-1} uses max(u, floor)."""
    mesh = spec.mesh
    kq = mesh.to_qp(spec.k.values)
    hq = mesh.to_qp(spec.h.values)
    uc = np.maximum(uq, floor)
    return spec.lam * spec.q * kq * uc ** (spec.q - 1.0) + spec.sign * spec.sigma * hq * np.maximum(uq, 0.0) ** (
        spec.sigma - 1.0
    )


def concave_floor(u):
    return max(1e-10 * float(np.max(np.abs(u))), 1e-300)


def jacobian_matrix(spec, u, eps):
    """Full-node Jacobian of ``residual_vector`` (regularized operator, clamped u^{q-1})."""
    mesh = spec.mesh
    uq = np.maximum(mesh.to_qp(u), 0.0)
    dF = source_derivative_qp(spec, uq, concave_floor(u))
    return stiffness_part(mesh, u, spec.p, eps) - mass_weighted(mesh, dF)


def jacobian(u, spec, opts=None):
    """Sparse symmetric Jacobian of the weak residual at ``u`` (all nodes)."""
    opts = opts or SolverOptions()
    return jacobian_matrix(spec, u.values, opts.regularization(spec.mesh))


def residual_floor(mesh, p, u):
    """Roundoff floor of the unregularized residual for 1 < p < 2, else 0.

    Where the flux |∇u|^{p-2}∇u changes sign the gradient is resolved only to
    about machine epsilon times sup|u|/h, and the flux error is that to the
    power p-1.
    """
    if p >= 2.0:
        return 0.0
    scale = 64.0 * np.finfo(float).eps * float(np.max(np.abs(u))) / mesh.spacing
    return scale ** (p - 1.0)


def effective_tol(mesh, p, u, tol):
    return max(tol, residual_floor(mesh, p, u))


def restrict(mat, idx):
    return mat[idx][:, idx]

"""P1 meshes, nodal fields, positive weights and the quadrature behind every integral.

Two element types are supported: uniform segments on an interval and the
uniform "right triangle" split of a rectangle (each grid square cut along
its diagonal). Gradients of P1 fields are constant per element, so every
gradient integral is exact; weighted nonlinear terms use a 3-point rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IncompatibleFieldsError, InvalidMeshError, InvalidWeightError

# 3-point Gauss-Legendre on the reference segment, barycentric coordinates
_G = math.sqrt(3.0 / 5.0) / 2.0
_QP1D = np.array([[0.5 + _G, 0.5 - _G], [0.5, 0.5], [0.5 - _G, 0.5 + _G]])
_QW1D = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])

# interior 3-point rule on triangles (exact for quadratics)
_QP2D = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_QW2D = np.full(3, 1.0 / 3.0)


@dataclass(eq=False)
class Mesh:
    """Simplicial P1 mesh with Dirichlet boundary tagging.

    ``qp_bary`` holds barycentric coordinates of the quadrature points of the
    reference simplex, ``qp_weights`` sums to one (multiply by the element
    measure). ``basis_grads[e, a]`` is the gradient of the hat function of
    local vertex ``a`` on element ``e``.
    """

    dim: int
    points: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    extent: tuple
    measures: np.ndarray = field(init=False)
    basis_grads: np.ndarray = field(init=False)
    interior: np.ndarray = field(init=False)
    qp_bary: np.ndarray = field(init=False)
    qp_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        self.cells = np.asarray(self.cells, dtype=np.int64)
        self.boundary = np.unique(np.asarray(self.boundary, dtype=np.int64))
        mask = np.ones(self.num_nodes, dtype=bool)
        mask[self.boundary] = False
        self.interior = np.flatnonzero(mask)

        verts = self.points[self.cells]  # (E, d+1, d)
        edges = verts[:, 1:, :] - verts[:, :1, :]  # (E, d, d)
        if self.dim == 1:
            det = edges[:, 0, 0]
        else:
            det = np.linalg.det(edges)
        self.measures = np.abs(det) / math.factorial(self.dim)
        if np.any(self.measures <= 0.0):
            raise InvalidMeshError("mesh has degenerate elements")
        # rows of inv(edges)^T are the gradients of barycentric coords 1..d
        inv_t = np.transpose(np.linalg.inv(edges), (0, 2, 1))
        g = np.empty((self.num_cells, self.dim + 1, self.dim))
        g[:, 1:, :] = inv_t
        g[:, 0, :] = -inv_t.sum(axis=1)
        self.basis_grads = g

        if self.dim == 1:
            self.qp_bary, self.qp_weights = _QP1D, _QW1D
        else:
            self.qp_bary, self.qp_weights = _QP2D, _QW2D

    @property
    def num_nodes(self):
        return self.points.shape[0]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    @property
    def diameter(self):
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    @property
    def spacing(self):
        """Shortest element edge."""
        verts = self.points[self.cells]
        d = verts[:, :, None, :] - verts[:, None, :, :]
        lengths = np.linalg.norm(d, axis=-1)
        return float(lengths[lengths > 0].min())

    def qp_coords(self):
        """Physical coordinates of all quadrature points, shape (E, Q, d)."""
        return np.einsum("qa,ead->eqd", self.qp_bary, self.points[self.cells])

    def to_qp(self, values):
        """Interpolate nodal values to quadrature points, shape (E, Q)."""
        return np.asarray(values, dtype=float)[self.cells] @ self.qp_bary.T

    def gradients(self, values):
        """Elementwise-constant gradient of the P1 interpolant, shape (E, d)."""
        return np.einsum("ead,ea->ed", self.basis_grads, np.asarray(values, dtype=float)[self.cells])

    def assemble_qp(self, qp_values):
        """Vector of ∫ f φ_i over all nodes for f given at the quadrature points."""
        wq = self.measures[:, None] * self.qp_weights[None, :] * qp_values  # (E, Q)
        local = wq @ self.qp_bary  # (E, d+1)
        return np.bincount(self.cells.ravel(), weights=local.ravel(), minlength=self.num_nodes)

    def integrate_qp(self, qp_values):
        return float(np.sum(self.measures[:, None] * self.qp_weights[None, :] * qp_values))

    def __repr__(self):
        return f"Mesh(dim={self.dim}, nodes={self.num_nodes}, cells={self.num_cells}, extent={self.extent})"

    def same_as(self, other):
        return self is other or (
            self.dim == other.dim
            and self.points.shape == other.points.shape
            and self.cells.shape == other.cells.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.cells, other.cells)
        )


def build_mesh(dim, n, extent=None):
    """Uniform mesh: ``n`` segments on ``extent=(a, b)`` in 1-D, or an ``n x n``
    grid of squares on ``extent=((x0, x1), (y0, y1))`` split into ``2n^2`` triangles."""
    n = int(n)
    if n < 2:
        raise InvalidMeshError(f"resolution n must be >= 2, got {n}")
    if dim == 1:
        a, b = (0.0, 1.0) if extent is None else map(float, extent)
        if not b > a:
            raise InvalidMeshError(f"interval ({a}, {b}) has non-positive length")
        x = np.linspace(a, b, n + 1)
        cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        return Mesh(1, x[:, None], cells, [0, n], ((a, b),))
    if dim == 2:
        ext = ((0.0, 1.0), (0.0, 1.0)) if extent is None else extent
        (x0, x1), (y0, y1) = [tuple(map(float, e)) for e in ext]
        if not (x1 > x0 and y1 > y0):
            raise InvalidMeshError(f"rectangle {ext} has non-positive extent")
        xs = np.linspace(x0, x1, n + 1)
        ys = np.linspace(y0, y1, n + 1)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i]: row j (y), col i (x)
        sw = idx[:-1, :-1].ravel()
        se = idx[:-1, 1:].ravel()
        nw = idx[1:, :-1].ravel()
        ne = idx[1:, 1:].ravel()
        cells = np.vstack([np.column_stack([sw, se, ne]), np.column_stack([sw, ne, nw])])
        on_edge = np.zeros_like(idx, dtype=bool)
        on_edge[0, :] = on_edge[-1, :] = on_edge[:, 0] = on_edge[:, -1] = True
        return Mesh(2, pts, cells, idx[on_edge], ((x0, x1), (y0, y1)))
    raise InvalidMeshError(f"dimension must be 1 or 2, got {dim}")


@dataclass(eq=False)
class GridFunction:
    """Nodal values of a P1 field on ``mesh``."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).copy()
        if self.values.shape != (self.mesh.num_nodes,):
            raise IncompatibleFieldsError(
                f"expected {self.mesh.num_nodes} nodal values, got shape {self.values.shape}"
            )

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.num_nodes))

    @classmethod
    def from_function(cls, mesh, fn):
        return cls(mesh, fn(*mesh.points.T))

    def __repr__(self):
        return f"GridFunction(nodes={self.values.size}, sup={sup_norm(self):.6g})"

    def is_dirichlet_zero(self):
        return bool(np.all(self.values[self.mesh.boundary] == 0.0))

    def sup_norm(self):
        return sup_norm(self)

    def with_values(self, values):
        return GridFunction(self.mesh, values)

    def __add__(self, other):
        _check_same(self.mesh, other.mesh)
        return GridFunction(self.mesh, self.values + other.values)

    def __sub__(self, other):
        _check_same(self.mesh, other.mesh)
        return GridFunction(self.mesh, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.mesh, self.values * float(c))

    __rmul__ = __mul__


def _check_same(a, b):
    if not a.same_as(b):
        raise IncompatibleFieldsError("fields live on different meshes")


@dataclass(eq=False)
class WeightField:
    """Strictly positive bounded weight sampled at the nodes."""

    mesh: Mesh
    values: np.ndarray
    kind: str = "nodal"
    params: tuple = ()
    inf: float = field(init=False)
    sup: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 0:
            v = np.full(self.mesh.num_nodes, float(v))
        if v.shape != (self.mesh.num_nodes,):
            raise IncompatibleFieldsError(
                f"weight needs {self.mesh.num_nodes} nodal samples, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidWeightError("weight samples must be finite")
        if np.any(v <= 0.0):
            raise InvalidWeightError(f"weight must be strictly positive (min sample {v.min():g})")
        self.values = v
        self.inf = float(v.min())
        self.sup = float(v.max())

    @classmethod
    def constant(cls, mesh, c=1.0):
        return cls(mesh, np.full(mesh.num_nodes, float(c)), "const", (float(c),))

    @classmethod
    def sine(cls, mesh, alpha):
        """1 + alpha sin(pi x), |alpha| < 1."""
        if not abs(alpha) < 1.0:
            raise InvalidWeightError(f"sine weight needs |alpha| < 1, got {alpha}")
        x = mesh.points[:, 0]
        return cls(mesh, 1.0 + alpha * np.sin(np.pi * x), "sin", (float(alpha),))

    @classmethod
    def affine(cls, mesh, c0, c1):
        """c0 + c1 x; positivity is checked on the samples."""
        x = mesh.points[:, 0]
        return cls(mesh, c0 + c1 * x, "affine", (float(c0), float(c1)))

    @classmethod
    def from_csv(cls, mesh, path):
        return cls(mesh, read_nodal_csv(mesh, path), "file", (str(path),))

    @classmethod
    def parse(cls, mesh, text):
        """Build from ``const:c``, ``sin:alpha``, ``affine:c0,c1``, ``file:path`` or a bare number."""
        text = str(text).strip()
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        try:
            if not arg:
                return cls.constant(mesh, float(kind))
            if kind in ("const", "constant"):
                return cls.constant(mesh, float(arg))
            if kind in ("sin", "sine"):
                return cls.sine(mesh, float(arg))
            if kind == "affine":
                c0, c1 = (float(s) for s in arg.split(","))
                return cls.affine(mesh, c0, c1)
            if kind == "file":
                return cls.from_csv(mesh, arg)
        except ValueError as exc:
            if isinstance(exc, InvalidWeightError):
                raise
            raise InvalidWeightError(f"cannot parse weight {text!r}: {exc}") from exc
        raise InvalidWeightError(f"unknown weight kind {kind!r}")

    def __repr__(self):
        return f"WeightField({self.describe()}, inf={self.inf:.6g}, sup={self.sup:.6g})"

    def scaled(self, c):
        return WeightField(self.mesh, self.values * float(c), self.kind, self.params + (("scale", float(c)),))

    def describe(self):
        if self.kind == "const":
            return f"const:{self.params[0]:g}"
        if self.kind == "sin":
            return f"sin:{self.params[0]:g}"
        if self.kind == "affine":
            return f"affine:{self.params[0]:g},{self.params[1]:g}"
        return self.kind


def integrate_weighted_power(f, w, r):
    """Quadrature value of ∫ w |f|^r (3-point rule per element)."""
    if r < 0:
        raise ValueError(f"exponent must be >= 0, got {r}")
    _check_same(f.mesh, w.mesh)
    mesh = f.mesh
    integrand = mesh.to_qp(w.values) * np.abs(mesh.to_qp(f.values)) ** r
    return mesh.integrate_qp(integrand)


def sup_norm(f):
    return float(np.max(np.abs(f.values))) if f.values.size else 0.0


def grad_eval(f):
    """Gradient of the P1 interpolant on every element (constant per element), shape (E, d)."""
    return f.mesh.gradients(f.values)


def write_nodal_csv(f, path):
    """Write ``x,u`` (1-D) or ``x,y,u`` (2-D) rows in node order."""
    with open(path, "w", newline="") as fh:
        fh.write(format_nodal_csv(f))
    return Path(path)


def format_nodal_csv(f):
    mesh = f.mesh
    header = "x,u" if mesh.dim == 1 else "x,y,u"
    lines = [header]
    for pt, val in zip(mesh.points, f.values):
        lines.append(",".join(repr(float(c)) for c in (*pt, val)))
    return "\n".join(lines) + "\n"


def read_nodal_csv(mesh, path):
    """Read nodal values; coordinates must match the mesh nodes in order."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IncompatibleFieldsError(f"{path}: empty file")
    expected = ["x", "u"] if mesh.dim == 1 else ["x", "y", "u"]
    header = [h.strip() for h in rows[0]]
    if header != expected:
        raise IncompatibleFieldsError(f"{path}: header {header} != {expected}")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    if data.shape != (mesh.num_nodes, mesh.dim + 1):
        raise IncompatibleFieldsError(f"{path}: {data.shape[0]} rows for {mesh.num_nodes} nodes")
    if not np.allclose(data[:, : mesh.dim], mesh.points, rtol=0.0, atol=1e-12):
        raise IncompatibleFieldsError(f"{path}: node coordinates do not match the mesh")
    return data[:, -1]

"""P1 Lagrange finite elements on the structured simplex meshes.

Sign convention: the Poisson problems are written as ``Laplace(u) = f``.
Integrating by parts against a test function v gives

    int grad(u) . grad(v) = -int f v + int_{boundary} (du/dn) v

so the stiffness matrix K is SPD and the load is ``-f``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import AXES, Mesh, locate_points
from .sparse import CooPattern, SparseMatrix, cg_solve, ilu0_factor, STATIONARY_TOL


class SingularGeometryError(ValueError):
    pass


class BoundaryError(ValueError):
    pass


# --------------------------------------------------------------------------
# boundary conditions

@dataclass(frozen=True)
class Dirichlet:
    value: Callable | float = 0.0


@dataclass(frozen=True)
class Neumann:
    flux: Callable | float = 0.0     # outward normal derivative du/dn


@dataclass(frozen=True)
class Periodic:
    pass


def _eval(fn, pts):
    if callable(fn):
        return np.asarray(fn(pts), dtype=float).reshape(len(pts))
    return np.full(len(pts), float(fn))


def periodic_axes(bcs: dict | None) -> tuple:
    if not bcs:
        return ()
    axes = []
    for k, ax in enumerate(AXES):
        lo, hi = bcs.get(f"{ax}0"), bcs.get(f"{ax}1")
        if isinstance(lo, Periodic) or isinstance(hi, Periodic):
            if not (isinstance(lo, Periodic) and isinstance(hi, Periodic)):
                raise BoundaryError(f"periodic condition on axis {ax} needs both faces")
            axes.append(k)
    return tuple(axes)


# --------------------------------------------------------------------------
# quadrature in barycentric coordinates, order 2 on every simplex

def _quadrature(d: int):
    if d == 0:
        return np.array([[1.0]]), np.array([1.0])
    if d == 1:
        g = 0.5 / math.sqrt(3.0)
        return np.array([[0.5 + g, 0.5 - g], [0.5 - g, 0.5 + g]]), np.array([0.5, 0.5])
    if d == 2:
        a, b = 2.0 / 3.0, 1.0 / 6.0
        return np.array([[a, b, b], [b, a, b], [b, b, a]]), np.full(3, 1.0 / 3.0)
    a, b = 0.5854101966249685, 0.1381966011250105
    lam = np.full((4, 4), b)
    np.fill_diagonal(lam, a)
    return lam, np.full(4, 0.25)


def _triple_tensor(d: int) -> np.ndarray:
    """c[i,j,k] with int(l_i l_j l_k) = vol * d! * c / (d+3)!."""
    m = d + 1
    c = np.empty((m, m, m))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                mult = np.bincount([i, j, k], minlength=m)
                c[i, j, k] = np.prod([math.factorial(v) for v in mult])
    return c


# --------------------------------------------------------------------------
# single-cell element matrices

def _cell_geometry(verts: np.ndarray):
    """Volumes and barycentric gradients for simplices (C, d+1, d)."""
    d = verts.shape[-1]
    edges = verts[:, 1:, :] - verts[:, :1, :]
    det = np.linalg.det(edges)
    vol = np.abs(det) / math.factorial(d)
    scale = np.max(np.abs(edges), axis=(1, 2)) ** d
    bad = np.flatnonzero(vol <= 1e-14 * scale)
    if bad.size:
        raise SingularGeometryError(f"{bad.size} degenerate cell(s), first index {bad[0]}")
    g = np.transpose(np.linalg.inv(edges), (0, 2, 1))      # rows: grad l_1..l_d
    grads = np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)
    return vol, grads


def element_stiffness(mesh: Mesh, cell: int) -> np.ndarray:
    vol, grads = _cell_geometry(mesh.nodes[mesh.cells[[cell]]])
    return vol[0] * grads[0] @ grads[0].T


def element_mass(mesh: Mesh, cell: int) -> np.ndarray:
    vol, _ = _cell_geometry(mesh.nodes[mesh.cells[[cell]]])
    m = mesh.dim + 1
    return vol[0] * (np.ones((m, m)) + np.eye(m)) / ((m) * (m + 1))


# --------------------------------------------------------------------------
# function space

class P1Space:
    """Geometry, DOF numbering and a fixed sparsity pattern for one mesh.

    Periodic axes are handled by identifying nodes on the upper face with
    their partners on the lower face (``dof[node]`` gives the merged index).
    """

    def __init__(self, mesh: Mesh, periodic: tuple = ()):
        self.mesh = mesh
        self.periodic = tuple(periodic)
        d = mesh.dim
        self.vol, self.grads = _cell_geometry(mesh.nodes[mesh.cells])

        master = np.arange(mesh.n_nodes)
        if self.periodic:
            idx = np.rint((mesh.nodes - mesh.lower) / mesh.spacing).astype(np.int64)
            for k in self.periodic:
                idx[idx[:, k] == mesh.shape[k], k] = 0
            master = mesh.lattice_index(idx)
        uniq, self.dof = np.unique(master, return_inverse=True)
        self.dof_nodes = uniq                      # representative node of each DOF
        self.n_dofs = uniq.size

        cd = self.dof[mesh.cells]                  # (C, d+1)
        m = d + 1
        rows = np.repeat(cd, m, axis=1).ravel()
        cols = np.tile(cd, (1, m)).ravel()
        self.pattern = CooPattern(rows, cols, self.n_dofs)
        self._ones = np.ones((m, m)) + np.eye(m)
        self._triple = _triple_tensor(d)
        self._stiff = None
        self._mass = None

    # nodal <-> dof vectors
    def to_nodes(self, u_dof) -> np.ndarray:
        return np.asarray(u_dof)[..., self.dof]

    def to_dofs(self, u_nodes) -> np.ndarray:
        return np.asarray(u_nodes)[..., self.dof_nodes]

    def local_stiffness(self) -> np.ndarray:
        return self.vol[:, None, None] * self.grads @ np.transpose(self.grads, (0, 2, 1))

    def local_mass(self) -> np.ndarray:
        m = self.mesh.dim + 1
        return self.vol[:, None, None] * self._ones / (m * (m + 1))

    def stiffness(self) -> SparseMatrix:
        if self._stiff is None:
            self._stiff = self.pattern.assemble(self.local_stiffness())
        return self._stiff

    def mass(self) -> SparseMatrix:
        if self._mass is None:
            self._mass = self.pattern.assemble(self.local_mass())
        return self._mass

    def weighted_mass(self, w_dofs) -> SparseMatrix:
        """Matrix of int w phi_i phi_j with w a P1 function (DOF values)."""
        d = self.mesh.dim
        wc = np.asarray(w_dofs, dtype=float)[self.dof[self.mesh.cells]]      # (C, d+1)
        coef = math.factorial(d) / math.factorial(d + 3)
        local = np.einsum("ijk,ck->cij", self._triple, wc) * (self.vol * coef)[:, None, None]
        return self.pattern.assemble(local)

    def load(self, f) -> np.ndarray:
        """Vector of int f phi_i, f callable on (m, dim) points (order-2 rule)."""
        lam, w = _quadrature(self.mesh.dim)
        verts = self.mesh.nodes[self.mesh.cells]                    # (C, d+1, d)
        pts = np.einsum("qi,cid->cqd", lam, verts)
        vals = _eval(f, pts.reshape(-1, self.mesh.dim)).reshape(pts.shape[:2])
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite load values")
        local = self.vol[:, None] * np.einsum("cq,q,qi->ci", vals, w, lam)
        return np.bincount(self.dof[self.mesh.cells].ravel(), weights=local.ravel(),
                           minlength=self.n_dofs)

    def boundary_facets(self, face: str) -> np.ndarray:
        mesh = self.mesh
        on = np.zeros(mesh.n_nodes, dtype=bool)
        on[mesh.boundary[face]] = True
        inside = on[mesh.cells]
        facets = []
        for k in range(mesh.dim + 1):
            keep = [i for i in range(mesh.dim + 1) if i != k]
            hit = np.all(inside[:, keep], axis=1)
            facets.append(mesh.cells[hit][:, keep])
        return np.concatenate(facets)

    def boundary_load(self, face: str, g) -> np.ndarray:
        """Vector of int_face g phi_i over one box face."""
        facets = self.boundary_facets(face)
        d = self.mesh.dim
        verts = self.mesh.nodes[facets]                              # (F, d, d)
        if d == 1:
            meas = np.ones(len(facets))
        else:
            e = verts[:, 1:, :] - verts[:, :1, :]
            gram = e @ np.transpose(e, (0, 2, 1))
            meas = np.sqrt(np.abs(np.linalg.det(gram))) / math.factorial(d - 1)
        lam, w = _quadrature(d - 1)
        pts = np.einsum("qi,fid->fqd", lam, verts)
        vals = _eval(g, pts.reshape(-1, d)).reshape(pts.shape[:2])
        local = meas[:, None] * np.einsum("fq,q,qi->fi", vals, w, lam)
        return np.bincount(self.dof[facets].ravel(), weights=local.ravel(), minlength=self.n_dofs)


# --------------------------------------------------------------------------
# assembly and solves

def apply_dirichlet(a: SparseMatrix, rhs: np.ndarray, dofs: np.ndarray, values: np.ndarray):
    """Symmetric elimination: move known columns to the rhs, identity rows."""
    g = np.zeros(a.n)
    g[dofs] = values
    fixed = np.zeros(a.n, dtype=bool)
    fixed[dofs] = True
    rows = a.row_ids()
    col_fixed = fixed[a.indices]
    rhs = rhs - np.bincount(rows, weights=a.data * g[a.indices] * col_fixed, minlength=a.n)
    data = a.data.copy()
    data[col_fixed | fixed[rows]] = 0.0
    data[fixed[rows] & (rows == a.indices)] = 1.0
    rhs[dofs] = values
    return a.with_data(data), rhs


def assemble(mesh_or_space, stiffness: float = 1.0, mass: float = 0.0, load=None, bcs=None):
    """Global system for ``stiffness*K + mass*M`` with load int(load * phi).

    ``load`` is a callable on points or a vector of nodal values (then it is
    treated as a P1 function and integrated exactly).  ``bcs`` maps face
    names to Dirichlet / Neumann / Periodic; untagged faces are homogeneous
    Neumann.  Returns ``(matrix, rhs)`` in DOF numbering.
    """
    bcs = bcs or {}
    if isinstance(mesh_or_space, P1Space):
        space = mesh_or_space
        if space.periodic != periodic_axes(bcs):
            raise BoundaryError("space periodicity does not match boundary spec")
    else:
        space = P1Space(mesh_or_space, periodic_axes(bcs))
    mesh = space.mesh

    local = 0.0
    if stiffness:
        local = local + stiffness * space.local_stiffness()
    if mass:
        local = local + mass * space.local_mass()
    a = space.pattern.assemble(np.broadcast_to(local, (mesh.n_cells, mesh.dim + 1, mesh.dim + 1)))

    if load is None:
        rhs = np.zeros(space.n_dofs)
    elif callable(load):
        rhs = space.load(load)
    else:
        nodal = np.asarray(load, dtype=float)
        if not np.all(np.isfinite(nodal)):
            raise ValueError("non-finite nodal load")
        rhs = space.mass() @ space.to_dofs(nodal)

    fixed, values = [], []
    for face, bc in bcs.items():
        if face not in mesh.boundary:
            raise BoundaryError(f"unknown face {face!r} for a {mesh.dim}D mesh")
        if isinstance(bc, Neumann):
            if callable(bc.flux) or bc.flux != 0.0:
                rhs = rhs + space.boundary_load(face, bc.flux)
        elif isinstance(bc, Dirichlet):
            nodes = mesh.boundary[face]
            fixed.append(space.dof[nodes])
            values.append(_eval(bc.value, mesh.nodes[nodes]))
    if fixed:
        dofs = np.concatenate(fixed)
        vals = np.concatenate(values)
        # corners shared by two Dirichlet faces: last writer wins, values agree for our problems
        dofs, first = np.unique(dofs[::-1], return_index=True)
        a, rhs = apply_dirichlet(a, rhs, dofs, vals[::-1][first])
    return a, rhs


@dataclass(frozen=True, eq=False)
class FemField:
    mesh: Mesh
    coefficients: np.ndarray      # nodal values

    def __post_init__(self):
        if len(self.coefficients) != self.mesh.n_nodes:
            raise ValueError("one coefficient per mesh node required")

    def to_json(self) -> str:
        return json.dumps({"mesh_id": self.mesh.mesh_id,
                           "coefficients": [float(c) for c in self.coefficients]})


def interpolate(mesh: Mesh, values: np.ndarray, points) -> np.ndarray:
    """P1 interpolation of nodal values (..., n_nodes) at points."""
    cells, bary = locate_points(mesh, points)
    vert = mesh.cells[cells]
    return np.einsum("...pk,pk->...p", np.asarray(values)[..., vert], bary)


def evaluate_field(field: FemField, points):
    t0 = time.perf_counter()
    vals = interpolate(field.mesh, field.coefficients, points)
    return vals, time.perf_counter() - t0


def solve_stationary(problem, mesh: Mesh, tol: float = STATIONARY_TOL):
    """Assemble and solve one Poisson problem; timing covers assembly + solve."""
    if problem.time_dependent:
        raise ValueError(f"{problem.id} is an evolution problem")
    t0 = time.perf_counter()
    space = P1Space(mesh)
    a, rhs = assemble(space, stiffness=1.0, load=lambda p: -problem.source(p),
                      bcs=problem.fem_bcs)
    x, _ = cg_solve(a, rhs, ilu0_factor(a), tol=tol)
    elapsed = time.perf_counter() - t0
    return FemField(mesh, space.to_nodes(x)), elapsed

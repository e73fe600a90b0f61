"""Structured simplex meshes on axis-aligned boxes.

Nodes live on a uniform lattice and are numbered lexicographically with x
varying fastest, then y, then z.  Squares are split along the lower-left to
upper-right diagonal; cubes use the 6-tetrahedron Kuhn (Freudenthal) split,
so every tetrahedron shares the main diagonal of its cube.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

AXES = "xyz"


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    nodes: np.ndarray          # (n_nodes, dim)
    cells: np.ndarray          # (n_cells, dim + 1)
    boundary: dict             # face name ("x0", "x1", ...) -> node indices
    box: tuple                 # (lower corner, upper corner)
    shape: tuple = field(default=())   # cells per axis

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.box[0], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.box[1], dtype=float)

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / np.asarray(self.shape)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate(list(self.boundary.values())))

    @property
    def mesh_id(self) -> str:
        kind = {1: "interval", 2: "triangle", 3: "tet"}[self.dim]
        lo = ",".join(f"{v:g}" for v in self.lower)
        hi = ",".join(f"{v:g}" for v in self.upper)
        return f"{kind}-{self.shape[0]}-[{lo}]-[{hi}]"

    def cell_volumes(self) -> np.ndarray:
        return simplex_volumes(self.nodes[self.cells])

    def lattice_index(self, multi: np.ndarray) -> np.ndarray:
        """Flat node index for integer lattice coordinates (..., dim)."""
        strides = np.cumprod([1] + [s + 1 for s in self.shape[:-1]])
        return np.asarray(multi) @ strides

    def to_json(self) -> str:
        return json.dumps({
            "mesh_id": self.mesh_id,
            "dim": self.dim,
            "nodes": self.nodes.tolist(),
            "cells": self.cells.tolist(),
            "boundary": {k: v.tolist() for k, v in self.boundary.items()},
        })


def simplex_volumes(verts: np.ndarray) -> np.ndarray:
    """Unsigned volumes of simplices given vertex coords (n, d+1, d)."""
    return np.abs(signed_volumes(verts))


def signed_volumes(verts: np.ndarray) -> np.ndarray:
    d = verts.shape[-1]
    edges = verts[:, 1:, :] - verts[:, :1, :]
    return np.linalg.det(edges) / math.factorial(d)


def _check_box(box, dim):
    lo = np.atleast_1d(np.asarray(box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    if lo.shape != (dim,) or hi.shape != (dim,):
        raise ValueError(f"box corners must have {dim} coordinates")
    if np.any(lo >= hi):
        raise ValueError(f"degenerate box {box}")
    return lo, hi


def _lattice(n: int, lo: np.ndarray, hi: np.ndarray):
    dim = lo.size
    axes = [np.linspace(lo[k], hi[k], n + 1) for k in range(dim)]
    # x fastest: meshgrid with ij ordering on reversed axes
    grids = np.meshgrid(*axes[::-1], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids[::-1]], axis=1)
    idx = np.stack(np.meshgrid(*[np.arange(n + 1)] * dim, indexing="ij")[::-1], axis=-1)
    idx = idx.reshape(-1, dim)
    boundary = {}
    for k in range(dim):
        boundary[f"{AXES[k]}0"] = np.flatnonzero(idx[:, k] == 0)
        boundary[f"{AXES[k]}1"] = np.flatnonzero(idx[:, k] == n)
    return nodes, boundary


def _box_tuple(lo, hi):
    return (tuple(float(v) for v in lo), tuple(float(v) for v in hi))


def build_interval_mesh(n: int, box=(0.0, 1.0)) -> Mesh:
    if n < 1:
        raise ValueError("interval mesh needs n >= 1 cells")
    lo, hi = _check_box(box, 1)
    nodes, boundary = _lattice(n, lo, hi)
    cells = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    return Mesh(1, nodes, cells, boundary, _box_tuple(lo, hi), (n,))


def build_triangle_mesh(n: int, box=((0.0, 0.0), (1.0, 1.0))) -> Mesh:
    if n < 1:
        raise ValueError("triangle mesh needs n >= 1 squares per side")
    lo, hi = _check_box(box, 2)
    nodes, boundary = _lattice(n, lo, hi)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00 = i + (n + 1) * j
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(2, nodes, cells, boundary, _box_tuple(lo, hi), (n, n))


# Kuhn simplices: one per axis permutation, walking 000 -> 111 along unit steps
_KUHN_PERMS = list(itertools.permutations(range(3)))


def _kuhn_templates():
    temps, swapped = [], []
    for perm in _KUHN_PERMS:
        corner = np.zeros(3, dtype=int)
        verts = [corner.copy()]
        for ax in perm:
            corner[ax] = 1
            verts.append(corner.copy())
        verts = np.array(verts)
        flip = signed_volumes(verts[None].astype(float))[0] < 0
        if flip:
            verts[[2, 3]] = verts[[3, 2]]
        temps.append(verts)
        swapped.append(flip)
    return np.array(temps), np.array(swapped)


# (6, 4, 3) unit-cube vertex offsets; flag marks templates whose last two
# vertices were swapped to get positive orientation
_KUHN, _KUHN_SWAPPED = _kuhn_templates()


def build_tet_mesh(n: int, box=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))) -> Mesh:
    if n < 1:
        raise ValueError("tetrahedral mesh needs n >= 1 cubes per side")
    lo, hi = _check_box(box, 3)
    nodes, boundary = _lattice(n, lo, hi)
    k, j, i = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    base = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)       # (n^3, 3)
    corners = base[:, None, None, :] + _KUHN[None]                    # (n^3, 6, 4, 3)
    strides = np.array([1, n + 1, (n + 1) ** 2])
    cells = (corners @ strides).reshape(-1, 4)
    return Mesh(3, nodes, cells, boundary, _box_tuple(lo, hi), (n, n, n))


def build_mesh(dim: int, n: int, box) -> Mesh:
    return {1: build_interval_mesh, 2: build_triangle_mesh, 3: build_tet_mesh}[dim](n, box)


def locate_points(mesh: Mesh, points, tol: float = 1e-12):
    """Vectorised O(1) lattice location.

    Returns ``(cells, bary)`` with ``cells`` of shape (m,) and ``bary`` of
    shape (m, dim + 1), ordered like the vertices of each located cell.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, mesh.dim)
    lo, hi = mesh.lower, mesh.upper
    span = hi - lo
    if np.any(pts < lo - tol * span) or np.any(pts > hi + tol * span):
        bad = np.flatnonzero(np.any((pts < lo - tol * span) | (pts > hi + tol * span), axis=1))
        raise OutOfDomainError(f"{bad.size} point(s) outside {mesh.box}, first {pts[bad[0]]}")
    n = np.asarray(mesh.shape)
    s = (pts - lo) / span * n
    ij = np.clip(np.floor(s).astype(np.int64), 0, n - 1)
    xi = np.clip(s - ij, 0.0, 1.0)

    if mesh.dim == 1:
        cells = ij[:, 0]
        bary = np.stack([1.0 - xi[:, 0], xi[:, 0]], axis=1)
        return cells, bary

    if mesh.dim == 2:
        square = ij[:, 0] + n[0] * ij[:, 1]
        up = xi[:, 1] > xi[:, 0]
        cells = 2 * square + up
        sx, sy = xi[:, 0], xi[:, 1]
        bary = np.where(
            up[:, None],
            np.stack([1 - sy, sx, sy - sx], axis=1),     # (v00, v11, v01)
            np.stack([1 - sx, sx - sy, sy], axis=1),     # (v00, v10, v11)
        )
        return cells, bary

    # 3D: the Kuhn simplex is picked by the descending order of local coords
    cube = ij[:, 0] + n[0] * (ij[:, 1] + n[1] * ij[:, 2])
    order = np.argsort(-xi, axis=1, kind="stable")
    perm_id = _perm_lookup()[order[:, 0], order[:, 1], order[:, 2]]
    cells = 6 * cube + perm_id
    srt = np.take_along_axis(xi, order, axis=1)
    lam = np.stack([1 - srt[:, 0], srt[:, 0] - srt[:, 1], srt[:, 1] - srt[:, 2], srt[:, 2]], axis=1)
    # templates may have swapped their last two vertices for orientation
    swapped = _KUHN_SWAPPED[perm_id]
    lam[swapped] = lam[swapped][:, [0, 1, 3, 2]]
    return cells, lam


def _perm_lookup() -> np.ndarray:
    table = np.zeros((3, 3, 3), dtype=np.int64)
    for pid, p in enumerate(_KUHN_PERMS):
        table[p] = pid
    return table


def locate_point(mesh: Mesh, point):
    """Single-point version of :func:`locate_points`."""
    cells, bary = locate_points(mesh, np.atleast_1d(np.asarray(point, dtype=float)))
    return int(cells[0]), bary[0]


def grid_points(box, counts) -> np.ndarray:
    """Tensor grid including the box faces, x fastest."""
    lo = np.atleast_1d(np.asarray(box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    counts = np.broadcast_to(np.atleast_1d(counts), lo.shape)
    axes = [np.linspace(lo[k], hi[k], counts[k]) for k in range(lo.size)]
    grids = np.meshgrid(*axes[::-1], indexing="ij")
    return np.stack([g.ravel() for g in grids[::-1]], axis=1)

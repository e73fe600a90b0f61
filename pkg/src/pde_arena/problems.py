"""The six benchmark problems: data, manifest lookup and PINN loss functionals.

Network inputs are ``(x[, y[, z]])`` for the Poisson problems and
``(t, x[, y])`` for the evolution problems.  Losses are written with generic
array operators so they run on plain arrays (evaluation) and on
:class:`~pde_arena.autodiff.Var` parameters (training).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from . import autodiff as ad
from .fem import Dirichlet, Neumann, Periodic
from .mesh import grid_points
from .network import MlpParams, forward, jet2, predict
from .sampling import SampleBatch, lhs_sample

PROBLEM_IDS = ("poisson1d", "poisson2d", "poisson3d", "allen_cahn1d", "schrodinger1d", "schrodinger2d")
SCALES = ("desk", "paper")
AXES = "xyz"


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One model problem.

    ``box`` is the spatial domain.  ``T`` is the time horizon (0 for the
    stationary problems).  ``counts`` holds ``(N_f, N_g, N_h)``.
    """

    id: str
    dim: int
    box: tuple
    T: float = 0.0
    n_out: int = 1
    coeffs: dict = field(default_factory=dict)
    counts: tuple = (0, 0, 0)
    weights: dict = field(default_factory=dict)
    source: object = None
    exact: object = None
    initial: object = None
    fem_bcs: dict = field(default_factory=dict)
    ic_imag_term: bool = True

    @property
    def time_dependent(self) -> bool:
        return self.T > 0

    @property
    def n_in(self) -> int:
        return self.dim + (1 if self.time_dependent else 0)

    @property
    def input_box(self) -> tuple:
        lo, hi = (np.asarray(b, dtype=float) for b in self.box)
        if self.time_dependent:
            lo, hi = np.concatenate([[0.0], lo]), np.concatenate([[self.T], hi])
        return lo, hi

    @property
    def space_offset(self) -> int:
        """Input column of the first spatial coordinate."""
        return 1 if self.time_dependent else 0


# ---------------------------------------------------------------------------
# problem data

def _col(p, k):
    return np.asarray(p, dtype=float).reshape(len(p), -1)[:, k]


def _sech(x):
    return 1.0 / np.cosh(x)


def _poisson1d_source(p):
    x = _col(p, 0)
    return (4 * x**3 - 6 * x) * np.exp(-x * x)


def _poisson1d_exact(p):
    x = _col(p, 0)
    return x * np.exp(-x * x)


def _poisson2d_source(p):
    x, y = _col(p, 0), _col(p, 1)
    return 2 * (x**4 * (3 * y - 2) + x**3 * (4 - 6 * y) + x**2 * (6 * y**3 - 12 * y**2 + 9 * y - 2)
                - 6 * x * (y - 1) ** 2 * y + (y - 1) ** 2 * y)


def _poisson2d_exact(p):
    x, y = _col(p, 0), _col(p, 1)
    return x**2 * (x - 1) ** 2 * y * (y - 1) ** 2


def _poisson3d_exact(p):
    p = np.asarray(p, dtype=float).reshape(len(p), 3)
    return np.prod(np.sin(np.pi * p), axis=1)


def _poisson3d_source(p):
    return -3 * np.pi**2 * _poisson3d_exact(p)


def allen_cahn_initial(x):
    x = _col(x, 0)
    return 0.5 * (0.5 * np.sin(2 * np.pi * x) + 0.5 * np.sin(16 * np.pi * x)) + 0.5


def schrodinger1d_initial(x):
    """Real and imaginary parts, shape (n, 2)."""
    x = _col(x, 0)
    return np.stack([2.0 * _sech(x), np.zeros_like(x)], axis=1)


def schrodinger2d_initial(p):
    x, y = _col(p, 0), _col(p, 1)
    re = _sech(x) + 0.5 * _sech(y - 2) + 0.5 * _sech(y + 2)
    return np.stack([re, np.zeros_like(re)], axis=1)


def _periodic(dim):
    return {f"{AXES[k]}{s}": Periodic() for k in range(dim) for s in "01"}


def _build(pid: str, counts: tuple, **over) -> ProblemSpec:
    if pid == "poisson1d":
        spec = ProblemSpec(pid, 1, ((0.0,), (1.0,)), source=_poisson1d_source, exact=_poisson1d_exact,
                           fem_bcs={"x0": Dirichlet(0.0), "x1": Dirichlet(float(np.exp(-1.0)))})
    elif pid == "poisson2d":
        spec = ProblemSpec(pid, 2, ((0.0, 0.0), (1.0, 1.0)), source=_poisson2d_source,
                           exact=_poisson2d_exact,
                           fem_bcs={"x0": Neumann(0.0), "x1": Neumann(0.0), "y0": Dirichlet(0.0),
                                    "y1": Neumann(0.0)})
    elif pid == "poisson3d":
        spec = ProblemSpec(pid, 3, ((0.0,) * 3, (1.0,) * 3), source=_poisson3d_source,
                           exact=_poisson3d_exact,
                           fem_bcs={f"{a}{s}": Dirichlet(0.0) for a in AXES for s in "01"})
    elif pid == "allen_cahn1d":
        spec = ProblemSpec(pid, 1, ((0.0,), (1.0,)), T=0.05, coeffs={"eps": 0.01},
                           weights={"initial": 1000.0}, initial=allen_cahn_initial,
                           fem_bcs=_periodic(1))
    elif pid == "schrodinger1d":
        spec = ProblemSpec(pid, 1, ((-5.0,), (5.0,)), T=np.pi / 2, n_out=2, coeffs={"diffusion": 0.5},
                           initial=schrodinger1d_initial, fem_bcs=_periodic(1))
    elif pid == "schrodinger2d":
        spec = ProblemSpec(pid, 2, ((-5.0, -5.0), (5.0, 5.0)), T=np.pi / 2, n_out=2,
                           coeffs={"diffusion": 0.5}, initial=schrodinger2d_initial,
                           fem_bcs=_periodic(2), ic_imag_term=False)
    else:
        raise KeyError(f"unknown problem {pid!r}; choose from {', '.join(PROBLEM_IDS)}")
    fields = {**spec.__dict__, "counts": tuple(int(c) for c in counts)}
    coeffs = dict(fields["coeffs"])
    for key in list(over):
        if key in coeffs:
            coeffs[key] = float(over.pop(key))
    fields["coeffs"] = coeffs
    fields.update(over)
    return ProblemSpec(**fields)


# ---------------------------------------------------------------------------
# manifest

@lru_cache(maxsize=None)
def _manifest_text() -> str:
    return resources.files("pde_arena").joinpath("manifest.json").read_text()


def load_manifest(path=None) -> dict:
    """The run manifest: architectures, schedules, meshes, grids, ground truths."""
    if path is None:
        return json.loads(_manifest_text())
    with open(path) as fh:
        return json.load(fh)


def _check_scale(scale: str):
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")


def get_problem(pid: str, scale: str = "desk", manifest: dict | None = None, **over) -> ProblemSpec:
    """Problem ``pid`` with collocation counts for ``scale``.

    Keyword overrides replace coefficients (``eps``, ``diffusion``) or
    spec fields (``ic_imag_term``, ``counts``).
    """
    _check_scale(scale)
    man = manifest or load_manifest()
    if pid not in man["problems"]:
        raise KeyError(f"unknown problem {pid!r}; choose from {', '.join(PROBLEM_IDS)}")
    c = man["problems"][pid]["pinn"]["counts"][scale]
    counts = over.pop("counts", (c["N_f"], c["N_g"], c["N_h"]))
    return _build(pid, counts, **over)


@dataclass(frozen=True)
class RunPlan:
    """Everything the harness needs for one problem at one scale."""

    problem: str
    scale: str
    architectures: tuple
    adam_epochs: int
    pretrain_epochs: int
    lr: float
    lbfgs_max_iter: int
    lbfgs_grad_tol: float
    meshes: tuple
    dt: float | None
    grid: tuple
    n_times: int
    ground_truth: dict
    repeats: int


def run_plan(pid: str, scale: str = "desk", manifest: dict | None = None) -> RunPlan:
    _check_scale(scale)
    man = manifest or load_manifest()
    entry = man["problems"][pid]
    sc = man["scales"][scale]
    pinn = entry["pinn"]
    archs = pinn["architectures"] if scale == "paper" else pinn["desk_architectures"]
    factor = sc["epoch_factor"]
    ev = entry["evaluation"][scale]
    gt = dict(entry["ground_truth"])
    if gt["kind"] == "fine_fem":
        gt = {"kind": "fine_fem", **gt[scale]}
    return RunPlan(
        problem=pid, scale=scale,
        architectures=tuple(tuple(a) for a in archs),
        adam_epochs=int(round(pinn["adam_epochs"] * factor)),
        pretrain_epochs=int(round(pinn["pretrain_epochs"] * factor)),
        lr=float(pinn["lr"]),
        lbfgs_max_iter=int(sc["lbfgs_max_iter"]),
        lbfgs_grad_tol=float(sc["lbfgs_grad_tol"]),
        meshes=tuple(entry["fem"]["meshes"][scale]),
        dt=entry["fem"].get("dt"),
        grid=tuple(ev["grid"]),
        n_times=int(ev.get("times", 0)),
        ground_truth=gt,
        repeats=int(sc["repeats"]),
    )


def output_times(problem: ProblemSpec, n_times: int) -> np.ndarray:
    """Evenly spaced comparison times in (0, T]."""
    return problem.T * np.arange(1, n_times + 1) / n_times


def evaluation_points(problem: ProblemSpec, grid) -> np.ndarray:
    """Spatial evaluation grid (faces included, x fastest)."""
    return grid_points(problem.box, tuple(grid))


def space_time_points(times, space) -> np.ndarray:
    """Stack ``(t, x...)`` rows, time slowest."""
    space = np.asarray(space, dtype=float).reshape(len(space), -1)
    t = np.repeat(np.asarray(times, dtype=float), len(space))
    return np.column_stack([t, np.tile(space, (len(times), 1))])


# ---------------------------------------------------------------------------
# sampling

def _boundary_faces(problem: ProblemSpec):
    """Faces carrying a boundary term, as (label, input column, value)."""
    lo, hi = problem.input_box
    faces = []
    for k in range(problem.dim):
        col = problem.space_offset + k
        faces.append((f"{AXES[k]}0", col, lo[col]))
        faces.append((f"{AXES[k]}1", col, hi[col]))
    return faces


def sample_batch(problem: ProblemSpec, rng: np.random.Generator, counts=None) -> SampleBatch:
    """Fresh collocation points by Latin hypercube sampling.

    Boundary points come from one draw of ``N_g`` points in the input box,
    projected onto every face, so opposite faces share their tangential
    coordinates (which the periodicity terms need).
    """
    n_f, n_g, n_h = counts or problem.counts
    box = problem.input_box
    interior = lhs_sample(n_f, box, rng)
    base = lhs_sample(max(n_g, 1), box, rng)
    boundary = {}
    for label, col, val in _boundary_faces(problem):
        pts = base.copy()
        pts[:, col] = val
        boundary[label] = pts
    initial = None
    if problem.time_dependent:
        initial = lhs_sample(n_h, problem.box, rng)
    return SampleBatch(interior, boundary, initial)


# ---------------------------------------------------------------------------
# residuals and losses

def _out(a, j):
    return a[:, j]


def _with_time(problem, x, t=0.0):
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    return np.column_stack([np.full(len(x), float(t)), x])


def pde_residual(problem: ProblemSpec, params: MlpParams, points):
    """Strong-form residual at interior points.

    Returns one array (m,) for scalar problems or a pair of arrays for the
    Schrödinger problems: ``(dI/dt - a*lap R - |h|^2 R, dR/dt + a*lap I + |h|^2 I)``
    with ``a`` the diffusion coefficient.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, problem.n_in)
    off = problem.space_offset
    space = tuple(range(off, off + problem.dim))
    coords = ((0,) if problem.time_dependent else ()) + space
    jet = jet2(params, pts, coords)
    lap = jet.laplacian(space)
    pid = problem.id
    if pid.startswith("poisson"):
        return _out(lap, 0) - problem.source(pts)
    if pid == "allen_cahn1d":
        eps = problem.coeffs["eps"]
        u = _out(jet.value, 0)
        ut = _out(jet.d(0), 0)
        return ut - eps * _out(lap, 0) + (2.0 / eps) * u * (1.0 - u) * (1.0 - 2.0 * u)
    a = problem.coeffs["diffusion"]
    re, im = _out(jet.value, 0), _out(jet.value, 1)
    mod2 = re * re + im * im
    r1 = _out(jet.d(0), 1) - a * _out(lap, 0) - mod2 * re
    r2 = _out(jet.d(0), 0) + a * _out(lap, 1) + mod2 * im
    return r1, r2


def _msq(r):
    return (r * r).mean()


def boundary_loss(problem: ProblemSpec, params: MlpParams, batch: SampleBatch):
    pid = problem.id
    b = batch.boundary
    if pid == "poisson1d":
        u0 = _out(forward(params, b["x0"]), 0)
        u1 = _out(forward(params, b["x1"]), 0)
        return _msq(u0) + _msq(u1 - float(np.exp(-1.0)))
    if pid == "poisson2d":
        total = _msq(_out(forward(params, b["y0"]), 0))
        for face, col in (("x0", 0), ("x1", 0), ("y1", 1)):
            total = total + _msq(_out(jet2(params, b[face], (col,)).d(col), 0))
        return total
    if pid == "poisson3d":
        total = 0.0
        for face in sorted(b):
            total = total + _msq(_out(forward(params, b[face]), 0))
        return total
    # periodic evolution problems: values, and for Schrödinger also normal derivatives
    total = 0.0
    outs = range(problem.n_out)
    for k in range(problem.dim):
        ax = AXES[k]
        lo, hi = b[f"{ax}0"], b[f"{ax}1"]
        if pid == "allen_cahn1d":
            total = total + _msq(_out(forward(params, lo), 0) - _out(forward(params, hi), 0))
            continue
        col = problem.space_offset + k
        jl, jh = jet2(params, lo, (col,)), jet2(params, hi, (col,))
        for j in outs:
            total = total + _msq(_out(jl.value, j) - _out(jh.value, j))
            total = total + _msq(_out(jl.d(col), j) - _out(jh.d(col), j))
    return total


def ic_residual(problem: ProblemSpec, params: MlpParams, x):
    """``u(0, x) - IC(x)`` per output component that carries an IC term."""
    pts = _with_time(problem, x)
    u = forward(params, pts)
    target = problem.initial(x)
    if problem.n_out == 1:
        return [_out(u, 0) - target]
    res = [_out(u, 0) - target[:, 0]]
    if problem.ic_imag_term:
        res.append(_out(u, 1) - target[:, 1])
    return res


def initial_loss(problem: ProblemSpec, params: MlpParams, batch: SampleBatch):
    if not problem.time_dependent:
        return 0.0
    total = 0.0
    for r in ic_residual(problem, params, batch.initial):
        total = total + _msq(r)
    return problem.weights.get("initial", 1.0) * total


def ic_only_loss(problem: ProblemSpec, params: MlpParams, batch: SampleBatch):
    """Weighted initial-condition term alone (Allen-Cahn pretraining)."""
    if problem.id != "allen_cahn1d":
        raise ValueError(f"initial-condition pretraining is defined for allen_cahn1d, not {problem.id}")
    return initial_loss(problem, params, batch)


def loss_terms(problem: ProblemSpec, params: MlpParams, batch: SampleBatch) -> dict:
    res = pde_residual(problem, params, batch.interior)
    if isinstance(res, tuple):
        interior = _msq(res[0]) + _msq(res[1])
    else:
        interior = _msq(res)
    terms = {"residual": interior, "boundary": boundary_loss(problem, params, batch)}
    if problem.time_dependent:
        terms["initial"] = initial_loss(problem, params, batch)
    return terms


def total_loss(problem: ProblemSpec, params: MlpParams, batch: SampleBatch):
    total = 0.0
    for term in loss_terms(problem, params, batch).values():
        total = total + term
    return total


def evaluate_pinn(params: MlpParams, points):
    """Network values at ``points``; returns ``(values, seconds)``."""
    pts = np.asarray(points, dtype=float)
    pts = pts.reshape(len(pts), -1)
    t0 = time.perf_counter()
    out = predict(params, pts)
    elapsed = time.perf_counter() - t0
    return (out[:, 0] if out.shape[1] == 1 else out), elapsed


def loss_value(problem, params, batch) -> float:
    return float(ad.value_of(total_loss(problem, params, batch)))

"""Time stepping for the Allen-Cahn and semilinear Schrödinger problems.

Two schemes per equation:

* semi-implicit Euler (benchmark path): diffusion implicit, nonlinearity
  frozen at the old level, one linear solve per step;
* implicit Euler with Newton (ground-truth path).

Both run on P1 spaces with periodic DOF identification.  The Schrödinger
field is split as ``h = R + iI`` and the pair is solved as one real block
system with GMRES + ILU(0).  Writing ``L = a K - M_q`` (``a`` the diffusion
coefficient, ``M_q`` the mass matrix weighted by the P1 interpolant of
``|h|^2``), the semi-discrete equations read ``M R' = L I`` and
``M I' = -L R``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .fem import FemField, P1Space, periodic_axes
from .mesh import Mesh
from .sparse import (TIME_STEP_TOL, ConvergenceError, SolverError, SparseMatrix, block2x2, cg_solve,
                     from_coo, gmres_solve, ilu0_factor)

NEWTON_TOL = 1e-10
NEWTON_MAX = 25


class NewtonError(SolverError):
    def __init__(self, msg, iterate=None, history=()):
        super().__init__(msg)
        self.iterate = iterate
        self.history = list(history)


class StepError(SolverError):
    def __init__(self, t: float, cause: Exception):
        super().__init__(f"time step failed at t={t:.6g}: {cause}")
        self.t = t
        self.cause = cause


@dataclass(frozen=True, eq=False)
class EvolutionState:
    """Time level ``t`` with one field (Allen-Cahn) or a (real, imag) pair."""

    t: float
    fields: tuple

    def __post_init__(self):
        meshes = {id(f.mesh) for f in self.fields}
        if len(meshes) != 1:
            raise ValueError("all fields of a state must share one mesh")

    @property
    def mesh(self) -> Mesh:
        return self.fields[0].mesh

    @property
    def values(self) -> np.ndarray:
        """Nodal values, shape (n_components, n_nodes)."""
        return np.stack([f.coefficients for f in self.fields])

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "coefficients": self.values.tolist()})


def make_state(mesh: Mesh, t: float, *nodal) -> EvolutionState:
    return EvolutionState(float(t), tuple(FemField(mesh, np.asarray(v, dtype=float)) for v in nodal))


def initial_state(problem, mesh: Mesh) -> EvolutionState:
    ic = np.asarray(problem.initial(mesh.nodes), dtype=float)
    if ic.ndim == 1:
        return make_state(mesh, 0.0, ic)
    return make_state(mesh, 0.0, ic[:, 0], ic[:, 1])


# ---------------------------------------------------------------------------
# exact cell integrals of polynomial nonlinearities (interval meshes)

class _IntervalQuadrature:
    """Gauss rule on every cell of a 1D space; exact to degree 2q-1."""

    def __init__(self, space: P1Space, q: int = 3):
        if space.mesh.dim != 1:
            raise ValueError("exact nonlinear integration is implemented for interval meshes")
        s, w = np.polynomial.legendre.leggauss(q)
        s = 0.5 * (s + 1.0)
        self.w = 0.5 * w
        self.phi = np.stack([1.0 - s, s], axis=1)          # (q, 2)
        self.space = space
        self.cd = space.dof[space.mesh.cells]               # (C, 2)
        self.h = space.vol

    def at_points(self, u_dof):
        return u_dof[self.cd] @ self.phi.T                  # (C, q)

    def integral(self, vals):
        return float(np.sum(self.h * (vals @ self.w)))

    def vector(self, vals):
        local = (self.h[:, None] * (vals * self.w)) @ self.phi      # (C, 2)
        return np.bincount(self.cd.ravel(), weights=local.ravel(), minlength=self.space.n_dofs)

    def matrix(self, vals) -> SparseMatrix:
        wq = self.h[:, None] * vals * self.w                # (C, q)
        local = np.einsum("cq,qi,qj->cij", wq, self.phi, self.phi)
        return self.space.pattern.assemble(local)


def _ac_g(u):
    return u * (1.0 - u) * (1.0 - 2.0 * u)


def _ac_dg(u):
    return 1.0 - 6.0 * u + 6.0 * u * u


def _ac_w(u):
    return u * u * (1.0 - u) ** 2


# ---------------------------------------------------------------------------
# operators cached per (mesh, dt)

class AllenCahnOperators:
    def __init__(self, mesh: Mesh, dt: float, eps: float, bcs=None):
        per = periodic_axes(bcs) if bcs else tuple(range(mesh.dim))
        self.space = P1Space(mesh, per)
        self.dt, self.eps = float(dt), float(eps)
        self.K = self.space.stiffness()
        self.M = self.space.mass()
        self.A = self.M + self.K * (self.eps * self.dt)
        self.ilu = ilu0_factor(self.A)
        self._quad = None

    @property
    def quad(self) -> _IntervalQuadrature:
        if self._quad is None:
            self._quad = _IntervalQuadrature(self.space)
        return self._quad

    def energy(self, u_dof) -> float:
        """Ginzburg-Landau energy of the P1 function, integrated exactly."""
        grad = 0.5 * self.eps * float(u_dof @ (self.K @ u_dof))
        return grad + self.quad.integral(_ac_w(self.quad.at_points(u_dof))) / self.eps


class SchrodingerOperators:
    def __init__(self, mesh: Mesh, dt: float, diffusion: float = 0.5, bcs=None):
        per = periodic_axes(bcs) if bcs else tuple(range(mesh.dim))
        self.space = P1Space(mesh, per)
        self.dt, self.a = float(dt), float(diffusion)
        self.K = self.space.stiffness()
        self.M = self.space.mass()
        self.aK = self.K * self.a
        # Unknowns are interleaved node by node, (R_0, I_0, R_1, I_1, ...), so
        # the strong R-I coupling stays local and ILU(0) remains effective.
        # The layout is computed once: block data = concat(a, b, c, d)[perm].
        n, nnz = self.M.n, self.M.nnz
        probe = block2x2(*(self.M.with_data(np.arange(k * nnz, (k + 1) * nnz, dtype=float))
                           for k in range(4)))
        order = np.arange(2 * n).reshape(2, n).T.ravel()       # interleaved -> block index
        where = np.empty(2 * n, dtype=np.int64)
        where[order] = np.arange(2 * n)
        probe = from_coo(where[probe.row_ids()], where[probe.indices], probe.data, 2 * n)
        self._perm = probe.data.astype(np.int64)
        self._block = probe

    def block(self, a, b, c, d) -> SparseMatrix:
        return self._block.with_data(np.concatenate([a.data, b.data, c.data, d.data])[self._perm])

    def L(self, re, im) -> SparseMatrix:
        return self.aK - self.space.weighted_mass(re * re + im * im)

    def mass(self, re, im) -> float:
        return float(re @ (self.M @ re) + im @ (self.M @ im))


# ---------------------------------------------------------------------------
# steppers on DOF vectors

def _ac_semi(ops: AllenCahnOperators, u, tol):
    rhs = ops.M @ (u - (2.0 * ops.dt / ops.eps) * _ac_g(u))
    x, _ = cg_solve(ops.A, rhs, ops.ilu, tol=tol, x0=u)
    return x


def _ac_residual(ops, u, u_old):
    q = ops.quad
    nl = q.vector(_ac_g(q.at_points(u)))
    return ops.A @ u - ops.M @ u_old + (2.0 * ops.dt / ops.eps) * nl


def _newton(residual, jacobian_solve, u0, tol, max_iter):
    u = u0.copy()
    hist = []
    for _ in range(max_iter + 1):
        r = residual(u)
        rn = float(np.linalg.norm(r))
        hist.append(rn)
        if not np.isfinite(rn):
            raise NewtonError("non-finite Newton residual", u, hist)
        if rn <= tol:
            return u, hist
        if len(hist) > max_iter:
            break
        u = u - jacobian_solve(u, r)
    raise NewtonError(f"Newton did not reach {tol:g} in {max_iter} iterations (last {hist[-1]:.3e})",
                      u, hist)


def _ac_implicit(ops: AllenCahnOperators, u_old, tol, max_iter, predictor):
    q = ops.quad
    c = 2.0 * ops.dt / ops.eps

    def solve(u, r):
        jac = ops.A + q.matrix(_ac_dg(q.at_points(u))) * c
        x, _ = gmres_solve(jac, r, ilu0_factor(jac), tol=1e-12)
        return x

    u0 = _ac_semi(ops, u_old, TIME_STEP_TOL) if predictor else u_old
    return _newton(lambda u: _ac_residual(ops, u, u_old), solve, u0, tol, max_iter)


def _pack(re, im):
    return np.column_stack([re, im]).ravel()


def _split(v):
    return v[0::2], v[1::2]


def _schr_semi(ops: SchrodingerOperators, re, im, tol):
    L = ops.L(re, im) * ops.dt
    A = ops.block(ops.M, -L, L, ops.M)
    rhs = _pack(ops.M @ re, ops.M @ im)
    x, _ = gmres_solve(A, rhs, ilu0_factor(A), tol=tol, x0=_pack(re, im))
    return _split(x)


def _schr_residual(ops, v, re0, im0):
    re, im = _split(v)
    L = ops.L(re, im)
    dt = ops.dt
    return _pack(ops.M @ (re - re0) - dt * (L @ im), ops.M @ (im - im0) + dt * (L @ re))


def _schr_jacobian(ops, v) -> SparseMatrix:
    re, im = _split(v)
    dt = ops.dt
    sp = ops.space
    L = ops.L(re, im)
    m_re, m_im = sp.weighted_mass(re), sp.weighted_mass(im)
    cols = ops.M.indices

    def colscale(mat, s):
        return mat.with_data(mat.data * s[cols])

    a = ops.M + colscale(m_im, 2.0 * dt * re)
    b = L * (-dt) + colscale(m_im, 2.0 * dt * im)
    c = L * dt - colscale(m_re, 2.0 * dt * re)
    d = ops.M - colscale(m_re, 2.0 * dt * im)
    return ops.block(a, b, c, d)


def _schr_implicit(ops: SchrodingerOperators, re0, im0, tol, max_iter, predictor):
    def solve(v, r):
        jac = _schr_jacobian(ops, v)
        x, _ = gmres_solve(jac, r, ilu0_factor(jac), tol=1e-12)
        return x

    v0 = _pack(*(_schr_semi(ops, re0, im0, TIME_STEP_TOL) if predictor else (re0, im0)))
    v, hist = _newton(lambda v: _schr_residual(ops, v, re0, im0), solve, v0, tol, max_iter)
    return _split(v), hist


# ---------------------------------------------------------------------------
# public single-step API

def _dofs(space, state):
    return [space.to_dofs(f.coefficients) for f in state.fields]


def _next(state, space, dt, *dof_vecs):
    return make_state(state.mesh, state.t + dt, *(space.to_nodes(v) for v in dof_vecs))


def _check_dt(dt, eps=1.0):
    if not dt > 0 or not eps > 0:
        raise ValueError(f"dt and eps must be positive (dt={dt}, eps={eps})")


def step_allen_cahn_semi_implicit(state: EvolutionState, dt: float, eps: float, ops=None,
                                  tol: float = TIME_STEP_TOL) -> EvolutionState:
    """Solve ``(M + eps dt K) u+ = M u - (2 dt / eps) M g(u)`` with g interpolated nodally."""
    _check_dt(dt, eps)
    ops = ops or AllenCahnOperators(state.mesh, dt, eps)
    (u,) = _dofs(ops.space, state)
    return _next(state, ops.space, dt, _ac_semi(ops, u, tol))


def step_allen_cahn_implicit(state: EvolutionState, dt: float, eps: float, newton_tol: float = NEWTON_TOL,
                             newton_max: int = NEWTON_MAX, ops=None, predictor: bool = False,
                             history: list | None = None) -> EvolutionState:
    """Implicit Euler step; the reaction term is integrated exactly on each cell.

    Newton residual norms are appended to ``history`` when it is given.
    """
    _check_dt(dt, eps)
    ops = ops or AllenCahnOperators(state.mesh, dt, eps)
    (u,) = _dofs(ops.space, state)
    u_new, hist = _ac_implicit(ops, u, newton_tol, newton_max, predictor)
    if history is not None:
        history.extend(hist)
    return _next(state, ops.space, dt, u_new)


def step_schrodinger_semi_implicit(state: EvolutionState, dt: float, diffusion: float = 0.5, ops=None,
                                   tol: float = TIME_STEP_TOL) -> EvolutionState:
    """Linear block step with ``|h|^2`` taken from the old level."""
    _check_dt(dt)
    ops = ops or SchrodingerOperators(state.mesh, dt, diffusion)
    re, im = _dofs(ops.space, state)
    return _next(state, ops.space, dt, *_schr_semi(ops, re, im, tol))


def step_schrodinger_implicit(state: EvolutionState, dt: float, diffusion: float = 0.5,
                              newton_tol: float = NEWTON_TOL, newton_max: int = NEWTON_MAX, ops=None,
                              predictor: bool = False, history: list | None = None) -> EvolutionState:
    _check_dt(dt)
    ops = ops or SchrodingerOperators(state.mesh, dt, diffusion)
    re, im = _dofs(ops.space, state)
    (re1, im1), hist = _schr_implicit(ops, re, im, newton_tol, newton_max, predictor)
    if history is not None:
        history.extend(hist)
    return _next(state, ops.space, dt, re1, im1)


# ---------------------------------------------------------------------------
# trajectories

SCHEMES = ("semi_implicit", "implicit")


def step_count(T: float, dt: float, multiple_of: int = 1) -> int:
    """Smallest step count with step size <= dt that is a multiple of ``multiple_of``."""
    k = max(int(multiple_of), 1)
    return k * int(np.ceil(T / (dt * k) - 1e-9))


def make_operators(problem, mesh: Mesh, dt: float):
    if problem.id.startswith("allen_cahn"):
        return AllenCahnOperators(mesh, dt, problem.coeffs["eps"], problem.fem_bcs)
    return SchrodingerOperators(mesh, dt, problem.coeffs["diffusion"], problem.fem_bcs)


def run_evolution(problem, mesh: Mesh, dt: float, T: float | None = None, scheme: str = "semi_implicit",
                  output_times=None, predictor: bool = True, on_step=None):
    """Integrate ``problem`` from its initial condition to ``T``.

    Parameters
    ----------
    problem : ProblemSpec
        ``allen_cahn1d``, ``schrodinger1d`` or ``schrodinger2d``.
    mesh : Mesh
    dt : float
        Step size; ``T / dt`` must be an integer to within 1e-9.
    T : float, optional
        End time, the problem horizon by default.
    scheme : {"semi_implicit", "implicit"}
    output_times : sequence of float, optional
        Snapshot times, each a multiple of ``dt``.  Defaults to ``[T]``.
    predictor : bool
        Start Newton from the semi-implicit step (implicit scheme only).
    on_step : callable, optional
        ``on_step(state, dof_vectors, ops)`` after every step, outside the timer.

    Returns
    -------
    snapshots : list of EvolutionState
    solve_time : float
        Wall-clock seconds for operator assembly plus all steps.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    T = problem.T if T is None else float(T)
    n_steps = T / dt if T > 0 else 0.0
    if abs(n_steps - round(n_steps)) > 1e-9 * max(1.0, n_steps):
        raise ValueError(f"T/dt = {n_steps} is not an integer")
    n_steps = int(round(n_steps))
    times = [T] if output_times is None else list(output_times)
    want = {}
    for t in times:
        k = t / dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k) or round(k) > n_steps or k < -1e-9:
            raise ValueError(f"output time {t} is not on the time grid")
        want.setdefault(int(round(k)), []).append(t)

    state = initial_state(problem, mesh)
    snaps = {}
    if 0 in want:
        snaps[0] = state
    t0 = time.perf_counter()
    ops = make_operators(problem, mesh, dt)
    space = ops.space
    vecs = _dofs(space, state)
    ac = isinstance(ops, AllenCahnOperators)
    paused = 0.0
    for k in range(1, n_steps + 1):
        try:
            if ac:
                if scheme == "implicit":
                    vecs = [_ac_implicit(ops, vecs[0], NEWTON_TOL, NEWTON_MAX, predictor)[0]]
                else:
                    vecs = [_ac_semi(ops, vecs[0], TIME_STEP_TOL)]
            elif scheme == "implicit":
                vecs = list(_schr_implicit(ops, *vecs, NEWTON_TOL, NEWTON_MAX, predictor)[0])
            else:
                vecs = list(_schr_semi(ops, *vecs, TIME_STEP_TOL))
        except (SolverError, ConvergenceError) as exc:
            raise StepError(k * dt, exc) from exc
        if k in want or on_step is not None:
            tp = time.perf_counter()
            st = make_state(mesh, k * dt, *(space.to_nodes(v) for v in vecs))
            if k in want:
                snaps[k] = st
            if on_step is not None:
                on_step(st, vecs, ops)
            paused += time.perf_counter() - tp
    elapsed = time.perf_counter() - t0 - paused
    return [snaps[k] for k in sorted(snaps)], elapsed


def write_trajectory(path, states) -> None:
    """JSON lines, one ``{t, coefficients}`` object per snapshot."""
    with open(path, "w") as fh:
        for st in states:
            fh.write(st.to_json() + "\n")


def read_trajectory(path, mesh: Mesh) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                out.append(make_state(mesh, doc["t"], *doc["coefficients"]))
    return out

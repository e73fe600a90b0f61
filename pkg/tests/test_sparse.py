import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pde_arena.fem import P1Space
from pde_arena.mesh import build_interval_mesh
from pde_arena.sparse import (ConvergenceError, IluBreakdown, block2x2, cg_solve, from_coo, from_dense,
                              gmres_solve, identity, ilu0_factor, spmv)


def stiffness_1d(n):
    return P1Space(build_interval_mesh(n)).stiffness()


def random_spd(n, rng, density=0.2):
    a = rng.normal(size=(n, n)) * (rng.random((n, n)) < density)
    return a @ a.T + n * np.eye(n)


def test_csr_invariants():
    a = stiffness_1d(8)
    assert a.indptr.size == a.n + 1 and np.all(np.diff(a.indptr) >= 0)
    for r in range(a.n):
        cols = a.indices[a.indptr[r]:a.indptr[r + 1]]
        assert np.all(np.diff(cols) > 0)
    assert np.allclose(a.to_dense(), a.to_dense().T, atol=1e-12)


def test_spmv_examples():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(spmv(identity(3), x), x)
    assert np.allclose(spmv(stiffness_1d(2), [0.0, 1.0, 0.0]), [-2.0, 4.0, -2.0])
    zero = from_coo([0], [0], [0.0], 3)
    assert np.array_equal(spmv(zero, x), np.zeros(3))
    with pytest.raises(ValueError):
        spmv(identity(3), np.ones(4))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 10**6))
def test_spmv_matches_scipy(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.3)
    x = rng.normal(size=n)
    assert np.allclose(spmv(from_dense(d), x), sp.csr_matrix(d) @ x, atol=1e-12)


def test_coo_duplicates_are_summed():
    a = from_coo([0, 0, 1], [1, 1, 0], [1.0, 2.0, 5.0], 2)
    assert np.array_equal(a.to_dense(), [[0, 3], [5, 0]])


def test_ilu_exact_on_tridiagonal():
    sp1 = P1Space(build_interval_mesh(16))
    a = sp1.stiffness() + sp1.mass()          # plain stiffness is singular (constants)
    f = ilu0_factor(a)
    assert np.allclose(f.lower_dense() @ f.upper_dense(), a.to_dense(), atol=1e-12)


def test_ilu_identity():
    f = ilu0_factor(identity(5))
    assert np.array_equal(f.lower_dense(), np.eye(5))
    assert np.array_equal(f.upper_dense(), np.eye(5))


def test_ilu_breakdown_names_row():
    # structurally missing diagonal in row 0
    with pytest.raises(IluBreakdown) as err:
        ilu0_factor(from_coo([0, 1, 1], [1, 0, 1], [1.0, 1.0, 2.0], 2))
    assert err.value.row == 0
    # a pivot that vanishes during elimination
    with pytest.raises(IluBreakdown) as err:
        ilu0_factor(from_dense([[1.0, 1.0], [1.0, 1.0]]))
    assert err.value.row == 1


def test_cg_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    x, its = cg_solve(identity(5), b)
    assert np.allclose(x, b) and its == 1


def test_cg_matches_thomas_oracle():
    n = 200
    h = 1.0 / n
    a = stiffness_1d(n)
    # Dirichlet at both ends: keep interior block
    dense = a.to_dense()[1:-1, 1:-1]
    x_true = np.sin(np.pi * np.linspace(h, 1 - h, n - 1))
    b = dense @ x_true
    sub = from_dense(dense)
    x, _ = cg_solve(sub, b, ilu0_factor(sub), tol=1e-12)
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = np.diag(dense, 1)
    ab[1] = np.diag(dense)
    ab[2, :-1] = np.diag(dense, -1)
    oracle = sla.solve_banded((1, 1), ab, b)
    assert np.max(np.abs(x - oracle)) <= 1e-10 * np.max(np.abs(oracle))


def test_cg_non_convergence_carries_iterate():
    rng = np.random.default_rng(0)
    a = from_dense(random_spd(100, rng))
    with pytest.raises(ConvergenceError) as err:
        cg_solve(a, np.ones(100), tol=1e-30, max_iter=1)
    assert err.value.x is not None and err.value.x.shape == (100,)


def test_cg_detects_nan():
    from pde_arena.sparse import SolverError
    a = from_dense([[1.0, 0.0], [0.0, np.nan]])
    with pytest.raises(SolverError):
        cg_solve(a, np.ones(2))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 10**6))
def test_cg_spd_iteration_bound(n, seed):
    rng = np.random.default_rng(seed)
    d = random_spd(n, rng)
    b = rng.normal(size=n)
    x, its = cg_solve(from_dense(d), b, tol=1e-10)
    assert its <= n + 5
    assert np.linalg.norm(d @ x - b) <= 1e-10 * np.linalg.norm(b)


@pytest.mark.parametrize("n", [64, 256, 1024])
def test_preconditioning_reduces_iterations(n):
    sp1 = P1Space(build_interval_mesh(n))
    a = sp1.stiffness() + sp1.mass()
    b = sp1.load(lambda p: np.cos(3 * p[:, 0]))
    _, plain = cg_solve(a, b, tol=1e-8)
    _, pre = cg_solve(a, b, ilu0_factor(a), tol=1e-8)
    assert pre <= plain


def test_gmres_identity_and_2x2():
    b = np.array([3.0, -1.0, 2.0])
    x, its = gmres_solve(identity(3), b)
    assert np.allclose(x, b) and its == 1
    x, _ = gmres_solve(from_dense([[2.0, 1.0], [0.0, 1.0]]), [3.0, 1.0])
    assert np.allclose(x, [1.0, 1.0], atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 10**6))
def test_gmres_full_restart_nonsymmetric(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, n)) + n * np.eye(n)
    b = rng.normal(size=n)
    x, _ = gmres_solve(from_dense(d), b, tol=1e-10, restart=n)
    assert np.linalg.norm(d @ x - b) <= 1e-10 * np.linalg.norm(b) * 1.0001
    x2, _ = gmres_solve(from_dense(d), b, ilu0_factor(from_dense(d)), tol=1e-10, restart=5)
    assert np.allclose(x2, np.linalg.solve(d, b), atol=1e-8)


def test_gmres_non_convergence():
    rng = np.random.default_rng(3)
    d = rng.normal(size=(60, 60)) + 2 * np.eye(60)
    with pytest.raises(ConvergenceError):
        gmres_solve(from_dense(d), np.ones(60), tol=1e-14, restart=2, max_iter=4)


def test_gmres_schrodinger_step_matches_dense_lu():
    from pde_arena.timestep import SchrodingerOperators, _pack
    mesh = build_interval_mesh(100, (-5.0, 5.0))
    ops = SchrodingerOperators(mesh, 1e-3)
    re = 2.0 / np.cosh(ops.space.mesh.nodes[ops.space.dof_nodes, 0])
    im = np.zeros_like(re)
    L = ops.L(re, im) * ops.dt
    a = ops.block(ops.M, -L, L, ops.M)
    rhs = _pack(ops.M @ re, ops.M @ im)
    x, _ = gmres_solve(a, rhs, ilu0_factor(a), tol=1e-12)
    lu, piv = sla.lu_factor(a.to_dense())
    oracle = sla.lu_solve((lu, piv), rhs)
    assert np.max(np.abs(x - oracle)) <= 1e-8 * np.max(np.abs(oracle))


def test_block2x2_layout():
    a, b = from_dense([[1.0]]), from_dense([[2.0]])
    c, d = from_dense([[3.0]]), from_dense([[4.0]])
    assert np.array_equal(block2x2(a, b, c, d).to_dense(), [[1, 2], [3, 4]])


def test_same_pattern_add_is_data_op():
    sp1 = P1Space(build_interval_mesh(5))
    k, m = sp1.stiffness(), sp1.mass()
    s = k + m
    assert s.indices is k.indices
    assert np.allclose(s.to_dense(), k.to_dense() + m.to_dense())
    assert np.allclose((k - m).to_dense(), k.to_dense() - m.to_dense())

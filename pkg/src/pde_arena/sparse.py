"""CSR matrices and the Krylov solvers used by the FEM backend.

Conjugate gradients with an ILU(0) preconditioner for the symmetric Poisson
and Allen-Cahn systems, restarted GMRES for the non-symmetric ones.  The
inner loops (spmv, factorisation, triangular solves) are numba kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

STATIONARY_TOL = 1e-10
TIME_STEP_TOL = 1e-8


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    """Iteration limit hit; ``x`` holds the best iterate seen."""

    def __init__(self, msg, x=None, iterations=0, residual=np.nan):
        super().__init__(msg)
        self.x = x
        self.iterations = iterations
        self.residual = residual


class IluBreakdown(SolverError):
    def __init__(self, row):
        super().__init__(f"ILU(0) breakdown: zero or missing pivot in row {row}")
        self.row = row


# --------------------------------------------------------------------------
# kernels

@numba.njit(cache=True)
def _spmv(indptr, indices, data, x, out):
    for i in range(indptr.size - 1):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc
    return out


@numba.njit(cache=True)
def _ilu0(indptr, indices, data):
    n = indptr.size - 1
    lu = data.copy()
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag[i] = p
        if diag[i] < 0:
            return lu, diag, i
    iw = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = p
        for p in range(indptr[i], diag[i]):
            k = indices[p]
            piv = lu[diag[k]]
            if piv == 0.0:
                return lu, diag, k
            lu[p] /= piv
            mult = lu[p]
            for q in range(diag[k] + 1, indptr[k + 1]):
                pos = iw[indices[q]]
                if pos >= 0:
                    lu[pos] -= mult * lu[q]
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = -1
        if lu[diag[i]] == 0.0:
            return lu, diag, i
    return lu, diag, -1


@numba.njit(cache=True)
def _lu_solve(indptr, indices, lu, diag, b):
    n = b.size
    x = b.copy()
    for i in range(n):
        acc = x[i]
        for p in range(indptr[i], diag[i]):
            acc -= lu[p] * x[indices[p]]
        x[i] = acc
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            acc -= lu[p] * x[indices[p]]
        x[i] = acc / lu[diag[i]]
    return x


# --------------------------------------------------------------------------
# containers

@dataclass(frozen=True, eq=False)
class SparseMatrix:
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @property
    def nnz(self) -> int:
        return self.data.size

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"dimension mismatch: matrix {self.n}, vector {x.shape}")
        return _spmv(self.indptr, self.indices, self.data, x, np.empty(self.n))

    __matmul__ = matvec

    def with_data(self, data) -> "SparseMatrix":
        return SparseMatrix(self.n, self.indptr, self.indices, np.asarray(data, dtype=float))

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def diagonal(self) -> np.ndarray:
        rows = self.row_ids()
        d = np.zeros(self.n)
        on = rows == self.indices
        d[rows[on]] = self.data[on]
        return d

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        np.add.at(out, (self.row_ids(), self.indices), self.data)
        return out

    def transpose(self) -> "SparseMatrix":
        return from_coo(self.indices, self.row_ids(), self.data, self.n)

    def scale_rows(self, s) -> "SparseMatrix":
        return self.with_data(self.data * np.asarray(s)[self.row_ids()])

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if self.same_pattern(other):
            return self.with_data(self.data + other.data)
        return from_coo(np.concatenate([self.row_ids(), other.row_ids()]),
                        np.concatenate([self.indices, other.indices]),
                        np.concatenate([self.data, other.data]), self.n)

    def __mul__(self, c: float) -> "SparseMatrix":
        return self.with_data(self.data * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def same_pattern(self, other) -> bool:
        return (self.n == other.n and self.indptr is other.indptr and self.indices is other.indices) or (
            self.n == other.n and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices))


class CooPattern:
    """Fixed sparsity built from COO coordinates (duplicates allowed).

    Re-assembling new values on the same coordinates is a single bincount,
    which is what the time steppers and Newton loops rely on.
    """

    def __init__(self, rows, cols, n: int):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        keys = rows * n + cols
        uniq, self.slot = np.unique(keys, return_inverse=True)
        self.n = n
        self.indices = (uniq % n).astype(np.int64)
        counts = np.bincount(uniq // n, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def assemble(self, vals) -> SparseMatrix:
        data = np.bincount(self.slot, weights=np.asarray(vals, dtype=float).ravel(),
                           minlength=self.indices.size)
        return SparseMatrix(self.n, self.indptr, self.indices, data)


def from_coo(rows, cols, vals, n: int) -> SparseMatrix:
    return CooPattern(rows, cols, n).assemble(vals)


def from_dense(a) -> SparseMatrix:
    a = np.asarray(a, dtype=float)
    r, c = np.nonzero(a)
    return from_coo(r, c, a[r, c], a.shape[0])


def identity(n: int) -> SparseMatrix:
    i = np.arange(n)
    return from_coo(i, i, np.ones(n), n)


def spmv(a: SparseMatrix, x) -> np.ndarray:
    return a.matvec(x)


def block2x2(a, b, c, d) -> SparseMatrix:
    """[[a, b], [c, d]] as one CSR matrix (blocks share dimension n)."""
    n = a.n
    rows, cols, vals = [], [], []
    for blk, ro, co in ((a, 0, 0), (b, 0, n), (c, n, 0), (d, n, n)):
        rows.append(blk.row_ids() + ro)
        cols.append(blk.indices + co)
        vals.append(blk.data)
    return from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), 2 * n)


@dataclass(frozen=True, eq=False)
class IluFactors:
    """ILU(0): strict lower part holds L (unit diagonal implied), the rest U."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    lu: np.ndarray
    diag: np.ndarray

    def solve(self, b) -> np.ndarray:
        return _lu_solve(self.indptr, self.indices, self.lu, self.diag, np.asarray(b, dtype=float))

    __call__ = solve

    def lower_dense(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out = np.eye(self.n)
        m = self.indices < rows
        out[rows[m], self.indices[m]] = self.lu[m]
        return out

    def upper_dense(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out = np.zeros((self.n, self.n))
        m = self.indices >= rows
        out[rows[m], self.indices[m]] = self.lu[m]
        return out


def ilu0_factor(a: SparseMatrix) -> IluFactors:
    lu, diag, fail = _ilu0(a.indptr, a.indices, a.data)
    if fail >= 0:
        raise IluBreakdown(int(fail))
    return IluFactors(a.n, a.indptr, a.indices, lu, diag)


# --------------------------------------------------------------------------
# Krylov solvers

def _check_finite(v, what, it):
    if not np.all(np.isfinite(v)):
        raise SolverError(f"non-finite values in {what} at iteration {it}")


def cg_solve(a: SparseMatrix, b, precond: IluFactors | None = None, tol: float = STATIONARY_TOL,
             max_iter: int | None = None, x0=None):
    """Preconditioned conjugate gradients.

    Stops once ``||b - A x|| <= tol * ||b||`` holds for the true residual.
    Returns ``(x, iterations)``.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    target = tol * bnorm
    apply_m = precond.solve if precond is not None else (lambda v: v.copy())

    r = b - a @ x
    best_x, best_res = x.copy(), np.linalg.norm(r)
    if best_res <= target:
        return x, 0
    z = apply_m(r)
    p = z.copy()
    rz = r @ z
    it = 0
    while it < max_iter:
        it += 1
        ap = a @ p
        pap = p @ ap
        if pap == 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        _check_finite(x, "CG iterate", it)
        rn = np.linalg.norm(r)
        if rn < best_res:
            best_x, best_res = x.copy(), rn
        if rn <= target:
            r_true = b - a @ x
            if np.linalg.norm(r_true) <= target:
                return x, it
            r = r_true                      # drifted recursion: restart from true residual
            z = apply_m(r)
            p = z.copy()
            rz = r @ z
            continue
        z = apply_m(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not reach rel. residual {tol:g} in {it} iterations "
                           f"(best {best_res / bnorm:.3e})", best_x, it, best_res / bnorm)


def gmres_solve(a: SparseMatrix, b, precond: IluFactors | None = None, tol: float = STATIONARY_TOL,
                restart: int = 30, max_iter: int | None = None, x0=None):
    """Restarted GMRES with right preconditioning.

    Right preconditioning keeps the monitored residual equal to the true
    residual of ``A x = b``.  Returns ``(x, iterations)`` where iterations
    counts Arnoldi steps over all cycles.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    m = max(1, min(restart, n))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    target = tol * bnorm
    apply_m = precond.solve if precond is not None else (lambda v: v)

    r = b - a @ x
    beta = np.linalg.norm(r)
    best_x, best_res = x.copy(), beta
    total = 0
    while beta > target and total < max_iter:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        for j in range(m):
            w = a @ apply_m(V[j])
            # classical Gram-Schmidt, applied twice for stability
            h = V[: j + 1] @ w
            w -= V[: j + 1].T @ h
            h2 = V[: j + 1] @ w
            w -= V[: j + 1].T @ h2
            h += h2
            hn = np.linalg.norm(w)
            H[: j + 1, j] = h
            H[j + 1, j] = hn
            breakdown = hn <= 1e-14 * max(np.linalg.norm(h), 1e-300)
            if not breakdown:
                V[j + 1] = w / hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            k = j + 1
            if abs(g[j + 1]) <= target or breakdown or total >= max_iter:
                break
        y = _back_substitute(H[:k, :k], g[:k])
        x = x + apply_m(V[:k].T @ y)
        _check_finite(x, "GMRES iterate", total)
        r = b - a @ x
        beta = np.linalg.norm(r)
        if beta < best_res:
            best_x, best_res = x.copy(), beta
    if beta <= target:
        return x, total
    raise ConvergenceError(f"GMRES did not reach rel. residual {tol:g} in {total} iterations "
                           f"(best {best_res / bnorm:.3e})", best_x, total, best_res / bnorm)


def _back_substitute(r, g):
    k = g.size
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        if r[i, i] == 0.0:
            continue
        y[i] = (g[i] - r[i, i + 1:] @ y[i + 1:]) / r[i, i]
    return y


def warmup():
    """Trigger JIT compilation so timed runs never include it."""
    a = from_dense(np.array([[4.0, -1.0], [-1.0, 4.0]]))
    f = ilu0_factor(a)
    cg_solve(a, np.ones(2), f)
    gmres_solve(a, np.ones(2), f)

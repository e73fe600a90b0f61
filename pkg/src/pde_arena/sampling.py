"""Latin hypercube sampling and the two optimizers used to train PINNs.

Adam is written as a pure function on an explicit state so that two runs
with the same gradient stream are bit-identical.  L-BFGS uses the two-loop
recursion with a strong-Wolfe line search (bracketing followed by a cubic
zoom) and works on flat parameter vectors.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np


def sample_rng(seed: int, stream: int = 1) -> np.random.Generator:
    """Counter-based generator for collocation sampling (stream 0 is init)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def lhs_sample(n: int, box, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube design of ``n`` points in an axis-aligned box.

    Every coordinate axis is cut into ``n`` equal strata and each stratum
    receives exactly one point, placed uniformly inside it.  Points lie
    strictly inside the box.

    Parameters
    ----------
    n : int
        Number of points.
    box : pair of sequences
        ``(lower, upper)`` corners.
    rng : numpy.random.Generator

    Returns
    -------
    ndarray of shape (n, dim)
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    n = int(n)
    lo = np.atleast_1d(np.asarray(box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError(f"invalid box {box}")
    d = lo.size
    strata = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    offsets = rng.uniform(np.finfo(float).tiny, 1.0, size=(n, d))
    unit = (strata + offsets) / n
    pts = lo + unit * (hi - lo)
    # keep the open-box guarantee after scaling roundoff
    return np.clip(pts, np.nextafter(lo, hi), np.nextafter(hi, lo))


@dataclass(frozen=True)
class SampleBatch:
    """Collocation points for one loss evaluation.

    ``interior`` holds space(-time) points, ``boundary`` maps a face label
    to its points and ``initial`` holds spatial points at t = 0.
    """

    interior: np.ndarray
    boundary: dict = field(default_factory=dict)
    initial: np.ndarray | None = None

    @property
    def counts(self) -> tuple:
        nb = {len(p) for p in self.boundary.values()}
        n_g = nb.pop() if len(nb) == 1 else sum(len(p) for p in self.boundary.values())
        n_h = 0 if self.initial is None else len(self.initial)
        return len(self.interior), n_g, n_h


# ---------------------------------------------------------------------------
# Adam

@dataclass(frozen=True)
class AdamState:
    lr: float
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(n_params: int, lr: float, **kw) -> AdamState:
    return AdamState(lr=float(lr), m=np.zeros(n_params), v=np.zeros(n_params), **kw)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam update; returns ``(state, params)``."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.m.shape or np.shape(params) != grad.shape:
        raise ValueError("parameter, gradient and state shapes differ")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient passed to Adam")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=t), new


# ---------------------------------------------------------------------------
# L-BFGS

@dataclass
class LbfgsState:
    """Curvature pairs kept by L-BFGS, newest last."""

    history: int = 10
    s: deque = field(default_factory=deque)
    y: deque = field(default_factory=deque)
    skipped: int = 0

    def push(self, s, y) -> bool:
        sy = float(s @ y)
        if sy <= 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            self.skipped += 1
            return False
        self.s.append(s)
        self.y.append(y)
        if len(self.s) > self.history:
            self.s.popleft()
            self.y.popleft()
        return True

    def direction(self, g: np.ndarray) -> np.ndarray:
        """Two-loop recursion: ``-H g`` for the implicit inverse Hessian H."""
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(self.s), reversed(self.y)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            q -= a * y
            alphas.append((a, rho))
        if self.s:
            s, y = self.s[-1], self.y[-1]
            q *= (s @ y) / (y @ y)
        for (s, y), (a, rho) in zip(zip(self.s, self.y), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    n_eval: int
    status: str            # converged | max_iter | line_search_failed
    skipped_pairs: int = 0

    @property
    def success(self) -> bool:
        return self.status == "converged"


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic matching values and slopes at a and b."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
    return t if np.isfinite(t) else None


def strong_wolfe(phi, f0, d0, alpha0=1.0, c1=1e-4, c2=0.9, max_eval=25):
    """Find a step satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(f, slope, payload)``.  Returns
    ``(alpha, f, payload, n_eval)`` or ``(None, best_f, best_payload, n_eval)``
    on failure, where ``best`` is the lowest finite value seen.
    """
    evals = 0
    best = (None, f0, None)

    def look(a):
        nonlocal evals, best
        evals += 1
        f, d, load = phi(a)
        if np.isfinite(f) and f < best[1]:
            best = (a, f, load)
        return f, d, load

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        while evals < max_eval:
            t = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if t is None or not (left + margin <= t <= right - margin):
                t = 0.5 * (lo + hi)
            f, d, load = look(t)
            if not np.isfinite(f) or f > f0 + c1 * t * d0 or f >= flo:
                hi, fhi, dhi = t, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return t, f, load
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = t, f, d
            if abs(hi - lo) <= 1e-14 * max(1.0, abs(lo)):
                break
        return None

    prev, fprev, dprev = 0.0, f0, d0
    a = alpha0
    for i in range(max_eval):
        f, d, load = look(a)
        if not np.isfinite(f) or f > f0 + c1 * a * d0 or (i > 0 and f >= fprev):
            out = zoom(prev, fprev, dprev, a, f if np.isfinite(f) else np.inf, d)
            break
        if abs(d) <= -c2 * d0:
            out = (a, f, load)
            break
        if d >= 0:
            out = zoom(a, f, d, prev, fprev, dprev)
            break
        prev, fprev, dprev = a, f, d
        a *= 2.0
        if evals >= max_eval:
            out = None
            break
    else:
        out = None
    if out is None:
        return None, best[1], best[2], evals
    return out[0], out[1], out[2], evals


def lbfgs_minimize(loss_and_grad, x0, max_iter: int = 500, grad_tol: float = 1e-9,
                   history: int = 10, callback=None) -> LbfgsResult:
    """Minimize a smooth function with L-BFGS.

    Parameters
    ----------
    loss_and_grad : callable
        ``x -> (f, g)`` on flat float vectors.  For PINN refinement the
        collocation batch is closed over and stays fixed for the whole run.
    x0 : ndarray
        Starting point.
    max_iter : int
        Iteration budget.
    grad_tol : float
        Stop when ``||g||_inf <= grad_tol``.
    history : int
        Number of stored curvature pairs.
    callback : callable, optional
        Called as ``callback(k, x, f)`` after every accepted iteration.

    Returns
    -------
    LbfgsResult
        On line-search failure the best iterate seen is returned with status
        ``"line_search_failed"``.
    """
    x = np.array(x0, dtype=float)
    f, g = loss_and_grad(x)
    f = float(f)
    if not np.isfinite(f):
        raise FloatingPointError("loss is not finite at the starting point")
    n_eval = 1
    mem = LbfgsState(history=history)

    for k in range(max_iter):
        if np.max(np.abs(g), initial=0.0) <= grad_tol:
            return LbfgsResult(x, f, g, k, n_eval, "converged", mem.skipped)
        p = mem.direction(g)
        d0 = float(g @ p)
        if d0 >= 0:                     # lost descent; restart from steepest
            mem.s.clear()
            mem.y.clear()
            p, d0 = -g, -float(g @ g)
        alpha0 = 1.0 if mem.s else min(1.0, 1.0 / np.sqrt(-d0))

        def phi(a):
            xa = x + a * p
            fa, ga = loss_and_grad(xa)
            return float(fa), float(ga @ p), (xa, ga)

        a, f_new, load, used = strong_wolfe(phi, f, d0, alpha0)
        n_eval += used
        if a is None:
            if load is not None:          # accept the best decrease found
                x, g, f = load[0], load[1], f_new
            return LbfgsResult(x, f, g, k + 1, n_eval, "line_search_failed", mem.skipped)
        x_new, g_new = load
        mem.push(x_new - x, g_new - g)
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(k, x, f)

    status = "converged" if np.max(np.abs(g), initial=0.0) <= grad_tol else "max_iter"
    return LbfgsResult(x, f, g, max_iter, n_eval, status, mem.skipped)

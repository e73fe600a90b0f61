import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der
from hypothesis import given, settings, strategies as st

from pde_arena.sampling import (LbfgsState, adam_init, adam_step, lbfgs_minimize, lhs_sample, sample_rng,
                                strong_wolfe)


def occupancy(pts, n, lo, hi):
    idx = np.floor((pts - lo) / (hi - lo) * n).astype(int)
    return np.stack([np.bincount(idx[:, k], minlength=n) for k in range(pts.shape[1])])


def test_lhs_four_points():
    pts = lhs_sample(4, ([0.0], [1.0]), sample_rng(0))
    s = np.sort(pts[:, 0])
    for k, v in enumerate(s):
        assert k / 4 <= v < (k + 1) / 4


def test_lhs_single_point_and_open_box():
    pts = lhs_sample(1, ((-1, 2), (1, 3)), sample_rng(1))
    assert pts.shape == (1, 2)
    assert np.all(pts > [-1, 2]) and np.all(pts < [1, 3])


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_lhs_invalid_n(n):
    with pytest.raises(ValueError):
        lhs_sample(n, ([0], [1]), sample_rng(0))


def test_lhs_invalid_box():
    with pytest.raises(ValueError):
        lhs_sample(3, ([0, 1], [1, 1]), sample_rng(0))


def test_lhs_reproducible():
    a = lhs_sample(50, ((0, 0), (1, 1)), sample_rng(9))
    b = lhs_sample(50, ((0, 0), (1, 1)), sample_rng(9))
    assert np.array_equal(a, b)


def test_lhs_within_stratum_uniform():
    # offsets inside the strata: aggregate over draws is uniform on [0, 1)
    rng = sample_rng(3)
    offs = []
    for _ in range(200):
        p = lhs_sample(10, ([0.0], [1.0]), rng)[:, 0] * 10
        offs.append(p - np.floor(p))
    counts = np.histogram(np.concatenate(offs), bins=10, range=(0, 1))[0]
    expected = 2000 / 10
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 27.9          # 99.9% quantile of chi^2 with 9 dof


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 300), dim=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_lhs_stratification_property(n, dim, seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-5, 5, dim)
    hi = lo + rng.uniform(0.1, 10, dim)
    pts = lhs_sample(n, (lo, hi), sample_rng(seed))
    assert np.all(occupancy(pts, n, lo, hi) == 1)


def test_adam_zero_gradient_and_first_step():
    st0 = adam_init(3, 0.1)
    x = np.array([1.0, -2.0, 3.0])
    _, y = adam_step(st0, x, np.zeros(3))
    assert np.array_equal(x, y)
    s1, z = adam_step(adam_init(1, 0.1), np.array([0.0]), np.array([5.0]))
    assert z[0] == pytest.approx(-0.1, rel=1e-8)
    assert s1.step == 1 and s1.m[0] == pytest.approx(0.5) and s1.v[0] == pytest.approx(0.025)


def test_adam_lr_zero_identity_and_determinism(rng):
    grads = rng.normal(size=(20, 5))
    x = rng.normal(size=5)
    s = adam_init(5, 0.0)
    y = x.copy()
    for g in grads:
        s, y = adam_step(s, y, g)
    assert np.array_equal(x, y)
    runs = []
    for _ in range(2):
        s, y = adam_init(5, 1e-2), x.copy()
        for g in grads:
            s, y = adam_step(s, y, g)
        runs.append(y)
    assert np.array_equal(runs[0], runs[1])


def test_adam_errors():
    with pytest.raises(FloatingPointError):
        adam_step(adam_init(2, 0.1), np.zeros(2), np.array([np.nan, 1.0]))
    with pytest.raises(ValueError):
        adam_step(adam_init(2, 0.1), np.zeros(3), np.zeros(3))


def test_lbfgs_quadratic(rng):
    x0 = rng.normal(size=8)
    res = lbfgs_minimize(lambda x: (0.5 * x @ x, x), x0, grad_tol=1e-12)
    assert np.linalg.norm(res.x) <= 1e-8 and res.n_iter <= 3 and res.success


def test_lbfgs_rosenbrock():
    res = lbfgs_minimize(lambda x: (rosen(x), rosen_der(x)), np.array([-1.2, 1.0]), max_iter=100,
                         grad_tol=1e-12)
    assert res.fun <= 1e-10
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-5)


def test_lbfgs_huge_tolerance_returns_start():
    x0 = np.array([3.0, 4.0])
    res = lbfgs_minimize(lambda x: (rosen(x), rosen_der(x)), x0, grad_tol=1e12)
    assert res.n_iter == 0 and np.array_equal(res.x, x0)


def test_lbfgs_line_search_failure_is_reported():
    # gradient pointing the wrong way: no step can satisfy the Wolfe conditions
    res = lbfgs_minimize(lambda x: (float(x @ x), -2 * x), np.array([1.0, 2.0]), max_iter=20)
    assert res.status == "line_search_failed" and not res.success
    assert res.fun <= 5.0


def test_lbfgs_pairs_keep_positive_curvature():
    mem = LbfgsState(history=3)
    assert not mem.push(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert mem.skipped == 1
    rng = np.random.default_rng(2)
    for _ in range(6):
        s = rng.normal(size=2)
        mem.push(s, s * 2.0)
    assert len(mem.s) == 3
    assert all(float(s @ y) > 0 for s, y in zip(mem.s, mem.y))
    # with y = 2 s the implicit inverse Hessian is I / 2
    g = np.array([1.0, -3.0])
    assert np.allclose(mem.direction(g), -0.5 * g)


def test_strong_wolfe_conditions():
    f = lambda x: (x - 3.0) ** 4 + x * x                        # noqa: E731
    df = lambda x: 4 * (x - 3.0) ** 3 + 2 * x                    # noqa: E731
    x0, p = 0.0, 1.0
    d0 = df(x0) * p
    a, fa, _, _ = strong_wolfe(lambda a: (f(x0 + a * p), df(x0 + a * p) * p, None), f(x0), d0, 1.0)
    assert fa <= f(x0) + 1e-4 * a * d0
    assert abs(df(x0 + a * p) * p) <= 0.9 * abs(d0)


def test_lbfgs_nonfinite_start():
    with pytest.raises(FloatingPointError):
        lbfgs_minimize(lambda x: (np.nan, x), np.ones(2))

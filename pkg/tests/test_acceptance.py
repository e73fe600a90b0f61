"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import csv
import json
import time

import jsonschema
import numpy as np
import pytest

from pde_arena.bench import CSV_COLUMNS, RECORDS_SCHEMA, l2_relative_error, run_benchmark
from pde_arena.cli import main
from pde_arena.fem import interpolate, solve_stationary
from pde_arena.mesh import build_interval_mesh, build_mesh
from pde_arena.network import forward, init_params, jet2, load_checkpoint, save_checkpoint, value_and_grad
from pde_arena.problems import PROBLEM_IDS, evaluate_pinn, evaluation_points, get_problem, sample_batch, total_loss
from pde_arena.sampling import lhs_sample, sample_rng
from pde_arena.timestep import (AllenCahnOperators, SchrodingerOperators, initial_state, make_state,
                                run_evolution, step_count, step_schrodinger_implicit)

# frozen after the first oracle run (P1, n=4096, 512-point grid)
POISSON1D_N4096_ERROR = 2.3402992075e-08
# relative mass change of the fine implicit 1D Schrödinger run at T = pi/2
SCHRODINGER1D_MASS_DRIFT = -6.67e-3


def verdict(k, ok, detail):
    print(f"\nacceptance {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def fem_errors(pid, meshes):
    recs = run_benchmark([pid], ["fem"], repeats=1, configs={(pid, "fem"): meshes})
    return [r.l2_rel_error for r in recs]


def test_01_fem_convergence_order():
    t0 = time.perf_counter()
    ratios = {}
    for pid, meshes in [("poisson1d", [64, 128, 256]), ("poisson2d", [50, 100, 200]), ("poisson3d", [16, 32])]:
        e = fem_errors(pid, meshes)
        ratios[pid] = [a / b for a, b in zip(e, e[1:])]
    elapsed = time.perf_counter() - t0
    ok = all(3.2 <= q <= 4.8 for qs in ratios.values() for q in qs) and elapsed < 120
    verdict(1, ok, f"ratios {ratios}, {elapsed:.1f}s")


def test_02_fem_exactness_floor():
    err = fem_errors("poisson1d", [4096])[0]
    ok = err <= 1e-6 and err == pytest.approx(POISSON1D_N4096_ERROR, rel=1e-2)
    verdict(2, ok, f"n=4096 error {err:.4e} (golden {POISSON1D_N4096_ERROR:.4e})")


@pytest.fixture(scope="module")
def poisson1d_pinn():
    t0 = time.perf_counter()
    recs = [run_benchmark(["poisson1d"], ["pinn"], repeats=1, seed=s, configs={("poisson1d", "pinn"): [(20, 20, 1)]})[0]
            for s in (0, 1, 2)]
    return recs, time.perf_counter() - t0


def test_03_pinn_trains_on_poisson1d(poisson1d_pinn):
    recs, elapsed = poisson1d_pinn
    errs = [r.l2_rel_error for r in recs]
    med = float(np.median(errs))
    ok = all(r.status == "ok" for r in recs) and med <= 1e-2 and elapsed <= 600
    verdict(3, ok, f"errors {['%.2e' % e for e in errs]}, median {med:.2e}, {elapsed:.1f}s")


def test_04_fem_faster_and_more_accurate(poisson1d_pinn):
    fem = run_benchmark(["poisson1d"], ["fem"], repeats=3, configs={("poisson1d", "fem"): [256]})[0]
    pinn = poisson1d_pinn[0]
    train = float(np.median([r.solve_time_s for r in pinn]))
    perr = float(np.median([r.l2_rel_error for r in pinn]))
    ok = 10 * fem.solve_time_s <= train and fem.l2_rel_error <= perr
    verdict(4, ok, f"FEM {fem.solve_time_s:.2e}s err {fem.l2_rel_error:.2e}; PINN {train:.2f}s err {perr:.2e}")


def best_of(fn, k=7):
    times = []
    for _ in range(k):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def test_05_evaluation_time_direction():
    p = get_problem("poisson3d")
    pts = evaluation_points(p, (50, 50, 50))
    # evaluation cost does not depend on the weight values
    net = init_params((20, 20, 1), 0, 3)
    mesh = build_mesh(3, 32, p.box)
    field, _ = solve_stationary(p, mesh)
    pinn_t = min(evaluate_pinn(net, pts)[1] for _ in range(7))
    fem_t = best_of(lambda: interpolate(mesh, field.coefficients, pts))
    verdict(5, pinn_t <= fem_t, f"PINN [20,20,1] {pinn_t * 1e3:.1f} ms vs FEM n=32 {fem_t * 1e3:.1f} ms")


def test_06_autodiff_correctness():
    worst_grad = 0.0
    for pid in PROBLEM_IDS:
        p = get_problem(pid)
        net = init_params((10, 10, p.n_out), 1, p.n_in)
        batch = sample_batch(p, sample_rng(1), counts=(16, 4, 6))
        _, g = value_and_grad(lambda q: total_loss(p, q, batch), net)
        theta, h = net.flat(), 1e-5
        fd = np.empty_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd[i] = (float(total_loss(p, net.with_flat(theta + e), batch))
                     - float(total_loss(p, net.with_flat(theta - e), batch))) / (2 * h)
        worst_grad = max(worst_grad, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    worst_lap = 0.0
    rng = np.random.default_rng(0)
    for n_in in (1, 2, 3):
        net = init_params((10, 10, 1), n_in, n_in)
        x = rng.uniform(-1, 1, size=(8, n_in))
        h = 1e-3
        u0 = forward(net, x)[:, 0]
        fd = 0.0
        for c in range(n_in):
            e = np.zeros(n_in)
            e[c] = h
            d_plus = (forward(net, x + 2 * e)[:, 0] - u0) / (2 * h)
            d_minus = (u0 - forward(net, x - 2 * e)[:, 0]) / (2 * h)
            fd = fd + (d_plus - d_minus) / (2 * h)
        lap = jet2(net, x).laplacian()[:, 0]
        worst_lap = max(worst_lap, np.max(np.abs(lap - fd)) / max(1.0, np.abs(fd).max()))
    verdict(6, worst_grad <= 1e-5 and worst_lap <= 1e-4, f"grad rel {worst_grad:.2e}, laplacian {worst_lap:.2e}")


def test_07_allen_cahn_ground_truth():
    p = get_problem("allen_cahn1d")
    mesh = build_interval_mesh(2048)
    energies = []
    ops0 = AllenCahnOperators(mesh, 2.5e-4, 0.01)
    energies.append(ops0.energy(ops0.space.to_dofs(initial_state(p, mesh).values[0])))
    ref, _ = run_evolution(p, mesh, 2.5e-4, scheme="implicit",
                           on_step=lambda s, v, ops: energies.append(ops.energy(v[0])))
    semi, _ = run_evolution(p, mesh, 1e-3)
    e = np.array(energies)
    rises = np.max(np.diff(e) / np.abs(e[:-1]))
    gap = l2_relative_error(semi[-1].values[0], ref[-1].values[0])
    ok = len(e) == 201 and rises <= 1e-10 and gap <= 5e-2
    verdict(7, ok, f"{len(e) - 1} steps, max relative energy rise {rises:.2e}, semi vs implicit {gap:.2e}")


def test_08_schrodinger_sanity():
    p = get_problem("schrodinger1d")
    mesh = build_interval_mesh(2048, p.box)
    ops0 = SchrodingerOperators(mesh, 2.5e-4)
    st0 = initial_state(p, mesh)
    m0 = ops0.mass(*(ops0.space.to_dofs(v) for v in st0.values))
    masses = []
    run_evolution(p, mesh, p.T / step_count(p.T, 2.5e-4), scheme="implicit",
                  on_step=lambda s, v, ops: masses.append(ops.mass(*v)))
    drift = masses[-1] / m0 - 1.0
    c, dt = 0.8, 1e-3
    small = build_interval_mesh(64, p.box)
    st = make_state(small, 0.0, np.full(small.n_nodes, c), np.zeros(small.n_nodes))
    ops = SchrodingerOperators(small, dt)
    for _ in range(100):
        st = step_schrodinger_implicit(st, dt, ops=ops)
    exact = c * np.exp(1j * c * c * st.t)
    phase_err = max(np.max(np.abs(st.values[0] - exact.real)), np.max(np.abs(st.values[1] - exact.imag)))
    ok = abs(drift) <= 1e-2 and drift == pytest.approx(SCHRODINGER1D_MASS_DRIFT, abs=5e-4) and phase_err <= 1e-3
    verdict(8, ok, f"mass drift {drift:+.3%}, phase rotation error {phase_err:.2e}")


def test_09_lhs_stratification():
    bad = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        for n, dim in [(1, 1), (7, 1), (10, 2), (64, 3), (250, 2), (33, 4)]:
            lo = rng.uniform(-2, 0, size=dim)
            hi = lo + rng.uniform(0.5, 3, size=dim)
            x = lhs_sample(n, np.stack([lo, hi]), sample_rng(seed))
            strata = np.floor((x - lo) / (hi - lo) * n).astype(int)
            if x.shape != (n, dim) or any(sorted(strata[:, j]) != list(range(n)) for j in range(dim)):
                bad.append((seed, n, dim))
    verdict(9, not bad, f"600 designs, {len(bad)} with a stratum not hit exactly once")


def test_10_reproducibility(tmp_path):
    cols = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["compare", "--problem", "poisson1d", "--seed", "7", "--out", str(out)]) == 0
        with open(out / "records.csv") as fh:
            cols.append([row["l2_rel_error"] for row in csv.DictReader(fh)])
    net = init_params((20, 20, 1), 7, 1)
    back, seed = load_checkpoint(save_checkpoint(net, 7))
    exact = seed == 7 and all(np.array_equal(a, b) for la, lb in zip(net.layers, back.layers) for a, b in zip(la, lb))
    ok = cols[0] == cols[1] and len(cols[0]) == 10 and exact
    verdict(10, ok, f"{len(cols[0])} rows identical: {cols[0] == cols[1]}, checkpoint bit-exact: {exact}")


def test_11_records_schema(tmp_path):
    out = tmp_path / "run"
    assert main(["compare", "--problem", "poisson1d", "--problem", "allen_cahn1d", "--method", "fem",
                 "--repeats", "1", "--out", str(out)]) == 0
    docs = json.loads((out / "records.json").read_text())
    jsonschema.validate(docs, RECORDS_SCHEMA)
    with open(out / "records.csv") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = tuple(reader.fieldnames)
    typed = [{**d, **{c: (float(r[c]) if c.endswith(("_s", "error")) else
                                           int(r[c]) if c in ("repeats", "seed") else r[c]) for c in CSV_COLUMNS}}
             for r, d in zip(rows, docs)]
    jsonschema.validate(typed, RECORDS_SCHEMA)
    with open(out / "pareto.csv") as fh:
        pareto = [(r["problem"], r["method"], r["config"]) for r in csv.DictReader(fh)]
    keys = [(d["problem"], d["method"], d["config"]) for d in docs]
    ok = header == CSV_COLUMNS and typed == docs and sorted(pareto) == sorted(keys) and len(set(pareto)) == len(pareto)
    verdict(11, ok, f"{len(docs)} records valid, {len(pareto)} pareto rows")

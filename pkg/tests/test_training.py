import json
from dataclasses import replace

import numpy as np
import pytest

from pde_arena.network import init_params, load_checkpoint, save_checkpoint, value_and_grad
from pde_arena.problems import get_problem, run_plan, sample_batch, total_loss
from pde_arena.sampling import adam_init, adam_step, sample_rng
from pde_arena.training import TrainingDiverged, training_schedule


def short_plan(pid, adam=30, lbfgs=10, pretrain=0):
    return replace(run_plan(pid, "desk"), adam_epochs=adam, lbfgs_max_iter=lbfgs, pretrain_epochs=pretrain)


@pytest.mark.parametrize("seed", range(10))
def test_one_small_adam_step_decreases_loss(seed):
    p = get_problem("poisson1d")
    net = init_params((20, 20, 1), seed, 1)
    batch = sample_batch(p, sample_rng(seed))
    f0, g = value_and_grad(lambda q: total_loss(p, q, batch), net)
    _, theta = adam_step(adam_init(net.n_params, 1e-6), net.flat(), g)
    f1 = float(total_loss(p, net.with_flat(theta), batch))
    assert f1 < f0


def test_training_is_deterministic():
    p = get_problem("poisson1d")
    plan = short_plan("poisson1d")
    a = training_schedule(p, (8, 8, 1), 5, plan)
    b = training_schedule(p, (8, 8, 1), 5, plan)
    assert np.array_equal(a.params.flat(), b.params.flat())
    assert a.final_loss == b.final_loss
    c = training_schedule(p, (8, 8, 1), 6, plan)
    assert not np.array_equal(a.params.flat(), c.params.flat())


def test_training_reduces_loss_and_logs(tmp_path):
    p = get_problem("poisson1d")
    res = training_schedule(p, (10, 10, 1), 0, short_plan("poisson1d", adam=200, lbfgs=50), log_every=50)
    start = res.log[0]["loss"]
    assert res.final_loss < start
    assert res.solve_time > 0 and res.lbfgs_status in ("converged", "max_iter", "line_search_failed")
    phases = [row["phase"] for row in res.log]
    assert phases[0] == "adam" and "lbfgs" in phases and phases[-1] == "done"
    path = tmp_path / "log.jsonl"
    res.write_log(path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows == res.log
    assert all(set(r) == {"phase", "epoch", "loss", "wall_time"} for r in rows)
    times = [r["wall_time"] for r in rows]
    assert times == sorted(times)


def test_allen_cahn_pretrain_phase_runs_first():
    p = get_problem("allen_cahn1d", counts=(40, 8, 20))
    res = training_schedule(p, (6, 1), 0, short_plan("allen_cahn1d", adam=5, lbfgs=0, pretrain=5), log_every=1)
    phases = [row["phase"] for row in res.log]
    assert phases[:5] == ["pretrain"] * 5 and phases[5:10] == ["adam"] * 5
    assert res.lbfgs_status == "skipped"


def test_wrong_output_width_rejected():
    with pytest.raises(ValueError):
        training_schedule(get_problem("schrodinger1d"), (8, 1), 0, short_plan("schrodinger1d"))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reported():
    p = get_problem("poisson1d")
    plan = replace(short_plan("poisson1d", adam=5, lbfgs=0), lr=1e200)
    with pytest.raises(TrainingDiverged) as info:
        training_schedule(p, (4, 1), 0, plan)
    assert info.value.phase == "adam"


def test_checkpoint_round_trip_after_training():
    p = get_problem("poisson1d")
    res = training_schedule(p, (6, 6, 1), 2, short_plan("poisson1d", adam=10, lbfgs=5))
    params, seed = load_checkpoint(save_checkpoint(res.params, res.seed))
    assert seed == 2 and np.array_equal(params.flat(), res.params.flat())

"""PINN training: Adam with per-epoch resampling, then L-BFGS on a fixed batch."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .network import GradientError, MlpParams, init_params, value_and_grad
from .problems import ProblemSpec, RunPlan, ic_only_loss, run_plan, sample_batch, total_loss
from .sampling import adam_init, adam_step, lbfgs_minimize, sample_rng


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, phase: str, detail: str = ""):
        super().__init__(f"loss diverged in {phase} phase at epoch {epoch}{': ' + detail if detail else ''}")
        self.epoch = epoch
        self.phase = phase


@dataclass
class TrainingResult:
    params: MlpParams
    seed: int
    solve_time: float
    final_loss: float
    lbfgs_status: str
    log: list = field(default_factory=list)

    def write_log(self, path):
        with open(path, "w") as fh:
            for row in self.log:
                fh.write(json.dumps(row) + "\n")


def _adam_phase(phase, loss_fn, problem, params, epochs, lr, rng, log, t0, log_every):
    state = adam_init(params.n_params, lr)
    theta = params.flat()
    for epoch in range(epochs):
        batch = sample_batch(problem, rng)
        try:
            val, grad = value_and_grad(lambda p: loss_fn(problem, p, batch), params.with_flat(theta))
        except GradientError as exc:
            raise TrainingDiverged(epoch, phase, str(exc)) from None
        state, theta = adam_step(state, theta, grad)
        if epoch % log_every == 0 or epoch == epochs - 1:
            log.append({"phase": phase, "epoch": epoch, "loss": val, "wall_time": time.perf_counter() - t0})
    return params.with_flat(theta)


def training_schedule(problem: ProblemSpec, arch, seed: int, plan: RunPlan | None = None,
                      scale: str = "desk", lbfgs: bool = True, log_every: int = 100) -> TrainingResult:
    """Train one network on ``problem`` with the schedule from ``plan``.

    Phases: optional initial-condition pretraining (Allen-Cahn), Adam on the
    full loss with fresh Latin hypercube points every epoch, then L-BFGS on
    one fixed freshly sampled batch.  Each Adam phase starts from a fresh
    optimizer state.  The returned ``solve_time`` covers all phases.
    """
    plan = plan or run_plan(problem.id, scale)
    params = init_params(arch, seed, n_in=problem.n_in)
    if params.arch[-1] != problem.n_out:
        raise ValueError(f"{problem.id} needs {problem.n_out} outputs, architecture {tuple(arch)} has "
                         f"{params.arch[-1]}")
    rng = sample_rng(seed)
    log = []
    t0 = time.perf_counter()
    if plan.pretrain_epochs:
        params = _adam_phase("pretrain", ic_only_loss, problem, params, plan.pretrain_epochs, plan.lr,
                             rng, log, t0, log_every)
    params = _adam_phase("adam", total_loss, problem, params, plan.adam_epochs, plan.lr, rng, log, t0,
                         log_every)

    status = "skipped"
    batch = sample_batch(problem, rng)

    def fg(theta):
        try:
            return value_and_grad(lambda p: total_loss(problem, p, batch), params.with_flat(theta))
        except GradientError:
            return np.inf, np.zeros_like(theta)

    if lbfgs and plan.lbfgs_max_iter > 0:
        def note(k, _x, f):
            if k % log_every == 0:
                log.append({"phase": "lbfgs", "epoch": k, "loss": f, "wall_time": time.perf_counter() - t0})

        res = lbfgs_minimize(fg, params.flat(), max_iter=plan.lbfgs_max_iter,
                             grad_tol=plan.lbfgs_grad_tol, callback=note)
        params = params.with_flat(res.x)
        status = res.status
        final = float(res.fun)
    else:
        final = float(fg(params.flat())[0])
    elapsed = time.perf_counter() - t0
    if not np.isfinite(final):
        raise TrainingDiverged(plan.lbfgs_max_iter, "lbfgs", "non-finite final loss")
    log.append({"phase": "done", "epoch": -1, "loss": final, "wall_time": elapsed})
    return TrainingResult(params, int(seed), elapsed, final, status, log)

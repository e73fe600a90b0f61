"""Train a physics-informed network on 1D Poisson and set it against FEM.

Adam with fresh Latin hypercube points every epoch, then L-BFGS on a fixed
batch.  FEM on 256 cells reaches a smaller error in a fraction of the time.
"""

from pde_arena import get_problem, run_plan, training_schedule
from pde_arena.bench import run_benchmark
from pde_arena.sparse import warmup

warmup()
problem = get_problem("poisson1d")
plan = run_plan("poisson1d", "desk")
res = training_schedule(problem, (20, 20, 1), seed=0, plan=plan, log_every=250)
for row in res.log:
    print(f"  {row['phase']:7s} epoch {row['epoch']:5d}  loss {row['loss']:.3e}  {row['wall_time']:.2f} s")
print(f"L-BFGS status: {res.lbfgs_status}")

recs = run_benchmark(["poisson1d"], ["fem", "pinn"], repeats=1,
                     configs={("poisson1d", "fem"): [256], ("poisson1d", "pinn"): [(20, 20, 1)]})
for r in recs:
    print(f"{r.method:4s} {r.config:10s} solve {r.solve_time_s:.4f} s  eval {r.eval_time_s * 1e3:.3f} ms  "
          f"error {r.l2_rel_error:.2e}")

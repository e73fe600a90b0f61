"""Allen-Cahn phase separation in 1D.

The semi-implicit scheme solves one linear system per step.  The implicit
scheme runs Newton each step and is a discrete gradient flow: the
Ginzburg-Landau energy can only go down.
"""

import numpy as np

from pde_arena import get_problem, run_evolution
from pde_arena.bench import l2_relative_error
from pde_arena.mesh import build_interval_mesh
from pde_arena.sparse import warmup

warmup()
problem = get_problem("allen_cahn1d")
mesh = build_interval_mesh(1024)
times = [0.01, 0.02, 0.03, 0.04, 0.05]

energy = []
implicit, t_imp = run_evolution(problem, mesh, 2.5e-4, scheme="implicit", output_times=times,
                                on_step=lambda s, v, ops: energy.append(ops.energy(v[0])))
semi, t_semi = run_evolution(problem, mesh, 1e-3, output_times=times)

print(f"implicit: {len(energy)} Newton steps in {t_imp:.2f} s, semi-implicit: {t_semi:.3f} s")
print(f"energy {energy[0]:.5f} -> {energy[-1]:.5f}, monotone: {bool(np.all(np.diff(energy) <= 0))}")
for a, b in zip(semi, implicit):
    u = b.values[0]
    gap = l2_relative_error(a.values, b.values)
    print(f"t={b.t:.2f}  range [{u.min():.3f}, {u.max():.3f}]  semi vs implicit {gap:.2e}")

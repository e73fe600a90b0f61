"""Poisson with P1 elements in one, two and three dimensions.

Each problem has a closed-form solution, so the error on the evaluation grid
can be watched as the mesh is refined.  Halving h should cut the error by
about four.
"""

from pde_arena import get_problem, solve_stationary
from pde_arena.bench import ground_truth_values, l2_relative_error
from pde_arena.mesh import build_mesh
from pde_arena.fem import interpolate
from pde_arena.problems import evaluation_points
from pde_arena.sparse import warmup

warmup()
for pid, meshes, grid in [("poisson1d", (32, 64, 128, 256), (512,)),
                          ("poisson2d", (25, 50, 100), (200, 200)),
                          ("poisson3d", (8, 16, 32), (40, 40, 40))]:
    problem = get_problem(pid)
    pts = evaluation_points(problem, grid)
    exact = ground_truth_values(problem, pts)
    print(pid)
    prev = None
    for n in meshes:
        mesh = build_mesh(problem.dim, n, problem.box)
        field, seconds = solve_stationary(problem, mesh)
        err = l2_relative_error(interpolate(mesh, field.coefficients, pts), exact)
        ratio = "" if prev is None else f"  ratio {prev / err:.2f}"
        print(f"  n={n:4d}  nodes {mesh.n_nodes:7d}  solve {seconds * 1e3:8.2f} ms  error {err:.3e}{ratio}")
        prev = err

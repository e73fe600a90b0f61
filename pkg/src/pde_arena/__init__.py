"""FEM vs PINN benchmark lab.

P1 finite elements and physics-informed tanh networks, both written on plain
numpy, applied to six model problems (Poisson in 1-3D, Allen-Cahn 1D,
semilinear Schrödinger 1D/2D) under one timing and accuracy protocol.
"""

__version__ = "0.1.0"

from .mesh import Mesh, build_interval_mesh, build_mesh, build_tet_mesh, build_triangle_mesh  # noqa: E402
from .sparse import SparseMatrix, cg_solve, gmres_solve, ilu0_factor  # noqa: E402
from .fem import FemField, P1Space, assemble, interpolate, solve_stationary  # noqa: E402
from .network import MlpParams, forward, init_params, jet2, predict, value_and_grad  # noqa: E402
from .sampling import adam_step, lbfgs_minimize, lhs_sample  # noqa: E402
from .problems import PROBLEM_IDS, ProblemSpec, get_problem, run_plan, total_loss  # noqa: E402
from .timestep import (run_evolution, step_allen_cahn_implicit, step_allen_cahn_semi_implicit,  # noqa: E402
                       step_schrodinger_implicit, step_schrodinger_semi_implicit)
from .training import training_schedule  # noqa: E402
from .bench import BenchRecord, emit_report, ground_truth_values, l2_relative_error, run_benchmark  # noqa: E402

__all__ = [
    "Mesh", "build_interval_mesh", "build_triangle_mesh", "build_tet_mesh", "build_mesh",
    "SparseMatrix", "cg_solve", "gmres_solve", "ilu0_factor",
    "P1Space", "FemField", "assemble", "interpolate", "solve_stationary",
    "MlpParams", "init_params", "forward", "predict", "jet2", "value_and_grad",
    "lhs_sample", "adam_step", "lbfgs_minimize",
    "PROBLEM_IDS", "ProblemSpec", "get_problem", "run_plan", "total_loss",
    "run_evolution", "step_allen_cahn_semi_implicit", "step_allen_cahn_implicit",
    "step_schrodinger_semi_implicit", "step_schrodinger_implicit",
    "training_schedule",
    "l2_relative_error", "ground_truth_values", "run_benchmark", "emit_report", "BenchRecord",
]

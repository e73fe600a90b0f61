"""A small benchmark sweep written out as CSV, JSON, a pareto table and a summary.

Same machinery as ``pde-arena compare``, limited to FEM so it runs quickly.
"""

import sys
from pathlib import Path

from pde_arena import emit_report, run_benchmark

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_report")
recs = run_benchmark(["poisson1d", "poisson2d", "allen_cahn1d"], ["fem"], repeats=1,
                     progress=lambda r: print(f"{r.problem:13s} {r.config:8s} error {r.l2_rel_error:.3e}"))
for name, path in emit_report(recs, out).items():
    print(f"{name:8s} {path}")
print((out / "report.md").read_text())

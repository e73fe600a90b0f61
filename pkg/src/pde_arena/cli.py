"""Command-line front door.

    pde-arena gt build    --problem allen_cahn1d
    pde-arena fem solve   --problem poisson2d --n 100
    pde-arena pinn train  --problem poisson1d --arch 20,20,1 --seed 3
    pde-arena compare     --problem poisson1d --seed 7
    pde-arena report      --in out/records.json --format csv

Exit codes: 0 success, 1 a run failed, 2 usage error (including refused
resource requests).  ``PDE_ARENA_CACHE`` relocates the ground-truth cache.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .bench import BenchRecord, emit_report, records_from_json, run_benchmark
from .mesh import build_mesh
from .network import save_checkpoint
from .problems import PROBLEM_IDS, SCALES, get_problem, run_plan
from .timestep import write_trajectory

MAX_NODES = 4_000_000           # resource guard for a single FEM mesh
MAX_WIDTH = 4096


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors print the full help text and exit 2."""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"\n{self.prog}: error: {message}\n")


def _common(p, problem_many=False):
    if problem_many:
        p.add_argument("--problem", action="append", choices=PROBLEM_IDS + ("all",),
                       help="problem id, repeatable; 'all' selects every problem")
    else:
        p.add_argument("--problem", required=True, choices=PROBLEM_IDS, help="problem id")
    p.add_argument("--scale", choices=SCALES, default="desk",
                   help="desk (default, reduced schedules) or paper (full-length schedules)")
    p.add_argument("--accept-long-runtime", action="store_true",
                   help="required with --scale paper, which can run for hours or days")
    p.add_argument("--seed", type=int, default=0, help="network and sampling seed (default 0)")
    p.add_argument("--out", default="pde_arena_out", help="output directory (default pde_arena_out)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pde-arena", description="FEM vs PINN benchmark lab")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gt = sub.add_parser("gt", help="ground-truth management")
    gt_sub = gt.add_subparsers(dest="action", required=True, parser_class=_Parser)
    b = gt_sub.add_parser("build", help="build (or verify) the cached ground truth")
    _common(b)
    b.add_argument("--rebuild", action="store_true", help="recompute even if a cache entry exists")

    fem = sub.add_parser("fem", help="finite element runs")
    fem_sub = fem.add_subparsers(dest="action", required=True, parser_class=_Parser)
    s = fem_sub.add_parser("solve", help="solve one mesh and score it")
    _common(s)
    s.add_argument("--n", type=int, required=True, help="cells per axis")
    s.add_argument("--repeats", type=int, default=1, help="timing repeats (default 1)")
    s.add_argument("--format", choices=("csv", "json", "both"), default="both")

    pinn = sub.add_parser("pinn", help="physics-informed network runs")
    pinn_sub = pinn.add_subparsers(dest="action", required=True, parser_class=_Parser)
    t = pinn_sub.add_parser("train", help="train one network, save checkpoint, log and record")
    _common(t)
    t.add_argument("--arch", required=True, help="comma-separated widths, e.g. 20,20,1")
    t.add_argument("--format", choices=("csv", "json", "both"), default="both")

    c = sub.add_parser("compare", help="run FEM and PINN configurations and write reports")
    _common(c, problem_many=True)
    c.add_argument("--method", action="append", choices=("fem", "pinn"), help="repeatable; default both")
    c.add_argument("--repeats", type=int, default=None, help="timing repeats (manifest default)")
    c.add_argument("--parallel", type=int, default=0,
                   help="worker threads; records are then marked timing-invalid")
    c.add_argument("--format", choices=("csv", "json", "both"), default="both")

    r = sub.add_parser("report", help="re-emit reports from a records.json file")
    r.add_argument("--in", dest="inp", required=True, help="records.json from an earlier run")
    r.add_argument("--out", default=None, help="output directory (default: next to --in)")
    r.add_argument("--format", choices=("csv", "json", "both"), default="both")
    return ap


def _check_scale(args):
    if getattr(args, "scale", "desk") == "paper" and not args.accept_long_runtime:
        raise UsageError("--scale paper replays the full schedules; add --accept-long-runtime to confirm")


def _guard_mesh(problem, n):
    if n < 1:
        raise UsageError(f"--n must be positive, got {n}")
    nodes = (n + 1) ** problem.dim
    if nodes > MAX_NODES:
        raise UsageError(f"--n {n} gives {nodes:.3g} nodes in {problem.dim}D; the limit is {MAX_NODES:,}")


def _parse_arch(text):
    try:
        arch = tuple(int(w) for w in text.split(","))
    except ValueError:
        raise UsageError(f"--arch must be comma-separated integers, got {text!r}") from None
    if not arch or min(arch) < 1 or max(arch) > MAX_WIDTH:
        raise UsageError(f"--arch widths must lie in 1..{MAX_WIDTH}")
    return arch


def _finish(records, out, fmt):
    paths = emit_report(records, out, fmt)
    for name, path in paths.items():
        print(f"{name}: {path}")
    failed = [r for r in records if r.status != "ok"]
    for r in failed:
        print(f"FAILED {r.problem} {r.method} {r.config}: {r.message}", file=sys.stderr)
    return 1 if failed else 0


def _print_record(r: BenchRecord):
    if r.status == "ok":
        print(f"{r.problem:14s} {r.method:4s} {r.config:18s} solve {r.solve_time_s:.4g}s  "
              f"eval {r.eval_time_s:.4g}s  l2_rel {r.l2_rel_error:.4e}")
    else:
        print(f"{r.problem:14s} {r.method:4s} {r.config:18s} FAILED {r.message}")


def cmd_gt_build(args):
    problem = get_problem(args.problem, args.scale)
    plan = run_plan(args.problem, args.scale)
    gt = bench.ground_truth_for(plan, problem)
    if gt.kind == "analytic":
        print(f"{args.problem}: analytic ground truth, nothing to build")
        return 0
    vals = bench.load_ground_truth(problem, gt, rebuild=args.rebuild)
    bin_path, _ = bench._cache_paths(gt, bench.cache_dir())
    print(f"{args.problem}: n={gt.n} dt={gt.dt:.6g} snapshots {vals.shape} -> {bin_path}")
    return 0


def cmd_fem_solve(args):
    problem = get_problem(args.problem, args.scale)
    _guard_mesh(problem, args.n)
    plan = run_plan(args.problem, args.scale)
    recs = run_benchmark([args.problem], ["fem"], args.scale, args.repeats, args.seed,
                         configs={(args.problem, "fem"): [args.n]}, progress=_print_record)
    if problem.time_dependent and recs[0].status == "ok":
        from .problems import output_times
        from .timestep import run_evolution, step_count
        mesh = build_mesh(problem.dim, args.n, problem.box)
        steps = step_count(problem.T, plan.dt, plan.n_times)
        snaps, _ = run_evolution(problem, mesh, problem.T / steps, output_times=output_times(problem, plan.n_times))
        Path(args.out).mkdir(parents=True, exist_ok=True)
        path = Path(args.out) / f"{args.problem}_n{args.n}_trajectory.jsonl"
        write_trajectory(path, snaps)
        print(f"trajectory: {path}")
    return _finish(recs, args.out, args.format)


def cmd_pinn_train(args):
    problem = get_problem(args.problem, args.scale)
    arch = _parse_arch(args.arch)
    if arch[-1] != problem.n_out:
        raise UsageError(f"{args.problem} needs output width {problem.n_out}, --arch ends in {arch[-1]}")
    from .training import training_schedule
    res = training_schedule(problem, arch, args.seed, run_plan(args.problem, args.scale))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.problem}_{'-'.join(map(str, arch))}_seed{args.seed}"
    (out / f"{stem}.ckpt.json").write_text(save_checkpoint(res.params, args.seed))
    res.write_log(out / f"{stem}.log.jsonl")
    print(f"checkpoint: {out / (stem + '.ckpt.json')}")
    recs = [bench.score_trained(problem, run_plan(args.problem, args.scale), res)]
    _print_record(recs[0])
    return _finish(recs, out, args.format)


def cmd_compare(args):
    pids = args.problem or ["poisson1d"]
    pids = list(PROBLEM_IDS) if "all" in pids else list(dict.fromkeys(pids))
    methods = args.method or ["fem", "pinn"]
    if args.repeats is not None and args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    recs = run_benchmark(pids, methods, args.scale, args.repeats, args.seed, parallel=max(args.parallel, 0),
                         progress=_print_record)
    return _finish(recs, args.out, args.format)


def cmd_report(args):
    src = Path(args.inp)
    try:
        recs = records_from_json(src.read_text())
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot read records from {src}: {exc}") from None
    if not recs:
        raise UsageError(f"{src} holds no records")
    out = Path(args.out) if args.out else src.parent
    return _finish(recs, out, args.format)


COMMANDS = {("gt", "build"): cmd_gt_build, ("fem", "solve"): cmd_fem_solve,
            ("pinn", "train"): cmd_pinn_train, ("compare", None): cmd_compare, ("report", None): cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = COMMANDS[(args.command, getattr(args, "action", None))]
    try:
        _check_scale(args)
        return handler(args)
    except UsageError as exc:
        print(f"pde-arena: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:                      # a run failed
        print(f"pde-arena: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

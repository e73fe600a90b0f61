"""Ground truths, the error metric, the timing protocol and report files.

Timing scope
------------
* FEM solve time: operator assembly plus all linear (and Newton) solves.
  Mesh construction is excluded.
* PINN solve time: every training epoch including L-BFGS refinement.
* Evaluation time: FEM interpolation onto the evaluation grid, or PINN
  forward passes on the same grid.  Ground-truth work is never timed.

All timings are CPU wall-clock; records carry ``device = "cpu"``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .fem import interpolate, solve_stationary
from .mesh import build_mesh
from .problems import (PROBLEM_IDS, ProblemSpec, RunPlan, evaluate_pinn, evaluation_points, get_problem,
                       output_times, run_plan, space_time_points)
from .sparse import warmup
from .timestep import run_evolution, step_count
from .training import training_schedule

SCHEMA_VERSION = "v1"
CSV_COLUMNS = ("problem", "method", "config", "solve_time_s", "eval_time_s", "l2_rel_error", "repeats", "seed")
PARETO_COLUMNS = ("problem", "method", "config", "fem_solve_time_s", "pinn_train_time_s", "fem_eval_time_s",
                  "pinn_eval_time_s", "l2_rel_error", "pareto_solve", "pareto_eval")
TIMING_SCOPE = __doc__.split("Timing scope\n------------\n")[1].strip()


class GroundTruthCacheError(RuntimeError):
    pass


def l2_relative_error(approx, reference) -> float:
    """``||approx - reference||_2 / ||reference||_2`` over all entries."""
    a = np.asarray(approx, dtype=float).ravel()
    r = np.asarray(reference, dtype=float).ravel()
    if a.shape != r.shape:
        raise ValueError(f"length mismatch: {a.size} vs {r.size}")
    nr = np.linalg.norm(r)
    if nr == 0.0:
        raise ValueError("reference has zero norm")
    return float(np.linalg.norm(a - r) / nr)


# ---------------------------------------------------------------------------
# ground truth

@dataclass(frozen=True)
class GroundTruth:
    problem: str
    kind: str                        # analytic | fine_fem
    n: int = 0
    dt: float = 0.0
    scheme: str = "implicit"
    n_times: int = 0

    def key(self) -> dict:
        return {"problem": self.problem, "kind": self.kind, "n": self.n, "dt": float(self.dt).hex(),
                "scheme": self.scheme, "n_times": self.n_times, "version": 1}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.key(), sort_keys=True).encode()).hexdigest()[:20]


def ground_truth_for(plan: RunPlan, problem: ProblemSpec) -> GroundTruth:
    g = plan.ground_truth
    if g["kind"] == "analytic":
        return GroundTruth(plan.problem, "analytic")
    steps = step_count(problem.T, g["dt"], plan.n_times)
    gt = GroundTruth(plan.problem, "fine_fem", int(g["n"]), problem.T / steps, "implicit", plan.n_times)
    finest = max(plan.meshes)
    if gt.n <= finest:
        raise ValueError(f"ground-truth mesh n={gt.n} is not finer than benchmark mesh n={finest}")
    return gt


def cache_dir() -> Path:
    root = os.environ.get("PDE_ARENA_CACHE")
    return Path(root) if root else Path.home() / ".cache" / "pde_arena"


def _cache_paths(gt: GroundTruth, root: Path):
    base = root / "gt" / gt.problem / gt.digest()
    return base.with_suffix(".bin"), base.with_suffix(".meta.json")


def _gt_mesh(problem: ProblemSpec, n: int):
    return build_mesh(problem.dim, n, problem.box)


def build_ground_truth(problem: ProblemSpec, gt: GroundTruth) -> np.ndarray:
    """Nodal snapshots of the fine implicit run, shape (n_times, comps, nodes)."""
    mesh = _gt_mesh(problem, gt.n)
    times = output_times(problem, gt.n_times)
    snaps, _ = run_evolution(problem, mesh, gt.dt, scheme=gt.scheme, output_times=times)
    return np.stack([s.values for s in snaps])


def load_ground_truth(problem: ProblemSpec, gt: GroundTruth, root: Path | None = None,
                      rebuild: bool = False) -> np.ndarray:
    """Cached fine-FEM snapshots, built on first use.

    The payload is raw little-endian float64; the companion metadata holds
    its shape and sha256.  A hash mismatch raises
    :class:`GroundTruthCacheError` unless ``rebuild`` is set.
    """
    root = Path(root) if root is not None else cache_dir()
    bin_path, meta_path = _cache_paths(gt, root)
    if bin_path.exists() and meta_path.exists() and not rebuild:
        meta = json.loads(meta_path.read_text())
        raw = bin_path.read_bytes()
        if hashlib.sha256(raw).hexdigest() != meta["sha256"]:
            raise GroundTruthCacheError(f"ground-truth cache {bin_path} failed its content hash")
        return np.frombuffer(raw, dtype="<f8").reshape(meta["shape"]).copy()
    vals = build_ground_truth(problem, gt)
    raw = vals.astype("<f8").tobytes()
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = bin_path.with_suffix(".tmp")
    tmp.write_bytes(raw)
    tmp.replace(bin_path)
    meta_path.write_text(json.dumps({**gt.key(), "shape": list(vals.shape),
                                     "sha256": hashlib.sha256(raw).hexdigest()}, indent=1))
    return vals


def ground_truth_values(problem: ProblemSpec, points, times=None, gt: GroundTruth | None = None,
                        root: Path | None = None) -> np.ndarray:
    """Reference values at spatial ``points``.

    Poisson problems return ``exact(points)``.  Evolution problems return
    an array (n_times, n_points[, 2]) at the requested ``times``, which must
    be among the ground-truth output times or 0 (the initial condition).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, problem.dim)
    if not problem.time_dependent:
        return problem.exact(pts)
    if times is None:
        raise ValueError("evolution problems need output times")
    out = []
    snaps = None
    grid_times = None
    for t in np.atleast_1d(times):
        if t == 0.0:
            out.append(np.asarray(problem.initial(pts), dtype=float))
            continue
        if snaps is None:
            if gt is None:
                raise ValueError("a GroundTruth descriptor is required for t > 0")
            snaps = load_ground_truth(problem, gt, root)
            grid_times = output_times(problem, gt.n_times)
            mesh = _gt_mesh(problem, gt.n)
        hit = np.flatnonzero(np.isclose(grid_times, t, rtol=0, atol=1e-12))
        if hit.size != 1:
            raise ValueError(f"time {t} is not a ground-truth output time")
        vals = interpolate(mesh, snaps[hit[0]], pts)          # (comps, n_points)
        out.append(vals[0] if vals.shape[0] == 1 else vals.T)
    return np.stack(out)


# ---------------------------------------------------------------------------
# records

def machine_info() -> dict:
    return {"platform": platform.platform(), "python": platform.python_version(),
            "numpy": np.__version__, "cpu_count": os.cpu_count(), "device": "cpu",
            "pde_arena": __version__}


@dataclass
class BenchRecord:
    problem: str
    method: str                      # fem | pinn
    config: str
    solve_time_s: float | None
    eval_time_s: float | None
    l2_rel_error: float | None
    repeats: int
    seed: int
    solve_times: list = field(default_factory=list)
    eval_times: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""
    timing_valid: bool = True
    timestamp: str = ""
    machine: dict = field(default_factory=dict)
    schema: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchRecord":
        return cls(**d)


_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
RECORD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "BenchRecord",
    "type": "object",
    "required": ["schema", "problem", "method", "config", "solve_time_s", "eval_time_s", "l2_rel_error",
                 "repeats", "seed", "solve_times", "eval_times", "status", "timing_valid", "timestamp",
                 "machine"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "problem": {"enum": list(PROBLEM_IDS)},
        "method": {"enum": ["fem", "pinn"]},
        "config": {"type": "string", "minLength": 1},
        "solve_time_s": _NUM_OR_NULL,
        "eval_time_s": _NUM_OR_NULL,
        "l2_rel_error": _NUM_OR_NULL,
        "repeats": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "solve_times": {"type": "array", "items": _NUM},
        "eval_times": {"type": "array", "items": _NUM},
        "metrics": {"type": "object", "additionalProperties": _NUM},
        "details": {"type": "object"},
        "status": {"enum": ["ok", "failed"]},
        "message": {"type": "string"},
        "timing_valid": {"type": "boolean"},
        "timestamp": {"type": "string"},
        "machine": {"type": "object", "required": ["device"], "properties": {"device": {"const": "cpu"}}},
    },
    "if": {"properties": {"status": {"const": "ok"}}},
    "then": {"properties": {"solve_time_s": {"type": "number", "exclusiveMinimum": 0},
                            "eval_time_s": {"type": "number", "exclusiveMinimum": 0},
                            "l2_rel_error": {"type": "number", "minimum": 0}}},
    "additionalProperties": False,
}
RECORDS_SCHEMA = {"type": "array", "items": RECORD_SCHEMA}


# ---------------------------------------------------------------------------
# running

@dataclass
class _Target:
    """Evaluation grid and reference values for one problem."""

    problem: ProblemSpec
    points: np.ndarray               # spatial grid
    times: np.ndarray | None
    reference: np.ndarray
    gt: GroundTruth


def _target(problem: ProblemSpec, plan: RunPlan, root=None) -> _Target:
    gt = ground_truth_for(plan, problem)
    pts = evaluation_points(problem, plan.grid)
    times = output_times(problem, plan.n_times) if problem.time_dependent else None
    ref = ground_truth_values(problem, pts, times, gt, root)
    return _Target(problem, pts, times, ref, gt)


def _errors(problem: ProblemSpec, approx, reference) -> tuple:
    """Primary error plus per-part metrics (Schrödinger: modulus, real, imag)."""
    if problem.n_out == 1:
        e = l2_relative_error(approx, reference)
        return e, {"l2_rel_error": e}
    m = {"l2_rel_error_re": l2_relative_error(approx[..., 0], reference[..., 0]),
         "l2_rel_error_im": l2_relative_error(approx[..., 1], reference[..., 1]),
         "l2_rel_error_abs": l2_relative_error(np.hypot(approx[..., 0], approx[..., 1]),
                                               np.hypot(reference[..., 0], reference[..., 1]))}
    return m["l2_rel_error_abs"], m


def _fem_once(problem, plan, n, target):
    mesh = build_mesh(problem.dim, n, problem.box)
    if not problem.time_dependent:
        field_, solve_t = solve_stationary(problem, mesh)
        t0 = time.perf_counter()
        vals = interpolate(mesh, field_.coefficients, target.points)
        return vals, solve_t, time.perf_counter() - t0, {}
    steps = step_count(problem.T, plan.dt, plan.n_times)
    dt = problem.T / steps
    snaps, solve_t = run_evolution(problem, mesh, dt, scheme="semi_implicit", output_times=target.times)
    t0 = time.perf_counter()
    nodal = np.stack([s.values for s in snaps])                     # (K, comps, nodes)
    vals = interpolate(mesh, nodal, target.points)                  # (K, comps, P)
    eval_t = time.perf_counter() - t0
    vals = vals[:, 0] if problem.n_out == 1 else np.moveaxis(vals, 1, 2)
    return vals, solve_t, eval_t, {"dt": dt, "steps": steps}


def _pinn_once(problem, plan, arch, seed, target):
    return _pinn_scored(training_schedule(problem, arch, seed, plan), target)


def _pinn_scored(res, target):
    pts = target.points if target.times is None else space_time_points(target.times, target.points)
    vals, eval_t = evaluate_pinn(res.params, pts)
    if target.times is not None:
        vals = vals.reshape(len(target.times), len(target.points), *vals.shape[1:])
    info = {"final_loss": res.final_loss, "lbfgs_status": res.lbfgs_status}
    return vals, res.solve_time, eval_t, info


def _config_name(method, cfg) -> str:
    return f"n={cfg}" if method == "fem" else "[" + ",".join(str(int(w)) for w in cfg) + "]"


def _run_config(problem, plan, method, cfg, repeats, seed, target, timing_valid=True,
                trained=None) -> BenchRecord:
    name = _config_name(method, cfg)
    details = {"scale": plan.scale, "grid": list(plan.grid)}
    if target.times is not None:
        details["output_times"] = [float(t) for t in target.times]
        details["ground_truth"] = target.gt.key()
    if method == "pinn":
        details.update(adam_epochs=plan.adam_epochs, pretrain_epochs=plan.pretrain_epochs, lr=plan.lr,
                       lbfgs_max_iter=plan.lbfgs_max_iter, counts=list(problem.counts))
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    solve_ts, eval_ts = [], []
    try:
        for _ in range(repeats):
            if method == "fem":
                vals, st, et, info = _fem_once(problem, plan, cfg, target)
            elif trained is not None:
                vals, st, et, info = _pinn_scored(trained, target)
            else:
                vals, st, et, info = _pinn_once(problem, plan, cfg, seed, target)
            solve_ts.append(st)
            eval_ts.append(et)
        err, metrics = _errors(problem, vals, target.reference)
        details.update(info)
    except Exception as exc:                       # recorded, not fatal to the batch
        return BenchRecord(problem.id, method, name, None, None, None, repeats, seed, solve_ts, eval_ts,
                           {}, details, "failed", f"{type(exc).__name__}: {exc}", timing_valid, stamp,
                           machine_info())
    return BenchRecord(problem.id, method, name, float(np.mean(solve_ts)), float(np.mean(eval_ts)), err,
                       repeats, seed, solve_ts, eval_ts, metrics, details, "ok", "", timing_valid, stamp,
                       machine_info())


def score_trained(problem: ProblemSpec, plan: RunPlan, result, cache_root=None) -> BenchRecord:
    """Record for a network that was already trained (one repeat, its own solve time)."""
    target = _target(problem, plan, cache_root)
    return _run_config(problem, plan, "pinn", result.params.arch, 1, result.seed, target, trained=result)


def run_benchmark(problems=("poisson1d",), methods=("fem", "pinn"), scale: str = "desk",
                  repeats: int | None = None, seed: int = 0, configs: dict | None = None,
                  parallel: int = 0, cache_root=None, progress=None) -> list:
    """Solve, evaluate and score every selected configuration.

    Parameters
    ----------
    problems, methods : sequences of str
        Selection.
    scale : {"desk", "paper"}
    repeats : int, optional
        Timing repeats per configuration; the manifest default otherwise.
    seed : int
        Network seed (also fixes the collocation stream).
    configs : dict, optional
        ``{(problem, method): [configs]}`` overriding the manifest lists.
    parallel : int
        Worker threads.  Anything above 0 marks the records timing-invalid.
    progress : callable, optional
        Called with each finished record.
    """
    warmup()
    jobs = []
    for pid in problems:
        plan = run_plan(pid, scale)
        problem = get_problem(pid, scale)
        target = _target(problem, plan, cache_root)
        for method in methods:
            if method not in ("fem", "pinn"):
                raise ValueError(f"unknown method {method!r}")
            default = plan.meshes if method == "fem" else plan.architectures
            for cfg in (configs or {}).get((pid, method), default):
                jobs.append((problem, plan, method, cfg, target))
    reps = lambda plan: plan.repeats if repeats is None else int(repeats)   # noqa: E731
    if parallel > 0:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(lambda j: _run_config(*j[:4], reps(j[1]), seed, j[4], False), jobs))
        for r in records:
            if progress:
                progress(r)
        return records
    records = []
    for problem, plan, method, cfg, target in jobs:
        rec = _run_config(problem, plan, method, cfg, reps(plan), seed, target)
        records.append(rec)
        if progress:
            progress(rec)
    return records


# ---------------------------------------------------------------------------
# reports

def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        row = r.to_dict()
        w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                    for c in CSV_COLUMNS])
    return buf.getvalue()


def records_to_json(records) -> str:
    return json.dumps([r.to_dict() for r in records], indent=1)


def records_from_json(text: str) -> list:
    return [BenchRecord.from_dict(d) for d in json.loads(text)]


def _front(points):
    """Indices of points not dominated in (time, error), both minimized."""
    keep = []
    for i, (t, e) in enumerate(points):
        dominated = any((t2 <= t and e2 <= e) and (t2 < t or e2 < e) for j, (t2, e2) in enumerate(points)
                        if j != i)
        keep.append(not dominated)
    return keep


def pareto_table(records) -> list:
    """One row per (problem, method, config) with solve and eval time split by method."""
    rows = {}
    for r in records:
        if r.status != "ok":
            continue
        rows[(r.problem, r.method, r.config)] = r          # later records win
    table = []
    for (pid, method, cfg), r in rows.items():
        fem = method == "fem"
        table.append({"problem": pid, "method": method, "config": cfg,
                      "fem_solve_time_s": r.solve_time_s if fem else None,
                      "pinn_train_time_s": None if fem else r.solve_time_s,
                      "fem_eval_time_s": r.eval_time_s if fem else None,
                      "pinn_eval_time_s": None if fem else r.eval_time_s,
                      "l2_rel_error": r.l2_rel_error})
    for pid in {row["problem"] for row in table}:
        sub = [row for row in table if row["problem"] == pid]
        solve = _front([(row["fem_solve_time_s"] or row["pinn_train_time_s"], row["l2_rel_error"]) for row in sub])
        ev = _front([(row["fem_eval_time_s"] or row["pinn_eval_time_s"], row["l2_rel_error"]) for row in sub])
        for row, a, b in zip(sub, solve, ev):
            row["pareto_solve"], row["pareto_eval"] = a, b
    table.sort(key=lambda row: (PROBLEM_IDS.index(row["problem"]), row["method"], row["config"]))
    return table


def _table_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if row.get(k) is None else row[k]) for k in columns})
    return buf.getvalue()


def emit_report(records, out_dir, fmt: str = "both") -> dict:
    """Write records (CSV and/or JSON), the pareto table and a short summary.

    Returns a mapping from artifact name to path.
    """
    if not records:
        raise ValueError("no records to report")
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"format must be csv, json or both, got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    if fmt in ("csv", "both"):
        written["csv"] = out / "records.csv"
        written["csv"].write_text(records_to_csv(records))
    if fmt in ("json", "both"):
        written["json"] = out / "records.json"
        written["json"].write_text(records_to_json(records))
    table = pareto_table(records)
    written["pareto"] = out / "pareto.csv"
    written["pareto"].write_text(_table_csv(table, PARETO_COLUMNS))
    lines = ["# Benchmark summary", "", "Timing scope:", "", TIMING_SCOPE, "",
             "| problem | method | config | solve s | eval s | l2 rel. error | status |",
             "|---|---|---|---|---|---|---|"]
    for r in records:
        fmt_num = lambda v: "-" if v is None else f"{v:.3g}"     # noqa: E731
        lines.append(f"| {r.problem} | {r.method} | {r.config} | {fmt_num(r.solve_time_s)} | "
                     f"{fmt_num(r.eval_time_s)} | {fmt_num(r.l2_rel_error)} | {r.status} |")
    written["summary"] = out / "report.md"
    written["summary"].write_text("\n".join(lines) + "\n")
    return written

"""Experiment runners: single solves, parameter sweeps, convergence and coupled-limit studies."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from beckmann.assembly import ProblemData, residual
from beckmann.config import Config
from beckmann.flow import (
    FlowField,
    divergence_residual,
    downsample,
    duality_gap,
    primal_energy,
    recover_flow,
    transport_cost,
)
from beckmann.model import RegParams
from beckmann.output import write_flow_csv, write_json, write_quiver_svg, write_report_json
from beckmann.problems import generate_problem
from beckmann.solver import SolveReport, SolverError, SolverOptions, newton_solve

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    params: RegParams
    y: np.ndarray
    report: SolveReport
    flow: FlowField
    metrics: dict
    error: Optional[str] = None

    @property
    def termination(self) -> str:
        return self.report.termination


def solve_problem(problem: ProblemData, opts: SolverOptions) -> RunResult:
    """Solve and post-process; solver failures are recorded rather than raised."""
    error = None
    try:
        y, report = newton_solve(problem, opts)
    except SolverError as exc:
        y, report, error = exc.y, exc.report, str(exc)
        log.warning("solve failed (epsilon=%g, delta=%g): %s", problem.params.epsilon, problem.params.delta, exc)
    flow = recover_flow(problem, y)
    objective = report.records[-1].objective
    metrics = {
        "epsilon": problem.params.epsilon,
        "delta": problem.params.delta,
        "alpha": problem.params.alpha,
        "termination": report.termination,
        "iterations": report.iterations,
        "residual": residual(problem, y),
        "objective": objective,
        "transport_cost": transport_cost(problem, flow),
        "primal_energy": primal_energy(problem, flow),
        "duality_gap": duality_gap(problem, y, flow),
        "divergence_residual": divergence_residual(problem, flow),
        "max_arrow_norm": downsample(flow).max_norm,
    }
    return RunResult(problem.params, y, report, flow, metrics, error)


def run_report(cfg: Config, result: RunResult) -> dict:
    """Report document: resolved config echo, iteration log and summary metrics (no timings)."""
    doc = {
        "config": cfg.with_params(result.params.epsilon, result.params.delta).to_dict(),
        "solve": result.report.to_dict(include_timings=False),
        "metrics": result.metrics,
    }
    if result.error:
        doc["error"] = result.error
    return doc


def run_tag(params: RegParams) -> str:
    return f"eps_{params.epsilon:.0e}_delta_{params.delta:.0e}"


def emit(cfg: Config, problem: ProblemData, result: RunResult, out_dir, name: str) -> dict[str, Path]:
    """Write the outputs enabled in ``cfg.output``; timings go to a separate sidecar file."""
    out_dir = Path(out_dir)
    paths = {}
    if cfg.output.report:
        paths["report"] = write_report_json(run_report(cfg, result), out_dir / f"{name}_report.json")
        paths["timings"] = write_json(
            {"wall_time": [r.wall_time for r in result.report.records]}, out_dir / f"{name}_timings.json"
        )
    if cfg.output.csv:
        paths["csv"] = write_flow_csv(result.flow, out_dir / f"{name}_flow.csv")
    if cfg.output.svg:
        title = f"epsilon={result.params.epsilon:g}, delta={result.params.delta:g}"
        paths["svg"] = write_quiver_svg(result.flow, problem, out_dir / f"{name}_quiver.svg", title=title)
    return paths


def solve_config(cfg: Config, out_dir=None) -> RunResult:
    problem = generate_problem(cfg)
    result = solve_problem(problem, cfg.solver)
    if out_dir is not None:
        emit(cfg, problem, result, out_dir, cfg.output.name)
    return result


@dataclass
class StudyResult:
    records: dict[tuple[float, float], dict] = field(default_factory=dict)
    runs: dict[tuple[float, float], RunResult] = field(default_factory=dict, repr=False)

    def table(self) -> list[dict]:
        return [self.records[k] for k in self.records]


def _solve_task(args):
    problem, opts = args
    return solve_problem(problem, opts)


def _solve_many(problems: list[ProblemData], opts: SolverOptions, workers: int) -> list[RunResult]:
    tasks = [(p, opts) for p in problems]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_solve_task, tasks))
    return [_solve_task(t) for t in tasks]


SUMMARY_KEYS = [
    "epsilon",
    "delta",
    "termination",
    "iterations",
    "residual",
    "objective",
    "transport_cost",
    "duality_gap",
    "divergence_residual",
    "max_arrow_norm",
]


def _write_table(rows: list[dict], keys: list[str], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(format(v, ".17g") if isinstance(v, float) else str(v) for v in (row[k] for k in keys)))
    path.write_text("\n".join(lines) + "\n")
    return path


def run_sweep(
    cfg: Config,
    epsilons: Iterable[float],
    deltas: Iterable[float],
    out_dir=None,
    workers: int = 1,
) -> StudyResult:
    """Independent solves on the grid ``epsilons x deltas`` sharing one mesh."""
    pairs = list(itertools.product(epsilons, deltas))
    study = StudyResult()
    if not pairs:
        return study
    base = generate_problem(cfg)
    problems = [base.with_params(RegParams(e, d, cfg.params.alpha)) for e, d in pairs]
    for (e, d), problem, result in zip(pairs, problems, _solve_many(problems, cfg.solver, workers)):
        study.records[(e, d)] = result.metrics
        study.runs[(e, d)] = result
        if out_dir is not None:
            emit(cfg.with_params(e, d), problem, result, out_dir, f"{cfg.output.name}_{run_tag(result.params)}")
    if out_dir is not None:
        out_dir = Path(out_dir)
        _write_table(study.table(), SUMMARY_KEYS, out_dir / f"{cfg.output.name}_summary.csv")
        write_json({"records": study.table()}, out_dir / f"{cfg.output.name}_summary.json")
    return study


@dataclass
class ConvergenceTable:
    rows: list[dict] = field(default_factory=list)
    hit_max_iters: dict[tuple[float, float], bool] = field(default_factory=dict)
    terminations: dict[tuple[float, float], str] = field(default_factory=dict)

    def series(self, epsilon: float, delta: float) -> np.ndarray:
        return np.array([r["residual"] for r in self.rows if (r["epsilon"], r["delta"]) == (epsilon, delta)])


CONVERGENCE_KEYS = ["epsilon", "delta", "iteration", "residual", "objective", "step", "backtracks"]


def run_convergence_study(
    cfg: Config,
    pairs: Optional[Iterable[tuple[float, float]]] = None,
    out_dir=None,
    workers: int = 1,
) -> ConvergenceTable:
    """Residual-versus-iteration series for each ``(epsilon, delta)`` pair (default: the config's)."""
    pairs = [(cfg.params.epsilon, cfg.params.delta)] if pairs is None else list(pairs)
    table = ConvergenceTable()
    if not pairs:
        return table
    base = generate_problem(cfg)
    problems = [base.with_params(RegParams(e, d, cfg.params.alpha)) for e, d in pairs]
    for (e, d), result in zip(pairs, _solve_many(problems, cfg.solver, workers)):
        for rec in result.report.records:
            table.rows.append(
                {
                    "epsilon": e,
                    "delta": d,
                    "iteration": rec.iteration,
                    "residual": rec.residual,
                    "objective": rec.objective,
                    "step": "" if rec.step is None else rec.step,
                    "backtracks": rec.backtracks,
                }
            )
        table.hit_max_iters[(e, d)] = result.termination == "max_iters"
        table.terminations[(e, d)] = result.termination
        if table.hit_max_iters[(e, d)]:
            log.warning("epsilon=%g, delta=%g hit max_iters=%d", e, d, cfg.solver.max_iters)
    if out_dir is not None:
        _write_table(table.rows, CONVERGENCE_KEYS, Path(out_dir) / f"{cfg.output.name}_convergence.csv")
        write_json(
            {"terminations": [{"epsilon": e, "delta": d, "termination": t} for (e, d), t in table.terminations.items()]},
            Path(out_dir) / f"{cfg.output.name}_convergence_flags.json",
        )
    return table


def gamma_schedule(n: int) -> tuple[float, float]:
    """``(epsilon_n, delta_n) = (4^-n, 2^-n)``."""
    return 4.0**-n, 2.0**-n


def coupling(epsilon: float, delta: float, alpha: float) -> float:
    """``epsilon * h(delta)^alpha`` with ``h(delta) = delta^(-1/2)``."""
    return epsilon * delta ** (-alpha / 2.0)


def point_transport_reference(cfg: Config) -> Optional[float]:
    """Closed-form cost ``w * |a - b|`` for constant cost and two single-cell marginals."""
    if cfg.cost["type"] != "constant" or cfg.mu_plus["type"] != "cell" or cfg.mu_minus["type"] != "cell":
        return None
    problem = generate_problem(cfg)
    centers = problem.mesh.cell_centers
    a = centers[np.argmax(problem.mu_plus)]
    b = centers[np.argmax(problem.mu_minus)]
    return float(cfg.cost["value"] * np.linalg.norm(a - b))


GAMMA_KEYS = [
    "n",
    "epsilon",
    "delta",
    "coupling",
    "transport_cost",
    "distance_to_last",
    "distance_to_reference",
    "iterations",
    "termination",
]


def run_gamma_study(
    cfg: Config,
    n_max: int,
    reference: Optional[float] = None,
    out_dir=None,
    workers: int = 1,
) -> list[dict]:
    """Solve along ``epsilon_n = 4^-n, delta_n = 2^-n`` for ``n = 1..n_max``, each from ``y = 0``."""
    if n_max < 1:
        return []
    ns = list(range(1, n_max + 1))
    base = generate_problem(cfg)
    problems = [base.with_params(RegParams(*gamma_schedule(n), cfg.params.alpha)) for n in ns]
    results = _solve_many(problems, cfg.solver, workers)
    last = results[-1].metrics["transport_cost"]
    rows = []
    for n, result in zip(ns, results):
        m = result.metrics
        rows.append(
            {
                "n": n,
                "epsilon": m["epsilon"],
                "delta": m["delta"],
                "coupling": coupling(m["epsilon"], m["delta"], m["alpha"]),
                "transport_cost": m["transport_cost"],
                "distance_to_last": abs(m["transport_cost"] - last),
                "distance_to_reference": "" if reference is None else abs(m["transport_cost"] - reference),
                "iterations": m["iterations"],
                "termination": m["termination"],
            }
        )
    if out_dir is not None:
        _write_table(rows, GAMMA_KEYS, Path(out_dir) / f"{cfg.output.name}_gamma.csv")
    return rows

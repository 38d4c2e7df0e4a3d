"""Semi-smooth Newton iteration with Armijo backtracking for the discrete dual energy."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from beckmann.assembly import (
    ProblemData,
    assemble_A,
    assemble_b,
    objective,
    objective_change,
    relative_defect,
)

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILED = "line_search_failed"
LINEAR_SOLVE_FAILED = "linear_solve_failed"


@dataclass(frozen=True)
class SolverOptions:
    sigma0: float = 1.0
    beta: float = 0.5
    gamma: float = 0.1
    tol: float = 1e-8
    max_iters: int = 1000
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if self.max_iters < 0 or self.max_backtracks < 0:
            raise ValueError("iteration limits must be nonnegative")


@dataclass
class IterationRecord:
    iteration: int
    residual: float
    objective: float
    step: Optional[float] = None  # step taken from this iterate, None for the last one
    backtracks: int = 0
    wall_time: float = 0.0


@dataclass
class SolveReport:
    records: list[IterationRecord] = field(default_factory=list)
    termination: str = MAX_ITERS

    @property
    def iterations(self) -> int:
        """Number of Newton steps taken."""
        return max(len(self.records) - 1, 0)

    @property
    def converged(self) -> bool:
        return self.termination == CONVERGED

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def to_dict(self, include_timings: bool = False) -> dict:
        records = []
        for rec in self.records:
            d = asdict(rec)
            if not include_timings:
                d.pop("wall_time")
            records.append(d)
        return {"termination": self.termination, "iterations": self.iterations, "records": records}


class SolverError(RuntimeError):
    """Base class for failures that carry the partial :class:`SolveReport`."""

    def __init__(self, message: str, report: Optional[SolveReport] = None, y=None):
        super().__init__(message)
        self.report = report
        self.y = y


class LinearSolveError(SolverError):
    def __init__(self, message: str, achieved_residual: float = np.inf, **kw):
        super().__init__(message, **kw)
        self.achieved_residual = achieved_residual


class LineSearchError(SolverError):
    pass


def bordered_matrix(A: sps.spmatrix, M: sps.spmatrix) -> sps.csc_matrix:
    m1 = np.asarray(M.sum(axis=1)).reshape(-1, 1)
    return sps.bmat([[A, sps.csr_matrix(m1)], [sps.csr_matrix(m1.T), None]], format="csc")


def solve_saddle(
    A: sps.spmatrix, M: sps.spmatrix, rhs: np.ndarray, rtol: float = 1e-9, refine: int = 3
) -> tuple[np.ndarray, float]:
    """Solve ``[[A, M1], [1^T M, 0]] [eta; r] = [rhs; 0]`` by sparse LU.

    Up to ``refine`` steps of iterative refinement are applied while the
    residual exceeds ``rtol * |rhs|``. A solution that misses ``rtol`` but sits
    at the backward-error floor ``100 * eps * |K|_1 * |x|`` of the
    factorization is accepted with a warning; anything worse raises
    :class:`LinearSolveError`.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    if not np.any(rhs):
        return np.zeros(n), 0.0
    K = bordered_matrix(A, M)
    full_rhs = np.append(rhs, 0.0)
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
        sol = lu.solve(full_rhs)
    except RuntimeError as exc:
        raise LinearSolveError(f"factorization of the saddle-point system failed: {exc}") from exc
    scale = np.linalg.norm(rhs)
    target = rtol * scale

    def defect(x):
        return np.linalg.norm(K @ x - full_rhs) if np.all(np.isfinite(x)) else np.inf

    res = defect(sol)
    for _ in range(refine):
        if res <= target:
            break
        cand = sol + lu.solve(full_rhs - K @ sol)
        cand_res = defect(cand)
        if not cand_res < res:
            break
        sol, res = cand, cand_res
    if res > target:
        floor = 100 * np.finfo(float).eps * spla.norm(K, 1) * np.linalg.norm(sol)
        if not res <= floor:
            raise LinearSolveError(
                f"saddle-point residual {res:.3e} exceeds {rtol:.1e} * |rhs| = {target:.3e}",
                achieved_residual=float(res / scale),
            )
        log.info(
            "ill-conditioned saddle-point system: relative residual %.2e (target %.0e) at the rounding floor",
            res / scale,
            rtol,
        )
    return sol[:n], float(sol[n])


class LineSearchResult(NamedTuple):
    sigma: float
    backtracks: int
    change: float  # f(x + sigma d) - f(x)


def backtrack(
    change: Callable[[float], float],
    slope: float,
    opts: SolverOptions,
) -> LineSearchResult:
    """Armijo backtracking on ``phi(sigma) = f(x + sigma d) - f(x)``.

    ``change(sigma)`` returns ``phi(sigma)`` and ``slope`` is ``phi'(0)``.
    Shrinks ``sigma`` from ``opts.sigma0`` by ``opts.beta`` while
    ``phi(sigma) > gamma * sigma * slope``.
    """
    if not slope < 0:
        raise LineSearchError(f"direction is not a descent direction (slope {slope:.3e} >= 0)")
    sigma = opts.sigma0
    for k in range(opts.max_backtracks + 1):
        value = change(sigma)
        if value <= opts.gamma * sigma * slope:
            return LineSearchResult(sigma, k, value)
        sigma *= opts.beta
    raise LineSearchError(
        f"Armijo condition not met after {opts.max_backtracks} backtracks "
        f"(last sigma {sigma / opts.beta:.3e}, last change {value:.3e}, slope {slope:.3e})"
    )


def _energy_change(problem: ProblemData, y: np.ndarray, eta: np.ndarray) -> Callable[[float], float]:
    def change(sigma: float) -> float:
        step = recenter(problem, y + sigma * eta) - y
        return objective_change(problem, y, step)

    return change


def armijo(
    problem: ProblemData,
    y: np.ndarray,
    eta: np.ndarray,
    opts: SolverOptions,
    b: Optional[np.ndarray] = None,
) -> float:
    """Accepted Armijo step size for ``J`` at ``y`` along ``eta``."""
    b = assemble_b(problem, y) if b is None else b
    slope = -float(np.dot(b + problem.d, eta))
    return backtrack(_energy_change(problem, y, eta), slope, opts).sigma


def recenter(problem: ProblemData, y: np.ndarray) -> np.ndarray:
    """Subtract the constant that makes ``int y_h = 0``."""
    m1 = problem.mass_ones
    return y - np.dot(m1, y) / m1.sum()


def newton_solve(
    problem: ProblemData,
    opts: SolverOptions = SolverOptions(),
    y0: Optional[np.ndarray] = None,
    callback: Optional[Callable[[IterationRecord], None]] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Run the damped semi-smooth Newton iteration from ``y0`` (default zero).

    Returns the final potential and the iteration report. Reaching
    ``max_iters`` is reported via ``report.termination``; line-search and
    linear-solve failures raise with the partial report attached.
    """
    if not problem.params.delta > 0:
        raise ValueError("the Newton iteration requires delta > 0")
    n = problem.mesh.n_nodes
    y = np.zeros(n) if y0 is None else recenter(problem, np.asarray(y0, dtype=float))
    d, M = problem.d, problem.mass
    report = SolveReport()
    t_start = time.perf_counter()
    J = objective(problem, y)

    for k in range(opts.max_iters + 1):
        b = assemble_b(problem, y)
        rec = IterationRecord(k, relative_defect(b, d), J, wall_time=time.perf_counter() - t_start)
        report.records.append(rec)
        if callback is not None:
            callback(rec)
        if rec.residual < opts.tol:
            report.termination = CONVERGED
            break
        if k == opts.max_iters:
            report.termination = MAX_ITERS
            break

        rhs = b + d
        try:
            eta, _ = solve_saddle(assemble_A(problem, y), M, rhs)
        except LinearSolveError as exc:
            report.termination = LINEAR_SOLVE_FAILED
            exc.report, exc.y = report, y
            raise
        slope = -float(np.dot(rhs, eta))
        try:
            ls = backtrack(_energy_change(problem, y, eta), slope, opts)
        except LineSearchError as exc:
            report.termination = LINE_SEARCH_FAILED
            exc.report, exc.y = report, y
            raise
        rec.step, rec.backtracks = ls.sigma, ls.backtracks
        y = recenter(problem, y + ls.sigma * eta)
        # accumulate accepted changes: exact monotonicity, no re-evaluation noise
        J = J + ls.change
        log.debug("iter %d residual %.3e J %.12g sigma %.3g", k, rec.residual, rec.objective, ls.sigma)

    log.info(
        "newton_solve: %s after %d iterations, residual %.3e",
        report.termination,
        report.iterations,
        report.records[-1].residual,
    )
    return y, report

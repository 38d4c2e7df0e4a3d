"""Primal flow recovery and post-processing diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from beckmann import model
from beckmann.assembly import ProblemData, flux_load, gradients, objective, relative_defect
from beckmann.mesh import Mesh


@dataclass(frozen=True, eq=False)
class FlowField:
    q: np.ndarray  # (n_triangles, 2), constant per triangle
    mesh: Mesh

    def __post_init__(self):
        if self.q.shape != (self.mesh.n_triangles, 2):
            raise ValueError(f"flow has shape {self.q.shape}, expected ({self.mesh.n_triangles}, 2)")
        if not np.all(np.isfinite(self.q)):
            raise ValueError("flow contains non-finite entries")

    @property
    def norms(self) -> np.ndarray:
        return np.hypot(self.q[:, 0], self.q[:, 1])


@dataclass(frozen=True)
class ArrowField:
    """Block-averaged flow for plotting; filtered arrows are zero with ``keep == False``."""

    centers: np.ndarray  # (k, 2)
    vectors: np.ndarray  # (k, 2)
    keep: np.ndarray  # (k,) bool
    max_norm: float
    block_shape: tuple[int, int]  # (blocks_y, blocks_x)

    @property
    def n_arrows(self) -> int:
        return int(self.keep.sum())


def recover_flow(problem: ProblemData, y: np.ndarray) -> FlowField:
    """``q = G(-grad y_h)`` on each triangle."""
    q = model.eval_G(problem.w_tri, -gradients(problem.mesh, y), problem.params)
    return FlowField(q, problem.mesh)


def divergence_residual(problem: ProblemData, flow: FlowField) -> float:
    """Relative defect of ``-int q . grad phi_i = int phi_i d mu``.

    Uses the same normalization as :func:`beckmann.assembly.residual`, so
    both agree for ``flow = recover_flow(problem, y)``.
    """
    return relative_defect(flux_load(problem.mesh, flow.q), problem.d)


def transport_cost(problem: ProblemData, flow: FlowField) -> float:
    """``int w |q|``."""
    return float(np.dot(problem.mesh.areas * problem.w_tri, flow.norms))


def primal_energy(problem: ProblemData, flow: FlowField) -> float:
    """``int calG*(q)``."""
    return float(np.dot(problem.mesh.areas, model.conj_G(problem.w_tri, flow.q, problem.params)))


def duality_gap(problem: ProblemData, y: np.ndarray, flow: FlowField) -> float:
    """``J(y) + int calG*(q)``; only meaningful alongside :func:`divergence_residual`."""
    return objective(problem, y) + primal_energy(problem, flow)


def downsample(flow: FlowField, mesh: Mesh | None = None, block: int = 2, threshold: float = 0.01) -> ArrowField:
    """Average ``q`` over ``block x block`` squares and drop arrows below ``threshold * max``.

    A trailing row or column of squares that does not fill a whole block is
    discarded.
    """
    mesh = flow.mesh if mesh is None else mesh
    by, bx = mesh.ny // block, mesh.nx // block
    # per-square mean of its two (equal-area) triangles, laid out (ny, nx, 2)
    sq = flow.q.reshape(mesh.ny, mesh.nx, 2, 2).mean(axis=2)
    sq = sq[: by * block, : bx * block]
    avg = sq.reshape(by, block, bx, block, 2).mean(axis=(1, 3)).reshape(-1, 2)

    jj, ii = np.meshgrid(np.arange(by), np.arange(bx), indexing="ij")
    size_x, size_y = block * mesh.hx, block * mesh.hy
    centers = np.column_stack(
        [
            mesh.domain.x0 + (ii.ravel() + 0.5) * size_x,
            mesh.domain.y0 + (jj.ravel() + 0.5) * size_y,
        ]
    )
    norms = np.hypot(avg[:, 0], avg[:, 1])
    max_norm = float(norms.max()) if norms.size else 0.0
    keep = norms > threshold * max_norm if max_norm > 0 else np.zeros(norms.shape, dtype=bool)
    vectors = np.where(keep[:, None], avg, 0.0)
    return ArrowField(centers, vectors, keep, max_norm, (by, bx))

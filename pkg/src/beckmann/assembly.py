"""Exact assembly of the discrete dual problem.

``w`` and the marginals are constant per square and ``grad y_h`` is constant
per triangle, so every integral below reduces to a sum of element areas times
pointwise evaluations; no quadrature is involved.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from beckmann import model
from beckmann.mesh import Mesh, assemble_mass, _scatter
from beckmann.model import RegParams

RESIDUAL_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Discrete instance: mesh, per-square cost and marginal densities, parameters.

    Use :func:`make_problem` to build one with normalized marginals.
    """

    mesh: Mesh
    w: np.ndarray  # (n_squares,)
    mu_plus: np.ndarray  # (n_squares,) densities
    mu_minus: np.ndarray
    params: RegParams
    w_min: float = 1e-6

    @cached_property
    def w_tri(self) -> np.ndarray:
        return self.w[self.mesh.triangle_square]

    @cached_property
    def mu_tri(self) -> np.ndarray:
        return (self.mu_plus - self.mu_minus)[self.mesh.triangle_square]

    @cached_property
    def mass(self) -> sps.csr_matrix:
        return assemble_mass(self.mesh)

    @cached_property
    def mass_ones(self) -> np.ndarray:
        """``M 1``, i.e. ``int phi_i``."""
        return np.asarray(self.mass.sum(axis=1)).ravel()

    @cached_property
    def d(self) -> np.ndarray:
        return assemble_d(self)

    def with_params(self, params: RegParams) -> "ProblemData":
        return ProblemData(self.mesh, self.w, self.mu_plus, self.mu_minus, params, self.w_min)


def _cell_mass(mesh: Mesh, density: np.ndarray) -> float:
    return float(np.sum(density) * mesh.hx * mesh.hy)


def make_problem(
    mesh: Mesh,
    w,
    mu_plus,
    mu_minus,
    params: RegParams,
    w_min: float = 1e-6,
) -> ProblemData:
    """Validate inputs, clip ``w`` from below at ``w_min`` and normalize both marginals to unit mass."""
    n = mesh.n_squares
    w = np.broadcast_to(np.asarray(w, dtype=float), (n,)).copy()
    if np.any(~np.isfinite(w)):
        raise ValueError("cost field contains non-finite values")
    if not w_min > 0:
        raise ValueError(f"w_min must be positive, got {w_min}")
    w = np.maximum(w, w_min)
    densities = []
    for name, mu in (("mu_plus", mu_plus), ("mu_minus", mu_minus)):
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (n,)).copy()
        if np.any(mu < 0) or np.any(~np.isfinite(mu)):
            raise ValueError(f"{name} must be finite and nonnegative")
        total = _cell_mass(mesh, mu)
        if total <= 0:
            raise ValueError(f"{name} has zero total mass")
        densities.append(mu / total)
    for arr in (w, *densities):
        arr.flags.writeable = False
    return ProblemData(mesh, w, densities[0], densities[1], params, w_min)


def gradients(mesh: Mesh, y: np.ndarray) -> np.ndarray:
    """Per-triangle gradient of the P1 function with nodal values ``y``, shape (T, 2)."""
    return np.einsum("tkd,tk->td", mesh.gradients, y[mesh.triangles])


def _load(mesh: Mesh, per_tri: np.ndarray) -> np.ndarray:
    """Scatter (T, 3) element contributions onto nodes, in element order."""
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles.ravel(), per_tri.ravel())
    return out


def assemble_d(problem: ProblemData) -> np.ndarray:
    """``d_i = int phi_i d(mu_plus - mu_minus)``."""
    mesh = problem.mesh
    per_node = mesh.areas * problem.mu_tri / 3.0
    return _load(mesh, np.repeat(per_node[:, None], 3, axis=1))


def flux_load(mesh: Mesh, q: np.ndarray) -> np.ndarray:
    """``int q . grad phi_i`` for a per-triangle constant field ``q``."""
    return _load(mesh, mesh.areas[:, None] * np.einsum("tkd,td->tk", mesh.gradients, q))


def assemble_b(problem: ProblemData, y: np.ndarray) -> np.ndarray:
    """``b_i = int G(-grad y_h) . grad phi_i``."""
    q = model.eval_G(problem.w_tri, -gradients(problem.mesh, y), problem.params)
    return flux_load(problem.mesh, q)


def assemble_A(problem: ProblemData, y: np.ndarray) -> sps.csr_matrix:
    """``A_ij = int DG(-grad y_h) grad phi_i . grad phi_j``."""
    if not problem.params.delta > 0:
        raise ValueError("the Newton matrix requires delta > 0")
    mesh = problem.mesh
    jac = model.jac_G(problem.w_tri, -gradients(mesh, y), problem.params)
    local = np.einsum("t,tid,tde,tje->tij", mesh.areas, mesh.gradients, jac, mesh.gradients)
    mat = _scatter(mesh, local)
    # DG is symmetric; remove rounding asymmetry so the Newton matrix is exactly symmetric
    return ((mat + mat.T) * 0.5).tocsr()


def objective(problem: ProblemData, y: np.ndarray) -> float:
    """Discrete dual energy ``J(y) = int calG(-grad y_h) - int y_h d mu``."""
    p = -gradients(problem.mesh, y)
    energy = np.dot(problem.mesh.areas, model.anti_G(problem.w_tri, p, problem.params))
    return float(energy - np.dot(problem.d, y))


def objective_change(problem: ProblemData, y: np.ndarray, step: np.ndarray) -> float:
    """``J(y + step) - J(y)``, accurate even when far below the rounding level of ``J``."""
    p = -gradients(problem.mesh, y)
    dp = -gradients(problem.mesh, step)
    change = model.anti_G_change(problem.w_tri, p, dp, problem.params)
    return float(np.dot(problem.mesh.areas, change) - np.dot(problem.d, step))


def relative_defect(load: np.ndarray, d: np.ndarray) -> float:
    """``|load + d| / max(|load|, |d|, floor)`` in the Euclidean norm."""
    den = max(np.linalg.norm(load), np.linalg.norm(d), RESIDUAL_FLOOR)
    return float(np.linalg.norm(load + d) / den)


def residual(problem: ProblemData, y: np.ndarray) -> float:
    """Relative defect of the discrete optimality condition ``b(y) + d = 0``."""
    return relative_defect(assemble_b(problem, y), problem.d)

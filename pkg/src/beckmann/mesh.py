"""Friedrich-Keller triangulation of a rectangle and P1 element geometry.

Conventions
-----------
Nodes and squares are numbered row-major starting at the lower-left corner:
node ``(i, j)`` has index ``j * (nx + 1) + i`` and square ``(i, j)`` has index
``j * nx + i``. Square ``s`` is split along its bottom-left to top-right
diagonal into triangle ``2 s`` (below the diagonal) and ``2 s + 1`` (above).
Both triangles are oriented counter-clockwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.sparse as sps

# local P1 mass matrix on a triangle of unit area
_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class ElementGeometry:
    area: float
    basis_gradients: np.ndarray  # (3, 2)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform triangulated rectangle with cached per-element P1 geometry."""

    nodes: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_triangles, 3), counter-clockwise
    squares: np.ndarray  # (n_squares, 2) triangle indices per grid cell
    nx: int
    ny: int
    domain: Rectangle
    areas: np.ndarray = field(repr=False)  # (n_triangles,)
    gradients: np.ndarray = field(repr=False)  # (n_triangles, 3, 2)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_squares(self) -> int:
        return self.squares.shape[0]

    @property
    def hx(self) -> float:
        return self.domain.width / self.nx

    @property
    def hy(self) -> float:
        return self.domain.height / self.ny

    @property
    def triangle_square(self) -> np.ndarray:
        """Square index of every triangle."""
        return np.arange(self.n_triangles) // 2

    @property
    def cell_centers(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        cx = self.domain.x0 + (i.ravel() + 0.5) * self.hx
        cy = self.domain.y0 + (j.ravel() + 0.5) * self.hy
        return np.column_stack([cx, cy])

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def locate_square(self, x: float, y: float) -> int:
        """Index of the square containing ``(x, y)``; points on the upper edge map inward."""
        i = int(np.floor((x - self.domain.x0) / self.hx))
        j = int(np.floor((y - self.domain.y0) / self.hy))
        if not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise ValueError(f"point ({x}, {y}) lies outside the domain")
        return min(j, self.ny - 1) * self.nx + min(i, self.nx - 1)

    def basis_values(self, t: int, points: np.ndarray) -> np.ndarray:
        """Barycentric (hat function) values of triangle ``t`` at ``points`` (k, 2)."""
        points = np.atleast_2d(points)
        x0 = self.nodes[self.triangles[t, 0]]
        grads = self.gradients[t]
        lam12 = (points - x0) @ grads[1:].T
        return np.column_stack([1.0 - lam12.sum(axis=1), lam12])


def _p1_geometry(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Areas and hat-function gradients for triangles given as (T, 3, 2) coordinates."""
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # rows of inv(J) where J = [e1 e2] maps reference coords to physical ones
    inv = np.empty((coords.shape[0], 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    gradients = np.einsum("kr,trd->tkd", ref, inv)
    return 0.5 * det, gradients


def build_grid(nx: int, ny: int, domain: Union[Rectangle, tuple] = (0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Build the Friedrich-Keller grid with ``nx * ny`` squares over ``domain``.

    ``domain`` is a :class:`Rectangle` or a tuple ``(x0, x1, y0, y1)``.
    """
    if not isinstance(domain, Rectangle):
        domain = Rectangle(*map(float, domain))
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"grid dimensions must be positive integers, got nx={nx}, ny={ny}")
    if not (domain.width > 0 and domain.height > 0):
        raise ValueError(f"domain must have positive width and height, got {domain}")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n00 = (j * (nx + 1) + i).ravel()
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([n00, n10, n11])
    triangles[1::2] = np.column_stack([n00, n11, n01])
    squares = np.arange(2 * nx * ny, dtype=np.int64).reshape(-1, 2)

    areas, gradients = _p1_geometry(nodes[triangles])
    for arr in (nodes, triangles, squares, areas, gradients):
        arr.flags.writeable = False
    return Mesh(nodes, triangles, squares, nx, ny, domain, areas, gradients)


def element_geometry(mesh: Mesh, t: int) -> ElementGeometry:
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range [0, {mesh.n_triangles})")
    return ElementGeometry(float(mesh.areas[t]), mesh.gradients[t].copy())


def _scatter(mesh: Mesh, local: np.ndarray) -> sps.csr_matrix:
    """Sum (T, 3, 3) element matrices into a global CSR matrix.

    Duplicate entries are summed by scipy in element order, so the result is
    reproducible for identical inputs.
    """
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    mat = sps.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return mat


def assemble_mass(mesh: Mesh) -> sps.csr_matrix:
    """Exact P1 mass matrix ``M_ij = int phi_i phi_j``."""
    return _scatter(mesh, mesh.areas[:, None, None] * _LOCAL_MASS)


def assemble_stiffness(mesh: Mesh, coefficient: np.ndarray | float = 1.0) -> sps.csr_matrix:
    """P1 stiffness matrix with a per-triangle scalar coefficient."""
    coef = np.broadcast_to(np.asarray(coefficient, dtype=float), (mesh.n_triangles,))
    local = np.einsum("t,tid,tjd->tij", coef * mesh.areas, mesh.gradients, mesh.gradients)
    return _scatter(mesh, local)


def project_to_cells(f: Union[Callable, np.ndarray, float], mesh: Mesh) -> np.ndarray:
    """Per-square constant values of ``f``.

    ``f`` may be a scalar, a vectorized callable ``f(x, y)`` (evaluated at the
    square centers), or a raster of shape ``(ny, nx)`` whose row ``j`` holds
    the squares at height ``j`` (row 0 at the bottom). A flat array of length
    ``nx * ny`` in square order is accepted as well.
    """
    if callable(f):
        c = mesh.cell_centers
        vals = np.asarray(f(c[:, 0], c[:, 1]), dtype=float)
        return np.broadcast_to(vals, (mesh.n_squares,)).copy()
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(mesh.n_squares, float(arr))
    if arr.shape == (mesh.ny, mesh.nx):
        return arr.ravel().copy()
    if arr.shape == (mesh.n_squares,):
        return arr.copy()
    raise ValueError(
        f"raster shape {arr.shape} does not match the grid (ny, nx) = ({mesh.ny}, {mesh.nx})"
    )

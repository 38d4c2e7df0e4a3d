"""Turn a :class:`~beckmann.config.Config` into a discrete :class:`ProblemData`."""

from __future__ import annotations

import numpy as np

from beckmann.assembly import ProblemData, make_problem
from beckmann.config import Config, ConfigError
from beckmann.mesh import Mesh, build_grid, project_to_cells


def gaussian(center, sigma):
    cx, cy = center

    def f(x, y):
        return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2))

    return f


def _raster(mesh: Mesh, values: np.ndarray, path: str) -> np.ndarray:
    """Per-square field from a raster given top row first, upsampled by whole factors."""
    rows, cols = values.shape
    if mesh.ny % rows or mesh.nx % cols:
        raise ConfigError(
            f"{path}: raster of {rows}x{cols} does not divide the grid ny x nx = {mesh.ny}x{mesh.nx}"
        )
    up = np.kron(values[::-1], np.ones((mesh.ny // rows, mesh.nx // cols)))
    return project_to_cells(up, mesh)


def cost_field(spec: dict, mesh: Mesh, path: str = "config.cost") -> np.ndarray:
    kind = spec["type"]
    if kind == "constant":
        return project_to_cells(spec["value"], mesh)
    if kind == "gaussian_mixture":
        comps = [(c["weight"], gaussian(c["center"], c["sigma"])) for c in spec["components"]]
        return project_to_cells(lambda x, y: spec["base"] + sum(a * g(x, y) for a, g in comps), mesh)
    if kind == "pyramid":
        cx, cy = spec["center"]
        hw = spec["half_width"]

        def tent(x, y):
            dist = np.maximum(np.abs(x - cx), np.abs(y - cy))
            return spec["base"] + spec["peak"] * np.maximum(0.0, 1.0 - dist / hw)

        return project_to_cells(tent, mesh)
    if kind == "maze":
        chars = np.array([list(r) for r in spec["rows"]])
        values = np.where(chars == "#", spec["w_high"], spec["w_low"])
        return _raster(mesh, values, path)
    if kind == "array":
        return _raster(mesh, np.asarray(spec["values"], dtype=float), path)
    raise ConfigError(f"{path}.type: unknown cost type {kind!r}")


def marginal_field(spec: dict, mesh: Mesh, path: str) -> np.ndarray:
    kind = spec["type"]
    if kind == "gaussian":
        return project_to_cells(gaussian(spec["center"], spec["sigma"]), mesh)
    if kind == "cell":
        if "at" in spec:
            try:
                s = mesh.locate_square(*spec["at"])
            except ValueError as exc:
                raise ConfigError(f"{path}.at: {exc}") from None
        else:
            i, j = spec["index"]
            if not (i < mesh.nx and j < mesh.ny):
                raise ConfigError(f"{path}.index: cell {spec['index']} outside the {mesh.nx}x{mesh.ny} grid")
            s = j * mesh.nx + i
        out = np.zeros(mesh.n_squares)
        out[s] = 1.0
        return out
    if kind == "array":
        return _raster(mesh, np.asarray(spec["values"], dtype=float), path)
    raise ConfigError(f"{path}.type: unknown marginal type {kind!r}")


def generate_problem(cfg: Config, mesh: Mesh | None = None) -> ProblemData:
    """Build the mesh (unless given) and the normalized per-square problem data."""
    if mesh is None:
        mesh = build_grid(cfg.grid.nx, cfg.grid.ny, cfg.grid.domain)
    w = cost_field(cfg.cost, mesh)
    mu_p = marginal_field(cfg.mu_plus, mesh, "config.mu_plus")
    mu_m = marginal_field(cfg.mu_minus, mesh, "config.mu_minus")
    for name, mu in (("mu_plus", mu_p), ("mu_minus", mu_m)):
        if not np.any(mu > 0):
            raise ConfigError(f"config.{name}: marginal vanishes on the grid")
    return make_problem(mesh, w, mu_p, mu_m, cfg.params, w_min=cfg.w_min)

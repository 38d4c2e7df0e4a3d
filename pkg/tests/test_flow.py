import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beckmann.assembly import assemble_b, flux_load, make_problem, objective, residual
from beckmann.flow import (
    FlowField,
    divergence_residual,
    downsample,
    duality_gap,
    primal_energy,
    recover_flow,
    transport_cost,
)
from beckmann.mesh import build_grid
from beckmann.model import RegParams
from beckmann.solver import SolverOptions, newton_solve
from conftest import random_potential, two_cell_problem


def square_flow(mesh, per_square):
    """Flow equal to ``per_square[s]`` on both triangles of square ``s``."""
    return FlowField(np.repeat(np.asarray(per_square, dtype=float), 2, axis=0), mesh)


def test_flow_points_from_source_to_sink():
    problem = two_cell_problem(RegParams(1e-2, 1e-2), n=8)
    y, report = newton_solve(problem)
    assert report.converged
    flow = recover_flow(problem, y)
    mean = (problem.mesh.areas[:, None] * flow.q).sum(axis=0)
    assert mean[0] > 0 and mean[1] > 0
    assert mean[0] == pytest.approx(mean[1], rel=1e-8)  # symmetric about the diagonal


def test_downsample_threshold():
    mesh = build_grid(4, 4)
    block_vals = {(0, 0): [1.0, 0.0], (0, 1): [0.009, 0.0], (1, 0): [0.0, 0.011], (1, 1): [0.3, -0.4]}
    per_square = np.zeros((16, 2))
    for s in range(16):
        i, j = s % 4, s // 4
        per_square[s] = block_vals[(j // 2, i // 2)]
    arrows = downsample(square_flow(mesh, per_square))
    assert arrows.block_shape == (2, 2)
    assert arrows.max_norm == pytest.approx(1.0)
    assert arrows.keep.tolist() == [True, False, True, True]
    assert arrows.n_arrows == 3
    assert np.allclose(arrows.vectors[3], [0.3, -0.4])
    assert np.all(arrows.vectors[1] == 0)
    assert np.allclose(arrows.centers, [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])


def test_downsample_single_block_is_mean():
    mesh = build_grid(2, 2)
    rng = np.random.default_rng(0)
    q = rng.standard_normal((mesh.n_triangles, 2))
    arrows = downsample(FlowField(q, mesh))
    assert arrows.n_arrows == 1
    assert np.allclose(arrows.vectors[0], q.mean(axis=0))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.floats(-5, 5), st.floats(-5, 5))
def test_downsample_uniform(nx, ny, qx, qy):
    mesh = build_grid(nx, ny)
    arrows = downsample(FlowField(np.tile([qx, qy], (mesh.n_triangles, 1)), mesh))
    assert arrows.block_shape == (ny // 2, nx // 2)
    if np.hypot(qx, qy) > 0 and arrows.keep.size:
        assert arrows.keep.all()
        assert np.allclose(arrows.vectors, [qx, qy], rtol=1e-12, atol=1e-300)
    else:
        assert arrows.n_arrows == 0


def test_downsample_zero_flow_keeps_nothing():
    mesh = build_grid(4, 4)
    arrows = downsample(FlowField(np.zeros((mesh.n_triangles, 2)), mesh))
    assert arrows.max_norm == 0 and arrows.n_arrows == 0


def test_flowfield_validation():
    mesh = build_grid(2, 2)
    with pytest.raises(ValueError):
        FlowField(np.zeros((3, 2)), mesh)
    with pytest.raises(ValueError):
        FlowField(np.full((mesh.n_triangles, 2), np.inf), mesh)


def test_transport_cost_of_constant_flow():
    mesh = build_grid(3, 3, (0, 2, 0, 1))
    w = np.arange(1.0, 10.0)
    problem = make_problem(mesh, w, np.ones(9), np.ones(9), RegParams(1, 1))
    flow = FlowField(np.tile([3.0, 4.0], (mesh.n_triangles, 1)), mesh)
    assert transport_cost(problem, flow) == pytest.approx(5.0 * w.sum() * mesh.hx * mesh.hy)


def test_gap_at_zero_is_zero(tiny_problem):
    y = np.zeros(tiny_problem.mesh.n_nodes)
    flow = FlowField(np.zeros((tiny_problem.mesh.n_triangles, 2)), tiny_problem.mesh)
    assert duality_gap(tiny_problem, y, flow) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_divergence_residual_equals_residual(seed):
    rng = np.random.default_rng(seed)
    problem = two_cell_problem(RegParams(0.1, 0.05), n=5)
    y = random_potential(rng, problem, 3.0)
    flow = recover_flow(problem, y)
    assert divergence_residual(problem, flow) == pytest.approx(residual(problem, y), rel=1e-12)


@pytest.mark.parametrize("params", [RegParams(0.5, 1e-2), RegParams(1e-2, 1e-3, 1.5)])
def test_gap_small_at_optimum(params):
    problem = two_cell_problem(params, n=6)
    y, _ = newton_solve(problem)
    flow = recover_flow(problem, y)
    gap = duality_gap(problem, y, flow)
    J = objective(problem, y)
    assert -1e-8 <= gap <= 1e-6 * (1 + abs(J))
    assert primal_energy(problem, flow) == pytest.approx(-J, abs=1e-6 * (1 + abs(J)))


def _solve_raster(mu_p, mu_m, w, params):
    n = w.shape[0]
    mesh = build_grid(n, n)
    problem = make_problem(mesh, w.ravel(), mu_p.ravel(), mu_m.ravel(), params)
    y, report = newton_solve(problem, SolverOptions(tol=1e-12))
    assert report.converged
    return transport_cost(problem, recover_flow(problem, y))


@pytest.mark.parametrize(
    "transform",
    [lambda a: np.rot90(a, 2), lambda a: a.T, lambda a: np.rot90(a, 2).T],
    ids=["half_turn", "transpose", "anti_transpose"],
)
def test_cost_invariant_under_mesh_symmetries(transform):
    # these maps preserve the diagonal split of every square; a quarter turn does not
    rng = np.random.default_rng(4)
    n = 8
    w = rng.uniform(0.5, 2, (n, n))
    mp = np.zeros((n, n))
    mm = np.zeros((n, n))
    mp[1, 2] = 1.0
    mm[6, 5] = 1.0
    params = RegParams(1e-2, 1e-2)
    base = _solve_raster(mp, mm, w, params)
    assert _solve_raster(transform(mp), transform(mm), transform(w), params) == pytest.approx(base, rel=1e-9)


def test_random_flow_has_positive_divergence_residual(tiny_problem):
    rng = np.random.default_rng(5)
    q = rng.standard_normal((tiny_problem.mesh.n_triangles, 2))
    assert divergence_residual(tiny_problem, FlowField(q, tiny_problem.mesh)) > 0


def test_stored_flow_reassembles_b(tiny_problem):
    rng = np.random.default_rng(6)
    y = random_potential(rng, tiny_problem, 4.0)
    flow = recover_flow(tiny_problem, y)
    assert np.array_equal(flux_load(tiny_problem.mesh, flow.q), assemble_b(tiny_problem, y))
    assert transport_cost(tiny_problem, flow) >= 0


def test_cost_decreases_with_epsilon(toy_problem):
    costs = []
    for eps in (5e-1, 5e-2, 5e-3):
        problem = toy_problem.with_params(RegParams(eps, 1e-2))
        y, report = newton_solve(problem)
        assert report.converged
        costs.append(transport_cost(problem, recover_flow(problem, y)))
    assert all(b <= a + 1e-6 for a, b in zip(costs, costs[1:]))

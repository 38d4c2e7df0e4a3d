import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beckmann import model
from beckmann.assembly import (
    assemble_A,
    assemble_b,
    assemble_d,
    gradients,
    make_problem,
    objective,
    objective_change,
    residual,
)
from beckmann.mesh import build_grid
from beckmann.model import RegParams
from oracles import GAUSS7_BARY, GAUSS7_W, calG_scalar, hat_coefficients, shoelace
from conftest import random_potential, two_cell_problem


def random_problem(rng, nx=4, ny=3, params=None):
    mesh = build_grid(nx, ny, (0.0, 2.0, -1.0, 0.5))
    params = params or RegParams(rng.uniform(0.05, 1), rng.uniform(1e-3, 1), rng.choice([1.5, 2.0]))
    w = rng.uniform(0.1, 10, mesh.n_squares)
    return make_problem(mesh, w, rng.uniform(0, 1, mesh.n_squares), rng.uniform(0, 1, mesh.n_squares), params)


def quadrature_system(problem, y):
    """Dense ``A``, ``b``, ``d`` and ``J`` from per-triangle 7-point quadrature."""
    mesh, prm = problem.mesh, problem.params
    n = mesh.n_nodes
    A, b, d = np.zeros((n, n)), np.zeros(n), np.zeros(n)
    J = 0.0
    for t, tri in enumerate(mesh.triangles):
        c = mesh.nodes[tri]
        area = abs(shoelace(c))
        coef = hat_coefficients(c)
        grads = coef[:, 1:]
        s = mesh.triangle_square[t]
        w, mu = problem.w[s], problem.mu_plus[s] - problem.mu_minus[s]
        pts = GAUSS7_BARY @ c
        vals = coef[:, :1] + grads @ pts.T
        p = -(y[tri] @ grads)
        q = model.eval_G(w, p, prm)
        jac = model.jac_G(w, p, prm)
        g = calG_scalar(w, p, prm.epsilon, prm.delta, prm.alpha)
        yq = y[tri] @ vals
        J += area * np.dot(GAUSS7_W, g - mu * yq)
        for a in range(3):
            d[tri[a]] += area * mu * np.dot(GAUSS7_W, vals[a])
            b[tri[a]] += area * q @ grads[a]
            for k in range(3):
                A[tri[a], tri[k]] += area * grads[a] @ jac @ grads[k]
    return A, b, d, J


@pytest.mark.parametrize("seed", range(4))
def test_exactness_against_quadrature(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng)
    y = random_potential(rng, problem, scale=rng.uniform(0.1, 20))
    A, b, d, J = quadrature_system(problem, y)
    assert np.allclose(assemble_d(problem), d, rtol=1e-12, atol=1e-12 * np.abs(d).max())
    assert np.allclose(assemble_b(problem, y), b, rtol=1e-12, atol=1e-12 * np.abs(b).max())
    A_h = assemble_A(problem, y).toarray()
    assert np.abs(A_h - A).max() <= 1e-12 * np.abs(A).max()
    assert objective(problem, y) == pytest.approx(J, rel=1e-12, abs=1e-14)


def test_d_two_cell_quadrature_oracle():
    problem = two_cell_problem()
    _, _, d, _ = quadrature_system(problem, np.zeros(problem.mesh.n_nodes))
    assert np.allclose(assemble_d(problem), d, atol=1e-14)
    # density 4 on the lower-left square; node 0 is a vertex of both of its triangles (area 1/8)
    assert assemble_d(problem)[0] == pytest.approx(2 * 4 * (1 / 8) / 3)


def test_balanced_marginals_give_zero_d():
    mesh = build_grid(3, 3)
    mu = np.arange(1.0, 10.0)
    problem = make_problem(mesh, 1.0, mu, mu, RegParams(0.1, 0.1))
    assert np.all(assemble_d(problem) == 0)
    assert residual(problem, np.zeros(mesh.n_nodes)) == 0.0


def test_make_problem_normalizes_and_clips():
    mesh = build_grid(4, 2)
    w = np.linspace(-1, 3, mesh.n_squares)
    problem = make_problem(mesh, w, np.ones(8) * 7, np.arange(8.0), RegParams(1, 1), w_min=1e-3)
    assert problem.w.min() == 1e-3
    for mu in (problem.mu_plus, problem.mu_minus):
        assert mu.sum() * mesh.hx * mesh.hy == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [dict(mu_plus=np.zeros(4)), dict(mu_minus=-np.ones(4)), dict(w=np.full(4, np.nan)), dict(w_min=0.0)],
)
def test_make_problem_rejects(kwargs):
    args = dict(w=1.0, mu_plus=np.ones(4), mu_minus=np.ones(4), w_min=1e-6)
    args.update(kwargs)
    with pytest.raises(ValueError):
        make_problem(build_grid(2, 2), args["w"], args["mu_plus"], args["mu_minus"], RegParams(1, 1), args["w_min"])


def test_b_by_hand_one_nodal_bump():
    problem = two_cell_problem(RegParams(0.5, 0.2, 2.0))
    mesh = problem.mesh
    y = np.zeros(mesh.n_nodes)
    y[1] = 3.0  # node (0.5, 0)
    expected = np.zeros(mesh.n_nodes)
    for tri in mesh.triangles:
        if 1 not in tri:
            continue
        grads = hat_coefficients(mesh.nodes[tri])[:, 1:]
        G = model.eval_G(1.0, -(y[tri] @ grads), problem.params)
        expected[tri] += abs(shoelace(mesh.nodes[tri])) * grads @ G
    assert np.allclose(assemble_b(problem, y), expected, atol=1e-14)
    # on triangle [(0,0), (.5,0), (.5,.5)] grad y = (6, 0); with w=1, eps=.5, alpha=2
    # F = (6 - 1)/.5 = 10 and R = .2, both along -x
    assert model.eval_G(1.0, np.array([-6.0, 0.0]), problem.params) == pytest.approx([-10.2, 0.0])


def test_y_zero():
    problem = random_problem(np.random.default_rng(7))
    y = np.zeros(problem.mesh.n_nodes)
    assert np.all(assemble_b(problem, y) == 0)
    J0 = problem.params.delta * np.dot(problem.mesh.areas, problem.w_tri)
    assert objective(problem, y) == pytest.approx(J0, rel=1e-14)
    # inside the dead zone A is the (delta / w)-weighted stiffness matrix
    from beckmann.mesh import assemble_stiffness

    K = assemble_stiffness(problem.mesh, problem.params.delta / problem.w_tri)
    assert np.abs(assemble_A(problem, y) - K).max() <= 1e-14 * np.abs(K).max()


def test_assemble_A_needs_delta():
    problem = two_cell_problem(RegParams(0.5, 0.0))
    with pytest.raises(ValueError):
        assemble_A(problem, np.zeros(problem.mesh.n_nodes))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 30))
def test_zero_row_sums(seed, scale):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng)
    y = random_potential(rng, problem, scale)
    A = assemble_A(problem, y)
    b = assemble_b(problem, y)
    d = problem.d
    ones = np.ones(problem.mesh.n_nodes)
    assert np.abs(A @ ones).max() <= 1e-12 * abs(A).max()
    assert abs(b.sum()) <= 1e-12 * max(np.abs(b).sum(), 1e-300)
    assert abs(d.sum()) <= 1e-12 * np.abs(d).sum()
    assert (A - A.T).nnz == 0 or abs(A - A.T).max() == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_A_positive_semidefinite(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng)
    A = assemble_A(problem, random_potential(rng, problem, rng.uniform(0.1, 20)))
    V = rng.standard_normal((problem.mesh.n_nodes, 100))
    quad = np.einsum("ik,ik->k", V, A @ V)
    assert np.all(quad >= -1e-12 * abs(A).max() * (V**2).sum(axis=0))


def _fd_objective_gradient(problem, y, h):
    g = np.zeros_like(y)
    for i in range(len(y)):
        e = np.zeros_like(y)
        e[i] = h
        g[i] = (objective_change(problem, y, e) - objective_change(problem, y, -e)) / (2 * h)
    return g


def _min_kink_distance(problem, y):
    p = -gradients(problem.mesh, y)
    n = np.hypot(p[:, 0], p[:, 1])
    return np.abs(n - problem.w_tri).min()


@pytest.mark.parametrize("seed", range(5))
def test_gradient_consistency(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng)
    y = random_potential(rng, problem, 10.0)
    h = min(1e-6, 0.1 * _min_kink_distance(problem, y) * min(problem.mesh.hx, problem.mesh.hy))
    g = _fd_objective_gradient(problem, y, h)
    exact = -(assemble_b(problem, y) + problem.d)
    assert np.linalg.norm(g - exact) <= 1e-5 * np.linalg.norm(exact)


@pytest.mark.parametrize("seed", range(5))
def test_directional_derivative(seed):
    rng = np.random.default_rng(100 + seed)
    problem = random_problem(rng)
    y = random_potential(rng, problem, 5.0)
    eta = random_potential(rng, problem)
    slope = -float(np.dot(assemble_b(problem, y) + problem.d, eta))
    t = 1e-7 * min(1.0, _min_kink_distance(problem, y))
    fd = (objective_change(problem, y, t * eta) - objective_change(problem, y, -t * eta)) / (2 * t)
    assert fd == pytest.approx(slope, rel=1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_newton_matrix_consistency(seed):
    rng = np.random.default_rng(200 + seed)
    problem = random_problem(rng)
    y = random_potential(rng, problem, 10.0)
    assert _min_kink_distance(problem, y) > 1e-6
    eta = random_potential(rng, problem)
    t = 1e-7 * _min_kink_distance(problem, y)
    fd = (assemble_b(problem, y - t * eta) - assemble_b(problem, y + t * eta)) / (2 * t)
    # b(y) = int G(-grad y) . grad phi, so db/dy = -A
    Aeta = assemble_A(problem, y) @ eta
    assert np.linalg.norm(fd - Aeta) <= 1e-4 * np.linalg.norm(Aeta)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_objective_convex(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng)
    y1 = random_potential(rng, problem, rng.uniform(0.1, 20))
    y2 = random_potential(rng, problem, rng.uniform(0.1, 20))
    mid = objective(problem, 0.5 * (y1 + y2))
    avg = 0.5 * (objective(problem, y1) + objective(problem, y2))
    assert mid <= avg + 1e-12 * abs(avg)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-30, 0))
def test_objective_change_matches_difference(seed, log_t):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng)
    y = random_potential(rng, problem, rng.uniform(0.1, 20))
    step = 2.0**log_t * random_potential(rng, problem)
    plain = objective(problem, y + step) - objective(problem, y)
    J = abs(objective(problem, y))
    assert objective_change(problem, y, step) == pytest.approx(plain, abs=1e-13 * max(J, 1.0))


def test_residual_continuous_under_scaling():
    rng = np.random.default_rng(3)
    problem = random_problem(rng)
    y = random_potential(rng, problem, 3.0)
    r0 = residual(problem, y)
    r1 = residual(problem, (1 + 1e-9) * y)
    assert abs(r1 - r0) <= 1e-6 * max(r0, 1e-12)

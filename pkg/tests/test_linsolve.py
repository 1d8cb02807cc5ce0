import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from llg_imex.fem import FESpace
from llg_imex.linsolve import (ConvergenceError, DirichletProblem, SolverConfig, cg_solve,
                               cg_zero_mean, dirichlet_solve, solve_node_cross)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rtol=0)
    with pytest.raises(ValueError):
        SolverConfig(maxiter=0)


def test_cg_diagonal(cube4_space, rng):
    beta = cube4_space.beta
    b = rng.standard_normal(len(beta))
    x, info = cg_solve(sp.diags(beta), b)
    assert np.allclose(x, b / beta, rtol=1e-10)


def test_cg_dense_oracle(rng):
    Q = rng.standard_normal((10, 10))
    A = Q @ Q.T + 0.5 * np.eye(10)
    b = rng.standard_normal(10)
    x, info = cg_solve(A, b, SolverConfig(rtol=1e-13))
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-8)
    assert np.linalg.norm(A @ x - b) <= 1e-13 * np.linalg.norm(b)
    assert info["history"][-1] <= 1e-13 * np.linalg.norm(b)


def test_cg_zero_rhs():
    x, info = cg_solve(np.eye(4), np.zeros(4))
    assert np.all(x == 0) and info["iterations"] == 0


def test_cg_failure_carries_history(rng):
    Q = rng.standard_normal((50, 50))
    A = Q @ Q.T + 1e-3 * np.eye(50)
    with pytest.raises(ConvergenceError) as exc:
        cg_solve(A, rng.standard_normal(50), SolverConfig(rtol=1e-14, maxiter=3))
    assert len(exc.value.history) == 4


def test_cg_breakdown_on_indefinite():
    with pytest.raises(ConvergenceError, match="breakdown"):
        cg_solve(np.diag([1.0, -1.0]), np.array([1.0, 1.0]), precondition=False)


def test_zero_mean_against_pseudo_inverse(cube1, rng):
    space = FESpace(cube1)
    K = space.stiffness
    b = rng.standard_normal(cube1.n_nodes)
    b -= b.mean()
    x, _ = cg_zero_mean(K, b, space.beta, SolverConfig(rtol=1e-13))
    x_ref = np.linalg.pinv(K.toarray()) @ b
    x_ref -= space.beta @ x_ref / space.beta.sum()
    assert np.allclose(x, x_ref, atol=1e-8)
    assert abs(space.beta @ x) <= 1e-10 * np.linalg.norm(x)
    assert np.linalg.norm(K @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_zero_mean_incompatible_rhs_uses_compatible_part(cube4_space, rng):
    K, beta = cube4_space.stiffness, cube4_space.beta
    b = rng.standard_normal(len(beta))
    x, _ = cg_zero_mean(K, b + 3.0, beta)
    x0, _ = cg_zero_mean(K, b, beta)
    assert np.allclose(x, x0, atol=1e-9)
    z, _ = cg_zero_mean(K, np.zeros(len(beta)), beta)
    assert np.all(z == 0)


def test_dirichlet_examples(cube4_space, rng):
    K = cube4_space.stiffness
    mesh = cube4_space.mesh
    bnd = mesh.boundary_nodes()
    u = dirichlet_solve(K, (bnd, np.full(len(bnd), 2.5)))
    assert np.allclose(u, 2.5, atol=1e-9)
    lin = lambda x: 1.0 + 2 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2]
    u = dirichlet_solve(K, {int(i): float(lin(mesh.vertices[[i]])[0]) for i in bnd})
    assert np.allclose(u, lin(mesh.vertices), atol=1e-9)


def test_dirichlet_dense_oracle(cube1, rng):
    space = FESpace(cube1)
    K = space.stiffness.toarray()
    nodes = np.array([0, 1, 2, 3, 4, 5, 6])  # all but one node fixed
    vals = rng.standard_normal(len(nodes))
    u = DirichletProblem(space.stiffness, nodes).solve(vals)[0]
    free = np.setdiff1d(np.arange(8), nodes)
    ref = np.zeros(8)
    ref[nodes] = vals
    ref[free] = np.linalg.solve(K[np.ix_(free, free)], -K[np.ix_(free, nodes)] @ vals)
    assert np.allclose(u, ref, atol=1e-8)
    assert np.array_equal(u[nodes], vals)
    with pytest.raises(ValueError):
        DirichletProblem(space.stiffness, [])


def test_node_cross_examples():
    b = np.array([[1.0, -2.0, 0.5]])
    assert np.allclose(solve_node_cross(2.0, np.zeros((1, 3)), b), b / 2)
    a = 3.0 * b
    assert np.allclose(solve_node_cross(2.0, a, b), b / 2)
    with pytest.raises(ValueError):
        solve_node_cross(0.0, a, b)


def _cross_matrix(a):
    # matrix of eta -> eta x a
    return np.array([[0, a[2], -a[1]], [-a[2], 0, a[0]], [a[1], -a[0], 0]])


def test_node_cross_dense_oracle(rng):
    n = 100_000
    c = rng.uniform(0.01, 100.0, n)
    a = rng.standard_normal((n, 3)) * rng.uniform(0.0, 100.0, (n, 1))
    b = rng.standard_normal((n, 3))
    eta = solve_node_cross(c, a, b)
    res = c[:, None] * eta + np.cross(eta, a) - b
    assert np.max(np.linalg.norm(res, axis=1) / (np.linalg.norm(b, axis=1) + 1)) <= 1e-12
    # dense 3x3 solves on a subsample
    for j in range(200):
        A = c[j] * np.eye(3) + _cross_matrix(a[j])
        assert np.allclose(eta[j], np.linalg.solve(A, b[j]), rtol=1e-10, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e4),
       arrays(np.float64, 3, elements=st.floats(-1e4, 1e4)),
       arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)))
def test_node_cross_property(c, a, b):
    eta = solve_node_cross(c, a[None], b[None])[0]
    res = c * eta + np.cross(eta, a) - b
    assert np.linalg.norm(res) <= 1e-12 * (np.linalg.norm(b) + 1) * max(1.0, np.linalg.norm(a) / c)
    # the solution never grows: |eta| <= |b| / c
    assert np.linalg.norm(eta) <= np.linalg.norm(b) / c * (1 + 1e-12) + 1e-300

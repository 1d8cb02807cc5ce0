"""Iterative solvers for the scalar Poisson problems and the nodewise 3x3 solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class ConvergenceError(RuntimeError):
    """An iterative method did not reach its tolerance.

    ``history`` holds the residual norms of every iteration.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-10
    atol: float = 1e-300
    maxiter: int = 10_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.maxiter < 1:
            raise ValueError("maxiter must be at least 1")


def cg_solve(A, b, cfg=SolverConfig(), x0=None, precondition=True, project=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||A x - b|| <= max(rtol ||b||, atol)``.  ``project`` is an
    optional map applied to search directions and the iterate (used to stay
    in a constrained subspace).  Returns ``(x, info)`` where ``info`` has the
    iteration count and residual history.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if project is not None:
        x = project(x)
    bnorm = np.linalg.norm(b)
    target = max(cfg.rtol * bnorm, cfg.atol)
    r = b - A @ x
    rnorm = np.linalg.norm(r)
    history = [rnorm]
    if rnorm <= target:
        return x, {"iterations": 0, "history": history}

    if precondition:
        d = A.diagonal() if sp.issparse(A) else np.diag(A)
        dinv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    else:
        dinv = np.ones(n)

    z = dinv * r
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = r @ z
    for it in range(1, cfg.maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise ConvergenceError("CG breakdown: operator not positive definite on the search space",
                                   history)
        a = rz / pAp
        x += a * p
        r -= a * Ap
        rnorm = np.linalg.norm(r)
        history.append(rnorm)
        if rnorm <= target:
            # guard against drift of the recursive residual
            rtrue = np.linalg.norm(b - A @ x)
            if rtrue <= target:
                if project is not None:
                    x = project(x)
                return x, {"iterations": it, "history": history}
            r = b - A @ x
        z = dinv * r
        if project is not None:
            z = project(z)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {cfg.maxiter} iterations "
                           f"(residual {history[-1]:.3e}, target {target:.3e})", history)


def cg_zero_mean(K, b, beta, cfg=SolverConfig(), x0=None):
    """Solve the pure Neumann problem ``K x = b`` in the space of zero weighted mean.

    The compatible part of ``b`` is used (its constant component is removed),
    and the solution is normalized to ``sum_l beta_l x_l = 0``.
    """
    b = np.asarray(b, dtype=float)
    b = b - b.mean()
    wsum = beta.sum()

    def remove_mean(v):
        return v - (beta @ v) / wsum

    if not np.any(b):
        return np.zeros_like(b), {"iterations": 0, "history": [0.0]}
    # the iteration runs on the plain Euclidean complement of constants, the
    # weighted normalization is applied afterwards (K annihilates constants)
    x, info = cg_solve(K, b, cfg, x0=x0, project=lambda v: v - v.mean())
    return remove_mean(x), info


class DirichletProblem:
    """Discrete harmonic extension with prescribed values on a node set."""

    def __init__(self, K, boundary_nodes, cfg=SolverConfig()):
        n = K.shape[0]
        boundary_nodes = np.asarray(boundary_nodes, dtype=np.int64)
        if boundary_nodes.size == 0:
            raise ValueError("Dirichlet problem needs at least one boundary node")
        mask = np.zeros(n, dtype=bool)
        mask[boundary_nodes] = True
        self.n = n
        self.boundary = boundary_nodes
        self.interior = np.flatnonzero(~mask)
        K = sp.csr_matrix(K)
        self.K_ii = K[self.interior][:, self.interior].tocsr()
        self.K_ib = K[self.interior][:, boundary_nodes].tocsr()
        self.cfg = cfg

    def solve(self, values, x0=None):
        values = np.asarray(values, dtype=float)
        u = np.empty(self.n)
        u[self.boundary] = values
        info = {"iterations": 0, "history": []}
        if self.interior.size:
            rhs = -(self.K_ib @ values)
            guess = None if x0 is None else np.asarray(x0)[self.interior]
            u[self.interior], info = cg_solve(self.K_ii, rhs, self.cfg, x0=guess)
        return u, info


def dirichlet_solve(K, boundary_values, cfg=SolverConfig()):
    """Harmonic extension for ``boundary_values`` given as ``{node: value}`` or ``(nodes, values)``."""
    if isinstance(boundary_values, dict):
        nodes = np.fromiter(boundary_values.keys(), dtype=np.int64)
        vals = np.fromiter(boundary_values.values(), dtype=float)
    else:
        nodes, vals = boundary_values
    u, _ = DirichletProblem(K, nodes, cfg).solve(vals)
    return u


def solve_node_cross(c, a, b):
    """Solve ``c eta + eta x a = b`` for every node (rows of ``a``, ``b``).

    Closed form ``eta = (c^2 b + c (a x b) + (a.b) a) / (c (c^2 + |a|^2))``
    valid for ``c > 0``; ``c`` may be a scalar or a per-node array.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise ValueError("solve_node_cross requires c > 0")
    if c.ndim == 1:
        c = c[:, None]
    ab = np.sum(a * b, axis=-1, keepdims=True)
    aa = np.sum(a * a, axis=-1, keepdims=True)
    return (c * c * b + c * np.cross(a, b) + ab * a) / (c * (c * c + aa))

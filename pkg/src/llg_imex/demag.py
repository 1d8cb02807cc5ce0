"""Stray field by the Fredkin-Koehler FEM-BEM splitting.

The magnetostatic potential is split as ``u = u1 + u2``:

1. ``u1`` solves a pure Neumann problem driven by ``m`` (zero mean),
2. the boundary datum ``g`` is the L2(boundary) projection of
   ``(K - 1/2) u1`` with ``K`` the Laplace double-layer operator,
3. ``u2`` is the discrete harmonic extension of ``g``,
4. the stray field is ``-grad(u1 + u2)``, constant per tetrahedron.

The double-layer potential of a linear density on a flat triangle is
integrated in closed form (signed solid angle plus edge logarithms), so the
only quadrature is the outer one used for Galerkin testing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import FESpace
from .linsolve import DirichletProblem, SolverConfig, cg_zero_mean
from .mesh import MeshError, extract_boundary

# symmetric triangle rules: (barycentric points, weights summing to one)
_A5, _B5 = 0.059715871789770, 0.470142064105115
_C5, _D5 = 0.797426985353087, 0.101286507323456
TRIANGLE_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    5: (np.array([[1 / 3, 1 / 3, 1 / 3],
                  [_A5, _B5, _B5], [_B5, _A5, _B5], [_B5, _B5, _A5],
                  [_C5, _D5, _D5], [_D5, _C5, _D5], [_D5, _D5, _C5]]),
        np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)),
}


def double_layer_linear(points, tri_vertices, chunk=256):
    """Double-layer potential of the three linear hat densities of each triangle.

    Returns ``W`` of shape (P, T, 3) with
    ``W[p, t, i] = 1/(4 pi) * int_T phi_i(y) (x_p - y).n(y) / |x_p - y|^3 dS(y)``,
    ``n`` the unit normal of the triangle's vertex order.  Points lying in a
    triangle's plane get exactly zero (the kernel vanishes there).
    """
    x = np.asarray(points, dtype=float)
    tv = np.asarray(tri_vertices, dtype=float)
    out = np.empty((len(x), len(tv), 3))
    # log/atan terms are undefined for points on a triangle edge; those points
    # are coplanar and masked to zero afterwards
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in range(0, len(tv), chunk):
            out[:, s:s + chunk] = _dl_chunk(x, tv[s:s + chunk])
    return out


def _dl_chunk(x, y):
    y0, y1, y2 = y[:, 0], y[:, 1], y[:, 2]
    cr = np.cross(y1 - y0, y2 - y0)
    a2 = np.linalg.norm(cr, axis=1)
    if np.any(a2 <= 0):
        raise MeshError("degenerate triangle in double-layer assembly")
    n = cr / a2[:, None]
    X = x[:, None, :]                                    # (P, 1, 3)
    h = np.einsum("ptd,td->pt", X - y0[None], n)         # signed height
    proj = X - h[..., None] * n[None]                    # projection onto plane

    verts = (y0, y1, y2)
    lam = np.empty(h.shape + (3,))
    grad = np.empty((len(y), 3, 3))
    for i in range(3):
        a, b = verts[(i + 1) % 3], verts[(i + 2) % 3]
        edge = b - a
        lam[..., i] = np.einsum("ptd,td->pt", np.cross(edge[None], proj - a[None]), n) / a2
        grad[:, i] = np.cross(n, edge) / a2[:, None]

    r = [v[None] - X for v in verts]                     # (P, T, 3) each
    rho = [np.linalg.norm(v, axis=-1) for v in r]
    num = np.einsum("ptd,ptd->pt", r[0], np.cross(r[1], r[2]))
    den = (rho[0] * rho[1] * rho[2]
           + np.einsum("ptd,ptd->pt", r[0], r[1]) * rho[2]
           + np.einsum("ptd,ptd->pt", r[0], r[2]) * rho[1]
           + np.einsum("ptd,ptd->pt", r[1], r[2]) * rho[0])
    omega = -2.0 * np.arctan2(num, den)                  # signed like h

    edge_sum = np.zeros(h.shape + (3,))
    for i in range(3):
        a, b = verts[i], verts[(i + 1) % 3]
        s = np.linalg.norm(b - a, axis=1)
        nu = np.cross(b - a, n) / s[:, None]             # outward in-plane edge normal
        ra, rb = rho[i], rho[(i + 1) % 3]
        log_term = np.log((ra + rb + s) / (ra + rb - s))
        edge_sum += log_term[..., None] * nu[None]

    coplanar = np.abs(h) <= 1e-12 * np.sqrt(a2)[None]
    w = lam * omega[..., None] - h[..., None] * np.einsum("ptd,tid->pti", edge_sum, grad)
    w[coplanar] = 0.0
    return w / (4.0 * np.pi)


def boundary_mass(surface):
    """Consistent P1 mass matrix of a triangulated surface."""
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = surface.areas[:, None, None] * ref[None]
    tri = surface.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = surface.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class DoubleLayerMatrix:
    """Discrete double-layer operator on the boundary nodes.

    ``matrix[l, l']`` is the action of ``K`` on the hat function of boundary
    node ``l'`` tested against hat ``l`` (``testing="galerkin"``) or
    evaluated at node ``l`` (``testing="collocation"``).
    """

    matrix: np.ndarray
    testing: str
    quadrature_order: int

    def __matmul__(self, density):
        return self.matrix @ density


def assemble_double_layer(surface, quadrature_order=5, testing="galerkin"):
    """Assemble the double-layer matrix on a closed oriented surface."""
    tri_xyz = surface.points[surface.triangles]
    tri = surface.triangles
    nb = surface.n_nodes

    if testing == "collocation":
        eval_pts = surface.points
    elif testing == "galerkin":
        if quadrature_order not in TRIANGLE_RULES:
            raise ValueError(f"quadrature order must be one of {sorted(TRIANGLE_RULES)}")
        bary, wts = TRIANGLE_RULES[quadrature_order]
        eval_pts = np.einsum("qi,tid->tqd", bary, tri_xyz).reshape(-1, 3)
    else:
        raise ValueError(f"unknown testing scheme {testing!r}")

    # values of K(phi_l') at every evaluation point
    kvals = np.zeros((len(eval_pts), nb))
    chunk = max(1, int(4_000_000 // max(1, len(eval_pts))))
    for s in range(0, len(tri), chunk):
        w = double_layer_linear(eval_pts, tri_xyz[s:s + chunk])
        for i in range(3):
            cols = tri[s:s + chunk, i]
            # several triangles share a column: accumulate through a sparse product
            scatter = sp.csr_matrix((np.ones(len(cols)), (np.arange(len(cols)), cols)),
                                    shape=(len(cols), nb))
            kvals += (scatter.T @ w[:, :, i].T).T

    if testing == "collocation":
        return DoubleLayerMatrix(kvals, testing, 0)

    nq = len(wts)
    qw = (surface.areas[:, None] * wts[None]).ravel()               # (T*nq,)
    rows = np.repeat(np.arange(len(tri) * nq), 3)
    cols = np.repeat(tri, nq, axis=0).ravel()
    phi = sp.csr_matrix((np.tile(bary, (len(tri), 1)).ravel(), (rows, cols)),
                        shape=(len(tri) * nq, nb))
    matrix = np.asarray(phi.T @ (qw[:, None] * kvals))
    return DoubleLayerMatrix(matrix, testing, quadrature_order)


class StrayFieldSolver:
    """Stray field operator ``m -> -grad u`` (element-constant output).

    Parameters
    ----------
    space : FESpace or TetMesh
    quadrature_order : outer triangle rule for Galerkin testing.
    testing : "galerkin" (default) or "collocation".
    cfg : CG settings for the Neumann and Dirichlet solves.
    """

    def __init__(self, space, quadrature_order=5, testing="galerkin",
                 cfg=SolverConfig(rtol=1e-12)):
        if not isinstance(space, FESpace):
            space = FESpace(space)
        self.space = space
        self.mesh = space.mesh
        self.cfg = cfg
        self.surface = extract_boundary(self.mesh)
        self.boundary_nodes = self.surface.node_map
        self.double_layer = assemble_double_layer(self.surface, quadrature_order, testing)

        nb = self.surface.n_nodes
        if testing == "galerkin":
            mb = boundary_mass(self.surface).toarray()
            self.boundary_operator = np.linalg.solve(mb, self.double_layer.matrix) - 0.5 * np.eye(nb)
        else:
            self.boundary_operator = self.double_layer.matrix - 0.5 * np.eye(nb)

        self.dirichlet = DirichletProblem(space.stiffness, self.boundary_nodes, cfg)
        self._rhs_ops = self._neumann_rhs_operators()
        self.n_solves = 0

    def _neumann_rhs_operators(self):
        # b_l = sum_K |K| mean_K(m) . grad phi_l
        mesh = self.mesh
        vol = mesh.element_volumes
        rows = mesh.tets.ravel()
        cols = np.repeat(np.arange(mesh.n_elements), 4)
        avg = self.space.averager
        ops = []
        for d in range(3):
            vals = (vol[:, None] * self.space.grads[:, :, d]).ravel()
            s = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_elements))
            ops.append((s @ avg).tocsr())
        return ops

    def potentials(self, m):
        """Return ``(u1, u2)`` nodal potentials for magnetization ``m``."""
        m = np.asarray(m, dtype=float)
        if not np.all(np.isfinite(m)):
            raise ValueError("non-finite magnetization passed to the stray field solver")
        b = sum(op @ m[:, d] for d, op in enumerate(self._rhs_ops))
        u1, _ = cg_zero_mean(self.space.stiffness, b, self.space.beta, self.cfg)
        g = self.boundary_operator @ u1[self.boundary_nodes]
        u2, _ = self.dirichlet.solve(g)
        self.n_solves += 1
        return u1, u2

    def __call__(self, m):
        u1, u2 = self.potentials(m)
        u = u1 + u2
        return -np.einsum("ea,ead->ed", u[self.mesh.tets], self.space.grads)


def stray_field(solver, m):
    return solver(m)


def stray_energy_product(solver, m, field=None):
    """``<pi(m), m>`` as the exact integral of the element field against P1 ``m``."""
    if field is None:
        field = solver(m)
    return solver.space.inner_l2_element(field, m)

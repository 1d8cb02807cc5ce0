"""Lowest-order (P1) finite element machinery on tetrahedral meshes.

Nodal vector fields are ``(N, 3)`` float arrays (one 3-vector per mesh node),
element fields are ``(M, 3)`` arrays (one constant vector per tetrahedron).
Scalar nodal fields are ``(N,)`` arrays.

Two L2 products are in play:

* the exact one, realized by the consistent mass matrix, and
* the lumped one ``<u, v>_h = sum_l beta_l u(z_l) . v(z_l)`` with
  ``beta_l`` the integral of the hat function of node ``l``.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp


def barycentric_gradients(mesh):
    """Constant gradients of the four hat functions on every tet, shape (M, 4, 3)."""
    p = mesh.vertices[mesh.tets]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=1)
    inv = np.linalg.inv(jac)
    g123 = np.transpose(inv, (0, 2, 1))  # row i = grad of lambda_{i+1}
    g0 = -g123.sum(axis=1, keepdims=True)
    return np.concatenate([g0, g123], axis=1)


def _scatter(mesh, local):
    """Assemble (M, 4, 4) element matrices into a CSR matrix."""
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_lumped_weights(mesh):
    """beta_l = sum over tets containing node l of |K| / 4."""
    beta = np.zeros(mesh.n_nodes)
    np.add.at(beta, mesh.tets.ravel(), np.repeat(mesh.element_volumes / 4.0, 4))
    return beta


def assemble_stiffness(mesh, grads=None):
    if grads is None:
        grads = barycentric_gradients(mesh)
    local = np.einsum("eid,ejd->eij", grads, grads) * mesh.element_volumes[:, None, None]
    return _scatter(mesh, local)


def assemble_consistent_mass(mesh):
    ref = (np.ones((4, 4)) + np.eye(4)) / 20.0
    local = mesh.element_volumes[:, None, None] * ref[None]
    return _scatter(mesh, local)


def inner_h(u, v, beta):
    """Lumped L2 product of two nodal (vector or scalar) fields."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.ndim == 1:
        return float(np.dot(beta, u * v))
    return float(np.dot(beta, np.einsum("ij,ij->i", u, v)))


def norm_h(u, beta):
    return float(np.sqrt(inner_h(u, u, beta)))


def discrete_laplacian(K, beta, v):
    """(Delta_h v)_l = -(K v)_l / beta_l, componentwise.

    Satisfies <Delta_h v, psi>_h = -<grad v, grad psi> for all nodal psi.
    """
    kv = K @ v
    if kv.ndim == 1:
        return -kv / beta
    return -kv / beta[:, None]


def element_average_operator(mesh):
    """Sparse (M, N) matrix mapping nodal values to tet averages."""
    m = mesh.n_elements
    rows = np.repeat(np.arange(m), 4)
    return sp.csr_matrix((np.full(4 * m, 0.25), (rows, mesh.tets.ravel())),
                         shape=(m, mesh.n_nodes))


def project_Ph(source, mesh, beta, mass=None):
    """Discrete L2 projection P_h with respect to the lumped product.

    ``beta_l (P_h f)(z_l) = integral of f * phi_l``.  ``source`` is either a
    nodal field (``N`` rows, the consistent mass gives the exact integral)
    or an element-constant field (``M`` rows, closed-form hat integral
    ``|K| / 4``).  When ``N == M`` the source is treated as nodal.
    """
    source = np.asarray(source, dtype=float)
    vec = source.ndim == 2
    if source.shape[0] == mesh.n_nodes:
        if mass is None:
            mass = assemble_consistent_mass(mesh)
        rhs = mass @ source
    elif source.shape[0] == mesh.n_elements:
        w = np.repeat(mesh.element_volumes / 4.0, 4)
        idx = mesh.tets.ravel()
        if vec:
            rhs = np.zeros((mesh.n_nodes, source.shape[1]))
            np.add.at(rhs, idx, w[:, None] * np.repeat(source, 4, axis=0))
        else:
            rhs = np.zeros(mesh.n_nodes)
            np.add.at(rhs, idx, w * np.repeat(source, 4))
    else:
        raise ValueError(f"source has {source.shape[0]} rows; expected {mesh.n_nodes} "
                         f"(nodal) or {mesh.n_elements} (element)")
    return rhs / beta[:, None] if vec else rhs / beta


def interpolate_nodal(f, mesh, t=None):
    """Nodal interpolant of a coordinate function ``f(x)`` (or ``f(x, t)``).

    ``f`` receives the (N, 3) array of node coordinates and returns values
    of shape (N, 3) or (N,); constants broadcast.
    """
    x = mesh.vertices
    if callable(f):
        vals = f(x) if t is None else f(x, t)
    else:
        vals = f
    vals = np.array(vals, dtype=float)
    if vals.ndim == 1 and vals.shape[0] == 3 and mesh.n_nodes != 3:
        vals = np.broadcast_to(vals, (mesh.n_nodes, 3)).copy()
    elif vals.ndim == 0:
        vals = np.full(mesh.n_nodes, float(vals))
    if vals.shape[0] != mesh.n_nodes:
        raise ValueError(f"interpolated function returned shape {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite value while interpolating")
    return vals


def element_gradient(v, mesh, grads=None):
    """Per-element gradient tensors ``G[e, j, d] = d v_j / d x_d``."""
    if grads is None:
        grads = barycentric_gradients(mesh)
    vloc = np.asarray(v)[mesh.tets]  # (M, 4, 3)
    return np.einsum("eaj,ead->ejd", vloc, grads)


def directional_derivative(v, direction, mesh, grads=None):
    """Element field (direction . grad) v.  ``direction`` is (3,) or (M, 3)."""
    G = element_gradient(v, mesh, grads)
    d = np.asarray(direction, dtype=float)
    if d.ndim == 1:
        return G @ d
    return np.einsum("ejd,ed->ej", G, d)


class FESpace:
    """Cached P1 operators of one mesh.

    All operators are assembled lazily and treated as immutable.
    """

    def __init__(self, mesh):
        self.mesh = mesh

    @cached_property
    def grads(self):
        return barycentric_gradients(self.mesh)

    @cached_property
    def beta(self):
        return assemble_lumped_weights(self.mesh)

    @cached_property
    def stiffness(self):
        return assemble_stiffness(self.mesh, self.grads)

    @cached_property
    def mass(self):
        return assemble_consistent_mass(self.mesh)

    @cached_property
    def averager(self):
        return element_average_operator(self.mesh)

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    def inner_h(self, u, v):
        return inner_h(u, v, self.beta)

    def norm_h(self, u):
        return norm_h(u, self.beta)

    def inner_l2(self, u, v):
        """Exact L2 product of two P1 fields."""
        return float(np.sum(u * (self.mass @ v)))

    def norm_l2(self, u):
        return float(np.sqrt(self.inner_l2(u, u)))

    def inner_grad(self, u, v):
        """<grad u, grad v> summed over components."""
        return float(np.sum(u * (self.stiffness @ v)))

    def inner_l2_element(self, g, v):
        """Exact L2 product of an element-constant field with a P1 field."""
        return float(np.sum(self.mesh.element_volumes[:, None] * g * (self.averager @ v)))

    def laplacian(self, v):
        return discrete_laplacian(self.stiffness, self.beta, v)

    @cached_property
    def _element_to_node(self):
        # (N, M) hat integrals |K|/4 scaled by 1/beta
        op = self.averager.T.multiply(self.mesh.element_volumes[None, :])
        return sp.diags(1.0 / self.beta) @ op.tocsr()

    @cached_property
    def _nodal_projection(self):
        return (sp.diags(1.0 / self.beta) @ self.mass).tocsr()

    def project(self, source):
        """P_h of a nodal (N rows) or element (M rows) field, via cached operators."""
        source = np.asarray(source, dtype=float)
        if source.shape[0] == self.mesh.n_nodes:
            return self._nodal_projection @ source
        if source.shape[0] == self.mesh.n_elements:
            return self._element_to_node @ source
        return project_Ph(source, self.mesh, self.beta, self.mass)

    def interpolate(self, f, t=None):
        return interpolate_nodal(f, self.mesh, t)

    def gradient(self, v):
        return element_gradient(v, self.mesh, self.grads)

    def directional_derivative(self, v, direction):
        return directional_derivative(v, direction, self.mesh, self.grads)

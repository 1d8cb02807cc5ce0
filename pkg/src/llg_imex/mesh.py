"""Tetrahedral meshes: construction, boundary extraction, quality and I/O.

Meshes are plain numpy containers.  ``TetMesh`` validates its invariants
on construction (positive orientation, conformity, closed boundary) and is
not modified afterwards.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh data or malformed mesh files."""


# local faces of a tetrahedron (vertex 0..3), the omitted vertex is the index
_TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


def _signed_volumes(vertices, tets):
    p = vertices[tets]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    d3 = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", d1, np.cross(d2, d3)) / 6.0


@dataclass(frozen=True)
class Surface:
    """Oriented triangulated surface.

    ``triangles`` index into ``points`` (boundary-local numbering);
    ``node_map[j]`` is the global mesh id of boundary node ``j``.
    """

    points: np.ndarray
    triangles: np.ndarray
    node_map: np.ndarray
    normals: np.ndarray = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = self.points[self.triangles]
        cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        two_area = np.linalg.norm(cr, axis=1)
        if np.any(two_area <= 1e-14 * max(1.0, float(np.max(two_area, initial=0.0)))):
            raise MeshError("degenerate boundary triangle")
        object.__setattr__(self, "areas", 0.5 * two_area)
        object.__setattr__(self, "normals", cr / two_area[:, None])

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def total_area(self):
        return float(self.areas.sum())

    def area_vector_sum(self):
        return (self.areas[:, None] * self.normals).sum(axis=0)

    @classmethod
    def from_triangles(cls, points, triangles):
        """Surface whose node map is the identity (stand-alone surfaces)."""
        points = np.asarray(points, dtype=float)
        return cls(points, np.asarray(triangles, dtype=np.int64), np.arange(len(points)))


class TetMesh:
    """Conforming tetrahedral mesh with outward oriented boundary faces.

    Parameters
    ----------
    vertices : (N, 3) array
    tets : (M, 4) int array; reordered in place of a copy so that every
        element has positive signed volume.
    boundary_faces : optional (F, 3) int array.  Recomputed from the
        connectivity when omitted; when given it is checked against the
        connectivity and reoriented outward.
    """

    def __init__(self, vertices, tets, boundary_faces=None):
        vertices = np.array(vertices, dtype=float)
        tets = np.array(tets, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must be an (N, 3) array")
        if tets.ndim != 2 or tets.shape[1] != 4 or len(tets) == 0:
            raise MeshError("tets must be a non-empty (M, 4) array")
        if tets.min() < 0 or tets.max() >= len(vertices):
            raise MeshError("tet vertex index out of range")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("non-finite vertex coordinates")

        vol = _signed_volumes(vertices, tets)
        scale = np.max(np.abs(vol))
        if np.any(np.abs(vol) <= 1e-14 * scale):
            raise MeshError("degenerate tetrahedron (zero volume)")
        neg = vol < 0
        tets[neg] = tets[neg][:, [1, 0, 2, 3]]

        self.vertices = vertices
        self.tets = tets
        self.element_volumes = np.abs(vol)

        faces, owner = self._faces_seen_once()
        if boundary_faces is not None:
            given = np.asarray(boundary_faces, dtype=np.int64)
            if given.ndim != 2 or given.shape[1] != 3:
                raise MeshError("boundary faces must be an (F, 3) array")
            key_given = {tuple(sorted(f)) for f in given.tolist()}
            key_conn = {tuple(sorted(f)) for f in faces.tolist()}
            if key_given != key_conn:
                raise MeshError("boundary faces do not match the tetrahedral connectivity")
            lookup = {tuple(sorted(f)): i for i, f in enumerate(faces.tolist())}
            order = np.array([lookup[tuple(sorted(f))] for f in given.tolist()])
            faces, owner = given, owner[order]
        self.boundary_faces = self._orient_outward(faces, owner)
        self.boundary_owner = owner

        for arr in (self.vertices, self.tets, self.element_volumes,
                    self.boundary_faces, self.boundary_owner):
            arr.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    def _faces_seen_once(self):
        all_faces = self.tets[:, _TET_FACES].reshape(-1, 3)
        owner = np.repeat(np.arange(len(self.tets)), 4)
        key = np.sort(all_faces, axis=1)
        _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise MeshError("non-manifold mesh: a face is shared by more than two tetrahedra")
        once = counts[inverse] == 1
        return all_faces[once], owner[once]

    def _orient_outward(self, faces, owner):
        faces = faces.copy()
        p = self.vertices[faces]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        c_face = p.mean(axis=1)
        c_tet = self.vertices[self.tets[owner]].mean(axis=1)
        flip = np.einsum("ij,ij->i", n, c_tet - c_face) > 0
        faces[flip] = faces[flip][:, [0, 2, 1]]
        return faces

    # -- basic properties -----------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.tets)

    @property
    def volume(self):
        return float(self.element_volumes.sum())

    def boundary_nodes(self):
        return np.unique(self.boundary_faces)

    def is_conforming(self):
        """Every interior face is shared by exactly two tets with identical vertex sets."""
        key = np.sort(self.tets[:, _TET_FACES].reshape(-1, 3), axis=1)
        _, counts = np.unique(key, axis=0, return_counts=True)
        n_once = int(np.sum(counts == 1))
        return bool(np.all(counts <= 2) and n_once == len(self.boundary_faces))

    def __repr__(self):
        return f"TetMesh(nodes={self.n_nodes}, tets={self.n_elements}, boundary_faces={len(self.boundary_faces)})"


def build_box_mesh(nx, ny, nz, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    """Structured box mesh, each hexahedral cell split into 6 Kuhn tetrahedra.

    Every cell uses the same split (the main diagonal from ``lo`` to ``hi``
    corner of the cell), so the mesh is conforming without parity tricks.
    """
    counts = (nx, ny, nz)
    if any(int(c) != c or c < 1 for c in counts):
        raise MeshError(f"cell counts must be positive integers, got {counts}")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
        raise MeshError(f"need lo < hi componentwise, got lo={lo.tolist()} hi={hi.tolist()}")
    nx, ny, nz = (int(c) for c in counts)

    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    zs = np.linspace(lo[2], hi[2], nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    unit = np.eye(3, dtype=np.int64)
    tets = []
    for perm in itertools.permutations(range(3)):
        path = [np.zeros(3, dtype=np.int64)]
        for axis in perm:
            path.append(path[-1] + unit[axis])
        tets.append(np.column_stack([vid(I + o[0], J + o[1], K + o[2]) for o in path]))
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    return TetMesh(vertices, tets)


def extract_boundary(mesh):
    """Boundary surface of ``mesh`` with outward normals and boundary-local numbering."""
    node_map = mesh.boundary_nodes()
    local = np.full(mesh.n_nodes, -1, dtype=np.int64)
    local[node_map] = np.arange(len(node_map))
    tris = local[mesh.boundary_faces]
    # each boundary edge must be shared by exactly two boundary triangles
    edges = np.sort(tris[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise MeshError("non-manifold boundary surface")
    return Surface(mesh.vertices[node_map], tris, node_map)


def mesh_quality(mesh):
    """Mesh size ``h`` (max element diameter) and max of diam(K) / |K|^(1/3)."""
    p = mesh.vertices[mesh.tets]
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    diam = np.max(np.stack([np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in pairs]), axis=0)
    ratio = diam / np.cbrt(mesh.element_volumes)
    return {"h": float(diam.max()), "ratio": float(ratio.max())}


# -- plain-text mesh files ----------------------------------------------------


def save_mesh(mesh, path):
    """Write ``mesh`` in the ``tetmesh v1`` text format."""
    lines = ["tetmesh v1", f"vertices {mesh.n_nodes}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines.append(f"tets {mesh.n_elements}")
    lines += [" ".join(str(int(i)) for i in t) for t in mesh.tets]
    lines.append(f"boundary {len(mesh.boundary_faces)}")
    lines += [" ".join(str(int(i)) for i in f) for f in mesh.boundary_faces]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path):
    """Read a ``tetmesh v1`` file.  Errors carry the offending line number."""
    raw = Path(path).read_text().splitlines()
    rows = []
    for lineno, line in enumerate(raw, start=1):
        content = line.split("#", 1)[0].strip()
        if content:
            rows.append((lineno, content.split()))
    pos = 0

    def fail(msg, lineno=None):
        where = f"line {lineno}: " if lineno is not None else ""
        raise MeshError(f"{path}: {where}{msg}")

    if not rows or rows[0][1] != ["tetmesh", "v1"]:
        fail("missing 'tetmesh v1' header", rows[0][0] if rows else None)
    pos = 1

    def section(name, width, conv, required=True):
        nonlocal pos
        if pos >= len(rows):
            if required:
                fail(f"missing section '{name}'")
            return None
        lineno, tok = rows[pos]
        if tok[0] != name:
            if required:
                fail(f"expected section '{name}', found '{tok[0]}'", lineno)
            return None
        if len(tok) != 2 or not tok[1].isdigit():
            fail(f"bad '{name}' section header", lineno)
        count = int(tok[1])
        pos += 1
        out = []
        for _ in range(count):
            if pos >= len(rows):
                fail(f"section '{name}' truncated: expected {count} records, got {len(out)}")
            lineno, tok = rows[pos]
            if len(tok) != width:
                fail(f"expected {width} values in section '{name}'", lineno)
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                fail(f"unparsable value in section '{name}'", lineno)
            pos += 1
        return out

    vertices = section("vertices", 3, float)
    tets = section("tets", 4, int)
    boundary = section("boundary", 3, int, required=False)
    if pos < len(rows):
        fail("unexpected trailing content", rows[pos][0])
    return TetMesh(np.array(vertices, dtype=float).reshape(-1, 3),
                   np.array(tets, dtype=np.int64).reshape(-1, 4),
                   None if boundary is None else np.array(boundary, dtype=np.int64).reshape(-1, 3))

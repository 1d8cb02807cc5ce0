import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from llg_imex.mesh import (MeshError, Surface, TetMesh, build_box_mesh, extract_boundary,
                           load_mesh, mesh_quality, save_mesh)


def test_single_cell_box(cube1):
    assert cube1.n_nodes == 8
    assert cube1.n_elements == 6
    assert cube1.volume == pytest.approx(1.0, abs=1e-14)
    assert len(cube1.boundary_faces) == 12
    assert cube1.is_conforming()


def test_default_cube_counts():
    mesh = build_box_mesh(8, 8, 8)
    assert mesh.n_elements == 3072
    assert mesh.n_nodes == 729
    surf = extract_boundary(mesh)
    assert len(surf.triangles) == 768
    assert len(surf.node_map) == 729 - 7 ** 3
    assert mesh_quality(mesh)["h"] == pytest.approx(np.sqrt(3) / 8, rel=1e-14)


def test_single_cell_surface(cube1):
    surf = extract_boundary(cube1)
    assert len(surf.triangles) == 12
    assert surf.total_area == pytest.approx(6.0, rel=1e-14)
    assert np.linalg.norm(surf.area_vector_sum()) <= 1e-12


def test_reference_tet_quality(ref_tet):
    q = mesh_quality(ref_tet)
    assert q["h"] == pytest.approx(np.sqrt(2), rel=1e-14)
    assert q["ratio"] >= 6 ** (1 / 3)


def test_quality_ratio_refinement_invariant():
    r = [mesh_quality(build_box_mesh(n, n, n, (0, 0, 0), (2, 1, 3)))["ratio"] for n in (1, 2, 4)]
    assert np.allclose(r, r[0], rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4),
       st.lists(st.floats(0.2, 5.0), min_size=3, max_size=3),
       st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3))
def test_box_invariants(nx, ny, nz, size, lo):
    lo = np.array(lo)
    hi = lo + np.array(size)
    mesh = build_box_mesh(nx, ny, nz, lo, hi)
    assert mesh.n_nodes == (nx + 1) * (ny + 1) * (nz + 1)
    assert mesh.n_elements == 6 * nx * ny * nz
    assert np.all(mesh.element_volumes > 0)
    assert mesh.volume == pytest.approx(np.prod(size), rel=1e-12)
    assert mesh.is_conforming()
    surf = extract_boundary(mesh)
    assert np.linalg.norm(surf.area_vector_sum()) <= 1e-12 * surf.total_area
    # outward orientation: tet centroid lies on the inner side of each face
    p = mesh.vertices[mesh.boundary_faces]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    c_tet = mesh.vertices[mesh.tets[mesh.boundary_owner]].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", n, c_tet - p.mean(axis=1)) < 0)
    # node map is a bijection onto boundary nodes
    assert np.array_equal(np.sort(surf.node_map), np.unique(mesh.boundary_faces))
    assert np.allclose(surf.points, mesh.vertices[surf.node_map])


def test_negative_orientation_is_fixed():
    mesh = TetMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[1, 0, 2, 3]])
    assert mesh.element_volumes[0] == pytest.approx(1 / 6)
    v = mesh.vertices[mesh.tets[0]]
    assert np.linalg.det(v[1:] - v[0]) > 0


def test_invalid_meshes_rejected():
    with pytest.raises(MeshError, match="degenerate"):
        TetMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 0, 1]], [[0, 1, 2, 3]])
    with pytest.raises(MeshError, match="out of range"):
        TetMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2, 3]])
    with pytest.raises(MeshError, match="lo < hi"):
        build_box_mesh(2, 2, 2, (0, 0, 0), (1, 0, 1))
    with pytest.raises(MeshError):
        build_box_mesh(0, 1, 1)
    # three tets sharing one face
    pts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1], [0.3, 0.3, 1]]
    with pytest.raises(MeshError, match="non-manifold"):
        TetMesh(pts, [[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]])


def test_two_tets_sharing_an_edge_only_is_non_manifold_boundary():
    pts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0], [0, 0, -1]]
    mesh = TetMesh(pts, [[0, 1, 2, 3], [0, 1, 4, 5]])
    with pytest.raises(MeshError, match="non-manifold boundary"):
        extract_boundary(mesh)


def test_given_boundary_faces_checked_and_oriented(cube1):
    flipped = cube1.boundary_faces[:, [0, 2, 1]]
    mesh = TetMesh(cube1.vertices, cube1.tets, flipped)
    assert np.array_equal(np.sort(mesh.boundary_faces, axis=1), np.sort(cube1.boundary_faces, axis=1))
    assert np.linalg.norm(extract_boundary(mesh).area_vector_sum()) < 1e-12
    with pytest.raises(MeshError, match="do not match"):
        TetMesh(cube1.vertices, cube1.tets, cube1.boundary_faces[:-1])


def test_mesh_arrays_are_read_only(cube1):
    with pytest.raises(ValueError):
        cube1.vertices[0, 0] = 5.0


def test_degenerate_surface_triangle():
    with pytest.raises(MeshError):
        Surface.from_triangles([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_save_load_round_trip(tmp_path):
    mesh = build_box_mesh(2, 1, 3, (0, 0, 0), (1, 0.5, 2))
    a, b = tmp_path / "a.mesh", tmp_path / "b.mesh"
    save_mesh(mesh, a)
    loaded = load_mesh(a)
    save_mesh(loaded, b)
    assert a.read_bytes() == b.read_bytes()
    assert np.array_equal(loaded.vertices, mesh.vertices)
    assert np.array_equal(loaded.tets, mesh.tets)
    assert np.array_equal(loaded.boundary_faces, mesh.boundary_faces)


CUBE_FIXTURE = """tetmesh v1
# unit cube, 6 tetrahedra
vertices 8
0 0 0
0 0 1
0 1 0
0 1 1
1 0 0
1 0 1
1 1 0
1 1 1
tets 6   # Kuhn split
0 4 6 7
0 4 5 7
0 2 6 7
0 2 3 7
0 1 5 7
0 1 3 7
"""


def test_load_fixture_without_boundary(tmp_path):
    p = tmp_path / "cube.mesh"
    p.write_text(CUBE_FIXTURE)
    mesh = load_mesh(p)
    assert mesh.n_nodes == 8
    assert mesh.n_elements == 6
    assert len(mesh.boundary_faces) == 12
    assert mesh.volume == pytest.approx(1.0)


def test_load_errors(tmp_path):
    p = tmp_path / "bad.mesh"
    p.write_text(CUBE_FIXTURE.split("tets")[0])
    with pytest.raises(MeshError, match="missing section 'tets'"):
        load_mesh(p)
    p.write_text("\n".join(CUBE_FIXTURE.splitlines()[:8]))
    with pytest.raises(MeshError, match="'vertices' truncated"):
        load_mesh(p)
    p.write_text(CUBE_FIXTURE.replace("0 1 1\n", "0 x 1\n"))
    with pytest.raises(MeshError, match="line 7"):
        load_mesh(p)
    p.write_text(CUBE_FIXTURE.replace("tetmesh v1", "tetmesh v2"))
    with pytest.raises(MeshError, match="header"):
        load_mesh(p)

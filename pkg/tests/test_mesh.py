import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from femtool.mesh import (
    MeshFormatError,
    MeshValidationError,
    SimplicialMesh,
    check_conforming,
    load_mesh,
    locate_simplex,
    reference_map,
    save_mesh,
    select_facets,
    simplex_volume,
    uniform_interval_mesh,
    uniform_rectangle_mesh,
)

TWO_TRIANGLES = """\
dim 2
points 4
0 0
1 0
1 1
0 1   # comment
simplices 2
0 1 2
0 2 3
boundary 4
0 1
1 2
2 3
3 0
active 1
0 1
"""


def test_load_text_and_roundtrip(tmp_path):
    mesh = load_mesh(io.StringIO(TWO_TRIANGLES))
    assert mesh.dim == 2 and mesh.n_simplices == 2 and len(mesh.active) == 1
    path = tmp_path / "m.txt"
    save_mesh(mesh, path)
    assert load_mesh(path) == mesh
    assert load_mesh(save_mesh(mesh).encode()) == mesh
    assert load_mesh(io.BytesIO(TWO_TRIANGLES.encode())) == mesh


def test_dirichlet_is_boundary_minus_active():
    mesh = load_mesh(io.StringIO(TWO_TRIANGLES))
    assert {tuple(sorted(f)) for f in mesh.dirichlet.tolist()} == {(1, 2), (2, 3), (0, 3)}


@pytest.mark.parametrize(
    "text",
    [
        "dim 2\npoints 1\n0 0\n",  # missing sections
        "dim 2\npoints 1\n0 x\nsimplices 0\nboundary 0\nactive 0\n",
        "dim 2\npoints 1\n0 0 0\nsimplices 0\nboundary 0\nactive 0\n",
        "dim two\n",
        "dim 1\npoints 2\n0\n1\nsimplices 1\n0 1\nboundary 0\nactive 0\nextra\n",
    ],
)
def test_format_errors(text):
    with pytest.raises(MeshFormatError):
        load_mesh(io.StringIO(text))


def test_validation_errors():
    with pytest.raises(MeshValidationError, match="references point"):
        SimplicialMesh([[0.0], [1.0]], [[0, 2]])
    with pytest.raises(MeshValidationError, match="degenerate"):
        SimplicialMesh([[0, 0], [1, 1], [2, 2]], [[0, 1, 2]])
    with pytest.raises(MeshValidationError, match="repeated"):
        SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 1]])
    with pytest.raises(MeshValidationError, match="active"):
        SimplicialMesh([[0.0], [1.0]], [[0, 1]], [[0]], [[1]])


def test_nonconforming_meshes_rejected():
    # hanging vertex: point 4 sits in the middle of edge (0, 2) of the first triangle
    pts = [[0, 0], [2, 0], [0, 2], [2, 2], [1, 1]]
    bad = SimplicialMesh(pts, [[0, 1, 2], [1, 3, 4], [3, 2, 4]])
    with pytest.raises(MeshValidationError):
        check_conforming(bad)
    # two triangles on the same side of a shared edge
    overlap = SimplicialMesh([[0, 0], [1, 0], [0, 1], [0.2, 0.2]], [[0, 1, 2], [0, 1, 3]])
    with pytest.raises(MeshValidationError, match="overlap"):
        check_conforming(overlap)
    # an interior edge declared as boundary
    fake = SimplicialMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]], [[0, 2]])
    with pytest.raises(MeshValidationError, match="exterior"):
        check_conforming(fake)


@given(st.sampled_from([1 / 2, 1 / 3, 1 / 4, 1 / 8, 0.3]), st.sampled_from(["right", "left", "mirror"]))
def test_rectangle_mesh_invariants(h, diagonal):
    mesh = uniform_rectangle_mesh((-1, 1), (0, 2), h, diagonal=diagonal)
    check_conforming(mesh)
    assert mesh.volumes.sum() == pytest.approx(4.0)
    assert mesh.max_edge_length <= h + 1e-12
    # the leg is never more than one refinement step too short
    assert mesh.max_edge_length > h / 2
    lengths = np.linalg.norm(np.diff(mesh.points[mesh.boundary], axis=1)[:, 0], axis=1)
    assert lengths.sum() == pytest.approx(8.0)


def test_mirror_mesh_is_symmetric():
    mesh = uniform_rectangle_mesh((0, 1), (0, 2), 0.2, diagonal="mirror")
    pts = mesh.points
    key = {tuple(np.round(p, 12)): i for i, p in enumerate(pts)}
    perm = np.array([key[(round(1 - x, 12) + 0.0, round(y, 12))] for x, y in pts])
    mirrored = {tuple(sorted(perm[s])) for s in mesh.simplices.tolist()}
    assert mirrored == {tuple(sorted(s)) for s in mesh.simplices.tolist()}


def test_spacing_must_divide():
    with pytest.raises(ValueError):
        uniform_rectangle_mesh((0, 1), (0, 1), spacing=0.3)
    m = uniform_rectangle_mesh((0, 1), (0, 1), spacing=0.25)
    assert m.n_simplices == 32


def test_interval_mesh():
    m = uniform_interval_mesh((0, 1), 0.125)
    assert m.n_simplices == 8 and m.max_edge_length == pytest.approx(0.125)
    assert sorted(m.boundary.ravel().tolist()) == [0, 8]


def test_reference_map_and_volume():
    mesh = SimplicialMesh([[1, 1], [3, 1], [1, 4]], [[0, 1, 2]])
    amap = reference_map(mesh, 0)
    assert np.allclose(amap(np.array([[0, 0], [1, 0], [0, 1]])), mesh.points)
    assert np.allclose(amap.inverse(mesh.points), [[0, 0], [1, 0], [0, 1]])
    assert simplex_volume(mesh, 0) == pytest.approx(3.0)
    assert amap.abs_det == pytest.approx(6.0)


def test_tetrahedron_volume():
    mesh = SimplicialMesh(np.vstack([np.zeros(3), 2 * np.eye(3)]), [[0, 1, 2, 3]])
    assert mesh.volumes[0] == pytest.approx(8 / math.factorial(3))


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_barycentric_reconstructs_point(a, b):
    mesh = uniform_rectangle_mesh((0, 1), (0, 1), spacing=0.5)
    x = np.array([[a, b]])
    lam = mesh.barycentric(x)[0]
    verts = mesh.points[mesh.simplices]
    assert np.allclose(np.einsum("si,sij->sj", lam, verts), x)
    k = locate_simplex(mesh, x[0])
    assert k is not None and np.all(lam[k] >= -1e-12)
    # lowest index among the containing simplices
    assert k == int(np.flatnonzero(np.all(lam >= -1e-12, axis=1))[0])


def test_locate_outside_and_on_edge():
    mesh = uniform_rectangle_mesh((0, 1), (0, 1), spacing=1.0)
    assert locate_simplex(mesh, [1.5, 0.5]) is None
    # the diagonal is shared by both triangles; the lower index wins
    assert locate_simplex(mesh, [0.5, 0.5]) == 0


def test_select_facets_and_with_active():
    mesh = uniform_rectangle_mesh((0, 1), (0, 2), spacing=0.5)
    bottom = select_facets(mesh, lambda p: np.isclose(p[:, 1], 0.0))
    assert len(bottom) == 2
    m2 = mesh.with_active(bottom)
    assert len(m2.dirichlet) == len(mesh.boundary) - 2
    assert m2 != mesh


def test_mesh_arrays_are_read_only():
    mesh = uniform_interval_mesh((0, 1), 0.5)
    with pytest.raises(ValueError):
        mesh.points[0, 0] = 3.0

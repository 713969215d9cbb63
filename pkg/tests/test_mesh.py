import io
import math

import numpy as np
import pytest

from hfvdd.mesh import (D0, D1, NEUMANN, MeshError, build_cartesian, build_from_spec,
                        build_hexagonal, build_triangular, format_mesh, load_mesh, parse_mesh,
                        regularity, validate_mesh)

UNIT_SQUARE = """polymesh 2d
# one unit cell
vertices
0 0 0
1 1 0
2 1 1
3 0 1
faces
0: 0 1 d0
1: 1 2 d0
2: 2 3 d0
3: 3 0 d0
cells
0: 0 1 2 3
"""


def all_meshes():
    return [build_cartesian(1, 1), build_cartesian(3, 2, layout="diode"),
            build_cartesian(2, 1, domain=((0.0, 2.0), (0.0, 1.0))),
            build_triangular(0, layout="diode"), build_triangular(1),
            build_from_spec("hexagonal:diode"), build_hexagonal(0.0395, layout="diode")]


MESH_IDS = ["cart1", "cart3x2", "cart2x1", "tri0", "tri1", "hex76", "hex279"]


# ---------------------------------------------------------------- builders

def test_unit_cell_geometry():
    m = build_cartesian(1, 1)
    assert (m.ncells, m.nfaces) == (1, 4)
    assert m.cell_measure[0] == pytest.approx(1.0, abs=1e-15)
    grp, r = m.cell_local(0)
    assert np.allclose(grp.dist[r], 0.5, atol=1e-15)
    assert np.allclose(m.cell_centres[0], [0.5, 0.5])


def test_cartesian_8x8_size():
    m = build_cartesian(8, 8)
    rep = regularity(m)
    assert m.ncells == 64
    assert rep.mesh_size == pytest.approx(math.sqrt(2) / 8, rel=1e-14)
    # the squared diameter reproduces the 3.12e-2 printed for the 64-cell mesh
    assert abs(rep.size_squared - 3.12e-2) <= 1e-4


def test_cartesian_on_a_rectangle():
    m = build_cartesian(2, 1, domain=((0.0, 2.0), (0.0, 1.0)))
    assert np.allclose(m.cell_measure, 1.0, atol=1e-15)
    for grp in m.groups:
        closure = (grp.face_measure[:, :, None] * grp.normals).sum(axis=1)
        assert np.all(closure == 0.0)


def test_triangular_level0_has_56_cells():
    assert build_triangular(0).ncells == 56


@pytest.mark.parametrize("level", [0, 1, 2])
def test_triangular_refinement_quadruples(level):
    assert build_triangular(level + 1).ncells == 4 * build_triangular(level).ncells


@pytest.mark.parametrize("level", [0, 1])
def test_faces_shared_by_at_most_two_cells(level):
    m = build_triangular(level)
    counts = np.zeros(m.nfaces, int)
    for cf in m.cell_faces:
        np.add.at(counts, cf, 1)
    assert counts.max() <= 2 and counts.min() >= 1
    assert np.array_equal(counts == 1, m.face_cells[:, 1] < 0)


def test_invalid_builder_arguments():
    with pytest.raises(MeshError):
        build_cartesian(0, 3)
    with pytest.raises(MeshError):
        build_triangular(-1)
    with pytest.raises(MeshError):
        build_cartesian(2, 2, domain=((0.0, 0.0), (0.0, 1.0)))
    with pytest.raises(ValueError):
        build_cartesian(2, 2, layout="periodic")


def test_hexagonal_fixture():
    m = build_from_spec("hexagonal:diode")
    rep = regularity(m)
    assert m.ncells == 76
    assert math.isfinite(rep.theta) and rep.theta < 20
    # hexagon-dominant: most cells have six faces
    nf = np.array([len(cf) for cf in m.cell_faces])
    assert (nf == 6).sum() > m.ncells / 2


def test_hexagonal_fixture_matches_generator():
    shipped = build_from_spec("hexagonal:diode")
    fresh = build_hexagonal(layout="diode")
    assert shipped.ncells == fresh.ncells
    assert np.allclose(np.sort(shipped.cell_measure), np.sort(fresh.cell_measure), atol=1e-14)


@pytest.mark.parametrize("spec,cells", [("cartesian:4x3", 12), ("triangular:1:diode", 224),
                                        ("hexagonal:0.0395:diode", 279)])
def test_build_from_spec(spec, cells):
    assert build_from_spec(spec).ncells == cells


# ---------------------------------------------------------------- invariants

@pytest.mark.parametrize("mesh", all_meshes(), ids=MESH_IDS)
def test_geometric_invariants(mesh):
    validate_mesh(mesh, require_dirichlet=False)
    for grp in mesh.groups:
        hK = mesh.cell_diameter[grp.cells]
        closure = (grp.face_measure[:, :, None] * grp.normals).sum(axis=1)
        assert np.abs(closure).max() <= 1e-12 * max(hK.max(), 1.0)
        assert np.allclose(grp.pyramid.sum(axis=1), grp.volume, rtol=1e-12, atol=0)
        assert np.all(grp.dist > 0) and np.all(grp.face_measure > 0)


@pytest.mark.parametrize("mesh", all_meshes(), ids=MESH_IDS)
def test_interior_normals_are_opposite(mesh):
    normals = {}
    for k, f, n, _, _ in mesh.pairs():
        normals[(int(k), int(f))] = n
    for f in np.flatnonzero(mesh.face_cells[:, 1] >= 0):
        k, l = mesh.face_cells[f]
        assert np.abs(normals[(k, f)] + normals[(l, f)]).max() <= 1e-12


@pytest.mark.parametrize("mesh", all_meshes(), ids=MESH_IDS)
def test_face_barycentres_on_their_faces(mesh):
    a = mesh.vertices[mesh.face_vertices[:, 0]]
    b = mesh.vertices[mesh.face_vertices[:, 1]]
    t = b - a
    off = mesh.face_centres - a
    cross = np.abs(t[:, 0] * off[:, 1] - t[:, 1] * off[:, 0]) / np.hypot(t[:, 0], t[:, 1])
    assert cross.max() <= 1e-12 * mesh.cell_diameter.min()


@pytest.mark.parametrize("mesh", all_meshes(), ids=MESH_IDS)
def test_boundary_tags_partition_the_boundary(mesh):
    bnd = mesh.face_cells[:, 1] < 0
    assert np.all(np.isin(mesh.face_tags[bnd], [D0, D1, NEUMANN]))
    assert np.all(mesh.face_tags[~bnd] == 0)


@pytest.mark.parametrize("spec", ["cartesian:8x8:diode", "triangular:0:diode", "hexagonal:diode"])
def test_diode_layout_contacts(spec):
    m = build_from_spec(spec)
    for tag, ok in ((D0, lambda x, y: abs(y) < 1e-12), (D1, lambda x, y: abs(y - 1) < 1e-12 and x <= 0.25)):
        faces = np.flatnonzero(m.face_tags == tag)
        assert faces.size > 0
        assert all(ok(*m.face_centres[f]) for f in faces)
    # contact lengths: the whole bottom side and a quarter of the top side
    assert m.face_measure[m.face_tags == D0].sum() == pytest.approx(1.0, rel=1e-12)
    assert m.face_measure[m.face_tags == D1].sum() == pytest.approx(0.25, rel=1e-12)


def test_centres_are_barycentres():
    m = build_triangular(0)
    loops = [m.vertices[m.face_vertices[cf]].reshape(-1, 2) for cf in m.cell_faces]
    for k, pts in enumerate(loops):
        # each vertex appears twice among the three faces of a triangle
        assert np.allclose(m.cell_centres[k], pts.mean(axis=0), atol=1e-15)


# ---------------------------------------------------------------- file format

def test_single_square_file_equals_builder():
    a = load_mesh(io.StringIO(UNIT_SQUARE))
    b = build_cartesian(1, 1)
    assert a.ncells == b.ncells and a.nfaces == b.nfaces
    assert a.cell_measure[0] == b.cell_measure[0]
    assert np.allclose(a.cell_centres, b.cell_centres)
    ga, gb = a.groups[0], b.groups[0]
    assert np.allclose(np.sort(ga.dist.ravel()), np.sort(gb.dist.ravel()))
    assert np.array_equal(np.sort(a.face_tags), np.sort(b.face_tags))


@pytest.mark.parametrize("mesh", all_meshes()[3:], ids=MESH_IDS[3:])
def test_format_round_trip(mesh):
    back = parse_mesh(format_mesh(mesh))
    assert np.array_equal(back.face_vertices, mesh.face_vertices)
    assert np.array_equal(back.face_tags, mesh.face_tags)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.allclose(back.cell_measure, mesh.cell_measure, rtol=0, atol=0)


def test_explicit_centre_is_used():
    text = UNIT_SQUARE.replace("0: 0 1 2 3", "0: 0 1 2 3 centre 0.4 0.6")
    m = parse_mesh(text)
    assert np.allclose(m.cell_centres[0], [0.4, 0.6])
    grp, r = m.cell_local(0)
    assert sorted(np.round(grp.dist[r], 12)) == [0.4, 0.4, 0.6, 0.6]


def test_zero_length_face_rejected():
    text = UNIT_SQUARE.replace("3 0 1\n", "3 0 1\n4 1 0\n").replace("0: 0 1 d0", "0: 0 4 d0\n4: 4 1 d0").replace(
        "0: 0 1 2 3", "0: 0 4 1 2 3")
    with pytest.raises(MeshError, match="zero length"):
        parse_mesh(text)


@pytest.mark.parametrize("text,message", [
    ("mesh 3d\n", "line 1"),
    ("polymesh 2d\nvertices\n0 0\n", "line 3"),
    ("polymesh 2d\nvertices\n0 0 x\n", "line 3"),
    ("polymesh 2d\n0 0 0\n", "line 2"),
    ("polymesh 2d\nvertices\n1 0 0\n", "numbered"),
])
def test_parse_errors_carry_line_numbers(text, message):
    with pytest.raises(MeshError, match=message):
        parse_mesh(text)


def test_non_star_shaped_centre_rejected():
    text = UNIT_SQUARE.replace("0: 0 1 2 3", "0: 0 1 2 3 centre 1.5 0.5")
    with pytest.raises(MeshError, match="cell 0"):
        parse_mesh(text)


def test_face_shared_by_three_cells_rejected():
    with pytest.raises(MeshError, match="more than two"):
        from hfvdd.mesh import build_mesh
        V = [(0, 0), (1, 0), (0, 1), (0, -1), (1, 1)]
        build_mesh(V, [(0, 1), (1, 2), (2, 0), (0, 3), (3, 1), (1, 4), (4, 0)],
                   [[0, 1, 2], [0, 3, 4], [0, 5, 6]])


# ---------------------------------------------------------------- regularity

def test_regularity_of_the_unit_square():
    rep = regularity(build_cartesian(1, 1))
    # h_K = sqrt 2, d = 0.5, |sigma| = 1
    brute = max(math.sqrt(2) / 0.5, math.sqrt(2) / 1.0)
    assert rep.theta == pytest.approx(2 * math.sqrt(2), rel=1e-14)
    assert rep.theta == pytest.approx(brute, rel=1e-14)
    assert rep.theta >= 1


@pytest.mark.parametrize("builder", [lambda n: build_cartesian(n, n), lambda n: build_triangular(n)])
def test_regularity_invariant_under_uniform_refinement(builder):
    t = [regularity(builder(n)).theta for n in (1, 2, 3)]
    assert t[0] == pytest.approx(t[1], rel=1e-12) == pytest.approx(t[2], rel=1e-12)


def test_sliver_is_flagged():
    fine = regularity(build_cartesian(4, 4))
    sliver = regularity(build_cartesian(1, 1, domain=((0.0, 1.0), (0.0, 1e-3))))
    assert sliver.theta > 100 * fine.theta
    assert list(sliver.flagged(threshold=50.0)) == [0]
    assert fine.flagged(threshold=50.0).size == 0

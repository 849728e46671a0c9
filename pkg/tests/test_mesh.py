import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from oracles import column_flux
from twogrid.errors import DanglingFace, ParseError, ProbeOutsideMesh
from twogrid.mesh import TetMesh, box_tet_mesh, build_fv_grid, dump_mesh, load_mesh

UNIT_FILE = """tetmesh v1
nodes 4
0 0 0
1 0 0
0 1 0
0 0 1
tets 1
0 1 2 3
boundary 4
1 2 3 outer
0 2 3 outer
0 1 3 outer
0 1 2 bottom
"""


def test_load_unit_tet():
    mesh = load_mesh(UNIT_FILE)
    assert mesh.n_elements == 1
    assert mesh.volumes()[0] == pytest.approx(1 / 6, rel=1e-15)
    assert mesh.repaired == 0
    assert mesh.tags == ["bottom", "outer"]


def test_load_repairs_orientation(caplog):
    swapped = UNIT_FILE.replace("0 1 2 3\nboundary", "0 2 1 3\nboundary")
    mesh = load_mesh(swapped)
    assert mesh.repaired == 1
    assert mesh.signed_volumes6()[0] > 0
    assert "repaired orientation of 1" in caplog.text


def test_load_out_of_range_node():
    with pytest.raises(IndexError):
        load_mesh(UNIT_FILE.replace("0 1 2 3\nboundary", "0 1 2 99\nboundary"))


def test_load_comments_and_parse_errors():
    commented = "# generated\n" + UNIT_FILE.replace("nodes 4\n", "nodes 4\n# xyz follows\n")
    assert load_mesh(commented).n_elements == 1
    with pytest.raises(ParseError) as info:
        load_mesh(UNIT_FILE.replace("0 1 0\n", "0 one 0\n"))
    assert info.value.line == 5
    with pytest.raises(ParseError):
        load_mesh("tetmesh v2\n")
    with pytest.raises(ParseError):
        load_mesh(UNIT_FILE + "extra 1\n")


def test_dangling_face():
    bad = UNIT_FILE.replace("0 1 2 bottom", "0 1 1 bottom")
    with pytest.raises(DanglingFace):
        load_mesh(bad)


def test_dump_load_roundtrip_exact():
    mesh = box_tet_mesh(2, 1, 1, 1.0 / 3.0, 0.7, np.pi)
    again = load_mesh(dump_mesh(mesh))
    assert np.array_equal(again.nodes, mesh.nodes)
    assert np.array_equal(again.tets, mesh.tets)
    assert again.boundary_tags == mesh.boundary_tags
    assert dump_mesh(again) == dump_mesh(mesh)


@pytest.mark.parametrize("n, length, n_tets", [((1, 1, 1), (1, 1, 1), 6), ((2, 1, 1), (2, 1, 1), 12),
                                               ((3, 2, 1), (50, 10, 1), 36)])
def test_box_counts_and_volume(n, length, n_tets):
    mesh = box_tet_mesh(*n, *length)
    assert mesh.n_elements == n_tets
    assert mesh.volumes().sum() == pytest.approx(np.prod(length), rel=1e-12)
    assert np.all(mesh.signed_volumes6() > 0)


def test_box_tag_counts():
    mesh = box_tet_mesh(2, 1, 1, 2, 1, 1)
    tags = mesh.boundary_tags
    assert tags.count("xmin") == 2 and tags.count("xmax") == 2
    assert tags.count("ymin") == 4 and tags.count("zmax") == 4


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
       st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10))
def test_box_volume_conservation(nx, ny, nz, lx, ly, lz):
    mesh = box_tet_mesh(nx, ny, nz, lx, ly, lz)
    assert mesh.volumes().sum() == pytest.approx(lx * ly * lz, rel=1e-12)
    grid = build_fv_grid(mesh, 1.0)
    keys, owners, _ = mesh.faces()
    counts = np.diff(owners.indptr)
    assert len(grid.conn) == np.sum(counts == 2)
    assert len(grid.bconn_elem) == np.sum(counts == 1) == len(mesh.boundary_faces)
    assert len({tuple(c) for c in grid.conn.tolist()}) == len(grid.conn)
    assert np.all(grid.trans > 0) and np.all(grid.bconn_trans > 0)
    assert "" not in grid.bconn_tag


def test_locate_probe():
    mesh = box_tet_mesh(2, 2, 2, 1, 1, 1)
    e = mesh.locate([0.9, 0.1, 0.5])
    tet = mesh.nodes[mesh.tets[e]]
    assert tet[:, 0].max() >= 0.9 - 1e-12
    with pytest.raises(ProbeOutsideMesh):
        mesh.locate([2.0, 0.0, 0.0])


def test_single_tet_grid(unit_tet_mesh):
    grid = build_fv_grid(unit_tet_mesh, 1.0)
    assert len(grid.conn) == 0
    assert len(grid.bconn_elem) == 4


@pytest.mark.parametrize("mode", ["normal", "projected"])
def test_transmissibility_scales_linearly(mode):
    mesh = box_tet_mesh(2, 2, 1, 1, 1, 1)
    scaled = TetMesh(3.0 * mesh.nodes, mesh.tets, mesh.boundary_faces, mesh.boundary_tags)
    g1 = build_fv_grid(mesh, 2.0, half_trans=mode)
    g3 = build_fv_grid(scaled, 2.0, half_trans=mode)
    assert_allclose(g3.trans, 3.0 * g1.trans, rtol=1e-12)
    assert_allclose(g3.bconn_trans, 3.0 * g1.bconn_trans, rtol=1e-12)


def test_connection_orientation_symmetry():
    mesh = box_tet_mesh(2, 2, 2, 1, 1, 1)
    grid = build_fv_grid(mesh, 1.0)
    rev = TetMesh(mesh.nodes, mesh.tets[::-1], mesh.boundary_faces, mesh.boundary_tags)
    grid_rev = build_fv_grid(rev, 1.0)
    n = mesh.n_elements
    perm = n - 1 - np.arange(n)  # element e of mesh is element n-1-e of rev
    by_pair = {tuple(sorted(perm[c])): t for c, t in zip(grid_rev.conn.tolist(), grid_rev.trans)}
    for (i, j), t in zip(grid.conn.tolist(), grid.trans):
        assert by_pair[(i, j)] == pytest.approx(t, rel=1e-14)
    c = grid.centroids
    d = c[grid.conn[:, 1]] - c[grid.conn[:, 0]]
    assert np.all(np.einsum("ij,ij->i", d, grid.conn_normal) > 0)


def steady_column(nx, length, k=2.0, p_left=3.0, p_right=1.0):
    from twogrid.flow import FIXED_PRESSURE, FlowBcSpec
    import scipy.sparse.linalg as spla

    mesh = box_tet_mesh(nx, 1, 1, length, 1.0, 1.0)
    grid = build_fv_grid(mesh, k)
    n = grid.n_cells
    i, j = grid.conn.T
    A = np.zeros((n, n))
    rhs = np.zeros(n)
    for a, b_, t in zip(i, j, grid.trans):
        A[a, a] += t
        A[b_, b_] += t
        A[a, b_] -= t
        A[b_, a] -= t
    fixed = FlowBcSpec({"xmin": (FIXED_PRESSURE, p_left), "xmax": (FIXED_PRESSURE, p_right)}).fixed()
    for e, tag, t in zip(grid.bconn_elem, grid.bconn_tag, grid.bconn_trans):
        if tag in fixed:
            A[e, e] += t
            rhs[e] += t * fixed[tag]
    p = np.linalg.solve(A, rhs)
    return mesh, grid, p


def test_steady_linear_patch():
    length, pl, pr = 4.0, 3.0, 1.0
    mesh, grid, p = steady_column(4, length, p_left=pl, p_right=pr)
    x = grid.centroids[:, 0]
    exact = pl + (pr - pl) * x / length
    assert np.max(np.abs(p - exact)) <= 1e-8 * np.max(np.abs(exact))


def test_column_flux_matches_darcy():
    length, k, pl, pr = 4.0, 2.0, 3.0, 1.0
    mesh, grid, p = steady_column(4, length, k, pl, pr)
    # net flux through the plane x = 2 (between hex columns)
    i, j = grid.conn.T
    xi, xj = grid.centroids[i, 0], grid.centroids[j, 0]
    cross = (xi < 2.0) != (xj < 2.0)
    q = grid.trans[cross] * (p[i[cross]] - p[j[cross]]) * np.sign(xj[cross] - xi[cross])
    assert q.sum() == pytest.approx(column_flux(length, 1.0, k, 1.0, pl, pr), rel=1e-10)

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from numpy.testing import assert_allclose

from oracles import bary_dense, pair_matrix_bruteforce, projection_dense
from twogrid.errors import DegenerateTet, EmptyMesh, SizeMismatch
from twogrid.geometry import (
    ElementPair,
    apply_projection,
    barycentric_coords,
    build_projection,
    detect_pairs,
    format_diagnostics,
    overlap_volume_mc,
    point_in_tet,
    projection_diagnostics,
    tet_diameter,
    tet_volume,
    two_grid_operators,
)
from twogrid.mesh import TetMesh, box_tet_mesh

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
points = st.tuples(coords, coords, coords).map(np.array)
tets = st.lists(points, min_size=4, max_size=4).map(np.array)


def well_shaped(tet):
    v = tet_volume(tet)
    return v > 1e-3 * tet_diameter(tet) ** 3


# --- barycentric coordinates and containment ---------------------------------

def test_barycentric_vertex(unit_tet):
    assert_allclose(barycentric_coords(unit_tet, [0, 0, 0]), [1, 0, 0, 0], atol=1e-15)


def test_barycentric_centroid(unit_tet):
    assert_allclose(barycentric_coords(unit_tet, unit_tet.mean(0)), [0.25] * 4, atol=1e-15)


def test_barycentric_interior_point(unit_tet):
    assert_allclose(barycentric_coords(unit_tet, [0.1, 0.2, 0.3]), [0.4, 0.1, 0.2, 0.3], atol=1e-15)


def test_barycentric_degenerate_raises():
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    with pytest.raises(DegenerateTet):
        barycentric_coords(flat, [0.2, 0.2, 0.0])


@given(tets, st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)))
def test_barycentric_partition_and_reconstruction(tet, frac):
    assume(well_shaped(tet))
    lo, hi = tet.min(0), tet.max(0)
    pt = lo + np.array(frac) * (hi - lo)
    lam = barycentric_coords(tet, pt)
    assert abs(lam.sum() - 1.0) <= 1e-12
    assert np.linalg.norm(lam @ tet - pt) <= 1e-10 * tet_diameter(tet)
    assert_allclose(lam, bary_dense(tet, pt), atol=1e-9)


@pytest.mark.parametrize("pt, inside", [((0.25, 0.25, 0.25), True), ((1, 1, 1), False),
                                        ((0, 0, 0), True)])
def test_point_in_tet(unit_tet, pt, inside):
    assert point_in_tet(unit_tet, pt, 1e-10) is inside


# --- volumes -----------------------------------------------------------------

def test_tet_volume_examples(unit_tet):
    assert tet_volume(unit_tet) == pytest.approx(1 / 6, rel=1e-15)
    assert tet_volume(2 * unit_tet) == pytest.approx(8 / 6, rel=1e-15)
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    assert tet_volume(flat) == 0.0


@given(tets, points, st.floats(0.1, 10), st.sampled_from([(0, 1, 2, 3), (1, 0, 3, 2), (2, 3, 0, 1),
                                                          (1, 2, 0, 3)]))
def test_tet_volume_invariances(tet, shift, s, perm):
    v = tet_volume(tet)
    assert tet_volume(tet + shift) == pytest.approx(v, rel=1e-9, abs=1e-9)
    assert tet_volume(tet[list(perm)]) == pytest.approx(v, rel=1e-12, abs=1e-12)
    assert tet_volume(s * tet) == pytest.approx(s**3 * v, rel=1e-9, abs=1e-9)


# --- pair detection -----------------------------------------------------------

def single(tet):
    return TetMesh(np.asarray(tet, dtype=float), [[0, 1, 2, 3]])


def test_identical_single_tets_pair_once(unit_tet):
    pairs = detect_pairs(single(unit_tet), single(unit_tet))
    assert pairs == [ElementPair(0, 0, pytest.approx(1 / 6), pytest.approx(1 / 6))]


def test_disjoint_tets_no_pair(unit_tet):
    assert detect_pairs(single(unit_tet), single(unit_tet + [10, 0, 0])) == []


def test_empty_mesh_raises(unit_tet):
    empty = TetMesh(np.zeros((0, 3)), np.zeros((0, 4), dtype=int))
    with pytest.raises(EmptyMesh):
        detect_pairs(empty, single(unit_tet))


def piercing_pair():
    """A thin sliver whose long edge runs through the unit tet; no vertex of
    either tet lies in the other."""
    g = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    f = np.array([[0.2, 0.2, -1.0], [0.2, 0.2, 2.0], [0.25, 0.2, -1.0], [0.2, 0.25, -1.0]])
    return f, g


def test_edge_face_piercing_is_missed_by_vertex_test():
    f, g = piercing_pair()
    assert not any(point_in_tet(g, v, 1e-9) for v in f)
    assert not any(point_in_tet(f, v, 1e-9) for v in g)
    overlap, se = overlap_volume_mc(f, g, 100_000, seed=1, return_stderr=True)
    assert overlap > 5 * se > 0  # positive overlap beyond sampling noise
    assert detect_pairs(single(f), single(g)) == []


def test_box_neighbours_touching_only_excluded():
    mesh = box_tet_mesh(2, 2, 1, 2.0, 2.0, 1.0)
    pairs = detect_pairs(mesh, mesh)
    assert [(p.flow_elem, p.mech_elem) for p in pairs] == [(i, i) for i in range(mesh.n_elements)]
    literal = detect_pairs(mesh, mesh, exclude_touching=False)
    assert len(literal) > len(pairs)


def jittered_box(n, length, amp, seed, offset=(0.0, 0.0, 0.0)):
    """Box mesh with interior nodes moved randomly (boundary kept planar)."""
    mesh = box_tet_mesh(*n, *length, origin=offset)
    rng = np.random.default_rng(seed)
    nodes = mesh.nodes.copy()
    lo, hi = nodes.min(0), nodes.max(0)
    interior = np.all((nodes > lo + 1e-12) & (nodes < hi - 1e-12), axis=1)
    h = np.min(np.array(length) / np.array(n))
    nodes[interior] += amp * h * rng.uniform(-1, 1, size=(interior.sum(), 3))
    return TetMesh(nodes, mesh.tets, mesh.boundary_faces, mesh.boundary_tags)


def snap_shift(x, spacing=0.5, band=1e-6):
    """Move offsets within ``band`` of a grid plane onto it.

    Containment inside the 1e-9 tolerance band is decided by rounding, so the
    package and the dense oracle may legitimately disagree there.
    """
    k = round(x / spacing)
    return k * spacing if abs(x - k * spacing) < band else x


shifts = st.floats(-0.3, 0.3).map(snap_shift)

mesh_pairs = st.builds(
    lambda na, nb, amp, seed, shift: (
        jittered_box(na, (1.0, 1.0, 1.0), amp, seed),
        jittered_box(nb, (1.0, 1.0, 1.0), amp, seed + 1, offset=shift),
    ),
    st.tuples(st.integers(1, 2), st.integers(1, 2), st.integers(1, 2)),
    st.tuples(st.integers(1, 3), st.integers(1, 2), st.integers(1, 2)),
    st.floats(0.0, 0.2),
    st.integers(0, 10_000),
    st.tuples(shifts, shifts, st.just(0.0)),
)


@given(mesh_pairs)
def test_pair_symmetry_under_swap(pair):
    a, b = pair
    ab = {(p.flow_elem, p.mech_elem): (p.w_f2m, p.w_m2f) for p in detect_pairs(a, b)}
    ba = {(p.mech_elem, p.flow_elem): (p.w_m2f, p.w_f2m) for p in detect_pairs(b, a)}
    assert ab.keys() == ba.keys()
    for key in ab:
        assert_allclose(ab[key], ba[key], rtol=1e-15)


@given(mesh_pairs, st.booleans())
def test_operators_match_dense_oracle(pair, exclude):
    a, b = pair
    pairs = detect_pairs(a, b, exclude_touching=exclude)
    f2m, m2f = build_projection(pairs, a.n_elements, b.n_elements)
    inc = pair_matrix_bruteforce(a, b, exclude_touching=exclude)
    assert_allclose(len(pairs), inc.sum())
    d_f2m, d_m2f = projection_dense(inc, a.volumes(), b.volumes())
    assert_allclose(f2m.matrix.toarray(), d_f2m, atol=1e-12)
    assert_allclose(m2f.matrix.toarray(), d_m2f, atol=1e-12)


@given(mesh_pairs, st.floats(-1e3, 1e3))
def test_row_stochastic_and_constant_reproduction(pair, c):
    a, b = pair
    _, f2m, m2f = two_grid_operators(a, b)
    for op, n_src in ((f2m, a.n_elements), (m2f, b.n_elements)):
        sums = op.row_sums()
        covered = np.setdiff1d(np.arange(op.n_target), op.uncovered)
        assert np.all(np.abs(sums[covered] - 1.0) <= 1e-12)
        assert np.all((op.matrix.data > 0) & (op.matrix.data <= 1.0))
        out = apply_projection(op, np.full(n_src, c))
        assert np.all(np.abs(out[covered] - c) <= 1e-12 * max(1.0, abs(c)))


@given(st.tuples(*[st.floats(-0.3, 0.3)] * 12), st.integers(0, 10_000))
def test_containment_implies_pair_and_separation_implies_none(jitter, seed):
    base = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    a = base
    b = base * 0.8 + np.array(jitter).reshape(4, 3)
    assume(well_shaped(b))
    contained = any(point_in_tet(b, v, 1e-9) for v in a) or any(point_in_tet(a, v, 1e-9) for v in b)
    found = detect_pairs(single(a), single(b), exclude_touching=False)
    if contained:
        assert len(found) == 1
    far = b + [3.0, 0.0, 0.0]
    assert overlap_volume_mc(a, far, 2000, seed=seed) == 0.0
    assert detect_pairs(single(a), single(far)) == []


# --- projections ---------------------------------------------------------------

def test_projection_weights_two_to_one():
    pairs = [ElementPair(0, 0, 2.0, 5.0), ElementPair(1, 0, 1.0, 5.0)]
    f2m, m2f = build_projection(pairs, 2, 1)
    assert f2m.rows() == [[(0, pytest.approx(2 / 3)), (1, pytest.approx(1 / 3))]]
    assert m2f.rows() == [[(0, 1.0)], [(0, 1.0)]]
    assert apply_projection(f2m, [3.0, 6.0])[0] == pytest.approx(4.0, rel=1e-15)


def test_identity_on_identical_meshes():
    mesh = box_tet_mesh(3, 2, 2, 3.0, 2.0, 2.0)
    pairs, f2m, m2f = two_grid_operators(mesh, mesh)
    assert f2m.is_identity() and m2f.is_identity()
    assert projection_diagnostics(pairs, f2m, m2f)["identity"] is True


def test_uncovered_targets_carry_previous_value(unit_tet):
    flow = single(unit_tet)
    mech = TetMesh(np.vstack([unit_tet, unit_tet + [5, 0, 0]]), [[0, 1, 2, 3], [4, 5, 6, 7]])
    _, f2m, m2f = two_grid_operators(flow, mech)
    assert f2m.uncovered.tolist() == [1]
    assert apply_projection(f2m, [2.0], previous=[0.0, 7.0]).tolist() == [2.0, 7.0]
    assert apply_projection(f2m, [2.0], fallback=-1.0).tolist() == [2.0, -1.0]
    with pytest.raises(SizeMismatch):
        apply_projection(f2m, [1.0, 2.0])


def test_linear_field_coarse_means_match_pair_sum():
    fine = box_tet_mesh(4, 4, 2, 1.0, 1.0, 0.5)
    coarse = box_tet_mesh(2, 2, 1, 1.0, 1.0, 0.5)
    pairs, f2m, _ = two_grid_operators(fine, coarse)
    c = fine.centroids()
    p = 3.0 * c[:, 0] - 2.0 * c[:, 1] + c[:, 2]
    got = apply_projection(f2m, p)
    num = np.zeros(coarse.n_elements)
    den = np.zeros(coarse.n_elements)
    for pr in pairs:
        num[pr.mech_elem] += pr.w_f2m * p[pr.flow_elem]
        den[pr.mech_elem] += pr.w_f2m
    assert_allclose(got, num / den, rtol=1e-12)


def test_diagnostics_text():
    mesh = box_tet_mesh(1, 1, 1, 1, 1, 1)
    pairs, f2m, m2f = two_grid_operators(mesh, mesh)
    text = format_diagnostics(projection_diagnostics(pairs, f2m, m2f))
    assert "pairs = 6\n" in text and "identity = true\n" in text and "uncovered_mech = 0\n" in text


def test_pair_detection_deterministic_across_chunking():
    a = jittered_box((3, 3, 2), (1, 1, 1), 0.15, 3)
    b = jittered_box((2, 3, 3), (1, 1, 1), 0.15, 4, offset=(0.1, 0.0, 0.0))
    assert detect_pairs(a, b, chunk=1) == detect_pairs(a, b, chunk=1000)


# --- Monte Carlo overlap oracle --------------------------------------------------

def test_mc_full_overlap(unit_tet):
    est, se = overlap_volume_mc(unit_tet, unit_tet, 100_000, seed=0, return_stderr=True)
    assert est == pytest.approx(1 / 6, rel=1e-12)  # every sample hits
    assert se == 0.0


def test_mc_disjoint(unit_tet):
    assert overlap_volume_mc(unit_tet, unit_tet + [2, 0, 0], 10_000) == 0.0


def test_mc_half_overlap(unit_tet):
    # the plane x = y halves the unit tet (x <-> y symmetry); b has a face on
    # that plane, lies in x >= y and contains the x >= y half entirely
    half = np.array([[0, 0, 0], [0, 0, 1], [1, 0, 0], [0.5, 0.5, 0]], dtype=float)
    b = np.array([[-1, -1, -1], [3, 3, -1], [-1, -1, 5], [5, -3, -1]], dtype=float)
    assert np.all(b[:, 0] >= b[:, 1])
    assert all(point_in_tet(b, v, 0.0) for v in half)
    exact = tet_volume(half)
    assert exact == pytest.approx(tet_volume(unit_tet) / 2, rel=1e-15)
    est, se = overlap_volume_mc(unit_tet, b, 200_000, seed=7, return_stderr=True)
    assert abs(est - exact) <= 3 * se


def test_mc_deterministic(unit_tet):
    b = unit_tet * 0.9 + 0.05
    assert overlap_volume_mc(unit_tet, b, 5000, seed=3) == overlap_volume_mc(unit_tet, b, 5000, seed=3)

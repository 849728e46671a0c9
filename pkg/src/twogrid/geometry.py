"""Tetrahedron predicates and the two-grid transfer operators.

Pairs of flow/mechanics elements are found by vertex containment: a pair
exists when a vertex of either element lies inside the other (barycentric
test with a small tolerance). Transfer is a volume-weighted average over
the partners of each target element.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sps

from .errors import DegenerateTet, EmptyMesh, SizeMismatch

DEFAULT_TOL = 1e-9
VOL_EPS = 1e-14


class ElementPair(NamedTuple):
    flow_elem: int
    mech_elem: int
    w_f2m: float  # Meas(E^f)
    w_m2f: float  # Meas(E^p)


def _as_tet(tet):
    tet = np.asarray(tet, dtype=float)
    if tet.shape != (4, 3):
        raise SizeMismatch(f"tetrahedron must be 4x3, got {tet.shape}")
    return tet


def signed_volume(tet):
    tet = _as_tet(tet)
    return np.linalg.det(tet[1:] - tet[0]) / 6.0


def tet_volume(tet):
    """Unsigned volume of a tetrahedron; zero for coplanar vertices."""
    return abs(signed_volume(tet))


def tet_diameter(tet):
    tet = _as_tet(tet)
    d = tet[:, None, :] - tet[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _check_nondegenerate(tet):
    diam = tet_diameter(tet)
    vol6 = np.linalg.det(tet[1:] - tet[0])
    if abs(vol6) <= VOL_EPS * diam**3 or diam == 0.0:
        raise DegenerateTet(f"degenerate tetrahedron (6V = {vol6:g}, diameter {diam:g})")


def barycentric_coords(tet, pt):
    """Barycentric coordinates (l0, l1, l2, l3) of ``pt`` w.r.t. ``tet``.

    Raises:
        DegenerateTet: if the tetrahedron has (numerically) zero volume.
    """
    tet = _as_tet(tet)
    _check_nondegenerate(tet)
    inv = np.linalg.inv((tet[1:] - tet[0]).T)
    lam = inv @ (np.asarray(pt, dtype=float) - tet[0])
    return np.concatenate([[1.0 - lam.sum()], lam])


def point_in_tet(tet, pt, tol=DEFAULT_TOL):
    """True iff every barycentric coordinate of ``pt`` is >= -tol."""
    return bool(np.all(barycentric_coords(tet, pt) >= -tol))


class _TetBatch:
    """Vectorized affine data for all tets of a mesh."""

    def __init__(self, nodes, tets):
        nodes = np.asarray(nodes, dtype=float)
        tets = np.asarray(tets, dtype=np.int64)
        self.verts = nodes[tets]  # (M, 4, 3)
        self.v0 = self.verts[:, 0, :]
        edges = self.verts[:, 1:, :] - self.v0[:, None, :]  # rows are edge vectors
        vol6 = np.linalg.det(edges)
        d = self.verts[:, :, None, :] - self.verts[:, None, :, :]
        self.diam = np.sqrt((d**2).sum(-1)).max(axis=(1, 2))
        bad = (np.abs(vol6) <= VOL_EPS * self.diam**3) | (self.diam == 0.0)
        if np.any(bad):
            raise DegenerateTet(f"degenerate tetrahedra: {np.flatnonzero(bad)[:10].tolist()}")
        # inverse of the column matrix [v1-v0, v2-v0, v3-v0]
        self.inv = np.linalg.inv(np.transpose(edges, (0, 2, 1)))
        self.volume = np.abs(vol6) / 6.0
        self.lo = self.verts.min(axis=1)
        self.hi = self.verts.max(axis=1)

    def __len__(self):
        return len(self.v0)

    def bary(self, elem, points):
        """Barycentric coordinates of points[r] (k, 3) in tet elem[r] -> (r, k, 4)."""
        rel = points - self.v0[elem][:, None, :]
        lam = np.einsum("rij,rkj->rki", self.inv[elem], rel)
        return np.concatenate([1.0 - lam.sum(-1, keepdims=True), lam], axis=-1)


def _contains_any(lam, tol):
    return np.all(lam >= -tol, axis=-1).any(axis=1)


def _separated(lam, tol):
    # all points on the outer side of one face plane
    return np.all(lam <= tol, axis=1).any(axis=-1)


def detect_pairs(flow_mesh, mech_mesh, tol=DEFAULT_TOL, exclude_touching=True, chunk=256):
    """Find all interacting flow/mechanics element pairs.

    A pair (f, g) is reported once if at least one vertex of f lies in g or
    at least one vertex of g lies in f (closed test, tolerance ``tol`` on the
    barycentric coordinates). Intersections where only edges cross faces are
    not detected. An inflated bounding-box prefilter removes candidates that
    cannot pass the vertex test.

    With ``exclude_touching`` (default), pairs whose elements merely touch
    (one lies entirely on the outer side of a face plane of the other, e.g.
    conforming neighbours sharing a node, edge or face) are dropped, so that
    identical meshes pair each element with itself only.

    Returns:
        list of ElementPair sorted by (flow_elem, mech_elem).
    """
    if len(flow_mesh.tets) == 0 or len(mech_mesh.tets) == 0:
        raise EmptyMesh("both meshes need at least one element")
    fb = _TetBatch(flow_mesh.nodes, flow_mesh.tets)
    mb = _TetBatch(mech_mesh.nodes, mech_mesh.tets)

    pad_f = 4.0 * tol * fb.diam[:, None]
    pad_m = 4.0 * tol * mb.diam[:, None]
    flo, fhi = fb.lo - pad_f, fb.hi + pad_f
    mlo, mhi = mb.lo - pad_m, mb.hi + pad_m

    found_f, found_m = [], []
    for start in range(0, len(mb), chunk):
        g = np.arange(start, min(start + chunk, len(mb)))
        overlap = np.all(
            (mlo[g][:, None, :] <= fhi[None, :, :]) & (flo[None, :, :] <= mhi[g][:, None, :]),
            axis=-1,
        )
        gi, fi = np.nonzero(overlap)
        if len(gi) == 0:
            continue
        gg = g[gi]
        g_in_f = fb.bary(fi, mb.verts[gg])
        f_in_g = mb.bary(gg, fb.verts[fi])
        hit = _contains_any(g_in_f, tol) | _contains_any(f_in_g, tol)
        if exclude_touching:
            hit &= ~(_separated(g_in_f, tol) | _separated(f_in_g, tol))
        found_f.append(fi[hit])
        found_m.append(gg[hit])

    if not found_f:
        return []
    f = np.concatenate(found_f)
    m = np.concatenate(found_m)
    order = np.lexsort((m, f))
    f, m = f[order], m[order]
    return [
        ElementPair(int(a), int(b), float(fb.volume[a]), float(mb.volume[b]))
        for a, b in zip(f, m)
    ]


@dataclass
class ProjectionOperator:
    """Row-normalized volume-weight map from source to target elements.

    ``matrix`` has shape (n_target, n_source); targets without any partner
    have an empty row and are listed in ``uncovered``.
    """

    matrix: sps.csr_matrix
    uncovered: np.ndarray = field(default=None)

    def __post_init__(self):
        self.matrix = sps.csr_matrix(self.matrix)
        if self.uncovered is None:
            self.uncovered = np.flatnonzero(np.diff(self.matrix.indptr) == 0)

    @property
    def n_target(self):
        return self.matrix.shape[0]

    @property
    def n_source(self):
        return self.matrix.shape[1]

    def rows(self):
        """Per-target list of (source id, weight)."""
        m = self.matrix
        return [
            list(zip(m.indices[m.indptr[i]:m.indptr[i + 1]].tolist(),
                     m.data[m.indptr[i]:m.indptr[i + 1]].tolist()))
            for i in range(m.shape[0])
        ]

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def is_identity(self, atol=1e-12):
        if self.n_target != self.n_source or len(self.uncovered):
            return False
        diff = self.matrix - sps.identity(self.n_target, format="csr")
        return diff.nnz == 0 or np.abs(diff.data).max() <= atol


def _normalized(rows, cols, weights, shape):
    mat = sps.coo_matrix((weights, (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    counts = np.diff(mat.indptr)
    sums = np.add.reduceat(mat.data, mat.indptr[:-1][counts > 0]) if mat.nnz else np.zeros(0)
    mat.data /= np.repeat(sums, counts[counts > 0])
    return mat


def build_projection(pairs, n_flow, n_mech):
    """Assemble (flow_to_mech, mech_to_flow) from a deduplicated pair list."""
    if len(pairs):
        arr = np.array([(p.flow_elem, p.mech_elem) for p in pairs], dtype=np.int64)
        f, m = arr[:, 0], arr[:, 1]
        wf = np.array([p.w_f2m for p in pairs], dtype=float)
        wm = np.array([p.w_m2f for p in pairs], dtype=float)
    else:
        f = m = np.zeros(0, dtype=np.int64)
        wf = wm = np.zeros(0)
    f2m = ProjectionOperator(_normalized(m, f, wf, (n_mech, n_flow)))
    m2f = ProjectionOperator(_normalized(f, m, wm, (n_flow, n_mech)))
    return f2m, m2f


def apply_projection(op, values, previous=None, fallback=0.0):
    """Transfer a per-element field through ``op``.

    Uncovered targets keep ``previous`` (when given) or take ``fallback``.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (op.n_source,):
        raise SizeMismatch(f"field has length {values.shape}, operator expects {op.n_source}")
    out = op.matrix @ values
    if len(op.uncovered):
        if previous is not None:
            previous = np.asarray(previous, dtype=float)
            if previous.shape != (op.n_target,):
                raise SizeMismatch("previous field does not match operator targets")
            out[op.uncovered] = previous[op.uncovered]
        else:
            out[op.uncovered] = fallback
    return out


def two_grid_operators(flow_mesh, mech_mesh, tol=DEFAULT_TOL, exclude_touching=True):
    pairs = detect_pairs(flow_mesh, mech_mesh, tol, exclude_touching)
    f2m, m2f = build_projection(pairs, len(flow_mesh.tets), len(mech_mesh.tets))
    return pairs, f2m, m2f


def projection_diagnostics(pairs, f2m, m2f):
    w = np.concatenate([f2m.matrix.data, m2f.matrix.data])
    sums = np.concatenate([f2m.row_sums()[f2m.row_sums() > 0],
                           m2f.row_sums()[m2f.row_sums() > 0]])
    return {
        "pairs": len(pairs),
        "uncovered_mech": len(f2m.uncovered),
        "uncovered_flow": len(m2f.uncovered),
        "min_weight": float(w.min()) if len(w) else 0.0,
        "max_weight": float(w.max()) if len(w) else 0.0,
        "max_row_sum_error": float(np.abs(sums - 1.0).max()) if len(sums) else 0.0,
        "identity": f2m.is_identity() and m2f.is_identity(),
    }


def format_diagnostics(diag):
    lines = []
    for key, value in diag.items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def overlap_volume_mc(a, b, n_samples, seed=0, return_stderr=False):
    """Monte Carlo estimate of the intersection volume of two tetrahedra.

    Samples uniformly in ``a`` (flat Dirichlet barycentric weights) and
    counts hits in ``b``. With ``return_stderr`` the standard error of the
    estimate is returned as a second value.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    a = _as_tet(a)
    b = _as_tet(b)
    rng = np.random.default_rng(seed)
    w = rng.exponential(size=(n_samples, 4))
    w /= w.sum(axis=1, keepdims=True)
    pts = w @ a
    _check_nondegenerate(b)
    inv = np.linalg.inv((b[1:] - b[0]).T)
    lam = (pts - b[0]) @ inv.T
    inside = np.all(lam >= 0.0, axis=1) & (lam.sum(axis=1) <= 1.0)
    frac = inside.mean()
    va = tet_volume(a)
    stderr = va * np.sqrt(frac * (1.0 - frac) / n_samples)
    if return_stderr:
        return va * frac, stderr
    return va * frac

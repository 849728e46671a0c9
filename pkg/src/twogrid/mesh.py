"""Tetrahedral mesh model, ``tetmesh v1`` text I/O, box meshing and the
finite-volume geometry (centroids, volumes, two-point transmissibilities).
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DanglingFace, DegenerateFace, EmptyMesh, ParseError, ProbeOutsideMesh
from .geometry import DEFAULT_TOL

logger = logging.getLogger(__name__)

# local vertex triples of the four faces; face i is opposite vertex i
TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


@dataclass
class TetMesh:
    nodes: np.ndarray  # (N, 3)
    tets: np.ndarray  # (M, 4), positively oriented
    boundary_faces: np.ndarray = None  # (F, 3)
    boundary_tags: list = field(default_factory=list)  # F strings
    repaired: int = 0  # tets re-oriented on construction

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 3)
        self.tets = np.asarray(self.tets, dtype=np.int64).reshape(-1, 4)
        if self.boundary_faces is None:
            self.boundary_faces = np.zeros((0, 3), dtype=np.int64)
        self.boundary_faces = np.asarray(self.boundary_faces, dtype=np.int64).reshape(-1, 3)
        self.boundary_tags = [str(t) for t in self.boundary_tags]
        if len(self.boundary_tags) != len(self.boundary_faces):
            raise ValueError("one tag per boundary face required")
        n = len(self.nodes)
        for arr, what in ((self.tets, "tet"), (self.boundary_faces, "boundary face")):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                bad = int(np.flatnonzero((arr < 0).any(1) | (arr >= n).any(1))[0])
                raise IndexError(f"{what} {bad} references a node outside 0..{n - 1}")
        self.repaired += self._orient()
        self._check_boundary()

    def _orient(self):
        vol6 = self.signed_volumes6()
        neg = vol6 < 0
        if np.any(neg):
            self.tets[neg] = self.tets[neg][:, [0, 2, 1, 3]]
        return int(neg.sum())

    def _check_boundary(self):
        if not len(self.boundary_faces):
            return
        keys, owners, _ = self.faces()
        counts = np.diff(owners.indptr)
        lookup = {tuple(k): c for k, c in zip(keys.tolist(), counts.tolist())}
        for i, f in enumerate(np.sort(self.boundary_faces, axis=1).tolist()):
            c = lookup.get(tuple(f))
            if c != 1:
                raise DanglingFace(
                    f"boundary face {i} {self.boundary_faces[i].tolist()} "
                    + ("is not a face of any tet" if c is None else "is an interior face")
                )

    @property
    def n_elements(self):
        return len(self.tets)

    @property
    def tags(self):
        return sorted(set(self.boundary_tags))

    def signed_volumes6(self):
        v = self.nodes[self.tets]
        return np.linalg.det(v[:, 1:] - v[:, :1])

    def volumes(self):
        return np.abs(self.signed_volumes6()) / 6.0

    def centroids(self):
        return self.nodes[self.tets].mean(axis=1)

    def faces(self):
        """Unique triangular faces.

        Returns:
            keys: (K, 3) sorted node triples, lexicographically ordered.
            owners: _Owners with ``indptr``/``elem``/``local`` listing the
                (element, local face) incidences of each key.
            inverse: (4M,) face key index of every element face.
        """
        all_faces = np.sort(self.tets[:, TET_FACES].reshape(-1, 3), axis=1)
        keys, inverse, counts = np.unique(all_faces, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        order = np.argsort(inverse, kind="stable")
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return keys, _Owners(indptr, order // 4, order % 4), inverse

    def face_nodes_of_tag(self, tag):
        sel = [i for i, t in enumerate(self.boundary_tags) if t == tag]
        return np.unique(self.boundary_faces[sel]) if sel else np.zeros(0, dtype=np.int64)

    def locate(self, point, tol=DEFAULT_TOL):
        """Lowest-index element containing ``point`` (closed test)."""
        point = np.asarray(point, dtype=float)
        v = self.nodes[self.tets]
        inv = np.linalg.inv(np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1)))
        lam = np.einsum("mij,mj->mi", inv, point - v[:, 0])
        lam = np.concatenate([1.0 - lam.sum(1, keepdims=True), lam], axis=1)
        hit = np.flatnonzero(np.all(lam >= -tol, axis=1))
        if not len(hit):
            raise ProbeOutsideMesh(f"point {point.tolist()} is not inside the mesh")
        return int(hit[0])


@dataclass
class _Owners:
    indptr: np.ndarray
    elem: np.ndarray
    local: np.ndarray


def _fmt(x):
    return format(float(x), ".17g")


def dump_mesh(mesh):
    """Serialize to ``tetmesh v1`` text (17 significant digits)."""
    out = ["tetmesh v1", f"nodes {len(mesh.nodes)}"]
    out += [" ".join(_fmt(c) for c in xyz) for xyz in mesh.nodes]
    out.append(f"tets {len(mesh.tets)}")
    out += [" ".join(str(int(i)) for i in t) for t in mesh.tets]
    out.append(f"boundary {len(mesh.boundary_faces)}")
    out += [" ".join(str(int(i)) for i in f) + f" {tag}"
            for f, tag in zip(mesh.boundary_faces, mesh.boundary_tags)]
    return "\n".join(out) + "\n"


def load_mesh(text):
    """Parse ``tetmesh v1`` text into a TetMesh.

    Negatively oriented tets are repaired (``mesh.repaired`` counts them).

    Raises:
        ParseError: malformed content, with the offending line number.
        IndexError: node ids out of range.
        DanglingFace: boundary face that is not a face of exactly one tet.
    """
    lines = [
        (no, ln.split("#", 1)[0].split())
        for no, ln in enumerate(text.splitlines(), start=1)
    ]
    lines = [(no, tok) for no, tok in lines if tok]
    it = iter(lines)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise ParseError(len(text.splitlines()) + 1, f"unexpected end of file, expected {what}")

    no, tok = take("header")
    if tok != ["tetmesh", "v1"]:
        raise ParseError(no, "expected header 'tetmesh v1'")

    def section(name):
        no, tok = take(f"'{name} <count>'")
        if len(tok) != 2 or tok[0] != name:
            raise ParseError(no, f"expected '{name} <count>'")
        try:
            n = int(tok[1])
        except ValueError:
            raise ParseError(no, f"bad count {tok[1]!r}")
        if n < 0:
            raise ParseError(no, "negative count")
        return n

    def rows(n, width, conv, what):
        out = []
        for _ in range(n):
            no, tok = take(what)
            if len(tok) != width:
                raise ParseError(no, f"expected {width} fields for {what}, got {len(tok)}")
            try:
                out.append([conv(t) for t in tok])
            except ValueError as exc:
                raise ParseError(no, str(exc))
        return out

    nodes = rows(section("nodes"), 3, float, "node")
    tets = rows(section("tets"), 4, int, "tet")
    nb = section("boundary")
    faces, tags = [], []
    for _ in range(nb):
        no, tok = take("boundary face")
        if len(tok) != 4:
            raise ParseError(no, f"expected 3 node ids and a tag, got {len(tok)} fields")
        try:
            faces.append([int(t) for t in tok[:3]])
        except ValueError as exc:
            raise ParseError(no, str(exc))
        tags.append(tok[3])
    extra = next(it, None)
    if extra is not None:
        raise ParseError(extra[0], "trailing content after boundary section")

    mesh = TetMesh(np.array(nodes, dtype=float).reshape(-1, 3),
                   np.array(tets, dtype=np.int64).reshape(-1, 4),
                   np.array(faces, dtype=np.int64).reshape(-1, 3), tags)
    if mesh.repaired:
        logger.warning("repaired orientation of %d tetrahedra", mesh.repaired)
    return mesh


def read_mesh(path):
    with open(path) as fh:
        return load_mesh(fh.read())


def write_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write(dump_mesh(mesh))


# Kuhn split: every tet contains a main diagonal of its hex. Hexes are
# mirrored by index parity, so each hex is the reflection of its neighbour
# across the shared face: face triangulations match and every interior
# centroid-to-centroid segment is normal to its face.
_KUHN = []
for _perm in itertools.permutations(range(3)):
    _c = np.zeros(3, dtype=int)
    _path = [tuple(_c)]
    for _ax in _perm:
        _c[_ax] += 1
        _path.append(tuple(_c))
    _KUHN.append(_path)


def box_tet_mesh(nx, ny, nz, lx, ly, lz, origin=(0.0, 0.0, 0.0)):
    """Structured box [0,lx]x[0,ly]x[0,lz] split into 6 tets per hex.

    Boundary triangles are tagged xmin, xmax, ymin, ymax, zmin, zmax.
    """
    if min(nx, ny, nz) < 1 or min(lx, ly, lz) <= 0:
        raise ValueError("box_tet_mesh needs counts >= 1 and positive lengths")
    xs = origin[0] + np.linspace(0.0, lx, nx + 1)
    ys = origin[1] + np.linspace(0.0, ly, ny + 1)
    zs = origin[2] + np.linspace(0.0, lz, nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    pi, pj, pk = I % 2, J % 2, K % 2
    tets = np.empty((len(I) * 6, 4), dtype=np.int64)
    for t, path in enumerate(_KUHN):
        tets[t::6] = np.column_stack(
            [nid(I + (a ^ pi), J + (b ^ pj), K + (c ^ pk)) for a, b, c in path]
        )

    mesh = TetMesh(nodes, tets)
    keys, owners, _ = mesh.faces()
    bkeys = keys[np.diff(owners.indptr) == 1]
    pts = nodes[bkeys]
    tags = []
    lo = np.array(origin, dtype=float)
    hi = lo + [lx, ly, lz]
    for p in pts:
        for ax, name in enumerate("xyz"):
            if np.all(p[:, ax] == lo[ax]):
                tags.append(name + "min")
                break
            if np.all(p[:, ax] == hi[ax]):
                tags.append(name + "max")
                break
    # outward-facing orientation of each boundary triangle
    faces = []
    owner_of = owners.elem[owners.indptr[:-1][np.diff(owners.indptr) == 1]]
    cents = mesh.centroids()
    for f, e in zip(bkeys, owner_of):
        a, b, c = nodes[f]
        if np.dot(np.cross(b - a, c - a), a - cents[e]) < 0:
            f = f[[0, 2, 1]]
        faces.append(f)
    return TetMesh(nodes, mesh.tets, np.array(faces, dtype=np.int64), tags)


@dataclass
class FvGrid:
    """Finite-volume view of a tet mesh (two-point flux connections).

    Transmissibilities are geometric (k * area / length, no viscosity).
    ``conn`` rows are (i, j) with i < j; ``conn_normal`` points from i to j.
    """

    centroids: np.ndarray
    volumes: np.ndarray
    conn: np.ndarray
    trans: np.ndarray
    conn_normal: np.ndarray
    conn_area: np.ndarray
    bconn_elem: np.ndarray
    bconn_tag: list
    bconn_trans: np.ndarray
    bconn_centroid: np.ndarray

    @property
    def n_cells(self):
        return len(self.volumes)

    def boundary_mask(self, tag):
        return np.array([t == tag for t in self.bconn_tag], dtype=bool)


def build_fv_grid(mesh, permeability, viscosity=1.0, half_trans="normal", eps=1e-14):
    """Two-point flux geometry for an isotropic permeability.

    For cell i on a face with area A, d_i is the vector from the cell
    centroid to the face centroid and n the unit normal pointing away from i.
    The half transmissibility is k * A / (d_i . n) (``half_trans="normal"``,
    exact for linear pressure whenever centroids of neighbours are joined
    normal to the face) or k * A * (d_i . n) / |d_i|^2 (``"projected"``).
    Interior faces combine both halves harmonically; boundary faces keep the
    single half (Dirichlet data sits at the face centroid).

    ``viscosity`` is validated only; mobility is applied by the flow solver.
    """
    if permeability <= 0 or viscosity <= 0:
        raise ValueError("permeability and viscosity must be positive")
    if half_trans not in ("normal", "projected"):
        raise ValueError(f"unknown half_trans {half_trans!r}")
    if mesh.n_elements == 0:
        raise EmptyMesh("mesh has no elements")
    cents = mesh.centroids()
    vols = mesh.volumes()
    keys, owners, _ = mesh.faces()
    tri = mesh.nodes[keys]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area2 = np.linalg.norm(normal, axis=1)
    scale = np.ptp(mesh.nodes, axis=0).max()
    if np.any(area2 <= 2 * eps * scale**2):
        raise DegenerateFace("face with (near) zero area")
    unit = normal / area2[:, None]
    area = 0.5 * area2
    fcent = tri.mean(axis=1)

    def half(elem, faces):
        d = fcent[faces] - cents[elem]
        n = unit[faces] * np.sign(np.einsum("ij,ij->i", d, unit[faces]))[:, None]
        dn = np.einsum("ij,ij->i", d, n)
        if np.any(dn <= eps * scale):
            raise DegenerateFace("centroid lies on a face plane")
        if half_trans == "normal":
            return permeability * area[faces] / dn, n
        return permeability * area[faces] * dn / np.einsum("ij,ij->i", d, d), n

    counts = np.diff(owners.indptr)
    first = owners.elem[owners.indptr[:-1]]

    inner = np.flatnonzero(counts == 2)
    i = first[inner]
    j = owners.elem[owners.indptr[:-1][inner] + 1]
    swap = i > j
    i, j = np.where(swap, j, i), np.where(swap, i, j)
    ti, ni = half(i, inner)
    tj, _ = half(j, inner)
    trans = 1.0 / (1.0 / ti + 1.0 / tj)
    order = np.lexsort((j, i))

    outer = np.flatnonzero(counts == 1)
    be = first[outer]
    tb, _ = half(be, outer)
    tag_of = {tuple(f): t for f, t in zip(np.sort(mesh.boundary_faces, axis=1).tolist(),
                                            mesh.boundary_tags)}
    btags = [tag_of.get(tuple(k), "") for k in keys[outer].tolist()]

    return FvGrid(
        centroids=cents,
        volumes=vols,
        conn=np.column_stack([i, j])[order],
        trans=trans[order],
        conn_normal=ni[order],
        conn_area=area[inner][order],
        bconn_elem=be,
        bconn_tag=btags,
        bconn_trans=tb,
        bconn_centroid=fcent[outer],
    )

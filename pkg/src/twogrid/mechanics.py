"""Linear-tetrahedron (P1) quasi-static elasticity with a Biot pressure load.

Displacement DOFs are node-major: dof = 3 * node + axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .errors import DegenerateElement, InsufficientConstraints, SizeMismatch, ValidationError
from .linalg import IndefiniteMatrix, pcg

AXES = {"x": 0, "y": 1, "z": 2}


def _axis(a):
    if isinstance(a, str):
        if a not in AXES:
            raise ValidationError("axis", f"unknown axis {a!r}")
        return AXES[a]
    return int(a)


@dataclass
class MechState:
    u: np.ndarray  # (N, 3)
    eps_v: np.ndarray
    sigma_v: np.ndarray
    p_mech: np.ndarray


@dataclass
class MechBcSpec:
    """Mechanical boundary conditions.

    fixed:        tag -> {axis: value}; a roller is a single axis fixed at 0.
    traction:     tag -> (tx, ty, tz) in Pa, applied as surface load.
    rigid_plate:  tag -> (axis, force); the tagged nodes' displacement along
                  ``axis`` is one shared unknown loaded by the total ``force`` (N).
    plane_strain: axis whose displacement is zero at every node, or None.
    node_fixed:   list of (node, axis, value) point constraints.
    """

    fixed: dict = field(default_factory=dict)
    traction: dict = field(default_factory=dict)
    rigid_plate: dict = field(default_factory=dict)
    plane_strain: str = None
    node_fixed: list = field(default_factory=list)

    def tags(self):
        return set(self.fixed) | set(self.traction) | set(self.rigid_plate)

    def validate(self, mesh):
        known = set(mesh.boundary_tags)
        for tag in self.tags():
            if tag not in known:
                raise ValidationError(f"bc.{tag}.mech", "tag not present in the mechanics mesh")


def shape_gradients(mesh):
    """Gradients of the four P1 shape functions per element, (M, 4, 3), and volumes."""
    X = mesh.nodes[mesh.tets]
    A = np.concatenate([np.ones((len(X), 4, 1)), X], axis=2)
    det = np.linalg.det(A)
    vol = np.abs(det) / 6.0
    scale = np.ptp(X, axis=1).max(axis=1)
    bad = vol <= 1e-14 * scale**3 / 6.0
    if np.any(bad):
        raise DegenerateElement(f"zero-volume elements: {np.flatnonzero(bad)[:10].tolist()}")
    C = np.linalg.inv(A)  # N_a(x) = C[0, a] + C[1:, a] . x
    return np.transpose(C[:, 1:, :], (0, 2, 1)), vol


def _strain_operator(grads):
    """Voigt B matrices (M, 6, 12) in order xx, yy, zz, yz, xz, xy."""
    m = len(grads)
    B = np.zeros((m, 6, 12))
    gx, gy, gz = grads[..., 0], grads[..., 1], grads[..., 2]
    B[:, 0, 0::3] = gx
    B[:, 1, 1::3] = gy
    B[:, 2, 2::3] = gz
    B[:, 3, 1::3] = gz
    B[:, 3, 2::3] = gy
    B[:, 4, 0::3] = gz
    B[:, 4, 2::3] = gx
    B[:, 5, 0::3] = gy
    B[:, 5, 1::3] = gx
    return B


def _element_dofs(mesh):
    return (3 * mesh.tets[:, :, None] + np.arange(3)).reshape(-1, 12)


def assemble_stiffness(mesh, mat):
    """Global P1 stiffness (3N x 3N, CSR), exactly symmetric."""
    grads, vol = shape_gradients(mesh)
    B = _strain_operator(grads)
    D = mat.elasticity_matrix()
    Ke = np.einsum("e,eki,kl,elj->eij", vol, B, D, B)
    dofs = _element_dofs(mesh)
    n = 3 * len(mesh.nodes)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    K = sps.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    K = ((K + K.T) * 0.5).tocsr()
    K.sort_indices()
    return K


def assemble_pressure_load(mesh, mat, p_mech, p0=0.0, grads=None):
    """Nodal forces f_a = sum_e b (p_e - p0) V_e grad N_a (element-constant p)."""
    p_mech = np.asarray(p_mech, dtype=float)
    if p_mech.shape != (mesh.n_elements,):
        raise SizeMismatch("p_mech must have one value per mechanics element")
    if grads is None:
        grads = shape_gradients(mesh)
    g, vol = grads
    w = mat.b * (p_mech - np.asarray(p0, dtype=float)) * vol
    fe = (w[:, None, None] * g).reshape(-1)
    return np.bincount(_element_dofs(mesh).ravel(), weights=fe, minlength=3 * len(mesh.nodes))


def assemble_body_force(mesh, mat, phi0=None):
    """Nodal forces of rho_b g with rho_b = phi0 rho_f0 + (1 - phi0) rho_s, V/4 per node."""
    phi = mat.porosity0 if phi0 is None else phi0
    rho_b = phi * mat.rho_f0 + (1.0 - phi) * mat.rho_s
    g = np.asarray(mat.gravity, dtype=float)
    f = np.zeros((len(mesh.nodes), 3))
    if not np.any(g):
        return f.ravel()
    vol = mesh.volumes()
    share = (rho_b * vol / 4.0)[:, None] * g
    for a in range(4):
        np.add.at(f, mesh.tets[:, a], share)
    return f.ravel()


def assemble_traction(mesh, bc):
    """Nodal forces of the uniform tractions in ``bc`` (area / 3 per node)."""
    f = np.zeros((len(mesh.nodes), 3))
    for tag, t in bc.traction.items():
        sel = [k for k, s in enumerate(mesh.boundary_tags) if s == tag]
        if not sel:
            continue
        tri = mesh.nodes[mesh.boundary_faces[sel]]
        area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        share = (area / 3.0)[:, None] * np.asarray(t, dtype=float)
        for a in range(3):
            np.add.at(f, mesh.boundary_faces[sel][:, a], share)
    return f.ravel()


def rigid_modes(nodes):
    """(3N, 6) translations and infinitesimal rotations about the centroid."""
    x = nodes - nodes.mean(axis=0)
    n = len(nodes)
    R = np.zeros((n, 3, 6))
    for a in range(3):
        R[:, a, a] = 1.0
    # rotation about axis e_k: e_k x r
    R[:, 1, 3], R[:, 2, 3] = -x[:, 2], x[:, 1]
    R[:, 0, 4], R[:, 2, 4] = x[:, 2], -x[:, 0]
    R[:, 0, 5], R[:, 1, 5] = -x[:, 1], x[:, 0]
    return R.reshape(3 * n, 6)


class ConstrainedSystem:
    """Dirichlet elimination plus master-slave condensation of rigid plates.

    Full displacements are u = T u_red + u_fixed; the reduced operator is
    T^T K T, which stays symmetric positive definite when every rigid mode
    is removed.
    """

    def __init__(self, mesh, K, bc):
        bc.validate(mesh)
        n = 3 * len(mesh.nodes)
        self.n = n
        fixed_val = {}

        def fix(dof, value):
            if dof in fixed_val and fixed_val[dof] != value:
                raise ValidationError("bc", f"conflicting values for dof {dof}")
            fixed_val[dof] = float(value)

        for tag, comps in bc.fixed.items():
            nodes = mesh.face_nodes_of_tag(tag)
            for ax, value in comps.items():
                for nd in nodes:
                    fix(3 * int(nd) + _axis(ax), value)
        if bc.plane_strain is not None:
            ax = _axis(bc.plane_strain)
            for nd in range(len(mesh.nodes)):
                fix(3 * nd + ax, 0.0)
        for nd, ax, value in bc.node_fixed:
            fix(3 * int(nd) + _axis(ax), value)

        groups = []
        self.plate_force = []
        owner = {}
        for tag, (ax, force) in bc.rigid_plate.items():
            dofs = sorted(3 * int(nd) + _axis(ax) for nd in mesh.face_nodes_of_tag(tag))
            for d in dofs:
                if d in fixed_val:
                    raise ValidationError(f"bc.{tag}.mech", "rigid plate dof is also fixed")
                if d in owner:
                    raise ValidationError(f"bc.{tag}.mech", "dof tied to two plates")
                owner[d] = len(groups)
            groups.append(dofs)
            self.plate_force.append(float(force))

        col = np.full(n, -1, dtype=np.int64)
        k = 0
        for d in range(n):
            if d in fixed_val:
                continue
            if d in owner:
                g = owner[d]
                if groups[g][0] == d:
                    col[groups[g]] = k
                    k += 1
                continue
            col[d] = k
            k += 1
        self.n_red = k
        self.fixed_dofs = np.array(sorted(fixed_val), dtype=np.int64)
        self.u_fixed = np.zeros(n)
        self.u_fixed[self.fixed_dofs] = [fixed_val[d] for d in self.fixed_dofs]
        self.plate_cols = [int(col[g[0]]) for g in groups]
        self.plate_dofs = groups
        free = np.flatnonzero(col >= 0)
        self.T = sps.csr_matrix((np.ones(len(free)), (free, col[free])), shape=(n, k))
        self._check_rigid_modes(mesh, groups)
        self.K = K
        self.K_red = (self.T.T @ K @ self.T).tocsr()
        self.K_red = ((self.K_red + self.K_red.T) * 0.5).tocsr()
        self.K_red.sort_indices()
        self._lift = K @ self.u_fixed if len(self.fixed_dofs) else None

    def _check_rigid_modes(self, mesh, groups):
        R = rigid_modes(mesh.nodes)
        rows = [R[self.fixed_dofs]]
        for g in groups:
            rows.append(R[g[1:]] - R[g[0]])
        C = np.vstack(rows) if rows else np.zeros((0, 6))
        C = C / np.maximum(np.abs(R).max(axis=0), 1e-300)
        if C.shape[0] < 6:
            rank = np.linalg.matrix_rank(C) if C.size else 0
        else:
            s = np.linalg.svd(C, compute_uv=False)
            rank = int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0
        if rank < 6:
            raise InsufficientConstraints(f"{6 - rank} rigid-body mode(s) left unconstrained")

    def reduce_load(self, f, plate_scale=1.0):
        rhs = f if self._lift is None else f - self._lift
        red = self.T.T @ rhs
        for c, force in zip(self.plate_cols, self.plate_force):
            red[c] += plate_scale * force
        return red

    def expand(self, u_red):
        return self.T @ u_red + self.u_fixed

    def solve(self, f, x0=None, rtol=1e-10, plate_scale=1.0):
        """Full displacement vector (3N,) for nodal loads ``f``."""
        rhs = self.reduce_load(f, plate_scale)
        if x0 is not None:
            x0 = self.T.T @ x0 / np.maximum(np.asarray(self.T.sum(axis=0)).ravel(), 1.0)
        try:
            ur = pcg(self.K_red, rhs, x0=x0, rtol=rtol)
        except IndefiniteMatrix as exc:
            raise InsufficientConstraints(str(exc)) from exc
        return self.expand(ur)


def solve_mechanics(stiffness, loads, bc, mesh, x0=None):
    """Solve K u = f under ``bc``; returns u with shape (N, 3)."""
    u = ConstrainedSystem(mesh, stiffness, bc).solve(loads, x0=x0)
    return u.reshape(-1, 3)


def volumetric_strain(mesh, u, grads=None):
    if grads is None:
        grads = shape_gradients(mesh)
    g, _ = grads
    u = np.asarray(u, dtype=float).reshape(-1, 3)
    return np.einsum("eaj,eaj->e", g, u[mesh.tets])


def element_strain_stress(mesh, mat, u, p_mech, p0=0.0, sigma_v0=0.0, grads=None):
    """Per-element volumetric strain and volumetric total stress.

    sigma_v = sigma_v0 + K_dr eps_v - b (p_mech - p0).
    """
    eps_v = volumetric_strain(mesh, u, grads)
    p_mech = np.asarray(p_mech, dtype=float)
    sigma_v = sigma_v0 + mat.K_dr * eps_v - mat.b * (p_mech - p0)
    return eps_v, sigma_v

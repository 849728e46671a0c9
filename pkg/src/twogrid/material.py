"""Isotropic poroelastic material and Biot coefficients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class PoroelasticMaterial:
    """Single-phase, isotropic, linear poroelastic medium.

    Either ``M`` (Biot modulus) is given, or it is derived from the porosity
    ``phi0``, fluid compressibility ``c_f`` and grain modulus ``K_s`` through
    1/M = phi0 c_f + (b - phi0) / K_s. When ``b`` is omitted and ``K_s`` is
    known, b = 1 - K_dr / K_s.
    """

    E: float
    nu: float
    b: float = None
    M: float = None
    phi0: float = None
    c_f: float = None
    K_s: float = None
    k: float = 1.0
    mu: float = 1.0
    rho_f0: float = 1000.0
    rho_s: float = 2650.0
    gravity: tuple = field(default=(0.0, 0.0, 0.0))
    _derived: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        derived_now = []
        if not self.E > 0:
            raise ValidationError("E", "must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValidationError("nu", "must satisfy -1 < nu < 0.5")
        b = self.b
        if b is None:
            if self.K_s is None:
                raise ValidationError("b", "give b or K_s")
            b = 1.0 - self.K_dr / self.K_s
            object.__setattr__(self, "b", b)
            derived_now.append("b")
        if not 0.0 <= b <= 1.0:
            raise ValidationError("b", "must lie in [0, 1]")
        derived = (self.c_f, self.K_s)
        if self.M is not None:
            if "M" not in self._derived and any(v is not None for v in derived):
                raise ValidationError("M", "give either M or (phi0, c_f, K_s), not both")
        else:
            if self.phi0 is None or any(v is None for v in derived):
                raise ValidationError("M", "give M or all of phi0, c_f, K_s")
            if not 0.0 < self.phi0 < 1.0:
                raise ValidationError("phi0", "must lie in (0, 1)")
            if self.c_f < 0 or self.K_s <= 0:
                raise ValidationError("c_f", "need c_f >= 0 and K_s > 0")
            inv_m = self.phi0 * self.c_f + (b - self.phi0) / self.K_s
            if not inv_m > 0:
                raise ValidationError("M", "derived 1/M is not positive")
            object.__setattr__(self, "M", 1.0 / inv_m)
            derived_now.append("M")
        if not self.M > 0:
            raise ValidationError("M", "must be positive")
        if self.phi0 is not None and not 0.0 <= self.phi0 <= 1.0:
            raise ValidationError("phi0", "must lie in [0, 1]")
        if not (self.k > 0 and self.mu > 0):
            raise ValidationError("k", "permeability and viscosity must be positive")
        g = tuple(float(v) for v in self.gravity)
        if len(g) != 3:
            raise ValidationError("gravity", "needs three components")
        object.__setattr__(self, "gravity", g)
        object.__setattr__(self, "_derived", tuple(sorted(set(self._derived) | set(derived_now))))

    @property
    def K_dr(self):
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def G(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lame(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def M_oed(self):
        """Constrained (oedometric) modulus K_dr + 4G/3."""
        return self.K_dr + 4.0 * self.G / 3.0

    @property
    def storage_fixed_stress(self):
        """b^2/K_dr + 1/M, the accumulation coefficient under fixed stress."""
        return self.b**2 / self.K_dr + 1.0 / self.M

    @property
    def compressibility(self):
        return 0.0 if self.c_f is None else self.c_f

    @property
    def porosity0(self):
        return 0.0 if self.phi0 is None else self.phi0

    def elasticity_matrix(self):
        """6x6 drained stiffness in Voigt order (xx, yy, zz, yz, xz, xy), engineering shears."""
        lam, G = self.lame, self.G
        D = np.zeros((6, 6))
        D[:3, :3] = lam
        D[[0, 1, 2], [0, 1, 2]] += 2.0 * G
        D[[3, 4, 5], [3, 4, 5]] = G
        return D

    def bulk_density(self):
        phi = self.porosity0
        return phi * self.rho_f0 + (1.0 - phi) * self.rho_s

    def replace(self, **changes):
        """Copy with changes; derived b and M are recomputed unless given."""
        from dataclasses import replace

        derived = tuple(d for d in self._derived if d not in changes)
        for name in derived:
            changes[name] = None
        if changes.get("M") is not None and "M" not in derived:
            changes.setdefault("c_f", None)
            changes.setdefault("K_s", None)
        return replace(self, _derived=(), **changes)

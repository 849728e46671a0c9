import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import isotropic_D
from twogrid.errors import ValidationError
from twogrid.material import PoroelasticMaterial


def test_moduli():
    mat = PoroelasticMaterial(E=3.0, nu=0.25, b=1.0, M=1.0)
    assert mat.K_dr == pytest.approx(2.0)
    assert mat.G == pytest.approx(1.2)
    assert mat.M_oed == pytest.approx(2.0 + 1.6)
    assert mat.storage_fixed_stress == pytest.approx(0.5 + 1.0)


@given(st.floats(0.1, 100), st.floats(-0.9, 0.49))
def test_elasticity_matrix_matches_lame(E, nu):
    mat = PoroelasticMaterial(E=E, nu=nu, b=1.0, M=1.0)
    np.testing.assert_allclose(mat.elasticity_matrix(), isotropic_D(E, nu), rtol=1e-12)
    # bulk modulus from the 3x3 block
    assert mat.elasticity_matrix()[:3, :3].sum() / 9.0 == pytest.approx(mat.K_dr, rel=1e-12)


def test_derived_biot_modulus():
    mat = PoroelasticMaterial(E=1.0, nu=0.25, b=0.6, phi0=0.2, c_f=0.5, K_s=4.0)
    assert mat.M == pytest.approx(1.0 / (0.2 * 0.5 + 0.4 / 4.0))
    assert mat.M == pytest.approx(5.0)


def test_derived_biot_coefficient():
    mat = PoroelasticMaterial(E=3.0, nu=0.25, phi0=0.25, c_f=1.0, K_s=8.0)
    assert mat.b == pytest.approx(1.0 - 2.0 / 8.0)
    assert mat.M == pytest.approx(1.0 / (0.25 + 0.5 / 8.0))


def test_replace_recomputes_derived():
    mat = PoroelasticMaterial(E=1.0, nu=0.25, b=0.6, phi0=0.2, c_f=0.5, K_s=4.0)
    other = mat.replace(c_f=0.0)
    assert other.M == pytest.approx(1.0 / (0.4 / 4.0))
    explicit = mat.replace(M=3.0)
    assert explicit.M == 3.0 and explicit.c_f is None


@pytest.mark.parametrize("changes, field", [
    (dict(E=0.0), "E"), (dict(nu=0.5), "nu"), (dict(nu=-1.0), "nu"),
    (dict(b=1.5), "b"), (dict(M=-1.0), "M"), (dict(k=0.0), "k"),
    (dict(c_f=1e-9), "M"), (dict(gravity=(0, 1)), "gravity"),
])
def test_validation(changes, field):
    args = dict(E=1.0, nu=0.25, b=0.5, M=1.0)
    args.update(changes)
    with pytest.raises(ValidationError) as info:
        PoroelasticMaterial(**args)
    assert info.value.field == field


def test_needs_m_or_components():
    with pytest.raises(ValidationError):
        PoroelasticMaterial(E=1.0, nu=0.25, b=0.5)
    with pytest.raises(ValidationError):
        PoroelasticMaterial(E=1.0, nu=0.25, b=0.5, phi0=1.5, c_f=0.1, K_s=1.0)


def test_bulk_density_limits():
    base = dict(E=1.0, nu=0.25, b=0.5, M=1.0, rho_f0=1000.0, rho_s=2600.0)
    assert PoroelasticMaterial(**base, phi0=1.0).bulk_density() == 1000.0
    assert PoroelasticMaterial(**base, phi0=0.0).bulk_density() == 2600.0
    assert PoroelasticMaterial(**base, phi0=0.25).bulk_density() == pytest.approx(2200.0)


def test_frozen():
    mat = PoroelasticMaterial(E=1.0, nu=0.25, b=0.5, M=1.0)
    with pytest.raises(dataclasses.FrozenInstanceError):
        mat.E = 2.0

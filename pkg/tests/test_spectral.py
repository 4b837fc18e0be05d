"""Characteristic polynomial, torus roots, phase calls, liquid frames."""

import math

import pytest

from dimerlab.spectral import SpectralError, frame_certificates, liquid_geometry


def test_phase_calls(uniform_sd, abcd_sd, honeycomb_sd, sqoct_sd, resonant_sd):
    assert uniform_sd.phase == "liquid_generic"
    assert abcd_sd.phase == "liquid_generic"
    assert honeycomb_sd.phase == "liquid_generic"
    assert sqoct_sd.phase == "gaseous"
    assert resonant_sd.phase == "liquid_nongeneric"


def test_uniform_characteristic_polynomial(uniform_sd):
    # w^-1 + 1 - z w^-1 + z, so P(1, 1) = 2 and P(-1, -1) = -2
    assert abs(uniform_sd.P_eval(1.0, 1.0) - 2.0) < 1e-12
    assert abs(uniform_sd.P_eval(-1.0, -1.0) + 2.0) < 1e-12


def test_uniform_roots_conjugate_pair(uniform_sd):
    roots = uniform_sd.roots
    assert len(roots) == 2
    zs = sorted(r.z.imag for r in roots)
    assert abs(zs[0] + 1) < 1e-9 and abs(zs[1] - 1) < 1e-9
    for r in roots:
        assert abs(abs(r.z) - 1) < 1e-12 and abs(abs(r.w) - 1) < 1e-12
        assert not r.double


def test_sqoct_has_no_torus_roots(sqoct_sd):
    assert sqoct_sd.roots == []
    assert abs(sqoct_sd.P_eval(1.0, 1.0) - 1.0) < 1e-12


def test_resonant_root_is_real(resonant_sd):
    assert any(r.is_real_point() or r.double for r in resonant_sd.roots)


def test_uniform_frame(uniform_sd):
    geo = liquid_geometry(uniform_sd)
    assert abs(geo.root.z + 1j) < 1e-9 and abs(geo.root.w + 1j) < 1e-9
    assert abs(geo.xhat - (1 - 1j)) < 1e-9
    assert abs(geo.yhat - (1 + 1j)) < 1e-9
    assert abs(geo.nu - 1 / math.sqrt(2)) < 1e-12


def test_abcd_frame(abcd_sd):
    geo = liquid_geometry(abcd_sd)
    # root at the primitive cube root of unity, conjugate branch
    assert abs(geo.root.z - complex(-0.5, -math.sqrt(3) / 2)) < 1e-9
    assert abs(geo.xhat - complex(math.sqrt(3) / 2, -1.5)) < 1e-9
    assert abs(geo.nu - math.sqrt(2 / (3 * math.sqrt(3)))) < 1e-12


def test_frame_certificates_small(uniform_sd, abcd_sd):
    for sd in (uniform_sd, abcd_sd):
        certs = frame_certificates(sd, liquid_geometry(sd))
        for name, value in certs.items():
            assert value < 1e-10, f"{name} = {value}"


def test_liquid_geometry_rejects_gaseous(sqoct_sd):
    with pytest.raises(SpectralError):
        liquid_geometry(sqoct_sd)

"""Scaling-limit machinery: test functions, Green pairings, amplitudes,
closed forms, identities, and the fluctuation-field harness."""

import math
from fractions import Fraction

import numpy as np
import pytest

from dimerlab.scaling import (
    ScalingError,
    clt_harness,
    covariance_lattice_sum,
    covariance_table,
    cycle_cancellation_residual,
    dipole_vector,
    free_energy,
    free_energy_edge_derivative,
    gaussian_bump,
    green_pairing,
    l2_product,
    lattice_embedding,
    reweighted_graph,
    square_octagon_closed_form,
    square_octagon_series_free_energy,
    strip_sum_identity,
    tensor_spline,
    white_noise_gaseous,
    white_noise_liquid,
    z2_closed_form,
)
from dimerlab.correlations import centered_correlation, pattern_probability

from conftest import edge_pattern

CATALAN = 0.915965594177219


# ---------------------------------------------------------------------------
# test functions and quadrature
# ---------------------------------------------------------------------------


def test_gaussian_bump_shape():
    phi = gaussian_bump(width=0.25, cutoff=0.75)
    assert phi.value(0j) == 1.0
    assert phi.value(0.8 + 0j) == 0.0
    assert phi.value(0.3j) == phi.value(0.3 + 0j)  # radial
    # gradient against a central difference
    h = 1e-6
    for u in (0.1 + 0.2j, 0.35 - 0.1j):
        gx = (phi.value(u + h) - phi.value(u - h)) / (2 * h)
        gy = (phi.value(u + h * 1j) - phi.value(u - h * 1j)) / (2 * h)
        grad = phi.grad(u)
        assert abs(grad.real - gx) < 1e-7
        assert abs(grad.imag - gy) < 1e-7


def test_tensor_spline_support():
    phi = tensor_spline(scale=0.5)
    assert phi.value(0j) > 0
    assert phi.value(1.1 + 0j) == 0.0
    assert phi.value(0.3 + 0.4j) > 0


def test_l2_product_against_riemann():
    phi = gaussian_bump()
    xs = np.linspace(-0.8, 0.8, 1601)
    X, Y = np.meshgrid(xs, xs)
    vals = np.asarray(phi.value(X + 1j * Y))
    riemann = float(np.sum(vals ** 2)) * (xs[1] - xs[0]) ** 2
    assert abs(l2_product(phi, phi) - riemann) < 1e-6


# ---------------------------------------------------------------------------
# Green-function pairings
# ---------------------------------------------------------------------------


def test_green_pairing_radial_identity():
    phi = gaussian_bump()
    got = green_pairing(phi, 1.0, phi, 1.0)
    want = l2_product(phi, phi) / (2 * math.pi)
    assert abs(got / want - 1) < 1e-3


def test_green_pairing_symmetric():
    p1 = gaussian_bump(center=0j)
    p2 = gaussian_bump(center=1.0 + 0.5j, width=0.2, cutoff=0.6)
    a = green_pairing(p1, 1.0, p2, 1j)
    b = green_pairing(p2, 1j, p1, 1.0)
    assert a == b


def test_green_pairing_orthogonal_directions_vanish():
    phi = gaussian_bump()
    assert abs(green_pairing(phi, 1.0, phi, 1j)) < 1e-8


def test_green_pairing_far_field_dipole():
    # distant supports: the pairing reduces to the 1/u^2 dipole kernel
    # weighted by the masses of the two profiles
    phi1 = gaussian_bump(center=0j)
    phi2 = gaussian_bump(center=6.0 + 0j)
    xs = np.linspace(-0.8, 0.8, 1001)
    X, Y = np.meshgrid(xs, xs)
    mass = float(np.sum(np.asarray(phi1.value(X + 1j * Y)))) * (xs[1] - xs[0]) ** 2
    want = -(1.0 / (2 * math.pi ** 2)) * (1.0 / 36.0) * mass * mass
    got = green_pairing(phi1, 1.0, phi2, 1.0)
    assert abs(got - want) < 2e-2 * abs(want)


# ---------------------------------------------------------------------------
# embeddings and covariance tables
# ---------------------------------------------------------------------------


def test_lattice_embedding_uniform(uniform_sd):
    embed, kind = lattice_embedding(uniform_sd)
    assert kind == "liquid_generic"
    assert abs(abs(embed(1, 0)) - 1.0) < 1e-9
    assert abs(abs(embed(0, 1)) - 1.0) < 1e-9


def test_lattice_embedding_gaseous(sqoct_sd):
    embed, kind = lattice_embedding(sqoct_sd)
    assert kind == "gaseous"
    assert abs(embed(1, 0)) > 0


def test_covariance_table_matches_centered(uniform_graph, uniform_table):
    pa = edge_pattern(uniform_graph, "a")
    pc = edge_pattern(uniform_graph, "c")
    cov, p1bar, p2bar = covariance_table(uniform_table, pa, pc, 5)
    assert abs(p1bar - 0.25) < 1e-12
    for off in ((1, 0), (0, 2), (-3, 4), (5, 5)):
        want = centered_correlation(uniform_table, pa, pc.translated(off))
        got = cov[off[1] + 5, off[0] + 5]
        assert abs(got - want) < 1e-12, off


def test_covariance_table_origin_variance(uniform_graph, uniform_table):
    pa = edge_pattern(uniform_graph, "a")
    cov, p1bar, _ = covariance_table(uniform_table, pa, pa, 2)
    assert abs(cov[2, 2] - p1bar * (1 - p1bar)) < 1e-12


# ---------------------------------------------------------------------------
# white-noise amplitudes
# ---------------------------------------------------------------------------


def test_liquid_amplitude_uniform(uniform_graph, uniform_far_table):
    pa = edge_pattern(uniform_graph, "a")
    rep = white_noise_liquid(uniform_far_table, pa)
    target = 1.0 / (4 * math.pi)
    assert rep.method == "lattice_sum"
    assert abs(rep.amplitude / target - 1) < 1e-4
    assert abs(rep.gff_coefficient - 1 / math.pi) < 1e-12
    assert rep.error_estimate < 1e-2 * target
    # the radial-cutoff limit of the raw sum carries the squared dipole
    lim = rep.details["radial_sum_limit"]
    assert abs(lim - 1.0 / (2 * math.pi)) < 1e-3


def test_liquid_amplitude_box_shape_independent(uniform_graph, uniform_far_table):
    pa = edge_pattern(uniform_graph, "a")
    rep = white_noise_liquid(uniform_far_table, pa, check_box=True)
    assert abs(rep.amplitude / (1.0 / (4 * math.pi)) - 1) < 1e-4


def test_liquid_amplitude_needs_depth(abcd_graph, abcd_table):
    pa = edge_pattern(abcd_graph, "a")
    with pytest.raises(ScalingError):
        white_noise_liquid(abcd_table, pa)


def test_gaseous_amplitude_routes_agree(sqoct_sd):
    rep = white_noise_gaseous(sqoct_sd, "w1b1")
    assert rep.method == "free_energy_hessian"
    assert rep.gff_coefficient == 0.0
    assert rep.error_estimate < 1e-6


def test_gaseous_cross_amplitude_is_minus_half(sqoct_sd):
    # the two square neighbors of an octagon edge split its amplitude
    diag = white_noise_gaseous(sqoct_sd, "w1b1").amplitude
    cross = white_noise_gaseous(sqoct_sd, "w1b1", "w2b1").amplitude
    assert abs(cross + diag / 2) < 1e-8


def test_dipole_vector_uniform(uniform_graph, uniform_table):
    ana = pattern_probability(uniform_table, edge_pattern(uniform_graph, "a"))
    assert ana.dipole_sq is not None
    d = dipole_vector(ana)
    assert d.real >= 0
    assert abs(d) > 0.05


# ---------------------------------------------------------------------------
# free energy and reweighting
# ---------------------------------------------------------------------------


def test_free_energy_uniform_catalan(uniform_sd):
    target = 2 * CATALAN / math.pi
    f256 = free_energy(uniform_sd, 256)
    f512 = free_energy(uniform_sd, 512)
    assert abs(f256 - target) < 5e-5
    assert abs(f512 - target) < abs(f256 - target)


def test_free_energy_derivative_is_edge_density(sqoct_sd):
    d = free_energy_edge_derivative(sqoct_sd, "w1b1")
    assert abs(d - 0.1189252399636032) < 1e-7


def test_reweighted_graph_changes_probability(sqoct_graph, sqoct_sd):
    g2 = reweighted_graph(sqoct_graph, {"w1b1": 0.3})
    assert g2.edge_by_id("w1b1").weight > sqoct_graph.edge_by_id("w1b1").weight
    assert g2.edge_by_id("w2b2").weight == sqoct_graph.edge_by_id("w2b2").weight


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def test_square_octagon_closed_form_pins_series():
    cf = square_octagon_closed_form()
    assert abs(cf["elliptic_K"] - 1.9953027776647294) < 1e-12
    assert abs(cf["elliptic_E"] - 1.2763499431699064) < 1e-12
    assert abs(cf["P_w1b1"] - 0.11892523996360316) < 1e-12
    assert abs(cf["A_w1b1"] - 0.11442489745978039) < 1e-12
    assert abs(cf["P_w2b1"] - 0.44053738001819842) < 1e-12
    assert abs(cf["A_w2b1"] - 0.25404984002426456) < 1e-12
    assert abs(cf["free_energy"] - square_octagon_series_free_energy()) < 1e-12


def test_z2_closed_form_values():
    uni = z2_closed_form(1, 1, 1, 1)
    assert abs(uni["amplitude"] - 1.0 / (4 * math.pi)) < 1e-14
    abcd = z2_closed_form(2, 1, 1, 1)
    assert abs(abcd["amplitude"] - 1.0 / (3 * math.sqrt(3) * math.pi)) < 1e-14
    hc = z2_closed_form(1, 1, 1, 0)
    assert abs(hc["amplitude"]) == 0.0


def test_z2_closed_form_rejects_solid():
    with pytest.raises(ScalingError):
        z2_closed_form(4, 1, 1, 1)


# ---------------------------------------------------------------------------
# structural identities
# ---------------------------------------------------------------------------


def test_strip_identity(uniform_sd):
    val = strip_sum_identity(uniform_sd, 1, 2000)
    assert abs(val) < 1e-4
    with pytest.raises(ScalingError):
        strip_sum_identity(uniform_sd, 0, 100)


def test_cycle_cancellation_random(seed=3):
    rng = np.random.default_rng(seed)
    for m in (3, 4, 5):
        for _ in range(20):
            pts = rng.normal(size=m) + 1j * rng.normal(size=m)
            assert cycle_cancellation_residual(pts) < 1e-12


def test_cycle_cancellation_rejects_coincident():
    with pytest.raises(ScalingError):
        cycle_cancellation_residual([1 + 1j, 1 + 1j, 0j])


# ---------------------------------------------------------------------------
# lattice sums and the fluctuation harness
# ---------------------------------------------------------------------------


def test_covariance_lattice_sum_gaseous_limit(sqoct_graph, sqoct_table, sqoct_sd):
    p = edge_pattern(sqoct_graph, "w1b1")
    psi = gaussian_bump()
    got = covariance_lattice_sum(sqoct_table, p, p, psi, Fraction(1, 8))
    want = white_noise_gaseous(sqoct_sd, "w1b1").amplitude
    assert abs(got - want) < 1e-3


def test_covariance_lattice_sum_resonant_raises(resonant_graph, resonant_table):
    p = edge_pattern(resonant_graph, "a")
    with pytest.raises(ScalingError):
        covariance_lattice_sum(resonant_table, p, p, gaussian_bump(),
                               Fraction(1, 8))


def test_clt_harness_smoke(sqoct_graph, sqoct_table, tmp_path):
    pat = edge_pattern(sqoct_graph, "w2b1")
    phi = gaussian_bump()
    csv_path = tmp_path / "rows.csv"
    rows = clt_harness(sqoct_table, pat, [phi], [Fraction(1, 8)],
                       n_samples=1000, seed=11, csv_path=csv_path)
    assert len(rows) == 1
    r = rows[0]
    assert r.n_samples == 1000
    assert abs(r.var / r.predicted_var - 1) < 0.15
    assert r.ci_low < r.var < r.ci_high
    text = csv_path.read_text()
    assert text.splitlines()[0].startswith("epsilon,")
    assert len(text.splitlines()) == 2


def test_clt_harness_rejects_tiny_runs(sqoct_graph, sqoct_table):
    pat = edge_pattern(sqoct_graph, "w2b1")
    with pytest.raises(ScalingError):
        clt_harness(sqoct_table, pat, [gaussian_bump()], [Fraction(1, 8)],
                    n_samples=10, seed=1)

"""End-to-end acceptance battery.

Each test exercises one numbered acceptance item at its stated tolerance
and prints a single pass line with the key figures (visible under -s;
pytest -v shows the per-item verdict either way). The criteria:

 1. square-octagon golden values against the elliptic/series oracles
 2. liquid amplitudes against closed forms, deep kernel tables
 3. honeycomb degeneration (vanishing amplitude)
 4. vertex sum rules for probabilities and amplitudes
 5. inverse-kernel asymptotic residual power law
 6. strip cancellation identity
 7. determinantal machinery consistency on random pairs
 8. sampler exactness at one hundred thousand samples
 9. fluctuation-field moments (gaseous) and the epsilon trend (liquid)
10. cycle cancellation
11. exact torus enumeration coherence
"""

import math
import time
from fractions import Fraction

import numpy as np

from dimerlab.correlations import (
    build_window_state,
    centered_correlation,
    check_matching_violations,
    inclusion_exclusion_check,
    joint_probability,
    pattern_probability,
    sample_window,
    window_marginals,
)
from dimerlab.kernels import (
    asymptotic_coefficient,
    build_kernel_table,
    kernel_coefficient,
)
from dimerlab.lattice import Pattern, enumerate_torus, pattern_vertices
from dimerlab.scaling import (
    clt_harness,
    covariance_lattice_sum,
    cross_pattern_sum_rule,
    cycle_cancellation_residual,
    free_energy,
    gaussian_bump,
    square_octagon_closed_form,
    square_octagon_series_free_energy,
    strip_sum_identity,
    white_noise_gaseous,
    white_noise_liquid,
    z2_closed_form,
)

from conftest import edge_pattern


def _pass(n, detail):
    print(f"criterion {n}: PASS ({detail})")


def test_criterion_01_square_octagon_goldens(sqoct_graph, sqoct_sd, sqoct_table):
    start = time.monotonic()
    cf = square_octagon_closed_form()

    series_f = square_octagon_series_free_energy()
    quad_f = free_energy(sqoct_sd, 256)
    df = abs(quad_f - series_f)
    assert df <= 1e-8

    p_oct = pattern_probability(
        sqoct_table, edge_pattern(sqoct_graph, "w1b1")).probability
    assert abs(p_oct - cf["P_w1b1"]) <= 1e-8
    a_oct = white_noise_gaseous(sqoct_sd, "w1b1").amplitude
    assert abs(a_oct - cf["A_w1b1"]) <= 1e-8

    p_sq = pattern_probability(
        sqoct_table, edge_pattern(sqoct_graph, "w2b1")).probability
    assert abs(p_sq - cf["P_w2b1"]) <= 1e-8
    a_sq = white_noise_gaseous(sqoct_sd, "w2b1").amplitude
    assert abs(a_sq - cf["A_w2b1"]) <= 1e-8

    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    _pass(1, f"series-vs-quadrature {df:.1e}, probabilities and amplitudes "
             f"within 1e-8, {elapsed:.1f}s")


def test_criterion_02_liquid_amplitude_closed_forms(
        uniform_graph, uniform_sd, abcd_graph, abcd_sd):
    start = time.monotonic()
    worst = 0.0
    for g, sd, abcd in ((uniform_graph, uniform_sd, (1, 1, 1, 1)),
                        (abcd_graph, abcd_sd, (2, 1, 1, 1))):
        table = build_kernel_table(sd, radius=2048)
        target = z2_closed_form(*abcd)["amplitude"]
        pa = edge_pattern(g, "a")
        pb = edge_pattern(g, "b")
        aa = white_noise_liquid(table, pa).amplitude
        ab = white_noise_liquid(table, pa, pb).amplitude
        rel = abs(aa / target - 1)
        cross = abs(ab + aa) / abs(aa)
        assert rel <= 0.02, g.name
        assert cross <= 0.02, g.name
        worst = max(worst, rel, cross)
    elapsed = time.monotonic() - start
    assert elapsed < 600.0
    _pass(2, f"worst relative deviation {worst:.1e} at radius 2048, "
             f"{elapsed:.1f}s")


def test_criterion_03_honeycomb_amplitude_vanishes(
        honeycomb_graph, honeycomb_amp_table):
    worst = 0.0
    for eid in ("a", "b", "c"):
        rep = white_noise_liquid(honeycomb_amp_table,
                                 edge_pattern(honeycomb_graph, eid))
        worst = max(worst, abs(rep.amplitude))
    assert worst <= 1e-4
    _pass(3, f"max |amplitude| = {worst:.1e}")


def test_criterion_04_vertex_sum_rules(
        sqoct_graph, sqoct_table, sqoct_sd,
        uniform_graph, uniform_table, uniform_far_table,
        abcd_graph, abcd_table,
        resonant_graph, resonant_table):
    # probability sums at every white vertex
    worst_gas = 0.0
    for i in range(sqoct_graph.n):
        tot = sum(
            pattern_probability(
                sqoct_table, Pattern(((e.id, (0, 0)),), e.white_ref((0, 0)))
            ).probability
            for e in sqoct_graph.edges_at_white(i)
        )
        worst_gas = max(worst_gas, abs(tot - 1))
    assert worst_gas <= 1e-7

    worst_liq = 0.0
    for g, table in ((uniform_graph, uniform_table),
                     (abcd_graph, abcd_table),
                     (resonant_graph, resonant_table)):
        for i in range(g.n):
            tot = sum(
                pattern_probability(
                    table, Pattern(((e.id, (0, 0)),), e.white_ref((0, 0)))
                ).probability
                for e in g.edges_at_white(i)
            )
            worst_liq = max(worst_liq, abs(tot - 1))
    assert worst_liq <= 1e-4

    # amplitude double-sum rule on a gaseous and a liquid vertex
    res_gas = cross_pattern_sum_rule(sqoct_table, ("white", 0))
    assert res_gas["residual"] <= 0.02
    res_liq = cross_pattern_sum_rule(uniform_far_table, ("white", 0))
    assert res_liq["residual"] <= 0.02
    _pass(4, f"probability sums off by {worst_gas:.1e} (gaseous) / "
             f"{worst_liq:.1e} (liquid); amplitude sum residuals "
             f"{res_gas['residual']:.1e} / {res_liq['residual']:.1e}")


def test_criterion_05_asymptotic_power_law(uniform_sd, uniform_far_table):
    xs = np.arange(32, 257)
    res = np.array([
        abs(kernel_coefficient(uniform_far_table, 0, 0, (int(x), 0))
            - asymptotic_coefficient(uniform_sd, 0, 0, (int(x), 0)))
        for x in xs
    ])
    slope = float(np.polyfit(np.log(xs), np.log(res), 1)[0])
    assert slope <= -1.7
    _pass(5, f"residual power law exponent {slope:.2f} (theory -2)")


def test_criterion_06_strip_identity(uniform_sd):
    val = strip_sum_identity(uniform_sd, 1, 10 ** 4)
    assert abs(val) <= 1e-3
    _pass(6, f"|strip sum| = {abs(val):.1e} over 2e4+1 terms")


def test_criterion_07_determinantal_consistency(
        uniform_graph, uniform_table, abcd_graph, abcd_table,
        honeycomb_graph, honeycomb_amp_table, sqoct_graph, sqoct_table,
        resonant_graph, resonant_table):
    cases = [
        (uniform_graph, uniform_table),
        (abcd_graph, abcd_table),
        (honeycomb_graph, honeycomb_amp_table),
        (sqoct_graph, sqoct_table),
        (resonant_graph, resonant_table),
    ]
    worst_ie = worst_cen = worst_tr = 0.0
    for g, table in cases:
        rng = np.random.default_rng(int(g.graph_hash[:8], 16))
        ids = [e.id for e in g.edges]
        pairs = []
        while len(pairs) < 20:
            e1 = (str(rng.choice(ids)), (int(rng.integers(-3, 4)),
                                         int(rng.integers(-3, 4))))
            e2 = (str(rng.choice(ids)), (int(rng.integers(-3, 4)),
                                         int(rng.integers(-3, 4))))
            if e1 == e2:
                continue
            p1 = edge_pattern(g, e1[0], e1[1])
            p2 = edge_pattern(g, e2[0], e2[1])
            v1 = set(pattern_vertices(g, p1))
            v2 = set(pattern_vertices(g, p2))
            if v1 & v2:
                continue
            pairs.append((e1, e2, p1, p2))
        for e1, e2, p1, p2 in pairs:
            worst_ie = max(worst_ie,
                           abs(inclusion_exclusion_check(table, e1, e2)))
        for e1, e2, p1, p2 in pairs[:5]:
            cen = centered_correlation(table, p1, p2)
            joint = joint_probability(table, [p1, p2])
            prod = (pattern_probability(table, p1).probability
                    * pattern_probability(table, p2).probability)
            worst_cen = max(worst_cen, abs(cen - (joint - prod)))
            moved = joint_probability(
                table, [p1.translated((2, -3)), p2.translated((2, -3))])
            worst_tr = max(worst_tr, abs(joint - moved))
    assert worst_ie <= 1e-8
    assert worst_cen <= 1e-12
    assert worst_tr <= 1e-12
    _pass(7, f"inclusion-exclusion {worst_ie:.1e}, centered identity "
             f"{worst_cen:.1e}, translation {worst_tr:.1e}")


def test_criterion_08_sampler_exactness(sqoct_graph, sqoct_table):
    window = [(e.id, (0, 0)) for e in sqoct_graph.edges]
    state = build_window_state(sqoct_table, window)
    n = 10 ** 5
    rng = np.random.default_rng(29)
    samples = np.empty((n, len(state.edges)), dtype=np.int8)
    violations = 0
    for k in range(n):
        s = sample_window(state, rng)
        samples[k] = s
        violations += check_matching_violations(state, s)
    assert violations == 0

    exact = window_marginals(state, sqoct_table)
    freq = samples.mean(axis=0)
    sigma = np.sqrt(exact * (1 - exact) / n)
    margin_dev = np.abs(freq - exact) / np.maximum(sigma, 1e-300)
    assert (np.abs(freq - exact) <= 3 * sigma).all()

    index = {e.id: t for t, (e, off) in enumerate(state.edges)}
    pairs = [
        ("w1b1", "w2b2"), ("w1b1", "w3b3"), ("w1b1", "w4b4"),
        ("w2b1", "w3b2"), ("w2b1", "w1b2"), ("w3b2", "w4b1"),
        ("w1b2", "w4b3"), ("w2b3", "w3b4"),
        ("w1b1", "w1b2"), ("w1b1", "w4b1"),  # vertex conflicts: joint 0
    ]
    worst_pair = 0.0
    for ida, idb in pairs:
        pa = edge_pattern(sqoct_graph, ida)
        pb = edge_pattern(sqoct_graph, idb)
        p = joint_probability(sqoct_table, [pa, pb])
        emp = float(
            (samples[:, index[ida]] & samples[:, index[idb]]).mean())
        sig = math.sqrt(max(p * (1 - p), 0.0) / n)
        assert abs(emp - p) <= 3 * sig, (ida, idb)
        if sig > 0:
            worst_pair = max(worst_pair, abs(emp - p) / sig)
    _pass(8, f"zero violations in 1e5 samples; worst marginal "
             f"{margin_dev.max():.2f} sigma, worst joint {worst_pair:.2f} sigma")


def test_criterion_09_fluctuation_moments(
        sqoct_graph, sqoct_table, uniform_graph, uniform_far_table):
    # gaseous side: moments of the scaled field at eps = 1/16
    pat = edge_pattern(sqoct_graph, "w2b1")
    phi = gaussian_bump(width=0.2, cutoff=0.5)
    row = clt_harness(sqoct_table, pat, [phi], [Fraction(1, 16)],
                      n_samples=10 ** 4, seed=7)[0]
    var_rel = abs(row.var / row.predicted_var - 1)
    assert var_rel <= 0.10
    skew = row.c3 / row.var ** 1.5
    skew_sigma = abs(skew) / math.sqrt(6.0 / row.n_samples)
    assert skew_sigma <= 3.0
    kurt = (row.c4 + 3 * row.var ** 2) / (3 * row.var ** 2)
    assert 0.9 <= kurt <= 1.1

    # liquid side: the pre-limit lattice sum is Cauchy in eps with
    # shrinking increments
    pa = edge_pattern(uniform_graph, "a")
    psi = gaussian_bump()
    vals = [covariance_lattice_sum(uniform_far_table, pa, pa, psi, e)
            for e in (Fraction(1, 32), Fraction(1, 64), Fraction(1, 128))]
    d1 = abs(vals[1] - vals[0])
    d2 = abs(vals[2] - vals[1])
    assert d2 < d1
    _pass(9, f"variance off by {var_rel:.1%}, skew {skew_sigma:.2f} sigma, "
             f"kurtosis ratio {kurt:.3f}; eps increments {d1:.1e} -> {d2:.1e}")


def test_criterion_10_cycle_cancellation():
    rng = np.random.default_rng(2025)
    worst = 0.0
    for m in range(3, 8):
        for _ in range(100):
            pts = rng.normal(size=m) + 1j * rng.normal(size=m)
            worst = max(worst, cycle_cancellation_residual(pts))
    assert worst <= 1e-10
    _pass(10, f"worst relative cycle sum {worst:.1e} over 500 instances")


def test_criterion_11_enumeration_coherence(uniform_graph):
    devs = []
    for L in (1, 2, 3, 4):
        te = enumerate_torus(uniform_graph, L)
        assert sum(te.marginals.values()) == 1  # exact rational identity
        devs.append(abs(te.marginals["a"] - Fraction(1, 4)))
    assert all(d2 <= d1 for d1, d2 in zip(devs, devs[1:]))
    assert devs[-1] == 0
    _pass(11, "vertex sums exact on all tori; deviation from 1/4 "
              f"non-increasing, final {float(devs[-1]):.1e}")

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import growth_eps, j_exact, mountain_pass_margins, smooth_field, soliton_1d
from nlkg.errors import CutoffExceedsBox, GridMismatch, InadmissiblePair, NoRoot, TruncationLoss
from nlkg.field_core import (BoxField, BoxGrid, Exponential2D, PowerSum, RadialField,
                             RadialGrid)
from nlkg.functionals import (ABOVE, KMINUS, KPLUS, FieldSummary, ScalingPair, StatePair,
                              H, H_01, H_10, H_virial, K, K_01, K_10, K_parts, K_virial,
                              classify, cone_edges, diagnostic_columns, diagnostics,
                              energy, grad_norm_sq, l2_norm_sq, landscape, nehari_project,
                              quadratic_energy, rescale, sample_pairs, static_energy)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 6))
def test_admissible_pairs_have_positive_weights(a, b, d):
    sp = ScalingPair(a, b, d)
    if sp.admissible:
        assert sp.mu_bar > 0 and sp.mu_low >= 0


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_sample_pairs_cover_edges(d):
    pairs = sample_pairs(d, 20)
    assert len(pairs) >= 20 and all(p.admissible for p in pairs)
    labels = {(p.alpha, p.beta) for p in pairs}
    for e in cone_edges(d):
        assert (float(e[0]), float(e[1])) in labels


def test_energy_examples(gs1, octic):
    g = gs1.Q.grid
    zero = StatePair.at_rest(RadialField(g, np.zeros(g.n)))
    assert energy(zero, octic) == 0 and quadratic_energy(zero) == 0
    s = StatePair.at_rest(gs1.Q * 0.7)
    assert energy(s, octic) == static_energy(gs1.Q * 0.7, octic)
    Qc = RadialField(g, soliton_1d(g.nodes))
    assert abs(energy(StatePair.at_rest(Qc), octic) / gs1.m - 1) < 1e-6


def test_grid_mismatch():
    a = RadialField(RadialGrid(1, 5.0, 64), np.zeros(64))
    b = RadialField(RadialGrid(1, 6.0, 64), np.zeros(64))
    with pytest.raises(GridMismatch):
        StatePair(a, b)


def test_quadratic_energy_gaussian():
    g = RadialGrid(3, 12.0, 8192)
    phi = RadialField.from_function(g, lambda r: np.exp(-r * r / 2))
    s = StatePair(phi, phi * 0.5)
    pi32 = math.pi**1.5
    expected = 0.5 * (0.25 * pi32 + 1.5 * pi32 + pi32)
    assert abs(quadratic_energy(s) / expected - 1) < 1e-6
    model = PowerSum(((1.0, 4.0),))
    assert quadratic_energy(s) >= energy(s, model)


def test_rescale_examples():
    g = RadialGrid(3, 30.0, 8192)
    phi = RadialField.from_function(g, lambda r: np.exp(-r * r / 2))
    assert rescale(phi, ScalingPair(1, 0, 3), 0.0) is phi
    l2 = ScalingPair(1.5, -1.0, 3)
    h1 = ScalingPair(0.5, -1.0, 3)
    for lam in (-0.5, 0.3, 0.8):
        assert abs(l2_norm_sq(rescale(phi, l2, lam)) / l2_norm_sq(phi) - 1) < 1e-7
        assert abs(grad_norm_sq(rescale(phi, h1, lam)) / grad_norm_sq(phi) - 1) < 1e-6


def test_rescale_group_law():
    g = RadialGrid(2, 30.0, 8192)
    phi = RadialField.from_function(g, lambda r: np.exp(-r * r / 2) * (1 + 0.3 * r))
    sp = ScalingPair(1.0, 0.7, 2)
    a = rescale(rescale(phi, sp, 0.3), sp, -0.5)
    b = rescale(phi, sp, -0.2)
    assert math.sqrt(l2_norm_sq(RadialField(g, a.values - b.values))) <= 1e-6


def test_rescale_truncation_warning():
    g = RadialGrid(1, 10.0, 512)
    phi = RadialField.from_function(g, lambda r: np.exp(-r * r / 8))
    with pytest.warns(TruncationLoss):
        rescale(phi, ScalingPair(0, 1, 1), 2.0)
    with pytest.raises(TruncationLoss):
        rescale(phi, ScalingPair(0, 1, 1), 2.0, strict=True)


def test_K_examples(octic):
    g = RadialGrid(1, 30.0, 8192)
    zero = RadialField(g, np.zeros(g.n))
    assert K(zero, ScalingPair(1, 0, 1), octic) == 0
    phi = RadialField.from_function(g, lambda r: 0.8 * np.exp(-r * r / 3))
    s = FieldSummary.of(phi, octic)
    assert abs(K(phi, ScalingPair(1, 0, 1), octic) - (s.grad + s.mass - s.DF)) <= 1e-12 * s.grad
    kq, kn = K_parts(phi, ScalingPair(0.3, 0.7, 1), octic)
    assert kq + kn == K(phi, ScalingPair(0.3, 0.7, 1), octic)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_K_closed_forms(d, rng):
    model = PowerSum(((1.0, 8.0),))
    g = RadialGrid(d, 30.0, 4096)
    for _ in range(10):
        phi = smooth_field(g, rng)
        for sp, closed in ((ScalingPair(1, 0, d), K_10(phi, model)),
                           (ScalingPair(0, 1, d), K_01(phi, model, d)),
                           (ScalingPair(d, -2, d), K_virial(phi, model, d))):
            val = K(phi, sp, model)
            assert abs(val - closed) <= 1e-12 * (grad_norm_sq(phi) + l2_norm_sq(phi))


@pytest.mark.parametrize("d,model", [(1, PowerSum(((1.0, 8.0),))), (3, PowerSum(((0.25, 4.0),)))],
                         ids=["d1", "d3"])
def test_K_is_scaling_derivative(d, model, rng):
    # five-point centred differences of lam -> J(rescale(phi, lam)), h = 1e-4
    g = RadialGrid(d, 30.0, 8192)
    h = 1e-4
    for _ in range(5):
        phi = smooth_field(g, rng, amp=0.8)
        for sp in sample_pairs(d, 10)[:10]:
            def j(t):
                return static_energy(rescale(phi, sp, t), model)
            fd = (-j(2 * h) + 8 * j(h) - 8 * j(-h) + j(-2 * h)) / (12 * h)
            k = K(phi, sp, model)
            assert abs(fd - k) <= 1e-5 * abs(k)


def test_j_exact_matches_resampling(rng):
    g = RadialGrid(3, 30.0, 8192)
    model = PowerSum(((0.25, 4.0),))
    phi = smooth_field(g, rng)
    sp = ScalingPair(1.0, 0.5, 3)
    for lam in (-0.4, 0.2):
        a = j_exact(phi, sp, model, lam)
        b = static_energy(rescale(phi, sp, lam), model)
        assert abs(a - b) <= 1e-6 * abs(a)


@pytest.mark.parametrize("d,model", [(1, PowerSum(((1.0, 8.0),))), (2, PowerSum(((1.0, 4.5), (0.5, 6.0)))),
                                     (3, PowerSum(((0.25, 4.0),))), (2, Exponential2D(1.0, 5.0, 1.0, 0.0))],
                         ids=["d1", "d2sum", "d3", "exp"])
def test_H_closed_forms(d, model, rng):
    g = RadialGrid(d, 30.0, 4096)
    for _ in range(25):
        phi = smooth_field(g, rng, amp=0.9)
        for sp, closed in ((ScalingPair(1, 0, d), H_10(phi, model)),
                           (ScalingPair(0, 1, d), H_01(phi, model, d)),
                           (ScalingPair(d, -2, d), H_virial(phi, model, d))):
            val = H(phi, sp, model)
            assert abs(val - closed) <= 1e-10 * max(abs(closed), 1e-300)
        for sp in sample_pairs(d, 10):
            assert H(phi, sp, model) >= -1e-12 * (grad_norm_sq(phi) + l2_norm_sq(phi))
    assert H(RadialField(g, np.zeros(g.n)), ScalingPair(1, 0, d), model) == 0


def test_H_rejects_degenerate_pair(octic):
    g = RadialGrid(3, 10.0, 64)
    with pytest.raises(InadmissiblePair):
        H(RadialField(g, np.zeros(g.n)), ScalingPair(-1.5, 1.0, 3), octic)


@pytest.mark.parametrize("d,model", [(1, PowerSum(((1.0, 8.0),))), (3, PowerSum(((0.25, 4.0),))),
                                     (2, Exponential2D(1.0, 5.0, 1.0, 0.0))],
                         ids=["d1", "d3", "exp"])
def test_mountain_pass_inequalities(d, model, rng):
    g = RadialGrid(d, 30.0, 8192)
    for _ in range(8):
        phi = smooth_field(g, rng)
        eps = growth_eps(model, d, phi)
        for sp in sample_pairs(d, 10):
            mono, conv, scale = mountain_pass_margins(phi, sp, model, eps)
            assert mono >= -1e-11 * scale
            assert conv >= -1e-8 * scale


def test_landscape_at_ground_state(gs1, octic):
    lam = np.linspace(-0.3, 0.3, 25)
    for sp in (ScalingPair(1, 0, 1), ScalingPair(1, 2, 1), ScalingPair(1, -2, 1)):
        ls = landscape(gs1.Q, sp, lam, octic)
        i0 = 12
        assert abs(ls.K[i0]) <= 1e-6 * ls.KQ[i0]
        assert np.argmax(ls.J) == i0
        assert ls.kq_nondecreasing
        assert ls.j_increases_where_k_positive


def test_landscape_sign_change_and_small_data(gs1, octic):
    sp = ScalingPair(1, 0, 1)
    ls = landscape(gs1.Q * 1.3, sp, np.linspace(-1.0, 0.0, 41), octic)
    br = ls.sign_changes()
    assert len(br) == 1 and br[0][1] < 0
    small = landscape(gs1.Q * 0.05, sp, np.linspace(-2.0, 1.0, 31), octic)
    assert np.all(small.K > 0)


def test_nehari_project_examples(gs1, octic):
    sp = ScalingPair(1, 0, 1)
    pr = nehari_project(gs1.Q * 1.2, sp, octic)
    assert pr.parameter < 0 and abs(pr.K) <= 1e-8 * pr.KQ
    pr0 = nehari_project(gs1.Q, sp, octic)
    assert pr0.parameter == 0
    with pytest.raises(NoRoot):
        nehari_project(gs1.Q * 1e-3, sp, octic)


def test_nehari_amplitude_ray():
    model = PowerSum(((1.0, 5.0),))
    g = RadialGrid(2, 20.0, 4096)
    phi = RadialField.from_function(g, lambda r: 3 * np.exp(-r * r))
    sp = ScalingPair(0, 1, 2)
    pr = nehari_project(phi, sp, model)
    assert pr.ray == "amplitude" and 0 < pr.parameter < 1
    assert abs(pr.K) <= 1e-8 * pr.KQ


def test_classify_examples(gs1, octic):
    sp = ScalingPair(1, 0, 1)
    v = classify(StatePair.at_rest(gs1.Q * 0.9), sp, octic, gs1.m)
    assert v.label == KPLUS and v.E < gs1.m and v.K > 0
    assert v.checks["free_energy_equivalence"]
    assert classify(StatePair.at_rest(gs1.Q * 1.1), sp, octic, gs1.m).label == KMINUS
    assert classify(StatePair.at_rest(gs1.Q), sp, octic, gs1.m).label == ABOVE


def test_labels_agree_across_pairs(gs1, octic, rng):
    from nlkg.harness import random_bumps_below
    data = random_bumps_below(gs1.Q.grid, octic, gs1.m, 10, rng, amp=0.7)
    for dm in data:
        labels = {classify(dm.state, sp, octic, gs1.m).label for sp in sample_pairs(1, 20)}
        assert len(labels) == 1


def test_exponential_subcritical_bound():
    from nlkg.ground_state import compute_m
    model = Exponential2D(1.0, 5.0, 1.0, 0.0)
    res = compute_m(model, 2, r_max=20.0, n=8192)
    Q = res.witness.Q
    for c in (0.3, 0.6, 0.9):
        v = classify(StatePair.at_rest(Q * c), ScalingPair(0, 1, 2), model, res.m)
        assert v.label == KPLUS and v.checks["subcritical_bound"]


def test_diagnostics_examples(octic):
    box = BoxGrid(1, 40.0, 512)
    u0 = BoxField(box, np.exp(-box.radius**2))
    s = StatePair(u0, BoxField(box, np.zeros(box.shape)))
    dg = diagnostics(s, octic, 5.0)
    assert abs(dg.P[0]) < 1e-14
    small = diagnostics(s, octic, 1e-9)
    assert small.E_R > 0
    with pytest.raises(CutoffExceedsBox):
        diagnostics(s, octic, 25.0)
    assert diagnostic_columns(2) == ["t", "P1", "P2", "XR1", "XR2", "VR", "ER"]

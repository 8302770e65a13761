import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlkg.errors import AmplitudeOverflow, ModelOutsideClass, NonFiniteIntegrand
from nlkg.field_core import (BoxField, BoxGrid, CriticalPower, Exponential2D, PowerSum,
                             RadialField, RadialGrid, apply_bracket_op, ball_volume, chi,
                             chi_R, embed_radial, f_family_eval, quad_integrate,
                             radial_gradient, radial_laplacian, split_nonlinearity,
                             verify_growth_conditions)


def test_radial_grid_nodes_and_weights():
    g = RadialGrid(3, 10.0, 256)
    assert np.all(np.diff(g.nodes) > 0) and g.nodes[0] > 0
    assert np.all(g.weights > 0)
    assert abs(g.weights.sum() / ball_volume(3, 10.0) - 1) < 5e-3
    g1 = RadialGrid(1, 5.0, 256)
    assert np.allclose(g1.weights, 2 * g1.h)


def test_quad_integrate_examples():
    g = RadialGrid(3, 10.0, 4096)
    phi = RadialField(g, np.ones(g.n))
    assert quad_integrate(phi, lambda u: 0 * u) == 0
    assert abs(quad_integrate(phi, lambda u: u) / (4 / 3 * math.pi * 1000) - 1) < 5e-3
    g = RadialGrid(3, 12.0, 8192)
    phi = RadialField.from_function(g, lambda r: np.exp(-r * r / 2))
    assert abs(quad_integrate(phi, lambda u: u * u) / math.pi**1.5 - 1) < 1e-6


def test_quad_integrate_rejects_nonfinite():
    g = RadialGrid(2, 5.0, 64)
    phi = RadialField(g, np.ones(g.n))
    with pytest.raises(NonFiniteIntegrand):
        quad_integrate(phi, lambda u: np.full_like(u, np.nan))


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_linear_moments_exact(d):
    # r^{d-1} times a degree-1 polynomial in r is integrated exactly by the midpoint rule
    # up to the O(h^2) term of the r^d part
    g = RadialGrid(d, 2.0, 2000)
    from nlkg.field_core import sphere_area
    w = 1.0 if d == 1 else sphere_area(d)
    vals = 1.0 + 0.5 * g.nodes
    exact = (2 if d == 1 else w) * (2.0**d / d + 0.5 * 2.0 ** (d + 1) / (d + 1))
    assert abs(g.integrate(vals) / exact - 1) < 1e-6


def test_tail_flag():
    g = RadialGrid(1, 5.0, 200)
    assert not RadialField.from_function(g, lambda r: np.exp(-r * r)).tail_flag()
    assert RadialField(g, np.ones(g.n)).tail_flag()


def test_radial_derivatives_on_gaussian():
    g = RadialGrid(3, 12.0, 4096)
    phi = RadialField.from_function(g, lambda r: np.exp(-r * r / 2))
    r = g.nodes
    assert np.max(np.abs(radial_gradient(phi) + r * np.exp(-r * r / 2))) < 1e-8
    lap = (r * r - 3) * np.exp(-r * r / 2)
    assert np.max(np.abs(radial_laplacian(phi) - lap)) < 1e-6


def test_f_family_examples():
    assert f_family_eval(PowerSum(((1.0, 4.0),)), 0.0) == (0.0, 0.0, 0.0, 0.0)
    f, fp, fpp, Df = f_family_eval(CriticalPower(3), 2.0)
    assert math.isclose(f, 32 / 3) and math.isclose(fp, 32) and math.isclose(fpp, 80)
    assert math.isclose(Df, 64)
    m = Exponential2D(1.0, 5.0, 1.0, 0.0)
    f, fp, fpp, Df = f_family_eval(m, 1.0)
    assert math.isclose(f, math.e)
    assert math.isclose(Df, 7 * math.e)
    h = 1e-6
    fd = (f_family_eval(m, 1 + h)[0] - f_family_eval(m, 1 - h)[0]) / (2 * h)
    assert abs(fd / fp - 1) < 1e-6


def test_exponential_cap():
    m = Exponential2D(1.0, 5.0, 1.0, 0.0)
    with pytest.raises(AmplitudeOverflow):
        m.evaluate(np.array([m.cap * 1.01]))
    with pytest.raises(ValueError):
        Exponential2D(1.0, 5.0, 0.0, -1.0)


MODELS = [PowerSum(((1.0, 8.0),)), PowerSum(((0.25, 4.0),)), PowerSum(((1.0, 4.5), (0.5, 6.0))),
          CriticalPower(3), CriticalPower(5), Exponential2D(1.0, 5.0, 1.0, 0.0),
          Exponential2D(1.0, 6.0, 0.5, -1.0)]


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.describe())
def test_f_family_consistency(model):
    u = np.concatenate([-np.geomspace(1e-3, 3.0, 40), np.geomspace(1e-3, 3.0, 40)])
    f, fp, fpp, Df = f_family_eval(model, u)
    h = 1e-6 * (1 + np.abs(u))
    fplus, fpplus, _, _ = f_family_eval(model, u + h)
    fminus, fpminus, _, _ = f_family_eval(model, u - h)
    assert np.all(np.abs((fplus - fminus) / (2 * h) - fp) <= 1e-5 * np.abs(fp) + 1e-12)
    assert np.all(np.abs((fpplus - fpminus) / (2 * h) - fpp) <= 1e-5 * np.abs(fpp) + 1e-12)
    assert np.array_equal(Df, u * fp)
    assert f_family_eval(model, 0.0)[:3] == (0.0, 0.0, 0.0)


def test_growth_conditions_examples():
    u = np.linspace(0, 10, 501)
    for q in (7.0, 8.0):
        rep = verify_growth_conditions(PowerSum(((1.0, q),)), 1, u)
        assert rep.ok and abs(rep.eps - (q - 6.0)) < 1e-6
    with pytest.raises(ModelOutsideClass):
        verify_growth_conditions(PowerSum(((1.0, 6.0),)), 1, u)
    rep = verify_growth_conditions(Exponential2D(1.0, 5.0, 1.0, 0.0), 2, u)
    assert rep.ok and rep.eps >= 1.0


@pytest.mark.parametrize("model,d", [(MODELS[0], 1), (MODELS[2], 2), (MODELS[5], 2), (MODELS[3], 3)],
                         ids=["octic", "powersum", "exp", "crit3"])
def test_growth_chain(model, d):
    u = np.concatenate([np.geomspace(1e-3, 4.0, 200)])
    rep = verify_growth_conditions(model, d, u)
    a = 2 + 4 / d + rep.eps
    f, fp, fpp, Df = f_family_eval(model, u)
    D2f = Df + u * u * fpp
    tol = 1e-10 * (np.abs(D2f) + 1)
    assert np.all(D2f >= a * Df - tol)
    assert np.all(a * Df >= a * a * f - tol * a)
    assert np.all(f >= 0)


def test_chi_cutoff():
    s = np.linspace(0, 3, 301)
    c = chi(s)
    assert np.all(c[s <= 1] == 1) and np.all(c[s >= 2] == 0)
    assert np.all(np.diff(c) <= 1e-15)
    assert np.allclose(chi_R(np.array([0.5, 5.0]), 2.0), [1.0, 0.0])


def test_split_nonlinearity_sums():
    m = PowerSum(((1.0, 4.0),))
    u = np.linspace(-3, 3, 61)
    fs, fl = split_nonlinearity(m, u)
    assert np.allclose(fs + fl, m.evaluate(u)[0])


def test_bracket_examples():
    box = BoxGrid(2, 2 * math.pi, 32)
    const = BoxField(box, np.full(box.shape, 3.0))
    assert np.allclose(apply_bracket_op(const, 1).values, 3.0)
    x, y = box.coords
    mode = BoxField(box, np.cos(2 * x + 3 * y))
    out = apply_bracket_op(mode, 1)
    assert np.allclose(out.values, math.sqrt(14) * mode.values, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_bracket_roundtrip_and_symmetry(seed, d):
    r = np.random.default_rng(seed)
    box = BoxGrid(d, 10.0, {1: 64, 2: 16, 3: 8}[d])
    u = BoxField(box, r.standard_normal(box.shape))
    v = BoxField(box, r.standard_normal(box.shape))
    back = apply_bracket_op(apply_bracket_op(u, 1), -1)
    assert np.max(np.abs(back.values - u.values)) <= 1e-12 * np.max(np.abs(u.values))
    lhs = np.sum(u.values * apply_bracket_op(v, 1).values)
    rhs = np.sum(apply_bracket_op(u, 1).values * v.values)
    assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + np.sum(np.abs(u.values * v.values)))


def test_box_grid_rules():
    with pytest.raises(ValueError):
        BoxGrid(1, 10.0, 100)
    with pytest.raises(ValueError):
        BoxGrid(4, 10.0, 8)


def test_embed_radial_matches_profile():
    g = RadialGrid(2, 20.0, 4000)
    phi = RadialField.from_function(g, lambda r: np.exp(-r * r))
    box = BoxGrid(2, 16.0, 64)
    out = embed_radial(phi, box)
    assert np.max(np.abs(out.values - np.exp(-box.radius**2))) < 1e-8

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocalfb.errors import FitError
from nonlocalfb.grid import FracOrder, GridField, GridSpec
from nonlocalfb.linheat import (KernelProfile, fit_poisson_kernel, heat_kernel, kernel_profile,
                                kernel_values, solve_linear_fheat, tail_exponent)

G = GridSpec(8.0, 4096)


def test_s1_is_gaussian():
    k = heat_kernel(FracOrder(1.0), 1.0, G, pad=4)
    x = G.x
    exact = np.exp(-x * x / 4) / np.sqrt(4 * np.pi)
    assert np.max(np.abs(k.values - exact)) < 1e-10


@pytest.mark.parametrize("s", [0.2, 0.5, 0.9])
def test_unit_mass(s):
    assert heat_kernel(FracOrder(s), 0.7, G).mass == pytest.approx(1.0, abs=1e-8)


def test_time_must_be_positive_and_resolved():
    with pytest.raises(ValueError):
        heat_kernel(FracOrder(0.5), 0.0, G)
    with pytest.raises(ValueError):
        heat_kernel(FracOrder(0.5), 0.1 * G.spacing, G)


def test_poisson_fit():
    k = heat_kernel(FracOrder(0.5), 1.0, G, pad=1024)
    sel = np.abs(G.x) <= 4
    C, a, resid = fit_poisson_kernel(G.x[sel], k.values[sel])
    assert resid < 1e-6
    assert C == pytest.approx(1 / np.pi, rel=1e-5)
    assert a == pytest.approx(1.0, rel=1e-5)


def test_self_similar_collapse():
    # K(x, t) = t^(-1/2s) F(x t^(-1/2s)): compare t = 1 and t = 2^(2s) via x -> 2x
    s = 0.75
    o = FracOrder(s)
    g1 = GridSpec(16.0, 4096)
    g2 = GridSpec(32.0, 4096)
    k1 = heat_kernel(o, 1.0, g1, pad=64).values
    k2 = heat_kernel(o, 2 ** (2 * s), g2, pad=64).values
    assert np.max(np.abs(2 * k2 - k1)) < 1e-6


def test_kernel_values_match_poisson():
    r = np.array([0.3, 1.0, 5.0])
    assert np.allclose(kernel_values(FracOrder(0.5), 2.0, r), 2 / np.pi / (4 + r * r), rtol=1e-10)


def test_solver_identity_semigroup_and_mass():
    x = G.x
    u0 = GridField(G, np.exp(-x * x) * (1 + 0.3 * np.sin(2 * x)))
    o = FracOrder(0.4)
    assert solve_linear_fheat(u0, o, 0.0) is u0
    a = solve_linear_fheat(solve_linear_fheat(u0, o, 0.3), o, 0.5).values
    b = solve_linear_fheat(u0, o, 0.8).values
    assert np.max(np.abs(a - b)) < 1e-12
    assert solve_linear_fheat(u0, o, 0.8).mass == pytest.approx(u0.mass, rel=1e-12)
    with pytest.raises(ValueError):
        solve_linear_fheat(u0, o, -1.0)


def test_infinite_propagation():
    x = G.x
    u0 = GridField(G, np.clip(1 - x * x, 0, None))
    out = solve_linear_fheat(u0, FracOrder(0.5), 0.01).values
    assert out.min() > 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.1, 1.0), st.floats(0.01, 2.0))
def test_contraction_and_order(seed, s, t):
    g = GridSpec(4.0, 256)
    rng = np.random.default_rng(seed)
    bump = np.exp(-g.x ** 2)
    u = GridField(g, bump * rng.uniform(0, 1, 256))
    w = GridField(g, u.values + bump * rng.uniform(0, 1, 256))
    o = FracOrder(s)
    Su, Sw = solve_linear_fheat(u, o, t).values, solve_linear_fheat(w, o, t).values
    assert np.sum(np.abs(Su - Sw)) <= np.sum(np.abs(u.values - w.values)) * (1 + 1e-10)
    assert np.all(Sw >= Su - 1e-10)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_tail_exponent(s):
    prof = kernel_profile(FracOrder(s), G.spacing ** (2 * s), G, method="integral")
    assert prof.is_decreasing
    assert tail_exponent(prof, half_width=G.half_width) == pytest.approx(1 + 2 * s, rel=0.05)


def test_gaussian_tail_rejected():
    prof = kernel_profile(FracOrder(1.0), 1.0, G)
    with pytest.raises(FitError):
        tail_exponent(prof, half_width=G.half_width)


def test_small_time_gaussian_rejected():
    with pytest.raises(FitError):
        tail_exponent(kernel_profile(FracOrder(1.0), G.spacing ** 2, G), half_width=G.half_width)


def test_tail_needs_range():
    prof = KernelProfile(FracOrder(0.5), np.linspace(1, 2, 50), np.linspace(2, 1, 50))
    with pytest.raises(FitError):
        tail_exponent(prof)


def test_non_monotone_tail_rejected():
    r = np.geomspace(0.01, 10, 400)
    v = r ** -2.0 * (1 + 0.5 * np.sin(40 * r))
    with pytest.raises(FitError):
        tail_exponent(KernelProfile(FracOrder(0.5), r, v), half_width=10)


def test_profile_validation():
    with pytest.raises(ValueError):
        KernelProfile(FracOrder(0.5), np.array([1.0, 0.5]), np.array([1.0, 2.0]))

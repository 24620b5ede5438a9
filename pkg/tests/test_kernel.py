from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from quiescent_front.errors import MassDeficit, SymmetryViolation
from quiescent_front.kernel import (Convolver, Grid, convolve, exp_moment, gaussian, half_line_moment, laplace,
                                    load_tabulated, mass, tabulated, tophat)


def test_grid_spacing_and_validation():
    g = Grid(-1.0, 1.0, 5)
    assert g.h == 0.5
    np.testing.assert_allclose(g.x, [-1, -0.5, 0, 0.5, 1])
    with pytest.raises(ValueError):
        Grid(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        Grid(1.0, 0.0, 10)


def test_grid_shift_relabels_origin():
    g = Grid(-2.0, 2.0, 41).shifted(0.5)
    assert g.x_min == -2.5 and g.x_max == 1.5


def test_mass_gaussian_and_tophat():
    assert abs(mass(gaussian(1.0)) - 1.0) <= 1e-10
    assert mass(tophat(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_mass_deficit_when_radius_too_small():
    with pytest.raises(MassDeficit):
        mass(gaussian(1.0, radius=2.0))


def test_asymmetric_table_rejected():
    y = np.linspace(-2, 2, 41)
    v = np.exp(-y ** 2) * (1 + 0.1 * y)
    with pytest.raises(SymmetryViolation):
        tabulated(y, v)


@pytest.mark.parametrize("lam", [0.1, 0.3, 1.0])
def test_gaussian_exp_moment_closed_form(lam):
    assert exp_moment(gaussian(1.0), lam) == pytest.approx(math.exp(lam * lam / 2), rel=1e-10)


def test_exp_moment_at_zero_is_mass():
    assert exp_moment(gaussian(0.7), 0.0) == pytest.approx(1.0, abs=1e-12)


def test_laplace_moment_truncated_closed_form():
    # exact value of the normalized moment over [-25, 25]
    trunc = ((1 - math.exp(-12.5)) + (1 - math.exp(-37.5)) / 3) / (1 - math.exp(-25))
    got = exp_moment(laplace(1.0), 0.5)
    assert got == pytest.approx(trunc, rel=1e-10)
    assert got == pytest.approx(4 / 3, abs=5e-6)


@pytest.mark.parametrize("beta", [0.1, 0.3, 1.0, 2.0])
def test_half_line_moment_closed_form(beta):
    k = gaussian(1.0)
    R = k.radius
    # support truncated at R and renormalized
    want = math.exp(beta * beta / 2) * (norm.cdf(R - beta) - norm.cdf(-beta)) / (norm.cdf(R) - norm.cdf(-R))
    assert half_line_moment(k, beta) == pytest.approx(want, rel=1e-10)


def test_half_line_moment_half_at_zero():
    for k in (gaussian(1.0), laplace(0.5), tophat(2.0)):
        assert half_line_moment(k, 0.0) == pytest.approx(0.5, abs=1e-10)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
@settings(max_examples=30, deadline=None)
def test_moments_monotone(a, b):
    k = gaussian(1.0)
    lo, hi = sorted((a, b))
    assert exp_moment(k, lo) <= exp_moment(k, hi) + 1e-12
    if hi - lo > 1e-6:
        assert half_line_moment(k, lo) < half_line_moment(k, hi)


def test_weights_sum_to_one_and_symmetric():
    y, w = gaussian(1.0).weights(0.05)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(w, w[::-1])
    np.testing.assert_allclose(y, -y[::-1])


def test_radius_must_align_with_spacing():
    with pytest.raises(ValueError):
        gaussian(1.0).weights(0.3)


@pytest.mark.parametrize("method", ["direct", "fft"])
def test_constant_field_reproduced_exactly(method):
    g = Grid(0.0, 51.15, 1024)
    out = Convolver(gaussian(1.0), g, method)(np.full(g.n, 0.91629), 0.91629, 0.91629)
    assert np.all(out == 0.91629)


def test_step_midpoint_is_mean():
    g = Grid(-20.0, 20.0, 801)
    u = np.where(g.x < 0, 0.0, 1.0)
    u[g.locate(0.0)] = 0.5
    out = convolve(gaussian(1.0), u, g, 0.0, 1.0)
    assert out[g.locate(0.0)] == pytest.approx(0.5, abs=1e-14)


def _direct_oracle(kernel, u, grid, left, right):
    # plain double loop with the raw trapezoid weights, renormalized
    y, w = kernel.weights(grid.h)
    m = (y.size - 1) // 2
    ext = np.concatenate([np.full(m, left), u, np.full(m, right)])
    out = np.zeros_like(u)
    for i in range(u.size):
        s = 0.0
        for k in range(y.size):
            s += w[k] * ext[i + k]
        out[i] = s
    return out


def test_fast_path_matches_double_loop():
    rng = np.random.default_rng(1)
    g = Grid(0.0, 511 * 0.1, 512)
    u = rng.uniform(0, 1, g.n)
    k = gaussian(1.0)
    want = _direct_oracle(k, u, g, 0.2, 0.7)
    for method in ("direct", "fft"):
        np.testing.assert_allclose(convolve(k, u, g, 0.2, 0.7, method=method), want, atol=1e-12, rtol=0)


def test_direct_path_bit_identical_across_threads():
    rng = np.random.default_rng(2)
    g = Grid(0.0, 4095 * 0.05, 4096)
    u = rng.uniform(0, 1, g.n)
    ref = Convolver(gaussian(1.0), g, "direct", 1)(u, 0.0, 1.0)
    for t in (2, 3, 8):
        assert np.array_equal(Convolver(gaussian(1.0), g, "direct", t)(u, 0.0, 1.0), ref)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_order_preservation(seed):
    rng = np.random.default_rng(seed)
    g = Grid(0.0, 255 * 0.1, 256)
    u = rng.uniform(0, 1, g.n)
    v = u + rng.uniform(0, 0.5, g.n)
    k = gaussian(1.0)
    for method in ("direct", "fft"):
        cu = convolve(k, u, g, 0.0, 1.0, method=method)
        cv = convolve(k, v, g, 0.0, 1.0, method=method)
        assert np.all(cu <= cv + 1e-14)


def test_shape_mismatch_rejected():
    g = Grid(0.0, 10.0, 101)
    with pytest.raises(ValueError):
        convolve(gaussian(1.0), np.zeros(100), g, 0.0, 0.0)


def test_load_tabulated(tmp_path):
    y = np.linspace(-4, 4, 81)
    v = norm.pdf(y)
    path = tmp_path / "k.txt"
    np.savetxt(path, np.column_stack([y, v]), header="abscissa value")
    k = load_tabulated(path, tol=1e-3)
    assert k.radius == pytest.approx(4.0)
    assert mass(k) == pytest.approx(1.0, abs=1e-3)

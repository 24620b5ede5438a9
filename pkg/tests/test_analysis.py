from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quiescent_front.analysis import (PerturbationSeries, fit_decay_rate, norm_row, perturbation, q_sign_check,
                                      verify_theorem, weighted_norm)
from quiescent_front.certificate import WeightFunction
from quiescent_front.errors import NoiseFloor, WindowTooSparse
from quiescent_front.kernel import Grid
from quiescent_front.model import nicholson


def _series(rate, T=40.0, n=161, amp=1.0, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    s = PerturbationSeries()
    for t in np.linspace(0.0, T, n):
        f = amp * math.exp(-rate * t)
        row = {}
        for k in ("L2w_v1", "H1w_v1", "sup_v1", "L2w_v2", "H1w_v2", "sup_v2"):
            row[k] = f * (1.0 + noise * rng.standard_normal())
        s.append(float(t), row)
    return s


def test_weighted_norm_unit_weight_constant():
    g = Grid(0.0, 9.9, 100)
    w = WeightFunction(1.0, -1e9)  # weight is 1 everywhere on the grid
    assert weighted_norm(np.full(g.n, 2.0), w, g) == pytest.approx(2.0 * math.sqrt(100 * g.h))
    assert weighted_norm(np.full(g.n, 2.0), w, g, 1) == pytest.approx(2.0 * math.sqrt(100 * g.h))
    with pytest.raises(ValueError):
        weighted_norm(np.zeros(g.n), w, g, 2)


def test_weighted_norm_gaussian_oracle():
    # int e^{-x^2} e^{-beta min(x,0)} dx over a wide grid
    g = Grid.from_spacing(-30.0, 30.0, 0.01)
    beta = 0.5
    w = WeightFunction(beta, 0.0)
    f = np.exp(-g.x ** 2 / 2)
    from scipy.special import erfc
    want = 0.5 * math.sqrt(math.pi) + 0.5 * math.sqrt(math.pi) * math.exp(beta ** 2 / 4) * erfc(-beta / 2)
    # the weight kink at 0 limits the rule to second order
    assert weighted_norm(f, w, g) ** 2 == pytest.approx(want, rel=1e-5)


@given(st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_norm_homogeneity(a):
    g = Grid.from_spacing(-5.0, 5.0, 0.1)
    w = WeightFunction(0.3, 1.0)
    f = np.sin(g.x)
    assert weighted_norm(a * f, w, g, 1) == pytest.approx(a * weighted_norm(f, w, g, 1), rel=1e-12)


def test_perturbation_frames(ref1_profile):
    g = Grid.from_spacing(-10.0, 10.0, 0.5)
    u1, u2 = ref1_profile.at(g.x + 8.0, 1), ref1_profile.at(g.x + 8.0, 2)
    v1, v2 = perturbation(u1, u2, g, ref1_profile, 1.0, "lab")
    assert np.max(np.abs(v1)) == 0 and np.max(np.abs(v2)) == 0
    v1, _ = perturbation(ref1_profile.at(g.x), ref1_profile.at(g.x, 2), g, ref1_profile, 5.0, "moving")
    assert not np.any(v1)


@given(st.floats(0, 0.9163), st.floats(0, 0.9163), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
@settings(max_examples=300, deadline=None)
def test_Q_nonpositive_inside_box(phi, lag, v, vlag):
    # concavity of the birth term on [0, K] keeps the remainder below the tangent
    K = math.log(2.5)
    v = min(max(v, -phi), K - phi)
    vlag = min(max(vlag, -lag), K - lag)
    rep = q_sign_check(nicholson(2.5, 1.0, 1.0), np.array([phi]), np.array([lag]), np.array([v]), np.array([vlag]))
    assert rep.max_Q <= 1e-12
    assert rep.identity_error <= 1e-12


def test_Q_positive_outside_concavity():
    r = nicholson(2.5, 1.0, 1.0)
    rep = q_sign_check(r, np.array([2.5]), np.array([2.5]), np.array([0.0]), np.array([1.0]), x=np.array([7.0]))
    assert rep.max_Q > 0 and not rep.passed and rep.location == 7.0


def test_series_validation_and_csv(tmp_path):
    s = _series(0.1, n=20)
    with pytest.raises(ValueError):
        s.append(0.0, {"L2w_v1": 1.0})
    with pytest.raises(ValueError):
        s.append(100.0, {"L2w_v1": -1.0})
    path = s.to_csv(tmp_path / "s.csv")
    back = PerturbationSeries.from_csv(path)
    assert back.times == s.times and back.rows == s.rows


def test_norm_row_keys():
    g = Grid.from_spacing(0.0, 1.0, 0.1)
    row = norm_row(np.ones(g.n), np.zeros(g.n), WeightFunction(1.0, 0.0), g)
    assert row["sup_v1"] == 1.0 and row["L2w_v2"] == 0.0


def test_fit_exact_exponential():
    fit = fit_decay_rate(_series(0.07, amp=3.0), (0.0, 40.0))
    assert fit.mu == pytest.approx(0.07, abs=1e-12)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-10)
    assert fit.r2 == pytest.approx(1.0)


def test_fit_errors():
    with pytest.raises(WindowTooSparse):
        fit_decay_rate(_series(0.1, n=20), (0.0, 5.0))
    with pytest.raises(NoiseFloor):
        fit_decay_rate(_series(2.0, T=40.0), (20.0, 40.0))


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.02, 0.5))
@settings(max_examples=50, deadline=None)
def test_fit_with_one_percent_noise(seed, rate):
    fit = fit_decay_rate(_series(rate, noise=0.01, seed=seed), (20.0, 40.0))
    assert abs(fit.mu - rate) <= 0.01


class _Cert:
    valid = True
    mu = 0.05
    mu_max = 0.06
    failures: list = []


def test_verify_pass_and_fail():
    assert verify_theorem(_series(0.2), _Cert()).passed
    slow = verify_theorem(_series(0.02), _Cert())
    assert slow.status == "FAIL"
    assert {"b:v1", "c:v1"} <= set(slow.failed)


def test_verify_amplification_only_is_partial():
    s = _series(0.2)
    s.rows[1] = {k: 50.0 for k in s.rows[1]}
    v = verify_theorem(s, _Cert())
    assert v.failed == ["a:v1", "a:v2"]
    assert "partial" in v.diagnostics["warning"]


def test_verify_skipped_for_invalid_certificate():
    class Bad(_Cert):
        valid = False
        failures = ["C1 <= 0"]
    assert verify_theorem(_series(0.2), Bad()).status == "SKIPPED"


def test_verify_rejects_rate_above_max():
    with pytest.raises(ValueError):
        verify_theorem(_series(0.2), _Cert(), mu=0.07)


def test_verify_fast_decay_uses_samples_above_floor():
    v = verify_theorem(_series(1.0, T=40.0, n=161), _Cert())
    assert v.passed
    assert "b_note" in v.diagnostics["v1"]

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quiescent_front.errors import NoPositiveEquilibrium, NoRoot
from quiescent_front.model import (CallableReaction, ModelParams, carrying_capacity, check_A1, check_A2,
                                   check_derivatives,
                                   check_quiescence_gap, nicholson)

K_REF = math.log(2.5)


def test_nicholson_closed_form_equilibrium():
    r = nicholson(2.5, 1.0, 1.0)
    assert r.closed_form_K == pytest.approx(K_REF, rel=1e-15)
    assert carrying_capacity(r) == pytest.approx(K_REF, rel=1e-12)


def test_maturation_loss_lowers_effective_birth():
    r = nicholson(2.5, 1.0, 1.0, mu0=0.1, tau=2.0)
    assert r.closed_form_K == pytest.approx(math.log(2.5 * math.exp(-0.2)), rel=1e-14)


def test_no_positive_equilibrium():
    with pytest.raises(NoPositiveEquilibrium):
        nicholson(0.9, 1.0, 1.0)


def test_carrying_capacity_no_root():
    r = CallableReaction(lambda u, v: v - 0.5 * u, lambda u, v: -0.5 + 0 * u, lambda u, v: 1 + 0 * u,
                         *(lambda u, v: 0 * u,) * 3)
    with pytest.raises(NoRoot):
        carrying_capacity(r, u_max=5.0)


def test_derivatives_against_finite_differences():
    r = nicholson(2.5, 1.0, 1.3)
    u, v, e = 0.4, 0.7, 1e-6
    assert float(r.d1(u, v)) == pytest.approx((r.f(u + e, v) - r.f(u - e, v)) / (2 * e), rel=1e-8)
    assert float(r.d2(u, v)) == pytest.approx((r.f(u, v + e) - r.f(u, v - e)) / (2 * e), rel=1e-8)
    e = 1e-4
    d22 = (r.f(u, v + e) - 2 * r.f(u, v) + r.f(u, v - e)) / e ** 2
    assert float(r.d22(u, v)) == pytest.approx(d22, rel=1e-6)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
@settings(max_examples=200, deadline=None)
def test_increment_matches_difference(u, v, du, dv):
    r = nicholson(2.5, 1.0, 1.0)
    naive = r.f(u + du, v + dv) - r.f(u, v)
    assert float(r.increment(u, v, du, dv)) == pytest.approx(float(naive), abs=1e-14)


def test_increment_keeps_relative_precision_for_tiny_steps():
    r = nicholson(2.5, 1.0, 1.0)
    got = float(r.increment(0.0, 0.0, 0.0, 1e-30))
    assert got == pytest.approx(2.5e-30, rel=1e-14)


def test_ref1_params_and_bounds(ref1_params):
    p = ref1_params
    assert p.K == pytest.approx(K_REF, rel=1e-12)
    assert p.u_plus[1] == pytest.approx(0.25 * K_REF, rel=1e-12)
    assert p.derivs_at_zero == (-1.0, 2.5)
    a, b = p.derivs_at_K
    assert a == -1.0 and b == pytest.approx(1 - K_REF, rel=1e-12)
    assert p.derivative_bounds == (1.0, 2.5)
    assert p.rate_bound() == pytest.approx(0.25 + 0.05 + 0.2 + 1.0 + 2.5)


def test_params_validate():
    r = nicholson(2.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(0.0, 0.05, 0.2, 0.5, r)
    with pytest.raises(ValueError):
        ModelParams(0.25, 0.05, 0.2, -1.0, r)


def test_assumptions_hold_on_ref1(ref1_params):
    p = ref1_params
    assert check_A1(p.reaction, p.K).passed
    assert check_A2(p.reaction, p.K).passed


def test_A1_fails_with_location_when_birth_peak_inside_box():
    r = nicholson(4.0, 1.0, 1.0)
    rep = check_A1(r, r.closed_form_K)
    assert not rep.passed
    bad = rep["d2f>=0"]
    assert not bad.passed
    # d2f changes sign at v = 1/a = 1 < K = ln 4
    assert bad.location[1] > 1.0
    assert bad.worst < 0


def test_resolution_flag_set_when_sampling_matters():
    # d2f becomes negative only beyond v = 1 = K(1 - 1e-3) on a tiny sliver
    r = nicholson(math.e ** (1 / (1 - 4e-4)), 1.0, 1.0)
    rep = check_A1(r, r.closed_form_K, samples=3)
    assert rep.resolution_sensitive or not rep.passed


def test_quiescence_gap_margin_ref1(ref1_params):
    g = check_quiescence_gap(ref1_params)
    # margin = gamma1 - 3 gamma2 - (-1 + 1 - ln 2.5)
    assert g.margin == pytest.approx(0.05 - 0.6 + K_REF, rel=1e-13)
    assert g.passed


def test_quiescence_gap_example():
    r = nicholson(2.0, 1.0, 1.0)
    p = ModelParams(1.0, 0.2, 0.25, 1.0, r)
    g = check_quiescence_gap(p)
    # 0.2 - 0.75 + ln 2 (oracle value)
    assert g.margin == pytest.approx(0.14314718055994531, rel=1e-13)


def test_gap_fails_when_switching_too_fast():
    r = nicholson(2.5, 1.0, 1.0)
    assert not check_quiescence_gap(ModelParams(0.25, 0.05, 0.5, 0.5, r)).passed
    assert not check_quiescence_gap(ModelParams(0.25, 0.3, 0.2, 0.5, r)).gamma_order_holds


def test_derivative_consistency_nicholson(ref1_params):
    chk = check_derivatives(ref1_params.reaction, ref1_params.K)
    assert chk.passed and chk.worst <= 1e-8


def test_derivative_consistency_catches_wrong_partial():
    r = nicholson(2.5, 1.0, 1.0)
    wrong = CallableReaction(r.f, r.d1, lambda u, v: 1.01 * r.d2(u, v), r.d11, r.d12, r.d22)
    chk = check_derivatives(wrong, r.closed_form_K)
    assert not chk.passed and chk.location is not None

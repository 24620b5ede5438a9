from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from quiescent_front.errors import MonotonicityLoss, NoConvergence
from quiescent_front.kernel import Grid
from quiescent_front.wavefront import (WaveProfile, _sweep, characteristic, find_xi0, linear_speed,
                                       profile_residual, seed_profiles, solve_profile, tail_rate)


def _char_oracle(lam, c=8.0):
    # REF1 linearization at zero with the exact Gaussian moment
    D, g1, g2, tau = 0.25, 0.05, 0.2, 0.5
    return c * lam - D * (math.exp(lam * lam / 2) - 1) + 1.0 - 2.5 * math.exp(-lam * c * tau) + g1 - g2 * g1 / (c * lam + g2)


def test_characteristic_matches_closed_form(ref1_params, gauss):
    for lam in (0.01, 0.0890755, 0.5):
        assert characteristic(ref1_params, gauss, 8.0, lam) == pytest.approx(_char_oracle(lam), rel=1e-9, abs=1e-12)


def test_tail_rate_oracle(ref1_params, gauss):
    want = brentq(_char_oracle, 1e-6, 0.5, xtol=1e-15)
    assert want == pytest.approx(0.0890755, abs=1e-7)
    assert tail_rate(ref1_params, gauss, 8.0) == pytest.approx(want, rel=1e-10)


def test_no_tail_below_linear_speed(ref1_params, gauss):
    c_lin = linear_speed(ref1_params, gauss)
    assert c_lin == pytest.approx(0.66465, abs=1e-4)
    assert tail_rate(ref1_params, gauss, 0.9 * c_lin) is None
    assert tail_rate(ref1_params, gauss, 1.1 * c_lin) is not None


def test_sweep_exact_for_exponential_forcing():
    # c y' = -r y + g with g = e^{s x}: y = e^{s x} / (c s + r) when started on it
    h, c, r, s = 0.1, 2.0, 1.5, 0.3
    x = np.arange(200) * h
    g = np.exp(s * x)
    y = _sweep(g, r, h, c, y0=1.0 / (c * s + r))
    np.testing.assert_allclose(y, g / (c * s + r), rtol=2e-4)
    # forcing linear in x is integrated exactly
    g = 1.0 + 0.5 * x
    exact = lambda t: (1.0 + 0.5 * t) / r - 0.5 * c / r ** 2  # noqa: E731
    y = _sweep(g, r, h, c, y0=exact(0.0))
    np.testing.assert_allclose(y, exact(x), rtol=1e-12, atol=1e-13)


def test_seed_profiles_ordered(ref1_params):
    g = Grid.from_spacing(-20, 20, 0.5)
    (u1, u2), (l1, l2) = seed_profiles(ref1_params, 8.0, g)
    assert np.all(np.diff(u1) > 0) and np.all(u1 >= l1) and np.all(u2 >= l2)
    with pytest.raises(ValueError):
        seed_profiles(ref1_params, 8.0, g, kappa=0.0)


def test_ref1_profile_quality(ref1_profile, ref1_params):
    p = ref1_profile
    assert p.residual[0] <= 1e-4 and p.residual[1] <= 1e-4
    assert p.monotone_defect() <= 1e-9
    assert all(v <= 1e-6 for v in p.boundary_errors().values())
    assert float(p.at(0.0)) == pytest.approx(0.5 * ref1_params.K, abs=1e-12)
    # second component follows from the first through a linear relaxation
    assert p.phi2_plus == pytest.approx(ref1_params.u_plus[1])


def test_profile_roundtrip(tmp_path, ref1_profile):
    path, sidecar = ref1_profile.save(tmp_path / "p.txt")
    assert sidecar.exists()
    back = WaveProfile.load(path)
    assert np.array_equal(back.phi1, ref1_profile.phi1) and np.array_equal(back.phi2, ref1_profile.phi2)
    assert back.grid == ref1_profile.grid and back.residual == ref1_profile.residual


def test_profile_is_read_only(ref1_profile):
    with pytest.raises(ValueError):
        ref1_profile.phi1[0] = 1.0


def test_residual_halves_with_spacing(ref1_params, gauss):
    coarse = solve_profile(ref1_params, gauss, 8.0, Grid.from_spacing(-200, 800, 0.05))
    fine = solve_profile(ref1_params, gauss, 8.0, Grid.from_spacing(-200, 800, 0.025))
    assert fine.residual[0] / coarse.residual[0] <= 0.6


def test_equilibrium_profile_residual(ref1_params, gauss):
    g = Grid.from_spacing(-50, 50, 0.05)
    p = ref1_params
    prof = WaveProfile(g, np.full(g.n, p.K), np.full(g.n, p.u_plus[1]), 8.0, p.K, p.u_plus[1])
    assert max(profile_residual(p, gauss, prof)) <= 1e-12


def test_no_convergence_reports_last_iterate(ref1_params, gauss):
    with pytest.raises(NoConvergence) as exc:
        solve_profile(ref1_params, gauss, 8.0, Grid.from_spacing(-100, 400, 0.1), max_iter=3)
    assert exc.value.change > 0


def test_history_records_contraction(ref1_params, gauss):
    hist = []
    solve_profile(ref1_params, gauss, 8.0, Grid.from_spacing(-200, 800, 0.1), history=hist)
    assert hist[-1] < 1e-11
    assert hist[-1] < hist[len(hist) // 2] < hist[0]


def test_slow_speed_rejected(ref1_params, gauss):
    with pytest.raises(ValueError):
        solve_profile(ref1_params, gauss, -1.0, Grid.from_spacing(-10, 10, 0.1))


def test_xi0_ref1(ref1_params, ref1_profile):
    xi0 = find_xi0(ref1_params, ref1_profile)
    assert xi0 == pytest.approx(37.95, abs=0.051)
    r = ref1_params.reaction
    right = ref1_profile.x >= xi0
    lag = ref1_profile.delayed(ref1_params.tau)
    a, b = ref1_params.derivs_at_K
    assert np.all(r.d2(ref1_profile.phi1[right], lag[right]) < 0.5 * (b + ref1_params.gamma2))


def test_slower_wave_returns_best_iterate_when_stalled(ref1_params, gauss):
    prof = solve_profile(ref1_params, gauss, 5.0, Grid.from_spacing(-200, 800, 0.05))
    assert prof.stalled and prof.change <= 1e-6
    assert prof.residual[0] <= 1e-4 and prof.monotone_defect() <= 1e-9

"""Traveling-wave profiles by penalized monotone iteration.

With ``xi = x + c t`` the wave solves

    c phi1' = D (J*phi1 - phi1) + f(phi1, phi1(. - c tau)) - g1 phi1 + g2 phi2
    c phi2' = g1 phi1 - g2 phi2

Adding ``rho phi1`` to both sides of the first line and integrating from the
left gives a fixed-point map that is order preserving once ``rho`` dominates
``D + g1 + sup|d1 f|``.  Each sweep integrates exp(-rho (xi - s)/c) against
the piecewise-linear interpolant of the right-hand side exactly, so the
scheme is second order in ``h``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.signal import lfilter

from .errors import MonotonicityLoss, NoConvergence, NotAttained
from .kernel import Convolver, Grid, KernelSpec, exp_moment
from .model import ModelParams

log = logging.getLogger(__name__)

MONO_TOL = 1e-7  # spatial decrease tolerated between sweeps


@dataclass(frozen=True)
class WaveProfile:
    grid: Grid
    phi1: np.ndarray = field(repr=False)
    phi2: np.ndarray = field(repr=False)
    c: float
    K: float
    phi2_plus: float
    residual: tuple[float, float] = (math.nan, math.nan)
    iterations: int = 0
    change: float = 0.0
    stalled: bool = False

    def __post_init__(self):
        for name in ("phi1", "phi2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def at(self, xi, component: int = 1) -> np.ndarray:
        """Linear interpolation with equilibrium clamps outside the grid."""
        vals = self.phi1 if component == 1 else self.phi2
        right = self.K if component == 1 else self.phi2_plus
        return np.interp(xi, self.grid.x, vals, left=0.0, right=right)

    def delayed(self, tau: float) -> np.ndarray:
        """phi1(xi - c tau) on the grid nodes."""
        return self.at(self.grid.x - self.c * tau)

    def boundary_errors(self) -> dict:
        return {
            "phi1_left": float(abs(self.phi1[0])),
            "phi1_right": float(abs(self.phi1[-1] - self.K)),
            "phi2_left": float(abs(self.phi2[0])),
            "phi2_right": float(abs(self.phi2[-1] - self.phi2_plus)),
        }

    def monotone_defect(self) -> float:
        """Largest decrease between neighbouring nodes (0 for a monotone profile)."""
        return float(max(0.0, -np.min(np.diff(self.phi1)), -np.min(np.diff(self.phi2))))

    def metadata(self) -> dict:
        return {
            "c": self.c, "K": self.K, "phi2_plus": self.phi2_plus,
            "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max, "n": self.grid.n},
            "residual": list(self.residual), "iterations": self.iterations, "change": self.change,
            "stalled": self.stalled,
            "boundary_errors": self.boundary_errors(), "monotone_defect": self.monotone_defect(),
        }

    def save(self, path) -> tuple[Path, Path]:
        """Write ``xi phi1 phi2`` columns plus a JSON metadata sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = (f"c = {self.c!r}\nK = {self.K!r}\nphi2_plus = {self.phi2_plus!r}\n"
                  f"residual = {self.residual[0]!r} {self.residual[1]!r}\nxi phi1 phi2")
        np.savetxt(path, np.column_stack([self.x, self.phi1, self.phi2]), header=header, fmt="%.17g")
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.metadata(), indent=2))
        return path, sidecar

    @classmethod
    def load(cls, path) -> "WaveProfile":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        data = np.loadtxt(path, comments="#", ndmin=2)
        g = meta["grid"]
        return cls(Grid(g["x_min"], g["x_max"], g["n"]), data[:, 1], data[:, 2], meta["c"], meta["K"],
                   meta["phi2_plus"], tuple(meta["residual"]), meta["iterations"], meta["change"],
                   meta.get("stalled", False))


def _exp_weights(rate: float, h: float, c: float) -> tuple[float, float, float]:
    """Coefficients of y_j = E y_{j-1} + w0 g_{j-1} + w1 g_j for c y' = -rate y + g."""
    k = rate / c
    x = k * h
    E = math.exp(-x)
    i1 = -math.expm1(-x) / k
    tail = (-math.expm1(-x) - x * E) / (k * k * h)  # int_0^h e^{-k r} r/h dr
    return E, tail / c, (i1 - tail) / c


def _sweep(g: np.ndarray, rate: float, h: float, c: float, y0: float | None = None) -> np.ndarray:
    """Integrate c y' = -rate y + g left to right; ``y0`` fixes y at the first node."""
    E, w0, w1 = _exp_weights(rate, h, c)
    b = np.empty_like(g)
    b[0] = w1 * g[0] if y0 is None else y0
    b[1:] = w0 * g[:-1] + w1 * g[1:]
    return lfilter([1.0], [1.0, -E], b)


def penalty(params: ModelParams) -> float:
    return params.D + params.gamma1 + 1.1 * params.derivative_bounds[0]


def characteristic(params: ModelParams, kernel: KernelSpec, c: float, lam: float, h: float | None = None) -> float:
    """Linearization at (0,0) evaluated on exp(lam xi) tails; roots are the admissible decay rates.

    With ``h`` the kernel moment uses the grid stencil instead of quadrature.
    """
    a0, b0 = params.derivs_at_zero
    moment = _moment(kernel, float(lam), h)
    g1, g2 = params.gamma1, params.gamma2
    return (c * lam - params.D * (moment - 1.0) - a0 - b0 * math.exp(-lam * c * params.tau)
            + g1 - g2 * g1 / (c * lam + g2))


@lru_cache(maxsize=8192)
def _moment(kernel: KernelSpec, lam: float, h: float | None) -> float:
    # cached: speed scans re-evaluate the same abscissae many times
    if h is None:
        return exp_moment(kernel, lam)
    y, w = kernel.weights(h)
    return float(np.sum(w * np.exp(-lam * y)))


def tail_rate(params: ModelParams, kernel: KernelSpec, c: float, h: float | None = None,
              lam_max: float = 20.0, scan: int = 2000) -> float | None:
    """Smallest positive root of the characteristic function, or None below the linear speed."""
    fn = lambda lam: characteristic(params, kernel, c, lam, h)  # noqa: E731
    lams = np.linspace(0.0, lam_max, scan + 1)[1:]
    prev_l, prev_v = 0.0, fn(0.0)
    if prev_v >= 0:
        return None
    for lam in lams:
        v = fn(lam)
        if v > 0:
            return float(brentq(fn, prev_l, lam, xtol=1e-15, rtol=4 * np.finfo(float).eps))
        prev_l, prev_v = lam, v
    return None


def linear_speed(params: ModelParams, kernel: KernelSpec, c_hi: float = 1e3) -> float:
    """Slowest speed at which the characteristic function has a positive root."""
    if tail_rate(params, kernel, c_hi) is None:
        raise NotAttained(f"no decaying tail below c = {c_hi}")
    lo, hi = 0.0, c_hi
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if tail_rate(params, kernel, mid) is None:
            lo = mid
        else:
            hi = mid
    return hi


def seed_profiles(params: ModelParams, c: float, grid: Grid, kappa: float = 0.5):
    """Logistic upper seed and zero lower seed, as (phi1, phi2) pairs."""
    if c <= 0:
        raise ValueError("wave speed must be positive")
    if kappa <= 0:
        raise ValueError("seed steepness kappa must be positive")
    ratio = params.gamma1 / params.gamma2
    up1 = params.K / (1.0 + np.exp(-kappa * grid.x))
    return (up1, ratio * up1), (np.zeros(grid.n), np.zeros(grid.n))


class _WaveMap:
    """One sweep of the penalized fixed-point map.

    Left of the grid the fields follow the linear tail exp(lam (xi - xi_min))
    when ``lam`` is given, otherwise they are clamped to zero.  Right of the
    grid they are clamped to the positive equilibrium.
    """

    def __init__(self, params: ModelParams, kernel: KernelSpec, grid: Grid, c: float,
                 lam: float | None = None, method: str = "fft", threads: int = 1):
        self.p = params
        self.grid = grid
        self.c = c
        self.lam = lam
        self.conv = Convolver(kernel, grid, method, threads)
        self.rho = penalty(params)
        self.shift = c * params.tau
        m = self.conv.m
        self._ghost = np.exp(-lam * grid.h * np.arange(m, 0, -1)) if lam else np.zeros(m)

    def extend_left(self, vals, xi):
        """Values at ``xi`` (array) with the left tail rule and right clamp K."""
        x = self.grid.x
        out = np.interp(xi, x, vals, left=0.0, right=self.p.K)
        if self.lam:
            left = xi < x[0]
            out[left] = vals[0] * np.exp(self.lam * (xi[left] - x[0]))
        return out

    def delayed(self, phi1):
        return self.extend_left(phi1, self.grid.x - self.shift)

    def rhs1(self, phi1, phi2):
        """c phi1' predicted by the first wave equation."""
        p = self.p
        j = self.conv(phi1, phi1[0] * self._ghost, p.K)
        return p.D * (j - phi1) + p.reaction.f(phi1, self.delayed(phi1)) - p.gamma1 * phi1 + p.gamma2 * phi2

    def __call__(self, phi1, phi2):
        p, h, c = self.p, self.grid.h, self.c
        g1 = self.rhs1(phi1, phi2) + self.rho * phi1
        y1 = y2 = None
        if self.lam:
            y1 = g1[0] / (c * self.lam + self.rho)
        new1 = _sweep(g1, self.rho, h, c, y1)
        if self.lam:
            y2 = p.gamma1 * new1[0] / (c * self.lam + p.gamma2)
        new2 = _sweep(p.gamma1 * new1, p.gamma2, h, c, y2)
        return new1, new2

    def pin(self, phi1, phi2):
        """Translate both fields so that phi1 crosses K/2 at xi = 0; returns the shift."""
        half = 0.5 * self.p.K
        x = self.grid.x
        s = _crossing(x, phi1, half)
        xs = x + s
        new1 = self.extend_left(phi1, xs)
        new2 = np.interp(xs, x, phi2, left=0.0, right=self.p.u_plus[1])
        if self.lam:
            left = xs < x[0]
            new2[left] = phi2[0] * np.exp(self.lam * (xs[left] - x[0]))
        return new1, new2, s


def _crossing(x, y, level):
    i = int(np.searchsorted(y, level))
    if i == 0 or i >= y.size:
        raise NotAttained(f"profile never crosses {level:.6g}")
    return float(x[i - 1] + (level - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1]))


def solve_profile(params: ModelParams, kernel: KernelSpec, c: float, grid: Grid, tol: float = 1e-11,
                  max_iter: int = 5000, kappa: float | None = None, pin: bool = True,
                  method: str = "fft", threads: int = 1, history: list | None = None,
                  stall_tol: float = 1e-6, patience: int = 150) -> WaveProfile:
    """Iterate the wave map from the logistic seed until the sup change drops below ``tol``.

    The seed steepness defaults to the tail rate of the linearization so the
    seed already carries the right far-field decay.  With ``pin`` every sweep
    is followed by the translation that puts phi1 = K/2 at xi = 0, which
    removes the neutral translation mode; the returned grid is then centred so
    that phi1(0) = K/2.  ``history`` (a list) receives per-sweep changes.

    At slower speeds the change can plateau above ``tol``.  If no sweep has
    improved on the best change for ``patience`` sweeps and that best change
    is below ``stall_tol``, the best iterate is returned with ``stalled`` set.
    """
    if c <= 0:
        raise ValueError("wave speed must be positive")
    lam = tail_rate(params, kernel, c, grid.h)
    if lam is None:
        log.warning("c = %g is below the linear spreading speed; no exponential tail", c)
    seed_kappa = kappa if kappa is not None else (lam or 0.5)
    wave_map = _WaveMap(params, kernel, grid, c, lam, method, threads)
    (phi1, phi2), _ = seed_profiles(params, c, grid, seed_kappa)
    change = math.inf
    best = (math.inf, 0, phi1, phi2)
    stalled = False
    for it in range(1, max_iter + 1):
        new1, new2 = wave_map(phi1, phi2)
        if pin:
            new1, new2, _ = wave_map.pin(new1, new2)
        defect = float(max(0.0, -np.min(np.diff(new1)), -np.min(np.diff(new2))))
        if defect > MONO_TOL and best[0] > stall_tol:
            raise MonotonicityLoss(f"sweep {it} lost monotonicity by {defect:.3e}; penalization too small?")
        change = max(float(np.max(np.abs(new1 - phi1))), float(np.max(np.abs(new2 - phi2))))
        if defect <= MONO_TOL:
            phi1, phi2 = new1, new2
            if history is not None:
                history.append(change)
            if change < tol:
                break
            if change < best[0]:
                best = (change, it, phi1, phi2)
        if defect > MONO_TOL or (it - best[1] >= patience and best[0] <= stall_tol):
            # round-off amplified ahead of the front stops further progress
            change, it, phi1, phi2 = best
            stalled = True
            log.warning("sweeps stalled at change %.3e; keeping sweep %d", change, it)
            break
    else:
        raise NoConvergence(f"no convergence after {max_iter} sweeps (change {change:.3e})",
                            last_iterate=(phi1, phi2), change=change)
    log.debug("profile converged in %d sweeps", it)
    prof = WaveProfile(grid, phi1, phi2, c, params.K, params.u_plus[1], iterations=it, change=change,
                       stalled=stalled)
    if pin:
        prof = normalize_profile(prof)
    res = profile_residual(params, kernel, prof)
    return replace(prof, residual=res)


def normalize_profile(profile: WaveProfile) -> WaveProfile:
    """Relabel the abscissa so that phi1(0) = K/2 (linear interpolation)."""
    s = _crossing(profile.x, np.asarray(profile.phi1), 0.5 * profile.K)
    return replace(profile, grid=profile.grid.shifted(s))


def profile_residual(params: ModelParams, kernel: KernelSpec, profile: WaveProfile,
                     trim: float = 0.2) -> tuple[float, float]:
    """Sup of |c phi_i' - RHS_i| over the interior after trimming ``trim`` per side."""
    grid = profile.grid
    wave_map = _WaveMap(params, kernel, grid, profile.c, tail_rate(params, kernel, profile.c, grid.h))
    phi1, phi2 = np.asarray(profile.phi1), np.asarray(profile.phi2)
    d1 = np.gradient(phi1, grid.h)
    d2 = np.gradient(phi2, grid.h)
    r1 = profile.c * d1 - wave_map.rhs1(phi1, phi2)
    r2 = profile.c * d2 - (params.gamma1 * phi1 - params.gamma2 * phi2)
    lo = max(1, int(trim * grid.n))
    hi = min(grid.n - 1, grid.n - lo)
    return float(np.max(np.abs(r1[lo:hi]))), float(np.max(np.abs(r2[lo:hi])))


def find_xi0(params: ModelParams, profile: WaveProfile) -> float:
    """Smallest node from which d_i f(phi1, phi1(.-c tau)) < (d_i f(K,K) + g2)/2 holds rightwards."""
    r = params.reaction
    phi1 = np.asarray(profile.phi1)
    lag = profile.delayed(params.tau)
    a1, a2 = params.derivs_at_K
    ok = (r.d1(phi1, lag) < 0.5 * (a1 + params.gamma2)) & (r.d2(phi1, lag) < 0.5 * (a2 + params.gamma2))
    ok = np.broadcast_to(ok, phi1.shape)
    if not ok[-1]:
        raise NotAttained("condition fails at the right end of the domain; enlarge the domain")
    bad = np.flatnonzero(~ok)
    i = 0 if bad.size == 0 else int(bad[-1]) + 1
    return float(profile.x[i])

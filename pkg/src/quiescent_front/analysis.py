"""Weighted norms, perturbation series, and the exponential-decay verdict."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .certificate import StabilityCertificate, WeightFunction
from .errors import NoiseFloor, WindowTooSparse
from .kernel import Grid
from .model import ReactionFunction
from .wavefront import WaveProfile

NOISE_FLOOR = 1e-14
SERIES_COLUMNS = ("t", "L2w_v1", "H1w_v1", "sup_v1", "L2w_v2", "H1w_v2", "sup_v2")


def weighted_norm(values, weight: WeightFunction, grid: Grid, order: int = 0) -> float:
    """Discrete L2_w (order 0) or H1_w (order 1) norm with rectangle quadrature."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    f = np.asarray(values, dtype=float)
    w = weight(grid.x)
    dens = f * f
    if order == 1:
        d = np.gradient(f, grid.h, edge_order=1)
        dens = dens + d * d
    return float(math.sqrt(grid.h * np.sum(w * dens)))


def perturbation(u1, u2, grid: Grid, profile: WaveProfile, t: float, frame: str = "lab"):
    """v_i = u_i - phi_i(x + c t) (lab) or u_i - phi_i(xi) (moving)."""
    shift = profile.c * t if frame == "lab" else 0.0
    x = grid.x + shift
    return np.asarray(u1) - profile.at(x, 1), np.asarray(u2) - profile.at(x, 2)


@dataclass
class QReport:
    passed: bool
    max_Q: float
    identity_error: float
    location: float

    def to_dict(self) -> dict:
        return {"passed": self.passed, "max_Q": self.max_Q,
                "identity_error": self.identity_error, "location": self.location}


def q_sign_check(reaction: ReactionFunction, phi1, phi1_lag, v1, v1_lag, x=None, tol: float = 1e-9) -> QReport:
    """Taylor remainder Q of f at (phi1, phi1 lagged) along the increment (v1, v1 lagged).

    ``P`` is the full increment; ``P - (linear part + Q)`` is reported as an
    algebra self-check.  The identity error is relative to max(1, |P|).
    """
    phi1, phi1_lag, v1, v1_lag = (np.asarray(a, dtype=float) for a in (phi1, phi1_lag, v1, v1_lag))
    P = reaction.increment(phi1, phi1_lag, v1, v1_lag)
    lin = reaction.d1(phi1, phi1_lag) * v1 + reaction.d2(phi1, phi1_lag) * v1_lag
    Q = P - lin
    ident = float(np.max(np.abs(P - (lin + Q)) / np.maximum(1.0, np.abs(P)))) if P.size else 0.0
    i = int(np.argmax(Q)) if Q.size else 0
    q_max = float(Q[i]) if Q.size else 0.0
    loc = float(x[i]) if x is not None and Q.size else float(i)
    return QReport(q_max <= tol, q_max, ident, loc)


@dataclass
class PerturbationSeries:
    times: list[float] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, t: float, row: dict) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("series times must increase")
        for k, v in row.items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"norm {k} = {v!r} is not a finite nonnegative number")
        self.times.append(float(t))
        self.rows.append(dict(row))

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(SERIES_COLUMNS)
            for t, r in zip(self.times, self.rows):
                wr.writerow([repr(float(t))] + [repr(float(r[c])) for c in SERIES_COLUMNS[1:]])
        return path

    @classmethod
    def from_csv(cls, path) -> "PerturbationSeries":
        out = cls()
        with Path(path).open() as fh:
            for rec in csv.DictReader(fh):
                t = float(rec.pop("t"))
                out.append(t, {k: float(v) for k, v in rec.items()})
        return out


def norm_row(v1, v2, weight: WeightFunction, grid: Grid) -> dict:
    return {
        "L2w_v1": weighted_norm(v1, weight, grid, 0), "H1w_v1": weighted_norm(v1, weight, grid, 1),
        "sup_v1": float(np.max(np.abs(v1))),
        "L2w_v2": weighted_norm(v2, weight, grid, 0), "H1w_v2": weighted_norm(v2, weight, grid, 1),
        "sup_v2": float(np.max(np.abs(v2))),
    }


@dataclass
class DecayFit:
    mu: float
    amplitude: float
    r2: float


def fit_decay_rate(series: PerturbationSeries, window: tuple[float, float], column: str = "H1w_v1") -> DecayFit:
    """Least-squares line through (t, log norm) on the window; mu = -slope."""
    t = np.asarray(series.times)
    y = series.column(column)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if np.count_nonzero(sel) < 10:
        raise WindowTooSparse(f"{np.count_nonzero(sel)} samples in window {window}, need 10")
    t, y = t[sel], y[sel]
    if np.any(y <= NOISE_FLOOR):
        raise NoiseFloor(f"{column} drops below {NOISE_FLOOR:g} inside the window")
    ly = np.log(y)
    slope, icpt = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + icpt)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return DecayFit(float(-slope), float(math.exp(icpt)), r2)


@dataclass
class TheoremVerdict:
    status: str  # PASS, FAIL or SKIPPED
    failed: list[str]
    diagnostics: dict

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def to_dict(self) -> dict:
        return {"status": self.status, "failed": list(self.failed), "diagnostics": self.diagnostics}


def verify_theorem(series: PerturbationSeries, certificate: StabilityCertificate, mu: float | None = None,
                   amplification: float = 10.0, window: tuple[float, float] | None = None,
                   components: tuple[int, ...] = (1, 2)) -> TheoremVerdict:
    """Check bounded amplification (a), weighted tail rate (b) and sup-norm rate (c)."""
    if not certificate.valid:
        return TheoremVerdict("SKIPPED", [], {"reason": "certificate invalid", "failures": certificate.failures})
    mu = certificate.mu if mu is None else mu
    if not 0 < mu < certificate.mu_max:
        raise ValueError(f"mu = {mu} must lie in (0, {certificate.mu_max})")
    t = np.asarray(series.times)
    T = t[-1]
    window = window or (0.5 * T, T)
    diag: dict = {"mu": mu, "window": list(window)}
    failed: list[str] = []
    for i in components:
        h1 = series.column(f"H1w_v{i}")
        if h1[0] == 0:
            # an identically vanishing component is trivially stable
            diag[f"v{i}"] = {"trivial": True}
            continue
        amp = float(np.max(np.exp(mu * t) * h1) / h1[0])
        d = {"amplification": amp}
        if amp > amplification:
            failed.append(f"a:v{i}")
        for tag, col in (("b", f"H1w_v{i}"), ("c", f"sup_v{i}")):
            try:
                fit = fit_decay_rate(series, window, col)
            except (NoiseFloor, WindowTooSparse) as exc:
                fit = _fit_above_floor(series, window, col)
                d[f"{tag}_note"] = str(exc)
            d[f"{tag}_mu_fit"], d[f"{tag}_r2"] = fit.mu, fit.r2
            if not fit.mu >= mu:
                failed.append(f"{tag}:v{i}")
        diag[f"v{i}"] = d
    kinds = {f.split(":")[0] for f in failed}
    if kinds and kinds != {"a", "b", "c"}:
        diag["warning"] = f"partial pass: conditions {sorted(kinds)} failed alone"
    return TheoremVerdict("FAIL" if failed else "PASS", failed, diag)


def _fit_above_floor(series, window, col) -> DecayFit:
    """Fit on the window samples that stay above the noise floor (fast decay reaches it)."""
    t = np.asarray(series.times)
    y = series.column(col)
    sel = (t >= window[0]) & (t <= window[1]) & (y > NOISE_FLOOR)
    if np.count_nonzero(sel) < 2:
        return DecayFit(math.inf, 0.0, 1.0)
    sub = PerturbationSeries()
    for tt, r in zip(t[sel], (series.rows[j] for j in np.flatnonzero(sel))):
        sub.append(tt, r)
    if len(sub) >= 10:
        return fit_decay_rate(sub, (sub.times[0], sub.times[-1]), col)
    ly = np.log(sub.column(col))
    slope = (ly[-1] - ly[0]) / (sub.times[-1] - sub.times[0])
    return DecayFit(float(-slope), float(sub.column(col)[0]), 1.0)


"""Weighted-energy stability certificate for a computed wave front.

The pipeline picks an exponent ``beta`` for the weight, locates ``xi0``, and
evaluates the pointwise coefficients ``B_i`` and ``A_i`` of the energy
identity on the profile grid.  Their minima are compared with the closed-form
lower bounds ``C_1 .. C_4``, which in turn fix the admissible decay rates.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import bisect

from .errors import GapViolated, NonPositiveConstant
from .kernel import KernelSpec, exp_moment, half_line_moment
from .model import ModelParams
from .wavefront import WaveProfile, find_xi0

BETA_CAP = 50.0
MIN_SLACK = 1e-9


@dataclass(frozen=True)
class WeightFunction:
    """w = exp(-beta (xi - xi0)) left of xi0 and 1 to the right."""

    beta: float
    xi0: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("weight exponent beta must be positive")

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.exp(-self.beta * np.minimum(xi - self.xi0, 0.0))

    def log_derivative(self, xi, side: str = "right"):
        """w'/w; at the kink ``side`` picks the one-sided value."""
        xi = np.asarray(xi, dtype=float)
        left = xi <= self.xi0 if side == "left" else xi < self.xi0
        return np.where(left, -self.beta, 0.0)

    def ratio(self, xi, shift):
        """w(xi + shift) / w(xi), computed without forming large weights."""
        xi = np.asarray(xi, dtype=float)
        a = np.minimum(xi + shift - self.xi0, 0.0)
        b = np.minimum(xi - self.xi0, 0.0)
        return np.exp(-self.beta * (a - b))


# -- scalar pieces ---------------------------------------------------------------


def _beta_rhs(params: ModelParams) -> float:
    s = sum(params.derivs_at_K)
    return 0.5 * params.D + params.gamma1 - s - 3.0 * params.gamma2


def find_beta(params: ModelParams, kernel: KernelSpec, cap: float = BETA_CAP) -> tuple[float, float]:
    """Return (beta, beta_sup) with beta_sup the root of D H(beta) = rhs and beta its midpoint."""
    rhs = _beta_rhs(params)
    g = lambda b: params.D * half_line_moment(kernel, b) - rhs  # noqa: E731
    g0 = g(0.0)
    if g0 >= 0:
        raise GapViolated(f"g(0) = {g0:.6g} >= 0: quiescence gap fails")
    if g(cap) < 0:
        beta_sup = cap
    else:
        beta_sup = float(bisect(g, 0.0, cap, xtol=1e-13, maxiter=500))
    return 0.5 * beta_sup, beta_sup


def speed_threshold(params: ModelParams, kernel: KernelSpec, beta: float,
                    c_star_assumed: float = 0.0) -> tuple[tuple[float, float, float], float]:
    if not beta > 0:
        raise ValueError("beta must be positive")
    a0, b0 = params.derivs_at_zero
    D, g1, g2 = params.D, params.gamma1, params.gamma2
    t2 = (g1 - g2) / beta
    t3 = (2 * a0 + 2 * b0 + g2 - g1 - 0.5 * D + D * exp_moment(kernel, beta)) / beta
    terms = (float(c_star_assumed), t2, t3)
    return terms, max(terms)


@dataclass(frozen=True)
class Constants:
    C11: float
    C12: float
    C21: float
    C22: float

    @property
    def C1(self) -> float:
        return min(self.C11, self.C12)

    @property
    def C2(self) -> float:
        return min(self.C21, self.C22)

    def nonpositive(self) -> list[str]:
        vals = {"C11": self.C11, "C12": self.C12, "C21": self.C21, "C22": self.C22}
        return [k for k, v in vals.items() if not v > 0]


def constants(params: ModelParams, kernel: KernelSpec, beta: float, xi0: float, c: float,
              strict: bool = True) -> Constants:
    """Lower bounds for B_1 and B_2 on either side of ``xi0``.

    ``xi0`` does not enter the formulas; it is accepted so callers pass the
    full weight description.  With ``strict`` a non-positive constant raises.
    """
    if not c > 0:
        raise ValueError("wave speed must be positive")
    a0, b0 = params.derivs_at_zero
    D, g1, g2 = params.D, params.gamma1, params.gamma2
    out = Constants(
        C11=c * beta + 0.5 * D + g1 - 2 * a0 - 2 * b0 - g2 - D * exp_moment(kernel, beta),
        C12=_beta_rhs(params) - D * half_line_moment(kernel, beta),
        C21=c * beta + g2 - g1,
        C22=g2 - g1,
    )
    if strict:
        bad = out.nonpositive()
        if bad:
            raise NonPositiveConstant(bad[0], getattr(out, bad[0]))
    return out


def _mu1_lhs(mu, C1, tau, b0):
    return C1 - 2.0 * mu - math.expm1(2.0 * mu * tau) * b0


def solve_mu1(C1: float, tau: float, d2f00: float) -> float:
    """Positive root of C1 - 2 mu - (exp(2 mu tau) - 1) d2f00 = 0."""
    if not C1 > 0:
        raise ValueError("C1 must be positive")
    if tau < 0 or d2f00 < 0:
        raise ValueError("need tau >= 0 and d2f(0,0) >= 0")
    if tau == 0 or d2f00 == 0:
        return 0.5 * C1
    return float(bisect(_mu1_lhs, 0.0, 0.5 * C1, args=(C1, tau, d2f00), xtol=1e-300, rtol=8.9e-16, maxiter=2000))


def mu2(C2: float) -> float:
    if not C2 > 0:
        raise ValueError("C2 must be positive")
    return 0.5 * C2


def asymptotic_limits(params: ModelParams, kernel: KernelSpec, beta: float, c: float) -> dict:
    """Far-field values of B_1 and B_2 on a profile that reaches both equilibria.

    On the left the translated-weight factor exp(-beta c tau) multiplies the
    delayed derivative at zero; on the right every weight ratio equals one.
    """
    a0, b0 = params.derivs_at_zero
    aK, bK = params.derivs_at_K
    D, g1, g2, tau = params.D, params.gamma1, params.gamma2, params.tau
    return {
        "B1_left": c * beta + D + g1 - 2 * a0 - b0 * (1 + math.exp(-beta * c * tau)) - g2
        - D * exp_moment(kernel, beta),
        "B1_right": g1 - 2 * aK - 2 * bK - g2,
        "B2_left": c * beta + g2 - g1,
        "B2_right": g2 - g1,
    }


# -- pointwise coefficients ---------------------------------------------------------


def _lead_term(params, profile, weight, xi):
    """[w(xi + c tau)/w(xi)] d2f(phi1(xi + c tau), phi1(xi))."""
    s = profile.c * params.tau
    return weight.ratio(xi, s) * params.reaction.d2(profile.at(xi + s), profile.at(xi))


def eval_B(params: ModelParams, profile: WaveProfile, weight: WeightFunction, kernel: KernelSpec,
           xi, side: str = "right"):
    """(B_1, B_2) at ``xi`` (scalar or array); ``side`` picks w'/w at the kink."""
    xi = np.asarray(xi, dtype=float)
    r = params.reaction
    c = profile.c
    lw = weight.log_derivative(xi, side)
    phi = profile.at(xi)
    lag = profile.at(xi - c * params.tau)
    y, wk = kernel.weights(profile.grid.h)
    nonlocal_ = np.zeros_like(xi)
    for yk, wgt in zip(y, wk):
        nonlocal_ = nonlocal_ + wgt * weight.ratio(xi, yk)
    B1 = (-c * lw + params.D + params.gamma1 - 2 * r.d1(phi, lag) - r.d2(phi, lag) - params.gamma2
          - _lead_term(params, profile, weight, xi) - params.D * nonlocal_)
    B2 = -c * lw + params.gamma2 - params.gamma1
    return B1, B2


def eval_A(params: ModelParams, profile: WaveProfile, weight: WeightFunction, kernel: KernelSpec,
           mu: float, xi, side: str = "right"):
    B1, B2 = eval_B(params, profile, weight, kernel, xi, side)
    A1 = B1 - 2 * mu - _lead_term(params, profile, weight, xi) * math.expm1(2 * mu * params.tau)
    return A1, B2 - 2 * mu


def C3_of(C1: float, mu: float, tau: float, d2f00: float) -> float:
    return _mu1_lhs(mu, C1, tau, d2f00)


# -- the certificate --------------------------------------------------------------


@dataclass
class GridMin:
    value: float
    location: float

    @classmethod
    def of(cls, values, xi) -> "GridMin":
        i = int(np.argmin(values))
        return cls(float(values[i]), float(xi[i]))


@dataclass
class StabilityCertificate:
    c: float
    beta: float
    beta_sup: float
    xi0: float
    c_star_assumed: float
    threshold_terms: tuple[float, float, float]
    c_threshold: float
    C11: float
    C12: float
    C1: float
    C21: float
    C22: float
    C2: float
    C3: float
    C4: float
    mu1: float
    mu2: float
    mu_max: float
    mu: float
    mu_fraction: float
    min_B1: GridMin
    min_B2: GridMin
    min_A1: GridMin
    min_A2: GridMin
    kink: dict
    limits: dict
    valid: bool
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["threshold_terms"] = {"c_star_assumed": self.threshold_terms[0],
                                "switching": self.threshold_terms[1],
                                "dispersal": self.threshold_terms[2]}
        d["c_star_status"] = "assumed"
        return d

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path


def certify(params: ModelParams, kernel: KernelSpec, profile: WaveProfile, c_star_assumed: float = 0.0,
            mu_fraction: float = 0.9, beta: float | None = None) -> StabilityCertificate:
    """Run the whole certificate pipeline on ``profile``.

    An explicit ``beta`` overrides the midpoint choice but must stay below
    ``beta_sup``.  Constants that come out non-positive do not raise here:
    they are listed in ``failures`` and the certificate is marked invalid.
    """
    if not 0 < mu_fraction < 1:
        raise ValueError("mu_fraction must lie in (0, 1)")
    c = profile.c
    beta_mid, beta_sup = find_beta(params, kernel)
    if beta is None:
        beta = beta_mid
    elif not 0 < beta < beta_sup:
        raise ValueError(f"beta override {beta} outside (0, {beta_sup:.6g})")
    xi0 = find_xi0(params, profile)
    weight = WeightFunction(beta, xi0)
    terms, c_thr = speed_threshold(params, kernel, beta, c_star_assumed)
    k = constants(params, kernel, beta, xi0, c, strict=False)
    failures = [f"{name} <= 0" for name in k.nonpositive()]
    if not c > c_thr:
        failures.append(f"c = {c:.6g} <= threshold {c_thr:.6g}")
    b0 = params.derivs_at_zero[1]
    m1 = solve_mu1(k.C1, params.tau, b0) if k.C1 > 0 else math.nan
    m2 = mu2(k.C2) if k.C2 > 0 else math.nan
    mu_max = min(m1, m2)
    mu = mu_fraction * mu_max
    C3 = C3_of(k.C1, mu, params.tau, b0)
    C4 = k.C2 - 2 * mu

    xi = profile.x
    B1, B2 = eval_B(params, profile, weight, kernel, xi)
    A1, A2 = eval_A(params, profile, weight, kernel, mu, xi) if math.isfinite(mu) else (B1 * math.nan, B2 * math.nan)
    kl = eval_B(params, profile, weight, kernel, np.array([xi0]), side="left")
    kr = eval_B(params, profile, weight, kernel, np.array([xi0]), side="right")
    kink = {"B1_left": float(kl[0][0]), "B1_right": float(kr[0][0]),
            "B2_left": float(kl[1][0]), "B2_right": float(kr[1][0])}
    mins = [GridMin.of(v, xi) for v in (B1, B2, A1, A2)]
    for name, got, want in zip(("B1", "B2", "A1", "A2"), mins, (k.C1, k.C2, C3, C4)):
        if not got.value >= want - MIN_SLACK:
            failures.append(f"min {name} = {got.value:.6g} below {want:.6g}")
    for name, val in (("mu1", m1), ("mu2", m2), ("C3", C3), ("C4", C4)):
        if not val > 0:
            failures.append(f"{name} <= 0")
    return StabilityCertificate(
        c=c, beta=beta, beta_sup=beta_sup, xi0=xi0, c_star_assumed=c_star_assumed,
        threshold_terms=terms, c_threshold=c_thr,
        C11=k.C11, C12=k.C12, C1=k.C1, C21=k.C21, C22=k.C22, C2=k.C2, C3=C3, C4=C4,
        mu1=m1, mu2=m2, mu_max=mu_max, mu=mu, mu_fraction=mu_fraction,
        min_B1=mins[0], min_B2=mins[1], min_A1=mins[2], min_A2=mins[3],
        kink=kink, limits=asymptotic_limits(params, kernel, beta, c),
        valid=not failures, failures=failures,
    )

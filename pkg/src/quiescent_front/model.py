"""Model parameters, reaction functions and sampled hypothesis checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from .errors import NoPositiveEquilibrium, NoRoot

SLACK = 1e-10


def _zero(u, v):
    return 0.0 * np.asarray(u, dtype=float) + 0.0 * np.asarray(v, dtype=float)


class ReactionFunction:
    """f(u, v) with first and second partials; ``v`` is the delayed argument.

    Subclasses override the six evaluation methods.  All of them accept numpy
    arrays and broadcast.
    """

    name = "reaction"

    def f(self, u, v):
        raise NotImplementedError

    def d1(self, u, v):
        raise NotImplementedError

    def d2(self, u, v):
        raise NotImplementedError

    def d11(self, u, v):
        raise NotImplementedError

    def d12(self, u, v):
        raise NotImplementedError

    def d22(self, u, v):
        raise NotImplementedError

    def increment(self, u, v, du, dv):
        """f(u + du, v + dv) - f(u, v); subclasses may avoid the cancellation."""
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        return self.f(u + du, v + dv) - self.f(u, v)

    def __call__(self, u, v):
        return self.f(u, v)

    def describe(self) -> dict:
        return {"name": self.name}


class Nicholson(ReactionFunction):
    """Blowfly birth-death law  f(u, v) = p v exp(-a v) exp(-mu0 tau) - d u."""

    name = "nicholson"

    def __init__(self, p: float, d: float, a: float, mu0: float = 0.0, tau: float = 0.0):
        if p <= 0 or d <= 0 or a <= 0:
            raise ValueError("nicholson requires p, d, a > 0")
        if mu0 < 0 or tau < 0:
            raise ValueError("nicholson requires mu0 >= 0 and tau >= 0")
        self.p, self.d, self.a, self.mu0, self.tau = p, d, a, mu0, tau
        self.q = p * math.exp(-mu0 * tau)
        if self.q <= d:
            raise NoPositiveEquilibrium(
                f"p*exp(-mu0*tau) = {self.q:.6g} <= d = {d:.6g}: no positive equilibrium"
            )

    @property
    def closed_form_K(self) -> float:
        return math.log(self.q / self.d) / self.a

    def f(self, u, v):
        return self.q * v * np.exp(-self.a * v) - self.d * u

    def increment(self, u, v, du, dv):
        # (v+dv) e^{-a(v+dv)} - v e^{-av} = e^{-av} (v expm1(-a dv) + dv e^{-a dv})
        v = np.asarray(v, dtype=float)
        dv = np.asarray(dv, dtype=float)
        birth = np.exp(-self.a * v) * (v * np.expm1(-self.a * dv) + dv * np.exp(-self.a * dv))
        return self.q * birth - self.d * np.asarray(du, dtype=float)

    def d1(self, u, v):
        return _zero(u, v) - self.d

    def d2(self, u, v):
        av = self.a * np.asarray(v, dtype=float)
        return _zero(u, v) + self.q * np.exp(-av) * (1.0 - av)

    def d11(self, u, v):
        return _zero(u, v)

    d12 = d11

    def d22(self, u, v):
        av = self.a * np.asarray(v, dtype=float)
        return _zero(u, v) + self.q * self.a * np.exp(-av) * (av - 2.0)

    def describe(self) -> dict:
        return {"name": self.name, "p": self.p, "d": self.d, "a": self.a, "mu0": self.mu0, "tau": self.tau}


class CallableReaction(ReactionFunction):
    """Reaction assembled from user callables (used for custom or test laws)."""

    def __init__(self, f: Callable, d1: Callable, d2: Callable, d11: Callable, d12: Callable,
                 d22: Callable, name: str = "custom"):
        self._fns = dict(f=f, d1=d1, d2=d2, d11=d11, d12=d12, d22=d22)
        self.name = name

    def _eval(self, key, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        out = np.asarray(self._fns[key](u, v), dtype=float)
        return np.broadcast_to(out, u.shape).copy() if u.ndim else float(out)

    def f(self, u, v):
        return self._eval("f", u, v)

    def d1(self, u, v):
        return self._eval("d1", u, v)

    def d2(self, u, v):
        return self._eval("d2", u, v)

    def d11(self, u, v):
        return self._eval("d11", u, v)

    def d12(self, u, v):
        return self._eval("d12", u, v)

    def d22(self, u, v):
        return self._eval("d22", u, v)


def nicholson(p: float, d: float, a: float, mu0: float = 0.0, tau: float = 0.0) -> Nicholson:
    return Nicholson(p, d, a, mu0, tau)


def carrying_capacity(reaction: ReactionFunction, u_max: float = 10.0, scan: int = 4000) -> float:
    """Smallest positive root of u -> f(u, u) on (0, u_max]."""
    g = lambda u: float(reaction.f(u, u))  # noqa: E731
    eps = 1e-6 * u_max
    if not g(eps) > 0:
        raise NoRoot(f"f(u,u) is not positive near zero (f({eps:.1e}) = {g(eps):.3e})")
    us = np.linspace(eps, u_max, scan + 1)
    vals = np.asarray(reaction.f(us, us), dtype=float)
    idx = np.flatnonzero(vals <= 0)
    if idx.size == 0:
        raise NoRoot(f"no sign change of f(u,u) on (0, {u_max}]")
    i = idx[0]
    if vals[i] == 0:
        return float(us[i])
    return float(bisect(g, us[i - 1], us[i], xtol=1e-300, rtol=1e-12 / 2, maxiter=400))


@dataclass(frozen=True)
class ModelParams:
    D: float
    gamma1: float
    gamma2: float
    tau: float
    reaction: ReactionFunction
    K: float = field(default=None)
    u_max: float = 10.0

    def __post_init__(self):
        for name in ("D", "gamma1", "gamma2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.K is None:
            object.__setattr__(self, "K", carrying_capacity(self.reaction, self.u_max))

    @property
    def u_plus(self) -> tuple[float, float]:
        return (self.K, self.gamma1 * self.K / self.gamma2)

    @property
    def u_minus(self) -> tuple[float, float]:
        return (0.0, 0.0)

    @cached_property
    def derivs_at_zero(self) -> tuple[float, float]:
        return float(self.reaction.d1(0.0, 0.0)), float(self.reaction.d2(0.0, 0.0))

    @cached_property
    def derivs_at_K(self) -> tuple[float, float]:
        K = self.K
        return float(self.reaction.d1(K, K)), float(self.reaction.d2(K, K))

    @cached_property
    def derivative_bounds(self) -> tuple[float, float]:
        """sup |d1 f| and sup |d2 f| over a 201x201 lattice of [0, K]^2."""
        s = np.linspace(0.0, self.K, 201)
        u, v = np.meshgrid(s, s, indexing="ij")
        return (float(np.max(np.abs(self.reaction.d1(u, v)))),
                float(np.max(np.abs(self.reaction.d2(u, v)))))

    def rate_bound(self) -> float:
        """L = D + gamma1 + gamma2 + sup|d1 f| + sup|d2 f|."""
        b1, b2 = self.derivative_bounds
        return self.D + self.gamma1 + self.gamma2 + b1 + b2

    def describe(self) -> dict:
        return {
            "D": self.D, "gamma1": self.gamma1, "gamma2": self.gamma2, "tau": self.tau,
            "K": self.K, "u_plus": list(self.u_plus), "reaction": self.reaction.describe(),
        }


# -- hypothesis checks --------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    location: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "worst": float(self.worst),
                "location": None if self.location is None else [float(x) for x in self.location]}


@dataclass
class AssumptionReport:
    label: str
    checks: list[Check]
    samples: int
    resolution_sensitive: bool = False

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"label": self.label, "passed": self.passed, "samples": self.samples,
                "resolution_sensitive": self.resolution_sensitive,
                "checks": [c.to_dict() for c in self.checks]}


def _lattice(K, samples):
    s = np.linspace(0.0, K, samples)
    return np.meshgrid(s, s, indexing="ij")


def _sign_check(name, values, u, v, sign):
    """sign=+1 demands values >= -SLACK, sign=-1 demands values <= SLACK."""
    signed = sign * np.asarray(values, dtype=float)
    signed = np.broadcast_to(signed, u.shape)
    i = np.unravel_index(np.argmin(signed), signed.shape)
    worst = float(signed[i])
    return Check(name, worst >= -SLACK, sign * worst, (float(u[i]), float(v[i])))


def _a1_checks(r: ReactionFunction, K: float, samples: int) -> list[Check]:
    u, v = _lattice(K, samples)
    f00 = float(r.f(0.0, 0.0))
    fKK = float(r.f(K, K))
    checks = [
        Check("f(0,0)=0", abs(f00) <= SLACK, f00, (0.0, 0.0)),
        Check("f(K,K)=0", abs(fKK) <= SLACK, fKK, (K, K)),
    ]
    diag = np.linspace(0.0, K, samples)[1:-1]
    if diag.size:
        g = np.asarray(r.f(diag, diag), dtype=float)
        j = int(np.argmin(g))
        checks.append(Check("f(u,u)>0 interior", bool(g[j] > 0), float(g[j]), (diag[j], diag[j])))
    checks.append(_sign_check("d2f>=0", r.d2(u, v), u, v, +1))
    checks.append(_sign_check("d11f<=0", r.d11(u, v), u, v, -1))
    checks.append(_sign_check("d12f<=0", r.d12(u, v), u, v, -1))
    checks.append(_sign_check("d22f<=0", r.d22(u, v), u, v, -1))
    return checks


def _a2_checks(r: ReactionFunction, K: float, samples: int) -> list[Check]:
    u, v = _lattice(K, samples)
    a, b = float(r.d1(0.0, 0.0)), float(r.d2(0.0, 0.0))
    gap = a * u + b * v - np.asarray(r.f(u, v), dtype=float)
    s = float(r.d1(K, K)) + float(r.d2(K, K))
    return [
        _sign_check("subtangent at 0", gap, u, v, +1),
        Check("d1f(K,K)+d2f(K,K)<0", s < 0, s, (K, K)),
    ]


def _report(label, builder, reaction, K, samples) -> AssumptionReport:
    if samples < 2:
        raise ValueError("need at least 2 samples per axis")
    coarse = builder(reaction, K, samples)
    fine = builder(reaction, K, 2 * samples - 1)
    coarse_ok = all(c.passed for c in coarse)
    fine_ok = all(c.passed for c in fine)
    return AssumptionReport(label, coarse, samples, resolution_sensitive=coarse_ok != fine_ok)


def check_A1(reaction: ReactionFunction, K: float, samples: int = 201) -> AssumptionReport:
    return _report("A1", _a1_checks, reaction, K, samples)


def check_A2(reaction: ReactionFunction, K: float, samples: int = 201) -> AssumptionReport:
    return _report("A2", _a2_checks, reaction, K, samples)


def check_derivatives(reaction: ReactionFunction, K: float, samples: int = 100, seed: int = 0,
                      rtol: float = 1e-6) -> Check:
    """Analytic partials against central differences with step 1e-5 K at random points of [0, K]^2.

    Second partials are differenced from the analytic first partials, which
    keeps round-off far below the tolerance.  Errors are relative to
    max(1, |analytic value|) so vanishing partials are not over-penalized.
    """
    rng = np.random.default_rng(seed)
    e = 1e-5 * K
    u, v = rng.uniform(e, K - e, (2, samples))
    pairs = (
        (reaction.d1(u, v), (reaction.f(u + e, v) - reaction.f(u - e, v)) / (2 * e)),
        (reaction.d2(u, v), (reaction.f(u, v + e) - reaction.f(u, v - e)) / (2 * e)),
        (reaction.d11(u, v), (reaction.d1(u + e, v) - reaction.d1(u - e, v)) / (2 * e)),
        (reaction.d12(u, v), (reaction.d1(u, v + e) - reaction.d1(u, v - e)) / (2 * e)),
        (reaction.d22(u, v), (reaction.d2(u, v + e) - reaction.d2(u, v - e)) / (2 * e)),
    )
    worst, where = 0.0, None
    for exact, approx in pairs:
        exact = np.broadcast_to(np.asarray(exact, dtype=float), u.shape)
        err = np.abs(exact - approx) / np.maximum(1.0, np.abs(exact))
        i = int(np.argmax(err))
        if err[i] > worst:
            worst, where = float(err[i]), (float(u[i]), float(v[i]))
    return Check("derivative consistency", worst <= rtol, worst, where)


@dataclass
class GapReport:
    derivative_sum: float
    margin: float
    gap_holds: bool
    gamma_order_holds: bool

    @property
    def passed(self) -> bool:
        return self.gap_holds and self.gamma_order_holds

    def to_dict(self) -> dict:
        return {"derivative_sum_at_K": self.derivative_sum, "margin": self.margin,
                "gap_holds": self.gap_holds, "gamma2_gt_gamma1": self.gamma_order_holds,
                "passed": self.passed}


def check_quiescence_gap(params: ModelParams) -> GapReport:
    """d1f(K,K) + d2f(K,K) < gamma1 - 3 gamma2, plus gamma2 > gamma1."""
    s = sum(params.derivs_at_K)
    margin = (params.gamma1 - 3.0 * params.gamma2) - s
    return GapReport(s, margin, margin > 0, params.gamma2 > params.gamma1)

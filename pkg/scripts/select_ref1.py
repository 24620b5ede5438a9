"""Oracle scan that selects the pinned REF1 configuration.

Every candidate is evaluated with closed-form Gaussian moments (sigma = 1),
independently of the package:

    H(beta) = exp(beta^2/2) Phi(beta),   M(beta) = exp(beta^2/2).

A candidate is admissible when gamma2 > gamma1, the Nicholson reaction
satisfies a K <= 1 (so d2f >= 0 on [0, K]^2), and the quiescence gap margin
(gamma1 - 3 gamma2) - (d1f(K,K) + d2f(K,K)) is at least 0.05.  The wave speed
is 1.5 times the speed threshold at beta = beta_sup / 2, rounded up to 0.5,
and T = ln(10) / mu_max.  Candidates are ranked by c * T, the distance a
perturbation travels in the moving frame, which sets the domain length.

Run:  python scripts/select_ref1.py
"""
from __future__ import annotations

import itertools
import math

from scipy.optimize import brentq
from scipy.stats import norm


def H(b):
    return math.exp(0.5 * b * b) * norm.cdf(b)


def M(b):
    return math.exp(0.5 * b * b)


def evaluate(D, g1, g2, p, d, a, tau):
    if not (p > d and g2 > g1):
        return None
    aK = math.log(p / d)
    if aK > 1.0:
        return None
    K = aK / a
    s_K = -d + p * math.exp(-aK) * (1 - aK)  # d1f(K,K) + d2f(K,K) = -d aK
    margin = (g1 - 3 * g2) - s_K
    if margin < 0.05:
        return None
    rhs = 0.5 * D + g1 - s_K - 3 * g2
    beta_sup = brentq(lambda b: D * H(b) - rhs, 0.0, 20.0, xtol=1e-14)
    beta = 0.5 * beta_sup
    a0, b0 = -d, p
    thr = (2 * a0 + 2 * b0 + g2 - g1 - 0.5 * D + D * M(beta)) / beta
    c = math.ceil(1.5 * thr * 2) / 2
    C11 = c * beta + 0.5 * D + g1 - 2 * a0 - 2 * b0 - g2 - D * M(beta)
    C12 = rhs - D * H(beta)
    C1, C2 = min(C11, C12), g2 - g1
    mu1 = brentq(lambda m: C1 - 2 * m - math.expm1(2 * m * tau) * b0, 0.0, 0.5 * C1, xtol=1e-15)
    mu_max = min(mu1, 0.5 * C2)
    T = math.log(10) / mu_max
    return dict(D=D, gamma1=g1, gamma2=g2, p=p, d=d, a=a, tau=tau, K=K, margin=margin,
                beta=beta, threshold=thr, c=c, mu1=mu1, mu2=0.5 * C2, T=T, cost=c * T)


def scan():
    grid = itertools.product([0.25, 0.5, 1.0], [0.05, 0.1, 0.2], [0.2, 0.25, 0.3, 0.4, 0.5],
                             [1.5, 2.0, 2.5], [0.5, 1.0, 1.5, 2.0], [1.0], [0.5, 1.0])
    rows = [r for r in (evaluate(*args) for args in grid) if r is not None]
    rows.sort(key=lambda r: r["cost"])
    return rows


if __name__ == "__main__":
    rows = scan()
    keys = ("D", "gamma1", "gamma2", "p", "d", "tau", "margin", "threshold", "c", "mu1", "mu2", "T", "cost")
    print("  ".join(f"{k:>9}" for k in keys))
    for r in rows[:10]:
        print("  ".join(f"{r[k]:9.4g}" for k in keys))
    best = rows[0]
    print("\nselected REF1:", {k: best[k] for k in ("D", "gamma1", "gamma2", "p", "d", "a", "tau", "c")})

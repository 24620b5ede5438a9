"""Traveling-wave invariance refinement study on REF1 (h, h/2, h/4).

The lab-frame solution started from the wave on its history must stay close to
the translated wave.  For each resolution the profile is recomputed on the
same spacing, the system is integrated to T = 5 with dt = h, and the error
e = sup |u1(T, x) - phi1(x + c T)| is recorded.  The pinned constant is
C = 1.25 * max e / (h + dt); tests require e <= C (h + dt).

Run:  python scripts/refinement_study.py  (writes data/tw_refinement.json)
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from quiescent_front.config import load_config
from quiescent_front.evolution import Frame, InitialData, choose_dt, simulate
from quiescent_front.kernel import Grid
from quiescent_front.wavefront import solve_profile

ROOT = Path(__file__).resolve().parents[1]
T = 5.0
LAB = (-150.0, 250.0)
SPACINGS = (0.1, 0.05, 0.025)
SAFETY = 1.25


def invariance_error(cfg, h):
    params, kernel = cfg.params(), cfg.kernel_spec()
    c = cfg.wave.c
    prof = solve_profile(params, kernel, c, Grid.from_spacing(cfg.grid.xi_min, cfg.grid.xi_max, h),
                         tol=cfg.wave.tol, max_iter=cfg.wave.max_iter)
    grid = Grid.from_spacing(*LAB, h)
    frame = Frame.lab()
    dt = choose_dt(params, grid, frame, target=h)
    ini = InitialData.from_functions(grid, params.tau, dt, lambda s, x: prof.at(x + c * s, 1),
                                     lambda x: prof.at(x, 2))
    traj = simulate(params, kernel, ini, frame, T, dt)
    err = float(np.max(np.abs(traj.final.u1 - prof.at(grid.x + c * traj.final.t, 1))))
    return dt, err


def main(out=ROOT / "data" / "tw_refinement.json"):
    cfg = load_config(ROOT / "configs" / "ref1.ini")
    rows = []
    for h in SPACINGS:
        dt, err = invariance_error(cfg, h)
        rows.append({"h": h, "dt": dt, "error": err, "ratio": err / (h + dt)})
        print(f"h = {h:<6g} dt = {dt:<8.4g} error = {err:.4e}  error/(h+dt) = {err / (h + dt):.4e}")
    C = SAFETY * max(r["ratio"] for r in rows)
    payload = {"T": T, "lab_domain": list(LAB), "rows": rows, "C": C, "safety": SAFETY}
    Path(out).write_text(json.dumps(payload, indent=2))
    print(f"pinned C = {C:.4e}")


if __name__ == "__main__":
    main(*sys.argv[1:])

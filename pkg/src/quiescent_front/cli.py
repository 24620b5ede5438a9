"""Command-line front end: check | wave | certify | simulate | stability | bench.

Exit codes: 0 pass, 1 domain failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import SERIES_COLUMNS, PerturbationSeries, norm_row, perturbation, q_sign_check, verify_theorem
from .certificate import StabilityCertificate, WeightFunction, certify
from .config import ExperimentConfig, RunManifest, dump_config, load_config
from .errors import ConfigError, QuiescentFrontError
from .evolution import (Base, Frame, InitialData, SimulationState, Trajectory, check_boundedness,
                        check_comparison, choose_dt, delayed_field, envelope_split, perturbation_envelopes,
                        rhs, simulate_pair)
from .kernel import Convolver, Grid
from .model import check_A1, check_A2, check_derivatives, check_quiescence_gap
from .wavefront import WaveProfile, solve_profile

log = logging.getLogger("quiescent_front")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class Outcome:
    code: int
    summary: str
    data: dict = field(default_factory=dict)


def _dump(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


# -- pipeline stages ------------------------------------------------------------------


def stage_check(cfg: ExperimentConfig) -> dict:
    params = cfg.params()
    a1 = check_A1(params.reaction, params.K)
    a2 = check_A2(params.reaction, params.K)
    gap = check_quiescence_gap(params)
    deriv = check_derivatives(params.reaction, params.K)
    return {"K": params.K, "A1": a1.to_dict(), "A2": a2.to_dict(), "gap": gap.to_dict(),
            "derivatives": deriv.to_dict(),
            "passed": a1.passed and a2.passed and gap.passed and deriv.passed}


def stage_wave(cfg: ExperimentConfig, threads: int = 1) -> WaveProfile:
    w = cfg.wave
    return solve_profile(cfg.params(), cfg.kernel_spec(), w.c, cfg.wave_grid(), tol=w.tol,
                         max_iter=w.max_iter, kappa=w.kappa, threads=threads)


def stage_certify(cfg: ExperimentConfig, profile: WaveProfile) -> StabilityCertificate:
    c = cfg.certificate
    return certify(cfg.params(), cfg.kernel_spec(), profile, c.c_star_assumed, c.mu_fraction, c.beta)


def _bump(x, a, b):
    z = np.clip((x - a) / (b - a), 0.0, 1.0)
    return np.sin(np.pi * z) ** 2


def perturbation_shape(cfg: ExperimentConfig, K: float):
    """Compactly supported, sign-changing perturbation of the mobile density."""
    e = cfg.evolution
    amp = e.amplitude * K
    a, w = e.center, e.width
    if e.shape == "bump_pair":
        return lambda x: amp * (_bump(x, a, a + w) - _bump(x, a + 1.5 * w, a + 2.5 * w))
    rng = np.random.default_rng(e.seed)
    starts = np.sort(rng.uniform(a, a + 2.0 * w, size=4))
    widths = rng.uniform(0.3 * w, w, size=4)
    amps = amp * rng.uniform(-1.0, 1.0, size=4)
    return lambda x: sum(c * _bump(x, s, s + wd) for c, s, wd in zip(amps, starts, widths))


@dataclass
class RunSetup:
    grid: Grid
    frame: Frame
    dt: float
    T: float
    stride: int
    pair: tuple[InitialData, InitialData]
    base: Base | None


def setup_envelope_runs(cfg: ExperimentConfig, profile: WaveProfile, cert: StabilityCertificate | None,
                        frame_kind: str | None = None) -> RunSetup:
    params = cfg.params()
    e = cfg.evolution
    kind = frame_kind or e.frame
    grid = cfg.sim_grid()
    c = profile.c
    frame = Frame.moving(c) if kind == "moving" else Frame.lab()
    dt = choose_dt(params, grid, frame, positivity=True, target=e.dt)
    if e.T is not None:
        T = e.T
    elif cert is not None and math.isfinite(cert.mu_max) and cert.mu_max > 0:
        # whole number of steps, rounded up so the decay target is reached
        T = dt * math.ceil(-math.log(e.decay_target) / cert.mu_max / dt - 1e-9)
    else:
        raise ConfigError("[evolution] T = auto needs a certificate with positive decay rates")
    stride = max(1, int(round(e.sample_interval / dt)))
    pert = perturbation_shape(cfg, params.K)
    ratio = params.gamma1 / params.gamma2
    if kind == "moving":
        # perturbation form: fields are v = u - phi, fixed in the lab frame over the history
        ini = InitialData.from_functions(grid, params.tau, dt, lambda s, x: pert(x - c * s),
                                         lambda x: ratio * pert(x))
        pair = perturbation_envelopes(ini)
        base = Base.from_profile(profile, grid, params.tau)
    else:
        ini = InitialData.from_functions(grid, params.tau, dt,
                                         lambda s, x: profile.at(x + c * s, 1) + pert(x),
                                         lambda x: profile.at(x, 2) + ratio * pert(x))
        pair = envelope_split(ini, profile, frame)
        base = None
    return RunSetup(grid, frame, dt, T, stride, pair, base)


def _observer(params, profile: WaveProfile, weight: WeightFunction, setup: RunSetup):
    grid = setup.grid
    r = params.reaction

    def observe(state: SimulationState) -> dict:
        lag = delayed_field(state, params)
        if state.base is not None:
            v1, v2 = state.u1, state.u2
            phi1, phi1_lag, v1_lag, wt = state.base.phi1, state.base.phi1_lag, lag, weight
        else:
            t = state.t
            v1, v2 = perturbation(state.u1, state.u2, grid, profile, t, "lab")
            phi1 = profile.at(grid.x + profile.c * t, 1)
            phi1_lag = profile.at(grid.x + profile.c * (t - params.tau), 1)
            v1_lag = lag - phi1_lag
            wt = WeightFunction(weight.beta, weight.xi0 - profile.c * t)
        q = q_sign_check(r, phi1, phi1_lag, v1, v1_lag, grid.x)
        row = norm_row(v1, v2, wt, grid)
        row["max_Q"] = q.max_Q
        row["identity_error"] = q.identity_error
        return row

    return observe


def _series(traj: Trajectory) -> PerturbationSeries:
    s = PerturbationSeries()
    for row in traj.samples:
        s.append(row["t"], {k: row[k] for k in SERIES_COLUMNS[1:]})
    return s


def stage_envelope(cfg: ExperimentConfig, profile: WaveProfile, cert: StabilityCertificate,
                   threads: int = 1, frame_kind: str | None = None):
    params = cfg.params()
    kernel = cfg.kernel_spec()
    setup = setup_envelope_runs(cfg, profile, cert, frame_kind)
    weight = WeightFunction(cert.beta, cert.xi0)
    obs = _observer(params, profile, weight, setup)
    up, lo = simulate_pair(params, kernel, setup.pair, setup.frame, setup.T, setup.dt, observers=[obs],
                           stride=setup.stride, base=setup.base, method=cfg.evolution.method,
                           threads=threads, keep_fields=True)
    return setup, up, lo


def _q_summary(traj: Trajectory) -> dict:
    qmax = max(r["max_Q"] for r in traj.samples)
    ident = max(r["identity_error"] for r in traj.samples)
    return {"max_Q": qmax, "max_identity_error": ident, "samples": len(traj.samples),
            "passed": qmax <= 1e-9 and ident <= 1e-12}


def _box_applicable(pair, base, params) -> bool:
    ini = pair[0]
    u1 = ini.u1 + (base.phi1 if base is not None else 0.0)
    u2 = ini.u2 + (base.phi2 if base is not None else 0.0)
    lo1, hi1 = float(np.min(u1)), float(np.max(u1))
    lo2, hi2 = float(np.min(u2)), float(np.max(u2))
    return lo1 >= 0 and lo2 >= 0 and hi1 <= params.K and hi2 <= params.u_plus[1]


# -- commands -----------------------------------------------------------------------------


def cmd_check(cfg: ExperimentConfig, out: Path, threads: int = 1) -> Outcome:
    rep = stage_check(cfg)
    _dump(out / "assumptions.json", rep)
    failed = [name for name in ("A1", "A2", "gap", "derivatives") if not rep[name]["passed"]]
    if failed:
        return Outcome(EXIT_FAIL, f"assumptions failed: {', '.join(failed)}", rep)
    return Outcome(EXIT_OK, "assumptions hold", rep)


def cmd_wave(cfg: ExperimentConfig, out: Path, threads: int = 1) -> Outcome:
    prof = stage_wave(cfg, threads)
    prof.save(out / "profile.txt")
    meta = prof.metadata()
    bad = [k for k, v in meta["boundary_errors"].items() if v > cfg.wave.tol_bc]
    if prof.monotone_defect() > 1e-9:
        bad.append("monotonicity")
    summary = f"residual = {prof.residual[0]:.3e}, {prof.residual[1]:.3e} after {prof.iterations} sweeps"
    if bad:
        return Outcome(EXIT_FAIL, f"profile invariants violated ({', '.join(bad)}); {summary}", meta)
    return Outcome(EXIT_OK, summary, meta)


def cmd_certify(cfg: ExperimentConfig, out: Path, threads: int = 1) -> Outcome:
    cert = stage_certify(cfg, stage_wave(cfg, threads))
    cert.save(out / "certificate.json")
    if not cert.valid:
        return Outcome(EXIT_FAIL, "certificate invalid: " + "; ".join(cert.failures), cert.to_dict())
    return Outcome(EXIT_OK, f"certificate valid: c = {cert.c:g} > {cert.c_threshold:.6g}, "
                            f"mu_max = {cert.mu_max:.6g}", cert.to_dict())


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int = 1) -> Outcome:
    params = cfg.params()
    prof = stage_wave(cfg, threads)
    cert = stage_certify(cfg, prof)
    setup, up, lo = stage_envelope(cfg, prof, cert, threads)
    report = {"frame": setup.frame.kind, "dt": setup.dt, "T": up.final.t, "stride": setup.stride}
    for tag, traj in (("upper", up), ("lower", lo)):
        _series(traj).to_csv(out / f"series_{tag}.csv")
        report[tag] = {"bounds": traj.bounds, "q": _q_summary(traj)}
    comp = check_comparison(up, lo)
    report["comparison"] = comp.to_dict()
    ok = comp.passed
    if _box_applicable(setup.pair, setup.base, params):
        bnd = [check_boundedness(t, params).to_dict() for t in (up, lo)]
        report["boundedness"] = bnd
        ok = ok and all(b["passed"] for b in bnd)
    else:
        report["boundedness"] = "not applicable: initial data leave the equilibrium box"
    _dump(out / "simulation.json", report)
    return Outcome(EXIT_OK if ok else EXIT_FAIL, f"simulated to T = {up.final.t:.6g}; "
                   f"comparison {'holds' if comp.passed else 'FAILS'}", report)


def cmd_stability(cfg: ExperimentConfig, out: Path, threads: int = 1) -> Outcome:
    chk = stage_check(cfg)
    if not chk["passed"]:
        _dump(out / "verdict.json", {"status": "FAIL", "reason": "assumptions", "check": chk})
        return Outcome(EXIT_FAIL, "assumptions fail", chk)
    prof = stage_wave(cfg, threads)
    cert = stage_certify(cfg, prof)
    cert.save(out / "certificate.json")
    verdict = {"config_hash": cfg.digest(), "certificate_valid": cert.valid, "c": cert.c,
               "c_threshold": cert.c_threshold, "mu_max": cert.mu_max}
    if not cert.valid:
        verdict.update(status="SKIPPED", reason="certificate invalid", failures=cert.failures)
        _dump(out / "verdict.json", verdict)
        return Outcome(EXIT_FAIL, "SKIPPED: certificate invalid", verdict)
    mu = cert.mu
    setup, up, lo = stage_envelope(cfg, prof, cert, threads)
    verdict.update(mu=mu, T=up.final.t, dt=setup.dt, frame=setup.frame.kind)
    statuses = []
    for tag, traj in (("upper", up), ("lower", lo)):
        series = _series(traj)
        series.to_csv(out / f"series_{tag}.csv")
        v = verify_theorem(series, cert, mu, amplification=cfg.evolution.amplification)
        q = _q_summary(traj)
        verdict[tag] = {"theorem": v.to_dict(), "q": q}
        statuses.append(v.status if q["passed"] else "FAIL")
    verdict["comparison"] = check_comparison(up, lo).to_dict()
    status = "PASS" if all(s == "PASS" for s in statuses) and verdict["comparison"]["passed"] else "FAIL"
    verdict["status"] = status
    _dump(out / "verdict.json", verdict)
    return Outcome(EXIT_OK if status == "PASS" else EXIT_FAIL, f"stability verdict: {status}", verdict)


def cmd_bench(cfg: ExperimentConfig, out: Path, threads: int = 1) -> Outcome:
    params = cfg.params()
    kernel = cfg.kernel_spec()
    h = cfg.grid.h
    rng = np.random.default_rng(cfg.evolution.seed)
    rows = []
    for p in range(10, 16):
        n = 2 ** p
        grid = Grid(0.0, (n - 1) * h, n)
        u = rng.uniform(0.0, params.K, n)
        times = {}
        results = {}
        for method in ("direct", "fft"):
            conv = Convolver(kernel, grid, method, threads)
            best = math.inf
            for _ in range(3):
                t0 = time.perf_counter()
                results[method] = conv(u, 0.0, params.K)
                best = min(best, time.perf_counter() - t0)
            times[method] = best
        ini = InitialData.constant(grid, u, params.gamma1 / params.gamma2 * u, params.tau, 0.1)
        state = SimulationState.start(ini, params, Frame.lab(), 0.1, method="fft", threads=threads)
        t0 = time.perf_counter()
        rhs(state, params, kernel)
        rows.append({"n": n, "direct_s": times["direct"], "fft_s": times["fft"],
                     "rhs_s": time.perf_counter() - t0,
                     "max_diff": float(np.max(np.abs(results["direct"] - results["fft"])))})
    agree = all(r["max_diff"] <= 1e-12 for r in rows)
    report = {"threads": threads, "h": h, "rows": rows, "agree": agree}
    _dump(out / "bench.json", report)
    return Outcome(EXIT_OK if agree else EXIT_FAIL,
                   f"convolution paths {'agree' if agree else 'DISAGREE'} up to n = {rows[-1]['n']}", report)


COMMANDS = {"check": cmd_check, "wave": cmd_wave, "certify": cmd_certify,
            "simulate": cmd_simulate, "stability": cmd_stability, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quiescent-front", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=None, help="output directory (default from config)")
    ap.add_argument("--frame", choices=("lab", "moving"), default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        evo = {}
        if args.frame:
            evo["frame"] = args.frame
        if args.seed is not None:
            evo["seed"] = args.seed
        if evo:
            cfg = cfg.with_overrides(evolution=evo)
        out = args.out or Path(cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest.begin(args.command, cfg)
        (out / "config.resolved.ini").write_text(dump_config(cfg))
        outcome = COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuiescentFrontError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    manifest.extra = {"exit_code": outcome.code, "summary": outcome.summary, "threads": args.threads}
    for p in sorted(out.iterdir()):
        if p.is_file() and p.name != "manifest.json":
            manifest.add(p)
    manifest.finish(out)
    print(outcome.summary)
    return outcome.code


if __name__ == "__main__":
    sys.exit(main())

"""Method-of-lines integration of the delayed nonlocal Cauchy problem.

Fields live on a fixed :class:`Grid`, either in the lab frame ``x`` or in
the co-moving frame ``xi = x + c t``.  The delayed density ``u1(t - tau)`` is
read from a ring of past snapshots with linear interpolation in time.

A state may carry a *base* wave profile.  Its fields are then perturbations
``v = u - phi`` and the right-hand side is ``F(phi + v) - F(phi)`` assembled
without cancellation, so the wave itself is an exact steady state and tiny
far-field perturbations keep full relative precision.
"""
from __future__ import annotations

import bisect
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import HistoryUnderflow, NonFinite, StabilityBound
from .kernel import Convolver, Grid, KernelSpec
from .model import ModelParams
from .wavefront import WaveProfile

DELTA = 1e-8
_SNAP = 1e-9  # relative time tolerance for hitting a stored snapshot


@dataclass(frozen=True)
class Frame:
    kind: str = "lab"
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("lab", "moving"):
            raise ValueError(f"unknown frame {self.kind!r}")
        if self.kind == "moving" and not self.c > 0:
            raise ValueError("moving frame needs c > 0")

    @classmethod
    def lab(cls) -> "Frame":
        return cls("lab", 0.0)

    @classmethod
    def moving(cls, c: float) -> "Frame":
        return cls("moving", float(c))

    @property
    def advection(self) -> float:
        return self.c if self.kind == "moving" else 0.0


# -- initial data and history ---------------------------------------------------------


@dataclass
class InitialData:
    """u1 snapshots at ``times`` (ascending, ending at 0) and u2 at t = 0."""

    grid: Grid
    times: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u1 = np.atleast_2d(np.asarray(self.u1, dtype=float))
        self.u2 = np.asarray(self.u2, dtype=float)
        if self.u1.shape != (self.times.size, self.grid.n) or self.u2.shape != (self.grid.n,):
            raise ValueError("initial data shapes do not match grid/time nodes")
        if np.any(np.diff(self.times) <= 0) or abs(self.times[-1]) > 1e-12:
            raise ValueError("history times must increase strictly and end at 0")

    @classmethod
    def from_functions(cls, grid: Grid, tau: float, dt: float, u1: Callable, u2: Callable) -> "InitialData":
        """Sample ``u1(s, x)`` on uniform nodes of [-tau, 0] (spacing <= dt) and ``u2(x)``."""
        k = max(1, int(math.ceil(tau / dt - 1e-9))) if tau > 0 else 0
        times = np.linspace(-tau, 0.0, k + 1) if k else np.zeros(1)
        x = grid.x
        return cls(grid, times, np.array([u1(s, x) for s in times]), np.asarray(u2(x), dtype=float))

    @classmethod
    def constant(cls, grid: Grid, u1, u2, tau: float = 0.0, dt: float = 1.0) -> "InitialData":
        a = np.broadcast_to(np.asarray(u1, dtype=float), (grid.n,)).copy()
        b = np.broadcast_to(np.asarray(u2, dtype=float), (grid.n,)).copy()
        return cls.from_functions(grid, tau, dt, lambda s, x: a, lambda x: b)

    def bounds(self) -> tuple[float, float, float, float]:
        return float(self.u1.min()), float(self.u1.max()), float(self.u2.min()), float(self.u2.max())


class HistoryBuffer:
    """Ring of ``(t, u1)`` snapshots covering at least ``[t - span, t]``."""

    def __init__(self, span: float, capacity: int):
        self.span = span
        self.capacity = capacity
        self._t: deque[float] = deque(maxlen=capacity)
        self._u: deque[np.ndarray] = deque(maxlen=capacity)

    @classmethod
    def from_initial(cls, initial: InitialData, tau: float, dt: float) -> "HistoryBuffer":
        cap = max(int(math.ceil(tau / dt)) + 2, initial.times.size + 1) if tau > 0 else 2
        buf = cls(tau, cap)
        for t, u in zip(initial.times, initial.u1):
            buf.push(float(t), u)
        return buf

    def push(self, t: float, u1: np.ndarray) -> None:
        if self._t and t <= self._t[-1]:
            raise ValueError("history timestamps must increase")
        self._t.append(t)
        self._u.append(np.array(u1, dtype=float))

    @property
    def times(self) -> list[float]:
        return list(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def at(self, t: float) -> np.ndarray:
        """u1 at time ``t`` by linear interpolation between stored snapshots."""
        ts = self._t
        tol = _SNAP * max(1.0, abs(t))
        if t < ts[0] - tol or t > ts[-1] + tol:
            raise HistoryUnderflow(f"t = {t:.12g} outside stored history [{ts[0]:.12g}, {ts[-1]:.12g}]")
        j = bisect.bisect_left(ts, t - tol)
        if abs(ts[j] - t) <= tol:
            return self._u[j]
        a = (t - ts[j - 1]) / (ts[j] - ts[j - 1])
        return (1.0 - a) * self._u[j - 1] + a * self._u[j]

    def copy(self) -> "HistoryBuffer":
        out = HistoryBuffer(self.span, self.capacity)
        out._t = deque(self._t, maxlen=self.capacity)
        out._u = deque(self._u, maxlen=self.capacity)
        return out


@dataclass
class Base:
    """Wave fields on the simulation grid for perturbation-form runs."""

    phi1: np.ndarray
    phi2: np.ndarray
    phi1_lag: np.ndarray

    @classmethod
    def from_profile(cls, profile: WaveProfile, grid: Grid, tau: float) -> "Base":
        x = grid.x
        return cls(profile.at(x, 1), profile.at(x, 2), profile.at(x - profile.c * tau, 1))


@dataclass
class SimulationState:
    grid: Grid
    t: float
    u1: np.ndarray
    u2: np.ndarray
    history: HistoryBuffer
    frame: Frame = field(default_factory=Frame.lab)
    base: Base | None = None
    method: str = "fft"
    threads: int = 1
    steps: int = 0

    @classmethod
    def start(cls, initial: InitialData, params: ModelParams, frame: Frame, dt: float,
              base: Base | None = None, method: str = "fft", threads: int = 1) -> "SimulationState":
        hist = HistoryBuffer.from_initial(initial, params.tau, dt)
        return cls(initial.grid, 0.0, initial.u1[-1].copy(), initial.u2.copy(), hist, frame, base, method, threads)

    def clamps(self, params: ModelParams) -> tuple[float, float, float, float]:
        """(u1 left, u1 right, u2 left, u2 right) closure values outside the grid."""
        if self.base is not None:
            return 0.0, 0.0, 0.0, 0.0
        return 0.0, params.K, 0.0, params.u_plus[1]


# -- right-hand side ----------------------------------------------------------------------


@lru_cache(maxsize=32)
def _convolver(kernel: KernelSpec, grid: Grid, method: str, threads: int) -> Convolver:
    return Convolver(kernel, grid, method, threads)


def _shift(u: np.ndarray, grid: Grid, s: float, left: float, right: float) -> np.ndarray:
    """u(x - s) with constant extension; exact node shift when s/h is an integer."""
    if s == 0:
        return u
    k = s / grid.h
    kr = int(round(k))
    if abs(k - kr) <= 1e-9 * max(1.0, abs(k)):
        out = np.empty_like(u)
        if kr >= u.size:
            out[:] = left
        elif kr > 0:
            out[:kr] = left
            out[kr:] = u[:-kr]
        else:
            out[:] = u
        return out
    return np.interp(grid.x - s, grid.x, u, left=left, right=right)


def _upwind(u: np.ndarray, h: float, left: float) -> np.ndarray:
    d = np.empty_like(u)
    d[0] = u[0] - left
    d[1:] = u[1:] - u[:-1]
    return d / h


def _rhs_at(state: SimulationState, params: ModelParams, kernel: KernelSpec, t: float, u1, u2):
    grid = state.grid
    l1, r1, l2, _ = state.clamps(params)
    conv = _convolver(kernel, grid, state.method, state.threads)
    c = state.frame.advection
    lagged = delayed_field(state, params, t) if params.tau > 0 else u1
    r = params.reaction
    if state.base is None:
        react = r.f(u1, lagged)
    else:
        b = state.base
        react = r.increment(b.phi1, b.phi1_lag, u1, lagged)
    du1 = params.D * (conv(u1, l1, r1) - u1) + react - params.gamma1 * u1 + params.gamma2 * u2
    du2 = params.gamma1 * u1 - params.gamma2 * u2
    if c:
        du1 = du1 - c * _upwind(u1, grid.h, l1)
        du2 = du2 - c * _upwind(u2, grid.h, l2)
    return du1, du2


def delayed_field(state: SimulationState, params: ModelParams, t: float | None = None) -> np.ndarray:
    """The delayed mobile field exactly as the right-hand side sees it at time ``t``."""
    t = state.t if t is None else t
    if params.tau == 0:
        return state.u1
    l1, r1, _, _ = state.clamps(params)
    return _shift(state.history.at(t - params.tau), state.grid, state.frame.advection * params.tau, l1, r1)


def rhs(state: SimulationState, params: ModelParams, kernel: KernelSpec):
    """(du1/dt, du2/dt) for the current state."""
    return _rhs_at(state, params, kernel, state.t, state.u1, state.u2)


def dt_max(params: ModelParams, grid: Grid, frame: Frame) -> float:
    """Accuracy bound 0.9 / (L + c/h)."""
    return 0.9 / (params.rate_bound() + frame.advection / grid.h)


def dt_positive(params: ModelParams, grid: Grid, frame: Frame) -> float:
    """Step under which one explicit stage keeps the mobile density order preserving."""
    return 1.0 / (params.D + params.gamma1 + params.derivative_bounds[0] + frame.advection / grid.h)


def choose_dt(params: ModelParams, grid: Grid, frame: Frame, positivity: bool = False,
              target: float | None = None) -> float:
    """Largest admissible step that divides tau (so delayed stages hit stored snapshots)."""
    cap = min(dt_max(params, grid, frame), dt_positive(params, grid, frame) if positivity else math.inf)
    if target is not None:
        cap = min(cap, target)
    if params.tau > 0:
        return params.tau / math.ceil(params.tau / cap - 1e-12)
    return cap


def step(state: SimulationState, params: ModelParams, kernel: KernelSpec, dt: float) -> SimulationState:
    """One classical four-stage step; returns a new state sharing the (advanced) history."""
    bound = dt_max(params, state.grid, state.frame)
    if dt > bound * (1 + 1e-12):
        raise StabilityBound(f"dt = {dt:.6g} exceeds the stability bound {bound:.6g}")
    if params.tau > 0 and dt > params.tau * (1 + 1e-12):
        raise StabilityBound(f"dt = {dt:.6g} exceeds the delay tau = {params.tau:.6g}")
    t, u1, u2 = state.t, state.u1, state.u2
    f = lambda tt, a, b: _rhs_at(state, params, kernel, tt, a, b)  # noqa: E731
    k1 = f(t, u1, u2)
    k2 = f(t + 0.5 * dt, u1 + 0.5 * dt * k1[0], u2 + 0.5 * dt * k1[1])
    k3 = f(t + 0.5 * dt, u1 + 0.5 * dt * k2[0], u2 + 0.5 * dt * k2[1])
    k4 = f(t + dt, u1 + dt * k3[0], u2 + dt * k3[1])
    n1 = u1 + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    n2 = u2 + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if not (np.all(np.isfinite(n1)) and np.all(np.isfinite(n2))):
        raise NonFinite(f"non-finite values after step at t = {t:.6g}")
    steps = state.steps + 1
    t_new = t + dt
    state.history.push(t_new, n1)
    return replace(state, t=t_new, u1=n1, u2=n2, steps=steps)


# -- trajectories ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    samples: list[dict] = field(default_factory=list)
    snapshots: list[tuple[float, np.ndarray, np.ndarray]] = field(default_factory=list)
    bounds: dict = field(default_factory=lambda: {"u1_min": math.inf, "u1_max": -math.inf,
                                                  "u2_min": math.inf, "u2_max": -math.inf})
    final: SimulationState | None = None
    dt: float = math.nan

    def _record_bounds(self, state: SimulationState) -> None:
        # bounds always refer to the full densities, also for perturbation runs
        u1, u2 = state.u1, state.u2
        if state.base is not None:
            u1, u2 = u1 + state.base.phi1, u2 + state.base.phi2
        b = self.bounds
        b["u1_min"] = min(b["u1_min"], float(u1.min()))
        b["u1_max"] = max(b["u1_max"], float(u1.max()))
        b["u2_min"] = min(b["u2_min"], float(u2.min()))
        b["u2_max"] = max(b["u2_max"], float(u2.max()))


Observer = Callable[[SimulationState], dict]


def simulate(params: ModelParams, kernel: KernelSpec, initial: InitialData, frame: Frame, T: float,
             dt: float, observers: Sequence[Observer] = (), stride: int = 1, base: Base | None = None,
             method: str = "fft", threads: int = 1, keep_fields: bool = False) -> Trajectory:
    """Advance ``initial`` to time ``T`` (rounded to a whole number of steps).

    Observers run at t = 0, every ``stride`` steps and at the final time; each
    returns a dict that is stored in ``samples``.  Field bounds are tracked at
    every step.  With ``keep_fields`` the sampled fields are kept as well.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    state = SimulationState.start(initial, params, frame, dt, base, method, threads)
    traj = Trajectory(dt=dt)
    n_steps = int(round(T / dt))

    def sample(s: SimulationState):
        row = {"t": s.t}
        for obs in observers:
            row.update(obs(s))
        traj.times.append(s.t)
        traj.samples.append(row)
        if keep_fields:
            traj.snapshots.append((s.t, s.u1.copy(), s.u2.copy()))

    traj._record_bounds(state)
    sample(state)
    for k in range(1, n_steps + 1):
        state = step(state, params, kernel, dt)
        traj._record_bounds(state)
        if k % stride == 0 or k == n_steps:
            sample(state)
    traj.final = state
    return traj


def simulate_pair(params: ModelParams, kernel: KernelSpec, pair: tuple[InitialData, InitialData], frame: Frame,
                  T: float, dt: float, concurrent: bool = True, **kw) -> tuple[Trajectory, Trajectory]:
    """Run two independent trajectories (e.g. an envelope pair), concurrently if asked."""
    if not concurrent:
        return tuple(simulate(params, kernel, ini, frame, T, dt, **kw) for ini in pair)
    with ThreadPoolExecutor(2) as pool:
        futs = [pool.submit(simulate, params, kernel, ini, frame, T, dt, **kw) for ini in pair]
        return futs[0].result(), futs[1].result()


# -- envelopes and verdicts ---------------------------------------------------------------------


def envelope_split(initial: InitialData, profile: WaveProfile, frame: Frame | None = None,
                   ) -> tuple[InitialData, InitialData]:
    """Pointwise max/min of the data against the wave translated to each history time.

    In the lab frame the wave at time s is phi(x + c s); in the moving frame it
    is phi(xi) for every s.
    """
    frame = frame or Frame.lab()
    x = initial.grid.x
    shift = (lambda s: profile.c * s) if frame.kind == "lab" else (lambda s: 0.0)
    waves = np.array([profile.at(x + shift(s), 1) for s in initial.times])
    w2 = profile.at(x, 2)
    up = InitialData(initial.grid, initial.times, np.maximum(initial.u1, waves), np.maximum(initial.u2, w2))
    lo = InitialData(initial.grid, initial.times, np.minimum(initial.u1, waves), np.minimum(initial.u2, w2))
    return up, lo


def perturbation_envelopes(initial: InitialData) -> tuple[InitialData, InitialData]:
    """Envelope pair for data already expressed as a perturbation of the wave."""
    g = initial.grid
    return (InitialData(g, initial.times, np.maximum(initial.u1, 0.0), np.maximum(initial.u2, 0.0)),
            InitialData(g, initial.times, np.minimum(initial.u1, 0.0), np.minimum(initial.u2, 0.0)))


@dataclass
class Verdict:
    name: str
    passed: bool
    worst: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "worst": float(self.worst), **self.detail}


def check_boundedness(trajectory: Trajectory, params: ModelParams, delta: float = DELTA) -> Verdict:
    """Every recorded value stays in the equilibrium box widened by ``delta``."""
    b = trajectory.bounds
    k2 = params.u_plus[1]
    excursions = {
        "u1_below": -b["u1_min"], "u1_above": b["u1_max"] - params.K,
        "u2_below": -b["u2_min"], "u2_above": b["u2_max"] - k2,
    }
    worst_key = max(excursions, key=excursions.get)
    worst = excursions[worst_key]
    return Verdict("boundedness", worst <= delta, worst, {"where": worst_key, "bounds": dict(b)})


def check_comparison(traj_upper: Trajectory, traj_lower: Trajectory, delta: float = DELTA) -> Verdict:
    """lower <= upper + delta componentwise at every shared sample."""
    if not traj_upper.snapshots or len(traj_upper.snapshots) != len(traj_lower.snapshots):
        raise ValueError("comparison needs matching kept snapshots (keep_fields=True)")
    worst, where = -math.inf, None
    for (tu, a1, a2), (tl, b1, b2) in zip(traj_upper.snapshots, traj_lower.snapshots):
        if abs(tu - tl) > 1e-12 * max(1.0, abs(tu)):
            raise ValueError("trajectories are sampled at different times")
        gap = max(float(np.max(b1 - a1)), float(np.max(b2 - a2)))
        if gap > worst:
            worst, where = gap, tu
    return Verdict("comparison", worst <= delta, worst, {"time": where})

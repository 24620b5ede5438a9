"""Dispersal kernels, their moments, and the discrete nonlocal convolution.

Kernels are symmetric probability densities truncated to ``[-R, R]``.  On a
uniform grid with spacing ``h`` (``R`` an integer multiple of ``h``) the
convolution ``J*u`` becomes a fixed stencil of trapezoid weights that are
renormalized to unit sum.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .errors import MassDeficit, SymmetryViolation

FAMILIES = ("gaussian", "laplace", "tophat", "tabulated")

# default truncation radius in units of the family scale
_DEFAULT_RADIUS = {"gaussian": 8.0, "laplace": 25.0, "tophat": 1.0}

# intervals per half line for moment quadrature
_QUAD_INTERVALS = 16384


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("grid needs at least 3 nodes")
        if not self.x_min < self.x_max:
            raise ValueError("grid requires x_min < x_max")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n)

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, h: float) -> "Grid":
        n = int(round((x_max - x_min) / h)) + 1
        return cls(x_min, x_min + (n - 1) * h, n)

    def shifted(self, s: float) -> "Grid":
        """Relabel coordinates so that old abscissa ``s`` becomes ``0``."""
        return Grid(self.x_min - s, self.x_max - s, self.n)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.x_min, self.x_max, (self.n - 1) * factor + 1)

    def locate(self, x: float) -> int:
        return int(round((x - self.x_min) / self.h))


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric dispersal density truncated at ``radius``.

    ``scale`` is sigma for gaussian, b for laplace and the half width for
    tophat.  Tabulated kernels carry their samples in ``table`` and are
    evaluated by linear interpolation.
    """

    family: str
    scale: float = 1.0
    radius: float | None = None
    tol: float = 1e-10
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "tabulated":
            if self.table is None:
                raise ValueError("tabulated kernel needs a table")
            y, v = (np.asarray(a, dtype=float) for a in self.table)
            if y.shape != v.shape or y.ndim != 1 or y.size < 3:
                raise ValueError("tabulated kernel needs matching 1-D abscissae/values")
            if np.any(np.diff(y) <= 0):
                raise ValueError("tabulated abscissae must be strictly increasing")
            if np.any(v < 0):
                raise ValueError("kernel values must be nonnegative")
            if self.radius is None:
                object.__setattr__(self, "radius", float(min(-y[0], y[-1])))
            mirrored = np.interp(-y, y, v, left=0.0, right=0.0)
            inside = np.abs(y) <= self.radius
            worst = float(np.max(np.abs(mirrored - v)[inside]))
            if worst > 1e-12:
                raise SymmetryViolation(f"tabulated kernel asymmetric by {worst:.3e}")
        else:
            if self.scale <= 0:
                raise ValueError("kernel scale must be positive")
            if self.radius is None:
                object.__setattr__(self, "radius", _DEFAULT_RADIUS[self.family] * self.scale)
        if self.radius <= 0:
            raise ValueError("truncation radius must be positive")

    def density(self, y) -> np.ndarray:
        """Untruncated-shape density evaluated at ``y`` (zero beyond ``radius``)."""
        y = np.asarray(y, dtype=float)
        s = self.scale
        if self.family == "gaussian":
            val = np.exp(-0.5 * (y / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        elif self.family == "laplace":
            val = np.exp(-np.abs(y) / s) / (2.0 * s)
        elif self.family == "tophat":
            val = np.where(np.abs(y) <= s * (1 + 1e-12), 0.5 / s, 0.0)
        else:
            ty, tv = self.table
            val = np.interp(y, ty, tv, left=0.0, right=0.0)
        return np.where(np.abs(y) <= self.radius * (1 + 1e-12), val, 0.0)

    # -- quadrature ---------------------------------------------------------
    def _half_integral(self, g, lo: float, hi: float) -> float:
        y = np.linspace(lo, hi, _QUAD_INTERVALS + 1)
        return float(simpson(g(y) * self.density(y), x=y))

    @cached_property
    def _raw_mass(self) -> float:
        one = np.ones_like
        return self._half_integral(one, -self.radius, 0.0) + self._half_integral(one, 0.0, self.radius)

    @property
    def ref_mass(self) -> float:
        return self._raw_mass

    # -- grid stencil ---------------------------------------------------------
    def stencil_halfwidth(self, h: float) -> int:
        m = self.radius / h
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise ValueError(f"truncation radius {self.radius} is not a multiple of h={h}")
        return int(round(m))

    def weights(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        """Offsets ``y_k`` and renormalized trapezoid weights on spacing ``h``."""
        m = self.stencil_halfwidth(h)
        y = h * np.arange(-m, m + 1)
        w = h * self.density(y)
        w[0] *= 0.5
        w[-1] *= 0.5
        total = w.sum()
        if total <= 0:
            raise MassDeficit("kernel has no mass on this grid")
        return y, w / total


def gaussian(sigma: float = 1.0, radius: float | None = None, tol: float = 1e-10) -> KernelSpec:
    return KernelSpec("gaussian", sigma, radius, tol)


def laplace(b: float = 1.0, radius: float | None = None, tol: float = 1e-10) -> KernelSpec:
    return KernelSpec("laplace", b, radius, tol)


def tophat(halfwidth: float = 1.0, radius: float | None = None, tol: float = 1e-10) -> KernelSpec:
    return KernelSpec("tophat", halfwidth, radius, tol)


def tabulated(abscissae, values, radius: float | None = None, tol: float = 1e-10) -> KernelSpec:
    table = (tuple(float(a) for a in abscissae), tuple(float(v) for v in values))
    return KernelSpec("tabulated", 1.0, radius, tol, table)


def load_tabulated(path, radius: float | None = None, tol: float = 1e-10) -> KernelSpec:
    """Read a two-column (abscissa, value) whitespace table with '#' comments."""
    data = np.loadtxt(Path(path), comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, found {data.shape[1]}")
    return tabulated(data[:, 0], data[:, 1], radius=radius, tol=tol)


def mass(kernel: KernelSpec) -> float:
    """Quadrature of J over [-R, R]; MassDeficit when it misses 1 by more than tol."""
    total = kernel.ref_mass
    if abs(total - 1.0) > kernel.tol:
        raise MassDeficit(
            f"kernel mass {total:.12g} differs from 1 by {abs(total - 1.0):.3e} "
            f"(radius {kernel.radius} too small?)"
        )
    return total


def exp_moment(kernel: KernelSpec, lam: float) -> float:
    """Normalized integral of exp(-lam*y) J(y) over [-R, R]."""
    if lam < 0:
        raise ValueError("exponent must be nonnegative")
    total = mass(kernel)
    g = lambda y: np.exp(-lam * y)  # noqa: E731
    return (kernel._half_integral(g, -kernel.radius, 0.0) + kernel._half_integral(g, 0.0, kernel.radius)) / total


def half_line_moment(kernel: KernelSpec, beta: float) -> float:
    """Normalized integral of exp(-beta*y) J(y) over [-R, 0]."""
    if beta < 0:
        raise ValueError("exponent must be nonnegative")
    total = mass(kernel)
    return kernel._half_integral(lambda y: np.exp(-beta * y), -kernel.radius, 0.0) / total


MIN_BLOCK = 2048  # smallest output block worth a worker thread


class Convolver:
    """Discrete ``J*u`` on a fixed grid with constant extension beyond the ends.

    ``method`` is ``"direct"`` (tap-by-tap stencil sum, optionally split over
    ``threads`` contiguous output blocks) or ``"fft"``.  Both evaluate
    ``u_ref + sum_k W_k (u(x_i - y_k) - u_ref)`` so constant fields are
    reproduced exactly; every node accumulates taps in the same order, so the
    direct result does not depend on ``threads``.
    """

    def __init__(self, kernel: KernelSpec, grid: Grid, method: str = "fft", threads: int = 1):
        if method not in ("direct", "fft"):
            raise ValueError(f"unknown convolution method {method!r}")
        self.kernel = kernel
        self.grid = grid
        self.method = method
        self.threads = max(1, int(threads))
        self.offsets, self.w = kernel.weights(grid.h)
        self.m = (self.w.size - 1) // 2
        n_ext = grid.n + 2 * self.m
        self._nfft = 1 << int(math.ceil(math.log2(n_ext + self.w.size - 1)))
        self._w_hat = np.fft.rfft(self.w, self._nfft)
        self._pool = None

    def extend(self, u: np.ndarray, left, right) -> np.ndarray:
        """Pad ``u`` with ``m`` ghost values per side (scalars or length-``m`` arrays)."""
        m = self.m
        out = np.empty(u.size + 2 * m)
        out[:m] = left
        out[m : m + u.size] = u
        out[m + u.size :] = right
        return out

    def __call__(self, u, left, right, method: str | None = None) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.grid.n,):
            raise ValueError(f"field has shape {u.shape}, grid has {self.grid.n} nodes")
        method = method or self.method
        ext = self.extend(u, left, right)
        if method == "direct":
            return self._direct(ext, u)
        return self._fft(ext, u)

    def _direct_block(self, ext, u, lo, hi):
        # kernel is symmetric, so tap k reads u(x_i + y_k) == u(x_i - y_{-k})
        acc = np.zeros(hi - lo)
        centre = u[lo:hi]
        for k in range(self.w.size):
            acc += self.w[k] * (ext[lo + k : hi + k] - centre)
        return centre + acc

    def _direct(self, ext, u):
        n = u.size
        workers = min(self.threads, n // MIN_BLOCK)
        if workers <= 1:
            return self._direct_block(ext, u, 0, n)
        if self._pool is None:
            self._pool = ThreadPoolExecutor(self.threads)
        edges = np.linspace(0, n, workers + 1).astype(int)
        parts = self._pool.map(lambda ab: self._direct_block(ext, u, ab[0], ab[1]), zip(edges[:-1], edges[1:]))
        return np.concatenate(list(parts))

    def _fft(self, ext, u):
        ref = ext[0]
        shifted = ext - ref
        full = np.fft.irfft(np.fft.rfft(shifted, self._nfft) * self._w_hat, self._nfft)
        return ref + full[2 * self.m : 2 * self.m + u.size]


def convolve(kernel: KernelSpec, u, grid: Grid, clamp_left: float, clamp_right: float,
             method: str = "fft", threads: int = 1) -> np.ndarray:
    return Convolver(kernel, grid, method, threads)(u, clamp_left, clamp_right)

"""Time grids, Wiener paths, the Brownian motion xi on G, and Cameron-Martin paths.

Every stochastic integral is a left-point (Ito) sum on a uniform grid.
Path arrays carry the time axis second to last, so a batch of S paths has
B.shape == (S, n+1, d) and B0.shape == (S, n+1, N).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .group import ConfigurationError, GroupPoint, OmegaForm, multiply, omega_apply


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError(f"horizon T must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"number of steps must be a positive integer, got {self.n}")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dt

    def index_of(self, t: float) -> int:
        """Grid index of time t; t must lie on the grid."""
        j = int(round(t / self.dt))
        if not 0 <= j <= self.n or abs(j * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise ConfigurationError(f"time {t} is not a point of the grid (T={self.T}, n={self.n})")
        return j

    def coarsened(self, factor: int) -> "TimeGrid":
        if self.n % factor:
            raise ConfigurationError(f"cannot coarsen {self.n} steps by {factor}")
        return TimeGrid(self.T, self.n // factor)


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Driving noise (B, B0) sampled on the grid; B[..., 0, :] = 0 and B0[..., 0, :] = 0."""

    grid: TimeGrid
    B: np.ndarray
    B0: np.ndarray

    def __post_init__(self):
        n1 = self.grid.n + 1
        if self.B.shape[-2] != n1 or self.B0.shape[-2] != n1:
            raise ConfigurationError("Wiener path length does not match the grid")
        if self.B.shape[:-2] != self.B0.shape[:-2]:
            raise ConfigurationError("B and B0 batch shapes differ")

    @property
    def d(self) -> int:
        return self.B.shape[-1]

    @property
    def N(self) -> int:
        return self.B0.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.B.shape[:-2]

    @cached_property
    def dB(self) -> np.ndarray:
        return np.diff(self.B, axis=-2)

    @cached_property
    def dB0(self) -> np.ndarray:
        return np.diff(self.B0, axis=-2)

    def coarsen(self, factor: int) -> "WienerPath":
        """Subsample every factor-th grid point; the coarse path is the same Brownian motion."""
        grid = self.grid.coarsened(factor)
        return WienerPath(grid, np.ascontiguousarray(self.B[..., ::factor, :]),
                          np.ascontiguousarray(self.B0[..., ::factor, :]))

    def check_omega(self, omega: OmegaForm) -> None:
        if (self.d, self.N) != (omega.d, omega.N):
            raise ConfigurationError(
                f"Wiener path is R^{self.d} x R^{self.N} but omega is for R^{omega.d} x R^{omega.N}")


def sample_wiener(grid: TimeGrid, d: int, N: int, seed, size: int | None = None) -> WienerPath:
    """Brownian increments with covariance dt * I on R^{d+N}.

    `seed` is anything numpy accepts as entropy (an int or a sequence of ints);
    the same seed always yields the same path(s).
    """
    rng = np.random.default_rng(seed)
    shape = (grid.n, d + N) if size is None else (size, grid.n, d + N)
    inc = rng.standard_normal(shape) * np.sqrt(grid.dt)
    path = np.zeros(shape[:-2] + (grid.n + 1, d + N))
    np.cumsum(inc, axis=-2, out=path[..., 1:, :])
    return WienerPath(grid, path[..., :d], path[..., d:])


@dataclass(frozen=True, eq=False)
class GroupPath:
    """A G-valued path on the grid (w, c) with w.shape == (..., n+1, d)."""

    w: np.ndarray
    c: np.ndarray

    def at(self, j: int) -> GroupPoint:
        return GroupPoint(self.w[..., j, :], self.c[..., j, :])

    def at_end(self) -> GroupPoint:
        return self.at(-1)

    def as_point(self) -> GroupPoint:
        return GroupPoint(self.w, self.c)


@dataclass(frozen=True, eq=False)
class CMPath:
    """Piecewise-linear Cameron-Martin path h = (A, a) given by per-interval derivatives.

    dA has shape (n, d) and da has shape (n, N); A(0) = 0, a(0) = 0.
    """

    grid: TimeGrid
    dA: np.ndarray
    da: np.ndarray

    def __post_init__(self):
        dA = np.asarray(self.dA, dtype=float)
        da = np.asarray(self.da, dtype=float)
        if dA.ndim != 2 or da.ndim != 2 or dA.shape[0] != self.grid.n or da.shape[0] != self.grid.n:
            raise ConfigurationError(
                f"CM path derivatives must have shape (n, d) and (n, N) with n={self.grid.n}")
        object.__setattr__(self, "dA", dA)
        object.__setattr__(self, "da", da)

    @property
    def d(self) -> int:
        return self.dA.shape[1]

    @property
    def N(self) -> int:
        return self.da.shape[1]

    @property
    def A(self) -> np.ndarray:
        out = np.zeros((self.grid.n + 1, self.d))
        np.cumsum(self.dA * self.grid.dt, axis=0, out=out[1:])
        return out

    @property
    def a(self) -> np.ndarray:
        out = np.zeros((self.grid.n + 1, self.N))
        np.cumsum(self.da * self.grid.dt, axis=0, out=out[1:])
        return out

    def values(self) -> GroupPath:
        return GroupPath(self.A, self.a)

    def scaled(self, eps: float) -> "CMPath":
        return CMPath(self.grid, eps * self.dA, eps * self.da)

    def __add__(self, other: "CMPath") -> "CMPath":
        _same_grid(self.grid, other.grid)
        return CMPath(self.grid, self.dA + other.dA, self.da + other.da)

    def is_zero(self) -> bool:
        return not (np.any(self.dA) or np.any(self.da))

    def energy(self) -> float:
        return cm_inner(self, self)

    def coarsen(self, factor: int) -> "CMPath":
        """Average derivatives over blocks of `factor` intervals; endpoint values on the coarse grid are kept."""
        grid = self.grid.coarsened(factor)
        dA = self.dA.reshape(grid.n, factor, self.d).mean(axis=1)
        da = self.da.reshape(grid.n, factor, self.N).mean(axis=1)
        return CMPath(grid, dA, da)

    @classmethod
    def zero(cls, grid: TimeGrid, d: int, N: int) -> "CMPath":
        return cls(grid, np.zeros((grid.n, d)), np.zeros((grid.n, N)))

    @classmethod
    def linear_lift(cls, h: GroupPoint, grid: TimeGrid) -> "CMPath":
        """h(t) = (t/T) h: constant derivative h / T."""
        dA = np.tile(np.asarray(h.w, dtype=float) / grid.T, (grid.n, 1))
        da = np.tile(np.asarray(h.c, dtype=float) / grid.T, (grid.n, 1))
        return cls(grid, dA, da)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "CMPath":
        """Piecewise-linear interpolation of t -> (A(t), a(t)) at the grid points; fn(0) must vanish."""
        A, a = fn(grid.times)
        A = np.asarray(A, dtype=float)
        a = np.asarray(a, dtype=float)
        return cls(grid, np.diff(A, axis=0) / grid.dt, np.diff(a, axis=0) / grid.dt)

    @classmethod
    def from_knots(cls, grid: TimeGrid, knot_times: Sequence[float], dA: Sequence, da: Sequence) -> "CMPath":
        """Piecewise-constant derivative: dA[r] on [knot_times[r], knot_times[r+1]).

        knot_times starts at 0; the last piece runs to T.
        """
        knots = np.asarray(knot_times, dtype=float)
        dA = np.atleast_2d(np.asarray(dA, dtype=float))
        da = np.atleast_2d(np.asarray(da, dtype=float))
        if len(knots) != len(dA) or len(knots) != len(da) or knots[0] != 0.0:
            raise ConfigurationError("knot lists must align and start at t=0")
        piece = np.searchsorted(knots, grid.times[:-1], side="right") - 1
        return cls(grid, dA[piece], da[piece])


def _same_grid(g1: TimeGrid, g2: TimeGrid) -> None:
    if g1 != g2:
        raise ConfigurationError(f"grid mismatch: {g1} vs {g2}")


def _check_cm(h: CMPath, W: WienerPath, omega: OmegaForm | None = None) -> None:
    _same_grid(h.grid, W.grid)
    if (h.d, h.N) != (W.d, W.N):
        raise ConfigurationError("CM path and Wiener path dimensions differ")
    if omega is not None:
        W.check_omega(omega)


def levy_integral(W: WienerPath, omega: OmegaForm) -> np.ndarray:
    """Cumulative left-point sums S[j] = sum_{k<j} omega(B[k], B[k+1] - B[k])."""
    W.check_omega(omega)
    incr = omega_apply(W.B[..., :-1, :], W.dB, omega)
    out = np.zeros(W.batch_shape + (W.grid.n + 1, omega.N))
    np.cumsum(incr, axis=-2, out=out[..., 1:, :])
    return out


def build_xi(W: WienerPath, omega: OmegaForm) -> GroupPath:
    """xi_t = (B_t, B0_t + 1/2 int_0^t omega(B, dB))."""
    return GroupPath(W.B, W.B0 + 0.5 * levy_integral(W, omega))


def translate_path(h: CMPath, xi: GroupPath, eps: float, omega: OmegaForm) -> GroupPath:
    """Pointwise left translation (eps h(t_j)) . xi[j]."""
    if h.grid.n + 1 != xi.w.shape[-2]:
        raise ConfigurationError("CM path and group path live on different grids")
    g = multiply(GroupPoint(eps * h.A, eps * h.a), xi.as_point(), omega)
    return GroupPath(g.w, g.c)


def u_A(h: CMPath, W: WienerPath, eps: float, omega: OmegaForm) -> np.ndarray:
    """Cumulative left-point sums of 1/2 omega(eps A(t_k) - 2 B[k], eps dA[k]) dt."""
    _check_cm(h, W, omega)
    integrand = 0.5 * omega_apply(eps * h.A[:-1] - 2.0 * W.B[..., :-1, :], eps * h.dA, omega)
    out = np.zeros(W.batch_shape + (W.grid.n + 1, omega.N))
    np.cumsum(integrand * W.grid.dt, axis=-2, out=out[..., 1:, :])
    return out


def shift_noise(W: WienerPath, h: CMPath, eps: float, omega: OmegaForm) -> WienerPath:
    """The translated noise (B - eps A, B0 - eps a - u_{eps A})."""
    u = u_A(h, W, eps, omega)
    return WienerPath(W.grid, W.B - eps * h.A, W.B0 - eps * h.a - u)


def cm_inner(h1: CMPath, h2: CMPath) -> float:
    _same_grid(h1.grid, h2.grid)
    return float((np.sum(h1.dA * h2.dA) + np.sum(h1.da * h2.da)) * h1.grid.dt)


def dump_csv(path: str | Path, W: WienerPath, omega: OmegaForm) -> None:
    """Write one path as CSV: t, B_1..B_d, B0_1..B0_N, xi_c_1..xi_c_N."""
    if W.batch_shape:
        raise ConfigurationError("dump_csv writes a single path; index the batch first")
    xi = build_xi(W, omega)
    header = (["t"] + [f"B{i + 1}" for i in range(W.d)] + [f"B0_{i + 1}" for i in range(W.N)]
              + [f"xi_c{i + 1}" for i in range(W.N)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j, t in enumerate(W.grid.times):
            row = [t, *W.B[j], *W.B0[j], *xi.c[j]]
            writer.writerow([f"{float(x):.17g}" for x in row])

"""Arithmetic on finite-dimensional Heisenberg-like groups G = R^d x R^N.

The group law is

    (w1, c1) . (w2, c2) = (w1 + w2, c1 + c2 + 1/2 omega(w1, w2))

for a skew bilinear map omega: R^d x R^d -> R^N, stored as N skew d x d
matrices.  All functions broadcast over leading axes, so a batch of points
is an array of shape (..., d) for w and (..., N) for c.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SKEW_TOL = 1e-12


class ConfigurationError(ValueError):
    """Inconsistent dimensions or malformed configuration."""


@dataclass(frozen=True, eq=False)
class OmegaForm:
    """Skew bilinear form omega(x, y)_k = x^T mats[k] y."""

    mats: np.ndarray

    def __post_init__(self):
        m = np.array(self.mats, dtype=float)
        if m.ndim != 3 or m.shape[1] != m.shape[2] or m.shape[0] < 1 or m.shape[1] < 1:
            raise ConfigurationError(f"omega must have shape (N, d, d), got {m.shape}")
        skew = 0.5 * (m - np.swapaxes(m, 1, 2))
        residual = np.max(np.abs(m - skew))
        if residual > SKEW_TOL:
            raise ConfigurationError(f"omega matrices are not skew-symmetric (residual {residual:.3g})")
        skew.setflags(write=False)
        object.__setattr__(self, "mats", skew)

    @property
    def d(self) -> int:
        return self.mats.shape[1]

    @property
    def N(self) -> int:
        return self.mats.shape[0]

    @classmethod
    def standard(cls, d: int, N: int = 1) -> "OmegaForm":
        """Block symplectic form; center coordinate k pairs w-coordinates (2j, 2j+1) for j = k mod (d//2).

        With d=2, N=1 this is the classical three-dimensional Heisenberg group.
        """
        if d < 2:
            raise ConfigurationError("standard omega needs d >= 2")
        mats = np.zeros((N, d, d))
        npairs = d // 2
        for k in range(N):
            if N <= npairs:
                # spread the pairs over the center coordinates
                pairs = range(k, npairs, N)
            else:
                pairs = [k % npairs]
            for j in pairs:
                mats[k, 2 * j, 2 * j + 1] = 1.0
                mats[k, 2 * j + 1, 2 * j] = -1.0
        return cls(mats)

    @classmethod
    def random(cls, d: int, N: int, seed: int = 0, scale: float = 1.0) -> "OmegaForm":
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((N, d, d))
        return cls(scale * 0.5 * (g - np.swapaxes(g, 1, 2)))

    @classmethod
    def zero(cls, d: int, N: int) -> "OmegaForm":
        return cls(np.zeros((N, d, d)))

    def scaled(self, s: float) -> "OmegaForm":
        return OmegaForm(s * self.mats)

    def is_zero(self) -> bool:
        return not np.any(self.mats)

    def to_list(self) -> list[list[list[float]]]:
        return self.mats.tolist()

    @classmethod
    def from_list(cls, data: Sequence) -> "OmegaForm":
        return cls(np.asarray(data, dtype=float))

    def norm_estimate(self, iters: int = 200, seed: int = 0) -> float:
        """Diagnostic estimate of the operator norm of x -> (Omega^k x)_k stacked.

        Power iteration on sum_k Omega^k^T Omega^k.  Not used by any algorithm.
        """
        gram = np.einsum("kji,kjl->il", self.mats, self.mats)
        x = np.random.default_rng(seed).standard_normal(self.d)
        lam = 0.0
        for _ in range(iters):
            y = gram @ x
            ny = np.linalg.norm(y)
            if ny == 0.0:
                return 0.0
            x = y / ny
            lam = float(x @ gram @ x)
        return float(np.sqrt(max(lam, 0.0)))


def _check_w(x: np.ndarray, omega: OmegaForm, name: str = "w") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (omega.d,):
        raise ConfigurationError(f"{name} has trailing dimension {x.shape[-1:]} but omega acts on R^{omega.d}")
    return x


def _check_c(c: np.ndarray, omega: OmegaForm, name: str = "c") -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape[-1:] != (omega.N,):
        raise ConfigurationError(f"{name} has trailing dimension {c.shape[-1:]} but center is R^{omega.N}")
    return c


def omega_apply(x, y, omega: OmegaForm) -> np.ndarray:
    """omega(x, y), broadcasting over leading axes."""
    x = _check_w(x, omega, "x")
    y = _check_w(y, omega, "y")
    return np.einsum("...i,kij,...j->...k", x, omega.mats, y, optimize=True)


@dataclass(frozen=True, eq=False)
class GroupPoint:
    """A point (w, c) of G, or a batch of points with matching leading axes.

    Also used as a Lie-algebra element (A, a).
    """

    w: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))

    @classmethod
    def identity(cls, d: int, N: int) -> "GroupPoint":
        return cls(np.zeros(d), np.zeros(N))

    def __neg__(self) -> "GroupPoint":
        return GroupPoint(-self.w, -self.c)

    def scaled(self, s: float) -> "GroupPoint":
        return GroupPoint(s * self.w, s * self.c)

    def allclose(self, other: "GroupPoint", rtol: float = 1e-12, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.w, other.w, rtol=rtol, atol=atol)
                    and np.allclose(self.c, other.c, rtol=rtol, atol=atol))

    def norm(self) -> np.ndarray:
        """||w|| + ||c||, the norm used for polynomial bounds."""
        return np.linalg.norm(self.w, axis=-1) + np.linalg.norm(self.c, axis=-1)


def _check_point(g: GroupPoint, omega: OmegaForm) -> None:
    _check_w(g.w, omega)
    _check_c(g.c, omega)


def multiply(g1: GroupPoint, g2: GroupPoint, omega: OmegaForm) -> GroupPoint:
    _check_point(g1, omega)
    _check_point(g2, omega)
    return GroupPoint(g1.w + g2.w, g1.c + g2.c + 0.5 * omega_apply(g1.w, g2.w, omega))


def inverse(g: GroupPoint) -> GroupPoint:
    return -g


def bracket(h1: GroupPoint, h2: GroupPoint, omega: OmegaForm) -> GroupPoint:
    _check_point(h1, omega)
    _check_point(h2, omega)
    c = omega_apply(h1.w, h2.w, omega)
    return GroupPoint(np.zeros(np.broadcast_shapes(h1.w.shape, h2.w.shape)), c)


def right_vf_coeff(h: GroupPoint, g: GroupPoint, omega: OmegaForm) -> GroupPoint:
    """Tangent of eps -> (eps h) . g at eps = 0."""
    _check_point(h, omega)
    _check_point(g, omega)
    return GroupPoint(np.broadcast_to(h.w, np.broadcast_shapes(h.w.shape, g.w.shape)).copy(),
                      h.c + 0.5 * omega_apply(h.w, g.w, omega))


def left_vf_coeff(h: GroupPoint, g: GroupPoint, omega: OmegaForm) -> GroupPoint:
    """Tangent of eps -> g . (eps h) at eps = 0."""
    _check_point(h, omega)
    _check_point(g, omega)
    return GroupPoint(np.broadcast_to(h.w, np.broadcast_shapes(h.w.shape, g.w.shape)).copy(),
                      h.c + 0.5 * omega_apply(g.w, h.w, omega))


def product_omega(omega: OmegaForm, k: int) -> OmegaForm:
    """The form of G^k = G x ... x G, itself Heisenberg-like with block-diagonal omega.

    Cylinder functions of k path times are functions on G^k.
    """
    d, N = omega.d, omega.N
    mats = np.zeros((k * N, k * d, k * d))
    for r in range(k):
        mats[r * N:(r + 1) * N, r * d:(r + 1) * d, r * d:(r + 1) * d] = omega.mats
    return OmegaForm(mats)

"""The Girsanov density J_h and its quartic expansion in eps.

For h = (A, a) and the noise (B, B0),

    log J_h = sum <A', dB> + <a' + 1/2 omega(A - 2B, A'), dB0>
              - 1/2 sum (|A'|^2 + |a' + 1/2 omega(A - 2B, A')|^2) dt

with left-point sums.  Replacing h by eps h makes log J a quartic polynomial
in eps with coefficients alpha_1..alpha_4 (alpha_4 <= 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .group import OmegaForm, omega_apply
from .paths import CMPath, WienerPath, _check_cm


def log_j_h(h: CMPath, W: WienerPath, omega: OmegaForm) -> np.ndarray:
    _check_cm(h, W, omega)
    dt = W.grid.dt
    v = h.da + 0.5 * omega_apply(h.A[:-1] - 2.0 * W.B[..., :-1, :], h.dA, omega)
    stoch = np.einsum("ki,...ki->...", h.dA, W.dB) + np.einsum("...ki,...ki->...", v, W.dB0)
    energy = np.sum(h.dA ** 2) + np.einsum("...ki,...ki->...", v, v)
    return stoch - 0.5 * energy * dt


def j_h(h: CMPath, W: WienerPath, omega: OmegaForm) -> np.ndarray:
    """Radon-Nikodym weight for left translation of xi by h (strictly positive)."""
    return np.exp(log_j_h(h, W, omega))


@dataclass(frozen=True, eq=False)
class AlphaCoeffs:
    alpha1: np.ndarray
    alpha2: np.ndarray
    alpha3: np.ndarray
    alpha4: np.ndarray

    def log_j(self, eps: float) -> np.ndarray:
        return eps * (self.alpha1 + eps * (self.alpha2 + eps * (self.alpha3 + eps * self.alpha4)))

    def dlog_j(self, eps: float) -> np.ndarray:
        return self.alpha1 + eps * (2 * self.alpha2 + eps * (3 * self.alpha3 + 4 * eps * self.alpha4))


def alpha_coeffs(h: CMPath, W: WienerPath, omega: OmegaForm) -> AlphaCoeffs:
    _check_cm(h, W, omega)
    dt = W.grid.dt
    x = h.da - omega_apply(W.B[..., :-1, :], h.dA, omega)  # a' - omega(B, A')
    q = omega_apply(h.A[:-1], h.dA, omega)  # omega(A, A'), deterministic
    dB0 = W.dB0
    a1 = np.einsum("ki,...ki->...", h.dA, W.dB) + np.einsum("...ki,...ki->...", x, dB0)
    a2 = (-0.5 * np.sum(h.dA ** 2) * dt
          + 0.5 * np.einsum("ki,...ki->...", q, dB0)
          - 0.5 * np.einsum("...ki,...ki->...", x, x) * dt)
    a3 = -0.5 * np.einsum("...ki,ki->...", x, q) * dt
    a4 = np.broadcast_to(-0.125 * np.sum(q ** 2) * dt, np.shape(a1)).copy()
    return AlphaCoeffs(a1, a2, a3, a4)


def dj_deps(h: CMPath, W: WienerPath, omega: OmegaForm, eps: float) -> np.ndarray:
    """d/d eps of J_{eps h}, i.e. J_{eps h} (alpha1 + 2 eps alpha2 + 3 eps^2 alpha3 + 4 eps^3 alpha4)."""
    al = alpha_coeffs(h, W, omega)
    return np.exp(al.log_j(eps)) * al.dlog_j(eps)

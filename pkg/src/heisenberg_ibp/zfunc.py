"""The Z functionals of orders 1 to 4 and their behaviour under noise translation.

Write X_i = a_i' - omega(B, A_i') and P(j, i) = omega(A_j, A_i').  Then

    Z_i    = sum <A_i', dB> + <X_i, dB0>
    Z_ij   = sum <P(j,i), dB0> - sum (<A_i', A_j'> + <X_i, X_j>) dt
    Z_ijk  = -sum (<X_i, P(k,j)> + <X_j, P(k,i)> + <X_k, P(j,i)>) dt
    Z_ijkl = -sum (<P(l,i), P(k,j)> + <P(k,i), P(l,j)> + <P(j,i), P(l,k)>) dt

Each order is the eps-derivative at 0 of the previous one evaluated on the
translated noise (B - eps A, B0 - eps a - u_{eps A}).  Z_ijk can also be
evaluated with the "printed" sign a' + omega(B, A'); see `arbitrate_z3_sign`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .densities import j_h
from .group import ConfigurationError, OmegaForm, omega_apply
from .paths import CMPath, WienerPath, _check_cm, shift_noise

Z3_LEMMA = "lemma"
Z3_PRINTED = "printed"
# Outcome of `arbitrate_z3_sign`: only the a' - omega(B, A') form satisfies the
# derivative identity, so it is the default.
Z3_VARIANT = Z3_LEMMA


@dataclass(eq=False)
class ZContext:
    """Evaluates Z_gamma for index blocks of a CM-path roster on one batch of noise.

    Values are memoized per block, so a partition sum touches each block once.
    """

    roster: Sequence[CMPath]
    W: WienerPath
    omega: OmegaForm
    z3_variant: str = Z3_VARIANT
    _x: dict = field(default_factory=dict, repr=False)
    _y: dict = field(default_factory=dict, repr=False)
    _p: dict = field(default_factory=dict, repr=False)
    _z: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for h in self.roster:
            _check_cm(h, self.W, self.omega)
        if self.z3_variant not in (Z3_LEMMA, Z3_PRINTED):
            raise ConfigurationError(f"unknown Z_ijk variant {self.z3_variant!r}")

    def _X(self, i: int) -> np.ndarray:
        if i not in self._x:
            h = self.roster[i]
            self._x[i] = h.da - omega_apply(self.W.B[..., :-1, :], h.dA, self.omega)
        return self._x[i]

    def _Y(self, i: int) -> np.ndarray:
        if self.z3_variant == Z3_LEMMA:
            return self._X(i)
        if i not in self._y:
            h = self.roster[i]
            self._y[i] = h.da + omega_apply(self.W.B[..., :-1, :], h.dA, self.omega)
        return self._y[i]

    def _P(self, j: int, i: int) -> np.ndarray:
        if (j, i) not in self._p:
            self._p[j, i] = omega_apply(self.roster[j].A[:-1], self.roster[i].dA, self.omega)
        return self._p[j, i]

    def z(self, block: Sequence[int]) -> np.ndarray:
        block = tuple(block)
        if block not in self._z:
            self._z[block] = self._compute(block)
        return self._z[block]

    def _compute(self, block: tuple[int, ...]) -> np.ndarray:
        dt = self.W.grid.dt
        r = self.roster
        if len(block) == 1:
            (i,) = block
            return (np.einsum("ki,...ki->...", r[i].dA, self.W.dB)
                    + np.einsum("...ki,...ki->...", self._X(i), self.W.dB0))
        if len(block) == 2:
            i, j = block
            stoch = np.einsum("ki,...ki->...", self._P(j, i), self.W.dB0)
            drift = np.sum(r[i].dA * r[j].dA) + np.einsum("...ki,...ki->...", self._X(i), self._X(j))
            return stoch - drift * dt
        if len(block) == 3:
            i, j, k = block
            s = (np.einsum("...ki,ki->...", self._Y(i), self._P(k, j))
                 + np.einsum("...ki,ki->...", self._Y(j), self._P(k, i))
                 + np.einsum("...ki,ki->...", self._Y(k), self._P(j, i)))
            return -s * dt
        if len(block) == 4:
            i, j, k, l = block
            s = (np.sum(self._P(l, i) * self._P(k, j))
                 + np.sum(self._P(k, i) * self._P(l, j))
                 + np.sum(self._P(j, i) * self._P(l, k)))
            return np.full(self.W.batch_shape, -s * dt)
        raise ConfigurationError(f"Z functionals exist for 1 to 4 indices, got {len(block)}")


def z1(hi: CMPath, W: WienerPath, omega: OmegaForm) -> np.ndarray:
    return ZContext([hi], W, omega).z((0,))


def z2(hi: CMPath, hj: CMPath, W: WienerPath, omega: OmegaForm) -> np.ndarray:
    return ZContext([hi, hj], W, omega).z((0, 1))


def z3(hi: CMPath, hj: CMPath, hk: CMPath, W: WienerPath, omega: OmegaForm,
       variant: str = Z3_VARIANT) -> np.ndarray:
    return ZContext([hi, hj, hk], W, omega, z3_variant=variant).z((0, 1, 2))


def z4(hi: CMPath, hj: CMPath, hk: CMPath, hl: CMPath, omega: OmegaForm) -> float:
    """Deterministic: no noise enters Z_ijkl."""
    grid = hi.grid
    dummy = WienerPath(grid, np.zeros((grid.n + 1, hi.d)), np.zeros((grid.n + 1, hi.N)))
    return float(ZContext([hi, hj, hk, hl], dummy, omega).z((0, 1, 2, 3)))


def z_any(hs: Sequence[CMPath], W: WienerPath, omega: OmegaForm, variant: str = Z3_VARIANT) -> np.ndarray:
    """Z_{h_1 ... h_k} for k = len(hs) in 1..4."""
    return ZContext(list(hs), W, omega, z3_variant=variant).z(tuple(range(len(hs))))


def z_translated(hs: Sequence[CMPath], h_shift: CMPath, eps: float, W: WienerPath,
                 omega: OmegaForm, variant: str = Z3_VARIANT) -> np.ndarray:
    """Z_{hs} evaluated on the noise (B - eps A, B0 - eps a - u_{eps A}), A, a from h_shift."""
    return z_any(hs, shift_noise(W, h_shift, eps, omega), omega, variant)


@dataclass(frozen=True, eq=False)
class BetaCoeffs:
    beta2: np.ndarray
    beta3: float


def beta_expansion(hi: CMPath, hj: CMPath, W: WienerPath, omega: OmegaForm) -> BetaCoeffs:
    """Quadratic and cubic coefficients of eps -> Z_i on noise translated by eps h_j."""
    ctx = ZContext([hi, hj], W, omega)
    dt = W.grid.dt
    q_j = ctx._P(1, 1)
    p_ji = ctx._P(1, 0)
    b2 = -(0.5 * np.einsum("...ki,ki->...", ctx._X(0), q_j)
           + np.einsum("...ki,ki->...", ctx._X(1), p_ji)) * dt
    b3 = -0.5 * float(np.sum(p_ji * q_j)) * dt
    return BetaCoeffs(b2, b3)


# ---------------------------------------------------------------------------
# finite-difference validation of the derivative chain

DEFAULT_DELTAS = (1e-2, 1e-3, 1e-4)
SLOPE_TARGET = 2.0
SLOPE_TOL = 0.2
# below this relative error a central difference is exact up to round-off,
# which happens when eps -> value is a polynomial of degree <= 2
ROUNDOFF_FLOOR = 1e-9


@dataclass
class FDCheck:
    name: str
    deltas: tuple[float, ...]
    errors: list[float]
    slope: float | None
    exact: bool
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "deltas": list(self.deltas), "errors": self.errors,
                "slope": self.slope, "roundoff_exact": self.exact, "passed": self.passed}


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def fd_check(name: str, fn: Callable[[float], np.ndarray], target: np.ndarray,
             deltas: Sequence[float] = DEFAULT_DELTAS) -> FDCheck:
    """Compare central differences of fn at 0 with target over shrinking deltas.

    Errors are max-abs over the batch, relative to 1 + max |target|.  The check
    passes when the log-log slope is 2 +- 0.2, or when every error sits below
    the round-off floor (the difference quotient is then exact).
    """
    target = np.asarray(target)
    scale = 1.0 + float(np.max(np.abs(target)))
    errors = []
    for delta in deltas:
        fd = (np.asarray(fn(delta)) - np.asarray(fn(-delta))) / (2 * delta)
        errors.append(float(np.max(np.abs(fd - target))) / scale)
    exact = max(errors) <= ROUNDOFF_FLOOR
    slope = loglog_slope(deltas, errors) if min(errors) > 0 else None
    passed = exact or (slope is not None and abs(slope - SLOPE_TARGET) <= SLOPE_TOL)
    return FDCheck(name, tuple(deltas), errors, slope, exact, passed)


def lemma_checks(hs: Sequence[CMPath], W: WienerPath, omega: OmegaForm,
                 deltas: Sequence[float] = DEFAULT_DELTAS, variant: str = Z3_VARIANT) -> list[FDCheck]:
    """Finite-difference checks of the four derivative identities for hs = (h1, h2, h3, h4).

    (i)   Z_1    = d/deps J_{eps h1}
    (ii)  Z_12   = d/deps Z_1 on noise translated by eps h2
    (iii) Z_123  = d/deps Z_12 on noise translated by eps h3
    (iv)  Z_1234 = d/deps Z_123 on noise translated by eps h4
    """
    h1, h2, h3, h4 = hs
    return [
        fd_check("i", lambda e: j_h(h1.scaled(e), W, omega), z1(h1, W, omega), deltas),
        fd_check("ii", lambda e: z_translated([h1], h2, e, W, omega), z2(h1, h2, W, omega), deltas),
        fd_check("iii", lambda e: z_translated([h1, h2], h3, e, W, omega),
                 z3(h1, h2, h3, W, omega, variant), deltas),
        fd_check("iv", lambda e: z_translated([h1, h2, h3], h4, e, W, omega, variant),
                 np.full(W.batch_shape, z4(h1, h2, h3, h4, omega)), deltas),
    ]


def arbitrate_z3_sign(hs: Sequence[CMPath], W: WienerPath, omega: OmegaForm,
                      deltas: Sequence[float] = DEFAULT_DELTAS) -> dict:
    """Run check (iii) against both sign conventions for X inside Z_ijk.

    Returns the per-variant checks and the variant that satisfies the derivative identity.
    """
    h1, h2, h3 = hs[:3]
    checks = {}
    for variant in (Z3_LEMMA, Z3_PRINTED):
        checks[variant] = fd_check(f"iii[{variant}]", lambda e: z_translated([h1, h2], h3, e, W, omega),
                                   z3(h1, h2, h3, W, omega, variant), deltas)
    passing = [v for v, c in checks.items() if c.passed]
    if checks[Z3_PRINTED].passed:
        chosen = Z3_PRINTED
    elif checks[Z3_LEMMA].passed:
        chosen = Z3_LEMMA
    else:
        chosen = None
    return {"chosen": chosen, "passing": passing, "checks": {k: c.as_dict() for k, c in checks.items()}}

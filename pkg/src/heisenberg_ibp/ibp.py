"""Partition sums Phi and Psi that serve as integration-by-parts weights.

Lambda_m is the set of partitions of {1..m} whose blocks have at most four
elements, and

    Phi_{h_1..h_m} = sum over theta in Lambda_m of prod over blocks gamma of Z_gamma.

Psi lifts Lie-algebra elements h to the paths t -> (t/T) h and evaluates Phi.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .group import ConfigurationError, GroupPoint, OmegaForm
from .paths import CMPath, TimeGrid, WienerPath, shift_noise
from .zfunc import Z3_VARIANT, ZContext

MAX_ORDER = 8
MAX_BLOCK = 4


@dataclass(frozen=True)
class Partition:
    """Blocks of 1-based indices, each ascending, ordered by their minimum."""

    blocks: tuple[tuple[int, ...], ...]

    def __str__(self) -> str:
        return " | ".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks)

    @property
    def m(self) -> int:
        return sum(len(b) for b in self.blocks)


def _set_partitions(m: int, max_block: int) -> Iterator[list[list[int]]]:
    # restricted growth: element k joins an existing block or opens a new one
    def rec(k: int, blocks: list[list[int]]):
        if k > m:
            yield [list(b) for b in blocks]
            return
        for b in blocks:
            if len(b) < max_block:
                b.append(k)
                yield from rec(k + 1, blocks)
                b.pop()
        blocks.append([k])
        yield from rec(k + 1, blocks)
        blocks.pop()

    yield from rec(1, [])


@lru_cache(maxsize=None)
def enumerate_lambda(m: int) -> tuple[Partition, ...]:
    if not 1 <= m <= MAX_ORDER:
        raise ConfigurationError(f"partition order must be in 1..{MAX_ORDER}, got {m}")
    parts = [Partition(tuple(tuple(b) for b in blocks)) for blocks in _set_partitions(m, MAX_BLOCK)]
    return tuple(sorted(parts, key=lambda p: p.blocks))


def _check_order(hs: Sequence) -> int:
    m = len(hs)
    if not 1 <= m <= MAX_ORDER:
        raise ConfigurationError(f"need between 1 and {MAX_ORDER} directions, got {m}")
    return m


def _partition_sum(ctx: ZContext, m: int) -> np.ndarray:
    total = np.zeros(ctx.W.batch_shape)
    for theta in enumerate_lambda(m):
        prod = np.ones(ctx.W.batch_shape)
        for block in theta.blocks:
            prod = prod * ctx.z(tuple(i - 1 for i in block))
        total = total + prod
    return total


def phi(hs: Sequence[CMPath], W: WienerPath, omega: OmegaForm, variant: str = Z3_VARIANT) -> np.ndarray:
    m = _check_order(hs)
    return _partition_sum(ZContext(list(hs), W, omega, z3_variant=variant), m)


def phi_translated(hs: Sequence[CMPath], h_extra: CMPath, eps: float, W: WienerPath,
                   omega: OmegaForm, variant: str = Z3_VARIANT) -> np.ndarray:
    """Phi on the noise translated by eps h_extra."""
    return phi(hs, shift_noise(W, h_extra, eps, omega), omega, variant)


def phi_recursion_check(hs: Sequence[CMPath], h_extra: CMPath, W: WienerPath, omega: OmegaForm,
                        variant: str = Z3_VARIANT) -> np.ndarray:
    """Relative residual of Phi_{m+1} against its one-step expansion from Lambda_m.

    The expansion is  sum_theta sum_{j: |gamma_j| <= 3} Z_{gamma_j + (m+1)} prod_{l != j} Z_{gamma_l}
    + Phi_m Z_{m+1}.  The residual is scaled by the sum of absolute terms.
    """
    m = _check_order(hs)
    if m + 1 > MAX_ORDER:
        raise ConfigurationError(f"m + 1 must not exceed {MAX_ORDER}")
    full = phi(list(hs) + [h_extra], W, omega, variant)

    ctx = ZContext(list(hs) + [h_extra], W, omega, z3_variant=variant)
    shape = W.batch_shape
    expansion = np.zeros(shape)
    scale = np.zeros(shape)
    new = m  # 0-based index of h_extra
    phi_m = np.zeros(shape)
    for theta in enumerate_lambda(m):
        zs = [ctx.z(tuple(i - 1 for i in b)) for b in theta.blocks]
        prod_all = np.prod(zs, axis=0) if zs else np.ones(shape)
        phi_m = phi_m + prod_all
        for j, block in enumerate(theta.blocks):
            if len(block) > 3:
                continue
            term = ctx.z(tuple(i - 1 for i in block) + (new,))
            for l, zl in enumerate(zs):
                if l != j:
                    term = term * zl
            expansion = expansion + term
            scale = scale + np.abs(term)
    last = phi_m * ctx.z((new,))
    expansion = expansion + last
    scale = scale + np.abs(last)
    return np.abs(full - expansion) / np.maximum(scale, np.finfo(float).tiny)


def lift(group_hs: Sequence[GroupPoint], grid: TimeGrid) -> list[CMPath]:
    return [CMPath.linear_lift(h, grid) for h in group_hs]


def psi(group_hs: Sequence[GroupPoint], W: WienerPath, omega: OmegaForm, grid: TimeGrid | None = None,
        variant: str = Z3_VARIANT) -> np.ndarray:
    """Phi of the linear lifts t -> (t/T) h_i."""
    grid = W.grid if grid is None else grid
    return phi(lift(group_hs, grid), W, omega, variant)

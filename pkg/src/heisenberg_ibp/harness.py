"""Monte Carlo verification of the quasi-invariance and integration-by-parts identities.

Samples are generated in fixed-size chunks; chunk r draws from the stream
seeded by (seed, r) and results are concatenated in chunk order, so every
estimate is bit-identical for a given seed whatever the worker count.

Both sides of an identity are evaluated on the same noise (common random
numbers); the paired standard error of the per-sample difference drives the
pass/fail decision.  An independent-halves comparison is reported alongside.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .densities import alpha_coeffs, j_h
from .group import GroupPoint, OmegaForm
from .ibp import lift, phi
from .paths import CMPath, GroupPath, TimeGrid, WienerPath, build_xi, cm_inner, sample_wiener, shift_noise, translate_path
from .testfuncs import CylinderFunction, TestFunction, evaluate, invert_precompose, iterated_left_derive, iterated_right_derive
from .zfunc import ZContext, z_any, z_translated

log = logging.getLogger(__name__)

WORKERS_ENV = "HEISENBERG_IBP_WORKERS"


@dataclass(frozen=True)
class RunConfig:
    omega: OmegaForm
    grid: TimeGrid
    samples: int = 100_000
    seed: int = 0
    workers: int = 1
    tol_mult: float = 4.0
    chunk_size: int = 2000
    richardson: bool = True
    echo: dict = field(default_factory=dict, compare=False)

    @property
    def d(self) -> int:
        return self.omega.d

    @property
    def N(self) -> int:
        return self.omega.N

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def config_echo(self) -> dict:
        out = {"seed": self.seed, "d": self.d, "N": self.N, "n": self.grid.n, "T": self.grid.T,
               "samples": self.samples, "tol_mult": self.tol_mult, "chunk_size": self.chunk_size}
        if self.echo:
            out["config"] = self.echo
        return out


def resolve_workers(requested: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, requested)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_samples: int

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "MCEstimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        se = float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return cls(float(np.mean(x)), se, n)


@dataclass
class VerificationReport:
    identity: str
    lhs: MCEstimate
    rhs: MCEstimate
    difference: float
    combined_se: float
    tol_mult: float
    discretization_allowance: float
    passed: bool
    config: dict
    independent_difference: float = float("nan")
    independent_se: float = float("nan")
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.identity}: lhs={self.lhs.mean:.6g} rhs={self.rhs.mean:.6g} "
                f"diff={self.difference:.3g} <= {self.tol_mult:g}*{self.combined_se:.3g}"
                f" + {self.discretization_allowance:.3g}")


# ---------------------------------------------------------------------------
# sampling loop

SampleFn = Callable[[WienerPath], dict]


def run_chunks(cfg: RunConfig, fn: SampleFn, n_steps: int | None = None, samples: int | None = None) -> dict:
    """Evaluate fn on every chunk of Wiener paths and concatenate the per-sample outputs.

    fn receives a batch WienerPath on a grid with `n_steps` steps (default cfg.grid.n)
    and returns a dict of arrays with the batch as leading axis.
    """
    samples = cfg.samples if samples is None else samples
    grid = cfg.grid if n_steps is None else TimeGrid(cfg.grid.T, n_steps)
    sizes = [cfg.chunk_size] * (samples // cfg.chunk_size)
    if samples % cfg.chunk_size:
        sizes.append(samples % cfg.chunk_size)

    def one(r: int) -> dict:
        W = sample_wiener(grid, cfg.d, cfg.N, seed=[cfg.seed, r], size=sizes[r])
        return fn(W)

    workers = resolve_workers(cfg.workers)
    if workers == 1:
        parts = [one(r) for r in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    return {k: np.concatenate([np.atleast_1d(p[k]) for p in parts]) for k in parts[0]}


def compare(identity: str, lhs: np.ndarray, rhs: np.ndarray, cfg: RunConfig, allowance: float = 0.0,
            notes: dict | None = None, paired: bool = True) -> VerificationReport:
    """Build a report; paired=False makes the independent-halves comparison primary."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    L, R = MCEstimate.from_samples(lhs), MCEstimate.from_samples(rhs)
    D = MCEstimate.from_samples(lhs - rhs)
    half = lhs.size // 2
    Li, Ri = MCEstimate.from_samples(lhs[:half]), MCEstimate.from_samples(rhs[half:])
    ind_diff = Li.mean - Ri.mean
    ind_se = float(np.hypot(Li.std_error, Ri.std_error))
    if paired:
        diff, se = D.mean, D.std_error
    else:
        diff, se = ind_diff, ind_se
        L, R = Li, Ri
    if not np.isfinite(se):
        se = 0.0
    passed = bool(abs(diff) <= cfg.tol_mult * se + allowance)
    return VerificationReport(identity, L, R, float(diff), float(se), cfg.tol_mult, float(allowance), passed,
                              cfg.config_echo(), float(ind_diff), ind_se, dict(notes or {}))


# A grid-aware identity: given a batch of noise, return per-sample (lhs, rhs).
IdentityFn = Callable[[WienerPath], tuple[np.ndarray, np.ndarray]]


def _run_identity(name: str, cfg: RunConfig, make: Callable[[TimeGrid], IdentityFn],
                  notes: dict | None = None) -> VerificationReport:
    """Evaluate an identity, with a Richardson allowance from the coupled half-resolution grid."""
    fine = make(cfg.grid)
    coarse = make(cfg.grid.coarsened(2)) if cfg.richardson and cfg.grid.n % 2 == 0 else None

    def fn(W: WienerPath) -> dict:
        lhs, rhs = fine(W)
        out = {"lhs": np.broadcast_to(lhs, W.batch_shape), "rhs": np.broadcast_to(rhs, W.batch_shape)}
        if coarse is not None:
            lc, rc = coarse(W.coarsen(2))
            out["gap_coarse"] = np.broadcast_to(lc - rc, W.batch_shape)
        return out

    res = run_chunks(cfg, fn)
    allowance = 0.0
    notes = dict(notes or {})
    if coarse is not None:
        # gap(n/2) - gap(n) ~ C dt for an O(dt) bias; the paths are coupled so the noise largely cancels
        allowance = abs(float(np.mean(res["gap_coarse"] - (res["lhs"] - res["rhs"]))))
        notes["richardson_gap_coarse"] = float(np.mean(res["gap_coarse"]))
    return compare(name, res["lhs"], res["rhs"], cfg, allowance, notes)


# ---------------------------------------------------------------------------
# CM path specifications that can be rebuilt on any grid

@dataclass(frozen=True)
class CMSpec:
    """Piecewise-constant derivative on knot intervals; realized on a grid by `on`."""

    knots: tuple[float, ...]
    dA: tuple[tuple[float, ...], ...]
    da: tuple[tuple[float, ...], ...]

    @classmethod
    def make(cls, knots, dA, da) -> "CMSpec":
        return cls(tuple(float(t) for t in knots), tuple(tuple(map(float, r)) for r in np.atleast_2d(dA)),
                   tuple(tuple(map(float, r)) for r in np.atleast_2d(da)))

    @classmethod
    def linear(cls, h: GroupPoint, T: float) -> "CMSpec":
        return cls.make([0.0], [np.asarray(h.w) / T], [np.asarray(h.c) / T])

    def on(self, grid: TimeGrid) -> CMPath:
        return CMPath.from_knots(grid, self.knots, self.dA, self.da)

    def scaled(self, s: float) -> "CMSpec":
        return CMSpec.make(self.knots, s * np.asarray(self.dA), s * np.asarray(self.da))

    def to_dict(self) -> dict:
        return {"knots": list(self.knots), "dA": [list(r) for r in self.dA], "da": [list(r) for r in self.da]}


# ---------------------------------------------------------------------------
# identities

def verify_inversion(f: TestFunction, cfg: RunConfig) -> VerificationReport:
    """E f(xi_T) against E f(xi_T^{-1}); both are read off the same path, so the paired test applies."""
    omega = cfg.omega

    def fn(W):
        end = build_xi(W, omega).at_end()
        return {"lhs": evaluate(f, end), "rhs": evaluate(f, -end)}

    res = run_chunks(cfg, fn)
    return compare("inversion", res["lhs"], res["rhs"], cfg, notes={"f": str(f)})


def _noise_path(W: WienerPath) -> GroupPath:
    return GroupPath(W.B, W.B0)


def girsanov_identity(F: CylinderFunction, Z: CylinderFunction | None, h: CMSpec,
                      omega: OmegaForm) -> Callable[[TimeGrid], IdentityFn]:
    """Per-sample sides of E[F(h.xi) Z(B,B0)] = E[F(xi) Z(B - A, B0 - a - u_A) J_h]."""

    def make(grid: TimeGrid) -> IdentityFn:
        hp = h.on(grid)

        def ident(W):
            xi = build_xi(W, omega)
            lhs = F(translate_path(hp, xi, 1.0, omega), grid)
            rhs = F(xi, grid) * j_h(hp, W, omega)
            if Z is not None:
                lhs = lhs * Z(_noise_path(W), grid)
                rhs = rhs * Z(_noise_path(shift_noise(W, hp, 1.0, omega)), grid)
            return lhs, rhs
        return ident
    return make


def verify_girsanov(F: CylinderFunction, Z: CylinderFunction | None, h: CMSpec, cfg: RunConfig) -> VerificationReport:
    """E[F(h.xi) Z(B,B0)] against E[F(xi) Z(B - A, B0 - a - u_A) J_h]."""
    notes = {"F": F.to_dict(), "Z": None if Z is None else Z.to_dict(), "h": h.to_dict(),
             "h_energy": h.on(cfg.grid).energy()}
    return _run_identity("girsanov", cfg, girsanov_identity(F, Z, h, cfg.omega), notes)


def path_ibp_identity(hs: Sequence[CMSpec], F: CylinderFunction, omega: OmegaForm,
                      on_weight: Callable | None = None) -> Callable[[TimeGrid], IdentityFn]:
    """Per-sample sides of E[(h_1^ ... h_m^ F)(xi)] = E[F(xi) Phi_{h_1..h_m}]."""

    def make(grid: TimeGrid) -> IdentityFn:
        paths = [h.on(grid) for h in hs]
        dF = F.iterated_right_derive(paths, omega)

        def ident(W):
            xi = build_xi(W, omega)
            lhs = dF(xi, grid) if not dF.is_zero() else np.zeros(W.batch_shape)
            weight = phi(paths, W, omega)
            if on_weight is not None:
                on_weight(grid, paths, W, weight)
            return lhs, F(xi, grid) * weight
        return ident
    return make


def verify_path_ibp(hs: Sequence[CMSpec], F: CylinderFunction, cfg: RunConfig,
                    flat_oracle: bool = False) -> VerificationReport:
    """E[(h_1^ ... h_m^ F)(xi)] against E[F(xi) Phi_{h_1..h_m}], symbolic derivatives on the left."""
    omega = cfg.omega
    m = len(hs)
    if flat_oracle and (m != 2 or not omega.is_zero()):
        raise ValueError("the Hermite oracle applies to m=2 with omega = 0")
    flat_dev: list[float] = []

    def hermite(grid, paths, W, weight):
        if grid == cfg.grid:
            zs = ZContext(paths, W, omega)
            oracle = zs.z((0,)) * zs.z((1,)) - cm_inner(paths[0], paths[1])
            flat_dev.append(float(np.max(np.abs(weight - oracle))))

    notes = {"m": m, "F": F.to_dict(), "hs": [h.to_dict() for h in hs]}
    make = path_ibp_identity(hs, F, omega, hermite if flat_oracle else None)
    rep = _run_identity(f"path_ibp_m{m}", cfg, make, notes)
    if flat_oracle:
        rep.notes["hermite_max_abs_deviation"] = max(flat_dev)
    return rep


def group_ibp_identity(hs: Sequence[GroupPoint], f: TestFunction,
                       omega: OmegaForm) -> Callable[[TimeGrid], IdentityFn]:
    """Per-sample sides of E[(h_1^ ... h_m^ f)(xi_T)] = E[f(xi_T) Psi_{h_1..h_m}]."""
    df = iterated_right_derive(f, hs, omega)

    def make(grid: TimeGrid) -> IdentityFn:
        paths = lift(hs, grid)

        def ident(W):
            end = build_xi(W, omega).at_end()
            return evaluate(df, end), evaluate(f, end) * phi(paths, W, omega)
        return ident
    return make


def verify_group_ibp(hs: Sequence[GroupPoint], f: TestFunction, cfg: RunConfig,
                     expected: float | None = None) -> VerificationReport:
    """E[(h_1^ ... h_m^ f)(xi_T)] against E[f(xi_T) Psi_{h_1..h_m}]."""
    df = iterated_right_derive(f, hs, cfg.omega)
    rep = _run_identity(f"group_ibp_m{len(hs)}", cfg, group_ibp_identity(hs, f, cfg.omega),
                        {"m": len(hs), "f": str(f), "derivative": str(df)})
    _attach_expected(rep, expected)
    return rep


def verify_left_ibp(hs: Sequence[GroupPoint], f: TestFunction, cfg: RunConfig,
                    expected: float | None = None) -> VerificationReport:
    """E[(h_1~ ... h_m~ f)(xi_T)] against (-1)^m E[u(xi_T) Psi_{h_1..h_m}] with u(g) = f(g^{-1})."""
    omega = cfg.omega
    df = iterated_left_derive(f, hs, omega)
    u = invert_precompose(f)
    sign = (-1.0) ** len(hs)

    def make(grid: TimeGrid) -> IdentityFn:
        paths = lift(hs, grid)

        def ident(W):
            end = build_xi(W, omega).at_end()
            return evaluate(df, end), sign * evaluate(u, end) * phi(paths, W, omega)
        return ident

    rep = _run_identity(f"left_ibp_m{len(hs)}", cfg, make,
                        {"m": len(hs), "f": str(f), "derivative": str(df)})
    _attach_expected(rep, expected)
    return rep


def _attach_expected(rep: VerificationReport, expected: float | None) -> None:
    """Also test both sides against a known exact value."""
    if expected is None:
        return
    k = rep.tol_mult
    lhs_ok = abs(rep.lhs.mean - expected) <= k * rep.lhs.std_error + rep.discretization_allowance + 1e-12
    rhs_ok = abs(rep.rhs.mean - expected) <= k * rep.rhs.std_error + rep.discretization_allowance
    rep.notes.update({"expected": expected, "lhs_matches_expected": bool(lhs_ok),
                      "rhs_matches_expected": bool(rhs_ok)})
    rep.passed = bool(rep.passed and lhs_ok and rhs_ok)


# ---------------------------------------------------------------------------
# moments

MomentTarget = Callable[[WienerPath], np.ndarray]


def moment_targets(hs: Sequence[CMSpec], cfg: RunConfig, eps_grid: Sequence[float] = (-1.0, -0.5, 0.0, 0.5, 1.0),
                   phi_orders: Sequence[int] = (2, 3)) -> dict[str, MomentTarget]:
    """The standard diagnostic targets built from the first four directions."""
    omega, grid = cfg.omega, cfg.grid
    p = [h.on(grid) for h in hs]
    targets: dict[str, MomentTarget] = {
        "J_h": lambda W: j_h(p[0], W, omega),
        "dJ_deps_0": lambda W: alpha_coeffs(p[0], W, omega).alpha1,
        "Z1": lambda W: z_any(p[:1], W, omega),
        "Z12": lambda W: z_any(p[:2], W, omega),
        "Z123": lambda W: z_any(p[:3], W, omega),
        "Z1234": lambda W: z_any(p[:4], W, omega),
        "sup_eps_Z1_shift": lambda W: np.max([np.abs(z_translated(p[:1], p[1], e, W, omega)) for e in eps_grid],
                                             axis=0),
        "sup_eps_Z12_shift": lambda W: np.max([np.abs(z_translated(p[:2], p[2], e, W, omega)) for e in eps_grid],
                                              axis=0),
    }
    for m in phi_orders:
        targets[f"Phi{m}"] = (lambda m: lambda W: phi(p[:m], W, omega))(m)
    return targets


@dataclass
class MomentRow:
    target: str
    p: float
    estimate_half: float
    estimate_full: float
    ratio: float
    n_samples: int
    passed: bool


def moment_diagnostics(targets: dict[str, MomentTarget], ps: Sequence[float], cfg: RunConfig,
                       max_ratio: float = 1.5) -> list[MomentRow]:
    """E|X|^p from the first half of the sample and from all of it (sample doubling)."""
    for p in ps:
        if p not in (1, 2, 4):
            raise ValueError(f"moment order must be 1, 2 or 4, got {p}")

    def fn(W):
        return {name: np.broadcast_to(t(W), W.batch_shape) for name, t in targets.items()}

    res = run_chunks(cfg, fn)
    rows = []
    for name in targets:
        x = np.abs(res[name])
        half = x.size // 2
        for p in ps:
            a = float(np.mean(x[:half] ** p))
            b = float(np.mean(x ** p))
            if a == b:
                ratio = 1.0
            elif min(a, b) > 0:
                ratio = max(a / b, b / a)
            else:
                ratio = float("inf")
            rows.append(MomentRow(name, p, a, b, ratio, x.size, bool(np.isfinite(ratio) and ratio < max_ratio)))
    return rows


# ---------------------------------------------------------------------------
# discretization convergence

@dataclass
class ConvergenceRow:
    n: int
    dt: float
    gap: float
    gap_se: float
    bias: float
    bias_se: float
    dt_ref: float


def convergence_table(make: Callable[[TimeGrid], IdentityFn], cfg: RunConfig,
                      steps: Sequence[int] = (128, 256, 512), ref_factor: int = 4) -> list[ConvergenceRow]:
    """Run an identity on nested grids driven by the same Brownian paths.

    `gap` is the raw paired mean of lhs - rhs on each grid.  `bias` is that gap
    minus the gap on a reference grid `ref_factor` times finer than the finest,
    estimated pathwise, which isolates the discretization error from the
    Monte Carlo error shared by all grids.
    """
    steps = sorted(steps)
    n_ref = steps[-1] * ref_factor
    idents = {n: make(TimeGrid(cfg.grid.T, n)) for n in steps + [n_ref]}

    def fn(W):
        out = {}
        for n, ident in idents.items():
            l, r = ident(W.coarsen(n_ref // n))
            out[f"g{n}"] = np.broadcast_to(l - r, W.batch_shape)
        return out

    res = run_chunks(cfg, fn, n_steps=n_ref)
    ref = res[f"g{n_ref}"]
    rows = []
    for n in steps:
        g = MCEstimate.from_samples(res[f"g{n}"])
        b = MCEstimate.from_samples(res[f"g{n}"] - ref)
        rows.append(ConvergenceRow(n, cfg.grid.T / n, g.mean, g.std_error, b.mean, b.std_error, cfg.grid.T / n_ref))
    return rows


def convergence_ok(rows: Sequence[ConvergenceRow], tol_mult: float = 4.0, min_signal: float = 2.0) -> dict:
    """Discretization bias shrinks monotonically with dt and is consistent with first order.

    First order means bias_n = C (dt_n - dt_ref) with a single C: C is fitted by
    weighted least squares and every row must sit within tol_mult standard
    errors of the fit.  C itself must be resolved (min_signal standard errors
    from zero), otherwise monotonicity would only be measuring noise.  The
    log-log slope is reported as a diagnostic.
    """
    rows = sorted(rows, key=lambda r: r.n)
    b = np.array([r.bias for r in rows])
    se = np.array([r.bias_se for r in rows])
    x = np.array([r.dt - r.dt_ref for r in rows])
    monotone = bool(np.all(np.diff(np.abs(b)) <= 0))
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    C = float(np.sum(w * x * b) / np.sum(w * x * x))
    C_se = float(1.0 / np.sqrt(np.sum(w * x * x)))
    resid = (b - C * x) / np.maximum(se, 1e-300)
    first_order = bool(np.all(np.abs(resid) <= tol_mult))
    resolved = bool(abs(C) >= min_signal * C_se)
    slope = float("nan")
    if np.all(b != 0):
        slope = float(np.polyfit(np.log(x), np.log(np.abs(b)), 1)[0])
    return {"monotone": monotone, "first_order": first_order, "resolved": resolved, "C": C, "C_se": C_se,
            "max_abs_residual_se": float(np.max(np.abs(resid))), "loglog_slope": slope,
            "biases": b.tolist(), "passed": monotone and first_order and resolved}

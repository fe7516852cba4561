"""Polynomial-trigonometric test functions on G with exact invariant derivatives.

A TestFunction is a finite sum of terms coef * prod(atoms) where each atom is
an affine form L(w, c) = <lw, w> + <lc, c> + const, or sin(L), or cos(L).
Differentiating along the right invariant field of h = (A, a) sends

    L  ->  <lw, A> + <lc, a> + 1/2 <lc, omega(A, w)>

which is again affine in w, so the family is closed under right and left
invariant derivatives.  Cylinder functions are test functions on the product
group G^k evaluated at k grid times of a path.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .group import ConfigurationError, GroupPoint, OmegaForm, product_omega
from .paths import CMPath, GroupPath, TimeGrid

LIN, SIN, COS = "lin", "sin", "cos"
_KINDS = (COS, LIN, SIN)


@dataclass(frozen=True, order=True)
class AffineForm:
    lw: tuple[float, ...]
    lc: tuple[float, ...]
    const: float = 0.0

    @classmethod
    def make(cls, lw, lc, const: float = 0.0) -> "AffineForm":
        return cls(tuple(float(x) for x in np.ravel(lw)), tuple(float(x) for x in np.ravel(lc)), float(const))

    def is_constant(self) -> bool:
        return not any(self.lw) and not any(self.lc)

    def negated(self) -> "AffineForm":
        return AffineForm(tuple(-x for x in self.lw), tuple(-x for x in self.lc), -self.const)

    def evaluate(self, w: np.ndarray, c: np.ndarray) -> np.ndarray:
        return w @ np.asarray(self.lw) + c @ np.asarray(self.lc) + self.const

    def slope_norm(self) -> float:
        return max(float(np.linalg.norm(self.lw)), float(np.linalg.norm(self.lc)))


@dataclass(frozen=True, order=True)
class Atom:
    kind: str
    form: AffineForm


def _leading_negative(form: AffineForm) -> bool:
    for x in form.lw + form.lc:
        if x != 0.0:
            return x < 0.0
    return False


@dataclass(frozen=True)
class TestFunction:
    """Immutable canonical sum of terms; build with the constructors below."""

    dim_w: int
    dim_c: int
    terms: tuple[tuple[float, tuple[Atom, ...]], ...]

    __test__ = False  # not a pytest class

    # -- construction -----------------------------------------------------

    @classmethod
    def from_terms(cls, dim_w: int, dim_c: int, terms: Iterable[tuple[float, Sequence[Atom]]]) -> "TestFunction":
        acc: dict[tuple[Atom, ...], float] = defaultdict(float)
        for coef, atoms in terms:
            coef, atoms = _normalize_term(float(coef), atoms, dim_w, dim_c)
            if coef != 0.0:
                acc[atoms] += coef
        merged = tuple(sorted(((c, a) for a, c in acc.items() if c != 0.0), key=lambda t: (len(t[1]), t[1])))
        return cls(dim_w, dim_c, merged)

    @classmethod
    def constant(cls, dim_w: int, dim_c: int, value: float) -> "TestFunction":
        return cls.from_terms(dim_w, dim_c, [(value, ())])

    @classmethod
    def atom(cls, kind: str, lw, lc, const: float = 0.0, coef: float = 1.0) -> "TestFunction":
        form = AffineForm.make(lw, lc, const)
        return cls.from_terms(len(form.lw), len(form.lc), [(coef, (Atom(kind, form),))])

    @classmethod
    def linear(cls, lw, lc, const: float = 0.0) -> "TestFunction":
        return cls.atom(LIN, lw, lc, const)

    @classmethod
    def sin(cls, lw, lc, const: float = 0.0) -> "TestFunction":
        return cls.atom(SIN, lw, lc, const)

    @classmethod
    def cos(cls, lw, lc, const: float = 0.0) -> "TestFunction":
        return cls.atom(COS, lw, lc, const)

    # -- algebra ----------------------------------------------------------

    def _same_space(self, other: "TestFunction") -> None:
        if (self.dim_w, self.dim_c) != (other.dim_w, other.dim_c):
            raise ConfigurationError("test functions live on different groups")

    def __add__(self, other: "TestFunction") -> "TestFunction":
        self._same_space(other)
        return TestFunction.from_terms(self.dim_w, self.dim_c, self.terms + other.terms)

    def __sub__(self, other: "TestFunction") -> "TestFunction":
        return self + (-1.0) * other

    def __mul__(self, other) -> "TestFunction":
        if isinstance(other, TestFunction):
            self._same_space(other)
            terms = [(c1 * c2, a1 + a2) for c1, a1 in self.terms for c2, a2 in other.terms]
            return TestFunction.from_terms(self.dim_w, self.dim_c, terms)
        s = float(other)
        return TestFunction.from_terms(self.dim_w, self.dim_c, [(s * c, a) for c, a in self.terms])

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return not self.terms

    # -- evaluation -------------------------------------------------------

    def __call__(self, g: GroupPoint) -> np.ndarray:
        return evaluate(self, g)

    def bound(self) -> tuple[float, int]:
        """(K, M) with |f(g)| <= K (1 + ||w|| + ||c||)^M for every g."""
        K, M = 0.0, 0
        for coef, atoms in self.terms:
            k_term, m_term = abs(coef), 0
            for atom in atoms:
                if atom.kind == LIN:
                    k_term *= max(abs(atom.form.const), atom.form.slope_norm())
                    m_term += 1
            K += k_term
            M = max(M, m_term)
        return K, M

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim_w": self.dim_w,
            "dim_c": self.dim_c,
            "terms": [{"coef": c, "atoms": [{"kind": a.kind, "lw": list(a.form.lw), "lc": list(a.form.lc),
                                             "const": a.form.const} for a in atoms]}
                      for c, atoms in self.terms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TestFunction":
        dim_w, dim_c = int(data["dim_w"]), int(data["dim_c"])
        terms = []
        for t in data["terms"]:
            atoms = []
            for a in t["atoms"]:
                if a["kind"] not in _KINDS:
                    raise ConfigurationError(f"unknown atom kind {a['kind']!r}")
                atoms.append(Atom(a["kind"], AffineForm.make(a["lw"], a["lc"], a.get("const", 0.0))))
            terms.append((t["coef"], atoms))
        return cls.from_terms(dim_w, dim_c, terms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(_term_str(c, atoms) for c, atoms in self.terms)


def _form_str(form: AffineForm) -> str:
    parts = [f"{x:g}*w{i + 1}" for i, x in enumerate(form.lw) if x]
    parts += [f"{x:g}*c{i + 1}" for i, x in enumerate(form.lc) if x]
    if form.const or not parts:
        parts.append(f"{form.const:g}")
    return " + ".join(parts)


def _term_str(coef: float, atoms: tuple[Atom, ...]) -> str:
    factors = [f"{coef:g}"]
    for a in atoms:
        body = _form_str(a.form)
        factors.append(f"({body})" if a.kind == LIN else f"{a.kind}({body})")
    return "*".join(factors)


def _normalize_term(coef: float, atoms: Sequence[Atom], dim_w: int, dim_c: int) -> tuple[float, tuple[Atom, ...]]:
    out = []
    for atom in atoms:
        form = atom.form
        if (len(form.lw), len(form.lc)) != (dim_w, dim_c):
            raise ConfigurationError(
                f"atom acts on R^{len(form.lw)} x R^{len(form.lc)}, expected R^{dim_w} x R^{dim_c}")
        if form.is_constant():
            if atom.kind == LIN:
                coef *= form.const
            elif atom.kind == SIN:
                coef *= math.sin(form.const)
            else:
                coef *= math.cos(form.const)
            continue
        if _leading_negative(form):
            # cos(-x) = cos(x); sin(-x) = -sin(x) and likewise for linear atoms
            form = form.negated()
            if atom.kind != COS:
                coef = -coef
        out.append(Atom(atom.kind, form))
    if coef == 0.0:
        return 0.0, ()
    return coef, tuple(sorted(out))


def _check_dims(f: TestFunction, omega: OmegaForm | None = None, h: GroupPoint | None = None) -> None:
    if omega is not None and (omega.d, omega.N) != (f.dim_w, f.dim_c):
        raise ConfigurationError(f"test function on R^{f.dim_w} x R^{f.dim_c} but omega is for "
                                 f"R^{omega.d} x R^{omega.N}")
    if h is not None and (np.shape(h.w)[-1:], np.shape(h.c)[-1:]) != ((f.dim_w,), (f.dim_c,)):
        raise ConfigurationError("direction has the wrong dimensions")


def evaluate(f: TestFunction, g: GroupPoint) -> np.ndarray:
    w, c = np.asarray(g.w, dtype=float), np.asarray(g.c, dtype=float)
    if w.shape[-1:] != (f.dim_w,) or c.shape[-1:] != (f.dim_c,):
        raise ConfigurationError("point and test function dimensions differ")
    shape = np.broadcast_shapes(w.shape[:-1], c.shape[:-1])
    total = np.zeros(shape)
    cache: dict[AffineForm, np.ndarray] = {}
    for coef, atoms in f.terms:
        val = np.full(shape, coef)
        for atom in atoms:
            if atom.form not in cache:
                cache[atom.form] = atom.form.evaluate(w, c)
            x = cache[atom.form]
            val = val * (x if atom.kind == LIN else np.sin(x) if atom.kind == SIN else np.cos(x))
        total = total + val
    return total


def _derive(f: TestFunction, h: GroupPoint, omega: OmegaForm, side: float) -> TestFunction:
    _check_dims(f, omega, h)
    A = np.asarray(h.w, dtype=float)
    a = np.asarray(h.c, dtype=float)
    dforms: dict[AffineForm, AffineForm] = {}

    def d_form(form: AffineForm) -> AffineForm:
        if form not in dforms:
            M = np.einsum("k,kij->ij", np.asarray(form.lc), omega.mats)
            lw = side * 0.5 * (M.T @ A)
            const = float(np.dot(form.lw, A) + np.dot(form.lc, a))
            dforms[form] = AffineForm.make(lw, np.zeros(f.dim_c), const)
        return dforms[form]

    terms = []
    for coef, atoms in f.terms:
        for i, atom in enumerate(atoms):
            rest = atoms[:i] + atoms[i + 1:]
            dl = Atom(LIN, d_form(atom.form))
            if atom.kind == LIN:
                terms.append((coef, rest + (dl,)))
            elif atom.kind == SIN:
                terms.append((coef, rest + (Atom(COS, atom.form), dl)))
            else:
                terms.append((-coef, rest + (Atom(SIN, atom.form), dl)))
    return TestFunction.from_terms(f.dim_w, f.dim_c, terms)


def right_derive(f: TestFunction, h: GroupPoint, omega: OmegaForm) -> TestFunction:
    """g -> d/deps f((eps h) . g) at eps = 0."""
    return _derive(f, h, omega, +1.0)


def left_derive(f: TestFunction, h: GroupPoint, omega: OmegaForm) -> TestFunction:
    """g -> d/deps f(g . (eps h)) at eps = 0."""
    return _derive(f, h, omega, -1.0)


def iterated_right_derive(f: TestFunction, hs: Sequence[GroupPoint], omega: OmegaForm) -> TestFunction:
    """h_1^ ... h_m^ f, with h_m applied first and h_1 outermost."""
    for h in reversed(hs):
        f = right_derive(f, h, omega)
    return f


def iterated_left_derive(f: TestFunction, hs: Sequence[GroupPoint], omega: OmegaForm) -> TestFunction:
    for h in reversed(hs):
        f = left_derive(f, h, omega)
    return f


def invert_precompose(f: TestFunction) -> TestFunction:
    """u(g) = f(g^{-1}) = f(-g)."""
    terms = []
    for coef, atoms in f.terms:
        flipped = [Atom(at.kind, AffineForm(tuple(-x for x in at.form.lw), tuple(-x for x in at.form.lc),
                                            at.form.const)) for at in atoms]
        terms.append((coef, flipped))
    return TestFunction.from_terms(f.dim_w, f.dim_c, terms)


def random_trig_function(dim_w: int, dim_c: int, rng: np.random.Generator, n_terms: int = 3,
                         max_atoms: int = 2, with_linear: bool = True, scale: float = 1.0) -> TestFunction:
    """A random member of the family, for property tests and demos."""
    terms = []
    for _ in range(n_terms):
        atoms = []
        for _ in range(rng.integers(1, max_atoms + 1)):
            kinds = (LIN, SIN, COS) if with_linear else (SIN, COS)
            kind = kinds[rng.integers(len(kinds))]
            form = AffineForm.make(scale * rng.standard_normal(dim_w), scale * rng.standard_normal(dim_c),
                                   rng.standard_normal())
            atoms.append(Atom(kind, form))
        terms.append((rng.standard_normal(), atoms))
    return TestFunction.from_terms(dim_w, dim_c, terms)


@dataclass(frozen=True)
class CylinderFunction:
    """F(path) = f(path(t_1), ..., path(t_k)) with f a test function on G^k.

    On G^k the point is (w(t_1), ..., w(t_k); c(t_1), ..., c(t_k)).
    """

    times: tuple[float, ...]
    f: TestFunction
    d: int
    N: int

    def __post_init__(self):
        k = len(self.times)
        if k == 0 or list(self.times) != sorted(set(self.times)):
            raise ConfigurationError("cylinder times must be strictly increasing and non-empty")
        if (self.f.dim_w, self.f.dim_c) != (k * self.d, k * self.N):
            raise ConfigurationError("cylinder test function does not act on G^k")

    @classmethod
    def at_time(cls, f: TestFunction, t: float) -> "CylinderFunction":
        return cls((float(t),), f, f.dim_w, f.dim_c)

    @classmethod
    def from_parts(cls, times: Sequence[float], parts: Sequence[TestFunction]) -> "CylinderFunction":
        """Product over r of parts[r] evaluated at path(times[r])."""
        k = len(times)
        d, N = parts[0].dim_w, parts[0].dim_c
        total = TestFunction.constant(k * d, k * N, 1.0)
        for r, p in enumerate(parts):
            total = total * embed(p, r, k)
        return cls(tuple(float(t) for t in times), total, d, N)

    def indices(self, grid: TimeGrid) -> list[int]:
        return [grid.index_of(t) for t in self.times]

    def stack(self, path: GroupPath, grid: TimeGrid) -> GroupPoint:
        idx = self.indices(grid)
        w = np.concatenate([path.w[..., j, :] for j in idx], axis=-1)
        c = np.concatenate([path.c[..., j, :] for j in idx], axis=-1)
        return GroupPoint(w, c)

    def __call__(self, path: GroupPath, grid: TimeGrid) -> np.ndarray:
        return evaluate(self.f, self.stack(path, grid))

    def direction(self, h: CMPath) -> GroupPoint:
        idx = self.indices(h.grid)
        A, a = h.A, h.a
        return GroupPoint(np.concatenate([A[j] for j in idx]), np.concatenate([a[j] for j in idx]))

    def right_derive(self, h: CMPath, omega: OmegaForm) -> "CylinderFunction":
        g = right_derive(self.f, self.direction(h), product_omega(omega, len(self.times)))
        return CylinderFunction(self.times, g, self.d, self.N)

    def iterated_right_derive(self, hs: Sequence[CMPath], omega: OmegaForm) -> "CylinderFunction":
        F = self
        for h in reversed(hs):
            F = F.right_derive(h, omega)
        return F

    def is_zero(self) -> bool:
        return self.f.is_zero()

    def to_dict(self) -> dict:
        return {"times": list(self.times), "d": self.d, "N": self.N, "f": self.f.to_dict()}


def embed(f: TestFunction, r: int, k: int) -> TestFunction:
    """View a test function on G as one on G^k reading the r-th factor."""
    d, N = f.dim_w, f.dim_c
    terms = []
    for coef, atoms in f.terms:
        new = []
        for at in atoms:
            lw = np.zeros(k * d)
            lc = np.zeros(k * N)
            lw[r * d:(r + 1) * d] = at.form.lw
            lc[r * N:(r + 1) * N] = at.form.lc
            new.append(Atom(at.kind, AffineForm.make(lw, lc, at.form.const)))
        terms.append((coef, new))
    return TestFunction.from_terms(k * d, k * N, terms)

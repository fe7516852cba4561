"""Experiment configuration: a versioned YAML/JSON tree with strict key checking."""
from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

import yaml

from .group import ConfigurationError, GroupPoint, OmegaForm
from .harness import CMSpec, RunConfig
from .paths import TimeGrid
from .testfuncs import CylinderFunction, TestFunction

SCHEMA_VERSION = 1

DEFAULT_CONFIG: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "dim_w": 2,
    "dim_c": 1,
    "omega": {"mode": "standard", "seed": 0, "scale": 1.0},
    "grid": {"T": 1.0, "steps": 512},
    "mc": {"samples": 100_000, "seed": 20240917, "workers": 1, "tol_mult": 4.0, "chunk_size": 2000,
           "richardson": True},
    "experiment": {
        "m": 2,
        # CM paths as piecewise-constant derivatives on knot intervals; center-heavy so that
        # fourth moments of J_h and Phi_3 settle at 1e5 samples
        "h": [
            {"knots": [0.0, 0.5], "dA": [[0.14, 0.035], [-0.07, 0.14]], "da": [[0.35], [-0.21]]},
            {"knots": [0.0], "dA": [[0.05, -0.15]], "da": [[0.5]]},
            {"knots": [0.0, 0.25, 0.75], "dA": [[-0.1, 0.05], [0.15, 0.1], [0.05, -0.1]], "da": [[0.3], [0.4], [-0.4]]},
            {"knots": [0.0, 0.5], "dA": [[0.05, 0.15], [0.15, -0.05]], "da": [[-0.4], [0.3]]},
        ],
        # Lie-algebra directions for the heat-kernel identities
        "group_h": [{"w": [0.7, -0.2], "c": [0.4]}, {"w": [-0.3, 0.6], "c": [0.25]}],
        # test function on G
        "f": {"dim_w": 2, "dim_c": 1, "terms": [
            {"coef": 1.0, "atoms": [{"kind": "cos", "lw": [0.6, -0.3], "lc": [0.8], "const": 0.2}]},
            {"coef": 0.5, "atoms": [{"kind": "sin", "lw": [0.2, 0.5], "lc": [-0.7], "const": 0.1}]},
        ]},
        # bounded path functionals F(xi) and noise weights Z(B, B0) as cylinder functions; null means Z = 1
        "F": [
            {"times": [0.5, 1.0], "parts": [
                {"dim_w": 2, "dim_c": 1, "terms": [{"coef": 1.0, "atoms": [
                    {"kind": "cos", "lw": [0.7, -0.4], "lc": [0.9], "const": 0.2}]}]},
                {"dim_w": 2, "dim_c": 1, "terms": [{"coef": 1.0, "atoms": [
                    {"kind": "sin", "lw": [0.3, 0.5], "lc": [1.2], "const": 0.1}]}]},
            ]},
        ],
        "Z": [
            None,
            {"times": [0.5], "parts": [
                {"dim_w": 2, "dim_c": 1, "terms": [{"coef": 1.0, "atoms": [
                    {"kind": "cos", "lw": [0.5, 0.5], "lc": [0.6], "const": 0.0}]}]},
            ]},
        ],
        "eps_grid": [-1.0, -0.5, 0.0, 0.5, 1.0],
        "moments_p": [1, 2, 4],
        # polynomial f resolves the O(dt) bias above Monte Carlo noise; steps null means (n/4, n/2, n)
        "convergence": {
            "steps": None,
            "ref_factor": 4,
            "f": {"dim_w": 2, "dim_c": 1, "terms": [{"coef": 1.0, "atoms": [
                {"kind": "lin", "lw": [0.0, 0.0], "lc": [1.0], "const": 0.0},
                {"kind": "lin", "lw": [1.0, 0.5], "lc": [0.0], "const": 0.0}]}]},
            "h": {"knots": [0.0, 0.5], "dA": [[0.2, 1.0], [0.4, 0.8]], "da": [[0.3], [0.1]]},
            "group_h": {"w": [0.2, 1.0], "c": [0.3]},
        },
    },
}

_SCHEMA: dict[str, Any] = {
    "schema_version": int,
    "dim_w": int,
    "dim_c": int,
    "omega": {"mode": str, "seed": int, "scale": float, "matrices": list},
    "grid": {"T": float, "steps": int},
    "mc": {"samples": int, "seed": int, "workers": int, "tol_mult": float, "chunk_size": int, "richardson": bool},
    "experiment": {"m": int, "h": list, "group_h": list, "f": dict, "F": list, "Z": list, "eps_grid": list,
                   "moments_p": list,
                   "convergence": {"steps": list, "ref_factor": int, "f": dict, "h": dict, "group_h": dict}},
}


def _check_keys(data: Any, schema: dict, where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where or 'config'} must be a mapping")
    for key, value in data.items():
        if key not in schema:
            raise ConfigurationError(f"unknown key {where + '.' if where else ''}{key}")
        sub = schema[key]
        if isinstance(sub, dict):
            _check_keys(value, sub, f"{where}.{key}" if where else key)
        elif value is not None:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool) if sub is float else \
                isinstance(value, sub) and not (sub is int and isinstance(value, bool))
            if not ok:
                raise ConfigurationError(f"{where + '.' if where else ''}{key} must be {sub.__name__}")


_LEAF_DICTS = ("f", "h", "group_h")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in _LEAF_DICTS:
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class Config:
    """Validated configuration tree; `data` is the fully merged tree echoed into reports."""

    def __init__(self, data: dict | None = None):
        data = {} if data is None else data
        _check_keys(data, _SCHEMA, "")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
        self.data = _merge(DEFAULT_CONFIG, data)
        self._validate()

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text) if str(path).endswith((".yaml", ".yml")) else json.loads(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        return cls(data or {})

    def _validate(self) -> None:
        d = self.data
        if d["dim_w"] < 1 or d["dim_c"] < 1:
            raise ConfigurationError("dimensions must be >= 1")
        if d["grid"]["steps"] < 2:
            raise ConfigurationError("grid.steps must be >= 2")
        if d["mc"]["samples"] < 100:
            raise ConfigurationError("mc.samples must be >= 100")
        if d["mc"]["chunk_size"] < 1 or d["mc"]["workers"] < 1:
            raise ConfigurationError("mc.chunk_size and mc.workers must be >= 1")
        if d["omega"]["mode"] not in ("standard", "random", "zero", "explicit"):
            raise ConfigurationError(f"unknown omega.mode {d['omega']['mode']!r}")
        # build everything once so errors surface at load time
        self.omega()
        self.grid()
        self.cm_specs()
        self.group_hs()
        self.test_function()
        self.path_functionals()
        self.noise_weights()
        self.convergence_setup()

    def override(self, **kw) -> "Config":
        """Copy with mc.seed / mc.samples / grid.steps replaced where given."""
        data = copy.deepcopy(self.data)
        if kw.get("seed") is not None:
            data["mc"]["seed"] = int(kw["seed"])
        if kw.get("samples") is not None:
            data["mc"]["samples"] = int(kw["samples"])
        if kw.get("steps") is not None:
            data["grid"]["steps"] = int(kw["steps"])
        return Config(data)

    # -- builders ---------------------------------------------------------

    def omega(self) -> OmegaForm:
        o, d, N = self.data["omega"], self.data["dim_w"], self.data["dim_c"]
        mode = o["mode"]
        if mode == "standard":
            om = OmegaForm.standard(d, N).scaled(float(o.get("scale", 1.0)))
        elif mode == "random":
            om = OmegaForm.random(d, N, seed=int(o.get("seed", 0)), scale=float(o.get("scale", 1.0)))
        elif mode == "zero":
            om = OmegaForm.zero(d, N)
        else:
            if "matrices" not in o:
                raise ConfigurationError("omega.mode explicit needs omega.matrices")
            om = OmegaForm.from_list(o["matrices"])
        if (om.d, om.N) != (d, N):
            raise ConfigurationError("omega matrices do not match dim_w / dim_c")
        return om

    def grid(self) -> TimeGrid:
        g = self.data["grid"]
        return TimeGrid(float(g["T"]), int(g["steps"]))

    def run_config(self) -> RunConfig:
        mc = self.data["mc"]
        return RunConfig(self.omega(), self.grid(), samples=int(mc["samples"]), seed=int(mc["seed"]),
                         workers=int(mc["workers"]), tol_mult=float(mc["tol_mult"]),
                         chunk_size=int(mc["chunk_size"]), richardson=bool(mc["richardson"]), echo=self.data)

    def _cm_spec(self, h: dict, where: str) -> CMSpec:
        try:
            spec = CMSpec.make(h["knots"], h["dA"], h["da"])
            if len(spec.dA[0]) != self.data["dim_w"] or len(spec.da[0]) != self.data["dim_c"]:
                raise ValueError("wrong dimensions")
            spec.on(self.grid())
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"{where} is malformed: {exc}") from exc
        return spec

    def _group_point(self, h: dict, where: str) -> GroupPoint:
        if not isinstance(h, dict) or len(h.get("w", ())) != self.data["dim_w"] \
                or len(h.get("c", ())) != self.data["dim_c"]:
            raise ConfigurationError(f"{where} has wrong dimensions")
        return GroupPoint(h["w"], h["c"])

    def cm_specs(self) -> list[CMSpec]:
        return [self._cm_spec(h, f"experiment.h[{i}]") for i, h in enumerate(self.data["experiment"]["h"])]

    def group_hs(self) -> list[GroupPoint]:
        return [self._group_point(h, f"experiment.group_h[{i}]")
                for i, h in enumerate(self.data["experiment"]["group_h"])]

    def convergence_setup(self) -> dict:
        """Steps, reference factor, f, h and group h for the discretization study."""
        conv = self.data["experiment"]["convergence"]
        n = self.data["grid"]["steps"]
        steps = conv["steps"] or [n // 4, n // 2, n]
        if any(not isinstance(s, int) or s < 2 for s in steps):
            raise ConfigurationError("convergence steps must be integers >= 2")
        if conv["ref_factor"] < 2:
            raise ConfigurationError("convergence.ref_factor must be >= 2")
        n_ref = max(steps) * conv["ref_factor"]
        if any(n_ref % s for s in steps):
            raise ConfigurationError("convergence steps must divide the reference grid")
        return {"steps": sorted(steps), "ref_factor": int(conv["ref_factor"]),
                "f": _test_function(conv["f"], self.data["dim_w"], self.data["dim_c"]),
                "h": self._cm_spec(conv["h"], "experiment.convergence.h"),
                "group_h": self._group_point(conv["group_h"], "experiment.convergence.group_h")}

    def test_function(self) -> TestFunction:
        return _test_function(self.data["experiment"]["f"], self.data["dim_w"], self.data["dim_c"])

    def _cylinder(self, spec: dict) -> CylinderFunction:
        try:
            parts = [_test_function(p, self.data["dim_w"], self.data["dim_c"]) for p in spec["parts"]]
            F = CylinderFunction.from_parts(spec["times"], parts)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed cylinder function: {exc}") from exc
        F.indices(self.grid())
        return F

    def path_functionals(self) -> list[CylinderFunction]:
        return [self._cylinder(s) for s in self.data["experiment"]["F"]]

    def noise_weights(self) -> list[CylinderFunction | None]:
        return [None if s is None else self._cylinder(s) for s in self.data["experiment"]["Z"]]


def _test_function(data: dict, d: int, N: int) -> TestFunction:
    try:
        f = TestFunction.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed test function: {exc}") from exc
    if (f.dim_w, f.dim_c) != (d, N):
        raise ConfigurationError("test function dimensions do not match dim_w / dim_c")
    return f

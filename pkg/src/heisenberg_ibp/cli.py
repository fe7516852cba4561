"""Command-line entry point: sample paths, list partitions, run verifications."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import Config
from .group import ConfigurationError
from .harness import (ConvergenceRow, VerificationReport, convergence_ok, convergence_table, girsanov_identity,
                      group_ibp_identity, moment_diagnostics, moment_targets, path_ibp_identity, verify_girsanov,
                      verify_group_ibp, verify_inversion, verify_left_ibp, verify_path_ibp)
from .ibp import enumerate_lambda
from .paths import WienerPath, dump_csv, sample_wiener
from .testfuncs import CylinderFunction

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

IDENTITIES = ("girsanov", "path-ibp", "group-ibp", "left-ibp", "inversion", "moments")
CONVERGENCE_IDENTITIES = ("girsanov", "path-ibp", "group-ibp")

REPORT_COLUMNS = ("identity", "lhs_mean", "lhs_std_error", "lhs_n_samples", "rhs_mean", "rhs_std_error",
                  "rhs_n_samples", "difference", "combined_se", "tol_mult", "discretization_allowance", "passed",
                  "independent_difference", "independent_se", "notes", "config")


# ---------------------------------------------------------------------------
# serialization

def fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def dumps17(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps17(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [dumps17(v, indent, _level + 1) for v in obj]
        if all("\n" not in s for s in items) and sum(len(s) for s in items) < 100:
            return "[" + ", ".join(items) + "]"
        return "[\n" + ",\n".join(pad + s for s in items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_row(rep: VerificationReport) -> dict:
    row: dict[str, Any] = {"identity": rep.identity}
    for side in ("lhs", "rhs"):
        est = getattr(rep, side)
        row[f"{side}_mean"] = fmt_float(est.mean)
        row[f"{side}_std_error"] = fmt_float(est.std_error)
        row[f"{side}_n_samples"] = est.n_samples
    for name in ("difference", "combined_se", "tol_mult", "discretization_allowance"):
        row[name] = fmt_float(getattr(rep, name))
    row["passed"] = rep.passed
    row["independent_difference"] = fmt_float(rep.independent_difference)
    row["independent_se"] = fmt_float(rep.independent_se)
    row["notes"] = dumps17(rep.notes, indent=0).replace("\n", "")
    row["config"] = dumps17(rep.config, indent=0).replace("\n", "")
    return row


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _emit_reports(reports: list[VerificationReport], out: Path, fmt: str | None, stem: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    seen: dict[str, int] = {}
    for rep in reports:
        k = seen.get(rep.identity, 0)
        seen[rep.identity] = k + 1
        name = rep.identity if k == 0 else f"{rep.identity}_{k}"
        (out / f"{name}.json").write_text(dumps17(rep.to_dict()) + "\n")
    rows = [report_row(r) for r in reports]
    write_csv(out / f"{stem}.csv", REPORT_COLUMNS, rows)
    if fmt == "json":
        print(dumps17([r.to_dict() for r in reports]))
    elif fmt == "csv":
        w = csv.DictWriter(sys.stdout, fieldnames=list(REPORT_COLUMNS))
        w.writeheader()
        w.writerows(rows)
    else:
        for rep in reports:
            print(rep.summary())


# ---------------------------------------------------------------------------
# subcommands

def cmd_sample(cfg: Config, args) -> int:
    rc = cfg.run_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    W = sample_wiener(rc.grid, rc.d, rc.N, seed=[rc.seed, 0], size=args.count)
    written = []
    for k in range(args.count):
        path = out / f"path_{k:03d}.csv"
        dump_csv(path, WienerPath(rc.grid, W.B[k], W.B0[k]), rc.omega)
        written.append(str(path))
    (out / "sample_config.json").write_text(dumps17(rc.config_echo()) + "\n")
    if args.fmt == "json":
        print(dumps17({"files": written, "config": rc.config_echo()}))
    else:
        print("\n".join(written))
    return EXIT_OK


def cmd_partitions(args) -> int:
    try:
        parts = enumerate_lambda(args.m)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.fmt == "json":
        print(dumps17({"m": args.m, "count": len(parts), "partitions": [list(map(list, p.blocks)) for p in parts]}))
    elif args.fmt == "csv":
        print("index,partition")
        for i, p in enumerate(parts):
            print(f'{i},"{p}"')
    else:
        print(f"|Lambda_{args.m}| = {len(parts)}")
        for p in parts:
            print(p)
    return EXIT_OK


def _run_verifications(cfg: Config, identity: str) -> list[VerificationReport]:
    rc = cfg.run_config()
    exp = cfg.data["experiment"]
    m = int(exp["m"])
    if identity == "girsanov":
        h = cfg.cm_specs()[0]
        return [verify_girsanov(F, Z, h, rc) for F in cfg.path_functionals() for Z in cfg.noise_weights()]
    if identity == "path-ibp":
        hs = cfg.cm_specs()
        if not 1 <= m <= min(3, len(hs)):
            raise ConfigurationError(f"path-ibp needs 1 <= m <= 3 and at least m paths in experiment.h (m={m})")
        return [verify_path_ibp(hs[:m], F, rc) for F in cfg.path_functionals()]
    if identity in ("group-ibp", "left-ibp"):
        ghs = cfg.group_hs()
        if not 1 <= m <= min(3, len(ghs)):
            raise ConfigurationError(f"{identity} needs 1 <= m <= 3 and at least m entries in experiment.group_h")
        fn = verify_group_ibp if identity == "group-ibp" else verify_left_ibp
        return [fn(ghs[:m], cfg.test_function(), rc)]
    if identity == "inversion":
        return [verify_inversion(cfg.test_function(), rc)]
    raise ValueError(identity)


def cmd_moments(cfg: Config, args) -> int:
    rc = cfg.run_config()
    hs = cfg.cm_specs()
    if len(hs) < 4:
        raise ConfigurationError("moments needs four paths in experiment.h")
    ps = cfg.data["experiment"]["moments_p"]
    if any(p not in (1, 2, 4) for p in ps):
        raise ConfigurationError("experiment.moments_p entries must be 1, 2 or 4")
    targets = moment_targets(hs[:4], rc, eps_grid=cfg.data["experiment"]["eps_grid"])
    rows = moment_diagnostics(targets, ps, rc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"identity": "moments", "passed": all(r.passed for r in rows), "rows": [asdict(r) for r in rows],
               "config": rc.config_echo()}
    (out / "moments.json").write_text(dumps17(payload) + "\n")
    columns = ("target", "p", "estimate_half", "estimate_full", "ratio", "n_samples", "passed")
    csv_rows = [{k: fmt_float(v) if isinstance(v, float) else v for k, v in asdict(r).items()} for r in rows]
    write_csv(out / "moments.csv", columns, csv_rows)
    if args.fmt == "json":
        print(dumps17(payload))
    elif args.fmt == "csv":
        w = csv.DictWriter(sys.stdout, fieldnames=list(columns))
        w.writeheader()
        w.writerows(csv_rows)
    else:
        for r in rows:
            flag = "PASS" if r.passed else "FAIL"
            print(f"[{flag}] E|{r.target}|^{r.p:g}: half={r.estimate_half:.6g} full={r.estimate_full:.6g} "
                  f"ratio={r.ratio:.4f}")
    return EXIT_OK if payload["passed"] else EXIT_FAILED


def cmd_verify(cfg: Config, args) -> int:
    if args.identity == "moments":
        return cmd_moments(cfg, args)
    reports = _run_verifications(cfg, args.identity)
    _emit_reports(reports, Path(args.out), args.fmt, args.identity.replace("-", "_"))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def convergence_runs(cfg: Config, identities: Sequence[str] = CONVERGENCE_IDENTITIES) -> dict[str, dict]:
    """Coupled multi-grid runs of the selected identities; returns rows and the first-order check per identity."""
    rc = cfg.run_config()
    setup = cfg.convergence_setup()
    f, h, gh = setup["f"], setup["h"], setup["group_h"]
    makers = {
        "girsanov": lambda: girsanov_identity(CylinderFunction.at_time(f, rc.grid.T), None, h, rc.omega),
        "path-ibp": lambda: path_ibp_identity([h], CylinderFunction.at_time(f, rc.grid.T), rc.omega),
        "group-ibp": lambda: group_ibp_identity([gh], f, rc.omega),
    }
    out = {}
    for name in identities:
        rows = convergence_table(makers[name](), rc, steps=setup["steps"], ref_factor=setup["ref_factor"])
        out[name] = {"rows": rows, "check": convergence_ok(rows, tol_mult=rc.tol_mult)}
    return out


def cmd_convergence(cfg: Config, args) -> int:
    identities = args.identity or list(CONVERGENCE_IDENTITIES)
    results = convergence_runs(cfg, identities)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    columns = ("identity",) + tuple(ConvergenceRow.__dataclass_fields__)
    rows = [{"identity": name, **{k: fmt_float(v) if isinstance(v, float) else v for k, v in asdict(r).items()}}
            for name, res in results.items() for r in res["rows"]]
    write_csv(out / "convergence.csv", columns, rows)
    payload = {name: {"rows": [asdict(r) for r in res["rows"]], "check": res["check"]} for name, res in results.items()}
    payload["config"] = cfg.run_config().config_echo()
    (out / "convergence.json").write_text(dumps17(payload) + "\n")
    passed = all(res["check"]["passed"] for res in results.values())
    if args.fmt == "json":
        print(dumps17(payload))
    elif args.fmt == "csv":
        w = csv.DictWriter(sys.stdout, fieldnames=list(columns))
        w.writeheader()
        w.writerows(rows)
    else:
        for name, res in results.items():
            c = res["check"]
            flag = "PASS" if c["passed"] else "FAIL"
            print(f"[{flag}] convergence {name}: C={c['C']:.4g} +- {c['C_se']:.2g} monotone={c['monotone']} "
                  f"first_order={c['first_order']} loglog_slope={c['loglog_slope']:.3f}")
            for r in res["rows"]:
                print(f"    n={r.n:5d} dt={r.dt:.3e} gap={r.gap:+.4e} bias={r.bias:+.4e} +- {r.bias_se:.2e}")
    return EXIT_OK if passed else EXIT_FAILED


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON config (defaults built in)")
    common.add_argument("--seed", type=int, help="override mc.seed")
    common.add_argument("--samples", type=int, help="override mc.samples")
    common.add_argument("--steps", type=int, help="override grid.steps")
    common.add_argument("--out", metavar="DIR", default="reports", help="output directory (default: reports)")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json", help="print JSON to stdout")
    fmt.add_argument("--csv", dest="fmt", action="store_const", const="csv", help="print CSV to stdout")

    parser = argparse.ArgumentParser(prog="heisenberg-ibp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sample", parents=[common], help="dump Brownian paths as CSV")
    p.add_argument("--count", type=int, default=1, help="number of paths (default 1)")
    p = sub.add_parser("partitions", parents=[common], help="list partitions with blocks of size <= 4")
    p.add_argument("m", type=int)
    p = sub.add_parser("verify", parents=[common], help="run a Monte Carlo verification")
    p.add_argument("identity", choices=IDENTITIES)
    p = sub.add_parser("convergence", parents=[common], help="discretization study on coupled grids")
    p.add_argument("--identity", action="append", choices=CONVERGENCE_IDENTITIES,
                   help="restrict to one identity (repeatable)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "partitions":
        return cmd_partitions(args)
    try:
        cfg = Config.load(args.config) if args.config else Config()
        cfg = cfg.override(seed=args.seed, samples=args.samples, steps=args.steps)
        if args.command == "sample":
            if args.count < 1:
                raise ConfigurationError("--count must be >= 1")
            return cmd_sample(cfg, args)
        if args.command == "verify":
            return cmd_verify(cfg, args)
        return cmd_convergence(cfg, args)
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

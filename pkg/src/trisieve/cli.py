"""Command-line entry point: ``trisieve <command> [options]``.

Every command prints a JSON report that embeds the resolved configuration,
and exits with status 1 when its gate fails (2 for usage errors and
infeasible inputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments
from ._accel import backend_name
from .config import ConfigError, ExperimentConfig, load_config
from .exponents import InfeasibleBoxError, format_table


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trisieve", description="Triple-sieve search experiments.")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--slack", type=float, help="per-dimension log2 tolerance")
    p.add_argument("--output", help="also write the report to this path")
    p.add_argument("--timings", action="store_true", help="include wall-clock fields in reports")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("exponents", help="optimize the time exponent and print the comparison table")
    e.add_argument("--m-exp", type=float)
    e.add_argument("--box", type=float, nargs=4, metavar=("A_LO", "A_HI", "AP_LO", "AP_HI"))
    e.add_argument("--tol", type=float)
    e.add_argument("--json", action="store_true", help="JSON only, no table")

    g = sub.add_parser("geometry-verify", help="Monte-Carlo band probabilities against exponents and quadrature")
    g.add_argument("--dims", type=int, nargs="+")
    g.add_argument("--samples", type=int)

    r = sub.add_parser("rpc-verify", help="decoder correctness and the collision law")
    r.add_argument("--instances", type=int)
    r.add_argument("--draws", type=int, help="code draws for the collision test")

    s = sub.add_parser("sieve-emulate", help="search emulation checks")
    s.add_argument("--chi-square", action="store_true", help="distribution fidelity tests")
    s.add_argument("--ledger", action="store_true", help="cost ledger identity")
    s.add_argument("--goodness", action="store_true", help="rate of good (L, C, C') draws")
    s.add_argument("--tsol", action="store_true", help="|T_sol| concentration")
    s.add_argument("--draws", type=int)

    v = sub.add_parser("svp-solve", help="solve SVP on a basis file, or on random bases with --random")
    v.add_argument("--basis")
    v.add_argument("--random", type=int, metavar="N", help="run N seeded random bases instead")
    v.add_argument("--dim", type=int)

    a = sub.add_parser("aa-demo", help="fixed-point amplitude amplification contract")
    a.add_argument("--good-mass", type=float)
    a.add_argument("--delta", type=float)
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    top = {k: getattr(args, k) for k in ("seed", "workers", "slack", "output") if getattr(args, k) is not None}
    if top:
        cfg = cfg.replace(**top)
    cmd = args.command
    if cmd == "exponents":
        ch = {}
        if args.m_exp is not None:
            ch["m_exp"] = args.m_exp
        if args.box is not None:
            ch["box"] = ((args.box[0], args.box[1]), (args.box[2], args.box[3]))
        if args.tol is not None:
            ch["tolerance"] = args.tol
        cfg = cfg.replace("exponents", **ch) if ch else cfg
    elif cmd == "geometry-verify":
        ch = {}
        if args.dims:
            ch["dims"] = tuple(args.dims)
        if args.samples:
            ch["samples"] = args.samples
        cfg = cfg.replace("geometry", **ch) if ch else cfg
    elif cmd == "rpc-verify":
        ch = {}
        if args.instances:
            ch["instances"] = args.instances
        if args.draws:
            ch["collision_draws"] = args.draws
        cfg = cfg.replace("rpc", **ch) if ch else cfg
    elif cmd == "sieve-emulate" and args.draws:
        cfg = cfg.replace("sieve", draws=args.draws)
    elif cmd == "svp-solve":
        ch = {}
        if args.basis:
            ch["basis"] = args.basis
        if args.random:
            ch["instances"] = args.random
        if args.dim:
            ch["d"] = args.dim
        cfg = cfg.replace("svp", **ch) if ch else cfg
    elif cmd == "aa-demo":
        ch = {}
        if args.good_mass is not None:
            ch["good_mass"] = args.good_mass
        if args.delta is not None:
            ch["delta"] = args.delta
        cfg = cfg.replace("aa", **ch) if ch else cfg
    return cfg


def _run(args, cfg: ExperimentConfig) -> dict:
    cmd = args.command
    if cmd == "exponents":
        return experiments.run_exponents(cfg)
    if cmd == "geometry-verify":
        return experiments.run_geometry(cfg)
    if cmd == "rpc-verify":
        dec = experiments.run_rpc_decode(cfg)
        col = experiments.run_rpc_collision(cfg)
        return {"passed": dec["passed"] and col["passed"], "decode": dec, "collision": col}
    if cmd == "sieve-emulate":
        chosen = [n for n in ("chi_square", "ledger", "goodness", "tsol") if getattr(args, n)]
        chosen = chosen or ["chi_square", "ledger"]
        runners = {
            "chi_square": experiments.run_chi_square,
            "ledger": experiments.run_ledger_identity,
            "goodness": experiments.run_goodness,
            "tsol": experiments.run_tsol_concentration,
        }
        parts = {n: runners[n](cfg) for n in chosen}
        return {"passed": all(p["passed"] for p in parts.values()), **parts}
    if cmd == "svp-solve":
        if args.random:
            return experiments.run_svp_batch(cfg, args.timings)
        return experiments.run_svp_basis(cfg, args.timings)
    if cmd == "aa-demo":
        return experiments.run_aa(cfg)
    raise ValueError(cmd)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        result = _run(args, cfg)
    except (ConfigError, InfeasibleBoxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = {"command": args.command, "backend": backend_name(), "config": cfg.to_dict(), **result}
    text = json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if args.command == "exponents" and not args.json:
        print(format_table(result["table"]), file=sys.stderr)
    sys.stdout.write(text)
    if cfg.output:
        Path(cfg.output).write_text(text)
    return 0 if result["passed"] else 1


def _jsonable(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())

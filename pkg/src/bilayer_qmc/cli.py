"""Command-line entry point: ``bilayer-qmc <subcommand> ...``.

Exit status is 0 on success. On failure a JSON object
``{"error": <type>, "message": <text>}`` is written to stderr and the exit
status is 2 for configuration/usage errors and 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config


def _load(args, mode: str) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {"mode": mode}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if mode == "replica-eh" and cfg.replica.n_rep is None:
        raise ConfigError("replica-eh requires [replica] n_rep in the config")
    cfg = cfg.replace(**changes)
    from .config import validate

    validate(cfg)
    return cfg


def cmd_run(args) -> dict:
    from .driver import run_sweep

    cfg = _load(args, "observables")
    if len(cfg.lattice.L) != 1 or len(cfg.couplings.g) != 1:
        raise ConfigError("'run' takes a single (L, g) point; use 'sweep' for grids")
    return {k: str(v) for k, v in run_sweep(cfg, args.out).items()}


def cmd_sweep(args) -> dict:
    from .driver import run_sweep

    cfg = _load(args, "observables")
    return {k: str(v) for k, v in run_sweep(cfg, args.out).items()}


def cmd_replica(args) -> dict:
    from .driver import run_sweep

    cfg = _load(args, "replica-eh")
    return {k: str(v) for k, v in run_sweep(cfg, args.out).items()}


def cmd_ed(args) -> dict:
    from .driver import run_ed

    cfg = _load(args, "ed")
    reports = run_ed(cfg)
    text = json.dumps(reports if len(reports) > 1 else reports[0], indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        return {"report": args.out}
    print(text)
    return {}


def _rows(path):
    from .estimators import read_csv_rows

    return read_csv_rows(Path(path).read_text())


def cmd_analyze(args) -> dict:
    from .fss import analyze

    report = analyze(_rows(args.inp), seed=args.seed or 0)
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        return {"report": args.out}
    print(text)
    return {}


def cmd_collapse(args) -> dict:
    from .fss import CollapseParams, SweepDataset, analyze, collapse_cost, collapse_csv

    rows = _rows(args.inp)
    ds = SweepDataset.from_rows(rows)
    gc = args.gc if args.gc is not None else analyze(rows).get("g_c")
    if gc is None:
        raise ConfigError("could not determine g_c; pass --gc")
    params = CollapseParams(gc, args.nu, args.gamma)
    report = {"g_c": gc, "nu": args.nu, "gamma": args.gamma, "cost": {}}
    for name in ("U2", "chi"):
        if name in ds.obs:
            report["cost"][name] = collapse_cost(ds, params, name)
    if args.csv:
        Path(args.csv).write_text(collapse_csv(ds, params))
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return {}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bilayer-qmc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--workers", type=int)

    for name, fn, helptext in (
        ("run", cmd_run, "single (L, g) observable run"),
        ("sweep", cmd_sweep, "observable runs over an (L, g) grid"),
        ("replica-eh", cmd_replica, "entanglement-Hamiltonian correlators on the replica manifold"),
        ("ed", cmd_ed, "exact-diagonalization report"),
    ):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("analyze", help="Binder crossings and g_c extrapolation")
    common(sp, config_required=False)
    sp.add_argument("--in", dest="inp", required=True)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("collapse", help="data-collapse costs and collapsed coordinates")
    common(sp, config_required=False)
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--gc", type=float)
    sp.add_argument("--nu", type=float, default=0.63)
    sp.add_argument("--gamma", type=float, default=1.24)
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_collapse)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            sys.stderr.write(json.dumps({"error": "UsageError", "message": "invalid arguments"}) + "\n")
            return 2
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        result = args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except Exception as exc:  # noqa: BLE001 -- surfaced as machine-readable error
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    if result:
        print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point for the experiment harness.

Subcommands::

    berknash run <config.json>        execute an experiment config
    berknash benchmark3 [--dump]      show or dump the builtin instance
    berknash audit-duality <config>   run the duality audit for a config
    berknash report <rundir>          summarize a finished run directory

Exit codes: 0 success, 2 config/parse error, 3 validation error,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .harness import ConfigError, benchmark3, load_config, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    artifacts = run_experiment(cfg)
    print(f"experiment: {cfg.kind}")
    print(f"output dir: {artifacts.output_dir}")
    for name, path in artifacts.csv_paths.items():
        print(f"  {name}: {path}")
    print(f"  manifest: {artifacts.manifest_path}")
    return EXIT_OK


def _cmd_benchmark3(args) -> int:
    m, cs = benchmark3()
    if args.dump:
        payload = {
            "mdp": {
                "kernel": m.kernel.tolist(),
                "rewards": m.rewards.tolist(),
                "discount": m.discount,
                "initial_dist": m.initial_dist.tolist(),
            },
            "conjectures": {"epsilons": [q.param for q in cs]},
        }
        json.dump(payload, sys.stdout, indent=2)
        print()
    else:
        print(f"benchmark3: {m.num_states} states, {m.num_actions} actions, "
              f"discount {m.discount}")
        print(f"conjectures: {[q.label for q in cs]}")
        print("use --dump for the full tables as a config snippet")
    return EXIT_OK


def _cmd_audit_duality(args) -> int:
    cfg = load_config(args.config)
    audit_dir = cfg.output_dir.with_name(cfg.output_dir.name + "-duality")
    cfg = replace(
        cfg,
        kind="duality-audit",
        output_dir=audit_dir,
        raw={**cfg.raw, "experiment": "duality-audit", "output_dir": str(audit_dir)},
    )
    artifacts = run_experiment(cfg)
    path = artifacts.csv_paths["duality"]
    print(f"duality audit written to {path}")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    worst_primal = max(float(r["primal_gap"]) for r in rows)
    worst_dual = max(float(r["dual_gap"]) for r in rows)
    worst_slack = max(float(r["max_slackness_violation"]) for r in rows)
    print(f"max primal gap:  {worst_primal:.3e}")
    print(f"max dual gap:    {worst_dual:.3e}")
    print(f"max slack abuse: {worst_slack:.3e}")
    return EXIT_OK


def _cmd_report(args) -> int:
    run_dir = Path(args.rundir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json in {run_dir}")
    manifest = json.loads(manifest_path.read_text())
    print(f"experiment: {manifest['experiment']}  seed: {manifest['seed']}")
    print(f"versions: {manifest['versions']}")
    for name, fname in manifest.get("artifacts", {}).items():
        path = run_dir / fname
        if path.suffix != ".csv" or not path.exists():
            print(f"  {name}: {fname}")
            continue
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        print(f"  {name}: {fname} ({len(rows)} rows)")
        if manifest["experiment"] == "case-study" and name == "frequencies":
            for r in rows:
                print(f"    arm {r['arm']} ({r['label']}): "
                      f"frequency {float(r['frequency']):.4f}")
        if manifest["experiment"] == "zooming" and name == "final_set":
            params = sorted(float(r["param"]) for r in rows)
            print(f"    final params: {[round(p, 6) for p in params]}")
        if manifest["experiment"] == "zooming" and name == "param_trace":
            tail = [float(r["param"]) for r in rows[-max(1, len(rows) // 10):]]
            print(f"    median selected param, last 10%: {np.median(tail):.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="berknash",
        description="Berk-Nash equilibrium experiments on misspecified MDPs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("benchmark3", help="show the builtin benchmark instance")
    p_bench.add_argument("--dump", action="store_true",
                         help="print full tables as a JSON config snippet")
    p_bench.set_defaults(func=_cmd_benchmark3)

    p_audit = sub.add_parser("audit-duality", help="run the LP duality audit")
    p_audit.add_argument("config", help="path to a JSON experiment config")
    p_audit.set_defaults(func=_cmd_audit_duality)

    p_report = sub.add_parser("report", help="summarize a run directory")
    p_report.add_argument("rundir", help="directory produced by `berknash run`")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands:
  run             execute an experiment from a JSON config
  ingest          normalise a price CSV onto the trading-day clock
  bootstrap-null  build belief banks and emit the bootstrapped MMD null

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .data_io import ingest_csv, write_stream_csv
from .errors import CapacityError, ConfigError, DataError, NumericError

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigregime",
        description="Signature-kernel regime detection and clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="JSON experiment config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out-dir", default=None, help="override the output directory")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads for repeat runs (default: "
                          "SIGREGIME_THREADS or 1)")
    run.add_argument("--no-figures", action="store_true",
                     help="skip figure rendering, emit series and reports only")

    ingest = sub.add_parser("ingest", help="normalise a CSV price file")
    ingest.add_argument("--csv", required=True, help="input CSV with a timestamp column")
    ingest.add_argument("--out", required=True, help="output path for the normalised stream")

    null = sub.add_parser("bootstrap-null", help="emit the bootstrapped MMD null for a config")
    null.add_argument("--config", required=True, help="JSON experiment config")
    null.add_argument("--seed", type=int, default=None)
    null.add_argument("--out", default=None, help="output JSON path (default: stdout)")
    null.add_argument("--threads", type=int, default=None)
    return parser


def _default_threads() -> int:
    env = os.environ.get("SIGREGIME_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SIGREGIME_THREADS must be an integer, got {env!r}") from None
    return 1


def _apply_overrides(cfg, args):
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        updates["out_dir"] = args.out_dir
    threads = getattr(args, "threads", None)
    updates["threads"] = threads if threads is not None else \
        (cfg.threads if cfg.threads != 1 else _default_threads())
    if getattr(args, "no_figures", False):
        updates["figures"] = False
    return replace(cfg, **updates)


def _cmd_run(args) -> int:
    from .experiments import run_experiment
    cfg = _apply_overrides(load_config(args.config), args)
    report = run_experiment(cfg)
    out = cfg.out_dir or f"sigregime-{cfg.experiment}"
    print(f"wrote {cfg.experiment} artifacts to {Path(out).resolve()}")
    agg = report.get("metrics", {})
    if isinstance(agg, dict) and "total" in agg:
        total = agg["total"]
        if total.get("mean") is not None:
            print(f"total accuracy: {total['mean']:.3f} +/- {total.get('std') or 0.0:.3f}")
    return 0


def _cmd_ingest(args) -> int:
    stream, report = ingest_csv(args.csv)
    write_stream_csv(stream, args.out, columns=report.columns)
    print(f"ingested {report.n_rows} rows ({report.n_dropped_missing} dropped for "
          f"missing values, {report.n_unparseable} unparseable) -> {args.out}")
    return 0


def _cmd_bootstrap_null(args) -> int:
    from .detect import build_beliefs
    from .mmd import bootstrap_null
    cfg = _apply_overrides(load_config(args.config), args)
    from .experiments import _belief_models
    beliefs = build_beliefs(_belief_models(cfg), cfg.belief_bank_size, cfg.subpath_len,
                            cfg.mesh, cfg.transformer(), include_time=cfg.include_time,
                            seed=cfg.seed + 777)
    out = {}
    for i, (bank, name) in enumerate(zip(beliefs.banks, beliefs.names)):
        null = bootstrap_null(bank, cfg.ensemble_size, cfg.bootstrap_pairs, cfg.kernel,
                              seed=cfg.seed + 55 + i, alpha=cfg.alpha)
        out[name] = {"alpha": cfg.alpha, "critical_value": null.critical_value,
                     "samples": null.samples.tolist()}
    payload = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(payload + "\n")
        print(f"wrote null distributions to {args.out}")
    else:
        print(payload)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "ingest": _cmd_ingest, "bootstrap-null": _cmd_bootstrap_null}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, CapacityError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

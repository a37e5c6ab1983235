"""Command-line entry point.

Subcommands::

    run <config> [--out DIR] [--csv]
    diagnose <chain> --lag L [--out FILE]
    table <artifact>... [--out FILE]
    rate <config> [--out DIR]

Outputs go under ``$FISHERMALA_OUT`` (default ``./fishermala-out``) unless
``--out`` is given.  Exit codes: 0 success, 1 runtime failure, 2 invalid
configuration or arguments.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import acf, esjd, ess, ess_time_curve
from .experiments import TABLE_COLUMNS, aggregate, load_config, run_experiment, run_rate
from .samplers import ChainError, ConfigError

__all__ = ["main", "cmd_run", "cmd_diagnose", "cmd_table", "cmd_rate", "EXIT_OK", "EXIT_RUNTIME",
           "EXIT_CONFIG"]

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

logger = logging.getLogger("fishermala")


def cmd_run(config_path, out=None, csv_export=False):
    cfg = load_config(config_path)
    art = run_experiment(cfg, out)
    if csv_export:
        for chain in sorted(art.directory.glob("*.chain")):
            io.export_chain_csv(io.read_chain(chain), chain.with_suffix(".csv"))
    return art


def cmd_rate(config_path, out=None):
    return run_rate(load_config(config_path), out)


def cmd_diagnose(chain_path, lag, out=None):
    """ACF, ESS, ESJD and the ESS-vs-time curve of a stored chain."""
    record = io.read_chain(chain_path)
    coll = record.collection()
    if not 1 <= lag < coll.shape[0]:
        raise ConfigError(f"--lag must satisfy 1 <= L < {coll.shape[0]}, got {lag}")
    rep = ess(coll, lag)
    start = record.phase_marks["collect"] - record.offset
    wall = record.wall_times[start:]
    report = {
        "format": "fishermala-diagnostics",
        "version": io.FORMAT_VERSION,
        "chain": str(chain_path),
        "kind": record.kind,
        "lag": lag,
        "n_samples": coll.shape[0],
        "acf": [acf(coll[:, i], lag).rho for i in range(record.d)],
        "iat": rep.iat,
        "ess_per_dim": rep.ess_per_dim,
        "ess": rep.ess,
        "esjd": esjd(coll),
        "acceptance": record.acceptance_rate(),
        "ess_time": ess_time_curve(coll, wall, lag) if np.all(np.isfinite(wall)) else None,
    }
    bin_path = io.chain_paths(chain_path)[0]
    out = Path(out) if out is not None else bin_path.with_suffix(".diagnose.json")
    io.write_json(report, out)
    return report, out


def _load_rows(path):
    path = Path(path)
    summary = path / "summary.json" if path.is_dir() else path
    try:
        raw = io.read_json(summary)
    except (OSError, json.JSONDecodeError) as exc:
        raise io.FormatError(f"cannot read summary {summary}: {exc}") from exc
    if raw.get("format") != "fishermala-summary":
        raise io.FormatError(f"{summary}: not a run summary")
    return raw["rows"]


def cmd_table(artifacts, out=None):
    rows = [row for a in artifacts for row in _load_rows(a)]
    table = aggregate(rows)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for row in table:
            w.writerow(row)
    finally:
        if out:
            fh.close()
    return table


def _parser():
    p = argparse.ArgumentParser(prog="fishermala", description="Adaptive Langevin samplers for Bayesian inversion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="artifact directory (default under $FISHERMALA_OUT)")
    r.add_argument("--csv", action="store_true", help="also export chains as CSV")
    d = sub.add_parser("diagnose", help="recompute diagnostics of a stored chain")
    d.add_argument("chain")
    d.add_argument("--lag", type=int, required=True)
    d.add_argument("--out")
    t = sub.add_parser("table", help="aggregate run summaries into one CSV")
    t.add_argument("artifacts", nargs="+")
    t.add_argument("--out")
    a = sub.add_parser("rate", help="Fisher-estimate convergence rate experiment")
    a.add_argument("config")
    a.add_argument("--out")
    return p


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            art = cmd_run(args.config, args.out, args.csv)
            print(art.directory)
        elif args.command == "rate":
            art = cmd_rate(args.config, args.out)
            print(f"{art.directory} slope={art.summary[0]['slope']:.4f}")
        elif args.command == "diagnose":
            _, out = cmd_diagnose(args.chain, args.lag, args.out)
            print(out)
        else:
            cmd_table(args.artifacts, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChainError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (io.FormatError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

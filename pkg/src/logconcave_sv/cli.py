"""Batch runner.

Config files are INI-style: one section per experiment, flat ``key = value``
lines, nested ensembles through dotted keys::

    [tall_gaussian]
    kind = sv_tail
    ensemble.kind = gaussian
    N = 200
    n = 50
    thresholds = 0.1, 0.2
    normalization = sqrt_N
    trials = 5000
    seed = 1

    [columns_l1]
    kind = projected_sv_tail
    ensemble.kind = independent_columns
    ensemble.column.kind = ell1_ball
    ...

``ensemble.kind`` is one of gaussian, uniform_cube, laplace, ell1_ball,
independent_columns (with ``ensemble.column.*``) or concatenated (with
``ensemble.base.*`` and ``ensemble.copies``). Remaining keys are the fields
of :class:`~logconcave_sv.montecarlo.ExperimentConfig`.

Each experiment appends one JSON object per line to the output file, with
fields in this order: experiment, kind, N, n, config, estimates, extra,
seconds, version. Floats are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from typing import Iterable

from . import __version__
from .montecarlo import RESERVED_SECTION, ConfigError, ExperimentConfig, run_experiment

log = logging.getLogger(__name__)

CSV_COLUMNS = ["experiment", "N", "n", "threshold", "normalization", "p_hat", "ci_low", "ci_high", "trials", "discards"]

EXIT_CONFIG = 2
EXIT_OUTPUT = 3
EXIT_RECORDS = 4


class RecordsError(ValueError):
    pass


# -- config text ------------------------------------------------------------

def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, default_section=RESERVED_SECTION)
    cp.optionxform = str  # N and n are different keys
    return cp


def parse_config(text: str) -> list[ExperimentConfig]:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    if not cp.sections():
        raise ConfigError("config defines no experiment sections")
    return [ExperimentConfig.from_mapping(name, dict(cp[name])) for name in cp.sections()]


def emit_config(configs: Iterable[ExperimentConfig]) -> str:
    cp = _parser()
    for cfg in configs:
        cp[cfg.name] = cfg.to_mapping()
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- records ----------------------------------------------------------------

def _dumps(obj) -> str:
    """JSON with floats at 17 significant digits (non-finite as null)."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, float):
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dumps(v) for v in obj) + "]"
    if hasattr(obj, "item"):  # numpy scalar
        return _dumps(obj.item())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def make_record(cfg: ExperimentConfig, result, seconds: float) -> dict:
    return {
        "experiment": cfg.name,
        "kind": cfg.kind,
        "N": cfg.N,
        "n": cfg.n,
        "config": cfg.to_mapping(),
        "estimates": [e.as_dict() for e in result.estimates],
        "extra": result.extra,
        "seconds": seconds,
        "version": __version__,
    }


def read_records(lines: Iterable[str]) -> list[dict]:
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict) or not {"experiment", "N", "n", "estimates"} <= rec.keys():
                raise ValueError("missing record fields")
        except ValueError as exc:
            raise RecordsError(f"line {lineno}: malformed record ({exc})") from None
        records.append(rec)
    return records


def summary_rows(records: list[dict]) -> list[list]:
    rows = []
    for rec in records:
        for est in rec["estimates"]:
            rows.append([
                rec["experiment"], rec["N"], rec["n"], est["threshold"], est["normalization"],
                est["p_hat"], est["ci_low"], est["ci_high"], est["trials"], est["discarded_degenerate"],
            ])
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def write_csv(header: list[str], rows: list[list], out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def tail_curve_rows(records: list[dict], experiment: str, normalization: str | None = None) -> list[list]:
    ests = [e for r in records if r["experiment"] == experiment for e in r["estimates"]]
    if not ests:
        return []
    norm = normalization or ests[0]["normalization"]
    rows = [[e["threshold"], e["p_hat"], e["ci_low"], e["ci_high"]] for e in ests if e["normalization"] == norm]
    rows.sort(key=lambda r: r[0])
    return rows


# -- commands ---------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            configs = parse_config(fh.read())
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: schema violation: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        configs = [replace(c, seed=args.seed) for c in configs]
    try:
        out = open(args.out, "a", encoding="utf-8") if args.out != "-" else sys.stdout
    except OSError as exc:
        print(f"error: output path not writable: {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_OUTPUT
    records = []
    try:
        for cfg in configs:
            t0 = time.perf_counter()
            result = run_experiment(cfg, threads=args.threads)
            rec = make_record(cfg, result, time.perf_counter() - t0)
            records.append(rec)
            if args.format == "jsonl":
                out.write(_dumps(rec) + "\n")
                out.flush()
        if args.format == "csv":
            write_csv(CSV_COLUMNS, summary_rows(records), out)
    except (ValueError, RuntimeError) as exc:
        print(f"error: experiment failed: {exc}", file=sys.stderr)
        return 1
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _load_records(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return read_records(fh)


def _open_out(path: str | None):
    return open(path, "w", encoding="utf-8", newline="") if path and path != "-" else sys.stdout


def cmd_summarize(args) -> int:
    try:
        records = _load_records(args.records)
    except OSError as exc:
        print(f"error: cannot read {args.records}: {exc.strerror}", file=sys.stderr)
        return EXIT_RECORDS
    except RecordsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RECORDS
    rows = summary_rows(records)
    try:
        out = _open_out(args.out)
    except OSError as exc:
        print(f"error: output path not writable: {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_OUTPUT
    if args.format == "jsonl":
        for r in rows:
            out.write(_dumps(dict(zip(CSV_COLUMNS, r))) + "\n")
    else:
        write_csv(CSV_COLUMNS, rows, out)
    if out is not sys.stdout:
        out.close()
    return 0


def cmd_tail_curve(args) -> int:
    try:
        records = _load_records(args.records)
    except OSError as exc:
        print(f"error: cannot read {args.records}: {exc.strerror}", file=sys.stderr)
        return EXIT_RECORDS
    except RecordsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RECORDS
    rows = tail_curve_rows(records, args.experiment, args.normalization)
    if not rows:
        print(f"warning: no estimates for experiment {args.experiment!r}", file=sys.stderr)
        return 0
    try:
        out = _open_out(args.out)
    except OSError as exc:
        print(f"error: output path not writable: {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_OUTPUT
    header = ["threshold", "p_hat", "ci_low", "ci_high"]
    if args.format == "jsonl":
        for r in rows:
            out.write(_dumps(dict(zip(header, r))) + "\n")
    else:
        write_csv(header, rows, out)
    if out is not sys.stdout:
        out.close()
    return 0


def cmd_self_test(args) -> int:
    from .acceptance import run_all

    results = run_all(only=args.only, threads=args.threads)
    for r in results:
        print(r.line(), flush=True)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="logconcave-sv", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    threads = dict(type=int, default=os.cpu_count() or 1, help="worker threads (default: all cores)")

    r = sub.add_parser("run", help="run every experiment in a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default="-", help="JSONL file to append to (default stdout)")
    r.add_argument("--seed", type=int, help="override every block's master seed")
    r.add_argument("--threads", **threads)
    r.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="tabulate a JSONL records file")
    s.add_argument("records")
    s.add_argument("--out")
    s.add_argument("--format", choices=("jsonl", "csv"), default="csv")
    s.set_defaults(func=cmd_summarize)

    t = sub.add_parser("tail-curve", help="threshold / p_hat curve of one experiment")
    t.add_argument("records")
    t.add_argument("experiment")
    t.add_argument("--normalization")
    t.add_argument("--out")
    t.add_argument("--format", choices=("jsonl", "csv"), default="csv")
    t.set_defaults(func=cmd_tail_curve)

    st = sub.add_parser("self-test", help="run the acceptance criteria")
    st.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    st.add_argument("--threads", **threads)
    st.set_defaults(func=cmd_self_test)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

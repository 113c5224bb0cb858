"""Command-line front end: dataset generation, runs, sweeps, and reports.

Data rows go to standard output (or the file named by --out); diagnostics go
to standard error.  Exit status is 0 on success and nonzero on any error.
The environment variable DQES_SEED, when set, overrides --seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import corpus, harness

CSV_FIELDS = [
    "algo",
    "eps",
    "zipf",
    "order",
    "workers",
    "seed",
    "phi",
    "estimate",
    "rank_error",
    "total_bytes",
    "max_bytes",
    "build_ms",
    "merge_ms",
    "query_ms",
]


class CliError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantsketch",
        description="Mergeable quantile summaries: generate data, run, sweep, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset file")
    gen.add_argument("--n", type=_positive_int, required=True)
    gen.add_argument("--u", type=_positive_int, required=True)
    gen.add_argument("--zipf", type=float, required=True)
    gen.add_argument("--order", choices=["sorted", "random"], required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--text", action="store_true", help="write one integer per line")

    run = sub.add_parser("run", help="run one experiment, emit CSV rows on stdout")
    run.add_argument("--algo", choices=harness.ALGORITHMS, required=True)
    run.add_argument("--eps", type=float, required=True)
    run.add_argument("--workers", type=_positive_int, default=1)
    run.add_argument("--data", help="dataset file (binary, or text with --u)")
    run.add_argument("--n", type=_positive_int, default=1_000_000)
    run.add_argument("--u", type=_positive_int, default=1 << 20)
    run.add_argument("--zipf", type=float, default=0.0)
    run.add_argument("--order", choices=["sorted", "random"], default="random")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--chunks", type=_positive_int, default=1024)
    run.add_argument("--nodes", type=_positive_int, default=1, help="leaf count of the node tree")
    run.add_argument("--phis", type=_float_list, default=None, help="comma-separated phi values")
    run.add_argument("--verbose", action="store_true", help="log per-merge transmissions to stderr")

    swp = sub.add_parser("sweep", help="run a config grid, write CSV, print ratio-time tables")
    swp.add_argument("--algos", type=_str_list, required=True)
    swp.add_argument("--eps-list", type=_float_list, required=True)
    swp.add_argument("--workers-list", type=_int_list, required=True)
    swp.add_argument("--zipf-list", type=_float_list, default=[0.0])
    swp.add_argument("--orders", type=_str_list, default=["random"])
    swp.add_argument("--n", type=_positive_int, default=1_000_000)
    swp.add_argument("--u", type=_positive_int, default=1 << 20)
    swp.add_argument("--chunks", type=_positive_int, default=1024)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--nodes", type=_positive_int, default=1)
    swp.add_argument("--phis", type=_float_list, default=None)
    swp.add_argument("--out", required=True, help="CSV output path")

    rep = sub.add_parser("report", help="aggregate a results CSV")
    rep.add_argument("csv_path")
    return parser


def _apply_seed_env(args: argparse.Namespace) -> None:
    env = os.environ.get("DQES_SEED")
    if env is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env)
        except ValueError as exc:
            raise CliError(f"DQES_SEED must be an integer, got {env!r}") from exc


def _format_row(values: list) -> str:
    return ",".join(str(v) for v in values)


def _measurement_rows(m: harness.Measurement) -> list[str]:
    cfg = m.config
    rows = []
    for r in m.results:
        rows.append(
            _format_row(
                [
                    cfg.algo,
                    repr(cfg.epsilon),
                    repr(cfg.data.zipf),
                    cfg.data.order,
                    cfg.workers,
                    cfg.seed,
                    repr(r.phi),
                    r.estimate,
                    repr(r.rank_error),
                    m.total_bytes,
                    m.max_bytes,
                    f"{m.build_ms:.3f}",
                    f"{m.merge_ms:.3f}",
                    f"{m.query_ms:.3f}",
                ]
            )
        )
    return rows


def _cmd_gen(args: argparse.Namespace) -> int:
    spec = corpus.DataSpec(n=args.n, u=args.u, zipf=args.zipf, order=args.order, seed=args.seed)
    values = corpus.generate(spec)
    if args.text:
        corpus.write_dataset_text(args.out, values)
    else:
        corpus.write_dataset(args.out, values, spec.u)
    print(f"wrote {args.out}: n={spec.n} u={spec.u} zipf={spec.zipf} order={spec.order}",
          file=sys.stderr)
    return 0


def _load_values(args: argparse.Namespace) -> tuple[np.ndarray, int]:
    if args.data.endswith(".txt"):
        values = corpus.read_dataset_text(args.data)
        return values, args.u
    values, u = corpus.read_dataset(args.data)
    return values, u


def _cmd_run(args: argparse.Namespace) -> int:
    phis = tuple(args.phis) if args.phis else harness.DEFAULT_PHIS
    if args.data:
        values, u = _load_values(args)
        spec = corpus.DataSpec(
            n=len(values), u=u, zipf=args.zipf, order=args.order, seed=args.seed
        )
    else:
        spec = corpus.DataSpec(n=args.n, u=args.u, zipf=args.zipf, order=args.order, seed=args.seed)
        values = None
    config = harness.ExperimentConfig(
        algo=args.algo,
        epsilon=args.eps,
        data=spec,
        chunks=args.chunks,
        workers=args.workers,
        node_tree_leaves=args.nodes,
        phis=phis,
        seed=args.seed,
    )
    measurement = harness.run(config, values)
    if args.verbose:
        for t in measurement.transmissions:
            print(f"{t.phase},{t.src},{t.dst},{t.algo},{t.nbytes}", file=sys.stderr)
    print(_format_row(CSV_FIELDS))
    for row in _measurement_rows(measurement):
        print(row)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    phis = tuple(args.phis) if args.phis else harness.DEFAULT_PHIS
    configs = harness.configs_for_grid(
        algos=args.algos,
        epsilons=args.eps_list,
        workers_list=args.workers_list,
        zipfs=args.zipf_list,
        orders=args.orders,
        n=args.n,
        u=args.u,
        chunks=args.chunks,
        seed=args.seed,
        phis=phis,
        node_tree_leaves=args.nodes,
    )
    measurements, ratio_report = harness.sweep(configs)
    with open(args.out, "w", encoding="ascii", newline="") as fh:
        fh.write(_format_row(CSV_FIELDS) + "\n")
        for m in measurements:
            for row in _measurement_rows(m):
                fh.write(row + "\n")
    print(f"wrote {args.out}: {len(measurements)} runs", file=sys.stderr)
    groups: dict[tuple, list[harness.RatioTimeEntry]] = {}
    for entry in ratio_report.entries:
        key = (entry.algo, entry.epsilon, entry.data.zipf, entry.data.order)
        groups.setdefault(key, []).append(entry)
    for (algo, eps, zipf, order), entries in groups.items():
        print(f"ratio-time algo={algo} eps={eps!r} zipf={zipf!r} order={order}")
        for entry in sorted(entries, key=lambda e: e.workers):
            print(f"  workers={entry.workers} ratio={entry.ratio:.3f}")
    return 0


@dataclass
class _Aggregate:
    count: int = 0
    err_sum: float = 0.0
    err_max: float = 0.0
    total_bytes: float = 0.0
    max_bytes: float = 0.0
    build_ms: float = 0.0
    merge_ms: float = 0.0
    query_ms: float = 0.0


def _cmd_report(args: argparse.Namespace) -> int:
    aggregates: dict[tuple[str, str], _Aggregate] = {}
    with open(args.csv_path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CliError(f"{args.csv_path}: empty file") from None
        if header != CSV_FIELDS:
            raise CliError(f"{args.csv_path}: unexpected header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_FIELDS):
                raise CliError(f"{args.csv_path}:{line_no}: expected {len(CSV_FIELDS)} fields")
            try:
                rec = dict(zip(CSV_FIELDS, row))
                err = float(rec["rank_error"])
                agg = aggregates.setdefault((rec["algo"], rec["eps"]), _Aggregate())
                agg.count += 1
                agg.err_sum += err
                agg.err_max = max(agg.err_max, err)
                agg.total_bytes += float(rec["total_bytes"])
                agg.max_bytes += float(rec["max_bytes"])
                agg.build_ms += float(rec["build_ms"])
                agg.merge_ms += float(rec["merge_ms"])
                agg.query_ms += float(rec["query_ms"])
            except ValueError as exc:
                raise CliError(f"{args.csv_path}:{line_no}: malformed row: {exc}") from None
    header_line = (
        f"{'algo':<12} {'eps':<10} {'rows':>6} {'mean_err':>12} {'max_err':>12} "
        f"{'mean_total_B':>14} {'mean_max_B':>12} {'build_ms':>10} {'merge_ms':>10} {'query_ms':>10}"
    )
    print(header_line)
    for (algo, eps), agg in sorted(aggregates.items()):
        c = agg.count
        print(
            f"{algo:<12} {eps:<10} {c:>6} {agg.err_sum / c:>12.6f} {agg.err_max:>12.6f} "
            f"{agg.total_bytes / c:>14.1f} {agg.max_bytes / c:>12.1f} "
            f"{agg.build_ms / c:>10.2f} {agg.merge_ms / c:>10.2f} {agg.query_ms / c:>10.2f}"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_seed_env(args)
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "report":
            return _cmd_report(args)
        raise CliError(f"unknown command {args.command!r}")
    except (CliError, corpus.ConfigurationError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

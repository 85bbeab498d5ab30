"""Command-line entry point: ``python -m stmwrap {bench,matrix,stress,verify}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from ..abstract_lock import InvalidConfiguration
from ..stm import StmMode
from ..verifier import (DomainTooLarge, SpecFileError, Unsupported, counter_ca, counter_model,
                        emit_smtlib, load_spec, map_model, pqueue_ca, pqueue_model,
                        striped_map_ca, verify)
from .impls import IMPLS, LAZY, PESSIMISTIC, QUEUE_IMPLS, check_combo
from .runner import BenchConfig, append_csv, run_bench, sweep, write_csv
from .stress import StressConfig, inverse_check, run_stress

EXIT_OK, EXIT_FAIL, EXIT_BUDGET, EXIT_CONFIG = 0, 2, 3, 4
STRESS_IMPLS = ("eager-opt", "eager-pess", "lazy-memo", "lazy-snap", "lazy-pess", "pqueue-lazy")


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 4), keeping 2 for failed checks."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def int_range(text: str) -> tuple[int, int]:
    """``"0..8"`` (inclusive) or a single number ``"8"`` meaning ``0..8``."""
    lo, sep, hi = text.partition("..")
    try:
        return (int(lo), int(hi)) if sep else (0, int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None


def csv_list(kind):
    def parse(text: str) -> list:
        try:
            return [kind(x) for x in text.split(",") if x]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def stm_mode(text: str) -> StmMode:
    try:
        return StmMode[text.upper().replace("-", "_")]
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"unknown STM mode {text!r}; choose from {', '.join(m.name for m in StmMode)}"
        ) from None


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--total-ops", type=int, default=1_000_000)
    p.add_argument("--key-range", type=int, default=1024)
    p.add_argument("--warmup-reps", type=int, default=10)
    p.add_argument("--timed-reps", type=int, default=10)
    p.add_argument("--stm-mode", type=stm_mode, default=None,
                   help="LAZY, EAGER_WW or FULLY_EAGER (default depends on --impl)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--combine-logs", action="store_true")
    p.add_argument("--zipf", type=float, default=None, metavar="S",
                   help="Zipf-distributed keys with exponent S instead of uniform")
    p.add_argument("--disjoint", action="store_true",
                   help="give every thread its own slice of the key range")
    p.add_argument("--allow-unsafe", action="store_true",
                   help="permit eager-opt on an STM without visible readers")
    p.add_argument("--out", type=Path, default=None, help="append CSV rows to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stmwrap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bench", help="time one configuration")
    b.add_argument("--impl", choices=IMPLS, default="lazy-memo")
    b.add_argument("-t", "--threads", type=int, default=1)
    b.add_argument("-o", "--ops-per-txn", type=int, default=1)
    b.add_argument("-u", "--write-fraction", type=float, default=0.5)
    _add_workload_flags(b)

    m = sub.add_parser("matrix", help="sweep threads, ops per transaction, writes and impls")
    m.add_argument("--impls", type=csv_list(str), default=["naive", "eager-opt", "lazy-memo"])
    m.add_argument("--threads", type=csv_list(int), default=[1, 2, 4, 8])
    m.add_argument("--ops", type=csv_list(int), default=[1, 4, 16])
    m.add_argument("--writes", type=csv_list(float), default=[0.0, 0.25, 0.5, 0.75, 1.0])
    m.add_argument("--pessimistic-all-ops", action="store_true",
                   help="also run pessimistic impls with more than one op per transaction")
    _add_workload_flags(m)

    s = sub.add_parser("stress", help="randomized serializability and isolation check")
    s.add_argument("--impl", action="append", choices=IMPLS + ("all",),
                   help="repeatable; 'all' runs the six transactional variants")
    s.add_argument("--executors", type=int, default=4)
    s.add_argument("--txn-length", type=int, default=6)
    s.add_argument("--key-range", type=int, default=8)
    s.add_argument("--txns", type=int, default=10_000, help="committed transactions per impl")
    s.add_argument("--duration", type=float, default=None, help="stop after this many seconds")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--window", type=int, default=8)
    s.add_argument("--forced-abort-rate", type=float, default=0.0)
    s.add_argument("--inverse-aborts", type=int, default=0,
                   help="also force this many rollbacks on eager impls and compare bases")
    s.add_argument("--no-snoop", action="store_true")
    s.add_argument("--stm-mode", type=stm_mode, default=None)
    s.add_argument("--allow-unsafe", action="store_true")
    s.add_argument("--dump", type=Path, default=None,
                   help="write the history of a failing run to DUMP (impl name appended)")

    v = sub.add_parser("verify", help="check a conflict abstraction on a bounded model")
    v.add_argument("model", choices=("counter", "map", "pqueue-minmultiset"))
    v.add_argument("spec", nargs="?", default=None,
                   help="ca-tN for the counter, striped for the map, minmultiset for the queue")
    v.add_argument("--spec-file", type=Path, default=None)
    v.add_argument("--states", type=int_range, default=(0, 8), help="counter values LO..HI")
    v.add_argument("--keys", type=int_range, default=(0, 3), help="map keys LO..HI")
    v.add_argument("--values", type=int_range, default=(0, 2), help="queue values LO..HI")
    v.add_argument("--max-size", type=int, default=3, help="largest queue explored")
    v.add_argument("--stripes", type=int, default=4)
    v.add_argument("--interleaved", action="store_true",
                   help="evaluate the second invocation's accesses after the first ran")
    v.add_argument("--budget", type=int, default=10**7)
    v.add_argument("--out", type=Path, default=None, help="write counterexample records here")
    v.add_argument("--emit-smt", type=Path, default=None, help="write SMT-LIB2 to this path")
    return parser


def _bench_config(args: argparse.Namespace, **over) -> BenchConfig:
    return BenchConfig(
        impl=over.get("impl", getattr(args, "impl", "lazy-memo")),
        threads=over.get("threads", getattr(args, "threads", 1)),
        ops_per_txn=over.get("ops_per_txn", getattr(args, "ops_per_txn", 1)),
        write_fraction=over.get("write_fraction", getattr(args, "write_fraction", 0.5)),
        total_ops=args.total_ops, key_range=args.key_range, warmup_reps=args.warmup_reps,
        timed_reps=args.timed_reps, stm_mode=args.stm_mode, seed=args.seed,
        combine_logs=args.combine_logs, zipf=args.zipf, disjoint=args.disjoint,
        allow_unsafe=args.allow_unsafe)


def _emit(records, out: Path | None) -> None:
    if out is None:
        write_csv(records, sys.stdout)
    else:
        append_csv(records, out)


def cmd_bench(args: argparse.Namespace) -> int:
    config = _bench_config(args)
    check_combo(config.impl, config.mode, config.allow_unsafe)
    config.workload()  # validates the workload parameters
    record = run_bench(config)
    print(record.summary(), file=sys.stderr)
    _emit([record], args.out)
    return EXIT_BUDGET if record.failed_reps else EXIT_OK


def cmd_matrix(args: argparse.Namespace) -> int:
    unknown = [i for i in args.impls if i not in IMPLS]
    if unknown:
        raise InvalidConfiguration(f"unknown impls: {', '.join(unknown)}")
    base = _bench_config(args)
    points = sweep(base, args.threads, args.ops, args.writes, args.impls,
                   args.pessimistic_all_ops)
    for p in points:
        check_combo(p.impl, p.mode, p.allow_unsafe)
        p.workload()
    failed = 0
    records = []
    for p in points:
        rec = run_bench(p)
        print(rec.summary(), file=sys.stderr)
        failed += rec.failed_reps
        records.append(rec)
        if args.out is not None:
            append_csv([rec], args.out)
    if args.out is None:
        write_csv(records, sys.stdout)
    return EXIT_BUDGET if failed else EXIT_OK


def cmd_stress(args: argparse.Namespace) -> int:
    impls = args.impl or ["all"]
    if "all" in impls:
        impls = [i for i in impls if i != "all"] + list(STRESS_IMPLS)
    configs = [StressConfig(impl=i, executors=args.executors, txn_length=args.txn_length,
                            key_range=args.key_range, txns=args.txns, duration=args.duration,
                            seed=args.seed, stm_mode=args.stm_mode, window=args.window,
                            snoop=not args.no_snoop, forced_abort_rate=args.forced_abort_rate,
                            allow_unsafe=args.allow_unsafe)
               for i in dict.fromkeys(impls)]
    for c in configs:
        check_combo(c.impl, c.mode, c.allow_unsafe)
    status = EXIT_OK
    for c in configs:
        report = run_stress(c)
        print(report.summary())
        for v in report.violations[:20]:
            print(f"  violation: {v}")
        if not report.ok:
            status = EXIT_FAIL
            if args.dump is not None:
                path = args.dump.with_name(f"{args.dump.stem}-{c.impl}{args.dump.suffix or '.json'}")
                report.dump(str(path))
                print(f"  history written to {path}")
        if args.inverse_aborts and c.impl not in LAZY and c.impl != "naive":
            problems = inverse_check(c.impl, args.inverse_aborts, c.txn_length, c.key_range,
                                     c.seed)
            print(f"inverse check {c.impl}: {'OK' if not problems else 'VIOLATION'} "
                  f"over {args.inverse_aborts} forced aborts")
            for p in problems:
                print(f"  violation: {p}")
            if problems:
                status = EXIT_FAIL
    return status


def _resolve_spec(args: argparse.Namespace):
    if args.spec_file is not None:
        return load_spec(args.spec_file)
    name = args.spec
    if args.model == "counter":
        name = name or "ca-t2"
        if not name.startswith("ca-t") or not name[4:].isdigit():
            raise InvalidConfiguration(f"counter specs are ca-tN, got {name!r}")
        return counter_ca(int(name[4:]))
    if args.model == "map":
        if (name or "striped") != "striped":
            raise InvalidConfiguration(f"map spec must be 'striped', got {name!r}")
        return striped_map_ca(args.stripes)
    if (name or "minmultiset") != "minmultiset":
        raise InvalidConfiguration(f"queue spec must be 'minmultiset', got {name!r}")
    return pqueue_ca()


def _resolve_model(args: argparse.Namespace):
    if args.model == "counter":
        lo, hi = args.states
        if lo != 0:
            raise InvalidConfiguration("counter states start at 0")
        return counter_model(hi)
    if args.model == "map":
        lo, hi = args.keys
        return map_model(range(lo, hi + 1))
    lo, hi = args.values
    return pqueue_model(tuple(range(lo, hi + 1)), args.max_size)


def cmd_verify(args: argparse.Namespace) -> int:
    model = _resolve_model(args)
    spec = _resolve_spec(args)
    if args.emit_smt is not None:
        args.emit_smt.write_text(emit_smtlib(model, spec, args.interleaved), encoding="utf-8")
    result = verify(model, spec, interleaved=args.interleaved, budget=args.budget)
    print(f"{result.verdict.value}: {spec.name} on {model.name} "
          f"({result.states} states, {result.pairs_checked} pairs"
          f"{', interleaved' if args.interleaved else ''})")
    lines = result.to_lines()
    if args.out is not None:
        args.out.write_text(lines, encoding="utf-8")
    else:
        sys.stdout.write(lines)
    return EXIT_OK if result.passed else EXIT_FAIL


COMMANDS = {"bench": cmd_bench, "matrix": cmd_matrix, "stress": cmd_stress,
            "verify": cmd_verify}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InvalidConfiguration, SpecFileError, Unsupported, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainTooLarge as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())

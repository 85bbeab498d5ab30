"""Timed map benchmark and parameter sweeps with CSV output."""
from __future__ import annotations

import csv
import gc
import itertools
import math
import statistics
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from ..stm import RetriesExhausted, Stm, StmMode
from .impls import PESSIMISTIC, default_mode, make_structure, map_runner
from .workload import Workload

CSV_COLUMNS = ("impl", "stm_mode", "threads", "ops_per_txn", "write_fraction", "total_ops",
               "key_range", "seed", "rep", "millis", "commits", "retries", "ca_retries")


@dataclass
class BenchConfig:
    impl: str = "lazy-memo"
    threads: int = 1
    ops_per_txn: int = 1
    write_fraction: float = 0.5
    total_ops: int = 1_000_000
    key_range: int = 1024
    warmup_reps: int = 10
    timed_reps: int = 10
    stm_mode: StmMode | None = None
    seed: int = 0
    combine_logs: bool = False
    zipf: float | None = None
    disjoint: bool = False
    allow_unsafe: bool = False

    @property
    def mode(self) -> StmMode:
        return self.stm_mode or default_mode(self.impl)

    def workload(self) -> Workload:
        return Workload(self.threads, self.ops_per_txn, self.write_fraction, self.total_ops,
                        self.key_range, self.seed, self.zipf, self.disjoint)


@dataclass
class RepResult:
    millis: float
    commits: int
    retries: int
    ca_retries: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class BenchRecord:
    config: BenchConfig
    reps: list[RepResult] = field(default_factory=list)

    @property
    def timings(self) -> list[float]:
        return [r.millis for r in self.reps if not r.failed]

    @property
    def mean_ms(self) -> float:
        t = self.timings
        return statistics.fmean(t) if t else math.nan

    @property
    def stdev_ms(self) -> float:
        t = self.timings
        return statistics.stdev(t) if len(t) > 1 else 0.0

    @property
    def commits(self) -> int:
        return sum(r.commits for r in self.reps)

    @property
    def retries(self) -> int:
        return sum(r.retries for r in self.reps)

    @property
    def ca_retries(self) -> int:
        return sum(r.ca_retries for r in self.reps)

    @property
    def failed_reps(self) -> int:
        return sum(r.failed for r in self.reps)

    def rows(self) -> list[dict]:
        c = self.config
        base = {"impl": c.impl, "stm_mode": c.mode.name, "threads": c.threads,
                "ops_per_txn": c.ops_per_txn, "write_fraction": c.write_fraction,
                "total_ops": c.workload().effective_ops, "key_range": c.key_range,
                "seed": c.seed}
        return [{**base, "rep": i, "millis": f"{r.millis:.3f}", "commits": r.commits,
                 "retries": r.retries, "ca_retries": r.ca_retries}
                for i, r in enumerate(self.reps)]

    def summary(self) -> str:
        c = self.config
        text = (f"{c.impl} [{c.mode.name}] t={c.threads} o={c.ops_per_txn} "
                f"u={c.write_fraction}: {self.mean_ms:.1f} ms +/- {self.stdev_ms:.1f} "
                f"over {len(self.timings)} reps, commits={self.commits} "
                f"retries={self.retries} ca_retries={self.ca_retries}")
        if self.failed_reps:
            text += f" FAILED_REPS={self.failed_reps}"
        return text


def run_rep(config: BenchConfig, txns: Sequence[Sequence]) -> RepResult:
    """One run over a fresh structure, ``txns[i]`` being thread ``i``'s transactions."""
    stm = Stm(config.mode, seed=config.seed)
    structure = make_structure(config.impl, stm, config.key_range, config.combine_logs,
                               config.allow_unsafe)
    run_op = map_runner(config.impl, structure)
    start = threading.Barrier(config.threads + 1)
    errors: list[str] = []

    def worker(mine: Sequence) -> None:
        start.wait()
        try:
            for txn in mine:
                stm.atomically(lambda ctx, txn=txn: [run_op(ctx, op) for op in txn])
        except RetriesExhausted as exc:
            errors.append(str(exc))

    workers = [threading.Thread(target=worker, args=(txns[i],), daemon=True)
               for i in range(config.threads)]
    for w in workers:
        w.start()
    start.wait()
    t0 = time.perf_counter()
    for w in workers:
        w.join()
    millis = (time.perf_counter() - t0) * 1000.0
    s = stm.stats
    return RepResult(millis, s.commits, s.retries, s.ca_retries,
                     errors[0] if errors else None)


def run_bench(config: BenchConfig) -> BenchRecord:
    """Warmup reps (discarded), then timed reps, collecting garbage in between."""
    wl = config.workload()
    txns = [wl.thread_txns(i) for i in range(config.threads)]
    record = BenchRecord(config)
    for rep in range(config.warmup_reps + config.timed_reps):
        gc.collect()
        result = run_rep(config, txns)
        if rep >= config.warmup_reps:
            record.reps.append(result)
    return record


def write_csv(records: Iterable[BenchRecord], out: TextIO, header: bool = True) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    if header:
        writer.writeheader()
    for rec in records:
        writer.writerows(rec.rows())


def append_csv(records: Iterable[BenchRecord], path: str | Path) -> None:
    """Append rows to ``path``, writing the header if the file is new or empty."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="", encoding="utf-8") as fh:
        write_csv(records, fh, header=fresh)


def sweep(base: BenchConfig, threads: Sequence[int], ops: Sequence[int],
          writes: Sequence[float], impls: Sequence[str],
          pessimistic_all_ops: bool = False) -> list[BenchConfig]:
    """Cross product in a fixed order: impl, then threads, ops, write fraction.

    Pessimistic impls only run at one operation per transaction unless
    ``pessimistic_all_ops`` is set.
    """
    points = []
    for impl, t, o, u in itertools.product(impls, threads, ops, writes):
        if impl in PESSIMISTIC and o != 1 and not pessimistic_all_ops:
            continue
        points.append(replace(base, impl=impl, threads=t, ops_per_txn=o, write_fraction=u,
                              stm_mode=None if base.stm_mode is None else base.stm_mode))
    return points

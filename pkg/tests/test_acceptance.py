"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line through the ``criterion``
fixture and the terminal summary repeats them all.
"""
import contextlib
import gc
import heapq
import io
import random
import subprocess
import sys
import threading
import time

import pytest
from conftest import run_threads

from stmwrap.bench import BenchConfig, StressConfig, inverse_check, run_bench, run_stress
from stmwrap.bench.cli import main
from stmwrap.bench.runner import run_rep
from stmwrap.collections import BoundedCounter, LazyMemoMap
from stmwrap.stm import Phase, Stm, StmMode
from stmwrap.update_strategies import combine_log
from stmwrap.verifier import check_syntax, counter_ca, counter_model, emit_smtlib


def _scripted_pair(initial, first, second):
    """T1 runs ``first`` and holds its transaction open while T2 runs ``second``."""
    stm = Stm(StmMode.FULLY_EAGER)
    counter = BoundedCounter(stm, initial=initial)
    entered = threading.Event()
    results = {}

    def t1():
        def body(ctx):
            ret = getattr(counter, first)(ctx)
            entered.set()
            time.sleep(0.1)  # keep T1 open while T2 runs
            ctx.on(Phase.AFTER_COMMIT, lambda: results.update(t1=(ctx.commit_version, ret)))
        stm.atomically(body)

    def t2():
        entered.wait(1)

        def body(ctx):
            ret = getattr(counter, second)(ctx)
            ctx.on(Phase.AFTER_COMMIT, lambda: results.update(t2=(ctx.commit_version, ret)))
        stm.atomically(body)

    run_threads(t1, t2, timeout=5)
    return stm, counter, results


def test_criterion_01_counter_scenarios(criterion):
    t0 = time.perf_counter()
    problems = []

    stm, counter, res = _scripted_pair(52, "incr", "decr")
    cell = counter.mem[0]
    if (cell.reads, cell.writes) != (0, 0) or set(res) != {"t1", "t2"} or counter.peek() != 52:
        problems.append(f"count=52: reads={cell.reads} writes={cell.writes} results={res}")

    stm, counter, res = _scripted_pair(0, "incr", "incr")
    cell = counter.mem[0]
    if cell.reads != 2 or cell.writes != 0 or stm.stats.retries != 0 or counter.peek() != 2:
        problems.append(f"count=0: reads={cell.reads} writes={cell.writes} "
                        f"retries={stm.stats.retries}")

    stm, counter, res = _scripted_pair(1, "decr", "decr")
    serialized = [ret for _, ret in sorted(res.values())]
    if serialized != [True, False] or counter.peek() != 0:
        problems.append(f"count=1: serialized returns {serialized}, final {counter.peek()}")

    elapsed = time.perf_counter() - t0
    if elapsed >= 1.0:
        problems.append(f"took {elapsed:.2f}s")
    criterion(1, "counter scenario suite", not problems,
              "; ".join(problems) or f"3 scenarios in {elapsed:.2f}s")


def _cli(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


def test_criterion_02_verifier_ground_truth(criterion):
    t0 = time.perf_counter()
    runs = {
        "t2": ["verify", "counter", "ca-t2", "--states", "0..8"],
        "t1": ["verify", "counter", "ca-t1"],
        "map": ["verify", "map", "striped", "--keys", "0..3"],
    }
    first = {name: _cli(argv) for name, argv in runs.items()}
    second = {name: _cli(argv) for name, argv in runs.items()}
    elapsed = time.perf_counter() - t0
    t1_lines = first["t1"][1].splitlines()
    ok = (first["t2"][0] == 0 and first["map"][0] == 0 and first["t1"][0] == 2
          and '"state": "1"' in t1_lines[1] and t1_lines[1].count('"decr()"') == 2
          and first == second and elapsed < 10)
    criterion(2, "verifier ground truth", ok,
              f"exit codes t2={first['t2'][0]} t1={first['t1'][0]} map={first['map'][0]}, "
              f"deterministic={first == second}, {elapsed:.1f}s")


def test_criterion_03_serializability_soak(criterion):
    t0 = time.perf_counter()
    details = []
    ok = True
    for impl in ("eager-opt", "eager-pess", "lazy-memo", "lazy-snap", "lazy-pess", "pqueue-lazy"):
        report = run_stress(StressConfig(impl=impl, executors=4, txn_length=6, key_range=8,
                                         txns=10_000))
        ok &= report.ok and report.committed == 10_000
        details.append(f"{impl}={'ok' if report.ok else report.violations[:2]}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    criterion(3, "serializability soak", ok, f"{', '.join(details)}; {elapsed:.0f}s")


def test_criterion_04_isolation(criterion):
    lazy_txns, scans, problems = 0, 0, []
    for impl in ("lazy-memo", "lazy-snap", "lazy-pess"):
        report = run_stress(StressConfig(impl=impl, txns=34_000, seed=4))
        lazy_txns += report.committed
        scans += report.snoop_scans
        problems += report.violations[:3]
    for impl in ("eager-opt", "eager-pess", "pqueue-eager"):
        problems += inverse_check(impl, aborts=10_000, seed=4)
    ok = not problems and lazy_txns >= 100_000 and scans > 0
    criterion(4, "isolation", ok,
              f"{lazy_txns} lazy txns snooped over {scans} scans, 3x10^4 forced eager aborts, "
              f"problems={problems[:3]}")


def test_criterion_05_disjoint_keys_have_no_ca_retries(criterion):
    details, ok = [], True
    for impl in ("lazy-memo", "eager-opt"):
        rec = run_bench(BenchConfig(impl=impl, threads=8, ops_per_txn=8, write_fraction=1.0,
                                    total_ops=100_000, key_range=1024, disjoint=True,
                                    warmup_reps=0, timed_reps=1, seed=5))
        ok &= rec.ca_retries == 0 and rec.failed_reps == 0
        details.append(f"{impl}: ca_retries={rec.ca_retries} retries={rec.retries}")
    criterion(5, "disjoint-key freedom", ok, "; ".join(details))


def _single_thread_ratio(reps):
    """Best-of-``reps`` naive time over best lazy-memo time, reps interleaved.

    Interleaving and taking the best run keep scheduler noise on a busy
    host from landing on one implementation only.
    """
    best = {}
    for impl in ("naive", "lazy-memo"):
        cfg = BenchConfig(impl=impl, threads=1, ops_per_txn=1, write_fraction=0.5,
                          key_range=1024, total_ops=100_000, seed=6)
        best[impl] = (cfg, [cfg.workload().thread_txns(0)], [])
    for rep in range(reps + 1):
        for cfg, txns, times in best.values():
            gc.collect()
            millis = run_rep(cfg, txns).millis
            if rep:  # the first round warms up
                times.append(millis)
    return min(best["naive"][2]) / min(best["lazy-memo"][2])


def test_criterion_06_false_conflict_trend(criterion):
    def run(impl):
        return run_bench(BenchConfig(impl=impl, threads=8, ops_per_txn=1, write_fraction=0.5,
                                     key_range=1024, total_ops=100_000, warmup_reps=0,
                                     timed_reps=3, seed=6))

    naive = run("naive")
    aborts = {impl: run(impl).retries
              for impl in ("eager-opt", "eager-pess", "lazy-memo", "lazy-snap", "lazy-pess")}
    direction = all(a <= naive.retries for a in aborts.values())
    ratio = _single_thread_ratio(reps=8)
    ok = direction and ratio >= 0.8
    criterion(6, "false-conflict reduction trend", ok,
              f"t=8 aborts naive={naive.retries} "
              + " ".join(f"{k}={v}" for k, v in aborts.items())
              + f"; t=1 lazy-memo/naive throughput {ratio:.2f}")


def test_criterion_07_log_combining_equivalence(criterion):
    rng = random.Random(7)
    stm = Stm()
    full, combined = LazyMemoMap(stm), LazyMemoMap(stm, combine_logs=True)
    oracle = {}
    mismatches, too_long = 0, 0
    for _ in range(1000):
        plan = []
        for _ in range(256):
            method = rng.choice(("get", "contains", "put", "remove"))
            plan.append((method, rng.randrange(10), rng.randrange(1000)))

        def body(ctx, m):
            rets = [m.put(ctx, k, v) if op == "put" else getattr(m, op)(ctx, k)
                    for op, k, v in plan]
            log = m.slot.peek(ctx)
            return rets, len(combine_log(log)) if log is not None else 0

        rets_full, _ = stm.atomically(lambda ctx: body(ctx, full))
        rets_comb, length = stm.atomically(lambda ctx: body(ctx, combined))
        expected = []
        for op, k, v in plan:
            if op == "put":
                expected.append(oracle.get(k))
                oracle[k] = v
            elif op == "remove":
                expected.append(oracle.pop(k, None))
            elif op == "get":
                expected.append(oracle.get(k))
            else:
                expected.append(k in oracle)
        touched = len({k for _, k, _ in plan})
        too_long += length > touched
        mismatches += not (rets_full == rets_comb == expected
                           and full.snapshot_dict() == combined.snapshot_dict() == oracle)
    ok = mismatches == 0 and too_long == 0
    criterion(7, "log-combining equivalence", ok,
              f"1000 txns x 256 ops: {mismatches} mismatches, {too_long} oversized logs")


def _heap_replay(history):
    heap, bad = [], 0
    for txn in sorted(history, key=lambda t: t.commit_version):
        for (method, args), ret in zip(txn.ops, txn.returns):
            if method == "insert":
                heapq.heappush(heap, args[0])
                want = None
            elif method == "remove_min":
                want = heapq.heappop(heap) if heap else None
            elif method == "min":
                want = heap[0] if heap else None
            elif method == "contains":
                want = args[0] in heap
            else:
                want = len(heap)
            bad += want != ret
    return sorted(heap), bad


def test_criterion_08_priority_queue_semantics(criterion):
    report = run_stress(StressConfig(impl="pqueue-lazy", txns=1667, txn_length=6, seed=8,
                                     check_heap=True))
    ops = sum(len(t.ops) for t in report.history)
    final, bad = _heap_replay(report.history)
    # run_stress checks the final multiset and the heap at each commit; the
    # heapq replay adds a strict commit-order check of every return value
    ok = report.ok and ops >= 10_000 and bad == 0
    criterion(8, "priority-queue semantics", ok,
              f"{ops} ops, {bad} return mismatches in commit order, final size {len(final)}, "
              f"violations={report.violations[:2]}")


def test_criterion_09_smtlib_emission(criterion):
    code = ("from stmwrap.verifier import counter_model, counter_ca, emit_smtlib;"
            "import sys; sys.stdout.write(emit_smtlib(counter_model(), counter_ca(2)))")
    outputs = [subprocess.run([sys.executable, "-c", code], capture_output=True, check=True).stdout
               for _ in range(2)]
    text = emit_smtlib(counter_model(), counter_ca(2))
    problems = []
    if outputs[0] != outputs[1] or outputs[0].decode() != text:
        problems.append("not byte-stable")
    for needle in ("(define-fun incr", "(define-fun decr", "(define-fun incr_CA",
                   "(define-fun decr_CA", "(assert (not (conflict", "(not (= c2 c4))",
                   "(check-sat)"):
        if needle not in text:
            problems.append(f"missing {needle}")
    try:
        check_syntax(text)
    except Exception as exc:
        problems.append(f"syntax: {exc}")
    criterion(9, "SMT-LIB emission", not problems,
              "; ".join(problems) or f"{text.count('(check-sat)')} queries, byte-stable")


def test_criterion_10_config_guard(criterion):
    proc = subprocess.run([sys.executable, "-m", "stmwrap", "bench", "--impl", "eager-opt",
                           "--stm-mode", "LAZY"], capture_output=True, text=True, timeout=60)
    criterion(10, "config guard", proc.returncode == 4,
              f"exit code {proc.returncode}: {proc.stderr.strip()[:80]}")

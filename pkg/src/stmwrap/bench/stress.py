"""Randomized serializability and isolation testing of transactional structures.

Executors run short random transactions. Every committed transaction's
invocations, return values and commit version are recorded, and the
history is checked for a serial order consistent with a sequential
model. For lazy maps a snooper thread scans the shared base while the
executors run and reports any value written by a transaction that had
not yet reached its commit point.
"""
from __future__ import annotations

import json
import pickle
import random
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

from ..stm import Phase, Stm, StmMode, TxnContext, fresh_token
from ..verifier.models import map_model, pqueue_model
from .impls import LAZY, MAP_IMPLS, QUEUE_IMPLS, default_mode, make_structure
from .workload import split_seed

Invocation = tuple  # (method, args)


@dataclass
class Txn:
    executor: int
    commit_version: int
    ops: list[Invocation]
    returns: list[Any]


@dataclass
class StressConfig:
    impl: str = "lazy-memo"
    executors: int = 4
    txn_length: int = 6
    key_range: int = 8
    txns: int = 10_000
    duration: float | None = None
    seed: int = 0
    stm_mode: StmMode | None = None
    window: int = 8
    snoop: bool = True
    forced_abort_rate: float = 0.0
    allow_unsafe: bool = False
    check_heap: bool = True
    snoop_eager: bool = False
    stripes: int = 1024
    switch_interval: float | None = 1e-5  # shorter thread slices mean more interleavings

    @property
    def mode(self) -> StmMode:
        return self.stm_mode or default_mode(self.impl)


@dataclass
class StressReport:
    config: StressConfig
    committed: int = 0
    retries: int = 0
    aborted_attempts: int = 0
    snoop_scans: int = 0
    violations: list[str] = field(default_factory=list)
    history: list[Txn] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        verdict = "OK" if self.ok else f"VIOLATION ({len(self.violations)})"
        return (f"stress {self.config.impl} [{self.config.mode.name}]: {verdict}; "
                f"committed={self.committed} retries={self.retries} "
                f"aborted_attempts={self.aborted_attempts} snoop_scans={self.snoop_scans} "
                f"elapsed={self.elapsed:.1f}s")

    def dump(self, path: str) -> None:
        """Write the verdict and the full history as JSON for offline replay."""
        doc = {
            "config": {k: (v.name if isinstance(v, StmMode) else v)
                       for k, v in asdict(self.config).items()},
            "violations": self.violations,
            "history": [{"executor": t.executor, "commit_version": t.commit_version,
                         "ops": [[m, list(a)] for m, a in t.ops],
                         "returns": t.returns} for t in self.history],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, default=repr)


# -- sequential oracles ------------------------------------------------------

def map_oracle(key_range: int) -> tuple[Any, Callable]:
    model = map_model(range(key_range), ())
    initial = model.initial_states[0]

    def step(state: tuple, method: str, args: tuple) -> tuple[tuple, Any]:
        if method == "size":
            return state, sum(v is not None for v in state)
        return model.step(state, method, args)

    return initial, step


def queue_oracle() -> tuple[Any, Callable]:
    model = pqueue_model()
    return model.initial_states[0], model.step


def apply_txn(step: Callable, state: Any, txn: Txn) -> Any:
    """State after ``txn``, or None if some return value disagrees."""
    for (method, args), ret in zip(txn.ops, txn.returns):
        state, expected = step(state, method, args)
        if expected != ret:
            return None
    return state


def find_serial_order(history: Sequence[Txn], step: Callable, initial: Any,
                      window: int = 8, budget: int = 2_000_000) -> tuple[list[Txn] | None, Any, int]:
    """Depth-first search for a serial order close to commit order.

    At each point only the ``window`` earliest unplaced transactions (in
    commit order) are candidates. Returns ``(order, final_state,
    furthest_prefix)``; ``order`` is None when no order exists within
    the window or the node budget runs out.
    """
    ordered = sorted(history, key=lambda t: t.commit_version)
    n = len(ordered)
    first = tuple(range(min(window, n)))
    # frame: state, candidate indices, next index to pull in, next candidate to try
    stack: list[list] = [[initial, first, len(first), 0]]
    chosen: list[int] = []
    furthest = 0
    nodes = 0
    while stack:
        frame = stack[-1]
        state, cands, nxt, tried = frame
        if not cands:
            return [ordered[i] for i in chosen], state, n
        if tried >= len(cands):
            stack.pop()
            if chosen:
                chosen.pop()
            continue
        frame[3] = tried + 1
        nodes += 1
        if nodes > budget:
            return None, None, furthest
        pick = cands[tried]
        after = apply_txn(step, state, ordered[pick])
        if after is None:
            continue
        rest = cands[:tried] + cands[tried + 1:]
        if nxt < n:
            rest, nxt = rest + (nxt,), nxt + 1
        chosen.append(pick)
        furthest = max(furthest, len(chosen))
        stack.append([after, rest, nxt, 0])
    return None, None, furthest


# -- operation generators ----------------------------------------------------

def _map_ops(rng: random.Random, length: int, key_range: int) -> list[tuple[str, int]]:
    methods = ("get", "contains", "put", "put", "remove", "remove", "size")
    return [(rng.choice(methods), rng.randrange(key_range)) for _ in range(length)]


def _queue_ops(rng: random.Random, length: int, key_range: int) -> list[tuple[str, int]]:
    methods = ("insert", "insert", "insert", "remove_min", "remove_min", "remove_min",
               "min", "contains", "size")
    return [(rng.choice(methods), rng.randrange(key_range)) for _ in range(length)]


class _ForcedAbort(Exception):
    pass


def run_stress(config: StressConfig) -> StressReport:
    """Run the workload and check the recorded history."""
    is_queue = config.impl in QUEUE_IMPLS
    if config.impl not in MAP_IMPLS and not is_queue:
        raise ValueError(f"unknown impl {config.impl!r}")
    stm = Stm(config.mode, seed=config.seed)
    structure = make_structure(config.impl, stm, config.key_range,
                               allow_unsafe=config.allow_unsafe, stripes=config.stripes)
    report = StressReport(config)
    lazy = config.impl in LAZY
    # eager bases show uncommitted writes by design; snooping them is only
    # useful to check that the snooper itself can see violations
    snoop = config.snoop and (lazy or config.snoop_eager) and not is_queue

    lock = threading.Lock()
    history: list[Txn] = []
    published: set[int] = set()     # values whose writer reached its commit point
    aborted_values: set[int] = set()
    heap_failures: list[int] = []
    done = threading.Event()
    deadline = None if config.duration is None else time.monotonic() + config.duration
    quotas = [config.txns // config.executors + (i < config.txns % config.executors)
              for i in range(config.executors)]
    errors: list[str] = []

    def run_op(ctx: TxnContext, method: str, key: int, written: list[int]) -> tuple[tuple, Any]:
        if is_queue:
            if method == "insert":
                return (method, (key,)), structure.insert(ctx, key)
            if method == "contains":
                return (method, (key,)), structure.contains(ctx, key)
            return (method, ()), getattr(structure, method)(ctx)
        if method == "put":
            value = fresh_token()
            written.append(value)
            return (method, (key, value)), structure.put(ctx, key, value)
        if method == "size":
            return (method, ()), structure.size(ctx)
        return (method, (key,)), getattr(structure, method)(ctx, key)

    def executor(idx: int) -> None:
        rng = random.Random(split_seed(config.seed, idx))
        gen = _queue_ops if is_queue else _map_ops
        made = 0
        while made < quotas[idx]:
            if deadline is not None and time.monotonic() > deadline:
                break
            plan = gen(rng, config.txn_length, config.key_range)
            force = rng.random() < config.forced_abort_rate
            record: dict[str, Any] = {}

            def body(ctx: TxnContext) -> None:
                written: list[int] = []
                if snoop:
                    # registered before any replay log, so it runs first
                    ctx.on(Phase.WHILE_COMMIT_LOCKED, lambda: published.update(written))
                ctx.on(Phase.AFTER_ROLLBACK, lambda: aborted_values.update(written))
                ops, rets = [], []
                for method, key in plan:
                    op, ret = run_op(ctx, method, key, written)
                    ops.append(op)
                    rets.append(ret)
                if is_queue and config.check_heap:
                    ctx.on(Phase.WHILE_COMMIT_LOCKED, lambda: _check_heap(ctx))
                ctx.on(Phase.AFTER_COMMIT, lambda: record.update(
                    version=ctx.commit_version, ops=ops, rets=rets))
                if force and ctx.attempt == 0:
                    raise _ForcedAbort()

            def _check_heap(ctx: TxnContext) -> None:
                if not structure.base.is_heap():
                    heap_failures.append(ctx.commit_version)

            try:
                stm.atomically(body)
            except _ForcedAbort:
                with lock:
                    report.aborted_attempts += 1
                continue
            except Exception as exc:  # reported as a violation, not a crash
                errors.append(f"executor {idx}: {type(exc).__name__}: {exc}")
                return
            with lock:
                history.append(Txn(idx, record["version"], record["ops"], record["rets"]))
            made += 1

    def snooper() -> None:
        scans = 0
        while not done.is_set():
            for _, value in structure.base.items():
                if value not in published:
                    errors.append(f"snooper saw uncommitted value {value}")
                    done.set()
            scans += 1
            time.sleep(0)
        report.snoop_scans = scans

    previous_interval = sys.getswitchinterval()
    if config.switch_interval is not None:
        sys.setswitchinterval(config.switch_interval)
    t0 = time.monotonic()
    workers = [threading.Thread(target=executor, args=(i,), daemon=True)
               for i in range(config.executors)]
    spy = threading.Thread(target=snooper, daemon=True) if snoop else None
    if spy:
        spy.start()
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    done.set()
    if spy:
        spy.join()
    report.elapsed = time.monotonic() - t0
    sys.setswitchinterval(previous_interval)
    report.history = history
    report.committed = len(history)
    report.retries = stm.stats.retries
    report.violations.extend(errors)
    report.violations.extend(f"heap property broken at commit {v}" for v in heap_failures)

    if lazy and not is_queue:
        leaked = aborted_values & {v for _, v in structure.base.items()}
        if leaked:
            report.violations.append(f"aborted values reached the base: {sorted(leaked)[:10]}")
        if snoop and aborted_values & published:
            report.violations.append("an aborted transaction passed its commit point")

    initial, step = queue_oracle() if is_queue else map_oracle(config.key_range)
    order, final, reached = find_serial_order(history, step, initial, config.window)
    if order is None:
        report.violations.append(
            f"no serial order within window {config.window}; "
            f"consistent prefix of {reached} of {len(history)} transactions")
    else:
        if is_queue:
            actual = tuple(structure.committed_items())
        else:
            d = structure.snapshot_dict()
            actual = tuple(d.get(k) for k in range(config.key_range))
        if actual != final:
            report.violations.append(f"final state {actual!r} differs from serial replay {final!r}")
        size = stm.atomically(structure.size)
        expected = len(final) if is_queue else sum(v is not None for v in final)
        if size != expected:
            report.violations.append(f"size cell {size} differs from replayed size {expected}")
    return report


def base_fingerprint(impl: str, structure: Any) -> bytes:
    if impl in QUEUE_IMPLS:
        return pickle.dumps(structure.committed_items())
    return pickle.dumps(sorted(structure.snapshot_dict().items()))


def inverse_check(impl: str, aborts: int = 10_000, txn_length: int = 6, key_range: int = 8,
                  seed: int = 0) -> list[str]:
    """Force ``aborts`` rollbacks of eager transactions and compare the base bytes.

    Every other transaction commits so the base keeps changing. Returns
    the list of violations (empty on success).
    """
    stm = Stm(default_mode(impl), seed=seed)
    structure = make_structure(impl, stm, key_range)
    rng = random.Random(seed)
    gen = _queue_ops if impl in QUEUE_IMPLS else _map_ops
    problems: list[str] = []

    def run(ctx: TxnContext, plan: list, abort: bool) -> None:
        for method, key in plan:
            if impl in QUEUE_IMPLS:
                if method in ("insert", "contains"):
                    getattr(structure, method)(ctx, key)
                else:
                    getattr(structure, method)(ctx)
            elif method == "put":
                structure.put(ctx, key, fresh_token())
            elif method == "size":
                structure.size(ctx)
            else:
                getattr(structure, method)(ctx, key)
        if abort:
            raise _ForcedAbort()

    forced = 0
    while forced < aborts:
        stm.atomically(lambda ctx: run(ctx, gen(rng, txn_length, key_range), False))
        before = base_fingerprint(impl, structure)
        size_before = structure.committed_size.peek()
        try:
            stm.atomically(lambda ctx: run(ctx, gen(rng, txn_length, key_range), True))
        except _ForcedAbort:
            forced += 1
        if base_fingerprint(impl, structure) != before:
            problems.append(f"abort {forced}: base changed")
        if structure.committed_size.peek() != size_before:
            problems.append(f"abort {forced}: size cell changed")
        if len(problems) >= 10:
            break
    return problems

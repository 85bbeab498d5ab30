import heapq
import threading

import pytest
from conftest import run_threads
from hypothesis import given, settings
from hypothesis import strategies as st

from stmwrap.abstract_lock import InvalidConfiguration, OptimisticPolicy, PessimisticPolicy
from stmwrap.collections import (BoundedCounter, ConcurrentHashMap, CowHeap, EagerMap,
                                 EagerPriorityQueue, LazyMemoMap, LazyPriorityQueue,
                                 LazySnapshotMap, NaiveStmMap, PersistentMap, TombstoneHeap,
                                 TrieMap, insert_intents)
from stmwrap.collections.pqueue import PQueueState
from stmwrap.stm import Stm, StmMode


class Clash:
    """Distinct keys with a shared hash, to exercise collision nodes."""

    def __init__(self, n):
        self.n = n

    def __hash__(self):
        return 42

    def __eq__(self, other):
        return isinstance(other, Clash) and other.n == self.n

    def __repr__(self):
        return f"Clash({self.n})"


keys = st.one_of(st.integers(-50, 50), st.builds(Clash, st.integers(0, 5)), st.text(max_size=3))
trie_ops = st.lists(st.tuples(st.booleans(), keys, st.integers()), max_size=80)


@given(trie_ops)
def test_persistent_map_agrees_with_dict_and_keeps_old_versions(ops):
    pm, oracle = PersistentMap(), {}
    history = []
    for is_set, k, v in ops:
        history.append((pm, dict(oracle)))
        if is_set:
            pm = pm.set(k, v)
            oracle[k] = v
        else:
            pm = pm.delete(k)
            oracle.pop(k, None)
        assert len(pm) == len(oracle)
    assert dict(pm.items()) == oracle
    for k in oracle:
        assert pm.get(k) == oracle[k] and k in pm
    for old, expected in history:
        assert dict(old.items()) == expected


def test_many_keys_deep_trie():
    pm = PersistentMap()
    for i in range(5000):
        pm = pm.set(i, i * i)
    for i in range(0, 5000, 2):
        pm = pm.delete(i)
    assert len(pm) == 2500
    assert all(pm.get(i) == (None if i % 2 == 0 else i * i) for i in range(5000))


def test_trie_snapshot_is_isolated():
    t = TrieMap()
    t.put(1, "a")
    snap = t.snapshot()
    t.put(2, "b")
    snap.put(3, "c")
    assert t.to_dict() == {1: "a", 2: "b"}
    assert snap.to_dict() == {1: "a", 3: "c"}
    assert t.snapshots_taken == 1


@given(st.lists(st.one_of(st.integers(0, 20), st.none()), max_size=60))
def test_cow_heap_matches_heapq_and_snapshots_are_isolated(ops):
    h, oracle = CowHeap(), []
    for op in ops:
        snap, frozen = h.snapshot(), sorted(oracle)
        token = h.state_token()
        if op is None:
            expected = heapq.heappop(oracle) if oracle else None
            assert h.pop_min() == expected
        else:
            h.push(op)
            heapq.heappush(oracle, op)
        assert h.is_heap()
        assert snap.sorted_items() == frozen
        if op is not None or frozen:
            assert h.state_token() != token
    assert h.sorted_items() == sorted(oracle)
    assert h.peek() == (min(oracle) if oracle else None)


def test_concurrent_hash_map_under_threads():
    m = ConcurrentHashMap(stripes=4)

    def writer(base):
        return lambda: [m.put(base + i, i + 1) for i in range(500)]

    run_threads(*[writer(1000 * t) for t in range(4)])
    assert len(m) == 2000
    assert m.get(3004) == 5
    with pytest.raises(ValueError):
        m.put(1, None)


def test_tombstone_heap_skips_deleted_entries():
    h = TombstoneHeap()
    a = h.add(1)
    h.add(2)
    a.delete()
    assert h.peek() == 2 and 1 not in h
    assert h.sorted_items() == [2]
    assert h.pop_min() == 2 and h.pop_min() is None


MAP_FACTORIES = {
    "eager-opt": lambda: (Stm(StmMode.FULLY_EAGER), lambda s: EagerMap(s, OptimisticPolicy(s, 4))),
    "eager-pess": lambda: (Stm(), lambda s: EagerMap(s, PessimisticPolicy())),
    "lazy-memo": lambda: (Stm(), lambda s: LazyMemoMap(s, OptimisticPolicy(s, 4))),
    "lazy-memo-combined": lambda: (Stm(), lambda s: LazyMemoMap(s, combine_logs=True)),
    "lazy-snap": lambda: (Stm(), lambda s: LazySnapshotMap(s)),
    "lazy-snap-pess": lambda: (Stm(), lambda s: LazySnapshotMap(s, PessimisticPolicy())),
    "lazy-pess": lambda: (Stm(), lambda s: LazyMemoMap(s, PessimisticPolicy())),
    "naive": lambda: (Stm(), lambda s: NaiveStmMap(s, 8)),
}
txn_ops = st.lists(st.lists(st.tuples(
    st.sampled_from(["get", "contains", "put", "remove", "size"]),
    st.integers(0, 7), st.integers(1, 99)), max_size=8), max_size=8)


def run_map_op(m, ctx, op):
    name, k, v = op
    if name == "put":
        return m.put(ctx, k, v)
    if name == "size":
        return m.size(ctx)
    return getattr(m, name)(ctx, k)


def oracle_op(d, op):
    name, k, v = op
    if name == "get":
        return d.get(k)
    if name == "contains":
        return k in d
    if name == "size":
        return len(d)
    if name == "put":
        old = d.get(k)
        d[k] = v
        return old
    return d.pop(k, None)


@pytest.mark.parametrize("name", sorted(MAP_FACTORIES))
@settings(max_examples=40, deadline=None)
@given(txns=txn_ops, abort_mask=st.lists(st.booleans(), min_size=8, max_size=8))
def test_maps_agree_with_dict_including_rollbacks(name, txns, abort_mask):
    stm, make = MAP_FACTORIES[name]()
    m = make(stm)
    oracle = {}
    for txn, abort in zip(txns, abort_mask):
        if abort:
            with pytest.raises(ZeroDivisionError):
                stm.atomically(lambda ctx: ([run_map_op(m, ctx, op) for op in txn], 1 / 0))
        else:
            got = stm.atomically(lambda ctx: [run_map_op(m, ctx, op) for op in txn])
            assert got == [oracle_op(oracle, op) for op in txn]
        assert m.snapshot_dict() == oracle
        assert stm.atomically(m.size) == len(oracle)


@pytest.mark.parametrize("name", ["eager-opt", "eager-pess", "lazy-memo", "lazy-snap"])
def test_aborted_put_leaves_map_and_size_unchanged(name):
    stm, make = MAP_FACTORIES[name]()
    m = make(stm)

    def body(ctx):
        m.put(ctx, 1, "a")
        ctx.retry("forced") if ctx.attempt == 0 else None

    stm.atomically(body)  # first attempt aborts, second commits
    assert m.snapshot_dict() == {1: "a"}
    with pytest.raises(KeyError):
        stm.atomically(lambda ctx: (m.put(ctx, 2, "b"), {}[0]))
    assert m.snapshot_dict() == {1: "a"}
    assert stm.atomically(m.size) == 1


def test_eager_optimistic_map_needs_visible_readers():
    with pytest.raises(InvalidConfiguration):
        EagerMap(Stm(StmMode.LAZY))
    EagerMap(Stm(StmMode.LAZY), allow_unsafe=True)


@pytest.mark.parametrize("name", sorted(MAP_FACTORIES))
def test_maps_under_concurrency_keep_size_consistent(name):
    stm, make = MAP_FACTORIES[name]()
    m = make(stm)

    def worker(seed):
        import random
        rng = random.Random(seed)

        def go():
            for _ in range(150):
                ops = [(rng.choice(["get", "put", "remove"]), rng.randrange(8), rng.randrange(1, 9))
                       for _ in range(3)]
                stm.atomically(lambda ctx: [run_map_op(m, ctx, op) for op in ops])
        return go

    run_threads(*[worker(i) for i in range(4)], timeout=60)
    assert stm.atomically(m.size) == len(m.snapshot_dict())


def queue_oracle(q, op):
    name, v = op
    if name == "insert":
        heapq.heappush(q, v)
        return None
    if name == "min":
        return q[0] if q else None
    if name == "remove_min":
        return heapq.heappop(q) if q else None
    if name == "contains":
        return v in q
    return len(q)


queue_txns = st.lists(st.lists(st.tuples(
    st.sampled_from(["insert", "min", "remove_min", "contains", "size"]),
    st.integers(0, 6)), max_size=8), max_size=8)


@pytest.mark.parametrize("cls", [LazyPriorityQueue, EagerPriorityQueue])
@settings(max_examples=40, deadline=None)
@given(txns=queue_txns, abort_mask=st.lists(st.booleans(), min_size=8, max_size=8))
def test_queues_agree_with_heapq_including_rollbacks(cls, txns, abort_mask):
    stm = Stm()
    q = cls(stm)
    oracle = []

    def run(ctx, op):
        name, v = op
        if name in ("insert", "contains"):
            return getattr(q, name)(ctx, v)
        return getattr(q, name)(ctx)

    for txn, abort in zip(txns, abort_mask):
        if abort:
            with pytest.raises(ZeroDivisionError):
                stm.atomically(lambda ctx: ([run(ctx, op) for op in txn], 1 / 0))
        else:
            got = stm.atomically(lambda ctx: [run(ctx, op) for op in txn])
            assert got == [queue_oracle(oracle, op) for op in txn]
        assert q.committed_items() == sorted(oracle)


def test_insert_intents():
    w_min = insert_intents(1, 5)
    assert {(i.key, i.write) for i in w_min} == {(PQueueState.MULTISET, True), (PQueueState.MIN, True)}
    r_min = insert_intents(7, 5)
    assert {(i.key, i.write) for i in r_min} == {(PQueueState.MULTISET, True), (PQueueState.MIN, False)}
    assert {(i.key, i.write) for i in insert_intents(3, None)} == {
        (PQueueState.MULTISET, True), (PQueueState.MIN, True)}


def test_lazy_queue_snapshots_only_when_written():
    stm = Stm()
    q = LazyPriorityQueue(stm)
    stm.atomically(lambda ctx: q.min(ctx))
    assert q.base.snapshots_taken == 0
    stm.atomically(lambda ctx: q.insert(ctx, 3))
    assert q.base.snapshots_taken == 1


def test_bounded_counter_semantics():
    stm = Stm(StmMode.FULLY_EAGER)
    c = BoundedCounter(stm, initial=1)
    assert stm.atomically(c.decr) is True
    assert stm.atomically(c.decr) is False
    assert c.peek() == 0
    stm.atomically(lambda ctx: (c.incr(ctx), c.incr(ctx)))
    assert c.peek() == 2
    with pytest.raises(ZeroDivisionError):
        stm.atomically(lambda ctx: (c.incr(ctx), c.decr(ctx), c.decr(ctx), 1 / 0))
    assert c.peek() == 2
    with pytest.raises(InvalidConfiguration):
        BoundedCounter(Stm(StmMode.LAZY))


def test_bounded_counter_concurrent_balance():
    stm = Stm(StmMode.FULLY_EAGER)
    c = BoundedCounter(stm)
    successes = []
    lock = threading.Lock()

    def incs():
        for _ in range(300):
            stm.atomically(c.incr)

    def decs():
        n = 0
        for _ in range(300):
            n += stm.atomically(c.decr)
        with lock:
            successes.append(n)

    run_threads(incs, incs, decs, decs, timeout=60)
    assert c.peek() == 600 - sum(successes)
    assert c.peek() >= 0

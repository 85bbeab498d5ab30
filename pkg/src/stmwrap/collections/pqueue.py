"""Transactional priority queues.

The abstract state has two elements, the minimum and the multiset of
elements. Under the pessimistic policy the minimum admits many readers
or one writer, while the multiset admits many writers or many readers.
"""
from __future__ import annotations

import enum
import heapq
import itertools
import threading
from typing import Any, Callable

from ..abstract_lock import (DEFAULT_MATRIX, MULTISET_MATRIX, AbstractLock,
                             CompatibilityMatrix, LockAllocatorPolicy, PolicyKind,
                             PessimisticPolicy, Read, Write, check_configuration)
from ..stm import Phase, Stm, TxnContext
from ..update_strategies import (LogSlot, SnapshotShadow, UpdateStrategy,
                                 log_execute, read_only)
from .cowheap import CowHeap


class PQueueState(enum.IntEnum):
    MIN = 0
    MULTISET = 1


def pqueue_matrix(key: PQueueState) -> CompatibilityMatrix:
    return MULTISET_MATRIX if key is PQueueState.MULTISET else DEFAULT_MATRIX


def insert_intents(v: Any, current_min: Any) -> list:
    if current_min is None or v < current_min:
        return [Write(PQueueState.MULTISET), Write(PQueueState.MIN)]
    return [Write(PQueueState.MULTISET), Read(PQueueState.MIN)]


MIN_INTENTS = [Read(PQueueState.MIN)]
REMOVE_MIN_INTENTS = [Write(PQueueState.MIN), Write(PQueueState.MULTISET)]
CONTAINS_INTENTS = [Read(PQueueState.MULTISET)]


class _PQueue:
    strategy: UpdateStrategy

    def __init__(self, stm: Stm, policy: LockAllocatorPolicy | None,
                 allow_unsafe: bool = False) -> None:
        self.stm = stm
        self.policy = policy if policy is not None else PessimisticPolicy(matrix=pqueue_matrix)
        check_configuration(self.strategy, self.policy.kind, stm, allow_unsafe)
        self.abstract_lock = AbstractLock(self.policy, self.strategy)
        self.committed_size = stm.cell(0, tag="size")

    def size(self, ctx: TxnContext) -> int:
        return ctx.read(self.committed_size)


class LazyPriorityQueue(_PQueue):
    """Lazy queue over a copy-on-write heap snapshot."""

    strategy = UpdateStrategy.LAZY

    def __init__(self, stm: Stm, policy: LockAllocatorPolicy | None = None,
                 check_replay: bool = True) -> None:
        super().__init__(stm, policy)
        self.base = CowHeap()
        self.slot = LogSlot(self.base, lambda b: SnapshotShadow(b, CowHeap.snapshot),
                            check=check_replay,
                            rebase=self.policy.kind is PolicyKind.PESSIMISTIC)

    def _view_min(self, ctx: TxnContext) -> Any:
        return read_only(ctx, self.slot, lambda h: h.peek())

    def insert(self, ctx: TxnContext, v: Any) -> None:
        def body():
            log_execute(ctx, self.slot, lambda h: h.push(v))
            ctx.commit_add(self.committed_size, 1)

        # holding READ(MIN) keeps other transactions from moving the minimum
        current = self.abstract_lock(ctx, MIN_INTENTS, lambda: self._view_min(ctx))
        self.abstract_lock(ctx, insert_intents(v, current), body)

    def min(self, ctx: TxnContext) -> Any:
        return self.abstract_lock(ctx, MIN_INTENTS, lambda: self._view_min(ctx))

    def remove_min(self, ctx: TxnContext) -> Any:
        def body():
            ret = log_execute(ctx, self.slot, lambda h: h.pop_min())
            if ret is not None:
                ctx.commit_add(self.committed_size, -1)
            return ret

        return self.abstract_lock(ctx, REMOVE_MIN_INTENTS, body)

    def contains(self, ctx: TxnContext, v: Any) -> bool:
        return self.abstract_lock(ctx, CONTAINS_INTENTS,
                                  lambda: read_only(ctx, self.slot, lambda h: v in h))

    def committed_items(self) -> list:
        return self.base.sorted_items()


class _Entry:
    __slots__ = ("value", "seq", "deleted")

    def __init__(self, value: Any, seq: int) -> None:
        self.value, self.seq, self.deleted = value, seq, False

    def __lt__(self, other: _Entry) -> bool:
        return (self.value, self.seq) < (other.value, other.seq)

    def delete(self) -> None:
        self.deleted = True


class TombstoneHeap:
    """Thread-safe heap whose entries can be deleted by flipping a flag."""

    def __init__(self) -> None:
        self._heap: list[_Entry] = []
        self._lock = threading.Lock()
        self._seq = itertools.count()

    def _prune(self) -> None:
        while self._heap and self._heap[0].deleted:
            heapq.heappop(self._heap)

    def add(self, value: Any) -> _Entry:
        with self._lock:
            e = _Entry(value, next(self._seq))
            heapq.heappush(self._heap, e)
            return e

    def peek(self) -> Any:
        with self._lock:
            self._prune()
            return self._heap[0].value if self._heap else None

    def pop_min(self) -> Any:
        e = self.pop_entry()
        return None if e is None else e.value

    def pop_entry(self) -> _Entry | None:
        with self._lock:
            self._prune()
            return heapq.heappop(self._heap) if self._heap else None

    def restore(self, entry: _Entry) -> None:
        """Put back an entry taken by :meth:`pop_entry`, keeping its identity."""
        with self._lock:
            heapq.heappush(self._heap, entry)

    def is_heap(self) -> bool:
        with self._lock:
            d = self._heap
            return all(not d[i] < d[(i - 1) // 2] for i in range(1, len(d)))

    def __contains__(self, value: Any) -> bool:
        with self._lock:
            return any(e.value == value and not e.deleted for e in self._heap)

    def sorted_items(self) -> list:
        with self._lock:
            return sorted(e.value for e in self._heap if not e.deleted)


class EagerPriorityQueue(_PQueue):
    """Eager queue: inserts are undone by tombstoning the inserted entry."""

    strategy = UpdateStrategy.EAGER

    def __init__(self, stm: Stm, policy: LockAllocatorPolicy | None = None,
                 allow_unsafe: bool = False) -> None:
        super().__init__(stm, policy, allow_unsafe)
        self.base = TombstoneHeap()

    def insert(self, ctx: TxnContext, v: Any) -> None:
        def body():
            e = self.base.add(v)
            ctx.commit_add(self.committed_size, 1)
            return e

        current = self.abstract_lock(ctx, MIN_INTENTS, self.base.peek)
        self.abstract_lock(ctx, insert_intents(v, current), body, _Entry.delete)

    def min(self, ctx: TxnContext) -> Any:
        return self.abstract_lock(ctx, MIN_INTENTS, self.base.peek)

    def remove_min(self, ctx: TxnContext) -> Any:
        def body():
            e = self.base.pop_entry()
            if e is not None:
                ctx.commit_add(self.committed_size, -1)
            return e

        def undo(e: _Entry | None) -> None:
            # the same entry goes back, so an earlier insert's inverse still finds it
            if e is not None:
                self.base.restore(e)

        e = self.abstract_lock(ctx, REMOVE_MIN_INTENTS, body, undo)
        return None if e is None else e.value

    def contains(self, ctx: TxnContext, v: Any) -> bool:
        return self.abstract_lock(ctx, CONTAINS_INTENTS, lambda: v in self.base)

    def committed_items(self) -> list:
        return self.base.sorted_items()

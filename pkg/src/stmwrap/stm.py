"""Word-based software transactional memory.

Cells carry an opaque token and a version stamp taken from a global
version clock. Transactions buffer writes, record the stamps they read,
and validate the read set at commit while holding the write locks.

Three conflict detection modes are supported:

* ``LAZY``: commit-time locking and read-set validation (TL2-style).
* ``EAGER_WW``: writers take a cell's ownership at first write, so
  write/write conflicts surface immediately.
* ``FULLY_EAGER``: as ``EAGER_WW``, plus visible readers, so a writer
  also meets active readers of the cell at encounter time.

Contention between two live transactions is resolved by age: the
younger one aborts, the older one dooms the younger and waits for it to
release the cell.
"""
from __future__ import annotations

import enum
import itertools
import operator
import random
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, TypeVar

T = TypeVar("T")

__all__ = [
    "Cell",
    "Phase",
    "RetriesExhausted",
    "RetryPolicy",
    "Status",
    "Stm",
    "StmMode",
    "StmStats",
    "TransactionAbort",
    "TxnContext",
    "VersionClock",
    "current_context",
    "fresh_token",
]


class StmMode(enum.Enum):
    LAZY = "LAZY"
    EAGER_WW = "EAGER_WW"
    FULLY_EAGER = "FULLY_EAGER"


class Phase(enum.Enum):
    WHILE_COMMIT_LOCKED = "while_commit_locked"
    AFTER_COMMIT = "after_commit"
    AFTER_ROLLBACK = "after_rollback"

    # members are singletons, so identity hashing is exact and avoids
    # Enum.__hash__ on every handler lookup
    __hash__ = object.__hash__


class Status(enum.Enum):
    ACTIVE = "active"
    COMMITTING = "committing"
    COMMITTED = "committed"
    ABORTED = "aborted"


class TransactionAbort(Exception):
    """Raised inside a transaction to abandon the current attempt.

    ``tag`` names the kind of cell (or lock) that caused the conflict so
    that retries can be attributed, e.g. ``"ca"`` for conflict-abstraction
    cells.
    """

    def __init__(self, tag: str = "data", reason: str = "conflict") -> None:
        super().__init__(f"{reason} ({tag})")
        self.tag = tag
        self.reason = reason


class RetriesExhausted(RuntimeError):
    pass


_token_lock = threading.Lock()
_token_counter = itertools.count(1)


def fresh_token() -> int:
    """Return a globally unique, positive token."""
    with _token_lock:
        return next(_token_counter)


_txn_ids = itertools.count(1)
_priorities = itertools.count(1)
_cell_ids = itertools.count(1)
_local = threading.local()


def current_context() -> TxnContext | None:
    """The transaction running on this thread, if any."""
    return getattr(_local, "ctx", None)


class VersionClock:
    """Global commit clock.

    ``now()`` returns the newest version ``v`` such that every commit
    stamped ``<= v`` has finished publishing, which lets a transaction
    starting at ``v`` assume that all older commits are fully visible,
    including any side effects their commit handlers applied.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._value = 0
        self._inflight: set[int] = set()

    def now(self) -> int:
        with self._lock:
            if self._inflight:
                return min(self._inflight) - 1
            return self._value

    @property
    def latest(self) -> int:
        return self._value

    def begin_commit(self) -> int:
        with self._lock:
            self._value += 1
            self._inflight.add(self._value)
            return self._value

    def end_commit(self, version: int) -> None:
        with self._lock:
            self._inflight.discard(version)


class Cell:
    """An STM-managed location holding an opaque token."""

    __slots__ = ("id", "value", "stamp", "owner", "readers", "tag", "reads",
                 "writes", "_guard", "__weakref__")

    def __init__(self, value: Any = 0, tag: str = "data") -> None:
        self.id = next(_cell_ids)
        self.value = value
        self.stamp = 0
        self.owner: TxnContext | None = None
        self.readers: set[TxnContext] = set()
        self.tag = tag
        # instrumentation: transactional accesses that reached the cell
        self.reads = 0
        self.writes = 0
        self._guard = threading.Lock()

    def peek(self) -> Any:
        """Committed value, read outside any transaction."""
        with self._guard:
            return self.value

    def __repr__(self) -> str:
        return f"Cell(id={self.id}, tag={self.tag!r}, stamp={self.stamp})"


@dataclass
class RetryPolicy:
    """Bounded retries with randomized exponential backoff."""

    max_attempts: int = 64
    base_delay: float = 1e-6
    max_delay: float = 8e-3
    jitter: float = 0.5

    def delay(self, attempt: int, rng: random.Random) -> float:
        d = min(self.base_delay * (2 ** attempt), self.max_delay)
        return d * (1.0 + rng.uniform(-self.jitter, self.jitter))


@dataclass
class StmStats:
    commits: int = 0
    retries: int = 0
    by_tag: Counter = field(default_factory=Counter)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record_commit(self) -> None:
        with self._lock:
            self.commits += 1

    def record_retry(self, tag: str) -> None:
        with self._lock:
            self.retries += 1
            self.by_tag[tag] += 1

    @property
    def ca_retries(self) -> int:
        return self.by_tag["ca"]

    def reset(self) -> None:
        with self._lock:
            self.commits = 0
            self.retries = 0
            self.by_tag.clear()


class Stm:
    """An STM instance: a version clock, a mode and a retry policy."""

    def __init__(self, mode: StmMode = StmMode.LAZY,
                 retry: RetryPolicy | None = None,
                 contention_timeout: float = 0.05,
                 seed: int | None = None) -> None:
        self.mode = mode
        self.retry = retry or RetryPolicy()
        self.contention_timeout = contention_timeout
        self.clock = VersionClock()
        self.stats = StmStats()
        self._rng_lock = threading.Lock()
        self._rng = random.Random(seed)

    def cell(self, value: Any = 0, tag: str = "data") -> Cell:
        return Cell(value, tag)

    def _backoff(self, attempt: int) -> None:
        with self._rng_lock:
            d = self.retry.delay(attempt, self._rng)
        time.sleep(d)

    def atomically(self, body: Callable[[TxnContext], T],
                   max_attempts: int | None = None) -> T:
        """Run ``body(ctx)`` as a transaction, retrying on conflicts.

        Exceptions other than :class:`TransactionAbort` roll the attempt
        back and propagate.
        """
        if current_context() is not None:
            raise RuntimeError("nested transactions are not supported")
        limit = max_attempts or self.retry.max_attempts
        priority = next(_priorities)
        last: TransactionAbort | None = None
        for attempt in range(limit):
            ctx = TxnContext(self, attempt, priority)
            _local.ctx = ctx
            try:
                result = body(ctx)
                ctx._commit()
            except TransactionAbort as exc:
                if ctx.status is Status.ACTIVE:
                    ctx._rollback()
                self.stats.record_retry(exc.tag)
                last = exc
                _local.ctx = None
                self._backoff(attempt)
                continue
            except BaseException:
                if ctx.status is Status.ACTIVE:
                    ctx._rollback()
                raise
            finally:
                _local.ctx = None
            self.stats.record_commit()
            return result
        raise RetriesExhausted(f"gave up after {limit} attempts: {last}")


_POLL = 2e-5
_cell_order = operator.attrgetter("id")


class TxnContext:
    """Per-attempt transaction state. Confined to the creating thread."""

    def __init__(self, stm: Stm, attempt: int = 0, priority: int | None = None) -> None:
        self.stm = stm
        self.txn_id = next(_txn_ids)
        self.attempt = attempt
        self.priority = priority if priority is not None else next(_priorities)
        self.status = Status.ACTIVE
        self.start_version = stm.clock.now()
        self.commit_version: int | None = None
        self.read_set: dict[Cell, int] = {}
        self.write_set: dict[Cell, Any] = {}
        self.adds: dict[Cell, int] = {}
        self.locals: dict[Hashable, Any] = {}
        self.handlers: dict[Phase, list[Callable[[], Any]]] = {}
        self._owned: list[Cell] = []
        self._registered: list[Cell] = []
        self._guard = threading.Lock()
        self._doomed: str | None = None

    def __repr__(self) -> str:
        return f"TxnContext(id={self.txn_id}, status={self.status.value})"

    # -- public API -------------------------------------------------------

    def read(self, cell: Cell) -> Any:
        """Read a cell. Pending writes and pending additions are visible."""
        self._check_live()
        if cell in self.write_set:
            return self.write_set[cell]
        eager = self.stm.mode is StmMode.FULLY_EAGER
        value = self._read_committed(cell, register=eager, extend=True)
        if cell in self.adds:
            value += self.adds[cell]
        return value

    def write(self, cell: Cell, token: Any) -> None:
        self._check_live()
        if self.stm.mode is not StmMode.LAZY and cell.owner is not self:
            self._acquire_encounter(cell)
        else:
            with cell._guard:
                cell.writes += 1
        self.write_set[cell] = token

    def commit_add(self, cell: Cell, delta: int) -> None:
        """Add ``delta`` to an integer cell when (and if) this commits.

        Additions commute, so they are not validated; only reads of the
        cell are. Never raises a conflict, so eager bodies can call it
        between a base mutation and the registration of its inverse.
        """
        if self.status is not Status.ACTIVE:
            raise RuntimeError(f"transaction is {self.status.value}")
        self.adds[cell] = self.adds.get(cell, 0) + delta

    def observe(self, cell: Cell) -> None:
        """Committed read of a cell's stamp, used by the lazy surround protocol.

        Records the stamp in the read set. A cell changed after this
        transaction's snapshot extends the snapshot, which revalidates
        everything observed so far.
        """
        if self.status is not Status.ACTIVE or self._doomed is not None:
            self._check_live()
        recorded = self.read_set.get(cell)
        while True:
            with cell._guard:
                owner = cell.owner
                if owner is None or owner is self:
                    stamp = cell.stamp
                    cell.reads += 1
                    break
            self._contend(owner, cell)
        if recorded is None:
            if stamp > self.start_version:
                self._extend(stamp, cell.tag)
            self.read_set[cell] = stamp
        elif recorded != stamp:
            raise TransactionAbort(cell.tag, "cell changed")

    def revalidate(self, cell: Cell) -> None:
        """Check that ``cell`` is unchanged since it was first observed."""
        if self.status is not Status.ACTIVE or self._doomed is not None:
            self._check_live()
        with cell._guard:
            owner, stamp = cell.owner, cell.stamp
        if (owner is not None and owner is not self) or stamp != self.read_set.get(cell):
            raise TransactionAbort(cell.tag, "invalidated")

    def local(self, key: Hashable, initializer: Callable[[], T]) -> T:
        """Transaction-local storage, initialized on first use."""
        try:
            return self.locals[key]
        except KeyError:
            value = self.locals[key] = initializer()
            return value

    def peek_local(self, key: Hashable) -> Any:
        return self.locals.get(key)

    def on(self, phase: Phase, action: Callable[[], Any]) -> None:
        if self.status is not Status.ACTIVE:
            raise RuntimeError(f"cannot register handlers on a {self.status.value} transaction")
        self.handlers.setdefault(phase, []).append(action)

    def retry(self, tag: str = "explicit") -> None:
        """Abort the current attempt; ``atomically`` will run the body again."""
        raise TransactionAbort(tag, "explicit retry")

    # -- internals --------------------------------------------------------

    def _check_live(self) -> None:
        if self.status is not Status.ACTIVE:
            raise RuntimeError(f"transaction is {self.status.value}")
        if self._doomed is not None:
            raise TransactionAbort(self._doomed, "doomed by an older transaction")

    def _doom(self, tag: str) -> bool:
        """Ask this transaction to abort. False if it already started committing."""
        with self._guard:
            if self.status is Status.ACTIVE:
                if self._doomed is None:
                    self._doomed = tag
                return True
            return self.status is not Status.COMMITTING

    def _read_committed(self, cell: Cell, register: bool, extend: bool) -> Any:
        while True:
            with cell._guard:
                owner = cell.owner
                if owner is None or owner is self:
                    value, stamp = cell.value, cell.stamp
                    cell.reads += 1
                    if register and self not in cell.readers:
                        cell.readers.add(self)
                        self._registered.append(cell)
                    break
            self._contend(owner, cell)
        recorded = self.read_set.get(cell)
        if recorded is not None and recorded != stamp:
            raise TransactionAbort(cell.tag, "inconsistent read")
        if stamp > self.start_version:
            if not extend:
                raise TransactionAbort(cell.tag, "stale read")
            self._extend(stamp, cell.tag)
        self.read_set[cell] = stamp
        return value

    def _extend(self, stamp: int, tag: str) -> None:
        deadline = time.monotonic() + self.stm.contention_timeout
        while True:
            now = self.stm.clock.now()
            if not self._validate_reads():
                raise TransactionAbort(tag, "snapshot extension failed")
            self.start_version = now
            if stamp <= now:
                return
            if time.monotonic() > deadline:
                raise TransactionAbort(tag, "snapshot extension timed out")
            time.sleep(_POLL)

    def _validate_reads(self) -> bool:
        for cell, stamp in self.read_set.items():
            with cell._guard:
                owner, current = cell.owner, cell.stamp
            if current != stamp or (owner is not None and owner is not self):
                return False
        return True

    def _contend(self, other: TxnContext, cell: Cell) -> None:
        """Resolve a conflict with the transaction owning ``cell``.

        Returns once ``other`` no longer owns the cell, or raises. An
        older requester dooms the owner; a younger one stalls, and gives
        up if it is doomed or the owner outlasts the contention timeout.
        """
        if other.status is Status.ACTIVE and self.priority < other.priority:
            other._doom(cell.tag)
        self._await(lambda: cell.owner is not other, cell.tag)

    def _await(self, predicate: Callable[[], bool], tag: str) -> None:
        deadline = time.monotonic() + self.stm.contention_timeout
        while not predicate():
            if self._doomed is not None and self.status is Status.ACTIVE:
                raise TransactionAbort(self._doomed, "doomed while waiting")
            if time.monotonic() > deadline:
                raise TransactionAbort(tag, "contention timeout")
            time.sleep(_POLL)

    def _acquire_encounter(self, cell: Cell) -> None:
        eager_readers = self.stm.mode is StmMode.FULLY_EAGER
        while True:
            with cell._guard:
                owner = cell.owner
                if owner is None:
                    blockers = [r for r in cell.readers if r is not self] if eager_readers else []
                    if not blockers:
                        cell.owner = self
                        cell.writes += 1
                        self._owned.append(cell)
                        return
                elif owner is self:
                    return
            if owner is not None:
                self._contend(owner, cell)
            else:
                self._contend_readers(blockers, cell)

    def _contend_readers(self, readers: list[TxnContext], cell: Cell) -> None:
        for r in readers:
            if r.status is Status.ACTIVE and r.priority > self.priority:
                r._doom(cell.tag)
        # older readers are waited for, like an older owner
        self._await(lambda: not any(r in cell.readers for r in readers), cell.tag)

    def _acquire_commit(self, cell: Cell) -> None:
        while True:
            with cell._guard:
                owner = cell.owner
                if owner is None:
                    cell.owner = self
                    self._owned.append(cell)
                    return
                if owner is self:
                    return
            # committing: we can no longer be doomed, so wait or give up
            if owner.status is Status.ACTIVE and self.priority < owner.priority:
                owner._doom(cell.tag)
            deadline = time.monotonic() + self.stm.contention_timeout
            while cell.owner is owner:
                if time.monotonic() > deadline:
                    raise TransactionAbort(cell.tag, "commit lock timeout")
                time.sleep(_POLL)

    def _release(self) -> None:
        for cell in self._owned:
            with cell._guard:
                if cell.owner is self:
                    cell.owner = None
        for cell in self._registered:
            with cell._guard:
                cell.readers.discard(self)
        self._owned = []
        self._registered = []

    def _commit(self) -> int:
        with self._guard:
            if self._doomed is not None:
                tag = self._doomed
                doomed = True
            else:
                self.status = Status.COMMITTING
                doomed = False
        if doomed:
            self._rollback()
            raise TransactionAbort(tag, "doomed before commit")
        version = None
        try:
            targets = self.write_set.keys() | self.adds.keys() if self.adds else self.write_set
            if targets:
                for cell in sorted(targets, key=_cell_order):
                    self._acquire_commit(cell)
            version = self.stm.clock.begin_commit()
            for cell, stamp in self.read_set.items():
                with cell._guard:
                    owner, current = cell.owner, cell.stamp
                if current != stamp or (owner is not None and owner is not self):
                    raise TransactionAbort(cell.tag, "read-set validation failed")
        except BaseException:
            if version is not None:
                self.stm.clock.end_commit(version)
            self._rollback()
            raise
        self.commit_version = version
        try:
            try:
                for action in self.handlers.get(Phase.WHILE_COMMIT_LOCKED, ()):
                    action()
            except BaseException:
                self._rollback()
                raise
            for cell, token in self.write_set.items():
                with cell._guard:
                    cell.value = token
                    cell.stamp = version
            for cell, delta in self.adds.items():
                with cell._guard:
                    cell.value += delta
                    cell.stamp = version
            self.status = Status.COMMITTED
            self._release()
        finally:
            self.stm.clock.end_commit(version)
        for action in self.handlers.get(Phase.AFTER_COMMIT, ()):
            action()
        return version

    def _rollback(self) -> None:
        self.status = Status.ABORTED
        try:
            for action in reversed(self.handlers.get(Phase.AFTER_ROLLBACK, [])):
                action()
        finally:
            self._release()
            self.write_set.clear()
            self.adds.clear()

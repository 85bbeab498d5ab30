"""Lazy updates: replay logs and shadow copies.

A transaction running lazily never touches the shared base structure.
Each mutating operation is evaluated against a transaction-private
shadow copy to get its return value, and queued in a replay log. The log
is applied to the base while the committing transaction still holds its
STM locks, and dropped if the transaction rolls back.
"""
from __future__ import annotations

import enum
from typing import TYPE_CHECKING, Any, Callable, Generic, Hashable, Sequence, TypeVar

from .stm import Phase, TransactionAbort, TxnContext, fresh_token

if TYPE_CHECKING:
    from .abstract_lock import LockIntent, OptimisticPolicy

B = TypeVar("B")
Z = TypeVar("Z")

__all__ = [
    "LogSlot",
    "MemoizingShadow",
    "ReplayError",
    "ReplayLog",
    "ShadowCopy",
    "SnapshotShadow",
    "UpdateStrategy",
    "combine_log",
    "lazy_opacity_surround",
    "log_execute",
    "read_only",
]

_ABSENT = object()


class UpdateStrategy(enum.Enum):
    EAGER = "eager"
    LAZY = "lazy"


class ReplayError(AssertionError):
    """Replaying a committed log produced a different result than speculation."""


class ShadowCopy(Generic[B]):
    base: B

    def read_view(self) -> Any:
        raise NotImplementedError

    def target(self) -> Any:
        """The object mutating operations run against speculatively."""
        raise NotImplementedError


class MemoizingShadow(ShadowCopy[B]):
    """Map-shaped shadow: per-key pending state over a read-only base.

    The base must offer ``get(key)`` returning ``None`` for absent keys.
    """

    def __init__(self, base: B) -> None:
        self.base = base
        self.overrides: dict[Hashable, Any] = {}

    def read_view(self) -> MemoizingShadow[B]:
        return self

    def target(self) -> MemoizingShadow[B]:
        return self

    def get(self, key: Hashable) -> Any:
        v = self.overrides.get(key, _ABSENT)
        if v is _ABSENT:
            return self.base.get(key)
        return v

    def contains(self, key: Hashable) -> bool:
        return self.get(key) is not None

    def put(self, key: Hashable, value: Any) -> Any:
        if value is None:
            raise ValueError("None is reserved for absent values")
        old = self.get(key)
        self.overrides[key] = value
        return old

    def remove(self, key: Hashable) -> Any:
        old = self.get(key)
        self.overrides[key] = None
        return old


class SnapshotShadow(ShadowCopy[B]):
    """Reads go to the base until the first mutation, then to a snapshot.

    The base must provide ``state_token()``, which changes whenever the
    base is mutated; :meth:`stale` compares it with the token taken
    together with the snapshot.
    """

    def __init__(self, base: B, snapshot: Callable[[B], B]) -> None:
        self.base = base
        self._make = snapshot
        self.snapshot: B | None = None
        self._taken_at: Any = None

    def read_view(self) -> B:
        return self.base if self.snapshot is None else self.snapshot

    def target(self) -> B:
        if self.snapshot is None:
            self.take()
        return self.snapshot

    def take(self) -> B:
        self._taken_at = self.base.state_token()
        self.snapshot = self._make(self.base)
        return self.snapshot

    def stale(self) -> bool:
        return self.snapshot is not None and self.base.state_token() != self._taken_at


class ReplayLog(Generic[B]):
    """Pending operations of one transaction on one base structure."""

    def __init__(self, ctx: TxnContext, base: B, shadow: ShadowCopy[B],
                 combine: bool = False, check: bool = True, rebase: bool = False) -> None:
        self.base = base
        self.shadow = shadow
        self.entries: list[tuple[Callable[[B], Any], Any]] = []
        self.combine = combine
        self.check = check
        self.rebase = rebase
        self.replayed = False
        self.ctx = ctx
        self._snapshot_start = ctx.start_version
        self._snapshots = isinstance(shadow, SnapshotShadow)
        ctx.on(Phase.WHILE_COMMIT_LOCKED, self.replay)

    @property
    def dirty(self) -> bool:
        return bool(self.entries)

    def refresh(self) -> None:
        """Rebuild a stale snapshot from the current base plus this log.

        A snapshot goes stale for keys whose conflict cells changed after
        the transaction's start. That matters after the transaction has
        extended its start version, and always under pessimistic locks
        (``rebase``), where no start version guards the keys.

        Under pessimistic locks every key the log touched is still held,
        so re-running the log must give the same results. Optimistically,
        another transaction may have committed to one of those keys after
        the extension validated; commit-time validation would reject this
        attempt anyway, so a differing result aborts it here.
        """
        shadow = self.shadow
        if not self._snapshots or shadow.snapshot is None:
            return
        moved = self.ctx.start_version != self._snapshot_start
        if not (moved or self.rebase) or not shadow.stale():
            return
        self._snapshot_start = self.ctx.start_version
        snap = shadow.take()
        for op, expected in self.entries:
            got = op(snap)
            if got != expected:
                if not self.rebase:
                    raise TransactionAbort("ca", "a logged key changed before the snapshot rebuild")
                raise ReplayError(f"rebase returned {got!r}, speculation saw {expected!r}")

    def view(self) -> Any:
        if self._snapshots:
            self.refresh()
        return self.shadow.read_view()

    def execute(self, op: Callable[[Any], Z]) -> Z:
        if self._snapshots:
            self.refresh()
            if self.shadow.snapshot is None:
                self._snapshot_start = self.ctx.start_version
        result = op(self.shadow.target())
        self.entries.append((op, result))
        return result

    def replay_list(self) -> list[tuple[Callable[[B], Any], Any]]:
        if self.combine:
            return combine_log(self)
        return self.entries

    def replay(self) -> None:
        assert not self.replayed, "a replay log is applied once"
        self.replayed = True
        entries = self.replay_list()
        check = self.check and not self.combine
        for op, expected in entries:
            got = op(self.base)
            if check and got != expected:
                raise ReplayError(f"replay returned {got!r}, speculation saw {expected!r}")


def combine_log(log: ReplayLog) -> list[tuple[Callable[[Any], Any], Any]]:
    """One synthetic put or remove per key, reflecting the final override."""
    shadow = log.shadow
    if not isinstance(shadow, MemoizingShadow):
        raise TypeError("log combining needs a memoizing shadow")
    out: list[tuple[Callable[[Any], Any], Any]] = []
    for key, value in shadow.overrides.items():
        if value is None:
            out.append((lambda b, k=key: b.remove(k), None))
        else:
            out.append((lambda b, k=key, v=value: b.put(k, v), None))
    return out


class LogSlot(Generic[B]):
    """Transaction-local handle to a structure's replay log.

    The log is allocated the first time the structure is written in a
    transaction.
    """

    def __init__(self, base: B, shadow_factory: Callable[[B], ShadowCopy[B]],
                 combine: bool = False, check: bool = True, rebase: bool = False) -> None:
        self.base = base
        self.shadow_factory = shadow_factory
        self.combine = combine
        self.check = check
        self.rebase = rebase
        self._key = ("replay-log", id(self))

    def get(self, ctx: TxnContext) -> ReplayLog[B]:
        log = ctx.locals.get(self._key)
        if log is None:
            log = ctx.locals[self._key] = ReplayLog(
                ctx, self.base, self.shadow_factory(self.base), self.combine, self.check,
                self.rebase)
        return log

    def peek(self, ctx: TxnContext) -> ReplayLog[B] | None:
        return ctx.peek_local(self._key)


def log_execute(ctx: TxnContext, slot: LogSlot[B], op: Callable[[Any], Z]) -> Z:
    """Run ``op`` speculatively on the shadow and queue it for replay."""
    return slot.get(ctx).execute(op)


def read_only(ctx: TxnContext, slot: LogSlot[B], reader: Callable[[Any], Z]) -> Z:
    """Run an observer without allocating a log when none is needed."""
    log = slot.peek(ctx)
    if log is None:
        return reader(slot.base)
    return reader(log.view())


def lazy_opacity_surround(ctx: TxnContext, policy: OptimisticPolicy,
                          intents: Sequence[LockIntent], body: Callable[[], Z]) -> Z:
    """Announce, run, then re-check an operation's conflict-abstraction cells.

    Every cell is observed before the operation (write intents also
    write a fresh token), and re-checked afterwards. If a conflicting
    transaction committed in between, the re-check aborts this attempt,
    so the shadow copy can never be used after being invalidated.
    """
    if len(intents) == 1:
        intent = intents[0]
        cell = policy.cell_for(intent.key)
        ctx.observe(cell)
        if intent.write:
            ctx.write(cell, fresh_token())
        result = body()
        ctx.revalidate(cell)
        return result
    cells = [(policy.cell_for(i.key), i.write) for i in intents]
    for cell, write in cells:
        ctx.observe(cell)
        if write:
            ctx.write(cell, fresh_token())
    result = body()
    for cell, _ in cells:
        ctx.revalidate(cell)
    return result

"""Transactional maps built from thread-safe base maps."""
from __future__ import annotations

from typing import Any, Hashable

from ..abstract_lock import (AbstractLock, LockAllocatorPolicy, OptimisticPolicy,
                             PolicyKind, Read, Write, check_configuration)
from ..stm import Cell, Stm, TxnContext
from ..update_strategies import (LogSlot, MemoizingShadow, SnapshotShadow,
                                 UpdateStrategy, log_execute)
from .concurrent_map import ConcurrentHashMap
from .hamt import TrieMap


class TransactionalMap:
    """Common surface: ``put``, ``get``, ``contains``, ``remove``, ``size``.

    Values may not be ``None``; ``None`` stands for an absent binding.
    The element count lives in its own STM cell and is updated by a
    commutative commit-time addition.
    """

    strategy: UpdateStrategy
    base: Any

    def __init__(self, stm: Stm, policy: LockAllocatorPolicy | None,
                 allow_unsafe: bool = False) -> None:
        self.stm = stm
        self.policy = policy if policy is not None else OptimisticPolicy(stm)
        check_configuration(self.strategy, self.policy.kind, stm, allow_unsafe)
        self.abstract_lock = AbstractLock(self.policy, self.strategy)
        self.committed_size: Cell = stm.cell(0, tag="size")

    def put(self, ctx: TxnContext, key: Hashable, value: Any) -> Any:
        raise NotImplementedError

    def get(self, ctx: TxnContext, key: Hashable) -> Any:
        raise NotImplementedError

    def contains(self, ctx: TxnContext, key: Hashable) -> bool:
        raise NotImplementedError

    def remove(self, ctx: TxnContext, key: Hashable) -> Any:
        raise NotImplementedError

    def size(self, ctx: TxnContext) -> int:
        return ctx.read(self.committed_size)

    def snapshot_dict(self) -> dict:
        """Committed contents, read outside any transaction."""
        return self.base.to_dict()


class EagerMap(TransactionalMap):
    """Updates the base map in place and registers inverses for rollback."""

    strategy = UpdateStrategy.EAGER

    def __init__(self, stm: Stm, policy: LockAllocatorPolicy | None = None,
                 allow_unsafe: bool = False) -> None:
        self.base = ConcurrentHashMap()
        super().__init__(stm, policy, allow_unsafe)

    def put(self, ctx, key, value):
        base = self.base

        def body():
            ret = base.put(key, value)
            if ret is None:
                ctx.commit_add(self.committed_size, 1)
            return ret

        def undo(ret):
            if ret is None:
                base.remove(key)
            else:
                base.put(key, ret)

        return self.abstract_lock(ctx, [Write(key)], body, undo)

    def get(self, ctx, key):
        return self.abstract_lock(ctx, [Read(key)], lambda: self.base.get(key))

    def contains(self, ctx, key):
        return self.abstract_lock(ctx, [Read(key)], lambda: self.base.contains(key))

    def remove(self, ctx, key):
        base = self.base

        def body():
            ret = base.remove(key)
            if ret is not None:
                ctx.commit_add(self.committed_size, -1)
            return ret

        def undo(ret):
            if ret is not None:
                base.put(key, ret)

        return self.abstract_lock(ctx, [Write(key)], body, undo)


class _LazyMap(TransactionalMap):
    strategy = UpdateStrategy.LAZY
    slot: LogSlot

    def put(self, ctx, key, value):
        def body():
            ret = log_execute(ctx, self.slot, lambda m: m.put(key, value))
            if ret is None:
                ctx.commit_add(self.committed_size, 1)
            return ret

        return self.abstract_lock(ctx, [Write(key)], body)

    def _view(self, ctx):
        log = self.slot.peek(ctx)
        return self.base if log is None else log.view()

    def get(self, ctx, key):
        return self.abstract_lock(ctx, [Read(key)], lambda: self._view(ctx).get(key))

    def contains(self, ctx, key):
        return self.abstract_lock(ctx, [Read(key)], lambda: self._view(ctx).contains(key))

    def remove(self, ctx, key):
        def body():
            ret = log_execute(ctx, self.slot, lambda m: m.remove(key))
            if ret is not None:
                ctx.commit_add(self.committed_size, -1)
            return ret

        return self.abstract_lock(ctx, [Write(key)], body)


class LazyMemoMap(_LazyMap):
    """Lazy map whose shadow memoizes per-key pending state.

    With ``combine_logs`` the commit replays one synthetic update per
    touched key instead of every logged operation.
    """

    def __init__(self, stm: Stm, policy: LockAllocatorPolicy | None = None,
                 combine_logs: bool = False, check_replay: bool = True) -> None:
        self.base = ConcurrentHashMap()
        self.slot = LogSlot(self.base, MemoizingShadow, combine=combine_logs, check=check_replay)
        super().__init__(stm, policy)


class LazySnapshotMap(_LazyMap):
    """Lazy map over a persistent trie; the first write takes a snapshot."""

    def __init__(self, stm: Stm, policy: LockAllocatorPolicy | None = None,
                 check_replay: bool = True) -> None:
        super().__init__(stm, policy)
        self.base = TrieMap()
        self.slot = LogSlot(self.base, lambda b: SnapshotShadow(b, TrieMap.snapshot),
                            check=check_replay,
                            rebase=self.policy.kind is PolicyKind.PESSIMISTIC)


__all__ = ["EagerMap", "LazyMemoMap", "LazySnapshotMap", "TransactionalMap", "PolicyKind"]

"""Baseline map stored entirely in STM cells.

Every slot of an open-addressed table is a cell holding a token; the
token indexes a side table of ``(key, value)`` entries. The element
count is an ordinary read-modify-write cell, as in a conventional
transactional hash table.
"""
from __future__ import annotations

import threading
from typing import Any, Hashable

from ..abstract_lock import _mix64
from ..stm import Phase, Stm, TxnContext, fresh_token

_EMPTY = 0
_TOMBSTONE = -1


class NaiveStmMap:
    def __init__(self, stm: Stm, key_range: int = 1024) -> None:
        self.stm = stm
        cap = 1
        while cap < 2 * key_range:
            cap <<= 1
        self._mask = cap - 1
        self.slots = [stm.cell(_EMPTY, tag="data") for _ in range(cap)]
        self.committed_size = stm.cell(0, tag="data")
        self._entries: dict[int, tuple[Hashable, Any]] = {}
        self._entries_lock = threading.Lock()

    def _probe(self, ctx: TxnContext, key: Hashable) -> tuple[int | None, int | None]:
        """Return (slot holding key, first reusable slot)."""
        i = _mix64(hash(key)) & self._mask
        free = None
        for _ in range(self._mask + 1):
            tok = ctx.read(self.slots[i])
            if tok == _EMPTY:
                return None, i if free is None else free
            if tok == _TOMBSTONE:
                if free is None:
                    free = i
            elif self._entries[tok][0] == key:
                return i, free
            i = (i + 1) & self._mask
        return None, free

    def _store(self, ctx: TxnContext, slot: int, key: Hashable, value: Any) -> None:
        tok = fresh_token()
        with self._entries_lock:
            self._entries[tok] = (key, value)
        ctx.on(Phase.AFTER_ROLLBACK, lambda: self._entries.pop(tok, None))
        ctx.write(self.slots[slot], tok)

    def get(self, ctx: TxnContext, key: Hashable) -> Any:
        at, _ = self._probe(ctx, key)
        return None if at is None else self._entries[ctx.read(self.slots[at])][1]

    def contains(self, ctx: TxnContext, key: Hashable) -> bool:
        return self._probe(ctx, key)[0] is not None

    def put(self, ctx: TxnContext, key: Hashable, value: Any) -> Any:
        if value is None:
            raise ValueError("None is reserved for absent values")
        at, free = self._probe(ctx, key)
        if at is not None:
            old = self._entries[ctx.read(self.slots[at])][1]
            self._store(ctx, at, key, value)
            return old
        if free is None:
            raise MemoryError("cell table full")
        self._store(ctx, free, key, value)
        ctx.write(self.committed_size, ctx.read(self.committed_size) + 1)
        return None

    def remove(self, ctx: TxnContext, key: Hashable) -> Any:
        at, _ = self._probe(ctx, key)
        if at is None:
            return None
        old = self._entries[ctx.read(self.slots[at])][1]
        ctx.write(self.slots[at], _TOMBSTONE)
        ctx.write(self.committed_size, ctx.read(self.committed_size) - 1)
        return old

    def size(self, ctx: TxnContext) -> int:
        return ctx.read(self.committed_size)

    def snapshot_dict(self) -> dict:
        out = {}
        for c in self.slots:
            tok = c.peek()
            if tok not in (_EMPTY, _TOMBSTONE):
                k, v = self._entries[tok]
                out[k] = v
        return out

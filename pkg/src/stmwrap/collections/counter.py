"""Non-negative counter synchronized through a one-cell conflict abstraction."""
from __future__ import annotations

import threading

from ..abstract_lock import CASpec, PolicyKind, ca_touch, check_configuration, counter_ca
from ..stm import Phase, Stm, TxnContext
from ..update_strategies import UpdateStrategy


class AtomicCounter:
    def __init__(self, value: int = 0) -> None:
        self._value = value
        self._lock = threading.Lock()

    @property
    def value(self) -> int:
        return self._value

    def incr(self) -> None:
        with self._lock:
            self._value += 1

    def try_decr(self) -> bool:
        with self._lock:
            if self._value == 0:
                return False
            self._value -= 1
            return True


class BoundedCounter:
    """Counter with ``incr`` and ``decr``; ``decr`` at zero reports failure.

    Updates are applied eagerly with inverses, and the abstraction cell
    is only touched while the sampled count is below the threshold.
    """

    def __init__(self, stm: Stm, initial: int = 0, threshold: int = 2,
                 allow_unsafe: bool = False) -> None:
        if initial < 0:
            raise ValueError("counter starts non-negative")
        check_configuration(UpdateStrategy.EAGER, PolicyKind.OPTIMISTIC, stm, allow_unsafe)
        self.stm = stm
        self.count = AtomicCounter(initial)
        self.ca: CASpec = counter_ca(threshold)
        self.mem = [stm.cell(0, tag="ca") for _ in range(self.ca.locations)]

    def peek(self) -> int:
        return self.count.value

    def incr(self, ctx: TxnContext) -> None:
        ca_touch(ctx, self.ca, self.mem, "incr", (), self.count.value)
        self.count.incr()
        ctx.on(Phase.AFTER_ROLLBACK, self._undo_incr)

    def decr(self, ctx: TxnContext) -> bool:
        """Decrement; returns False (the error flag) if the count was zero."""
        ca_touch(ctx, self.ca, self.mem, "decr", (), self.count.value)
        ok = self.count.try_decr()
        if ok:
            ctx.on(Phase.AFTER_ROLLBACK, self.count.incr)
        return ok

    def _undo_incr(self) -> None:
        if not self.count.try_decr():
            raise AssertionError("inverse of incr found the counter at zero")

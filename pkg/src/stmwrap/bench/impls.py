"""Named benchmark targets and their STM configurations."""
from __future__ import annotations

from typing import Any, Callable

from ..abstract_lock import OptimisticPolicy, PessimisticPolicy, check_configuration
from ..collections import (EagerMap, EagerPriorityQueue, LazyMemoMap, LazyPriorityQueue,
                           LazySnapshotMap, NaiveStmMap)
from ..stm import Stm, StmMode, TxnContext
from ..update_strategies import UpdateStrategy
from .workload import Op

MAP_IMPLS = ("naive", "eager-opt", "eager-pess", "lazy-memo", "lazy-snap", "lazy-pess")
QUEUE_IMPLS = ("pqueue-lazy", "pqueue-eager")
IMPLS = MAP_IMPLS + QUEUE_IMPLS
PESSIMISTIC = frozenset({"eager-pess", "lazy-pess", "pqueue-lazy", "pqueue-eager"})
LAZY = frozenset({"lazy-memo", "lazy-snap", "lazy-pess", "pqueue-lazy"})


def default_mode(impl: str) -> StmMode:
    return StmMode.FULLY_EAGER if impl == "eager-opt" else StmMode.LAZY


def make_structure(impl: str, stm: Stm, key_range: int = 1024, combine_logs: bool = False,
                   allow_unsafe: bool = False, stripes: int = 1024) -> Any:
    """Build a fresh structure. Raises InvalidConfiguration for unsafe combinations."""
    if impl == "naive":
        return NaiveStmMap(stm, key_range)
    if impl == "eager-opt":
        return EagerMap(stm, OptimisticPolicy(stm, stripes), allow_unsafe=allow_unsafe)
    if impl == "eager-pess":
        return EagerMap(stm, PessimisticPolicy())
    if impl == "lazy-memo":
        return LazyMemoMap(stm, OptimisticPolicy(stm, stripes), combine_logs=combine_logs)
    if impl == "lazy-snap":
        return LazySnapshotMap(stm, OptimisticPolicy(stm, stripes))
    if impl == "lazy-pess":
        return LazyMemoMap(stm, PessimisticPolicy(), combine_logs=combine_logs)
    if impl == "pqueue-lazy":
        return LazyPriorityQueue(stm)
    if impl == "pqueue-eager":
        return EagerPriorityQueue(stm, allow_unsafe=allow_unsafe)
    raise ValueError(f"unknown impl {impl!r}; choose from {', '.join(IMPLS)}")


def check_combo(impl: str, mode: StmMode, allow_unsafe: bool = False) -> None:
    """Raise InvalidConfiguration if ``impl`` may not run on a ``mode`` STM."""
    make_structure(impl, Stm(mode), key_range=1, allow_unsafe=allow_unsafe, stripes=1)


def map_runner(impl: str, structure: Any) -> Callable[[TxnContext, Op], Any]:
    """How one workload operation is executed against ``structure``.

    Queues read keys as priorities: put inserts the key, remove takes
    the minimum and get tests membership.
    """
    if impl in QUEUE_IMPLS:
        def run_queue(ctx: TxnContext, op: Op) -> Any:
            if op.method == "put":
                return structure.insert(ctx, op.key)
            if op.method == "remove":
                return structure.remove_min(ctx)
            return structure.contains(ctx, op.key)
        return run_queue

    def run_map(ctx: TxnContext, op: Op) -> Any:
        if op.method == "put":
            return structure.put(ctx, op.key, op.value)
        if op.method == "remove":
            return structure.remove(ctx, op.key)
        return structure.get(ctx, op.key)
    return run_map

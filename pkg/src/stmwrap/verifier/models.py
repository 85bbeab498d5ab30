"""Built-in sequential models and conflict abstractions."""
from __future__ import annotations

from typing import Any, Sequence

from ..abstract_lock import CASpec, counter_ca
from .core import Method, SequentialModel

__all__ = [
    "counter_ca",
    "counter_model",
    "map_model",
    "pqueue_ca",
    "pqueue_model",
    "striped_map_ca",
]


def counter_model(max_count: int = 8) -> SequentialModel:
    """Non-negative counter; ``decr`` returns False (error) at zero."""

    def step(c: int, method: str, args: tuple) -> tuple[int, Any]:
        if method == "incr":
            return c + 1, None
        if c == 0:
            return 0, False
        return c - 1, True

    return SequentialModel(
        name="counter",
        initial_states=(0,),
        methods=(Method("incr"), Method("decr")),
        step=step,
        within=lambda c: 0 <= c <= max_count,
        smt={
            "sort": "Int",
            "invariant": "(>= {s} 0)",
            "methods": {
                "incr": {"err": False, "body": "(= (+ c0 1) c1)"},
                "decr": {"err": True,
                         "body": "(ite (< c0 1) (and (= c1 c0) err) "
                                 "(and (= c1 (- c0 1)) (not err)))"},
            },
        },
    )


def map_model(keys: Sequence[int] = range(4), values: Sequence[Any] = (0, 1)) -> SequentialModel:
    """Finite map; the state is a tuple with one slot per key (None = absent)."""
    keys = tuple(keys)
    index = {k: i for i, k in enumerate(keys)}

    def step(s: tuple, method: str, args: tuple) -> tuple[tuple, Any]:
        i = index[args[0]]
        old = s[i]
        if method == "get":
            return s, old
        if method == "contains":
            return s, old is not None
        new = args[1] if method == "put" else None
        return s[:i] + (new,) + s[i + 1:], old

    key_args = tuple((k,) for k in keys)
    return SequentialModel(
        name="map",
        initial_states=((None,) * len(keys),),
        methods=(
            Method("get", key_args),
            Method("contains", key_args),
            Method("put", tuple((k, v) for k in keys for v in values)),
            Method("remove", key_args),
        ),
        step=step,
    )


def striped_map_ca(stripes: int = 4) -> CASpec:
    """Observers read and mutators write cell ``key mod stripes``."""

    def reads(method: str, args: tuple, obs: Any) -> tuple[int, ...]:
        return (args[0] % stripes,) if method in ("get", "contains") else ()

    def writes(method: str, args: tuple, obs: Any) -> tuple[int, ...]:
        return (args[0] % stripes,) if method in ("put", "remove") else ()

    return CASpec(name=f"striped-{stripes}", locations=stripes, reads=reads, writes=writes)


def pqueue_model(values: Sequence[int] = (0, 1, 2), max_size: int = 3) -> SequentialModel:
    """Priority queue as a sorted tuple (a multiset)."""

    def step(s: tuple, method: str, args: tuple) -> tuple[tuple, Any]:
        if method == "insert":
            return tuple(sorted(s + (args[0],))), None
        if method == "min":
            return s, s[0] if s else None
        if method == "remove_min":
            return (s[1:], s[0]) if s else (s, None)
        if method == "contains":
            return s, args[0] in s
        return s, len(s)

    vals = tuple((v,) for v in values)
    return SequentialModel(
        name="pqueue",
        initial_states=((),),
        methods=(Method("insert", vals), Method("min"), Method("remove_min"),
                 Method("contains", vals), Method("size")),
        step=step,
        within=lambda s: len(s) <= max_size,
    )


MIN, MULTISET, SIZE = 0, 1, 2


def pqueue_ca() -> CASpec:
    """Cells for the minimum, the multiset and the element count.

    The observation is the current minimum (None when empty).
    """

    def reads(method: str, args: tuple, cur_min: Any) -> tuple[int, ...]:
        if method == "insert":
            return () if cur_min is None or args[0] < cur_min else (MIN,)
        return {"min": (MIN,), "contains": (MULTISET,), "size": (SIZE,)}.get(method, ())

    def writes(method: str, args: tuple, cur_min: Any) -> tuple[int, ...]:
        if method == "insert":
            extra = (MIN,) if cur_min is None or args[0] < cur_min else ()
            return (MULTISET, SIZE) + extra
        if method == "remove_min":
            return (MIN, MULTISET, SIZE)
        return ()

    return CASpec(name="pqueue-minmultiset", locations=3, reads=reads, writes=writes,
                  observe=lambda s: s[0] if s else None)

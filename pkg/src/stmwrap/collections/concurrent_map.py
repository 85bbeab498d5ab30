"""Thread-safe hash map with striped locks."""
from __future__ import annotations

import threading
from typing import Any, Hashable, Iterator


class ConcurrentHashMap:
    """A dict split over ``stripes`` independently locked segments.

    ``None`` is not a valid value; lookups return ``None`` for absent keys.
    """

    def __init__(self, stripes: int = 16) -> None:
        if stripes <= 0 or stripes & (stripes - 1):
            raise ValueError("stripes must be a positive power of 2")
        self._mask = stripes - 1
        self._segments: list[dict] = [{} for _ in range(stripes)]
        self._locks = [threading.Lock() for _ in range(stripes)]

    def get(self, key: Hashable) -> Any:
        i = hash(key) & self._mask
        with self._locks[i]:
            return self._segments[i].get(key)

    def contains(self, key: Hashable) -> bool:
        return self.get(key) is not None

    def put(self, key: Hashable, value: Any) -> Any:
        if value is None:
            raise ValueError("None is reserved for absent values")
        i = hash(key) & self._mask
        with self._locks[i]:
            seg = self._segments[i]
            old = seg.get(key)
            seg[key] = value
            return old

    def remove(self, key: Hashable) -> Any:
        i = hash(key) & self._mask
        with self._locks[i]:
            return self._segments[i].pop(key, None)

    def __len__(self) -> int:
        total = 0
        for lock, seg in zip(self._locks, self._segments):
            with lock:
                total += len(seg)
        return total

    def items(self) -> list[tuple[Hashable, Any]]:
        out = []
        for lock, seg in zip(self._locks, self._segments):
            with lock:
                out.extend(seg.items())
        return out

    def to_dict(self) -> dict:
        return dict(self.items())

    def __iter__(self) -> Iterator[Hashable]:
        return iter([k for k, _ in self.items()])

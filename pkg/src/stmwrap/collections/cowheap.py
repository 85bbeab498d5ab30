"""Array-backed binary min-heap with copy-on-write snapshots."""
from __future__ import annotations

import heapq
import threading
from typing import Any, Iterable


class CowHeap:
    """Thread-safe min-heap whose ``snapshot()`` shares storage until a write."""

    def __init__(self, items: Iterable[Any] = ()) -> None:
        self._data = list(items)
        heapq.heapify(self._data)
        self._shared = False
        self._lock = threading.Lock()
        self.snapshots_taken = 0
        self._version = 0

    @classmethod
    def _sharing(cls, data: list) -> CowHeap:
        h = cls.__new__(cls)
        h._data = data
        h._shared = True
        h._lock = threading.Lock()
        h.snapshots_taken = 0
        h._version = 0
        return h

    def state_token(self) -> int:
        return self._version

    def snapshot(self) -> CowHeap:
        with self._lock:
            self.snapshots_taken += 1
            self._shared = True
            return CowHeap._sharing(self._data)

    def _own(self) -> list:
        self._version += 1
        if self._shared:
            self._data = list(self._data)
            self._shared = False
        return self._data

    def push(self, value: Any) -> None:
        with self._lock:
            heapq.heappush(self._own(), value)

    def pop_min(self) -> Any:
        """Remove and return the smallest element, or None when empty."""
        with self._lock:
            if not self._data:
                return None
            return heapq.heappop(self._own())

    def peek(self) -> Any:
        with self._lock:
            return self._data[0] if self._data else None

    def __contains__(self, value: Any) -> bool:
        with self._lock:
            return value in self._data

    def __len__(self) -> int:
        return len(self._data)

    def sorted_items(self) -> list:
        with self._lock:
            return sorted(self._data)

    def is_heap(self) -> bool:
        with self._lock:
            d = self._data
            return all(d[(i - 1) // 2] <= d[i] for i in range(1, len(d)))

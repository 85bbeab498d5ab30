"""Persistent hash array mapped trie and a snapshot-capable map on top.

:class:`TrieMap` keeps an immutable root behind a lock; every update
builds a new root that shares untouched subtrees, so ``snapshot()`` is
a constant-time reference copy.
"""
from __future__ import annotations

import threading
from typing import Any, Hashable, Iterator

_BITS = 5
_WIDTH = 1 << _BITS
_MASK = _WIDTH - 1
_HASH_BITS = 64
_MAX_SHIFT = _HASH_BITS


def _hash(key: Hashable) -> int:
    return hash(key) & ((1 << _HASH_BITS) - 1)


class _Leaf:
    __slots__ = ("h", "key", "value")

    def __init__(self, h: int, key: Hashable, value: Any) -> None:
        self.h, self.key, self.value = h, key, value


class _Collision:
    __slots__ = ("h", "pairs")

    def __init__(self, h: int, pairs: tuple) -> None:
        self.h, self.pairs = h, pairs


class _Node:
    __slots__ = ("bitmap", "children")

    def __init__(self, bitmap: int, children: tuple) -> None:
        self.bitmap, self.children = bitmap, children


EMPTY = _Node(0, ())


def _index(bitmap: int, bit: int) -> int:
    return bin(bitmap & (bit - 1)).count("1")


def _lookup(node: _Node, h: int, key: Hashable, default: Any) -> Any:
    shift = 0
    while True:
        bit = 1 << ((h >> shift) & _MASK)
        if not node.bitmap & bit:
            return default
        child = node.children[_index(node.bitmap, bit)]
        if isinstance(child, _Node):
            node = child
            shift += _BITS
        elif isinstance(child, _Leaf):
            return child.value if child.h == h and child.key == key else default
        else:
            if child.h != h:
                return default
            for k, v in child.pairs:
                if k == key:
                    return v
            return default


def _merge(a: Any, b: _Leaf, shift: int) -> Any:
    """Combine two entries with distinct keys into a subtree at ``shift``."""
    if shift >= _MAX_SHIFT or a.h == b.h:
        pairs = ((a.key, a.value),) if isinstance(a, _Leaf) else a.pairs
        return _Collision(b.h, pairs + ((b.key, b.value),))
    ia = (a.h >> shift) & _MASK
    ib = (b.h >> shift) & _MASK
    if ia == ib:
        return _Node(1 << ia, (_merge(a, b, shift + _BITS),))
    if ia < ib:
        return _Node((1 << ia) | (1 << ib), (a, b))
    return _Node((1 << ia) | (1 << ib), (b, a))


def _assoc(node: _Node, shift: int, leaf: _Leaf) -> tuple[_Node, bool]:
    """Return (new node, added) for inserting ``leaf``."""
    bit = 1 << ((leaf.h >> shift) & _MASK)
    idx = _index(node.bitmap, bit)
    if not node.bitmap & bit:
        children = node.children[:idx] + (leaf,) + node.children[idx:]
        return _Node(node.bitmap | bit, children), True
    child = node.children[idx]
    if isinstance(child, _Node):
        new, added = _assoc(child, shift + _BITS, leaf)
    elif isinstance(child, _Leaf):
        if child.h == leaf.h and child.key == leaf.key:
            if child.value is leaf.value:
                return node, False
            new, added = leaf, False
        else:
            new, added = _merge(child, leaf, shift + _BITS), True
    else:
        if child.h == leaf.h:
            pairs = [(k, v) for k, v in child.pairs if k != leaf.key]
            added = len(pairs) == len(child.pairs)
            new = _Collision(child.h, tuple(pairs) + ((leaf.key, leaf.value),))
        else:
            new, added = _merge(child, leaf, shift + _BITS), True
    children = node.children[:idx] + (new,) + node.children[idx + 1:]
    return _Node(node.bitmap, children), added


def _dissoc(node: _Node, shift: int, h: int, key: Hashable) -> Any:
    """Return the node without ``key``; the same object if absent, None if emptied."""
    bit = 1 << ((h >> shift) & _MASK)
    if not node.bitmap & bit:
        return node
    idx = _index(node.bitmap, bit)
    child = node.children[idx]
    if isinstance(child, _Node):
        new = _dissoc(child, shift + _BITS, h, key)
        if new is child:
            return node
        if new is not None and len(new.children) == 1 and not isinstance(new.children[0], _Node):
            new = new.children[0]
    elif isinstance(child, _Leaf):
        if child.h != h or child.key != key:
            return node
        new = None
    else:
        if child.h != h:
            return node
        pairs = tuple((k, v) for k, v in child.pairs if k != key)
        if len(pairs) == len(child.pairs):
            return node
        new = _Leaf(h, *pairs[0]) if len(pairs) == 1 else _Collision(h, pairs)
    if new is None:
        if node.bitmap == bit:
            return None
        children = node.children[:idx] + node.children[idx + 1:]
        return _Node(node.bitmap & ~bit, children)
    children = node.children[:idx] + (new,) + node.children[idx + 1:]
    return _Node(node.bitmap, children)


def _walk(node: Any) -> Iterator[tuple[Hashable, Any]]:
    if isinstance(node, _Node):
        for c in node.children:
            yield from _walk(c)
    elif isinstance(node, _Leaf):
        yield node.key, node.value
    else:
        yield from node.pairs


_MISSING = object()


class PersistentMap:
    """Immutable map value. Updates return new maps sharing structure."""

    __slots__ = ("_root", "_size")

    def __init__(self, root: _Node = EMPTY, size: int = 0) -> None:
        self._root = root
        self._size = size

    def get(self, key: Hashable, default: Any = None) -> Any:
        return _lookup(self._root, _hash(key), key, default)

    def __contains__(self, key: Hashable) -> bool:
        return _lookup(self._root, _hash(key), key, _MISSING) is not _MISSING

    def set(self, key: Hashable, value: Any) -> PersistentMap:
        root, added = _assoc(self._root, 0, _Leaf(_hash(key), key, value))
        if root is self._root:
            return self
        return PersistentMap(root, self._size + added)

    def delete(self, key: Hashable) -> PersistentMap:
        root = _dissoc(self._root, 0, _hash(key), key)
        if root is self._root:
            return self
        return PersistentMap(EMPTY if root is None else root, self._size - 1)

    def __len__(self) -> int:
        return self._size

    def items(self) -> list[tuple[Hashable, Any]]:
        return list(_walk(self._root))

    def __iter__(self) -> Iterator[Hashable]:
        return (k for k, _ in _walk(self._root))


class TrieMap:
    """Thread-safe mutable map with constant-time snapshots.

    ``None`` is not a valid value; lookups return ``None`` for absent keys.
    """

    def __init__(self, content: PersistentMap | None = None) -> None:
        self._map = content if content is not None else PersistentMap()
        self._lock = threading.Lock()
        self.snapshots_taken = 0

    def state_token(self) -> PersistentMap:
        return self._map

    def snapshot(self) -> TrieMap:
        # the root is immutable, so a reference copy is a consistent snapshot
        self.snapshots_taken += 1
        return TrieMap(self._map)

    def get(self, key: Hashable) -> Any:
        return self._map.get(key)

    def contains(self, key: Hashable) -> bool:
        return self._map.get(key) is not None

    def put(self, key: Hashable, value: Any) -> Any:
        if value is None:
            raise ValueError("None is reserved for absent values")
        with self._lock:
            old = self._map.get(key)
            self._map = self._map.set(key, value)
            return old

    def remove(self, key: Hashable) -> Any:
        with self._lock:
            old = self._map.get(key)
            if old is not None:
                self._map = self._map.delete(key)
            return old

    def __len__(self) -> int:
        return len(self._map)

    def items(self) -> list[tuple[Hashable, Any]]:
        return self._map.items()

    def to_dict(self) -> dict:
        return dict(self._map.items())

from .concurrent_map import ConcurrentHashMap
from .counter import AtomicCounter, BoundedCounter
from .cowheap import CowHeap
from .hamt import PersistentMap, TrieMap
from .maps import EagerMap, LazyMemoMap, LazySnapshotMap, TransactionalMap
from .naive import NaiveStmMap
from .pqueue import (EagerPriorityQueue, LazyPriorityQueue, PQueueState,
                     TombstoneHeap, insert_intents, pqueue_matrix)

__all__ = [
    "AtomicCounter",
    "BoundedCounter",
    "ConcurrentHashMap",
    "CowHeap",
    "EagerMap",
    "EagerPriorityQueue",
    "LazyMemoMap",
    "LazyPriorityQueue",
    "LazySnapshotMap",
    "NaiveStmMap",
    "PQueueState",
    "PersistentMap",
    "TombstoneHeap",
    "TransactionalMap",
    "TrieMap",
    "insert_intents",
    "pqueue_matrix",
]

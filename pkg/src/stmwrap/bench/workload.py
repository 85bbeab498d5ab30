"""Deterministic per-thread operation streams for the map benchmark."""
from __future__ import annotations

import bisect
import hashlib
import itertools
import random
from dataclasses import dataclass, field
from typing import NamedTuple


class Op(NamedTuple):
    method: str  # "get", "put" or "remove"
    key: int
    value: int | None = None


def split_seed(seed: int, stream: int) -> int:
    """Independent 64-bit seed for ``stream``, stable regardless of how many streams exist."""
    digest = hashlib.blake2b(f"{seed}:{stream}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class ZipfKeys:
    """Keys in ``[lo, hi)`` with probability proportional to ``1 / rank**s``."""

    def __init__(self, lo: int, hi: int, s: float) -> None:
        self.lo = lo
        weights = [1.0 / (r ** s) for r in range(1, hi - lo + 1)]
        self.cdf = list(itertools.accumulate(weights))

    def sample(self, rng: random.Random) -> int:
        return self.lo + bisect.bisect_left(self.cdf, rng.random() * self.cdf[-1])


@dataclass
class Workload:
    threads: int
    ops_per_txn: int
    write_fraction: float
    total_ops: int = 1_000_000
    key_range: int = 1024
    seed: int = 0
    zipf: float | None = None
    disjoint: bool = False

    def __post_init__(self) -> None:
        if self.threads < 1 or self.ops_per_txn < 1:
            raise ValueError("threads and ops_per_txn must be at least 1")
        if not 0.0 <= self.write_fraction <= 1.0:
            raise ValueError("write_fraction must lie in [0, 1]")
        if self.disjoint and self.key_range < self.threads:
            raise ValueError("disjoint partitions need key_range >= threads")

    @property
    def effective_ops(self) -> int:
        """``total_ops`` rounded down to a multiple of threads * ops_per_txn."""
        chunk = self.threads * self.ops_per_txn
        return (self.total_ops // chunk) * chunk

    @property
    def txns_per_thread(self) -> int:
        return self.effective_ops // (self.threads * self.ops_per_txn)

    def key_bounds(self, thread: int) -> tuple[int, int]:
        if not self.disjoint:
            return 0, self.key_range
        width = self.key_range // self.threads
        return thread * width, (thread + 1) * width

    def thread_txns(self, thread: int) -> list[list[Op]]:
        """The transactions thread ``thread`` runs, identical for a given seed."""
        rng = random.Random(split_seed(self.seed, thread))
        lo, hi = self.key_bounds(thread)
        zipf = ZipfKeys(lo, hi, self.zipf) if self.zipf else None
        next_put = True
        txns = []
        for _ in range(self.txns_per_thread):
            txn = []
            for _ in range(self.ops_per_txn):
                key = zipf.sample(rng) if zipf else rng.randrange(lo, hi)
                if rng.random() < self.write_fraction:
                    if next_put:
                        txn.append(Op("put", key, rng.randrange(1, 1 << 31)))
                    else:
                        txn.append(Op("remove", key))
                    next_put = not next_put
                else:
                    txn.append(Op("get", key))
            txns.append(txn)
        return txns

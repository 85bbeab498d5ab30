"""Conflict abstractions and abstract locks.

An abstract lock names a piece of a data structure's abstract state (a
map key, "the minimum of the queue", ...) together with an access mode.
A :class:`LockAllocatorPolicy` turns these intents into real
synchronization: blocking mode-locks held until the transaction ends
(pessimistic), or reads and writes of STM cells striped over the key
space (optimistic).
"""
from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, NamedTuple, Sequence, TypeVar

from .stm import Cell, Phase, Status, Stm, TransactionAbort, TxnContext, fresh_token
from .update_strategies import UpdateStrategy, lazy_opacity_surround

Z = TypeVar("Z")

__all__ = [
    "AbstractLock",
    "CASpec",
    "CompatibilityMatrix",
    "DEFAULT_MATRIX",
    "InvalidConfiguration",
    "LockIntent",
    "LockAllocatorPolicy",
    "Mode",
    "MULTISET_MATRIX",
    "OptimisticPolicy",
    "PessimisticPolicy",
    "PolicyKind",
    "Read",
    "Write",
    "ca_touch",
    "check_configuration",
    "counter_ca",
    "default_stripe",
    "normalize_intents",
]


class Mode(enum.IntEnum):
    READ = 0
    WRITE = 1


class PolicyKind(enum.Enum):
    PESSIMISTIC = "pessimistic"
    OPTIMISTIC = "optimistic"


class LockIntent(NamedTuple):
    key: Hashable
    mode: Mode

    @property
    def write(self) -> bool:
        return self.mode is Mode.WRITE


def Read(key: Hashable) -> LockIntent:  # noqa: N802 - mirrors the intent vocabulary
    return LockIntent(key, Mode.READ)


def Write(key: Hashable) -> LockIntent:  # noqa: N802
    return LockIntent(key, Mode.WRITE)


def normalize_intents(intents: Sequence[LockIntent | Hashable]) -> list[LockIntent]:
    """Deduplicate intents per key, keeping the strongest mode, in key order.

    Bare keys are read intents.
    """
    if len(intents) == 1 and isinstance(intents[0], LockIntent):
        return list(intents)
    strongest: dict[Hashable, Mode] = {}
    for it in intents:
        if not isinstance(it, LockIntent):
            it = LockIntent(it, Mode.READ)
        cur = strongest.get(it.key)
        if cur is None or it.mode > cur:
            strongest[it.key] = it.mode
    keys = list(strongest)
    try:
        keys.sort()
    except TypeError:
        keys.sort(key=repr)
    return [LockIntent(k, strongest[k]) for k in keys]


@dataclass(frozen=True)
class CompatibilityMatrix:
    """Which pairs of modes may be held at once by different transactions."""

    compatible: frozenset[tuple[Mode, Mode]]
    name: str = ""

    def __post_init__(self) -> None:
        for a, b in self.compatible:
            if (b, a) not in self.compatible:
                raise ValueError("compatibility matrix must be symmetric")

    def __call__(self, a: Mode, b: Mode) -> bool:
        return (a, b) in self.compatible


DEFAULT_MATRIX = CompatibilityMatrix(frozenset({(Mode.READ, Mode.READ)}), "rw")
MULTISET_MATRIX = CompatibilityMatrix(
    frozenset({(Mode.READ, Mode.READ), (Mode.WRITE, Mode.WRITE)}), "multiset")


class InvalidConfiguration(ValueError):
    pass


def check_configuration(strategy: UpdateStrategy, kind: PolicyKind, stm: Stm,
                        allow_unsafe: bool = False) -> None:
    """Reject strategy/policy/STM combinations that are not opaque.

    Eager updates under an optimistic policy expose base-object mutations
    that only an STM detecting read/write and write/write conflicts at
    encounter time can keep isolated.
    """
    from .stm import StmMode

    if (strategy is UpdateStrategy.EAGER and kind is PolicyKind.OPTIMISTIC
            and stm.mode is not StmMode.FULLY_EAGER and not allow_unsafe):
        raise InvalidConfiguration(
            f"eager/optimistic requires a FULLY_EAGER STM, got {stm.mode.value}")


_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def default_stripe(key: Hashable, stripes: int) -> int:
    """``k mod M`` for integer keys, a mixed hash otherwise."""
    if isinstance(key, int):
        return key % stripes
    return _mix64(hash(key)) % stripes


class LockAllocatorPolicy:
    kind: PolicyKind

    def acquire(self, ctx: TxnContext, intent: LockIntent) -> None:
        raise NotImplementedError

    def conflicts(self, a: LockIntent, b: LockIntent) -> bool:
        """Whether two transactions holding ``a`` and ``b`` would conflict."""
        raise NotImplementedError


class OptimisticPolicy(LockAllocatorPolicy):
    """Intents become reads and writes of STM cells ``mem[stripe(key)]``."""

    kind = PolicyKind.OPTIMISTIC

    def __init__(self, stm: Stm, stripes: int = 1024,
                 stripe: Callable[[Hashable, int], int] = default_stripe) -> None:
        if stripes < 1:
            raise ValueError("need at least one stripe")
        self.stm = stm
        self.stripes = stripes
        self.stripe = stripe
        self.mem: list[Cell] = [stm.cell(0, tag="ca") for _ in range(stripes)]

    def cell_for(self, key: Hashable) -> Cell:
        if type(key) is int and self.stripe is default_stripe:
            return self.mem[key % self.stripes]
        return self.mem[self.stripe(key, self.stripes)]

    def acquire(self, ctx: TxnContext, intent: LockIntent) -> None:
        self.optimistic_touch(ctx, intent.key, intent.mode)

    def optimistic_touch(self, ctx: TxnContext, key: Hashable, mode: Mode) -> None:
        cell = self.cell_for(key)
        if mode is Mode.WRITE:
            ctx.write(cell, fresh_token())
        else:
            ctx.read(cell)

    def conflicts(self, a: LockIntent, b: LockIntent) -> bool:
        same = self.stripe(a.key, self.stripes) == self.stripe(b.key, self.stripes)
        return same and (a.write or b.write)


class ModeLock:
    """A lock whose holders may share it when their modes are compatible."""

    def __init__(self, matrix: CompatibilityMatrix) -> None:
        self.matrix = matrix
        self._cond = threading.Condition()
        self._holders: dict[TxnContext, set[Mode]] = {}

    def _grantable(self, owner: TxnContext, mode: Mode) -> bool:
        return all(self.matrix(mode, m)
                   for other, modes in self._holders.items() if other is not owner
                   for m in modes)

    def acquire(self, owner: TxnContext, mode: Mode, timeout: float) -> bool:
        with self._cond:
            held = self._holders.get(owner)
            if held is not None and mode in held:
                return True
            if not self._cond.wait_for(lambda: self._grantable(owner, mode), timeout):
                return False
            self._holders.setdefault(owner, set()).add(mode)
            return True

    def release(self, owner: TxnContext) -> None:
        with self._cond:
            if self._holders.pop(owner, None) is not None:
                self._cond.notify_all()

    def held_by(self, owner: TxnContext) -> frozenset[Mode]:
        with self._cond:
            return frozenset(self._holders.get(owner, ()))


class PessimisticPolicy(LockAllocatorPolicy):
    """Per-key mode-locks, held until commit or rollback (two-phase).

    A timed-out acquisition aborts the transaction, which is how
    deadlocks between abstract locks are broken.
    """

    kind = PolicyKind.PESSIMISTIC

    def __init__(self, timeout: float = 0.01,
                 matrix: CompatibilityMatrix | Callable[[Hashable], CompatibilityMatrix] = DEFAULT_MATRIX) -> None:
        self.timeout = timeout
        self._matrix = matrix
        self._table: dict[Hashable, ModeLock] = {}
        self._table_lock = threading.Lock()

    def matrix_for(self, key: Hashable) -> CompatibilityMatrix:
        m = self._matrix
        return m if isinstance(m, CompatibilityMatrix) else m(key)

    def lock_for(self, key: Hashable) -> ModeLock:
        lock = self._table.get(key)
        if lock is None:
            with self._table_lock:
                lock = self._table.get(key)
                if lock is None:
                    lock = self._table[key] = ModeLock(self.matrix_for(key))
        return lock

    def acquire(self, ctx: TxnContext, intent: LockIntent) -> None:
        self.pessimistic_acquire(ctx, intent.key, intent.mode)

    def pessimistic_acquire(self, ctx: TxnContext, key: Hashable, mode: Mode) -> None:
        held: set[ModeLock] = ctx.local(("pessimistic-held", id(self)), set)
        lock = self.lock_for(key)
        if not lock.acquire(ctx, mode, self.timeout):
            raise TransactionAbort("ca", "abstract lock timeout")
        if lock not in held:
            held.add(lock)
            release = lambda: lock.release(ctx)  # noqa: E731
            ctx.on(Phase.AFTER_COMMIT, release)
            ctx.on(Phase.AFTER_ROLLBACK, release)

    def held(self, ctx: TxnContext) -> dict[Hashable, frozenset[Mode]]:
        out = {}
        with self._table_lock:
            items = list(self._table.items())
        for key, lock in items:
            modes = lock.held_by(ctx)
            if modes:
                out[key] = modes
        return out

    def conflicts(self, a: LockIntent, b: LockIntent) -> bool:
        return a.key == b.key and not self.matrix_for(a.key)(a.mode, b.mode)


class AbstractLock:
    """Wraps base-object operations with their abstract-lock intents."""

    def __init__(self, policy: LockAllocatorPolicy, strategy: UpdateStrategy) -> None:
        self.policy = policy
        self.strategy = strategy
        self._surround = (strategy is UpdateStrategy.LAZY
                          and policy.kind is PolicyKind.OPTIMISTIC)

    def apply(self, ctx: TxnContext, intents: Sequence[LockIntent | Hashable],
              body: Callable[[], Z], inverse: Callable[[Z], Any] | None = None) -> Z:
        if ctx.status is not Status.ACTIVE:
            raise RuntimeError("abstract locks cannot be taken outside an active transaction")
        if len(intents) == 1 and type(intents[0]) is LockIntent:
            if self._surround:
                return lazy_opacity_surround(ctx, self.policy, intents, body)
            todo = intents
        else:
            todo = normalize_intents(intents)
        if self.strategy is UpdateStrategy.EAGER and inverse is None and any(i.write for i in todo):
            raise ValueError("eager updates need an inverse for every mutating operation")
        if self._surround:
            return lazy_opacity_surround(ctx, self.policy, todo, body)
        for intent in todo:
            self.policy.acquire(ctx, intent)
        result = body()
        if inverse is not None and self.strategy is UpdateStrategy.EAGER:
            ctx.on(Phase.AFTER_ROLLBACK, lambda: inverse(result))
        return result

    __call__ = apply


@dataclass(frozen=True)
class CASpec:
    """A conflict abstraction over ``locations`` STM cells.

    ``reads(method, args, obs)`` and ``writes(method, args, obs)`` return
    the indices a method invocation reads and writes, given an
    observation of the abstract state. ``observe`` maps a model state to
    that observation. ``smt`` optionally carries SMT-LIB fragments for
    integer models (see :mod:`stmwrap.verifier.smtlib`).
    """

    name: str
    locations: int
    reads: Callable[[str, tuple, Any], Iterable[int]]
    writes: Callable[[str, tuple, Any], Iterable[int]]
    observe: Callable[[Any], Any] = lambda state: state
    smt: dict[str, Any] = field(default_factory=dict, compare=False)

    def f_rd(self, method: str, args: tuple, obs: Any, i: int) -> bool:
        return i in set(self.reads(method, args, obs))

    def f_wr(self, method: str, args: tuple, obs: Any, i: int) -> bool:
        return i in set(self.writes(method, args, obs))

    def touches(self, method: str, args: tuple, obs: Any) -> tuple[frozenset[int], frozenset[int]]:
        return frozenset(self.reads(method, args, obs)), frozenset(self.writes(method, args, obs))


def ca_touch(ctx: TxnContext, spec: CASpec, mem: Sequence[Cell], method: str,
             args: tuple, observation: Any) -> None:
    """Perform the STM accesses ``spec`` prescribes for one invocation."""
    rd, wr = spec.touches(method, args, observation)
    for i in range(spec.locations):
        if i in wr:
            ctx.write(mem[i], fresh_token())
        elif i in rd:
            ctx.read(mem[i])


def counter_ca(threshold: int = 2) -> CASpec:
    """Single-cell abstraction for a non-negative counter.

    ``incr`` reads the cell and ``decr`` writes it while the counter is
    below ``threshold``.
    """
    def reads(method: str, args: tuple, count: int) -> tuple[int, ...]:
        return (0,) if method == "incr" and count < threshold else ()

    def writes(method: str, args: tuple, count: int) -> tuple[int, ...]:
        return (0,) if method == "decr" and count < threshold else ()

    return CASpec(
        name=f"counter-t{threshold}",
        locations=1,
        reads=reads,
        writes=writes,
        smt={
            "incr": {"rd": [f"(< c {threshold})"], "wr": ["false"]},
            "decr": {"rd": ["false"], "wr": [f"(< c {threshold})"]},
        },
    )

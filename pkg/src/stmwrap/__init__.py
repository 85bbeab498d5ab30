"""Transactional objects from thread-safe data structures on a small STM."""
from .abstract_lock import (AbstractLock, CASpec, CompatibilityMatrix, InvalidConfiguration,
                            LockIntent, Mode, OptimisticPolicy, PessimisticPolicy, Read,
                            Write, ca_touch, counter_ca)
from .stm import (Phase, RetriesExhausted, Stm, StmMode, TransactionAbort, TxnContext,
                  fresh_token)
from .update_strategies import UpdateStrategy

__all__ = [
    "AbstractLock",
    "CASpec",
    "CompatibilityMatrix",
    "InvalidConfiguration",
    "LockIntent",
    "Mode",
    "OptimisticPolicy",
    "PessimisticPolicy",
    "Phase",
    "Read",
    "RetriesExhausted",
    "Stm",
    "StmMode",
    "TransactionAbort",
    "TxnContext",
    "UpdateStrategy",
    "Write",
    "ca_touch",
    "counter_ca",
    "fresh_token",
]

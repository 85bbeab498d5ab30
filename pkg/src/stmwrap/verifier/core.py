"""Bounded checking of conflict abstractions.

A conflict abstraction is correct when every pair of invocations that
fails to commute in some state also makes conflicting accesses to some
abstraction cell in that state. Over finite domains this is decided by
enumerating reachable states and invocation pairs.
"""
from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Sequence

from ..abstract_lock import CASpec

Invocation = tuple[str, tuple]


class DomainTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class Method:
    name: str
    domain: tuple[tuple, ...] = ((),)


@dataclass
class SequentialModel:
    """Executable model of an abstract data type over finite domains.

    ``step(state, method, args)`` returns ``(next_state, return_value)``
    and must be deterministic. ``within`` bounds the states explored.
    """

    name: str
    initial_states: tuple[Hashable, ...]
    methods: tuple[Method, ...]
    step: Callable[[Any, str, tuple], tuple[Any, Any]]
    within: Callable[[Any], bool] = lambda state: True
    smt: dict[str, Any] | None = None

    def invocations(self) -> list[Invocation]:
        return [(m.name, args) for m in self.methods for args in m.domain]

    def apply(self, state: Any, inv: Invocation) -> tuple[Any, Any]:
        return self.step(state, inv[0], inv[1])

    def reachable(self, max_states: int | None = None) -> list[Any]:
        """States reachable from the initial ones without leaving ``within``, in BFS order."""
        seen = {}
        queue = deque(s for s in self.initial_states if self.within(s))
        for s in queue:
            seen[s] = None
        invs = self.invocations()
        while queue:
            s = queue.popleft()
            for inv in invs:
                nxt, _ = self.apply(s, inv)
                if nxt not in seen and self.within(nxt):
                    if max_states is not None and len(seen) >= max_states:
                        raise DomainTooLarge(f"more than {max_states} reachable states")
                    seen[nxt] = None
                    queue.append(nxt)
        return list(seen)


def commutes(model: SequentialModel, state: Any, m: Invocation, n: Invocation) -> bool:
    """Both orders give the same final state and the same per-invocation returns."""
    return _both_orders(model, state, m, n)[0]


def _both_orders(model: SequentialModel, state: Any, m: Invocation, n: Invocation):
    s1, rm1 = model.apply(state, m)
    s12, rn1 = model.apply(s1, n)
    s2, rn2 = model.apply(state, n)
    s21, rm2 = model.apply(s2, m)
    ok = s12 == s21 and rm1 == rm2 and rn1 == rn2
    return ok, (s12, rm1, rn1), (s21, rm2, rn2), s1


def _clash(spec: CASpec, m: Invocation, obs_m: Any, n: Invocation, obs_n: Any):
    rd_m, wr_m = spec.touches(m[0], m[1], obs_m)
    rd_n, wr_n = spec.touches(n[0], n[1], obs_n)
    hit = (rd_m & wr_n) | (wr_m & rd_n) | (wr_m & wr_n)
    return bool(hit), (rd_m, wr_m), (rd_n, wr_n)


def ca_conflicts(spec: CASpec, state: Any, m: Invocation, n: Invocation,
                 state_n: Any = None) -> bool:
    """Some cell is read by one and written by the other, or written by both.

    ``n``'s accesses are evaluated at ``state_n`` when given.
    """
    obs_n = spec.observe(state if state_n is None else state_n)
    return _clash(spec, m, spec.observe(state), n, obs_n)[0]


class Verdict(enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"


@dataclass(frozen=True)
class Counterexample:
    state: Any
    m: Invocation
    n: Invocation
    order_mn: tuple
    order_nm: tuple
    ca_m: tuple[frozenset, frozenset]
    ca_n: tuple[frozenset, frozenset]
    variant: str = "same-state"

    def to_record(self) -> dict:
        def fmt_inv(inv):
            return f"{inv[0]}({', '.join(map(repr, inv[1]))})"

        def fmt_ca(ca):
            return {"reads": sorted(ca[0]), "writes": sorted(ca[1])}

        return {
            "variant": self.variant,
            "state": repr(self.state),
            "m": fmt_inv(self.m),
            "n": fmt_inv(self.n),
            "m_then_n": {"state": repr(self.order_mn[0]), "m": repr(self.order_mn[1]),
                         "n": repr(self.order_mn[2])},
            "n_then_m": {"state": repr(self.order_nm[0]), "m": repr(self.order_nm[1]),
                         "n": repr(self.order_nm[2])},
            "ca_m": fmt_ca(self.ca_m),
            "ca_n": fmt_ca(self.ca_n),
        }


@dataclass
class VerifyResult:
    verdict: Verdict
    counterexamples: list[Counterexample] = field(default_factory=list)
    states: int = 0
    pairs_checked: int = 0
    interleaved: bool = False

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def to_lines(self) -> str:
        """One JSON record per counterexample, newline-delimited."""
        return "".join(json.dumps(c.to_record(), sort_keys=True) + "\n"
                       for c in self.counterexamples)


def verify(model: SequentialModel, spec: CASpec, *, max_states: int | None = None,
           interleaved: bool = False, budget: int = 10**7,
           max_counterexamples: int = 16) -> VerifyResult:
    """Exhaustively check ``spec`` against ``model`` on its reachable states.

    With ``interleaved``, a non-commuting pair must also clash when the
    second invocation's accesses are evaluated in the state left by the
    first.
    """
    invs = model.invocations()
    limit = budget // max(1, len(invs) ** 2)
    if max_states is not None:
        limit = min(limit, max_states)
    if limit < 1:
        raise DomainTooLarge(f"{len(invs)} invocations already exceed budget {budget}")
    try:
        states = model.reachable(limit)
    except DomainTooLarge as exc:
        raise DomainTooLarge(f"{exc}: more than {budget} (state, m, n) triples") from None
    found: list[Counterexample] = []
    checked = 0
    for state in states:
        obs = spec.observe(state)
        for m in invs:
            for n in invs:
                checked += 1
                ok, mn, nm, after_m = _both_orders(model, state, m, n)
                if ok:
                    continue
                hit, ca_m, ca_n = _clash(spec, m, obs, n, obs)
                if not hit:
                    found.append(Counterexample(state, m, n, mn, nm, ca_m, ca_n))
                elif interleaved:
                    hit2, ca_m2, ca_n2 = _clash(spec, m, obs, n, spec.observe(after_m))
                    if not hit2:
                        found.append(Counterexample(state, m, n, mn, nm, ca_m2, ca_n2,
                                                    "interleaved"))
                if len(found) >= max_counterexamples:
                    return VerifyResult(Verdict.FAIL, found, len(states), checked, interleaved)
    verdict = Verdict.FAIL if found else Verdict.PASS
    return VerifyResult(verdict, found, len(states), checked, interleaved)

"""Conflict abstractions loaded from JSON files.

A spec file looks like::

    {
      "name": "counter-t2",
      "locations": 1,
      "observe": "state",
      "methods": {
        "incr": {"rd": ["(< c 2)"], "wr": ["false"]},
        "decr": {"rd": ["false"], "wr": ["(< c 2)"]}
      }
    }

Each method lists one boolean S-expression per location for reads and
for writes. Expressions may use ``c`` (the observation), ``a0``, ``a1``
... (the invocation arguments), integer literals, ``true``/``false`` and
the operators ``and or not = distinct < <= > >= + - * mod div ite``.
``observe`` is ``state`` (the model state itself), ``min`` (smallest
element of a sorted-tuple state, or -1 when empty) or ``size``.
Methods not listed touch nothing.
"""
from __future__ import annotations

import json
import operator
from functools import reduce
from pathlib import Path
from typing import Any, Callable

from ..abstract_lock import CASpec
from .smtlib import SmtSyntaxError, parse_sexprs

_CHAIN = {"=": operator.eq, "<": operator.lt, "<=": operator.le, ">": operator.gt,
          ">=": operator.ge}

_OBSERVERS: dict[str, Callable[[Any], Any]] = {
    "state": lambda s: s,
    "min": lambda s: s[0] if s else -1,
    "size": len,
}


class SpecFileError(ValueError):
    pass


def evaluate(expr: Any, env: dict[str, Any]) -> Any:
    if isinstance(expr, str):
        if expr == "true":
            return True
        if expr == "false":
            return False
        if expr.lstrip("-").isdigit():
            return int(expr)
        if expr not in env:
            raise SpecFileError(f"unbound variable {expr!r}")
        return env[expr]
    head, *args = expr
    if head == "ite":
        cond, then, other = args
        return evaluate(then if evaluate(cond, env) else other, env)
    vals = [evaluate(a, env) for a in args]
    if head == "and":
        return all(vals)
    if head == "or":
        return any(vals)
    if head == "not":
        return not vals[0]
    if head == "distinct":
        return len(set(vals)) == len(vals)
    if head in _CHAIN:
        op = _CHAIN[head]
        return all(op(x, y) for x, y in zip(vals, vals[1:]))
    if head == "+":
        return sum(vals)
    if head == "-":
        return -vals[0] if len(vals) == 1 else reduce(operator.sub, vals)
    if head == "*":
        return reduce(operator.mul, vals)
    if head == "mod":
        return vals[0] % vals[1]
    if head == "div":
        return vals[0] // vals[1]
    raise SpecFileError(f"unknown operator {head!r}")


def _compile(text: str) -> Any:
    try:
        parsed = parse_sexprs(text)
    except SmtSyntaxError as exc:
        raise SpecFileError(str(exc)) from exc
    if len(parsed) != 1:
        raise SpecFileError(f"expected one expression, got {text!r}")
    return parsed[0]


def spec_from_dict(doc: dict) -> CASpec:
    try:
        locations = int(doc["locations"])
        methods = doc["methods"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecFileError(f"spec needs 'locations' and 'methods': {exc}") from exc
    observe = _OBSERVERS.get(doc.get("observe", "state"))
    if observe is None:
        raise SpecFileError(f"unknown observation {doc.get('observe')!r}")
    compiled: dict[str, dict[str, list]] = {}
    for name, forms in methods.items():
        compiled[name] = {}
        for kind in ("rd", "wr"):
            exprs = forms.get(kind, ["false"] * locations)
            if len(exprs) != locations:
                raise SpecFileError(f"{name}.{kind}: need {locations} expressions")
            compiled[name][kind] = [_compile(e) for e in exprs]

    def touched(kind: str) -> Callable[[str, tuple, Any], tuple[int, ...]]:
        def fn(method: str, args: tuple, obs: Any) -> tuple[int, ...]:
            forms = compiled.get(method)
            if forms is None:
                return ()
            env = {"c": obs, **{f"a{i}": a for i, a in enumerate(args)}}
            return tuple(i for i, e in enumerate(forms[kind]) if evaluate(e, env))
        return fn

    return CASpec(name=doc.get("name", "spec-file"), locations=locations,
                  reads=touched("rd"), writes=touched("wr"), observe=observe,
                  smt={m: {"rd": f.get("rd"), "wr": f.get("wr")} for m, f in methods.items()})


def load_spec(path: str | Path) -> CASpec:
    with open(path, encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))

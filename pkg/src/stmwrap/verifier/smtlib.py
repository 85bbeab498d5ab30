"""SMT-LIB2 rendering of the conflict-abstraction check for integer models.

The script asserts, for each ordered method pair, that the first
method's abstraction accesses and execution, then the second's, raise no
conflict, while running the two methods in the other order changes the
final state or a return flag. ``unsat`` for every pair means the
abstraction is sound.
"""
from __future__ import annotations

import re
from typing import Any

from ..abstract_lock import CASpec
from .core import SequentialModel


class Unsupported(ValueError):
    pass


def _ca_params(spec: CASpec) -> str:
    return " ".join(f"(rd{i} Bool) (wr{i} Bool)" for i in range(spec.locations))


def _ca_args(prefix: str, spec: CASpec) -> str:
    return " ".join(f"{prefix}_rd{i} {prefix}_wr{i}" for i in range(spec.locations))


def emit_smtlib(model: SequentialModel, spec: CASpec, interleaved: bool = False) -> str:
    """Render the check for every ordered pair of ``model``'s methods.

    With ``interleaved`` the second method's accesses are evaluated in the
    state left by the first, as a sequential trace would; otherwise both
    are evaluated in the starting state.
    """
    smt = model.smt
    if not smt or smt.get("sort") != "Int" or not spec.smt:
        raise Unsupported(f"{model.name}: only single-integer models can be emitted")
    methods: dict[str, dict] = smt["methods"]
    for name in methods:
        if name not in spec.smt:
            raise Unsupported(f"{spec.name} gives no SMT form for {name}")
    if any(len(m.domain) != 1 or m.domain[0] != () for m in model.methods):
        raise Unsupported("methods with arguments are not supported")

    out: list[str] = [
        f"; conflict abstraction {spec.name} for model {model.name}",
        "(set-logic QF_LIA)",
    ]
    for name, m in methods.items():
        params = "(c0 Int) (c1 Int)" + (" (err Bool)" if m["err"] else "")
        out.append(f"(define-fun {name} ({params}) Bool\n  {m['body']})")
    for name in methods:
        forms = spec.smt[name]
        parts = []
        for i in range(spec.locations):
            parts.append(f"(= rd{i} {forms['rd'][i]})")
            parts.append(f"(= wr{i} {forms['wr'][i]})")
        out.append(f"(define-fun {name}_CA ((c Int) {_ca_params(spec)}) Bool\n"
                   f"  (and {' '.join(parts)}))")
    clauses = []
    for i in range(spec.locations):
        clauses += [f"(and ra{i} wb{i})", f"(and wa{i} rb{i})", f"(and wa{i} wb{i})"]
    conflict_params = " ".join(f"(ra{i} Bool) (wa{i} Bool)" for i in range(spec.locations))
    conflict_params += " " + " ".join(f"(rb{i} Bool) (wb{i} Bool)" for i in range(spec.locations))
    out.append(f"(define-fun conflict ({conflict_params}) Bool\n  (or {' '.join(clauses)}))")

    def call(name: str, a: str, b: str, err: str | None) -> str:
        return f"({name} {a} {b}{' ' + err if methods[name]['err'] else ''})"

    invariant = smt.get("invariant")
    for m in methods:
        for n in methods:
            out.append(f"; {m} then {n}")
            out.append("(push 1)")
            for v in ("c0", "c1", "c2", "c3", "c4"):
                out.append(f"(declare-const {v} Int)")
            for who in ("m", "n"):
                for i in range(spec.locations):
                    out.append(f"(declare-const {who}_rd{i} Bool)")
                    out.append(f"(declare-const {who}_wr{i} Bool)")
            errs = []
            for v, meth in (("m_err1", m), ("n_err1", n), ("n_err2", n), ("m_err2", m)):
                if methods[meth]["err"]:
                    out.append(f"(declare-const {v} Bool)")
                    errs.append(v)
            if invariant:
                out.append(f"(assert {invariant.format(s='c0')})")
            n_state = "c1" if interleaved else "c0"
            out += [
                f"(assert ({m}_CA c0 {_ca_args('m', spec)})) ; {m} tickles the STM",
                f"(assert {call(m, 'c0', 'c1', 'm_err1')}) ; {m} executes",
                f"(assert ({n}_CA {n_state} {_ca_args('n', spec)})) ; {n} tickles the STM",
                f"(assert (not (conflict {_ca_args('m', spec)} {_ca_args('n', spec)})))"
                " ; no conflict detected",
                f"(assert {call(n, 'c1', 'c2', 'n_err1')}) ; {n} executes",
                "; the other order",
                f"(assert {call(n, 'c0', 'c3', 'n_err2')})",
                f"(assert {call(m, 'c3', 'c4', 'm_err2')})",
            ]
            differs = ["(not (= c2 c4))"]
            if methods[m]["err"]:
                differs.append("(not (= m_err1 m_err2))")
            if methods[n]["err"]:
                differs.append("(not (= n_err1 n_err2))")
            out.append(f"(assert (or {' '.join(differs)}))")
            out.append("(check-sat)")
            out.append("(pop 1)")
    return "\n".join(out) + "\n"


_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s()]+")
_SYMBOL = re.compile(r"^[A-Za-z~!@$%^&*_\-+=<>.?/][A-Za-z0-9~!@$%^&*_\-+=<>.?/]*$")
_NUMERAL = re.compile(r"^(0|[1-9][0-9]*)$")

_COMMANDS = {
    "set-logic": (1, 1), "set-option": (2, 2), "set-info": (2, 2),
    "declare-const": (2, 2), "declare-fun": (3, 3), "define-fun": (4, 4),
    "assert": (1, 1), "check-sat": (0, 0), "push": (0, 1), "pop": (0, 1),
    "get-model": (0, 0), "exit": (0, 0),
}
_BUILTINS = {
    "and": None, "or": None, "not": 1, "=>": None, "=": None, "distinct": None,
    "ite": 3, "+": None, "-": None, "*": None, "<": None, "<=": None, ">": None,
    ">=": None, "div": 2, "mod": 2, "abs": 1, "xor": None,
}
_SORTS = {"Int", "Bool"}


class SmtSyntaxError(ValueError):
    pass


def parse_sexprs(text: str) -> list:
    stack: list[list] = [[]]
    for m in _TOKEN.finditer(text):
        tok = m.group(0)
        if tok.isspace() or tok.startswith(";"):
            continue
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SmtSyntaxError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            if not (_SYMBOL.match(tok) or _NUMERAL.match(tok) or tok.startswith(":")):
                raise SmtSyntaxError(f"bad token {tok!r}")
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SmtSyntaxError("unbalanced '('")
    return stack[0]


def check_syntax(text: str) -> None:
    """Validate an SMT-LIB2 script's command structure and term well-formedness.

    Raises :class:`SmtSyntaxError` on the first problem found.
    """
    funs: dict[str, int] = {}
    scopes: list[set[str]] = [set()]

    def consts() -> set[str]:
        return set().union(*scopes)

    def term(t: Any, bound: set[str]) -> None:
        if isinstance(t, str):
            if _NUMERAL.match(t) or t in ("true", "false") or t in bound or t in consts():
                return
            if t in funs and funs[t] == 0:
                return
            raise SmtSyntaxError(f"unknown symbol {t!r}")
        if not t or not isinstance(t[0], str):
            raise SmtSyntaxError(f"malformed term {t!r}")
        head, args = t[0], t[1:]
        if head in _BUILTINS:
            arity = _BUILTINS[head]
            if arity is not None and len(args) != arity:
                raise SmtSyntaxError(f"{head} takes {arity} arguments")
            if arity is None and len(args) < 1:
                raise SmtSyntaxError(f"{head} needs arguments")
        elif head in funs:
            if len(args) != funs[head]:
                raise SmtSyntaxError(f"{head} takes {funs[head]} arguments, got {len(args)}")
        else:
            raise SmtSyntaxError(f"unknown function {head!r}")
        for a in args:
            term(a, bound)

    for cmd in parse_sexprs(text):
        if not isinstance(cmd, list) or not cmd or not isinstance(cmd[0], str):
            raise SmtSyntaxError(f"top level must be commands, got {cmd!r}")
        name, args = cmd[0], cmd[1:]
        if name not in _COMMANDS:
            raise SmtSyntaxError(f"unknown command {name!r}")
        lo, hi = _COMMANDS[name]
        if not lo <= len(args) <= hi:
            raise SmtSyntaxError(f"{name}: wrong number of arguments")
        if name == "declare-const":
            if args[1] not in _SORTS:
                raise SmtSyntaxError(f"unknown sort {args[1]!r}")
            scopes[-1].add(args[0])
        elif name == "define-fun":
            fname, params, sort, body = args
            if not isinstance(params, list) or sort not in _SORTS:
                raise SmtSyntaxError(f"malformed define-fun {fname}")
            bound = set()
            for p in params:
                if not (isinstance(p, list) and len(p) == 2 and p[1] in _SORTS):
                    raise SmtSyntaxError(f"bad parameter {p!r} in {fname}")
                bound.add(p[0])
            term(body, bound)
            funs[fname] = len(params)
        elif name == "assert":
            term(args[0], set())
        elif name == "push":
            scopes.append(set())
        elif name == "pop":
            if len(scopes) == 1:
                raise SmtSyntaxError("pop without push")
            scopes.pop()

"""Bounded checking and SMT-LIB rendering of conflict abstractions."""
from .core import (Counterexample, DomainTooLarge, Method, SequentialModel, Verdict,
                   VerifyResult, ca_conflicts, commutes, verify)
from .models import (counter_ca, counter_model, map_model, pqueue_ca, pqueue_model,
                     striped_map_ca)
from .smtlib import SmtSyntaxError, Unsupported, check_syntax, emit_smtlib, parse_sexprs
from .specfile import SpecFileError, load_spec, spec_from_dict

__all__ = [
    "Counterexample",
    "DomainTooLarge",
    "Method",
    "SequentialModel",
    "SmtSyntaxError",
    "SpecFileError",
    "Unsupported",
    "Verdict",
    "VerifyResult",
    "ca_conflicts",
    "check_syntax",
    "commutes",
    "counter_ca",
    "counter_model",
    "emit_smtlib",
    "load_spec",
    "map_model",
    "parse_sexprs",
    "pqueue_ca",
    "pqueue_model",
    "spec_from_dict",
    "striped_map_ca",
    "verify",
]

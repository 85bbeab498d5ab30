import json
import random
import threading

import pytest
from conftest import run_threads
from hypothesis import given
from hypothesis import strategies as st

from stmwrap.abstract_lock import CASpec
from stmwrap.bench.stress import StressConfig, Txn, find_serial_order, run_stress
from stmwrap.collections import BoundedCounter
from stmwrap.stm import Phase, Stm, StmMode
from stmwrap.verifier import (DomainTooLarge, SmtSyntaxError, SpecFileError, Unsupported,
                              Verdict, ca_conflicts, check_syntax, commutes, counter_ca,
                              counter_model, emit_smtlib, load_spec, map_model, pqueue_ca,
                              pqueue_model, spec_from_dict, striped_map_ca, verify)


def test_commutes_examples():
    counter = counter_model()
    assert commutes(counter, 0, ("incr", ()), ("incr", ()))
    assert not commutes(counter, 1, ("decr", ()), ("decr", ()))
    assert commutes(counter, 5, ("decr", ()), ("decr", ()))
    m = map_model(keys=(11, 42), values=("v",))
    empty = m.initial_states[0]
    assert commutes(m, empty, ("get", (42,)), ("put", (11, "v")))
    assert not commutes(m, empty, ("get", (11,)), ("put", (11, "v")))


map_small = map_model(range(3), (0, 1))
invocations = st.sampled_from(map_small.invocations())
map_states = st.sampled_from(map_small.reachable())


@given(map_states, invocations, invocations)
def test_commutativity_oracle_is_symmetric(state, a, b):
    assert commutes(map_small, state, a, b) == commutes(map_small, state, b, a)


@given(map_states, invocations, invocations)
def test_ca_conflicts_is_symmetric_and_matches_definition(state, a, b):
    spec = striped_map_ca(2)
    rd_a, wr_a = spec.touches(a[0], a[1], state)
    rd_b, wr_b = spec.touches(b[0], b[1], state)
    expected = bool(rd_a & wr_b or wr_a & rd_b or wr_a & wr_b)
    assert ca_conflicts(spec, state, a, b) == expected == ca_conflicts(spec, state, b, a)


def test_counter_threshold_two_passes():
    r = verify(counter_model(8), counter_ca(2))
    assert r.verdict is Verdict.PASS and r.passed
    assert r.states == 9 and r.pairs_checked == 9 * 2 * 2
    assert verify(counter_model(8), counter_ca(2), interleaved=True).passed


def test_counter_threshold_one_fails_at_one_with_decr_pair():
    r = verify(counter_model(8), counter_ca(1))
    assert r.verdict is Verdict.FAIL
    assert len(r.counterexamples) == 1
    cex = r.counterexamples[0]
    assert (cex.state, cex.m, cex.n) == (1, ("decr", ()), ("decr", ()))
    assert cex.order_mn == (0, True, False) and cex.order_nm == (0, False, True)
    assert cex.ca_m == (frozenset(), frozenset()) == cex.ca_n
    record = json.loads(r.to_lines())
    assert record["state"] == "1" and record["m"] == record["n"] == "decr()"


def test_map_striping_passes_and_collapsed_stripes_still_pass():
    assert verify(map_model(range(4)), striped_map_ca(4)).passed
    assert verify(map_model(range(4)), striped_map_ca(1)).passed


def test_map_abstraction_that_ignores_reads_fails():
    spec = CASpec("writes-only", 4, reads=lambda m, a, o: (),
                  writes=lambda m, a, o: (a[0],) if m in ("put", "remove") else ())
    r = verify(map_model(range(4)), spec)
    assert not r.passed
    cex = r.counterexamples[0]
    assert {cex.m[0], cex.n[0]} & {"get", "contains"}
    assert len(r.counterexamples) == 16  # capped


def test_verify_is_deterministic():
    spec = CASpec("nothing", 1, reads=lambda m, a, o: (), writes=lambda m, a, o: ())
    first = verify(map_model(range(3)), spec).to_lines()
    assert first == verify(map_model(range(3)), spec).to_lines()


def test_pqueue_abstraction():
    assert verify(pqueue_model(), pqueue_ca()).passed
    assert verify(pqueue_model(), pqueue_ca(), interleaved=True).passed
    weak = pqueue_ca()
    broken = CASpec("no-min", 3, reads=lambda m, a, o: () if m == "min" else weak.reads(m, a, o),
                    writes=weak.writes, observe=weak.observe)
    r = verify(pqueue_model(), broken)
    assert not r.passed
    assert all("min" in (c.m[0], c.n[0]) for c in r.counterexamples)


def test_budget_is_enforced():
    with pytest.raises(DomainTooLarge):
        verify(map_model(range(4)), striped_map_ca(4), budget=1000)
    with pytest.raises(DomainTooLarge):
        verify(map_model(range(30)), striped_map_ca(4), budget=10**6)


def test_reachability_respects_bounds():
    assert counter_model(3).reachable() == [0, 1, 2, 3]
    assert max(len(s) for s in pqueue_model(max_size=2).reachable()) == 2


def test_spec_file_round_trip(tmp_path):
    path = tmp_path / "counter.json"
    path.write_text(json.dumps({
        "name": "file-t2", "locations": 1,
        "methods": {"incr": {"rd": ["(< c 2)"], "wr": ["false"]},
                    "decr": {"rd": ["false"], "wr": ["(< c 2)"]}}}))
    spec = load_spec(path)
    assert verify(counter_model(), spec).passed
    assert emit_smtlib(counter_model(), spec).count("(check-sat)") == 4
    striped = spec_from_dict({"locations": 2, "methods": {
        m: {"rd": ["(and (= (mod a0 2) 0) %s)" % r, "(and (= (mod a0 2) 1) %s)" % r],
            "wr": ["(and (= (mod a0 2) 0) %s)" % w, "(and (= (mod a0 2) 1) %s)" % w]}
        for m, r, w in [("get", "true", "false"), ("contains", "true", "false"),
                        ("put", "false", "true"), ("remove", "false", "true")]}})
    assert verify(map_model(range(4)), striped).passed


def test_spec_file_errors():
    with pytest.raises(SpecFileError):
        spec_from_dict({"methods": {}})
    with pytest.raises(SpecFileError):
        spec_from_dict({"locations": 2, "methods": {"incr": {"rd": ["true"]}}})
    bad = spec_from_dict({"locations": 1, "methods": {"incr": {"rd": ["(< q 2)"], "wr": ["false"]}}})
    with pytest.raises(SpecFileError):
        verify(counter_model(), bad)


def test_smtlib_emission_is_stable_and_well_formed():
    text = emit_smtlib(counter_model(), counter_ca(2))
    assert text == emit_smtlib(counter_model(), counter_ca(2))
    check_syntax(text)
    check_syntax(emit_smtlib(counter_model(), counter_ca(1), interleaved=True))
    with pytest.raises(Unsupported):
        emit_smtlib(map_model(), striped_map_ca())


@pytest.mark.parametrize("bad", [
    "(assert (and true)", "(assert (foo 1))", "(declare-const x Real)", "(frobnicate)",
    "(pop 1)", "(define-fun f ((x Int)) Bool (ite x))",
])
def test_syntax_checker_rejects_malformed_scripts(bad):
    with pytest.raises(SmtSyntaxError):
        check_syntax(bad)


def test_emitted_script_agrees_with_enumeration_under_a_solver():
    z3 = pytest.importorskip("z3")
    for threshold in (1, 2, 3):
        for interleaved in (False, True):
            ctx = z3.Context()
            out = z3.Z3_eval_smtlib2_string(
                ctx.ref(), emit_smtlib(counter_model(), counter_ca(threshold), interleaved)).split()
            sound = verify(counter_model(), counter_ca(threshold), interleaved=interleaved).passed
            assert len(out) == 4
            assert sound == all(r == "unsat" for r in out)


def test_passing_map_abstraction_gives_serializable_live_runs():
    """Same bounded domain: 4 keys, 4 stripes with identity mapping."""
    assert verify(map_model(range(4)), striped_map_ca(4)).passed
    for impl in ("lazy-memo", "eager-opt"):
        report = run_stress(StressConfig(impl=impl, key_range=4, stripes=4, txns=1500))
        assert report.ok, report.violations


def _counter_history(threshold, seed):
    stm = Stm(StmMode.FULLY_EAGER)
    counter = BoundedCounter(stm, threshold=threshold)
    history, lock = [], threading.Lock()

    def worker(idx):
        rng = random.Random(seed * 10 + idx)

        def go():
            for _ in range(200):
                plan = [rng.choice(["incr", "decr", "decr"]) for _ in range(rng.randrange(1, 4))]
                rec = {}

                def body(ctx):
                    rets = [getattr(counter, m)(ctx) for m in plan]
                    ctx.on(Phase.AFTER_COMMIT, lambda: rec.update(v=ctx.commit_version, r=rets))
                stm.atomically(body)
                with lock:
                    history.append(Txn(idx, rec["v"], [(m, ()) for m in plan], rec["r"]))
        return go

    run_threads(*[worker(i) for i in range(4)], timeout=60)
    return history, counter.peek()


def test_passing_counter_abstraction_gives_serializable_live_runs():
    model = counter_model(10**6)
    for seed in range(3):
        history, final = _counter_history(2, seed)
        order, state, _ = find_serial_order(history, model.step, 0)
        assert order is not None and state == final


def test_failing_threshold_admits_a_real_anomaly():
    """Threshold 1 lets two decrements at count 1 run unsynchronized.

    T1 decrements to 0 without touching the cell, T2 then fails its
    decrement, and T1 rolls back: T2 committed an error flag although
    the count was 1 in every serial order.
    """
    stm = Stm(StmMode.FULLY_EAGER)
    counter = BoundedCounter(stm, initial=1, threshold=1)
    first_done = threading.Event()
    second_done = threading.Event()
    results = {}

    def t1():
        def body(ctx):
            if ctx.attempt == 0:
                results["t1"] = counter.decr(ctx)
                first_done.set()
                second_done.wait(2)
                ctx.retry("forced")
        try:
            stm.atomically(body, max_attempts=1)
        except Exception:
            pass

    def t2():
        first_done.wait(2)
        results["t2"] = stm.atomically(counter.decr)
        second_done.set()

    run_threads(t1, t2)
    assert results == {"t1": True, "t2": False}
    assert counter.peek() == 1  # no serial order explains t2's failure

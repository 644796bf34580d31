from __future__ import annotations

import random

from choreo import chor_engine as ce
from choreo import harness
from choreo.core import (
    BOT,
    Constraint,
    Flow,
    Label,
    Mem,
    Port,
    RecvVal,
    Sel,
    ValCom,
    Var,
    connectors_of,
    pn,
    validate_automaton,
)
from choreo.harness import (
    bad_alternator,
    buffer1,
    correspondence_check,
    crossed_chain4,
    drop_transition,
    exhaustive_explore,
    gen_random_program,
    oracle_by_label,
    oracle_eta_reductions,
    rendezvous,
    swap_ports,
    swapped_rendezvous,
    sync,
)

from conftest import load_program


def _f(a, b) -> Flow:
    return Flow(a, b)


def test_oracle_single_completion() -> None:
    etas = frozenset({ValCom("a", Var("x"), "b", "t")})
    sigma = {("a", "x"): 5}
    by = oracle_by_label(oracle_eta_reductions(etas, sigma, {}))
    lbl = Constraint.of(_f(Port("a"), Port("b")))
    assert set(by) == {lbl}
    (out, s2, m2), = by[lbl]
    assert out == frozenset()
    assert (("b", "t"), 5) in s2


def test_oracle_deposit_then_deliver() -> None:
    etas = frozenset({ValCom("a", Var("x"), "b", "t")})
    sigma = {("a", "x"): 5}
    mu = {"m": BOT}
    by = oracle_by_label(oracle_eta_reductions(etas, sigma, mu))
    dep = Constraint.of(_f(Port("a"), Mem("m")))
    assert dep in by
    outs = {out for out, _, _ in by[dep]}
    assert frozenset({RecvVal("b", "t", 5)}) in outs
    # depositing and delivering through the same cell needs two compositions,
    # which the same-cell read-after-write rule forbids as one label
    both = Constraint.of(_f(Port("a"), Mem("m")), _f(Mem("m"), Port("b")))
    assert both not in by


def test_oracle_delivery_requires_matching_value() -> None:
    etas = frozenset({RecvVal("b", "t", 5)})
    lbl = Constraint.of(_f(Mem("m"), Port("b")))
    assert lbl in oracle_by_label(oracle_eta_reductions(etas, {}, {"m": 5}))
    assert lbl not in oracle_by_label(oracle_eta_reductions(etas, {}, {"m": 6}))
    assert lbl not in oracle_by_label(oracle_eta_reductions(etas, {}, {"m": True}))


def test_oracle_label_bound_is_a_pure_restriction() -> None:
    etas = frozenset({ValCom("a", Var("x"), "b", "t"), Sel("c", "d", "go")})
    sigma = {("a", "x"): 1}
    mu = {"m1": "v", "m2": BOT}
    full = oracle_by_label(oracle_eta_reductions(etas, sigma, mu))
    bounded = oracle_by_label(oracle_eta_reductions(etas, sigma, mu, max_label=2))
    assert set(bounded) == {lbl for lbl in full if len(lbl.flows) <= 2}
    for lbl in bounded:
        assert bounded[lbl] == full[lbl]


def test_mutators_change_exactly_what_they_say() -> None:
    r = rendezvous()
    s = swapped_rendezvous()
    assert validate_automaton(s) == []
    assert s.ports == r.ports
    assert s.transitions != r.transitions
    b = bad_alternator()
    assert validate_automaton(b) == []
    c = crossed_chain4()
    assert validate_automaton(c) == []
    d = drop_transition(buffer1(), 1)
    assert len(d.transitions) == 1


def test_exhaustive_explore_counts_terminal_nodes() -> None:
    prog = load_program("booksale.cr")
    cfg = ce.initial_configuration(prog)
    ex = exhaustive_explore(cfg, prog.connectors, bound=30)
    assert not ex.truncated
    assert not ex.stuck
    assert ex.terminated
    assert all(isinstance(n, ce.Configuration) for n in ex.nodes)


def test_generator_is_deterministic_and_bounded() -> None:
    p1 = gen_random_program(random.Random(42))
    p2 = gen_random_program(random.Random(42))
    assert p1.main == p2.main
    assert p1.connectors.keys() == p2.connectors.keys()
    for i in range(60):
        prog = gen_random_program(random.Random(9000 + i))
        assert len(pn(prog.main)) <= 3
        assert len(connectors_of(prog.main)) <= 2
        assert _count_interactions(prog.main) <= 6
        for a in prog.connectors.values():
            assert validate_automaton(a) == []


def _count_interactions(c) -> int:
    from choreo.core import Cond, Def, Prefix

    if isinstance(c, Prefix):
        return len(c.etas) + _count_interactions(c.cont)
    if isinstance(c, Cond):
        return max(
            _count_interactions(c.then_branch), _count_interactions(c.else_branch)
        )
    if isinstance(c, Def):
        return _count_interactions(c.body) + _count_interactions(c.cont)
    return 0


def test_correspondence_clean_on_booksale() -> None:
    report = correspondence_check(load_program("booksale.cr"), bound=25)
    assert report.ok
    assert report.pairs_checked > 0


def test_correspondence_reports_gaps_for_a_miswired_barrier() -> None:
    # the swapped barrier lets the network fire a step the choreography
    # refuses, so the checker must come back with soundness gaps
    report = correspondence_check(load_program("booksale_resp2.cr"), bound=25)
    assert not report.ok
    assert any("network step" in g or "no choreography" in g for g in report.gaps)


def test_advance_until_connector_stops_at_the_right_prefix() -> None:
    prog = load_program("booksale.cr")
    cfg = ce.initial_configuration(prog)
    cfg2 = harness.advance_until_connector(cfg, prog.connectors, "ac2bs")
    rs = ce.reductions(cfg2, prog.connectors)
    assert any(r.subject == "ac2bs" for r in rs)

from __future__ import annotations

import pytest

from choreo.core import (
    BOT,
    Call,
    Cond,
    Const,
    Constraint,
    ConstraintAutomaton,
    Def,
    END,
    End,
    Flow,
    InputError,
    Label,
    Mem,
    Port,
    Prefix,
    RecvSel,
    RecvVal,
    Sel,
    Transition,
    ValCom,
    Var,
    check_closed,
    connectors_of,
    desugar_multicast,
    instantiate,
    pn,
    sorted_etas,
    validate_automaton,
    validate_interaction_set,
)
from choreo.harness import buffer1, rendezvous


def test_label_never_equals_string() -> None:
    assert Label("ok") != "ok"
    assert Label("ok") == Label("ok")


def test_end_is_a_singleton() -> None:
    assert End() is END
    assert End() == End()


def test_self_communication_rejected() -> None:
    with pytest.raises(Exception):
        ValCom("a", Var("x"), "a", "y")
    with pytest.raises(Exception):
        Sel("a", "a", "go")


def test_interaction_set_distinct_receivers() -> None:
    etas = [ValCom("a", Var("x"), "c", "t"), Sel("b", "c", "go")]
    problems = validate_interaction_set(etas)
    assert any("receiver c" in p for p in problems)


def test_interaction_set_consistent_sends() -> None:
    etas = [ValCom("a", Var("x"), "b", "t"), ValCom("a", Var("y"), "c", "u")]
    problems = validate_interaction_set(etas)
    assert any("sender a" in p for p in problems)
    same = [ValCom("a", Var("x"), "b", "t"), ValCom("a", Var("x"), "c", "u")]
    assert validate_interaction_set(same) == []


def test_runtime_terms_count_as_receivers() -> None:
    etas = [RecvVal("c", "t", "v"), Sel("a", "c", "go")]
    assert validate_interaction_set(etas)
    ok = [RecvVal("c", "t", "v"), RecvSel("b", "go")]
    assert validate_interaction_set(ok) == []


def test_desugar_multicast_values() -> None:
    etas = desugar_multicast("a", Var("x"), [("b", "m"), ("c", "n")])
    assert etas == frozenset(
        {ValCom("a", Var("x"), "b", "m"), ValCom("a", Var("x"), "c", "n")}
    )


def test_desugar_multicast_labels() -> None:
    etas = desugar_multicast("a", "buy", ["b", "c"])
    assert etas == frozenset({Sel("a", "b", "buy"), Sel("a", "c", "buy")})


def test_desugar_multicast_rejects_bad_shapes() -> None:
    with pytest.raises(InputError):
        desugar_multicast("a", "buy", [])
    with pytest.raises(InputError):
        desugar_multicast("a", "buy", ["a"])
    with pytest.raises(InputError):
        desugar_multicast("a", "buy", ["b", "b"])
    with pytest.raises(InputError):
        desugar_multicast("a", Var("x"), ["b"])


def test_pn_and_connectors_walk_the_whole_tree() -> None:
    c = Def(
        "X",
        Prefix(frozenset({Sel("a", "b", "go")}), "g1", Call("X")),
        Cond("d", Const(True), Prefix(frozenset({Sel("a", "c", "go")}), "g2", END), END),
    )
    assert pn(c) == frozenset({"a", "b", "c", "d"})
    assert connectors_of(c) == frozenset({"g1", "g2"})


def test_check_closed_flags_free_calls() -> None:
    assert check_closed(Call("X")) == ["call of undefined procedure X"]
    assert check_closed(Def("X", Call("X"), Call("X"))) == []


def test_sorted_etas_is_deterministic() -> None:
    etas = {Sel("b", "c", "go"), ValCom("a", Var("x"), "d", "t"), RecvSel("e", "go")}
    assert sorted_etas(etas) == sorted_etas(frozenset(etas))


def test_validate_automaton_accepts_the_builders() -> None:
    assert validate_automaton(buffer1()) == []
    assert validate_automaton(rendezvous()) == []


def _tiny(transitions) -> ConstraintAutomaton:
    return ConstraintAutomaton.make(
        "T", ["1", "2"], ["p1", "p2"], ["m"], transitions, "1"
    )


def test_validate_automaton_single_role_ports() -> None:
    t1 = Transition("1", Constraint.of(Flow(Port("p1"), Port("p2"))), "2")
    t2 = Transition("2", Constraint.of(Flow(Port("p2"), Port("p1"))), "1")
    problems = validate_automaton(_tiny([t1, t2]))
    assert any("both as a source and as a target" in p for p in problems)


def test_validate_automaton_determinism_on_port_sets() -> None:
    t1 = Transition("1", Constraint.of(Flow(Port("p1"), Port("p2"))), "2")
    t2 = Transition("1", Constraint.of(Flow(Port("p1"), Port("p2"))), "1")
    problems = validate_automaton(_tiny([t1, t2]))
    assert any("same port set" in p for p in problems)


def test_validate_automaton_same_ports_different_cells_still_clash() -> None:
    t1 = Transition("1", Constraint.of(Flow(Port("p1"), Mem("m"))), "2")
    t2 = Transition("1", Constraint.of(Flow(Port("p1"), Port("p2"))), "1")
    problems = validate_automaton(_tiny([t1, t2]))
    assert problems == []


def test_validate_automaton_distinct_targets() -> None:
    t = Transition(
        "1",
        Constraint.of(Flow(Port("p1"), Mem("m")), Flow(Port("p2"), Mem("m"))),
        "2",
    )
    problems = validate_automaton(_tiny([t]))
    assert any("written twice" in p for p in problems)
    # the same name as a port target and as a cell target is two targets
    t2 = Transition(
        "1",
        Constraint.of(Flow(Port("p1"), Port("p2")), Flow(Mem("m"), Mem("m"))),
        "2",
    )
    assert validate_automaton(_tiny([t2])) == []


def test_validate_automaton_referential_closure() -> None:
    t = Transition("1", Constraint.of(Flow(Port("zz"), Mem("qq"))), "9")
    problems = validate_automaton(_tiny([t]))
    assert any("unknown port zz" in p for p in problems)
    assert any("unknown cell qq" in p for p in problems)
    assert any("unknown target state 9" in p for p in problems)


def test_validate_automaton_empty_constraint() -> None:
    t = Transition("1", Constraint(frozenset()), "2")
    problems = validate_automaton(_tiny([t]))
    assert any("empty flow constraint" in p for p in problems)


def test_instantiate_renames_ports_everywhere() -> None:
    b = buffer1()
    inst = instantiate(b, {"p1": "a", "p2": "c"}, name="a2c")
    assert inst.ports == ("a", "c")
    srcs = {
        f.src.name
        for t in inst.transitions
        for f in t.phi.flows
        if isinstance(f.src, Port)
    }
    assert srcs == {"a"}
    assert inst.name == "a2c"
    assert inst.mems == b.mems


def test_instantiate_requires_a_bijection() -> None:
    b = buffer1()
    with pytest.raises(InputError):
        instantiate(b, {"p1": "a"})
    with pytest.raises(InputError):
        instantiate(b, {"p1": "a", "p2": "a"})
    with pytest.raises(InputError):
        instantiate(b, {"p1": "a", "p2": "c", "p3": "d"})


def test_init_mem_defaults_to_bottom() -> None:
    a = _tiny([])
    assert a.init_mem_map() == {"m": BOT}

from __future__ import annotations

import random

from choreo import cp_engine as cpe
from choreo import epp, textio
from choreo import chor_engine as ce
from choreo.cli import _project
from choreo.core import BOT, Constraint, Flow, Label, Mem, Port, Var
from choreo.epp import BCall, BDef, BEnd, Branch, PortName, Recv, SelSend, Send

from conftest import fixture_text, load_program


def _net(**procs) -> cpe.Network:
    return cpe.Network.make({q: (store, b) for q, (store, b) in procs.items()})


def _phi(*pairs) -> Constraint:
    return Constraint(frozenset(Flow(a, b) for a, b in pairs))


O = PortName("o", "a", "g")
I = PortName("i", "b", "g")
I2 = PortName("i", "c", "g")


def test_normalize_behaviour_drops_finished_defs() -> None:
    b = BDef("X", Send(O, Var("x"), BEnd()), BEnd())
    assert cpe.normalize_behaviour(b) == BEnd()


def test_head_focus_unfolds_defs_once() -> None:
    b = BDef("X", Send(O, Var("x"), BCall("X")), BCall("X"))
    focus = cpe.head_focus(b)
    assert isinstance(focus.action, Send)


def test_direct_send_recv_over_port_flow() -> None:
    net = _net(
        a=({"x": 7}, Send(O, Var("x"), BEnd())),
        b=({}, Recv(I, "y", BEnd())),
    )
    m = cpe.cp_match_transition(net, _phi((Port("o_a_g"), Port("i_b_g"))), {})
    assert not isinstance(m, str)
    net2, writes = m
    assert writes == {}
    assert net2.proc_map()["b"][0] == {"y": 7}


def test_send_fans_out_to_all_flows_of_its_port() -> None:
    net = _net(
        a=({"x": 7}, Send(O, Var("x"), BEnd())),
        b=({}, Recv(I, "y", BEnd())),
        c=({}, Recv(I2, "z", BEnd())),
    )
    phi = _phi(
        (Port("o_a_g"), Port("i_b_g")),
        (Port("o_a_g"), Port("i_c_g")),
        (Port("o_a_g"), Mem("m")),
    )
    m = cpe.cp_match_transition(net, phi, {"m": BOT})
    assert not isinstance(m, str)
    net2, writes = m
    assert writes == {"m": 7}
    assert net2.proc_map()["b"][0] == {"y": 7}
    assert net2.proc_map()["c"][0] == {"z": 7}


def test_selection_drives_branches() -> None:
    net = _net(
        a=({}, SelSend(O, "buy", BEnd())),
        b=({}, Branch.make(I, {"buy": BEnd(), "quit": BEnd()})),
    )
    m = cpe.cp_match_transition(net, _phi((Port("o_a_g"), Port("i_b_g"))), {})
    assert not isinstance(m, str)
    missing = _net(
        a=({}, SelSend(O, "other", BEnd())),
        b=({}, Branch.make(I, {"buy": BEnd()})),
    )
    m2 = cpe.cp_match_transition(missing, _phi((Port("o_a_g"), Port("i_b_g"))), {})
    assert m2 == "ports"


def test_cell_delivery_accepts_any_stored_datum() -> None:
    net = _net(b=({}, Recv(I, "y", BEnd())))
    phi = _phi((Mem("m"), Port("i_b_g")))
    m = cpe.cp_match_transition(net, phi, {"m": "anything"})
    assert not isinstance(m, str)
    assert m[0].proc_map()["b"][0] == {"y": "anything"}
    assert cpe.cp_match_transition(net, phi, {"m": BOT}) == "value"


def test_branch_from_cell_needs_a_known_label() -> None:
    net = _net(b=({}, Branch.make(I, {"buy": BEnd()})))
    phi = _phi((Mem("m"), Port("i_b_g")))
    assert not isinstance(cpe.cp_match_transition(net, phi, {"m": Label("buy")}), str)
    assert cpe.cp_match_transition(net, phi, {"m": Label("zz")}) == "value"
    assert cpe.cp_match_transition(net, phi, {"m": "buy"}) == "value"


def test_projected_booksale_runs_to_completion() -> None:
    prog = load_program("booksale.cr")
    cp = _project(prog)
    res = cpe.cp_run(cp.init, cp.automata)
    assert res.outcome is cpe.Outcome.TERMINATED
    stores = {q: store for q, (store, _) in res.final.net.proc_map().items()}
    assert stores == {}


def test_projected_resp3_terminates_where_the_choreography_stalls() -> None:
    # the crossed relay swaps the two deliveries; the choreography refuses the
    # wrong values and gets stuck, but network receives accept any datum, so
    # the projected side runs to completion with the payloads exchanged
    prog = load_program("booksale_resp3.cr")
    chor_res = ce.run(ce.initial_configuration(prog), prog.connectors)
    assert chor_res.outcome is ce.Outcome.STUCK
    cp = _project(prog)
    res = cpe.cp_run(cp.init, cp.automata)
    assert res.outcome is cpe.Outcome.TERMINATED


def test_parse_cp_executes_like_the_projection() -> None:
    cp = textio.parse_cp(fixture_text("booksale.cp"))
    res = cpe.cp_run(cp.init, cp.automata)
    assert res.outcome is cpe.Outcome.TERMINATED
    assert len(res.trace) == 7


def test_behaviour_leq_allows_wider_branches() -> None:
    small = Branch.make(I, {"buy": BEnd()})
    big = Branch.make(I, {"buy": BEnd(), "quit": BEnd()})
    assert cpe.behaviour_leq(small, big)
    assert not cpe.behaviour_leq(big, small)


def test_behaviour_leq_follows_recursion() -> None:
    b1 = BDef("X", Send(O, Var("x"), BCall("X")), BCall("X"))
    b2 = BDef("Y", Send(O, Var("x"), BCall("Y")), BCall("Y"))
    assert cpe.behaviour_leq(b1, b2)
    other = BDef("X", Send(PortName("o", "a", "h"), Var("x"), BCall("X")), BCall("X"))
    assert not cpe.behaviour_leq(b1, other)


def test_pruning_leq_on_networks() -> None:
    n1 = _net(a=({}, Branch.make(I, {"buy": BEnd()})))
    n2 = _net(a=({}, Branch.make(I, {"buy": BEnd(), "quit": BEnd()})))
    assert cpe.pruning_leq(n1, n2)
    assert not cpe.pruning_leq(n2, n1)
    # stores must agree exactly
    n3 = _net(a=({"x": 1}, Branch.make(I, {"buy": BEnd()})))
    assert not cpe.pruning_leq(n1, n3)


def test_terminated_network_is_empty_after_normalization() -> None:
    assert cpe.cp_terminated(cpe.NetConfiguration.make(_net(a=({}, BEnd())), {}))

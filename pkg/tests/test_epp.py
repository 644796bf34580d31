from __future__ import annotations

import pytest

from choreo import chor_engine as ce
from choreo import epp
from choreo.core import (
    Cond,
    END,
    InputError,
    Prefix,
    Sel,
    ValCom,
    Var,
)
from choreo.epp import (
    BCond,
    BEnd,
    Branch,
    MergeError,
    PortName,
    Recv,
    Send,
    Unprojectable,
    merge,
    project_behaviour,
    project_connectors,
)
from choreo.harness import buffer1, gen_random_program

from conftest import load_program

import random


def _b_end() -> BEnd:
    return BEnd()


def test_merge_identical_behaviours() -> None:
    b = Send(PortName("o", "a", "g"), Var("x"), _b_end())
    assert merge(b, b) == b


def test_merge_unions_branch_labels() -> None:
    port = PortName("i", "b", "g")
    b1 = Branch.make(port, {"yes": _b_end()})
    b2 = Branch.make(port, {"no": _b_end()})
    merged = merge(b1, b2)
    assert isinstance(merged, Branch)
    assert set(merged.case_map()) == {"yes", "no"}
    # shared labels merge recursively
    b3 = Branch.make(port, {"yes": _b_end(), "extra": _b_end()})
    again = merge(merged, b3)
    assert set(again.case_map()) == {"yes", "no", "extra"}


def test_merge_rejects_different_shapes() -> None:
    s = Send(PortName("o", "a", "g"), Var("x"), _b_end())
    r = Recv(PortName("i", "a", "g"), "x", _b_end())
    with pytest.raises(MergeError):
        merge(s, r)
    with pytest.raises(MergeError):
        merge(s, Send(PortName("o", "a", "g"), Var("y"), _b_end()))


def test_merge_properties_on_generated_branches() -> None:
    rng = random.Random(7)
    port = PortName("i", "b", "g")
    labels = ["l1", "l2", "l3", "l4"]

    def gen() -> Branch:
        picks = rng.sample(labels, rng.randint(1, 3))
        return Branch.make(port, {l: _b_end() for l in picks})

    for _ in range(40):
        x, y, z = gen(), gen(), gen()
        assert merge(x, x) == x
        assert merge(x, y) == merge(y, x)
        assert merge(merge(x, y), z) == merge(x, merge(y, z))


def test_booksale_projection_per_process() -> None:
    prog = load_program("booksale.cr")
    main = ce.normalize(prog.main)

    a = project_behaviour(main, "a")
    assert isinstance(a, Send) and a.port == PortName("o", "a", "a2c")
    assert isinstance(a.cont, Recv) and a.cont.port == PortName("i", "a", "c2a")
    assert isinstance(a.cont.cont, BCond)

    b = project_behaviour(main, "b")
    assert isinstance(b, Branch)
    assert set(b.case_map()) == {"buy", "quit"}

    s = project_behaviour(main, "s")
    assert isinstance(s, Branch)
    buy = s.case_map()["buy"]
    assert isinstance(buy, Recv) and buy.var == "book"

    c = project_behaviour(main, "c")
    assert isinstance(c, Recv)


def test_nonparticipants_project_to_end() -> None:
    prog = load_program("booksale.cr")
    assert project_behaviour(ce.normalize(prog.main), "zz") == _b_end()


def test_unprojectable_conditional() -> None:
    # b only hears about one branch, so its two projections cannot merge
    c = Cond(
        "a",
        Var("x"),
        Prefix(frozenset({ValCom("a", Var("x"), "b", "t")}), "g", END),
        END,
    )
    with pytest.raises(Unprojectable) as err:
        project_behaviour(c, "b")
    assert err.value.process == "b"
    assert not epp.projectable(c)


def test_selection_makes_the_conditional_projectable() -> None:
    then = Prefix(frozenset({Sel("a", "b", "yes")}), "g", END)
    els = Prefix(frozenset({Sel("a", "b", "no")}), "g", END)
    c = Cond("a", Var("x"), then, els)
    b = project_behaviour(c, "b")
    assert isinstance(b, Branch)
    assert set(b.case_map()) == {"yes", "no"}


def test_project_network_slices_the_store() -> None:
    prog = load_program("booksale.cr")
    net = epp.project_network(ce.normalize(prog.main), prog.init_sigma)
    stores = {p: store for p, (store, _) in net.proc_map().items()}
    assert stores["a"] == {"title": "foo", "happy": True, "money": "$10"}
    assert stores["c"] == {"price": "$10", "book": "foo.pdf"}
    assert stores["b"] == {}


def test_project_connectors_renames_and_directs() -> None:
    from choreo.core import instantiate

    g = {"a2c": instantiate(buffer1(), {"p1": "a", "p2": "c"}, name="a2c")}
    out = project_connectors(g)
    assert out["a2c"].ports == ("o_a_a2c", "i_c_a2c")
    for t in out["a2c"].transitions:
        for f in t.phi.flows:
            for e in (f.src, f.dst):
                if hasattr(e, "name") and "_" in e.name:
                    PortName.parse(e.name)


def test_project_connectors_rejects_underscores() -> None:
    from choreo.core import instantiate

    inst = instantiate(buffer1(), {"p1": "a", "p2": "c"}, name="a2c")
    with pytest.raises(InputError):
        project_connectors({"a_2c": inst})
    bad = instantiate(buffer1(), {"p1": "a_x", "p2": "c"}, name="g")
    with pytest.raises(InputError):
        project_connectors({"g": bad})


def test_generated_programs_are_projectable() -> None:
    for i in range(40):
        prog = gen_random_program(random.Random(5000 + i))
        assert epp.projectable(ce.normalize(prog.main))

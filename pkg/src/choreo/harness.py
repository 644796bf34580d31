"""Reference oracles, automaton builders, fixtures, exploration, and the
cross-semantics correspondence checker.

The eta-reduction oracle recomputes one-step labelled reductions of an
interaction set by brute force: it composes single-flow rule applications in
every order, subject to the read-before-write side condition on cells, and
collects every (label, result) pair.  The fast matcher in `chor_engine` is
tested against it, never the other way round.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .core import (
    BOT,
    Call,
    Cond,
    ConnectorMapping,
    Const,
    Constraint,
    ConstraintAutomaton,
    Def,
    END,
    Expr,
    Flow,
    InputError,
    Interaction,
    Label,
    Mem,
    MemorySnapshot,
    Port,
    Prefix,
    RecvSel,
    RecvVal,
    Sel,
    Transition,
    ValCom,
    Value,
    Var,
    desugar_multicast,
    instantiate,
    pn,
    sorted_etas,
    validate_automaton,
)
from .chor_engine import (
    Configuration,
    Outcome,
    Reduction,
    _freeze_sigma,
    eval_expr,
    initial_configuration,
    is_terminated,
    normalize,
    reductions,
)
from .cp_engine import (
    NetConfiguration,
    Network,
    cp_reductions,
    cp_terminated,
    normalize_network,
    pruning_leq,
)
from .epp import PortName, project_connectors, project_network, projectable
from . import textio


# ---------------------------------------------------------------------------
# Automaton builders (formal templates over ports p1..p4 and cells m, m1, m2)


def _ca(
    name: str,
    states: Iterable[str],
    ports: Iterable[str],
    mems: Iterable[str],
    trans: Iterable[tuple[str, str, Iterable[tuple[str, str]]]],
    init: str,
) -> ConstraintAutomaton:
    port_set, mem_set = set(ports), set(mems)

    def end(x: str):
        if x in port_set:
            return Port(x)
        if x in mem_set:
            return Mem(x)
        raise InputError(f"{name}: unknown flow end {x}")

    transitions = [
        Transition(src, Constraint(frozenset(Flow(end(a), end(b)) for a, b in flows)), dst)
        for src, dst, flows in trans
    ]
    a = ConstraintAutomaton.make(name, list(states), list(ports), list(mems), transitions, init, {})
    problems = validate_automaton(a)
    if problems:
        raise InputError(f"{name}: " + "; ".join(problems))
    return a


def sync() -> ConstraintAutomaton:
    return _ca("Sync", ["1"], ["p1", "p2"], [], [("1", "1", [("p1", "p2")])], "1")


def buffer1() -> ConstraintAutomaton:
    return _ca(
        "Buffer1",
        ["1", "2"],
        ["p1", "p2"],
        ["m"],
        [("1", "2", [("p1", "m")]), ("2", "1", [("m", "p2")])],
        "1",
    )


def buffer2() -> ConstraintAutomaton:
    return _ca(
        "Buffer2",
        ["1", "2", "3"],
        ["p1", "p2"],
        ["m1", "m2"],
        [
            ("1", "2", [("p1", "m1")]),
            ("2", "1", [("m1", "p2")]),
            ("2", "2", [("m1", "p2"), ("p1", "m1")]),
            ("2", "3", [("p1", "m2")]),
            ("3", "2", [("m1", "p2"), ("m2", "m1")]),
        ],
        "1",
    )


def spread2() -> ConstraintAutomaton:
    return _ca(
        "Spread2",
        ["1"],
        ["p1", "p2", "p3"],
        [],
        [("1", "1", [("p1", "p2"), ("p1", "p3")])],
        "1",
    )


def spread3() -> ConstraintAutomaton:
    return _ca(
        "Spread3",
        ["1"],
        ["p1", "p2", "p3", "p4"],
        [],
        [("1", "1", [("p1", "p2"), ("p1", "p3"), ("p1", "p4")])],
        "1",
    )


def bufferspread2() -> ConstraintAutomaton:
    return _ca(
        "BufferSpread2",
        ["1", "2", "da", "db"],
        ["p1", "p2", "p3"],
        ["m1", "m2"],
        [
            ("1", "2", [("p1", "m1"), ("p1", "m2")]),
            ("2", "1", [("m1", "p2"), ("m2", "p3")]),
            ("2", "da", [("m1", "p2")]),
            ("2", "db", [("m2", "p3")]),
            ("da", "1", [("m2", "p3")]),
            ("db", "1", [("m1", "p2")]),
        ],
        "1",
    )


def rendezvous() -> ConstraintAutomaton:
    return _ca(
        "Rendezvous",
        ["1"],
        ["p1", "p2", "p3", "p4"],
        [],
        [("1", "1", [("p1", "p2"), ("p3", "p4")])],
        "1",
    )


def alternator() -> ConstraintAutomaton:
    return _ca(
        "Alternator",
        ["1", "2", "co2"],
        ["p1", "p2", "p3", "p4"],
        [],
        [
            ("1", "2", [("p1", "p2")]),
            ("2", "1", [("p3", "p4")]),
            ("1", "co2", [("p3", "p4")]),
            ("co2", "1", [("p1", "p2")]),
        ],
        "1",
    )


def indep2() -> ConstraintAutomaton:
    return _ca(
        "Indep2",
        ["1"],
        ["p1", "p2", "p3", "p4"],
        [],
        [("1", "1", [("p1", "p2")]), ("1", "1", [("p3", "p4")])],
        "1",
    )


def relay2() -> ConstraintAutomaton:
    return _ca(
        "Relay2",
        ["1", "2"],
        ["p1", "p2", "p3"],
        [],
        [("1", "2", [("p1", "p2")]), ("2", "1", [("p1", "p3")])],
        "1",
    )


def chain4() -> ConstraintAutomaton:
    """Buffer both sends, then deliver them: the well-behaved two-cell relay."""
    return _ca(
        "Chain4",
        ["1", "2", "3", "4"],
        ["p1", "p2", "p3", "p4"],
        ["m1", "m2"],
        [
            ("1", "2", [("p1", "m1")]),
            ("2", "3", [("p3", "m2")]),
            ("3", "4", [("m1", "p2")]),
            ("4", "1", [("m2", "p4")]),
        ],
        "1",
    )


def twosinks() -> ConstraintAutomaton:
    """Two moves from the start that never rejoin; the diamond check reports
    Unknown with this pair as witness."""
    return _ca(
        "TwoSinks",
        ["1", "2", "3"],
        ["p1", "p2", "p3"],
        [],
        [("1", "2", [("p1", "p2")]), ("1", "3", [("p1", "p3")])],
        "1",
    )


# ---------------------------------------------------------------------------
# Fault injection


def swap_ports(a: ConstraintAutomaton, x: str, y: str, name: "str | None" = None) -> ConstraintAutomaton:
    """Exchange two ports in every flow, keeping everything else intact."""

    def sub(end):
        if isinstance(end, Port):
            if end.name == x:
                return Port(y)
            if end.name == y:
                return Port(x)
        return end

    transitions = tuple(
        Transition(t.src, Constraint(frozenset(Flow(sub(f.src), sub(f.dst)) for f in t.phi.flows)), t.dst)
        for t in a.transitions
    )
    return ConstraintAutomaton(
        name or a.name, a.states, a.ports, a.mems, transitions, a.init_state, a.init_mem
    )


def relabel_transition(
    a: ConstraintAutomaton,
    index: int,
    flows: Iterable[tuple[str, str]],
    name: "str | None" = None,
) -> ConstraintAutomaton:
    """Replace the flow constraint of one transition (by declaration order)."""
    port_set, mem_set = set(a.ports), set(a.mems)

    def end(z: str):
        return Port(z) if z in port_set else Mem(z)

    old = a.transitions[index]
    new = Transition(old.src, Constraint(frozenset(Flow(end(p), end(q)) for p, q in flows)), old.dst)
    transitions = tuple(new if i == index else t for i, t in enumerate(a.transitions))
    return ConstraintAutomaton(
        name or a.name, a.states, a.ports, a.mems, transitions, a.init_state, a.init_mem
    )


def drop_transition(a: ConstraintAutomaton, index: int, name: "str | None" = None) -> ConstraintAutomaton:
    transitions = tuple(t for i, t in enumerate(a.transitions) if i != index)
    return ConstraintAutomaton(
        name or a.name, a.states, a.ports, a.mems, transitions, a.init_state, a.init_mem
    )


def bad_alternator() -> ConstraintAutomaton:
    """Alternator that asks for the first pair again instead of the second."""
    return relabel_transition(alternator(), 1, [("p1", "p2")], name="BadAlternator")


def swapped_rendezvous() -> ConstraintAutomaton:
    """Barrier whose two targets are exchanged."""
    return swap_ports(rendezvous(), "p2", "p4", name="SwappedRendezvous")


def crossed_chain4() -> ConstraintAutomaton:
    """Two-cell relay that delivers each buffered value to the other target."""
    return swap_ports(chain4(), "p2", "p4", name="CrossedChain4")


# ---------------------------------------------------------------------------
# Brute-force eta-reduction oracle


@dataclass(frozen=True)
class OracleResult:
    phi: Constraint
    etas: frozenset
    sigma: tuple
    mu: tuple


def oracle_eta_reductions(
    etas: frozenset[Interaction],
    sigma: Mapping[tuple[str, str], Value],
    mu: MemorySnapshot,
    depth: "int | None" = None,
    max_label: "int | None" = None,
) -> set[OracleResult]:
    """All labelled reductions of an interaction set, by exhaustive
    composition of single-flow steps.

    Single steps: a full communication completes over a port-to-port flow,
    or deposits into a cell (leaving a runtime receive); a runtime receive
    completes over a cell-to-port flow when the cell holds its value; a cell
    copies into a cell (including itself) when nonempty.  Compositions must
    never read a cell written earlier in the same composition, and may use
    each cell-to-cell pair at most once.

    A label is the set of distinct flows used, so it only grows along a
    composition; `max_label` prunes branches whose label already exceeds the
    arity of the constraints being compared against.
    """
    cells = sorted(mu)
    results: set[OracleResult] = set()

    def go(
        cur_etas: frozenset,
        cur_sigma: dict,
        cur_mu: dict,
        used_mem: frozenset,
        written: frozenset,
        label: frozenset,
        depth_left: "int | None",
    ) -> None:
        if depth_left is not None and depth_left <= 0:
            return
        nxt = None if depth_left is None else depth_left - 1
        for eta in sorted_etas(cur_etas):
            if isinstance(eta, ValCom):
                v = eval_expr(eta.expr, cur_sigma, eta.sender)
                s2 = dict(cur_sigma)
                s2[(eta.receiver, eta.var)] = v
                _emit(
                    cur_etas - {eta},
                    s2,
                    cur_mu,
                    used_mem,
                    written,
                    label | {Flow(Port(eta.sender), Port(eta.receiver))},
                    nxt,
                )
                for m in cells:
                    mu2 = dict(cur_mu)
                    mu2[m] = v
                    _emit(
                        (cur_etas - {eta}) | {RecvVal(eta.receiver, eta.var, v)},
                        cur_sigma,
                        mu2,
                        used_mem,
                        written | {m},
                        label | {Flow(Port(eta.sender), Mem(m))},
                        nxt,
                    )
            elif isinstance(eta, Sel):
                _emit(
                    cur_etas - {eta},
                    cur_sigma,
                    cur_mu,
                    used_mem,
                    written,
                    label | {Flow(Port(eta.sender), Port(eta.receiver))},
                    nxt,
                )
                for m in cells:
                    mu2 = dict(cur_mu)
                    mu2[m] = Label(eta.label)
                    _emit(
                        (cur_etas - {eta}) | {RecvSel(eta.receiver, eta.label)},
                        cur_sigma,
                        mu2,
                        used_mem,
                        written | {m},
                        label | {Flow(Port(eta.sender), Mem(m))},
                        nxt,
                    )
            elif isinstance(eta, RecvVal):
                for m in cells:
                    if m in written:
                        continue
                    stored = cur_mu[m]
                    if stored is BOT or not (
                        stored == eta.value and type(stored) is type(eta.value)
                    ):
                        continue
                    s2 = dict(cur_sigma)
                    s2[(eta.receiver, eta.var)] = eta.value
                    _emit(
                        cur_etas - {eta},
                        s2,
                        cur_mu,
                        used_mem,
                        written,
                        label | {Flow(Mem(m), Port(eta.receiver))},
                        nxt,
                    )
            else:
                assert isinstance(eta, RecvSel)
                for m in cells:
                    if m in written:
                        continue
                    stored = cur_mu[m]
                    if not (isinstance(stored, Label) and stored.name == eta.label):
                        continue
                    _emit(
                        cur_etas - {eta},
                        cur_sigma,
                        cur_mu,
                        used_mem,
                        written,
                        label | {Flow(Mem(m), Port(eta.receiver))},
                        nxt,
                    )
        for m1 in cells:
            if m1 in written:
                continue
            if cur_mu[m1] is BOT:
                continue
            for m2 in cells:
                if (m1, m2) in used_mem:
                    continue
                mu2 = dict(cur_mu)
                mu2[m2] = cur_mu[m1]
                _emit(
                    cur_etas,
                    cur_sigma,
                    mu2,
                    used_mem | {(m1, m2)},
                    written | {m2},
                    label | {Flow(Mem(m1), Mem(m2))},
                    nxt,
                )

    seen: set[tuple] = set()

    def _emit(e, s, m, used, written, label, depth_left) -> None:
        fl = frozenset(label)
        if max_label is not None and len(fl) > max_label:
            return
        fe = frozenset(e)
        fs = _freeze_sigma(s)
        fm = tuple(sorted(m.items()))
        results.add(OracleResult(Constraint(fl), fe, fs, fm))
        key = (fe, fs, fm, used, written, fl, depth_left)
        if key in seen:
            return
        seen.add(key)
        go(e, s, m, used, written, label, depth_left)

    go(frozenset(etas), dict(sigma), dict(mu), frozenset(), frozenset(), frozenset(), depth)
    return results


def oracle_by_label(results: set[OracleResult]) -> dict[Constraint, set[tuple]]:
    out: dict[Constraint, set[tuple]] = {}
    for r in results:
        out.setdefault(r.phi, set()).add((r.etas, r.sigma, r.mu))
    return out


# ---------------------------------------------------------------------------
# Exhaustive exploration


@dataclass
class ExploreResult:
    nodes: set[Configuration]
    edges: set[tuple[Configuration, tuple, Configuration]]
    stuck: set[Configuration]
    terminated: set[Configuration]
    truncated: bool


def _edge_info(r: Reduction) -> tuple:
    if r.kind == "com":
        return ("com", r.subject, tuple(str(f.src) + ">" + str(f.dst) for f in r.phi.sorted_flows()))
    return ("cond", r.subject, r.branch)


def exhaustive_explore(cfg: Configuration, g: ConnectorMapping, bound: int) -> ExploreResult:
    """Breadth-first closure of the reduction relation to the given depth."""
    cfg = Configuration.make(normalize(cfg.chor), cfg.sigma_map(), cfg.astate_map())
    nodes = {cfg}
    edges: set = set()
    stuck: set = set()
    terminated: set = set()
    truncated = False
    frontier = [cfg]
    for _ in range(bound):
        nxt: list[Configuration] = []
        for cur in frontier:
            if is_terminated(cur):
                terminated.add(cur)
                continue
            rs = reductions(cur, g)
            if not rs:
                stuck.add(cur)
                continue
            for r in rs:
                edges.add((cur, _edge_info(r), r.config))
                if r.config not in nodes:
                    nodes.add(r.config)
                    nxt.append(r.config)
        frontier = nxt
        if not frontier:
            break
    for cur in frontier:
        if is_terminated(cur):
            terminated.add(cur)
        elif not reductions(cur, g):
            stuck.add(cur)
        else:
            truncated = True
    return ExploreResult(nodes, edges, stuck, terminated, truncated)


def advance(cfg: Configuration, g: ConnectorMapping, steps: int) -> Configuration:
    """Take the first reduction repeatedly (the deterministic scheduler)."""
    for _ in range(steps):
        rs = reductions(cfg, g)
        if not rs:
            raise InputError("no reduction available while advancing")
        cfg = rs[0].config
    return cfg


def advance_until_connector(
    cfg: Configuration, g: ConnectorMapping, name: str, limit: int = 100
) -> Configuration:
    """Advance deterministically until every enabled reduction goes through
    the named connector."""
    for _ in range(limit):
        rs = reductions(cfg, g)
        if rs and all(r.kind == "com" and r.subject == name for r in rs):
            return cfg
        if not rs:
            raise InputError("stuck before reaching the requested connector")
        cfg = rs[0].config
    raise InputError("step limit exceeded before reaching the requested connector")


# ---------------------------------------------------------------------------
# Operational correspondence


@dataclass
class CorrespondenceReport:
    gaps: list[str]
    pairs_checked: int
    truncated: bool

    @property
    def ok(self) -> bool:
        return not self.gaps


def _project_cfg(cfg: Configuration) -> Network:
    return normalize_network(project_network(normalize(cfg.chor), cfg.sigma_map()))


def correspondence_check(
    program: "textio.Program", bound: int = 25, completion_depth: int = 3
) -> CorrespondenceReport:
    """Joint breadth-first check of the two semantics.

    Starting from the paired initial configurations, for every reachable pair:
    each choreography reduction must be matched by one or more network
    reductions whose endpoint lies above the projected successor (pruning
    order, literal connector-state equality), and each network reduction must
    be matched back by some choreography reduction the same way.
    """
    g = program.connectors
    pg = project_connectors(g)
    c0 = initial_configuration(program)
    n0 = NetConfiguration.make(_project_cfg(c0), c0.astate_map())
    gaps: list[str] = []
    seen = {(c0, n0)}
    frontier: list[tuple[Configuration, NetConfiguration]] = [(c0, n0)]
    pairs = 0
    for _ in range(bound):
        nxt: list[tuple[Configuration, NetConfiguration]] = []

        for cc, nc in frontier:
            pairs += 1
            crs = reductions(cc, g)
            nrs = cp_reductions(nc, pg)
            for cr in crs:
                target_net = _project_cfg(cr.config)
                target_astate = cr.config.astate
                matches = [
                    nr
                    for nr in nrs
                    if nr.config.astate == target_astate
                    and pruning_leq(target_net, nr.config.net)
                ]
                if matches:
                    pair = (cr.config, matches[0].config)
                    if pair not in seen:
                        seen.add(pair)
                        nxt.append(pair)
                    continue
                completed = _complete(nc, pg, target_astate, target_net, completion_depth)
                if completed is None:
                    gaps.append(
                        "completeness: no network match for choreography step "
                        f"{_describe_step(cr)}"
                    )
                else:
                    pair = (cr.config, completed)
                    if pair not in seen:
                        seen.add(pair)
                        nxt.append(pair)
            for nr in nrs:
                back = [
                    cr
                    for cr in crs
                    if cr.config.astate == nr.config.astate
                    and pruning_leq(_project_cfg(cr.config), nr.config.net)
                ]
                if back:
                    pair = (back[0].config, nr.config)
                    if pair not in seen:
                        seen.add(pair)
                        nxt.append(pair)
                    continue
                caught = _chor_complete(
                    cc, g, nr.config.astate, nr.config.net, completion_depth
                )
                if caught is None:
                    gaps.append(
                        "soundness: no choreography match for network step "
                        f"{_describe_step(nr)}"
                    )
                    continue
                pair = (caught, nr.config)
                if pair not in seen:
                    seen.add(pair)
                    nxt.append(pair)
        frontier = nxt
        if not frontier:
            break
    return CorrespondenceReport(gaps, pairs, bool(frontier))


def _describe_step(r) -> str:
    if r.kind == "com":
        from .textio import pretty_constraint

        return f"{r.subject}: {pretty_constraint(r.phi)} ({r.pre_state} -> {r.post_state})"
    return f"{r.subject}: {r.branch} branch"


def _complete(nc, pg, astate, net, depth) -> "NetConfiguration | None":
    frontier = [nc]
    seen = {nc}
    for _ in range(depth):
        nxt = []
        for cur in frontier:
            for nr in cp_reductions(cur, pg):
                cand = nr.config
                if cand in seen:
                    continue
                seen.add(cand)
                if cand.astate == astate and pruning_leq(net, cand.net):
                    return cand
                nxt.append(cand)
        frontier = nxt
        if not frontier:
            break
    return None


def _chor_complete(cc, g, astate, net, depth) -> "Configuration | None":
    """Several choreography steps may be needed to reach one network step,
    because commuting an interaction forward can require resolving an earlier
    one first.  Search a few levels deep for a matching configuration."""
    frontier = [cc]
    seen = {cc}
    for _ in range(depth):
        nxt = []
        for cur in frontier:
            for cr in reductions(cur, g):
                cand = cr.config
                if cand in seen:
                    continue
                seen.add(cand)
                if cand.astate == astate and pruning_leq(_project_cfg(cand), net):
                    return cand
                nxt.append(cand)
        frontier = nxt
        if not frontier:
            break
    return None


# ---------------------------------------------------------------------------
# Random projectable programs


_ZOO = ("Sync", "Buffer1", "Spread2")


def gen_random_program(rng: random.Random) -> "textio.Program":
    """One random well-formed, projectable program.

    Small by construction: at most 3 processes, 2 connectors, 6 interactions.
    Conditionals always start both branches with a label multicast from the
    deciding process to every other participant, so projection is defined.
    Two further restrictions keep the network and the choreography in step:
    connector shapes are limited to single-flow and single-sender transitions
    (joint transitions spanning two interaction sets would let the network
    outrun the choreography), and each interaction's sender is a receiver of
    the interaction just before it (otherwise a free sender could buffer its
    datum while its receiver is still engaged earlier, a state the
    choreography cannot commute into).
    """
    while True:
        prog = _gen_candidate(rng)
        if projectable(prog.main):
            return prog


def _gen_candidate(rng: random.Random) -> "textio.Program":
    n_proc = rng.choice([2, 3, 3])
    procs = ["p", "q", "r"][:n_proc]
    templates = {"Sync": sync(), "Buffer1": buffer1(), "Spread2": spread2()}
    n_conn = rng.choice([1, 2, 2])
    bindings: dict[str, tuple[str, dict[str, str]]] = {}
    connectors: dict[str, ConstraintAutomaton] = {}
    for i in range(n_conn):
        gname = f"g{i + 1}"
        choices = ["Sync", "Buffer1"] + (["Spread2"] if n_proc == 3 else [])
        tname = rng.choice(choices)
        t = templates[tname]
        if i == 0:
            owners = rng.sample(procs, len(t.ports))
        else:
            # chain the second connector off the first so gated chains of
            # length two and more exist
            g1 = connectors["g1"]
            prev_rcv = sorted(
                {f.dst.name for tr in g1.transitions for f in tr.phi.flows if isinstance(f.dst, Port)}
            )
            first = rng.choice(prev_rcv)
            rest = rng.sample([x for x in procs if x != first], len(t.ports) - 1)
            owners = [first] + rest
        subst = {port: owner for port, owner in zip(t.ports, owners)}
        bindings[gname] = (tname, subst)
        connectors[gname] = instantiate(t, subst, name=gname)
    names = sorted(connectors)

    budget = rng.randint(2, 6)
    counter = [0]

    def fresh_var() -> str:
        counter[0] += 1
        return f"r{counter[0]}"

    def conn_sender(gname: str) -> str:
        a = connectors[gname]
        return a.transitions[0].phi.sorted_flows()[0].src.name

    def conn_receivers(gname: str) -> list[str]:
        a = connectors[gname]
        return sorted(
            {f.dst.name for t in a.transitions for f in t.phi.flows if isinstance(f.dst, Port)}
        )

    def one_interaction(gname: str) -> "frozenset | None":
        src = conn_sender(gname)
        dsts = conn_receivers(gname)
        payload: Expr = Var("m0") if rng.random() < 0.7 else Const(rng.randint(1, 9))
        return desugar_multicast(src, payload, [(d, fresh_var()) for d in dsts])

    def chain(k: int, allowed: "set[str] | None") -> object:
        # `allowed` gates the next sender on the previous receivers
        if k <= 0:
            return END
        opts = [g for g in names if allowed is None or conn_sender(g) in allowed]
        if not opts:
            return END
        gname = rng.choice(opts)
        etas = one_interaction(gname)
        cost = len(etas)
        if cost > k:
            return END
        return Prefix(etas, gname, chain(k - cost, set(conn_receivers(gname))))

    def loopable(body: object) -> bool:
        # unfolding must keep the gating: the first sender has to be a
        # receiver of the last interaction of the round
        conns = []
        cur = body
        while isinstance(cur, Prefix):
            conns.append(cur.connector)
            cur = cur.cont
        if not conns:
            return False
        return conn_sender(conns[0]) in conn_receivers(conns[-1])

    main: object
    style = rng.random()
    if style < 0.3:
        # conditional: the decider multicasts its choice, then short tails
        decider_opts = []
        for gname in names:
            src = conn_sender(gname)
            if set(conn_receivers(gname)) == set(procs) - {src}:
                decider_opts.append((gname, src))
        if decider_opts:
            gname, decider = rng.choice(decider_opts)
            others = [x for x in procs if x != decider]
            sel_then = desugar_multicast(decider, "left", others)
            sel_else = desugar_multicast(decider, "right", others)
            main = Cond(
                decider,
                Var("flag"),
                Prefix(sel_then, gname, chain(rng.randint(0, 2), set(others))),
                Prefix(sel_else, gname, chain(rng.randint(0, 2), set(others))),
            )
        else:
            main = chain(budget, None)
    elif style < 0.45:
        body = chain(max(2, budget - 1), None)
        if isinstance(body, Prefix) and loopable(body):
            main = Def("X", _append_call(body, "X"), Call("X"))
        else:
            main = chain(budget, None)
    else:
        main = chain(budget, None)

    init_sigma: dict[tuple[str, str], Value] = {}
    for x in procs:
        init_sigma[(x, "m0")] = f"d{x}"
        init_sigma[(x, "flag")] = rng.random() < 0.5
    return textio.Program(
        {t.name: t for t in (templates[n] for n, _ in bindings.values())},
        bindings,
        connectors,
        init_sigma,
        {},
        normalize(main),
    )


def _append_call(c, name: str):
    if isinstance(c, Prefix):
        return Prefix(c.etas, c.connector, _append_call(c.cont, name))
    return Call(name)


# ---------------------------------------------------------------------------
# Fixtures


def fixture_root() -> Path:
    env = os.environ.get("CHOREO_FIXTURES")
    if env:
        return Path(env)
    return Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> Path:
    return fixture_root() / name


def load_program(name: str, runtime: bool = False) -> "textio.Program":
    return textio.parse_program(fixture_path(name).read_text(), runtime=runtime)


def load_automaton(name: str) -> ConstraintAutomaton:
    return textio.parse_automaton(fixture_path(name).read_text())


def load_expect(name: str) -> dict:
    return json.loads(fixture_path(name).read_text())


def list_fixtures(suffix: str = ".cr") -> list[str]:
    return sorted(p.name for p in fixture_root().iterdir() if p.name.endswith(suffix))

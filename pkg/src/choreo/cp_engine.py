"""Execution of process networks against the same connector automata.

A network maps process names to a local store and a behaviour.  Transitions
are matched port-wise: every output port occurring in a flow constraint must
be the next action of its owning process, and that single action serves all
flows leaving the port, so one send can feed several receivers or cells at
once.  Cell reads see the pre-state, mirroring the choreography matcher.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Mapping

from .core import (
    BOT,
    ConnectorMapping,
    Constraint,
    Flow,
    InputError,
    Label,
    Mem,
    Port,
    Value,
    constraint_key,
    expr_key,
)
from .chor_engine import (
    EvalError,
    Outcome,
    _eval,
    _freeze_astate,
    _mem_cycle,
    _FAIL_PORTS,
    _FAIL_VALUE,
)
from .epp import (
    BCall,
    BCond,
    BDef,
    BEND,
    BEnd,
    Behaviour,
    Branch,
    PortName,
    Recv,
    SelSend,
    Send,
)


def _store_eval(e, store: Mapping[str, Value]) -> Value:
    def get(name: str) -> Value:
        try:
            return store[name]
        except KeyError:
            raise EvalError(f"unbound variable {name}") from None

    return _eval(e, get)


# ---------------------------------------------------------------------------
# Networks


def _freeze_store(store: Mapping[str, Value]) -> tuple:
    return tuple(sorted(store.items()))


@dataclass(frozen=True, slots=True)
class Network:
    """Finite map from process names to (store, behaviour), canonically ordered."""

    procs: tuple

    @staticmethod
    def make(mapping: Mapping[str, tuple[Mapping[str, Value], Behaviour]]) -> "Network":
        items = tuple(
            sorted((q, _freeze_store(store), b) for q, (store, b) in mapping.items())
        )
        return Network(items)

    def proc_map(self) -> dict[str, tuple[dict[str, Value], Behaviour]]:
        return {q: (dict(store), b) for q, store, b in self.procs}

    def names(self) -> list[str]:
        return [q for q, _, _ in self.procs]


@dataclass(frozen=True, slots=True)
class NetConfiguration:
    """A network plus the current state and memory of every connector."""

    net: Network
    astate: tuple

    @staticmethod
    def make(
        net: Network, astate: Mapping[str, tuple[str, Mapping[str, Value]]]
    ) -> "NetConfiguration":
        return NetConfiguration(net, _freeze_astate(astate))

    def astate_map(self) -> dict[str, tuple[str, dict[str, Value]]]:
        return {g: (s, dict(cells)) for g, (s, cells) in self.astate}


@dataclass
class CpProgram:
    """A parsed network file: connectors plus the initial configuration."""

    automata: dict
    init: NetConfiguration


# ---------------------------------------------------------------------------
# Behaviour normalisation and head focusing


def normalize_behaviour(b: Behaviour) -> Behaviour:
    if isinstance(b, Send):
        return Send(b.port, b.expr, normalize_behaviour(b.cont))
    if isinstance(b, Recv):
        return Recv(b.port, b.var, normalize_behaviour(b.cont))
    if isinstance(b, SelSend):
        return SelSend(b.port, b.label, normalize_behaviour(b.cont))
    if isinstance(b, Branch):
        return Branch(
            b.port, tuple((l, normalize_behaviour(c)) for l, c in b.cases)
        )
    if isinstance(b, BCond):
        return BCond(
            b.guard,
            normalize_behaviour(b.then_branch),
            normalize_behaviour(b.else_branch),
        )
    if isinstance(b, BDef):
        cont = normalize_behaviour(b.cont)
        if isinstance(cont, BEnd):
            return BEND
        return BDef(b.name, normalize_behaviour(b.body), cont)
    return b


def normalize_network(net: Network) -> Network:
    """Drop finished processes and collapse definitions over finished bodies."""
    out = {}
    for q, store, b in net.procs:
        nb = normalize_behaviour(b)
        if isinstance(nb, BEnd):
            continue
        out[q] = (dict(store), nb)
    return Network.make(out)


@dataclass
class Focus:
    """The first action of a behaviour and a function rebuilding the whole
    behaviour (with any definitions unfolded on the way) around a replacement
    for that action."""

    action: Behaviour
    rebuild: Callable[[Behaviour], Behaviour]


def head_focus(b: Behaviour) -> "Focus | None":
    return _focus(b, {}, frozenset())


def _focus(b: Behaviour, env: dict, unfolded: frozenset) -> "Focus | None":
    if isinstance(b, BEnd):
        return None
    if isinstance(b, BDef):
        env2 = dict(env)
        env2[b.name] = b.body
        inner = _focus(b.cont, env2, unfolded)
        if inner is None:
            return None
        rb = inner.rebuild
        return Focus(inner.action, lambda x, b=b, rb=rb: BDef(b.name, b.body, rb(x)))
    if isinstance(b, BCall):
        if b.name in env and b.name not in unfolded:
            return _focus(env[b.name], env, unfolded | {b.name})
        return None
    return Focus(b, lambda x: x)


# ---------------------------------------------------------------------------
# Transition matching


def _owner_ports(flows: list[Flow]):
    """Classify flow endpoints; returns None on malformed port names."""
    out_flows: dict[str, list[Flow]] = {}
    in_flow: dict[str, Flow] = {}
    mm: list[Flow] = []
    for f in flows:
        src_pn = PortName.parse(f.src.name) if isinstance(f.src, Port) else None
        dst_pn = PortName.parse(f.dst.name) if isinstance(f.dst, Port) else None
        if isinstance(f.src, Port) and (src_pn is None or src_pn.direction != "o"):
            return None
        if isinstance(f.dst, Port) and (dst_pn is None or dst_pn.direction != "i"):
            return None
        if isinstance(f.src, Port):
            out_flows.setdefault(src_pn.process, []).append(f)
        if isinstance(f.dst, Port):
            if dst_pn.process in in_flow:
                return None
            in_flow[dst_pn.process] = f
        if isinstance(f.src, Mem) and isinstance(f.dst, Mem):
            mm.append(f)
    return out_flows, in_flow, mm


def cp_match_transition(net: Network, phi: Constraint, mu: Mapping[str, Value]):
    """Fire phi against the network.  Returns (net', mu writes) or a failure
    stage string ('ports' for shape, 'value' for a datum premise)."""
    procs = net.proc_map()
    classified = _owner_ports(phi.sorted_flows())
    if classified is None:
        return _FAIL_PORTS
    out_flows, in_flow, mm = classified
    if set(out_flows) & set(in_flow):
        return _FAIL_PORTS
    if _mem_cycle(mm):
        return _FAIL_PORTS

    foci: dict[str, Focus] = {}
    for q in list(out_flows) + list(in_flow):
        if q not in procs:
            return _FAIL_PORTS
        focus = head_focus(procs[q][1])
        if focus is None:
            return _FAIL_PORTS
        foci[q] = focus

    # shape: senders first
    out_value: dict[str, Value] = {}
    out_label: dict[str, "str | None"] = {}
    for p, flows in out_flows.items():
        action = foci[p].action
        port = PortName.parse(flows[0].src.name)
        if any(f.src.name != flows[0].src.name for f in flows):
            return _FAIL_PORTS
        if isinstance(action, Send) and action.port == port:
            out_label[p] = None
        elif isinstance(action, SelSend) and action.port == port:
            out_label[p] = action.label
        else:
            return _FAIL_PORTS
    for q, f in in_flow.items():
        action = foci[q].action
        port = PortName.parse(f.dst.name)
        if isinstance(f.src, Port):
            sender = PortName.parse(f.src.name).process
            lbl = out_label[sender]
            if lbl is None:
                if not (isinstance(action, Recv) and action.port == port):
                    return _FAIL_PORTS
            else:
                if not (
                    isinstance(action, Branch)
                    and action.port == port
                    and lbl in action.case_map()
                ):
                    return _FAIL_PORTS
        else:
            if isinstance(action, Recv) and action.port == port:
                pass
            elif isinstance(action, Branch) and action.port == port:
                pass
            else:
                return _FAIL_PORTS

    # data premises, all against the pre-state
    for f in mm:
        if mu[f.src.name] is BOT:
            return _FAIL_VALUE
    for q, f in in_flow.items():
        if isinstance(f.src, Mem):
            stored = mu[f.src.name]
            if stored is BOT:
                return _FAIL_VALUE
            action = foci[q].action
            if isinstance(action, Branch):
                if not (
                    isinstance(stored, Label) and stored.name in action.case_map()
                ):
                    return _FAIL_VALUE

    # effects
    for p in out_flows:
        action = foci[p].action
        if isinstance(action, Send):
            out_value[p] = _store_eval(action.expr, procs[p][0])
        else:
            out_value[p] = Label(action.label)
    mu_writes: dict[str, Value] = {}
    for f in mm:
        mu_writes[f.dst.name] = mu[f.src.name]
    updates: dict[str, tuple[dict[str, Value], Behaviour]] = {}
    for p, flows in out_flows.items():
        for f in flows:
            if isinstance(f.dst, Mem):
                mu_writes[f.dst.name] = out_value[p]
        action = foci[p].action
        cont = action.cont  # type: ignore[union-attr]
        updates[p] = (procs[p][0], foci[p].rebuild(cont))
    for q, f in in_flow.items():
        delivered = (
            out_value[PortName.parse(f.src.name).process]
            if isinstance(f.src, Port)
            else mu[f.src.name]
        )
        action = foci[q].action
        store = dict(procs[q][0])
        if isinstance(action, Recv):
            store[action.var] = delivered
            updates[q] = (store, foci[q].rebuild(action.cont))
        else:
            assert isinstance(action, Branch) and isinstance(delivered, Label)
            updates[q] = (store, foci[q].rebuild(action.case_map()[delivered.name]))

    new = procs
    new.update(updates)
    return (Network.make(new), mu_writes)


# ---------------------------------------------------------------------------
# Reductions and runs


@dataclass(frozen=True)
class CpReduction:
    kind: str  # "com" | "cond"
    subject: str
    phi: "Constraint | None"
    branch: "str | None"
    pre_state: "str | None"
    post_state: "str | None"
    config: NetConfiguration


def cp_reductions(
    cfg: NetConfiguration, automata: ConnectorMapping
) -> list[CpReduction]:
    astate = cfg.astate_map()
    out: list[CpReduction] = []
    seen: set = set()
    for g in sorted(astate):
        if g not in automata:
            raise InputError(f"no automaton for connector {g}")
        state, mu = astate[g]
        for t in automata[g].outgoing(state):
            m = cp_match_transition(cfg.net, t.phi, mu)
            if isinstance(m, str):
                continue
            net2, mu_writes = m
            mu2 = dict(mu)
            mu2.update(mu_writes)
            astate2 = dict(astate)
            astate2[g] = (t.dst, mu2)
            succ = NetConfiguration.make(normalize_network(net2), astate2)
            key = ("com", g, constraint_key(t.phi), succ)
            if key in seen:
                continue
            seen.add(key)
            out.append(CpReduction("com", g, t.phi, None, state, t.dst, succ))
    procs = cfg.net.proc_map()
    for q in sorted(procs):
        store, b = procs[q]
        focus = head_focus(b)
        if focus is None or not isinstance(focus.action, BCond):
            continue
        v = _store_eval(focus.action.guard, store)
        if not isinstance(v, bool):
            raise EvalError(f"guard at {q} is not a boolean: {v!r}")
        chosen = focus.action.then_branch if v else focus.action.else_branch
        new = dict(procs)
        new[q] = (store, focus.rebuild(chosen))
        succ = NetConfiguration.make(normalize_network(Network.make(new)), astate)
        key = ("cond", q, expr_key(focus.action.guard), v, succ)
        if key in seen:
            continue
        seen.add(key)
        out.append(
            CpReduction("cond", q, None, "then" if v else "else", None, None, succ)
        )
    return out


def cp_terminated(cfg: NetConfiguration) -> bool:
    return not normalize_network(cfg.net).procs


@dataclass
class CpRunResult:
    outcome: Outcome
    final: NetConfiguration
    trace: list[CpReduction]


def cp_run(
    cfg: NetConfiguration,
    automata: ConnectorMapping,
    max_steps: int = 1000,
    rng: "random.Random | None" = None,
) -> CpRunResult:
    trace: list[CpReduction] = []
    current = cfg
    for _ in range(max_steps):
        if cp_terminated(current):
            return CpRunResult(Outcome.TERMINATED, current, trace)
        rs = cp_reductions(current, automata)
        if not rs:
            return CpRunResult(Outcome.STUCK, current, trace)
        r = rs[0] if rng is None else rng.choice(rs)
        trace.append(r)
        current = r.config
    if cp_terminated(current):
        return CpRunResult(Outcome.TERMINATED, current, trace)
    if not cp_reductions(current, automata):
        return CpRunResult(Outcome.STUCK, current, trace)
    return CpRunResult(Outcome.MAX_STEPS, current, trace)


@dataclass
class CpStuckReport:
    classification: str
    details: list[str]


def cp_report_stuck(
    cfg: NetConfiguration, automata: ConnectorMapping
) -> CpStuckReport:
    from .textio import pretty_constraint  # lazy import to avoid a module cycle

    astate = cfg.astate_map()
    details: list[str] = []
    classification = "port-mismatch"
    for g in sorted(astate):
        state, mu = astate[g]
        for t in automata[g].outgoing(state):
            m = cp_match_transition(cfg.net, t.phi, mu)
            if not isinstance(m, str):
                continue
            kind = "value mismatch" if m == _FAIL_VALUE else "port mismatch"
            details.append(
                f"{g} at state {state}: {pretty_constraint(t.phi)}: {kind}"
            )
            if m == _FAIL_VALUE:
                classification = "value-mismatch"
    if not details:
        details.append("no outgoing transitions in any connector state")
    return CpStuckReport(classification, details)


# ---------------------------------------------------------------------------
# Runtime ordering (pruning) and equivalence


def _freeze_env(env: dict) -> tuple:
    return tuple(sorted(env.items(), key=lambda kv: kv[0]))


def behaviour_leq(b1: Behaviour, b2: Behaviour) -> bool:
    """b1 is b2 with some unused branch alternatives removed, compared up to
    unfolding of definitions.  Procedure names are resolved dynamically along
    the walk, which is sound for the uniquely named behaviours produced here."""
    return _bleq(b1, {}, b2, {}, set())


def _bleq(b1, env1: dict, b2, env2: dict, seen: set) -> bool:
    key = (b1, _freeze_env(env1), b2, _freeze_env(env2))
    if key in seen:
        return True
    seen.add(key)
    if isinstance(b1, BDef):
        e = dict(env1)
        e[b1.name] = b1.body
        return _bleq(b1.cont, e, b2, env2, seen)
    if isinstance(b2, BDef):
        e = dict(env2)
        e[b2.name] = b2.body
        return _bleq(b1, env1, b2.cont, e, seen)
    if isinstance(b1, BCall) and b1.name in env1:
        return _bleq(env1[b1.name], env1, b2, env2, seen)
    if isinstance(b2, BCall) and b2.name in env2:
        return _bleq(b1, env1, env2[b2.name], env2, seen)
    if isinstance(b1, BCall) or isinstance(b2, BCall):
        return (
            isinstance(b1, BCall) and isinstance(b2, BCall) and b1.name == b2.name
        )
    if isinstance(b1, BEnd):
        return isinstance(b2, BEnd)
    if isinstance(b1, Send):
        return (
            isinstance(b2, Send)
            and b1.port == b2.port
            and expr_key(b1.expr) == expr_key(b2.expr)
            and _bleq(b1.cont, env1, b2.cont, env2, seen)
        )
    if isinstance(b1, Recv):
        return (
            isinstance(b2, Recv)
            and b1.port == b2.port
            and b1.var == b2.var
            and _bleq(b1.cont, env1, b2.cont, env2, seen)
        )
    if isinstance(b1, SelSend):
        return (
            isinstance(b2, SelSend)
            and b1.port == b2.port
            and b1.label == b2.label
            and _bleq(b1.cont, env1, b2.cont, env2, seen)
        )
    if isinstance(b1, Branch):
        if not (isinstance(b2, Branch) and b1.port == b2.port):
            return False
        cases2 = b2.case_map()
        for label, c1 in b1.cases:
            if label not in cases2:
                return False
            if not _bleq(c1, env1, cases2[label], env2, seen):
                return False
        return True
    if isinstance(b1, BCond):
        return (
            isinstance(b2, BCond)
            and expr_key(b1.guard) == expr_key(b2.guard)
            and _bleq(b1.then_branch, env1, b2.then_branch, env2, seen)
            and _bleq(b1.else_branch, env1, b2.else_branch, env2, seen)
        )
    return False


def pruning_leq(n1: Network, n2: Network) -> bool:
    """n1 is below n2 when every process of n1 appears in n2 with an equal
    store and a behaviour that extends it by unused branches only.  n2 may
    carry extra processes; those are the ones n1 has already finished or
    never needed."""
    m1 = normalize_network(n1).proc_map()
    m2 = normalize_network(n2).proc_map()
    for q, (store1, b1) in m1.items():
        if q not in m2:
            return False
        store2, b2 = m2[q]
        if store1 != store2:
            return False
        if not behaviour_leq(b1, b2):
            return False
    return True


def network_equiv(n1: Network, n2: Network) -> bool:
    return pruning_leq(n1, n2) and pruning_leq(n2, n1)

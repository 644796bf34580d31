"""Endpoint projection: per-process behaviours, the branch merge, and the
translation of a choreography plus connectors into a process network."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from .core import (
    ConstraintAutomaton,
    Expr,
    Flow,
    InputError,
    Interaction,
    Mem,
    Port,
    Constraint,
    ConnectorMapping,
    RecvSel,
    RecvVal,
    Sel,
    Transition,
    ValCom,
    Value,
    pn,
    sorted_etas,
)
from . import core


class MergeError(Exception):
    """The two behaviours disagree somewhere outside a branch label map."""

    def __init__(self, path: tuple[str, ...], reason: str) -> None:
        at = " / ".join(path) if path else "top"
        super().__init__(f"merge undefined at {at}: {reason}")
        self.path = path
        self.reason = reason


class Unprojectable(Exception):
    """Some process has no single behaviour covering both conditional branches."""

    def __init__(self, process: str, cause: MergeError) -> None:
        super().__init__(f"no projection for {process}: {cause}")
        self.process = process
        self.cause = cause


@dataclass(frozen=True, slots=True)
class PortName:
    """A process-side port: direction ('o' or 'i'), owner, and connector."""

    direction: str
    process: str
    connector: str

    def render(self) -> str:
        return f"{self.direction}_{self.process}_{self.connector}"

    def local(self) -> str:
        return f"{self.direction}_{self.connector}"

    @staticmethod
    def parse(text: str) -> "PortName":
        parts = text.split("_")
        if len(parts) != 3 or parts[0] not in ("o", "i"):
            raise InputError(f"not a renamed port: {text}")
        return PortName(parts[0], parts[1], parts[2])


# ---------------------------------------------------------------------------
# Behaviours


class BEnd:
    _instance: "BEnd | None" = None

    def __new__(cls) -> "BEnd":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "0"

    def __hash__(self) -> int:
        return hash("beh-end")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BEnd)


BEND = BEnd()


@dataclass(frozen=True, slots=True)
class Send:
    port: PortName
    expr: Expr
    cont: "Behaviour"


@dataclass(frozen=True, slots=True)
class Recv:
    port: PortName
    var: str
    cont: "Behaviour"


@dataclass(frozen=True, slots=True)
class SelSend:
    port: PortName
    label: str
    cont: "Behaviour"


@dataclass(frozen=True, slots=True)
class Branch:
    port: PortName
    cases: tuple[tuple[str, "Behaviour"], ...]

    @staticmethod
    def make(port: PortName, cases: Mapping[str, "Behaviour"]) -> "Branch":
        return Branch(port, tuple(sorted(cases.items())))

    def case_map(self) -> dict[str, "Behaviour"]:
        return dict(self.cases)


@dataclass(frozen=True, slots=True)
class BCond:
    guard: Expr
    then_branch: "Behaviour"
    else_branch: "Behaviour"


@dataclass(frozen=True, slots=True)
class BDef:
    name: str
    body: "Behaviour"
    cont: "Behaviour"


@dataclass(frozen=True, slots=True)
class BCall:
    name: str


Behaviour = Union[BEnd, Send, Recv, SelSend, Branch, BCond, BDef, BCall]


# ---------------------------------------------------------------------------
# Merge


def merge(b1: Behaviour, b2: Behaviour, _path: tuple[str, ...] = ()) -> Behaviour:
    """The partial branch merge: both sides must agree everywhere except in
    Branch label maps, which are unioned (recursively on shared labels)."""
    if isinstance(b1, BEnd) and isinstance(b2, BEnd):
        return BEND
    if isinstance(b1, BCall) and isinstance(b2, BCall) and b1.name == b2.name:
        return b1
    if isinstance(b1, Send) and isinstance(b2, Send):
        if b1.port == b2.port and b1.expr == b2.expr:
            return Send(b1.port, b1.expr, merge(b1.cont, b2.cont, _path + ("send",)))
    elif isinstance(b1, Recv) and isinstance(b2, Recv):
        if b1.port == b2.port and b1.var == b2.var:
            return Recv(b1.port, b1.var, merge(b1.cont, b2.cont, _path + ("recv",)))
    elif isinstance(b1, SelSend) and isinstance(b2, SelSend):
        if b1.port == b2.port and b1.label == b2.label:
            return SelSend(b1.port, b1.label, merge(b1.cont, b2.cont, _path + ("sel",)))
    elif isinstance(b1, Branch) and isinstance(b2, Branch):
        if b1.port == b2.port:
            m1, m2 = b1.case_map(), b2.case_map()
            merged: dict[str, Behaviour] = {}
            for label in sorted(set(m1) | set(m2)):
                if label in m1 and label in m2:
                    merged[label] = merge(m1[label], m2[label], _path + (f"branch {label}",))
                else:
                    merged[label] = m1.get(label, m2.get(label))  # type: ignore[arg-type]
            return Branch.make(b1.port, merged)
    elif isinstance(b1, BCond) and isinstance(b2, BCond):
        if b1.guard == b2.guard:
            return BCond(
                b1.guard,
                merge(b1.then_branch, b2.then_branch, _path + ("then",)),
                merge(b1.else_branch, b2.else_branch, _path + ("else",)),
            )
    elif isinstance(b1, BDef) and isinstance(b2, BDef):
        if b1.name == b2.name:
            return BDef(
                b1.name,
                merge(b1.body, b2.body, _path + (f"def {b1.name}",)),
                merge(b1.cont, b2.cont, _path + ("in",)),
            )
    raise MergeError(_path, f"{_describe(b1)} vs {_describe(b2)}")


def _describe(b: Behaviour) -> str:
    if isinstance(b, BEnd):
        return "0"
    if isinstance(b, Send):
        return f"send {b.port.local()}"
    if isinstance(b, Recv):
        return f"recv {b.port.local()}"
    if isinstance(b, SelSend):
        return f"sel {b.port.local()} [{b.label}]"
    if isinstance(b, Branch):
        return f"branch {b.port.local()}"
    if isinstance(b, BCond):
        return "if"
    if isinstance(b, BDef):
        return f"def {b.name}"
    return b.name  # type: ignore[union-attr]


# ---------------------------------------------------------------------------
# Projection


def project_behaviour(c, r: str) -> Behaviour:
    """Project the behaviour of process r out of choreography c.

    In an interaction set, r contributes at most one action: its single send
    (multicasts collapse to one output), or its single receive.  Conditionals
    at other processes are covered by merging both branch projections.
    """
    if isinstance(c, core.End):
        return BEND
    if isinstance(c, core.Call):
        return BCall(c.name)
    if isinstance(c, core.Def):
        return BDef(c.name, project_behaviour(c.body, r), project_behaviour(c.cont, r))
    if isinstance(c, core.Cond):
        if c.process == r:
            return BCond(c.guard, project_behaviour(c.then_branch, r), project_behaviour(c.else_branch, r))
        try:
            return merge(project_behaviour(c.then_branch, r), project_behaviour(c.else_branch, r))
        except MergeError as exc:
            raise Unprojectable(r, exc) from exc
    assert isinstance(c, core.Prefix)
    cont = lambda: project_behaviour(c.cont, r)  # noqa: E731
    for eta in sorted_etas(c.etas):
        if isinstance(eta, ValCom) and eta.sender == r:
            return Send(PortName("o", r, c.connector), eta.expr, cont())
        if isinstance(eta, Sel) and eta.sender == r:
            return SelSend(PortName("o", r, c.connector), eta.label, cont())
    for eta in sorted_etas(c.etas):
        if isinstance(eta, ValCom) and eta.receiver == r:
            return Recv(PortName("i", r, c.connector), eta.var, cont())
        if isinstance(eta, RecvVal) and eta.receiver == r:
            return Recv(PortName("i", r, c.connector), eta.var, cont())
        if isinstance(eta, Sel) and eta.receiver == r:
            return Branch.make(PortName("i", r, c.connector), {eta.label: cont()})
        if isinstance(eta, RecvSel) and eta.receiver == r:
            return Branch.make(PortName("i", r, c.connector), {eta.label: cont()})
    return cont()


def projectable(c) -> bool:
    """Whether every process of c has a defined projection.  This never looks
    at any store, so the answer is the same for every initial state."""
    try:
        for r in sorted(pn(c)):
            project_behaviour(c, r)
        return True
    except Unprojectable:
        return False


def project_network(c, sigma: Mapping[tuple[str, str], Value]):
    """Build the network of all projected processes, each with its slice of
    the global store."""
    from .cp_engine import Network

    procs: dict[str, tuple[dict[str, Value], Behaviour]] = {}
    for r in sorted(pn(c)):
        store = {x: v for (p, x), v in sigma.items() if p == r}
        procs[r] = (store, project_behaviour(c, r))
    return Network.make(procs)


def _port_directions(a: ConstraintAutomaton) -> dict[str, str]:
    directions: dict[str, str] = {}
    for t in a.transitions:
        for f in t.phi.flows:
            if isinstance(f.src, Port):
                directions[f.src.name] = "o"
            if isinstance(f.dst, Port):
                directions[f.dst.name] = "i"
    return directions


def project_connectors(g: ConnectorMapping) -> dict[str, ConstraintAutomaton]:
    """Rename every connector's ports into process-side port names.

    A port owned by process p on connector gamma becomes o_p_gamma when the
    automaton only reads from it, i_p_gamma when it only writes to it.  The
    renaming makes all automata pairwise port-disjoint.
    """
    out: dict[str, ConstraintAutomaton] = {}
    for gamma in sorted(g):
        a = g[gamma]
        if "_" in gamma:
            raise InputError(f"connector name {gamma} may not contain '_'")
        for p in a.ports:
            if "_" in p:
                raise InputError(f"process name {p} may not contain '_'")
        directions = _port_directions(a)

        def rename(e, gamma=gamma, directions=directions):
            if isinstance(e, Port):
                d = directions.get(e.name, "o")
                return Port(PortName(d, e.name, gamma).render())
            return e

        transitions = tuple(
            Transition(
                t.src,
                Constraint(frozenset(Flow(rename(f.src), rename(f.dst)) for f in t.phi.flows)),
                t.dst,
            )
            for t in a.transitions
        )
        ports = tuple(
            PortName(directions.get(p, "o"), p, gamma).render() for p in a.ports
        )
        out[gamma] = ConstraintAutomaton(
            gamma, a.states, ports, a.mems, transitions, a.init_state, a.init_mem
        )
    return out

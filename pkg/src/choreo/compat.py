"""Static compatibility checking by symbolic worklist execution, plus the
diamond confluence check on automata.

The checker walks the choreography structurally.  Communication values are
replaced by fresh tokens, so verdicts hold for every initial store.  Each
procedure gets one shared unknown connector-state, fixed at its first call
and required (up to a consistent renaming of tokens) at every later call.
The worklist always replaces an item by strictly smaller items under the
stated size metric, which is asserted on every iteration; this is what makes
the check terminate, and is also why transitions that consume no interaction
(pure cell-to-cell moves) are skipped here: the runtime permits them, but
following them would not shrink anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from .core import (
    Call,
    Cond,
    ConnectorMapping,
    Def,
    End,
    FreshToken,
    InputError,
    Interaction,
    Mem,
    MemorySnapshot,
    Port,
    Prefix,
    RecvSel,
    RecvVal,
    Transition,
    Value,
    connectors_of,
    constraint_key,
)
from .chor_engine import _exposures, _freeze_astate, _match, normalize


class TokenSource:
    def __init__(self) -> None:
        self._n = 0

    def fresh(self) -> FreshToken:
        self._n += 1
        return FreshToken(self._n)


def abstract_match(
    etas: frozenset[Interaction],
    phi,
    mu: MemorySnapshot,
    tokens: "TokenSource | None" = None,
):
    """Value-free variant of the transition matcher: sent data become fresh
    tokens (one per sending process and step).  Returns (etas', mu') or None."""
    tokens = tokens if tokens is not None else TokenSource()
    m = _match(etas, phi, mu, sigma=None, fresh=tokens.fresh)
    if isinstance(m, str):
        return None
    out, _sigma_writes, mu_writes = m
    mu2 = dict(mu)
    mu2.update(mu_writes)
    return (out, mu2)


# ---------------------------------------------------------------------------
# Judgements and verdicts


class StateVar:
    """The connector-state a procedure is entered with: unknown until the
    first call instantiates it."""

    def __init__(self, relevant: "frozenset[str] | None" = None) -> None:
        self.value: "tuple | None" = None
        self.relevant = relevant
        self.body = None


@dataclass(eq=False)
class Judgement:
    gamma: tuple  # ((name, StateVar), ...) innermost last
    astate: tuple  # frozen connector states
    chor: object
    parent: "Judgement | None"
    via: str

    def astate_map(self) -> dict[str, tuple[str, dict[str, Value]]]:
        return {g: (s, dict(cells)) for g, (s, cells) in self.astate}

    def path(self) -> list[str]:
        steps: list[str] = []
        j: "Judgement | None" = self
        while j is not None:
            steps.append(j.via)
            j = j.parent
        return list(reversed(steps))


@dataclass
class CompatYes:
    judgements_checked: int

    @property
    def compatible(self) -> bool:
        return True


@dataclass
class CompatNo:
    judgement: Judgement
    reason: str
    tried: list[str]

    @property
    def compatible(self) -> bool:
        return False


Verdict = Union[CompatYes, CompatNo]


# ---------------------------------------------------------------------------
# Size metric


def size(c) -> int:
    if isinstance(c, Prefix):
        total = sum(1 if isinstance(e, (RecvVal, RecvSel)) else 2 for e in c.etas)
        return total + size(c.cont)
    if isinstance(c, Cond):
        return 1 + size(c.then_branch) + size(c.else_branch)
    if isinstance(c, Def):
        return 1 + size(c.body) + size(c.cont)
    return 1  # End, Call


# ---------------------------------------------------------------------------
# Preconditions


def _calls_in(c, name: str) -> int:
    """Occurrences of Call(name) in c, not counting any under a rebinding."""
    if isinstance(c, Call):
        return 1 if c.name == name else 0
    if isinstance(c, Prefix):
        return _calls_in(c.cont, name)
    if isinstance(c, Cond):
        return _calls_in(c.then_branch, name) + _calls_in(c.else_branch, name)
    if isinstance(c, Def):
        if c.name == name:
            return 0
        return _calls_in(c.body, name) + _calls_in(c.cont, name)
    return 0


def _check_defs_called(c) -> None:
    if isinstance(c, Def):
        if _calls_in(c.cont, c.name) == 0:
            raise InputError(
                f"procedure {c.name} is never called outside its own body"
            )
        _check_defs_called(c.body)
        _check_defs_called(c.cont)
    elif isinstance(c, Prefix):
        _check_defs_called(c.cont)
    elif isinstance(c, Cond):
        _check_defs_called(c.then_branch)
        _check_defs_called(c.else_branch)


def _called_names(c, bound: frozenset = frozenset()) -> set[str]:
    if isinstance(c, Call):
        return set() if c.name in bound else {c.name}
    if isinstance(c, Prefix):
        return _called_names(c.cont, bound)
    if isinstance(c, Cond):
        return _called_names(c.then_branch, bound) | _called_names(c.else_branch, bound)
    if isinstance(c, Def):
        b = bound | {c.name}
        return _called_names(c.body, b) | _called_names(c.cont, b)
    return set()


def _relevant_connectors(body, gamma: tuple) -> frozenset[str]:
    """Connectors a procedure can ever touch: those of its body and of every
    procedure it can reach through calls."""
    out: set[str] = set()
    seen: set[str] = set()
    stack = [body]
    while stack:
        b = stack.pop()
        out |= connectors_of(b)
        for name in _called_names(b):
            if name in seen:
                continue
            seen.add(name)
            for gname, var in reversed(gamma):
                if gname == name and var.body is not None:
                    stack.append(var.body)
                    break
    return frozenset(out)


# ---------------------------------------------------------------------------
# Token-renaming-insensitive comparison of connector states


def _canon_astate(astate: tuple, relevant: "frozenset[str] | None") -> tuple:
    renaming: dict[FreshToken, int] = {}

    def repl(v: Value):
        if isinstance(v, FreshToken):
            if v not in renaming:
                renaming[v] = len(renaming)
            return ("tok", renaming[v])
        return v

    out = []
    for g, (s, cells) in astate:
        if relevant is not None and g not in relevant:
            continue
        out.append((g, (s, tuple((m, repl(v)) for m, v in cells))))
    return tuple(out)


# ---------------------------------------------------------------------------
# The worklist


def check_compatibility(
    c,
    g: ConnectorMapping,
    a0: "Mapping[str, tuple[str, Mapping[str, Value]]] | None" = None,
    modular: bool = False,
) -> Verdict:
    """Decide whether the connectors can always serve every head rewriting of
    the choreography, symbolically.  Yes is sound for deadlock-freedom when
    the automata are confluent; No does not imply a deadlock.

    Procedure calls are not unfolded: each procedure is checked once against
    the connector state of its first call.  With `modular`, that state is
    restricted to the connectors the procedure can reach, so independent
    connectors cannot spoil the comparison.
    """
    c = normalize(c)
    _check_defs_called(c)
    missing = sorted(connectors_of(c) - set(g))
    if missing:
        raise InputError("undefined connectors: " + ", ".join(missing))
    if a0 is None:
        a0 = {name: (a.init_state, a.init_mem_map()) for name, a in g.items()}
    tokens = TokenSource()
    root = Judgement((), _freeze_astate(a0), c, None, "start")
    worklist: list[Judgement] = [root]
    checked = 0
    while worklist:
        j = worklist.pop(0)
        checked += 1
        ch = j.chor
        if isinstance(ch, End):
            continue
        if isinstance(ch, Cond):
            budget = size(ch)
            pushes = [
                Judgement(j.gamma, j.astate, normalize(ch.then_branch), j, f"{ch.process}: then branch"),
                Judgement(j.gamma, j.astate, normalize(ch.else_branch), j, f"{ch.process}: else branch"),
            ]
            for p in pushes:
                assert size(p.chor) < budget
            worklist[0:0] = pushes
            continue
        if isinstance(ch, Def):
            var = StateVar(
                _relevant_connectors(ch.body, j.gamma + ((ch.name, StateVar()),))
                if modular
                else None
            )
            var.body = ch.body
            gamma2 = j.gamma + ((ch.name, var),)
            budget = size(ch)
            pushes = [
                Judgement(gamma2, j.astate, normalize(ch.cont), j, f"after def {ch.name}"),
                Judgement(gamma2, j.astate, normalize(ch.body), j, f"body of {ch.name}"),
            ]
            for p in pushes:
                assert size(p.chor) < budget
            worklist[0:0] = pushes
            continue
        if isinstance(ch, Call):
            var = None
            for name, v in reversed(j.gamma):
                if name == ch.name:
                    var = v
                    break
            if var is None:
                raise InputError(f"call of undefined procedure {ch.name}")
            current = _canon_astate(j.astate, var.relevant)
            if var.value is None:
                var.value = current
            elif var.value != current:
                return CompatNo(
                    j,
                    f"procedure {ch.name} is re-entered with a different connector state",
                    [],
                )
            continue
        assert isinstance(ch, Prefix)
        budget = size(ch)
        astate = j.astate_map()
        successes: list[Judgement] = []
        seen_push: set = set()
        tried: list[str] = []
        for ex in _exposures(ch, {}, frozenset(), False)[0]:
            state, mu = astate[ex.connector]
            for t in g[ex.connector].outgoing(state):
                if all(not isinstance(f.src, Port) and not isinstance(f.dst, Port) for f in t.phi.flows):
                    continue  # consumes nothing; see module docstring
                m = abstract_match(ex.etas, t.phi, mu, tokens)
                desc = _describe(ex, t, state)
                tried.append(desc + (": ok" if m else ": no match"))
                if m is None:
                    continue
                residual, mu2 = m
                succ_chor = normalize(ex.rebuild(residual))
                assert size(succ_chor) < budget
                astate2 = dict(astate)
                astate2[ex.connector] = (t.dst, mu2)
                succ = Judgement(j.gamma, _freeze_astate(astate2), succ_chor, j, desc)
                key = (succ.astate, succ.chor)
                if key in seen_push:
                    continue
                seen_push.add(key)
                successes.append(succ)
        if not successes:
            return CompatNo(
                j, "no connector transition can serve any head interaction set", tried
            )
        worklist[0:0] = successes
    return CompatYes(checked)


def _describe(ex, t: Transition, state: str) -> str:
    from .textio import pretty_constraint, pretty_eta_set

    return (
        f"{ex.connector} {state}->{t.dst} on {pretty_constraint(t.phi)}"
        f" vs {pretty_eta_set(ex.etas)}"
    )


# ---------------------------------------------------------------------------
# Confluence


@dataclass
class ConfluenceVerdict:
    confluent: bool
    witness: "tuple[Transition, Transition] | None"

    def __bool__(self) -> bool:
        return self.confluent


def check_confluence(a) -> ConfluenceVerdict:
    """Diamond check: any two distinct moves from one state can be completed,
    by at most one further move each, to a common state with the same overall
    effect on memory.  The effect comparison is symbolic: a port contributes
    the same datum at its n-th firing along either completion path.

    A False verdict means Unknown: some pair has no one-step completion, so
    the preservation argument does not apply; the automaton may still behave
    diamond-like at greater depth.
    """
    for s in a.states:
        outs = a.outgoing(s)
        for i in range(len(outs)):
            for k in range(i + 1, len(outs)):
                if not _diamond(a, outs[i], outs[k]):
                    return ConfluenceVerdict(False, (outs[i], outs[k]))
    return ConfluenceVerdict(True, None)


def _diamond(a, t1: Transition, t2: Transition) -> bool:
    opts1 = [None] + list(a.outgoing(t1.dst))
    opts2 = [None] + list(a.outgoing(t2.dst))
    for o1 in opts1:
        for o2 in opts2:
            end1 = o1.dst if o1 else t1.dst
            end2 = o2.dst if o2 else t2.dst
            if end1 != end2:
                continue
            path1 = [t1] + ([o1] if o1 else [])
            path2 = [t2] + ([o2] if o2 else [])
            if _sym_effect(a, path1) == _sym_effect(a, path2):
                return True
    return False


def _sym_effect(a, path: list[Transition]) -> tuple:
    mem: dict[str, object] = {m: ("cell", m) for m in a.mems}
    occurrence: dict[str, int] = {}
    for t in path:
        reads = dict(mem)
        port_sym: dict[str, object] = {}
        for f in t.phi.sorted_flows():
            if isinstance(f.src, Port) and f.src.name not in port_sym:
                n = occurrence.get(f.src.name, 0)
                occurrence[f.src.name] = n + 1
                port_sym[f.src.name] = ("port", f.src.name, n)
        for f in t.phi.sorted_flows():
            if isinstance(f.dst, Mem):
                val = (
                    port_sym[f.src.name]
                    if isinstance(f.src, Port)
                    else reads[f.src.name]
                )
                mem[f.dst.name] = val
    return tuple(sorted(mem.items()))

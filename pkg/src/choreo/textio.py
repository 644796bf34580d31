"""Concrete syntax: parsing and printing for .ca, .cr, and .cp files.

This module is the only serialization boundary of the package.  Everything
else works on the in-memory terms from `core`, `epp`, and `cp_engine`.

Grammar sketch (full EBNF in the README):

    program    := automaton* "connectors" "{" binding* "}"
                  "init" "{" assign* "}" "main" "{" chor "}"
    automaton  := "automaton" NAME "{" "states" names ";" "ports" names ";"
                  ("mems" names ";")? "init" STATE meminit? ";" transition* "}"
    transition := STATE "->" STATE "on" flow ("&" flow)* ";"
    flow       := NAME ">" NAME
    binding    := NAME ":" NAME "[" NAME "/" NAME ("," NAME "/" NAME)* "]" ";"
    assign     := NAME "." NAME "=" literal ";"
    chor       := etaset "thru" NAME ";" chor
                | "if" NAME "." expr "then" "{" chor "}" "else" "{" chor "}"
                | "def" NAME "=" "{" chor "}" "in" "{" chor "}"
                | NAME | "0"
    etaset     := eta | "{" eta ("," eta)* "}"
    eta        := NAME "." expr "->" rcvlist
                | NAME "->" rcvlist "[" NAME "]"
                | NAME "." NAME "?" literal          (runtime, opt-in)
                | NAME "?" "[" NAME "]"              (runtime, opt-in)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .core import (
    BOT,
    BinOp,
    Call,
    Cond,
    Const,
    Constraint,
    ConstraintAutomaton,
    Def,
    END,
    Expr,
    Flow,
    FlowEnd,
    FreshToken,
    InputError,
    Interaction,
    Label,
    Mem,
    Port,
    Prefix,
    RecvSel,
    RecvVal,
    Sel,
    Transition,
    ValCom,
    Value,
    ValCom as _ValCom,
    Var,
    check_closed,
    desugar_multicast,
    eta_key,
    instantiate,
    sorted_etas,
    validate_automaton,
    validate_interaction_set,
    value_key,
)
from . import epp
from . import cp_engine


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Tokenizer

_SYMBOLS = ("->", "!=", "{", "}", "(", ")", "[", "]", ";", ",", ".", "&", "=", "<", ">", "+", "-", "?", "/", ":")


@dataclass(frozen=True, slots=True)
class _Tok:
    kind: str  # ident | number | string | sym | eof
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        ch = src[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        if ch == '"':
            j = i + 1
            buf: list[str] = []
            while j < n and src[j] != '"':
                if src[j] == "\\" and j + 1 < n:
                    esc = src[j + 1]
                    buf.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc, esc))
                    j += 2
                else:
                    buf.append(src[j])
                    j += 1
            if j >= n:
                raise ParseError("unterminated string", line, col)
            toks.append(_Tok("string", "".join(buf), line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(_Tok("number", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Tok("ident", src[i:j], line, col))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if src.startswith(sym, i):
                toks.append(_Tok("sym", sym, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, src: str) -> None:
        self.toks = _tokenize(src)
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def fail(self, message: str) -> "ParseError":
        t = self.peek()
        return ParseError(message + (f" (found {t.text!r})" if t.text else " (found end of input)"), t.line, t.col)

    def at_sym(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "sym" and t.text == text

    def at_word(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text == text

    def eat_sym(self, text: str) -> None:
        if not self.at_sym(text):
            raise self.fail(f"expected {text!r}")
        self.next()

    def eat_word(self, text: str) -> None:
        if not self.at_word(text):
            raise self.fail(f"expected {text!r}")
        self.next()

    def ident(self, what: str = "name") -> str:
        t = self.peek()
        if t.kind != "ident":
            raise self.fail(f"expected {what}")
        self.next()
        return t.text

    def name_or_number(self, what: str = "name") -> str:
        t = self.peek()
        if t.kind not in ("ident", "number"):
            raise self.fail(f"expected {what}")
        self.next()
        return t.text

    # -- literals and expressions -----------------------------------------

    def literal(self) -> Value:
        t = self.peek()
        if t.kind == "number":
            self.next()
            return int(t.text)
        if t.kind == "string":
            self.next()
            return t.text
        if t.kind == "ident" and t.text in ("true", "false"):
            self.next()
            return t.text == "true"
        if self.at_sym("["):
            self.next()
            name = self.ident("label")
            self.eat_sym("]")
            return Label(name)
        raise self.fail("expected literal")

    def expr(self) -> Expr:
        return self._expr_or()

    def _expr_or(self) -> Expr:
        e = self._expr_and()
        while self.at_word("or"):
            self.next()
            e = BinOp("or", e, self._expr_and())
        return e

    def _expr_and(self) -> Expr:
        e = self._expr_not()
        while self.at_word("and"):
            self.next()
            e = BinOp("and", e, self._expr_not())
        return e

    def _expr_not(self) -> Expr:
        if self.at_word("not"):
            self.next()
            from .core import UnOp

            return UnOp("not", self._expr_not())
        return self._expr_cmp()

    def _expr_cmp(self) -> Expr:
        e = self._expr_add()
        if self.at_sym("=") or self.at_sym("!=") or self.at_sym("<"):
            op = self.next().text
            return BinOp(op, e, self._expr_add())
        return e

    def _expr_add(self) -> Expr:
        e = self._expr_atom()
        while self.at_sym("+") or self.at_sym("-"):
            op = self.next().text
            e = BinOp(op, e, self._expr_atom())
        return e

    def _expr_atom(self) -> Expr:
        t = self.peek()
        if self.at_sym("("):
            self.next()
            e = self.expr()
            self.eat_sym(")")
            return e
        if t.kind == "ident" and t.text not in ("true", "false"):
            self.next()
            return Var(t.text)
        return Const(self.literal())

    # -- automata ----------------------------------------------------------

    def automaton_block(self) -> ConstraintAutomaton:
        self.eat_word("automaton")
        name = self.ident("automaton name")
        self.eat_sym("{")
        self.eat_word("states")
        states = [self.name_or_number("state")]
        while self.at_sym(","):
            self.next()
            states.append(self.name_or_number("state"))
        self.eat_sym(";")
        self.eat_word("ports")
        ports = [self.ident("port")]
        while self.at_sym(","):
            self.next()
            ports.append(self.ident("port"))
        self.eat_sym(";")
        mems: list[str] = []
        if self.at_word("mems"):
            self.next()
            mems.append(self.ident("cell"))
            while self.at_sym(","):
                self.next()
                mems.append(self.ident("cell"))
            self.eat_sym(";")
        self.eat_word("init")
        init_state = self.name_or_number("state")
        init_mem: dict[str, Value] = {}
        if self.at_sym("{"):
            self.next()
            while not self.at_sym("}"):
                cell = self.ident("cell")
                self.eat_sym("=")
                init_mem[cell] = self.literal()
                if self.at_sym(","):
                    self.next()
            self.eat_sym("}")
        self.eat_sym(";")
        port_set, mem_set = set(ports), set(mems)

        def flow_end(token_text: str, line: int, col: int) -> FlowEnd:
            if token_text in port_set:
                return Port(token_text)
            if token_text in mem_set:
                return Mem(token_text)
            raise ParseError(f"{token_text} is neither a declared port nor a cell", line, col)

        transitions: list[Transition] = []
        while not self.at_sym("}"):
            src = self.name_or_number("state")
            self.eat_sym("->")
            dst = self.name_or_number("state")
            self.eat_word("on")
            flows: list[Flow] = []
            while True:
                t1 = self.peek()
                a = self.name_or_number("port or cell")
                end1 = flow_end(a, t1.line, t1.col)
                self.eat_sym(">")
                t2 = self.peek()
                b = self.name_or_number("port or cell")
                end2 = flow_end(b, t2.line, t2.col)
                flows.append(Flow(end1, end2))
                if self.at_sym("&"):
                    self.next()
                    continue
                break
            self.eat_sym(";")
            transitions.append(Transition(src, Constraint(frozenset(flows)), dst))
        self.eat_sym("}")
        return ConstraintAutomaton.make(name, states, ports, mems, transitions, init_state, init_mem)

    # -- choreographies ----------------------------------------------------

    def chor(self, runtime: bool) -> "core_chor":
        t = self.peek()
        if t.kind == "number" and t.text == "0":
            self.next()
            return END
        if self.at_word("if"):
            self.next()
            proc = self.ident("process")
            self.eat_sym(".")
            guard = self.expr()
            self.eat_word("then")
            self.eat_sym("{")
            then_branch = self.chor(runtime)
            self.eat_sym("}")
            self.eat_word("else")
            self.eat_sym("{")
            else_branch = self.chor(runtime)
            self.eat_sym("}")
            return Cond(proc, guard, then_branch, else_branch)
        if self.at_word("def"):
            self.next()
            name = self.ident("procedure name")
            self.eat_sym("=")
            self.eat_sym("{")
            body = self.chor(runtime)
            self.eat_sym("}")
            self.eat_word("in")
            self.eat_sym("{")
            cont = self.chor(runtime)
            self.eat_sym("}")
            return Def(name, body, cont)
        if t.kind == "ident" and not self._starts_eta():
            self.next()
            return Call(t.text)
        etas = self.etaset(runtime)
        self.eat_word("thru")
        connector = self.ident("connector")
        self.eat_sym(";")
        cont = self.chor(runtime)
        return Prefix(etas, connector, cont)

    def _starts_eta(self) -> bool:
        nxt = self.peek(1)
        return nxt.kind == "sym" and nxt.text in (".", "->", "?")

    def etaset(self, runtime: bool) -> frozenset[Interaction]:
        if self.at_sym("{"):
            open_tok = self.peek()
            self.next()
            etas: set[Interaction] = set()
            while True:
                etas |= self.eta(runtime)
                if self.at_sym(","):
                    self.next()
                    continue
                break
            self.eat_sym("}")
        else:
            open_tok = self.peek()
            etas = set(self.eta(runtime))
        problems = validate_interaction_set(etas)
        if problems:
            raise ParseError("; ".join(problems), open_tok.line, open_tok.col)
        return frozenset(etas)

    def eta(self, runtime: bool) -> frozenset[Interaction]:
        start = self.peek()
        sender = self.ident("process")
        if self.at_sym("."):
            self.next()
            e = self.expr()
            if self.at_sym("?"):
                if not runtime:
                    raise ParseError("runtime terms are not allowed here", start.line, start.col)
                if not isinstance(e, Var):
                    raise self.fail("runtime receive needs a plain variable")
                self.next()
                return frozenset({RecvVal(sender, e.name, self.literal())})
            self.eat_sym("->")
            receivers: list[tuple[str, str]] = []
            for proc, var in self._rcvlist(value_side=True):
                if var is None:
                    if not isinstance(e, Var):
                        raise ParseError(
                            f"receiver {proc} needs an explicit variable", start.line, start.col
                        )
                    var = e.name
                receivers.append((proc, var))
            try:
                return desugar_multicast(sender, e, receivers)
            except InputError as exc:
                raise ParseError(str(exc), start.line, start.col) from exc
        if self.at_sym("?"):
            if not runtime:
                raise ParseError("runtime terms are not allowed here", start.line, start.col)
            self.next()
            self.eat_sym("[")
            label = self.ident("label")
            self.eat_sym("]")
            return frozenset({RecvSel(sender, label)})
        self.eat_sym("->")
        procs = [proc for proc, _ in self._rcvlist(value_side=False)]
        self.eat_sym("[")
        label = self.ident("label")
        self.eat_sym("]")
        try:
            return desugar_multicast(sender, label, procs)
        except InputError as exc:
            raise ParseError(str(exc), start.line, start.col) from exc

    def _rcvlist(self, value_side: bool) -> list[tuple[str, "str | None"]]:
        def one() -> tuple[str, "str | None"]:
            proc = self.ident("receiver")
            if value_side and self.at_sym("."):
                self.next()
                return (proc, self.ident("variable"))
            return (proc, None)

        if self.at_sym("{"):
            self.next()
            out = [one()]
            while self.at_sym(","):
                self.next()
                out.append(one())
            self.eat_sym("}")
            return out
        return [one()]


# ---------------------------------------------------------------------------
# Programs


@dataclass
class Program:
    """A parsed .cr file: automaton templates, connector bindings, initial
    stores and cell overrides, and the main choreography."""

    automata: dict[str, ConstraintAutomaton]
    bindings: dict[str, tuple[str, dict[str, str]]]
    connectors: dict[str, ConstraintAutomaton]
    init_sigma: dict[tuple[str, str], Value]
    mem_overrides: dict[tuple[str, str], Value]
    main: "core_chor"


core_chor = object  # documentation alias; choreography terms come from core


def parse_program(src: str, runtime: bool = False) -> Program:
    p = _Parser(src)
    automata: dict[str, ConstraintAutomaton] = {}
    while p.at_word("automaton"):
        a = p.automaton_block()
        problems = validate_automaton(a)
        if problems:
            raise InputError(f"automaton {a.name}: " + "; ".join(problems))
        automata[a.name] = a
    p.eat_word("connectors")
    p.eat_sym("{")
    bindings: dict[str, tuple[str, dict[str, str]]] = {}
    while not p.at_sym("}"):
        gamma_tok = p.peek()
        gamma = p.ident("connector name")
        p.eat_sym(":")
        template = p.ident("automaton name")
        if template not in automata:
            raise ParseError(f"unknown automaton {template}", gamma_tok.line, gamma_tok.col)
        p.eat_sym("[")
        subst: dict[str, str] = {}
        while True:
            proc = p.ident("process")
            p.eat_sym("/")
            port = p.ident("port")
            subst[port] = proc
            if p.at_sym(","):
                p.next()
                continue
            break
        p.eat_sym("]")
        p.eat_sym(";")
        if gamma in bindings:
            raise ParseError(f"connector {gamma} bound twice", gamma_tok.line, gamma_tok.col)
        bindings[gamma] = (template, subst)
    p.eat_sym("}")
    p.eat_word("init")
    p.eat_sym("{")
    init_sigma: dict[tuple[str, str], Value] = {}
    mem_overrides: dict[tuple[str, str], Value] = {}
    while not p.at_sym("}"):
        owner_tok = p.peek()
        owner = p.ident("process or connector")
        p.eat_sym(".")
        slot = p.ident("variable or cell")
        p.eat_sym("=")
        v = p.literal()
        p.eat_sym(";")
        if owner in bindings:
            mem_overrides[(owner, slot)] = v
        else:
            init_sigma[(owner, slot)] = v
        del owner_tok
    p.eat_sym("}")
    p.eat_word("main")
    p.eat_sym("{")
    main = p.chor(runtime)
    p.eat_sym("}")
    if p.peek().kind != "eof":
        raise p.fail("trailing input after main block")

    connectors: dict[str, ConstraintAutomaton] = {}
    for gamma, (template, subst) in bindings.items():
        inst = instantiate(automata[template], subst, name=gamma)
        over = {cell: v for (g, cell), v in mem_overrides.items() if g == gamma}
        unknown = set(over) - set(inst.mems)
        if unknown:
            raise InputError(f"connector {gamma} has no cell named {', '.join(sorted(unknown))}")
        if over:
            cells = tuple((m, over.get(m, dict(inst.init_mem)[m])) for m in inst.mems)
            inst = ConstraintAutomaton(
                inst.name, inst.states, inst.ports, inst.mems, inst.transitions, inst.init_state, cells
            )
        connectors[gamma] = inst

    problems = check_closed(main)
    if problems:
        raise InputError("; ".join(problems))
    from .core import connectors_of

    missing = sorted(connectors_of(main) - set(connectors))
    if missing:
        raise InputError("undefined connectors: " + ", ".join(missing))
    return Program(automata, bindings, connectors, init_sigma, mem_overrides, main)


def parse_automaton(src: str) -> ConstraintAutomaton:
    """Parse a standalone .ca file holding one automaton block."""
    p = _Parser(src)
    a = p.automaton_block()
    if p.peek().kind != "eof":
        raise p.fail("trailing input after automaton block")
    problems = validate_automaton(a)
    if problems:
        raise InputError(f"automaton {a.name}: " + "; ".join(problems))
    return a


# ---------------------------------------------------------------------------
# Networks (.cp)


def parse_cp(src: str) -> "cp_engine.CpProgram":
    p = _Parser(src)
    automata: dict[str, ConstraintAutomaton] = {}
    while p.at_word("automaton"):
        a = p.automaton_block()
        problems = validate_automaton(a)
        if problems:
            raise InputError(f"automaton {a.name}: " + "; ".join(problems))
        automata[a.name] = a
    p.eat_word("init")
    p.eat_sym("{")
    stores: dict[str, dict[str, Value]] = {}
    overrides: dict[tuple[str, str], Value] = {}
    while not p.at_sym("}"):
        owner = p.ident("process or connector")
        p.eat_sym(".")
        slot = p.ident("variable or cell")
        p.eat_sym("=")
        v = p.literal()
        p.eat_sym(";")
        if owner in automata:
            overrides[(owner, slot)] = v
        else:
            stores.setdefault(owner, {})[slot] = v
    p.eat_sym("}")
    p.eat_word("network")
    p.eat_sym("{")
    procs: dict[str, "epp.Behaviour"] = {}
    while not p.at_sym("}"):
        proc_tok = p.peek()
        proc = p.ident("process")
        if proc in procs:
            raise ParseError(f"process {proc} defined twice", proc_tok.line, proc_tok.col)
        p.eat_sym("{")
        procs[proc] = _behaviour(p, proc)
        p.eat_sym("}")
    p.eat_sym("}")
    if p.peek().kind != "eof":
        raise p.fail("trailing input after network block")

    for (name, cell), v in overrides.items():
        a = automata[name]
        if cell not in a.mems:
            raise InputError(f"automaton {name} has no cell named {cell}")
        cells = tuple((m, v if m == cell else dict(a.init_mem)[m]) for m in a.mems)
        automata[name] = ConstraintAutomaton(
            a.name, a.states, a.ports, a.mems, a.transitions, a.init_state, cells
        )
    net = cp_engine.Network.make({q: (stores.get(q, {}), b) for q, b in procs.items()})
    astate = {name: (a.init_state, a.init_mem_map()) for name, a in automata.items()}
    return cp_engine.CpProgram(automata, cp_engine.NetConfiguration.make(net, astate))


def _port(p: _Parser, proc: str) -> "epp.PortName":
    tok = p.peek()
    name = p.ident("port")
    if "_" not in name or name.split("_", 1)[0] not in ("o", "i"):
        raise ParseError(f"port {name} must look like o_<connector> or i_<connector>", tok.line, tok.col)
    direction, connector = name.split("_", 1)
    return epp.PortName(direction, proc, connector)


def _behaviour(p: _Parser, proc: str) -> "epp.Behaviour":
    t = p.peek()
    if t.kind == "number" and t.text == "0":
        p.next()
        return epp.BEND
    if p.at_word("send"):
        p.next()
        port = _port(p, proc)
        p.eat_sym("<")
        e = p.expr()
        p.eat_sym(">")
        p.eat_sym(";")
        return epp.Send(port, e, _behaviour(p, proc))
    if p.at_word("recv"):
        p.next()
        port = _port(p, proc)
        var = p.ident("variable")
        p.eat_sym(";")
        return epp.Recv(port, var, _behaviour(p, proc))
    if p.at_word("sel"):
        p.next()
        port = _port(p, proc)
        p.eat_sym("[")
        label = p.ident("label")
        p.eat_sym("]")
        p.eat_sym(";")
        return epp.SelSend(port, label, _behaviour(p, proc))
    if p.at_word("branch"):
        p.next()
        port = _port(p, proc)
        p.eat_sym("{")
        cases: dict[str, epp.Behaviour] = {}
        while not p.at_sym("}"):
            lab_tok = p.peek()
            label = p.ident("label")
            if label in cases:
                raise ParseError(f"label {label} offered twice", lab_tok.line, lab_tok.col)
            p.eat_sym(":")
            p.eat_sym("{")
            cases[label] = _behaviour(p, proc)
            p.eat_sym("}")
        p.eat_sym("}")
        if not cases:
            raise p.fail("branch with no labels")
        return epp.Branch.make(port, cases)
    if p.at_word("if"):
        p.next()
        guard = p.expr()
        p.eat_word("then")
        p.eat_sym("{")
        bt = _behaviour(p, proc)
        p.eat_sym("}")
        p.eat_word("else")
        p.eat_sym("{")
        bf = _behaviour(p, proc)
        p.eat_sym("}")
        return epp.BCond(guard, bt, bf)
    if p.at_word("def"):
        p.next()
        name = p.ident("procedure name")
        p.eat_sym("=")
        p.eat_sym("{")
        body = _behaviour(p, proc)
        p.eat_sym("}")
        p.eat_word("in")
        p.eat_sym("{")
        cont = _behaviour(p, proc)
        p.eat_sym("}")
        return epp.BDef(name, body, cont)
    name = p.ident("behaviour")
    return epp.BCall(name)


# ---------------------------------------------------------------------------
# Printing


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    if isinstance(v, Label):
        return f"[{v.name}]"
    if isinstance(v, FreshToken):
        return f"#{v.ident}"
    return "bot"


_PREC = {"or": 1, "and": 2, "=": 4, "!=": 4, "<": 4, "+": 5, "-": 5}


def pretty_expr(e: Expr, parent_prec: int = 0) -> str:
    from .core import UnOp

    if isinstance(e, Const):
        return format_value(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, UnOp):
        inner = pretty_expr(e.operand, 3)
        text = f"not {inner}"
        return f"({text})" if parent_prec > 3 else text
    prec = _PREC[e.op]
    left = pretty_expr(e.left, prec)
    right = pretty_expr(e.right, prec + 1)
    text = f"{left} {e.op} {right}"
    return f"({text})" if parent_prec > prec else text


def pretty_eta_set(etas: frozenset[Interaction]) -> str:
    """Regroup a desugared set back into source syntax, multicasts included."""
    groups: dict[tuple, list[Interaction]] = {}
    for eta in sorted_etas(etas):
        if isinstance(eta, ValCom):
            key = ("v", eta.sender, pretty_expr(eta.expr))
        elif isinstance(eta, Sel):
            key = ("s", eta.sender, eta.label)
        else:
            key = ("r", eta_key(eta))
        groups.setdefault(key, []).append(eta)

    parts: list[str] = []
    for key in sorted(groups):
        members = groups[key]
        head = members[0]
        if isinstance(head, ValCom):
            rcvs = []
            for m in members:
                assert isinstance(m, ValCom)
                if isinstance(m.expr, Var) and m.expr.name == m.var:
                    rcvs.append(m.receiver)
                else:
                    rcvs.append(f"{m.receiver}.{m.var}")
            rhs = rcvs[0] if len(rcvs) == 1 else "{" + ", ".join(rcvs) + "}"
            parts.append(f"{head.sender}.{pretty_expr(head.expr)} -> {rhs}")
        elif isinstance(head, Sel):
            rcvs = [m.receiver for m in members]  # type: ignore[union-attr]
            rhs = rcvs[0] if len(rcvs) == 1 else "{" + ", ".join(rcvs) + "}"
            parts.append(f"{head.sender} -> {rhs} [{head.label}]")
        elif isinstance(head, RecvVal):
            parts.append(f"{head.receiver}.{head.var} ? {format_value(head.value)}")
        else:
            assert isinstance(head, RecvSel)
            parts.append(f"{head.receiver} ? [{head.label}]")
    if len(parts) == 1:
        return parts[0]
    return "{" + ", ".join(parts) + "}"


def pretty_chor(c, indent: int = 0) -> str:
    from .core import Call as CoreCall, Cond as CoreCond, Def as CoreDef, End as CoreEnd, Prefix as CorePrefix

    pad = "  " * indent
    if isinstance(c, CoreEnd):
        return f"{pad}0"
    if isinstance(c, CoreCall):
        return f"{pad}{c.name}"
    if isinstance(c, CorePrefix):
        head = f"{pad}{pretty_eta_set(c.etas)} thru {c.connector};"
        return head + "\n" + pretty_chor(c.cont, indent)
    if isinstance(c, CoreCond):
        return (
            f"{pad}if {c.process}.{pretty_expr(c.guard)} then {{\n"
            + pretty_chor(c.then_branch, indent + 1)
            + f"\n{pad}}} else {{\n"
            + pretty_chor(c.else_branch, indent + 1)
            + f"\n{pad}}}"
        )
    assert isinstance(c, CoreDef)
    return (
        f"{pad}def {c.name} = {{\n"
        + pretty_chor(c.body, indent + 1)
        + f"\n{pad}}} in {{\n"
        + pretty_chor(c.cont, indent + 1)
        + f"\n{pad}}}"
    )


def pretty_constraint(phi: Constraint) -> str:
    return " & ".join(f"{f.src.name} > {f.dst.name}" for f in phi.sorted_flows())


def pretty_automaton(a: ConstraintAutomaton, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    lines = [f"{pad}automaton {a.name} {{"]
    lines.append(f"{inner}states {', '.join(a.states)};")
    lines.append(f"{inner}ports {', '.join(a.ports)};")
    if a.mems:
        lines.append(f"{inner}mems {', '.join(a.mems)};")
    nonbot = [(m, v) for m, v in a.init_mem if not v is BOT]
    if nonbot:
        cells = ", ".join(f"{m} = {format_value(v)}" for m, v in nonbot)
        lines.append(f"{inner}init {a.init_state} {{ {cells} }};")
    else:
        lines.append(f"{inner}init {a.init_state};")
    for t in a.transitions:
        lines.append(f"{inner}{t.src} -> {t.dst} on {pretty_constraint(t.phi)};")
    lines.append(f"{pad}}}")
    return "\n".join(lines)


def pretty_program(prog: Program) -> str:
    parts = [pretty_automaton(a) for a in prog.automata.values()]
    bind_lines = []
    for gamma, (template, subst) in prog.bindings.items():
        pairs = ", ".join(f"{subst[port]}/{port}" for port in prog.automata[template].ports)
        bind_lines.append(f"  {gamma}: {template}[{pairs}];")
    parts.append("connectors {\n" + "\n".join(bind_lines) + "\n}")
    init_lines = [
        f"  {p}.{x} = {format_value(v)};"
        for (p, x), v in sorted(prog.init_sigma.items())
    ] + [
        f"  {g}.{m} = {format_value(v)};"
        for (g, m), v in sorted(prog.mem_overrides.items())
    ]
    parts.append("init {\n" + "\n".join(init_lines) + "\n}")
    parts.append("main {\n" + pretty_chor(prog.main, 1) + "\n}")
    return "\n\n".join(parts) + "\n"


def pretty_behaviour(b: "epp.Behaviour", indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(b, epp.BEnd):
        return f"{pad}0"
    if isinstance(b, epp.BCall):
        return f"{pad}{b.name}"
    if isinstance(b, epp.Send):
        return f"{pad}send {b.port.local()} <{pretty_expr(b.expr)}>;\n" + pretty_behaviour(b.cont, indent)
    if isinstance(b, epp.Recv):
        return f"{pad}recv {b.port.local()} {b.var};\n" + pretty_behaviour(b.cont, indent)
    if isinstance(b, epp.SelSend):
        return f"{pad}sel {b.port.local()} [{b.label}];\n" + pretty_behaviour(b.cont, indent)
    if isinstance(b, epp.Branch):
        lines = [f"{pad}branch {b.port.local()} {{"]
        for label, cont in b.cases:
            lines.append(f"{pad}  {label}: {{")
            lines.append(pretty_behaviour(cont, indent + 2))
            lines.append(f"{pad}  }}")
        lines.append(f"{pad}}}")
        return "\n".join(lines)
    if isinstance(b, epp.BCond):
        return (
            f"{pad}if {pretty_expr(b.guard)} then {{\n"
            + pretty_behaviour(b.then_branch, indent + 1)
            + f"\n{pad}}} else {{\n"
            + pretty_behaviour(b.else_branch, indent + 1)
            + f"\n{pad}}}"
        )
    assert isinstance(b, epp.BDef)
    return (
        f"{pad}def {b.name} = {{\n"
        + pretty_behaviour(b.body, indent + 1)
        + f"\n{pad}}} in {{\n"
        + pretty_behaviour(b.cont, indent + 1)
        + f"\n{pad}}}"
    )


def pretty_cp(prog: "cp_engine.CpProgram") -> str:
    parts = [pretty_automaton(a) for _, a in sorted(prog.automata.items())]
    init_lines = []
    for proc, (store, _b) in sorted(prog.init.net.proc_map().items()):
        for var, v in sorted(store.items()):
            init_lines.append(f"  {proc}.{var} = {format_value(v)};")
    parts.append("init {\n" + "\n".join(init_lines) + "\n}")
    proc_parts = []
    for proc, (_store, b) in sorted(prog.init.net.proc_map().items()):
        proc_parts.append(f"  {proc} {{\n" + pretty_behaviour(b, 2) + f"\n  }}")
    parts.append("network {\n" + "\n".join(proc_parts) + "\n}")
    return "\n\n".join(parts) + "\n"

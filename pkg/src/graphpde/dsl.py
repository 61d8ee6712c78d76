"""Textual PDE definition language.

A definition is a list of statements separated by newlines or ``;``::

    dt(u) + c*dx(u) = 0
    ic u = g
    periodic

Statement forms
---------------
``<expr> = 0``
    An equation.  Arithmetic is infix (``+``, ``-``, ``*``, unary ``-``,
    ``^k`` for an integer ``2 <= k <= 65536``).  ``dt(e)``, ``dx(e)``,
    ``sin(e)``, ``cos(e)`` and ``sq(e)`` (square) use call syntax.
``var u, v``
    Optional explicit declaration of unknown fields.  Without it the
    unknowns are the targets of ``ic`` statements, in order.
``ic u = g`` / ``ic dt(u) = h``
    Initial value (and initial rate for second-order-in-time equations)
    bound to the field slot on the right.
``periodic``
    Periodic boundaries on both sides.
``bc left: <expr> = gL`` / ``bc right: <expr> = gR``
    General boundary condition, the right-hand side is a scalar slot.
    ``bc left: periodic`` is accepted but must be paired with the right side.

Bare identifiers that are not unknowns are scalar coefficient slots.
``s(x)``, ``s(t)`` and ``s(t,x)`` denote coefficient fields depending on
space, time, or separably on both.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

import numpy as np

MAX_EXPONENT = 2**16
FUNCTIONS = ("dt", "dx", "sin", "cos", "sq")
RESERVED = set(FUNCTIONS) | {"ic", "bc", "var", "periodic", "left", "right", "x", "t"}


class PdeSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class PdeDefinitionError(ValueError):
    """Semantic error in an otherwise well-formed definition."""


class UnboundSlotError(PdeDefinitionError):
    pass


# ---------------------------------------------------------------------------
# expression tree


class Expr:
    __slots__ = ()

    def key(self) -> str:
        raise NotImplementedError

    def children(self) -> tuple["Expr", ...]:
        return ()

    def walk(self) -> Iterator["Expr"]:
        yield self
        for c in self.children():
            yield from c.walk()


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def key(self):
        return f"v:{self.name}"


@dataclass(frozen=True)
class Const(Expr):
    slot: str

    def key(self):
        return f"c:{self.slot}"


@dataclass(frozen=True)
class FieldCoef(Expr):
    slot: str
    dependency: str  # "x", "t" or "tx"

    def __post_init__(self):
        if self.dependency not in ("x", "t", "tx"):
            raise PdeDefinitionError(f"bad field dependency {self.dependency!r}")

    def key(self):
        return f"f:{self.slot}:{self.dependency}"


@dataclass(frozen=True)
class _Unary(Expr):
    arg: Expr
    tag = ""

    def key(self):
        return f"{self.tag}({self.arg.key()})"

    def children(self):
        return (self.arg,)


class Dt(_Unary):
    tag = "dt"


class Dx(_Unary):
    tag = "dx"


class Neg(_Unary):
    tag = "neg"


class Square(_Unary):
    tag = "sq"


class Sin(_Unary):
    tag = "sin"


class Cos(_Unary):
    tag = "cos"


@dataclass(frozen=True)
class Pow(Expr):
    """Integer power; expanded into Square/Mul chains by the compiler."""

    base: Expr
    exponent: int

    def __post_init__(self):
        if not 2 <= self.exponent <= MAX_EXPONENT:
            raise PdeDefinitionError(f"exponent {self.exponent} outside [2, {MAX_EXPONENT}]")

    def key(self):
        return f"pow({self.base.key()},{self.exponent})"

    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class _NAry(Expr):
    args: tuple
    tag = ""

    def __post_init__(self):
        flat = []
        for a in self.args:
            if type(a) is type(self):
                flat.extend(a.args)
            else:
                flat.append(a)
        if len(flat) < 2:
            raise PdeDefinitionError(f"{type(self).__name__} needs at least two operands")
        object.__setattr__(self, "args", tuple(sorted(flat, key=lambda e: e.key())))

    def key(self):
        return f"{self.tag}(" + ",".join(a.key() for a in self.args) + ")"

    def children(self):
        return self.args


class Sum(_NAry):
    tag = "sum"


class Prod(_NAry):
    tag = "prod"


def add(*terms: Expr) -> Expr:
    """Sum that tolerates a single operand."""
    return terms[0] if len(terms) == 1 else Sum(terms)


def mul(*factors: Expr) -> Expr:
    return factors[0] if len(factors) == 1 else Prod(factors)


# ---------------------------------------------------------------------------
# definition


@dataclass(frozen=True)
class InitialCondition:
    variable: str
    order: int  # 0: u(0,x), 1: u_t(0,x)
    slot: str


@dataclass(frozen=True)
class BoundarySpec:
    side: str  # "left" / "right"
    kind: str  # "periodic" / "general"
    lhs: Expr | None = None
    value_slot: str | None = None


@dataclass(frozen=True)
class PdeDefinition:
    equations: tuple[Expr, ...]
    variables: tuple[str, ...]
    initial_conditions: tuple[InitialCondition, ...]
    boundary: tuple[BoundarySpec, ...]

    @property
    def periodic(self) -> bool:
        return all(b.kind == "periodic" for b in self.boundary)

    def expressions(self) -> Iterator[Expr]:
        yield from self.equations
        for b in self.boundary:
            if b.lhs is not None:
                yield b.lhs

    def slots(self) -> dict[str, str]:
        """Map slot name -> kind ("scalar", "x", "t", "tx")."""
        out: dict[str, str] = {}
        for ic in self.initial_conditions:
            out[ic.slot] = "x"
        for b in self.boundary:
            if b.value_slot is not None:
                out[b.value_slot] = "scalar"
        for e in self.expressions():
            for node in e.walk():
                if isinstance(node, Const):
                    out[node.slot] = "scalar"
                elif isinstance(node, FieldCoef):
                    out[node.slot] = node.dependency
        return out


# ---------------------------------------------------------------------------
# payloads


@dataclass(eq=False)
class FieldSamples:
    """Scattered samples ``{(coords_j, values_j)}`` of a one-dimensional field.

    ``function`` optionally carries a closed form used by exact solvers; it
    is never persisted.
    """

    coords: np.ndarray
    values: np.ndarray
    function: object = field(default=None, repr=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords)
        self.values = np.asarray(self.values)
        if self.coords.shape != self.values.shape or self.coords.ndim != 1:
            raise PdeDefinitionError("field samples need matching 1-D coords and values")


@dataclass(eq=False)
class SeparableSamples:
    """Samples of a field ``s_T(t) * s_X(x)``."""

    time: FieldSamples
    space: FieldSamples


Payload = Union[float, FieldSamples, SeparableSamples]


def check_payloads(defn: PdeDefinition, payloads: Mapping[str, Payload]) -> None:
    for slot, kind in defn.slots().items():
        if slot not in payloads:
            raise UnboundSlotError(f"slot {slot!r} has no payload")
        p = payloads[slot]
        ok = {
            "scalar": isinstance(p, (int, float, np.floating)),
            "x": isinstance(p, FieldSamples),
            "t": isinstance(p, FieldSamples),
            "tx": isinstance(p, SeparableSamples),
        }[kind]
        if not ok:
            raise UnboundSlotError(f"slot {slot!r} expects a {kind} payload, got {type(p).__name__}")


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>#[^\n]*)|(?P<int>\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*^=(),:;\n])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks, pos, line, col0 = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PdeSyntaxError(f"unexpected character {text[pos]!r}", line, pos - col0 + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            t = m.group()
            toks.append(_Tok("sep" if t in ";\n" else kind, t, line, pos - col0 + 1))
        if m.group() == "\n":
            line, col0 = line + 1, m.end()
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - col0 + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise PdeSyntaxError(msg, tok.line, tok.col)

    def take(self, text: str | None = None, kind: str | None = None) -> _Tok:
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = repr(text) if text is not None else kind
            self.error(f"expected {want}, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "eof"

    # statements -----------------------------------------------------------
    def statements(self) -> list[tuple]:
        out = []
        while self.tok.kind != "eof":
            if self.tok.kind == "sep":
                self.i += 1
                continue
            out.append(self.statement())
            if self.tok.kind not in ("sep", "eof"):
                self.error(f"unexpected {self.tok.text!r} after statement")
        return out

    def statement(self) -> tuple:
        t = self.tok
        if t.text == "var":
            self.i += 1
            names = [self.name()]
            while self.at(","):
                self.i += 1
                names.append(self.name())
            return ("var", names, t)
        if t.text == "ic":
            self.i += 1
            order = 0
            if self.at("dt"):
                self.i += 1
                self.take("(")
                target = self.name()
                self.take(")")
                order = 1
            else:
                target = self.name()
            self.take("=")
            return ("ic", target, order, self.name(), t)
        if t.text == "periodic":
            self.i += 1
            return ("periodic", t)
        if t.text == "bc":
            self.i += 1
            side = self.take(kind="name")
            if side.text not in ("left", "right"):
                self.error("boundary side must be 'left' or 'right'", side)
            self.take(":")
            if self.at("periodic"):
                self.i += 1
                return ("bc", side.text, None, None, t)
            lhs = self.expr()
            self.take("=")
            return ("bc", side.text, lhs, self.name(), t)
        lhs = self.expr()
        self.take("=")
        zero = self.take(kind="int")
        if zero.text != "0":
            self.error("equations must have the form '<expr> = 0'", zero)
        return ("eq", lhs, t)

    def name(self) -> str:
        t = self.take(kind="name")
        if t.text in RESERVED:
            self.error(f"reserved word {t.text!r} used as a name", t)
        return t.text

    # expressions ----------------------------------------------------------
    def expr(self):
        terms = [self.term()]
        while self.tok.text in ("+", "-"):
            op = self.take().text
            t = self.term()
            terms.append(t if op == "+" else ("neg", t))
        return terms[0] if len(terms) == 1 else ("sum", terms)

    def term(self):
        factors = [self.unary()]
        while self.at("*"):
            self.i += 1
            factors.append(self.unary())
        return factors[0] if len(factors) == 1 else ("prod", factors)

    def unary(self):
        if self.at("-"):
            self.i += 1
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.at("^"):
            self.i += 1
            k = self.take(kind="int")
            if not 2 <= int(k.text) <= MAX_EXPONENT:
                self.error(f"exponent must lie in [2, {MAX_EXPONENT}]", k)
            base = ("pow", base, int(k.text))
            if self.at("^"):
                self.error("chained exponents are ambiguous; use parentheses")
        return base

    def atom(self):
        t = self.tok
        if t.text == "(":
            self.i += 1
            e = self.expr()
            self.take(")")
            return e
        if t.kind != "name":
            self.error(f"expected an operand, found {t.text or 'end of input'!r}")
        self.i += 1
        if t.text in FUNCTIONS:
            self.take("(")
            arg = self.expr()
            self.take(")")
            return (t.text, arg)
        if t.text in RESERVED:
            self.error(f"reserved word {t.text!r} used as a name", t)
        if self.at("("):
            self.i += 1
            deps = [self.take(kind="name").text]
            while self.at(","):
                self.i += 1
                deps.append(self.take(kind="name").text)
            close = self.take(")")
            dep = "".join(deps)
            if dep not in ("x", "t", "tx"):
                self.error(f"field dependency must be (x), (t) or (t,x), got ({','.join(deps)})", close)
            return ("field", t.text, dep, t)
        return ("name", t.text, t)


def _build(raw, variables: set[str], kinds: dict[str, str]) -> Expr:
    tag = raw[0]
    if tag == "name":
        _, name, tok = raw
        if name in variables:
            return Var(name)
        _claim(kinds, name, "scalar", tok)
        return Const(name)
    if tag == "field":
        _, name, dep, tok = raw
        if name in variables:
            raise PdeSyntaxError(f"unknown field {name!r} used as a coefficient field", tok.line, tok.col)
        _claim(kinds, name, dep, tok)
        return FieldCoef(name, dep)
    if tag == "sum":
        return Sum(tuple(_build(r, variables, kinds) for r in raw[1]))
    if tag == "prod":
        return Prod(tuple(_build(r, variables, kinds) for r in raw[1]))
    if tag == "pow":
        return Pow(_build(raw[1], variables, kinds), raw[2])
    cls = {"neg": Neg, "dt": Dt, "dx": Dx, "sin": Sin, "cos": Cos, "sq": Square}[tag]
    return cls(_build(raw[1], variables, kinds))


def _claim(kinds: dict[str, str], name: str, kind: str, tok: _Tok):
    prev = kinds.setdefault(name, kind)
    if prev != kind:
        raise PdeSyntaxError(f"symbol {name!r} used both as {prev} and {kind}", tok.line, tok.col)


def parse(text: str, payloads: Mapping[str, Payload] | None = None) -> PdeDefinition:
    """Parse DSL text into a validated :class:`PdeDefinition`.

    When ``payloads`` is given every slot must be bound in it.
    """
    stmts = _Parser(text).statements()
    declared = [n for s in stmts if s[0] == "var" for n in s[1]]
    ic_stmts = [s for s in stmts if s[0] == "ic"]
    if declared:
        variables = list(dict.fromkeys(declared))
        for s in ic_stmts:
            if s[1] not in variables:
                tok = s[4]
                raise PdeSyntaxError(f"undeclared unknown {s[1]!r}", tok.line, tok.col)
    else:
        variables = list(dict.fromkeys(s[1] for s in ic_stmts if s[2] == 0))
    varset = set(variables)

    kinds: dict[str, str] = {v: "unknown" for v in variables}
    ics, seen_ic = [], set()
    for _, target, order, slot, tok in ic_stmts:
        if (target, order) in seen_ic:
            raise PdeSyntaxError(f"duplicate initial condition for {target!r}", tok.line, tok.col)
        seen_ic.add((target, order))
        _claim(kinds, slot, "x", tok)
        ics.append(InitialCondition(target, order, slot))

    equations = tuple(_build(s[1], varset, kinds) for s in stmts if s[0] == "eq")
    if not equations:
        raise PdeDefinitionError("definition has no equation")

    periodic_stmt = [s for s in stmts if s[0] == "periodic"]
    bcs = [s for s in stmts if s[0] == "bc"]
    boundary = []
    if periodic_stmt and bcs:
        tok = bcs[0][4]
        raise PdeSyntaxError("'periodic' cannot be combined with 'bc' statements", tok.line, tok.col)
    if periodic_stmt:
        boundary = [BoundarySpec("left", "periodic"), BoundarySpec("right", "periodic")]
    for _, side, lhs, slot, tok in bcs:
        if lhs is None:
            boundary.append(BoundarySpec(side, "periodic"))
            continue
        _claim(kinds, slot, "scalar", tok)
        boundary.append(BoundarySpec(side, "general", _build(lhs, varset, kinds), slot))
    per = {b.side for b in boundary if b.kind == "periodic"}
    if per and per != {"left", "right"} or (per and len(boundary) != 2):
        tok = (bcs or periodic_stmt)[0][-1]
        raise PdeSyntaxError("periodic boundary must be used on both sides and nowhere else", tok.line, tok.col)
    if not boundary:
        raise PdeDefinitionError("no boundary condition given (use 'periodic' or 'bc' statements)")

    defn = PdeDefinition(equations, tuple(variables), tuple(ics), tuple(boundary))
    validate_definition(defn)
    if payloads is not None:
        check_payloads(defn, payloads)
    return defn


def validate_definition(defn: PdeDefinition) -> None:
    vars_ = set(defn.variables)
    if not vars_:
        raise PdeDefinitionError("no unknown field declared")
    for v in defn.variables:
        if not any(ic.variable == v and ic.order == 0 for ic in defn.initial_conditions):
            raise PdeDefinitionError(f"unknown {v!r} has no initial condition")
    for e in defn.expressions():
        for node in e.walk():
            if isinstance(node, Var) and node.name not in vars_:
                raise PdeDefinitionError(f"undeclared unknown {node.name!r}")
    for ic in defn.initial_conditions:
        if ic.order == 1 and not any(
            isinstance(n, Dt) and isinstance(n.arg, Dt) for e in defn.equations for n in e.walk()
        ):
            raise PdeDefinitionError(f"initial rate for {ic.variable!r} given but no equation is second order in time")


# ---------------------------------------------------------------------------
# formatting


def _fmt(e: Expr, level: int) -> str:
    """level 0: sum context, 1: product factor, 2: power base / unary operand."""
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return e.slot
    if isinstance(e, FieldCoef):
        return f"{e.slot}({'t,x' if e.dependency == 'tx' else e.dependency})"
    if isinstance(e, (Dt, Dx, Sin, Cos, Square)):
        return f"{e.tag}({_fmt(e.arg, 0)})"
    if isinstance(e, Pow):
        s = f"{_fmt(e.base, 2)}^{e.exponent}"
        return f"({s})" if level >= 2 else s
    if isinstance(e, Neg):
        s = "-" + _fmt(e.arg, 2)
        return f"({s})" if level >= 2 else s
    if isinstance(e, Prod):
        s = "*".join(_fmt(a, 1) for a in e.args)
        return f"({s})" if level >= 2 else s
    if isinstance(e, Sum):
        parts = [_fmt(e.args[0], 0)]
        for a in e.args[1:]:
            if isinstance(a, Neg):
                parts.append("- " + _fmt(a.arg, 1))
            else:
                parts.append("+ " + _fmt(a, 0))
        s = " ".join(parts)
        return f"({s})" if level >= 1 else s
    raise TypeError(f"cannot format {e!r}")


def format_expr(e: Expr) -> str:
    return _fmt(e, 0)


def format(defn: PdeDefinition) -> str:  # noqa: A001 - mirrors parse()
    lines = [f"{format_expr(eq)} = 0" for eq in defn.equations]
    inferred = [ic.variable for ic in defn.initial_conditions if ic.order == 0]
    if list(dict.fromkeys(inferred)) != list(defn.variables):
        lines.insert(0, "var " + ", ".join(defn.variables))
    for ic in defn.initial_conditions:
        target = ic.variable if ic.order == 0 else f"dt({ic.variable})"
        lines.append(f"ic {target} = {ic.slot}")
    if defn.periodic:
        lines.append("periodic")
    else:
        for b in defn.boundary:
            lines.append(f"bc {b.side}: {format_expr(b.lhs)} = {b.value_slot}")
    return "\n".join(lines) + "\n"

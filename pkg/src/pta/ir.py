"""Mini intermediate language: types, instructions, parser, validation, call graph.

Grammar (one instruction per line; ``#`` starts a comment):

    program  := fun+
    fun      := "fun" NAME "(" regs? ")" ":" INT "{" instr+ "}"
    instr    := REG "=" "alloc" INT               # INT in {1, 2}
              | REG "=" "cast" TYPE "," REG
              | REG "=" "load" TYPE REG           # TYPE must be a pointer
              | "store" REG "," TYPE REG          # TYPE must be a pointer
              | REG "=" "gep" TYPE REG "," FIELD  # TYPE must be a pointer
              | "(" regs? ")" "=" NAME "(" regs? ")"
              | "return" regs?
    TYPE     := ("int" | "float" | "char") "*"{0..2}
    FIELD    := "a" | "b"

Instruction order inside a function carries no meaning: the analyses are
flow-insensitive and treat every body as a bag.  Calls are direct, call
arity must match the callee, and the call graph must be acyclic.  A register
may be assigned more than once; reading a register that is never assigned
anywhere in its function is a validation warning, not an error.

The language has no globals; programs that need shared objects thread them
through extra arguments from a root function.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

BASE_TYPES = ("char", "float", "int")
FIELDS = ("a", "b")
ALLOC_SIZES = (1, 2)

KEYWORDS = frozenset(
    {"fun", "alloc", "cast", "load", "store", "gep", "return"} | set(BASE_TYPES)
)


class ParseError(Exception):
    """Malformed program text; carries the offending source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class ValidationError(Exception):
    """Structurally well-formed program that violates a language invariant."""

    def __init__(self, message: str, function: str | None = None):
        prefix = f"function {function}: " if function else ""
        super().__init__(prefix + message)
        self.message = message
        self.function = function


@dataclass(frozen=True, order=True)
class Type:
    """A base type with pointer depth 0..2, e.g. ``int**`` is Type('int', 2)."""

    base: str
    depth: int

    def __post_init__(self):
        if self.base not in BASE_TYPES or not 0 <= self.depth <= 2:
            raise ValueError(f"bad type {self.base}{'*' * self.depth}")

    @property
    def is_pointer(self) -> bool:
        return self.depth > 0

    def pointee(self) -> Type:
        if not self.is_pointer:
            raise ValueError(f"{self} is not a pointer")
        return Type(self.base, self.depth - 1)

    def __str__(self) -> str:
        return self.base + "*" * self.depth


# ---------------------------------------------------------------------------
# Instructions
# ---------------------------------------------------------------------------
# Every instruction carries a ``uid`` unique within the program (assignment
# order: position in the source text, 1-based).  The uid doubles as the
# allocation-site identifier in analysis output.


@dataclass(frozen=True)
class Alloc:
    uid: int
    dest: str
    size: int


@dataclass(frozen=True)
class Cast:
    uid: int
    dest: str
    ty: Type
    src: str


@dataclass(frozen=True)
class Load:
    uid: int
    dest: str
    ty: Type
    src: str


@dataclass(frozen=True)
class Store:
    uid: int
    src: str
    ty: Type
    dest: str  # pointer written through


@dataclass(frozen=True)
class Gep:
    uid: int
    dest: str
    ty: Type
    src: str
    field: str


@dataclass(frozen=True)
class Call:
    uid: int
    dests: tuple[str, ...]
    callee: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Return:
    uid: int
    regs: tuple[str, ...]


Instruction = Alloc | Cast | Load | Store | Gep | Call | Return


@dataclass(frozen=True)
class Function:
    name: str
    formals: tuple[str, ...]
    return_arity: int
    body: tuple[Instruction, ...]

    def returns(self) -> list[Return]:
        return [i for i in self.body if isinstance(i, Return)]

    def calls(self) -> list[Call]:
        return [i for i in self.body if isinstance(i, Call)]


@dataclass(frozen=True)
class Program:
    functions: tuple[Function, ...]

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def function_names(self) -> list[str]:
        return [f.name for f in self.functions]

    def instructions(self) -> list[tuple[Function, Instruction]]:
        return [(f, i) for f in self.functions for i in f.body]

    def instruction(self, uid: int) -> Instruction:
        for _, i in self.instructions():
            if i.uid == uid:
                return i
        raise KeyError(uid)

    def alloc_sizes(self) -> dict[int, int]:
        """Map allocation-site uid to declared size."""
        return {
            i.uid: i.size for _, i in self.instructions() if isinstance(i, Alloc)
        }


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _format_instruction(i: Instruction) -> str:
    match i:
        case Alloc(_, dest, size):
            return f"{dest} = alloc {size}"
        case Cast(_, dest, ty, src):
            return f"{dest} = cast {ty}, {src}"
        case Load(_, dest, ty, src):
            return f"{dest} = load {ty} {src}"
        case Store(_, src, ty, dest):
            return f"store {src}, {ty} {dest}"
        case Gep(_, dest, ty, src, fld):
            return f"{dest} = gep {ty} {src}, {fld}"
        case Call(_, dests, callee, args):
            return f"({', '.join(dests)}) = {callee}({', '.join(args)})"
        case Return(_, regs):
            return "return " + ", ".join(regs) if regs else "return"
    raise TypeError(f"unknown instruction {i!r}")


def print_program(p: Program) -> str:
    """Canonical text form; ``parse_program`` of the result is equal to `p`."""
    out = []
    for f in p.functions:
        out.append(f"fun {f.name}({', '.join(f.formals)}): {f.return_arity} {{")
        for i in f.body:
            out.append("  " + _format_instruction(i))
        out.append("}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\*{0,2}|\d+|[(),={}#]|\S")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass
class _Token:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for m in _TOKEN_RE.finditer(line):
            if m.group() == "#":
                break
            tokens.append(_Token(m.group(), lineno, m.start() + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.uid = 0

    # -- token helpers ----------------------------------------------------

    def _error(self, expected: str) -> ParseError:
        if self.pos < len(self.tokens):
            t = self.tokens[self.pos]
            return ParseError(f"expected {expected}, found '{t.text}'", t.line, t.col)
        last = self.tokens[-1] if self.tokens else _Token("", 1, 1)
        return ParseError(f"expected {expected}, found end of input", last.line, last.col)

    def peek(self) -> str | None:
        return self.tokens[self.pos].text if self.pos < len(self.tokens) else None

    def take(self, expected: str) -> _Token:
        if self.peek() != expected:
            raise self._error(f"'{expected}'")
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def name(self, what: str = "name") -> str:
        t = self.peek()
        if t is None or not _NAME_RE.match(t) or t in KEYWORDS:
            raise self._error(what)
        self.pos += 1
        return t

    def register(self) -> str:
        return self.name("register")

    def integer(self, what: str = "integer") -> int:
        t = self.peek()
        if t is None or not t.isdigit():
            raise self._error(what)
        self.pos += 1
        return int(t)

    def type_(self, pointer_only: bool) -> Type:
        t = self.peek()
        if t is not None:
            m = re.match(r"(char|float|int)(\*{0,2})\Z", t)
            if m:
                ty = Type(m.group(1), len(m.group(2)))
                if pointer_only and not ty.is_pointer:
                    raise self._error("pointer type")
                self.pos += 1
                return ty
        raise self._error("pointer type" if pointer_only else "type")

    def reg_list(self, closers: tuple[str, ...]) -> tuple[str, ...]:
        regs = []
        if self.peek() in closers:
            return ()
        regs.append(self.register())
        while self.peek() == ",":
            self.take(",")
            regs.append(self.register())
        return tuple(regs)

    # -- grammar ----------------------------------------------------------

    def next_uid(self) -> int:
        self.uid += 1
        return self.uid

    def program(self) -> Program:
        functions = []
        while self.peek() is not None:
            functions.append(self.function())
        if not functions:
            raise ParseError("no functions", 1, 1)
        return Program(tuple(functions))

    def function(self) -> Function:
        self.take("fun")
        fname = self.name("function name")
        self.take("(")
        formals = self.reg_list((")",))
        self.take(")")
        self.take(":")
        arity = self.integer("return arity")
        self.take("{")
        body = []
        while self.peek() != "}":
            if self.peek() is None:
                raise self._error("'}'")
            body.append(self.instruction())
        self.take("}")
        return Function(fname, formals, arity, tuple(body))

    def instruction(self) -> Instruction:
        t = self.peek()
        if t == "store":
            self.take("store")
            src = self.register()
            self.take(",")
            ty = self.type_(pointer_only=True)
            dest = self.register()
            return Store(self.next_uid(), src, ty, dest)
        if t == "return":
            self.take("return")
            regs = self.reg_list(("}",))
            return Return(self.next_uid(), regs)
        if t == "(":
            self.take("(")
            dests = self.reg_list((")",))
            self.take(")")
            self.take("=")
            callee = self.name("callee name")
            self.take("(")
            args = self.reg_list((")",))
            self.take(")")
            return Call(self.next_uid(), dests, callee, args)
        dest = self.register()
        self.take("=")
        op = self.peek()
        if op == "alloc":
            self.take("alloc")
            if self.peek() not in ("1", "2"):
                raise self._error("alloc size 1 or 2")
            size = self.integer()
            return Alloc(self.next_uid(), dest, size)
        if op == "cast":
            self.take("cast")
            ty = self.type_(pointer_only=False)
            self.take(",")
            src = self.register()
            return Cast(self.next_uid(), dest, ty, src)
        if op == "load":
            self.take("load")
            ty = self.type_(pointer_only=True)
            src = self.register()
            return Load(self.next_uid(), dest, ty, src)
        if op == "gep":
            self.take("gep")
            ty = self.type_(pointer_only=True)
            src = self.register()
            self.take(",")
            fld = self.peek()
            if fld not in FIELDS:
                raise self._error("field 'a' or 'b'")
            self.pos += 1
            return Gep(self.next_uid(), dest, ty, src, fld)
        raise self._error("'alloc', 'cast', 'load' or 'gep'")


def parse_program(text: str) -> Program:
    """Parse text into a Program; raises ParseError on malformed input."""
    return _Parser(text).program()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    instruction_counts: dict[str, int]
    warnings: list[str] = field(default_factory=list)


def _assigned_registers(f: Function) -> set[str]:
    assigned = set(f.formals)
    for i in f.body:
        match i:
            case Alloc() | Cast() | Load() | Gep():
                assigned.add(i.dest)
            case Call():
                assigned.update(i.dests)
    return assigned


def _read_registers(f: Function) -> set[str]:
    read = set()
    for i in f.body:
        match i:
            case Cast() | Load():
                read.add(i.src)
            case Gep():
                read.add(i.src)
            case Store():
                read.update((i.src, i.dest))
            case Call():
                read.update(i.args)
            case Return():
                read.update(i.regs)
    return read


def validate_program(p: Program) -> ValidationReport:
    """Check direct-call resolution, arity agreement and acyclicity.

    Raises ValidationError naming the offending function; returns a report
    with per-function instruction counts and read-before-assignment warnings.
    """
    names = p.function_names()
    seen = set()
    for n in names:
        if n in seen:
            raise ValidationError(f"duplicate function name {n}")
        seen.add(n)
    by_name = {f.name: f for f in p.functions}

    report = ValidationReport(instruction_counts={})
    for f in p.functions:
        report.instruction_counts[f.name] = len(f.body)
        if len(set(f.formals)) != len(f.formals):
            raise ValidationError("duplicate formal argument", f.name)
        if not f.returns():
            raise ValidationError("missing return", f.name)
        for r in f.returns():
            if len(r.regs) != f.return_arity:
                raise ValidationError(
                    f"return carries {len(r.regs)} values, declared {f.return_arity}",
                    f.name,
                )
        for c in f.calls():
            callee = by_name.get(c.callee)
            if callee is None:
                raise ValidationError(f"unknown callee {c.callee}", f.name)
            if len(c.args) != len(callee.formals):
                raise ValidationError(
                    f"call to {c.callee} passes {len(c.args)} arguments, "
                    f"expected {len(callee.formals)}",
                    f.name,
                )
            if len(c.dests) != callee.return_arity:
                raise ValidationError(
                    f"call to {c.callee} binds {len(c.dests)} results, "
                    f"expected {callee.return_arity}",
                    f.name,
                )
        for reg in sorted(_read_registers(f) - _assigned_registers(f)):
            report.warnings.append(
                f"function {f.name}: register {reg} is read but never assigned"
            )

    _check_acyclic(p)
    return report


def _check_acyclic(p: Program) -> None:
    edges: dict[str, set[str]] = {f.name: set() for f in p.functions}
    for f in p.functions:
        for c in f.calls():
            edges[f.name].add(c.callee)

    state: dict[str, int] = {}  # 0 in-progress, 1 done
    stack: list[str] = []

    def visit(n: str) -> None:
        if state.get(n) == 1:
            return
        if state.get(n) == 0:
            cycle = stack[stack.index(n):] + [n]
            raise ValidationError(f"recursion cycle [{', '.join(cycle[:-1])}]", n)
        state[n] = 0
        stack.append(n)
        for m in sorted(edges[n]):
            visit(m)
        stack.pop()
        state[n] = 1

    for n in sorted(edges):
        visit(n)


# ---------------------------------------------------------------------------
# Call graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CallGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, int], ...]  # (caller, callee, call uid)
    topo_order: tuple[str, ...]  # callers before callees

    @property
    def reverse_topo_order(self) -> tuple[str, ...]:
        """Every callee before its caller."""
        return tuple(reversed(self.topo_order))

    def callees(self, fn: str) -> set[str]:
        return {c for f, c, _ in self.edges if f == fn}

    def transitive_callees(self, fn: str) -> set[str]:
        out: set[str] = set()
        work = [fn]
        while work:
            for c in self.callees(work.pop()):
                if c not in out:
                    out.add(c)
                    work.append(c)
        return out


def build_call_graph(p: Program) -> CallGraph:
    """Call graph with a deterministic topological order (lexicographic ties)."""
    nodes = tuple(sorted(p.function_names()))
    edges = tuple(
        sorted((f.name, c.callee, c.uid) for f in p.functions for c in f.calls())
    )
    succ: dict[str, set[str]] = {n: set() for n in nodes}
    indeg: dict[str, int] = {n: 0 for n in nodes}
    for caller, callee, _ in edges:
        if callee not in succ[caller]:
            succ[caller].add(callee)
            indeg[callee] += 1
    ready = sorted(n for n in nodes if indeg[n] == 0)
    order: list[str] = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in sorted(succ[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort()
    if len(order) != len(nodes):
        raise ValidationError("call graph is cyclic")
    return CallGraph(nodes, edges, tuple(order))

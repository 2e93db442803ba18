"""Vectorized tensor IR: expression/statement trees, lane discipline, and the
textual s-expression format.

Expressions are immutable; lane counts are computable bottom-up.  Ramp
concatenates an arithmetic progression of vectors, Broadcast concatenates
copies, and VectorReduceAdd sums contiguous lane groups down to a stated
number of result lanes.  Index expressions are i32 with Euclidean division
and modulus.

Shuffle carries a literal index sequence; index -1 selects a constant zero
lane (codegen would realize it by prepending one zero lane to the source).
"""

from __future__ import annotations

from dataclasses import dataclass, field

SCALAR_KINDS = ("bf16", "f16", "f32", "i32")
LOCATIONS = ("mem", "amx", "wmma")
BOPS = ("+", "-", "*", "/", "%")

_BOP_ATOMS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "mod": "%"}
_ATOM_OF_BOP = {v: k for k, v in _BOP_ATOMS.items()}

_MOVE_ATOMS = {
    "mem2amx": ("mem", "amx"),
    "amx2mem": ("amx", "mem"),
    "mem2wmma": ("mem", "wmma"),
    "wmma2mem": ("wmma", "mem"),
}
_ATOM_OF_MOVE = {v: k for k, v in _MOVE_ATOMS.items()}


class IRError(Exception):
    pass


class LaneMismatch(IRError):
    def __init__(self, msg, path=""):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


class KindMismatch(IRError):
    pass


class UnknownBuffer(IRError):
    def __init__(self, name):
        super().__init__(f"undeclared buffer {name!r}")
        self.name = name


@dataclass(frozen=True)
class VecType:
    kind: str
    lanes: int

    def __post_init__(self):
        assert self.kind in SCALAR_KINDS, self.kind
        assert self.lanes >= 1


class Expr:
    """Base for all expression variants."""


@dataclass(frozen=True)
class Imm(Expr):
    kind: str
    value: float | int


@dataclass(frozen=True)
class Var(Expr):
    """Scalar i32 symbol: a loop index or base offset."""

    name: str


@dataclass(frozen=True)
class Load(Expr):
    buffer: str
    vtype: VecType
    index: Expr


@dataclass(frozen=True)
class Cast(Expr):
    vtype: VecType
    operand: Expr


@dataclass(frozen=True)
class Bop(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Ramp(Expr):
    base: Expr
    stride: Expr
    steps: int


@dataclass(frozen=True)
class Broadcast(Expr):
    operand: Expr
    copies: int


@dataclass(frozen=True)
class VectorReduceAdd(Expr):
    """Sums contiguous groups of the operand down to `result_lanes` lanes.

    The integer argument is the number of RESULT lanes; the group width is
    the derived `reduction_factor`.
    """

    result_lanes: int
    operand: Expr

    def reduction_factor(self):
        return lanes_of(self.operand) // self.result_lanes


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple


@dataclass(frozen=True)
class LocToLoc(Expr):
    src: str
    dst: str
    operand: Expr


@dataclass(frozen=True)
class ExprVar(Expr):
    """Reference to a temporary buffer holding the materialized operand."""

    operand: Expr


@dataclass(frozen=True)
class Shuffle(Expr):
    source: Expr
    indices: tuple


class Stmt:
    """Base for all statement variants."""


@dataclass(frozen=True)
class Allocate(Stmt):
    name: str
    kind: str
    length: int
    location: str


@dataclass(frozen=True)
class Store(Stmt):
    buffer: str
    index: Expr
    value: Expr


@dataclass(frozen=True)
class Evaluate(Stmt):
    value: Expr


@dataclass(frozen=True)
class For(Stmt):
    var: str
    min: int
    extent: int
    body: tuple


@dataclass(frozen=True)
class Param:
    name: str
    kind: str
    length: int
    location: str = "mem"


@dataclass(frozen=True)
class ShapeDecl:
    """Registered accelerator MatMul shape: C[m,n] += A[m,k] * B[k,n]."""

    target: str  # "amx" | "wmma"
    m: int
    k: int
    n: int


@dataclass(frozen=True)
class Program:
    params: tuple = ()
    body: tuple = ()
    shapes: tuple = ()


# ---------------------------------------------------------------------------
# lane and kind analysis


def lanes_of(e, path="e"):
    """Lane count of `e`, raising LaneMismatch (with a node path) on any
    violation of the lane constraints."""
    if isinstance(e, (Imm, Var, ExprVar)):
        return 1
    if isinstance(e, Load):
        n = lanes_of(e.index, path + ".index")
        if n != e.vtype.lanes:
            raise LaneMismatch(
                f"load of {e.vtype.lanes} lanes with {n}-lane index", path)
        return n
    if isinstance(e, Cast):
        n = lanes_of(e.operand, path + ".operand")
        if n != e.vtype.lanes:
            raise LaneMismatch(
                f"cast to {e.vtype.lanes} lanes of {n}-lane operand", path)
        return n
    if isinstance(e, Bop):
        nl = lanes_of(e.lhs, path + ".lhs")
        nr = lanes_of(e.rhs, path + ".rhs")
        if nl != nr:
            raise LaneMismatch(f"{e.op} over {nl} vs {nr} lanes", path)
        return nl
    if isinstance(e, Ramp):
        nb = lanes_of(e.base, path + ".base")
        ns = lanes_of(e.stride, path + ".stride")
        if nb != ns:
            raise LaneMismatch(f"ramp base {nb} lanes, stride {ns}", path)
        if e.steps < 1:
            raise LaneMismatch("ramp needs >= 1 step", path)
        return e.steps * nb
    if isinstance(e, Broadcast):
        if e.copies < 1:
            raise LaneMismatch("broadcast needs >= 1 copy", path)
        return e.copies * lanes_of(e.operand, path + ".operand")
    if isinstance(e, VectorReduceAdd):
        n = lanes_of(e.operand, path + ".operand")
        if e.result_lanes < 1 or n % e.result_lanes != 0:
            raise LaneMismatch(
                f"cannot reduce {n} lanes to {e.result_lanes}", path)
        return e.result_lanes
    if isinstance(e, LocToLoc):
        return lanes_of(e.operand, path + ".operand")
    if isinstance(e, Shuffle):
        src = lanes_of(e.source, path + ".source")
        for i in e.indices:
            if i != -1 and not (0 <= i < src):
                raise LaneMismatch(f"shuffle index {i} out of [0,{src})", path)
        if not e.indices:
            raise LaneMismatch("empty shuffle", path)
        return len(e.indices)
    if isinstance(e, Call):
        from .interp import intrinsic_result_lanes  # avoids a hard dependency cycle
        return intrinsic_result_lanes(e, path)
    raise IRError(f"{path}: not an Expr: {e!r}")


def type_of(e, buffers=None, path="e"):
    """Vector type of `e`.  With a declaration table (`buffers`: name ->
    (kind, length, location)), also checks that loads reference declared
    buffers."""
    lanes = lanes_of(e, path)
    return VecType(_kind_of(e, buffers, path), lanes)


def _kind_of(e, buffers, path):
    if isinstance(e, Imm):
        return e.kind
    if isinstance(e, Var):
        return "i32"
    if isinstance(e, (Load, Cast)):
        if isinstance(e, Load) and buffers is not None and e.buffer not in buffers:
            raise UnknownBuffer(e.buffer)
        return e.vtype.kind
    if isinstance(e, Bop):
        kl = _kind_of(e.lhs, buffers, path + ".lhs")
        kr = _kind_of(e.rhs, buffers, path + ".rhs")
        if kl != kr:
            raise KindMismatch(f"{path}: {e.op} over {kl} and {kr}")
        return kl
    if isinstance(e, Ramp):
        return _kind_of(e.base, buffers, path + ".base")
    if isinstance(e, (Broadcast, VectorReduceAdd, LocToLoc, ExprVar)):
        return _kind_of(e.operand, buffers, path + ".operand")
    if isinstance(e, Shuffle):
        return _kind_of(e.source, buffers, path + ".source")
    if isinstance(e, Call):
        from .interp import intrinsic_result_kind
        return intrinsic_result_kind(e, buffers, path)
    raise IRError(f"{path}: not an Expr: {e!r}")


def walk_exprs(e):
    yield e
    for child in _children(e):
        yield from walk_exprs(child)


def _children(e):
    if isinstance(e, Load):
        return (e.index,)
    if isinstance(e, (Cast, Broadcast, VectorReduceAdd, LocToLoc, ExprVar)):
        return (e.operand,)
    if isinstance(e, Bop):
        return (e.lhs, e.rhs)
    if isinstance(e, Ramp):
        return (e.base, e.stride)
    if isinstance(e, Call):
        return e.args
    if isinstance(e, Shuffle):
        return (e.source,)
    return ()


def free_vars(e):
    return {x.name for x in walk_exprs(e) if isinstance(x, Var)}


def walk_stmts(body, path="body"):
    """Yields (path, stmt) over a statement sequence, descending into loops."""
    for i, s in enumerate(body):
        p = f"{path}[{i}]"
        yield p, s
        if isinstance(s, For):
            yield from walk_stmts(s.body, p + ".body")


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors

    def __str__(self):
        lines = [f"error: {p}: {m}" for p, m in self.errors]
        lines += [f"warning: {p}: {m}" for p, m in self.warnings]
        return "\n".join(lines) if lines else "ok"


def buffer_table(p):
    byname = {}
    for prm in p.params:
        byname[prm.name] = (prm.kind, prm.length, prm.location)
    for _, s in walk_stmts(p.body):
        if isinstance(s, Allocate):
            byname[s.name] = (s.kind, s.length, s.location)
    return byname


def validate_program(p):
    """Full-program scan; collects every violation instead of aborting."""
    rep = ValidationReport()
    buffers = {}
    names = set()

    for prm in p.params:
        if prm.name in names:
            rep.errors.append(("params", f"duplicate name {prm.name!r}"))
        names.add(prm.name)
        if prm.location != "mem":
            rep.errors.append(
                ("params", f"external parameter {prm.name!r} must be mem-located"))
        buffers[prm.name] = (prm.kind, prm.length, prm.location)

    for path, s in walk_stmts(p.body):
        if isinstance(s, Allocate):
            if s.name in names:
                rep.errors.append((path, f"duplicate name {s.name!r}"))
            names.add(s.name)
            buffers[s.name] = (s.kind, s.length, s.location)

    def check_expr(e, path, bound):
        try:
            lanes_of(e, path)
        except LaneMismatch as err:
            rep.errors.append((path, str(err)))
            return
        try:
            type_of(e, buffers, path)
        except (KindMismatch, UnknownBuffer, IRError) as err:
            rep.errors.append((path, str(err)))
        for sub in walk_exprs(e):
            if isinstance(sub, Load):
                if sub.buffer not in buffers:
                    rep.errors.append((path, str(UnknownBuffer(sub.buffer))))
                else:
                    try:
                        if _kind_of(sub.index, buffers, path) != "i32":
                            rep.errors.append(
                                (path, f"load index into {sub.buffer!r} is not i32"))
                    except IRError:
                        pass
            if isinstance(sub, Var) and sub.name not in bound and sub.name not in buffers:
                rep.errors.append((path, f"unbound variable {sub.name!r}"))
            if isinstance(sub, LocToLoc) and sub.src == sub.dst:
                rep.errors.append((path, f"loc_to_loc {sub.src}->{sub.dst}"))
            if isinstance(sub, ExprVar):
                for inner in walk_exprs(sub.operand):
                    if isinstance(inner, ExprVar):
                        rep.errors.append((path, "exprvar nested inside exprvar"))
            if isinstance(sub, Imm) and sub.kind == "i32":
                if not -(2**31) <= int(sub.value) < 2**31:
                    rep.errors.append((path, f"i32 immediate {sub.value} overflows"))

    def check_stmts(body, path, bound):
        for i, s in enumerate(body):
            sp = f"{path}[{i}]"
            if isinstance(s, Store):
                if s.buffer not in buffers:
                    rep.errors.append((sp, str(UnknownBuffer(s.buffer))))
                check_expr(s.index, sp + ".index", bound)
                check_expr(s.value, sp + ".value", bound)
                try:
                    li, lv = lanes_of(s.index), lanes_of(s.value)
                    if li != lv:
                        rep.errors.append(
                            (sp, f"store index has {li} lanes, value {lv}"))
                except LaneMismatch:
                    pass
                try:
                    if _kind_of(s.index, buffers, sp) != "i32":
                        rep.errors.append((sp, "store index is not i32"))
                except IRError:
                    pass
            elif isinstance(s, Evaluate):
                check_expr(s.value, sp + ".value", bound)
            elif isinstance(s, For):
                if s.var in bound:
                    rep.errors.append((sp, f"loop variable {s.var!r} shadows"))
                if s.extent < 0:
                    rep.errors.append((sp, "negative loop extent"))
                check_stmts(s.body, sp + ".body", bound | {s.var})
            elif isinstance(s, Allocate):
                if s.length < 1:
                    rep.errors.append((sp, f"allocate {s.name!r} of length {s.length}"))
            else:
                rep.errors.append((sp, f"not a Stmt: {s!r}"))

    check_stmts(p.body, "body", set())

    amx_lanes = sum(length for kind, length, loc in buffers.values() if loc == "amx")
    if amx_lanes > 8 * 16 * 32:
        rep.warnings.append(
            ("buffers", f"more than 8 AMX tiles live ({amx_lanes} lanes allocated)"))
    return rep


# ---------------------------------------------------------------------------
# canonical nested index construction


def canonical_index(axes, base):
    """Nested Ramp/Broadcast index for the affine addresses
    base + sum(i_k * s_k), enumerated in row-major lane order.

    `axes` is ordered outermost first as (extent, stride) pairs; a zero
    stride becomes a Broadcast level.  Strides are i32 immediates.
    """
    e = base
    for extent, stride in reversed(axes):
        assert extent >= 1
        if stride == 0:
            e = Broadcast(e, extent)
        else:
            n = lanes_of(e)
            s = Imm("i32", stride)
            e = Ramp(e, s if n == 1 else Broadcast(s, n), extent)
    return e


# ---------------------------------------------------------------------------
# s-expression reader


class ParseError(IRError):
    def __init__(self, msg, line, col, expected=()):
        hint = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{line}:{col}: {msg}{hint}")
        self.line, self.col, self.expected = line, col, tuple(expected)


@dataclass(frozen=True)
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(text):
    toks, line, col = [], 1, 1
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
        elif c in "()":
            toks.append(_Tok(c, line, col))
            col += 1
            i += 1
        else:
            j = i
            while j < len(text) and text[j] not in " \t\r\n();":
                j += 1
            toks.append(_Tok(text[i:j], line, col))
            col += j - i
            i = j
    return toks


class _Reader:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.pos = 0

    def at_end(self):
        return self.pos >= len(self.toks)

    def peek(self):
        return self.toks[self.pos] if not self.at_end() else None

    def next(self, expected=()):
        if self.at_end():
            last = self.toks[-1] if self.toks else _Tok("", 1, 1)
            raise ParseError("unexpected end of input", last.line, last.col, expected)
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def read(self):
        t = self.next(("expression",))
        if t.text == "(":
            items = []
            while True:
                nxt = self.peek()
                if nxt is None:
                    raise ParseError("unclosed '('", t.line, t.col, (")",))
                if nxt.text == ")":
                    self.next()
                    return items, t
                items.append(self.read())
        if t.text == ")":
            raise ParseError("unexpected ')'", t.line, t.col)
        return t, t


def _fail(tok, msg, expected=()):
    raise ParseError(msg, tok.line, tok.col, expected)


def _atom(node, what):
    val, tok = node
    if not isinstance(val, _Tok):
        _fail(tok, f"expected {what}, got a list", (what,))
    return val.text, tok


def _int_atom(node, what="integer"):
    text, tok = _atom(node, what)
    try:
        return int(text)
    except ValueError:
        _fail(tok, f"expected {what}, got {text!r}", (what,))


def _kind_atom(node):
    text, tok = _atom(node, "scalar kind")
    if text not in SCALAR_KINDS:
        _fail(tok, f"unknown kind {text!r}", SCALAR_KINDS)
    return text


def _loc_atom(node):
    text, tok = _atom(node, "location")
    if text not in LOCATIONS:
        _fail(tok, f"unknown location {text!r}", LOCATIONS)
    return text


def _parse_type(node):
    items, tok = node
    if isinstance(items, _Tok) or len(items) != 2:
        _fail(tok, "expected (KIND N) type", ("(kind lanes)",))
    return VecType(_kind_atom(items[0]), _int_atom(items[1], "lane count"))


def _parse_expr(node):
    items, tok = node
    if isinstance(items, _Tok):
        _fail(tok, f"expected expression, got atom {items.text!r}")
    if not items:
        _fail(tok, "empty expression")
    head, htok = _atom(items[0], "operator")
    args = items[1:]

    def arity(n):
        if len(args) != n:
            _fail(htok, f"{head} takes {n} argument(s), got {len(args)}", (head,))

    if head == "imm":
        arity(2)
        kind = _kind_atom(args[0])
        text, vtok = _atom(args[1], "literal")
        try:
            value = int(text) if kind == "i32" else float(text)
        except ValueError:
            _fail(vtok, f"bad {kind} literal {text!r}")
        return Imm(kind, value)
    if head == "var":
        arity(1)
        return Var(_atom(args[0], "name")[0])
    if head == "load":
        arity(3)
        return Load(_atom(args[0], "buffer name")[0], _parse_type(args[1]),
                    _parse_expr(args[2]))
    if head == "cast":
        arity(2)
        return Cast(_parse_type(args[0]), _parse_expr(args[1]))
    if head in _BOP_ATOMS:
        arity(2)
        return Bop(_BOP_ATOMS[head], _parse_expr(args[0]), _parse_expr(args[1]))
    if head == "ramp":
        arity(3)
        return Ramp(_parse_expr(args[0]), _parse_expr(args[1]),
                    _int_atom(args[2], "step count"))
    if head == "broadcast":
        arity(2)
        return Broadcast(_parse_expr(args[0]), _int_atom(args[1], "copy count"))
    if head == "vector-reduce-add":
        arity(2)
        return VectorReduceAdd(_int_atom(args[0], "result lanes"),
                               _parse_expr(args[1]))
    if head == "call":
        if not args:
            _fail(htok, "call needs an intrinsic name")
        return Call(_atom(args[0], "intrinsic name")[0],
                    tuple(_parse_expr(a) for a in args[1:]))
    if head in _MOVE_ATOMS:
        arity(1)
        src, dst = _MOVE_ATOMS[head]
        return LocToLoc(src, dst, _parse_expr(args[0]))
    if head == "exprvar":
        arity(1)
        return ExprVar(_parse_expr(args[0]))
    if head == "shuffle":
        arity(2)
        src = _parse_expr(args[0])
        idx_items, it = args[1]
        if isinstance(idx_items, _Tok):
            _fail(it, "expected an index list", ("(N*)",))
        return Shuffle(src, tuple(_int_atom(n, "shuffle index") for n in idx_items))
    _fail(htok, f"unknown operator {head!r}")


def _parse_stmt(node):
    items, tok = node
    if isinstance(items, _Tok) or not items:
        _fail(tok, "expected a statement form")
    head, htok = _atom(items[0], "statement")
    args = items[1:]
    if head == "allocate":
        if len(args) != 4:
            _fail(htok, f"allocate takes 4 arguments, got {len(args)}")
        return Allocate(_atom(args[0], "name")[0], _kind_atom(args[1]),
                        _int_atom(args[2], "length"), _loc_atom(args[3]))
    if head == "store":
        if len(args) != 3:
            _fail(htok, f"store takes 3 arguments, got {len(args)}")
        return Store(_atom(args[0], "buffer name")[0], _parse_expr(args[1]),
                     _parse_expr(args[2]))
    if head == "evaluate":
        if len(args) != 1:
            _fail(htok, f"evaluate takes 1 argument, got {len(args)}")
        return Evaluate(_parse_expr(args[0]))
    if head == "for":
        if len(args) < 3:
            _fail(htok, "for takes a name, min, extent, and body")
        return For(_atom(args[0], "loop variable")[0], _int_atom(args[1], "min"),
                   _int_atom(args[2], "extent"),
                   tuple(_parse_stmt(s) for s in args[3:]))
    _fail(htok, f"unknown statement {head!r}",
          ("allocate", "store", "evaluate", "for"))


def parse_program(text):
    reader = _Reader(text)
    params, shapes, body = [], [], []
    while not reader.at_end():
        node = reader.read()
        items, tok = node
        if isinstance(items, _Tok):
            _fail(tok, f"expected a top-level form, got atom {items.text!r}")
        if not items:
            _fail(tok, "empty top-level form")
        head, _ = _atom(items[0], "form")
        if head == "param":
            if len(items) != 5:
                _fail(tok, f"param takes 4 arguments, got {len(items) - 1}")
            params.append(Param(_atom(items[1], "name")[0], _kind_atom(items[2]),
                                _int_atom(items[3], "length"), _loc_atom(items[4])))
        elif head in ("amx-shape", "wmma-shape"):
            if len(items) != 4:
                _fail(tok, f"{head} takes M K N, got {len(items) - 1} arguments")
            shapes.append(ShapeDecl(head.split("-")[0], _int_atom(items[1], "M"),
                                    _int_atom(items[2], "K"), _int_atom(items[3], "N")))
        else:
            body.append(_parse_stmt(node))
    return Program(tuple(params), tuple(body), tuple(shapes))


# ---------------------------------------------------------------------------
# printer (byte-exact: lowercase atoms, single spaces, newline per form)


def _fmt_imm(kind, value):
    if kind == "i32":
        return str(int(value))
    return repr(float(value))


def print_type(t):
    return f"({t.kind} {t.lanes})"


def print_expr(e):
    if isinstance(e, Imm):
        return f"(imm {e.kind} {_fmt_imm(e.kind, e.value)})"
    if isinstance(e, Var):
        return f"(var {e.name})"
    if isinstance(e, Load):
        return f"(load {e.buffer} {print_type(e.vtype)} {print_expr(e.index)})"
    if isinstance(e, Cast):
        return f"(cast {print_type(e.vtype)} {print_expr(e.operand)})"
    if isinstance(e, Bop):
        return f"({_ATOM_OF_BOP[e.op]} {print_expr(e.lhs)} {print_expr(e.rhs)})"
    if isinstance(e, Ramp):
        return f"(ramp {print_expr(e.base)} {print_expr(e.stride)} {e.steps})"
    if isinstance(e, Broadcast):
        return f"(broadcast {print_expr(e.operand)} {e.copies})"
    if isinstance(e, VectorReduceAdd):
        return f"(vector-reduce-add {e.result_lanes} {print_expr(e.operand)})"
    if isinstance(e, Call):
        inner = "".join(" " + print_expr(a) for a in e.args)
        return f"(call {e.name}{inner})"
    if isinstance(e, LocToLoc):
        return f"({_ATOM_OF_MOVE[(e.src, e.dst)]} {print_expr(e.operand)})"
    if isinstance(e, ExprVar):
        return f"(exprvar {print_expr(e.operand)})"
    if isinstance(e, Shuffle):
        idx = " ".join(str(i) for i in e.indices)
        return f"(shuffle {print_expr(e.source)} ({idx}))"
    raise IRError(f"not an Expr: {e!r}")


def print_stmt(s):
    if isinstance(s, Allocate):
        return f"(allocate {s.name} {s.kind} {s.length} {s.location})"
    if isinstance(s, Store):
        return f"(store {s.buffer} {print_expr(s.index)} {print_expr(s.value)})"
    if isinstance(s, Evaluate):
        return f"(evaluate {print_expr(s.value)})"
    if isinstance(s, For):
        inner = "".join(" " + print_stmt(b) for b in s.body)
        return f"(for {s.var} {s.min} {s.extent}{inner})"
    raise IRError(f"not a Stmt: {s!r}")


def print_program(p):
    lines = [f"(param {prm.name} {prm.kind} {prm.length} {prm.location})"
             for prm in p.params]
    lines += [f"({sh.target}-shape {sh.m} {sh.k} {sh.n})" for sh in p.shapes]
    lines += [print_stmt(s) for s in p.body]
    return "\n".join(lines) + "\n"

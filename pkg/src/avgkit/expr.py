"""Scalar expressions in ``t, x1..xn``: parsing, evaluation, symbolic derivatives.

Grammar (see ``docs/expr-grammar.md`` for the EBNF)::

    expr   := term  (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' signed)*          left-associative, constant exponent
    signed := '-' signed | atom
    atom   := number | 'pi' | 't' | 'x' digits | func '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)``.

Expressions are immutable trees. Structurally equal nodes compare and hash
equal, which the code generator uses for common-subexpression elimination.
"""

from __future__ import annotations

import itertools
import math
import re
import sys
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DomainError,
    ExprSyntaxError,
    NonConstantExponentError,
    ResourceError,
    UnknownIdentifierError,
    VariableRangeError,
)

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")
MAX_DEPTH = 256
MAX_NODES = 10**6
MAX_TENSOR_ORDER = 4


class Expr:
    """Base node. Subclasses define ``_fields`` and ``children``."""

    __slots__ = ("_h", "depth")

    def _fields(self) -> tuple:
        raise NotImplementedError

    @property
    def children(self) -> tuple["Expr", ...]:
        return ()

    def _seal(self):
        # children are sealed first, so this never recurses
        self._h = hash((type(self).__name__,) + self._fields())

    def __hash__(self):
        return self._h

    def __eq__(self, other):
        if self is other:
            return True
        if type(self) is not type(other) or hash(self) != hash(other):
            return False
        return self._fields() == other._fields()

    def __repr__(self):
        return f"{type(self).__name__}{self._fields()!r}"

    def __str__(self):
        return to_source(self)

    def evaluate(self, t: float, x: Sequence[float]) -> float:
        return evaluate(self, t, x)

    def diff(self, var) -> "Expr":
        return diff(self, var)

    def is_constant(self) -> bool:
        return not any(isinstance(node, Var) for node in walk(self))


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)
        self.depth = 1
        self._seal()

    def _fields(self):
        return (self.value,)


class Var(Expr):
    """``index == 0`` is ``t``; ``index == j`` is ``xj``."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        self.index = int(index)
        self.depth = 1
        self._seal()

    @property
    def name(self) -> str:
        return "t" if self.index == 0 else f"x{self.index}"

    def _fields(self):
        return (self.index,)


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg
        self.depth = arg.depth + 1
        self._seal()

    @property
    def children(self):
        return (self.arg,)

    def _fields(self):
        return (self.arg,)


class BinOp(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in "+-*/^":
            raise ArgumentError(f"unknown operator {op!r}")
        self.op = op
        self.left = left
        self.right = right
        self.depth = max(left.depth, right.depth) + 1
        self._seal()

    @property
    def children(self):
        return (self.left, self.right)

    def _fields(self):
        return (self.op, self.left, self.right)


class Call(Expr):
    __slots__ = ("func", "arg")

    def __init__(self, func: str, arg: Expr):
        if func not in FUNCTIONS:
            raise ArgumentError(f"unknown function {func!r}")
        self.func = func
        self.arg = arg
        self.depth = arg.depth + 1
        self._seal()

    @property
    def children(self):
        return (self.arg,)

    def _fields(self):
        return (self.func, self.arg)


def walk(e: Expr):
    """Yield every distinct node of the DAG under ``e`` (children first)."""
    seen = set()
    stack = [(e, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            yield node
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((c, False) for c in node.children)


def tree_size(e: Expr) -> int:
    """Node count of ``e`` viewed as a tree (shared subtrees counted each time)."""
    sizes: dict[int, int] = {}
    for node in walk(e):
        sizes[id(node)] = 1 + sum(sizes[id(c)] for c in node.children)
    return sizes[id(e)]


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)


class _Parser:
    def __init__(self, text: str, n: int):
        self.n = n
        self.text = text
        # byte offset of every character index (plus end of input)
        self.byte_at = [0]
        for ch in text:
            self.byte_at.append(self.byte_at[-1] + len(ch.encode("utf-8")))
        self.tokens = self._tokenize()
        self.pos = 0
        self.nesting = 0

    def _tokenize(self):
        tokens = []
        i = 0
        text = self.text
        while i < len(text):
            m = _TOKEN.match(text, i)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {text[i]!r}", self.byte_at[i])
            kind = m.lastgroup
            if kind != "ws":
                tokens.append((kind, m.group(), self.byte_at[i]))
            i = m.end()
        tokens.append(("end", "", self.byte_at[len(text)]))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value):
        kind, text, off = self.peek()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)
        return self.advance()

    def _enter(self, off):
        self.nesting += 1
        if self.nesting > MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", off)

    def _check_depth(self, node, off):
        if node.depth > MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", off)
        return node

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, off = self.advance()
            node = self._check_depth(BinOp(op, node, self.term()), off)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, off = self.advance()
            node = self._check_depth(BinOp(op, node, self.unary()), off)
        return node

    def unary(self):
        kind, text, off = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            self._enter(off)
            node = Neg(self.unary())
            self.nesting -= 1
            return self._check_depth(node, off)
        return self.power()

    def power(self):
        node = self.atom()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            exp_off = self.peek()[2]
            exponent = self.signed()
            if not exponent.is_constant():
                raise NonConstantExponentError("exponent must be a constant expression", exp_off)
            node = self._check_depth(BinOp("^", node, exponent), exp_off)
        return node

    def signed(self):
        kind, text, off = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            self._enter(off)
            node = Neg(self.signed())
            self.nesting -= 1
            return self._check_depth(node, off)
        return self.atom()

    def atom(self):
        kind, text, off = self.advance()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ExprSyntaxError("numeric literal out of range", off)
            return Const(value)
        if kind == "ident":
            if text == "t":
                return Var(0)
            if text == "pi":
                return Const(math.pi)
            m = re.fullmatch(r"x([0-9]+)", text)
            if m:
                j = int(m.group(1))
                if not 1 <= j <= self.n:
                    raise VariableRangeError(f"variable {text} out of range for n={self.n}", off)
                return Var(j)
            if text in FUNCTIONS:
                self.expect("(")
                self._enter(off)
                arg = self.expr()
                self.nesting -= 1
                self.expect(")")
                return self._check_depth(Call(text, arg), off)
            raise UnknownIdentifierError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            self._enter(off)
            node = self.expr()
            self.nesting -= 1
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", off)


def parse(source: str | bytes, n: int) -> Expr:
    """Parse ``source`` into an :class:`Expr` over ``t, x1..xn``.

    Raises a :class:`~avgkit.errors.ParseError` subclass carrying the byte
    offset of the failure.
    """
    if n < 1:
        raise ArgumentError("dimension n must be >= 1")
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExprSyntaxError("invalid UTF-8", exc.start) from None
    # recursive descent spends about five frames per nesting level
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 8 * MAX_DEPTH + 1000))
    try:
        return _Parser(source, n).parse()
    finally:
        sys.setrecursionlimit(limit)


# ---------------------------------------------------------------------------
# evaluation

def _pow(a: float, b: float) -> float:
    if a == 0.0 and b < 0:
        raise DomainError("zero raised to a negative power")
    if a < 0.0 and b != int(b):
        raise DomainError("negative base with non-integer exponent")
    return a**b


def _log(a):
    if a <= 0.0:
        raise DomainError("log of a nonpositive number")
    return math.log(a)


def _sqrt(a):
    if a < 0.0:
        raise DomainError("sqrt of a negative number")
    return math.sqrt(a)


_SCALAR_FUNCS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": _log,
    "sqrt": _sqrt,
    "abs": abs,
}


def evaluate(e: Expr, t: float, x: Sequence[float]) -> float:
    """Evaluate ``e`` at ``(t, x)`` in IEEE double arithmetic.

    Any division by zero, domain violation or non-finite result raises
    :class:`DomainError`.
    """
    values: dict[int, float] = {}
    try:
        for node in walk(e):
            if isinstance(node, Const):
                v = node.value
            elif isinstance(node, Var):
                v = float(t) if node.index == 0 else float(x[node.index - 1])
            elif isinstance(node, Neg):
                v = -values[id(node.arg)]
            elif isinstance(node, Call):
                v = _SCALAR_FUNCS[node.func](values[id(node.arg)])
            else:
                a, b = values[id(node.left)], values[id(node.right)]
                op = node.op
                if op == "+":
                    v = a + b
                elif op == "-":
                    v = a - b
                elif op == "*":
                    v = a * b
                elif op == "/":
                    if b == 0.0:
                        raise DomainError("division by zero")
                    v = a / b
                else:
                    v = _pow(a, b)
            values[id(node)] = v
    except (OverflowError, ZeroDivisionError, ValueError) as exc:
        raise DomainError(str(exc)) from None
    result = values[id(e)]
    if not math.isfinite(result):
        raise DomainError(f"non-finite result {result!r}")
    return result


# ---------------------------------------------------------------------------
# printing

def to_source(e: Expr) -> str:
    """Fully parenthesised source text that re-parses to an equivalent tree."""
    text: dict[int, str] = {}
    for node in walk(e):
        if isinstance(node, Const):
            s = repr(node.value)
            if node.value < 0 or s.startswith("-"):
                s = f"({s})"
        elif isinstance(node, Var):
            s = node.name
        elif isinstance(node, Neg):
            s = f"(-{text[id(node.arg)]})"
        elif isinstance(node, Call):
            s = f"{node.func}({text[id(node.arg)]})"
        else:
            s = f"({text[id(node.left)]}{node.op}{text[id(node.right)]})"
        text[id(node)] = s
    return text[id(e)]


# ---------------------------------------------------------------------------
# differentiation
#
# The helpers below fold the trivial identities (0 + u, 1 * u, u ^ 1, ...) so
# that repeated derivatives do not fill up with zero branches. Nothing else is
# rewritten.

ZERO = Const(0.0)
ONE = Const(1.0)


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1.0):
        return a
    if _is(a, 0.0):
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, c: Expr) -> Expr:
    if _is(c, 1.0):
        return a
    if _is(c, 0.0):
        return ONE
    return BinOp("^", a, c)


def _var_index(var, n: int | None = None) -> int:
    if isinstance(var, Var):
        return var.index
    if isinstance(var, int):
        return var
    if var == "t":
        return 0
    m = re.fullmatch(r"x([1-9][0-9]*)", str(var))
    if not m:
        raise ArgumentError(f"not a variable: {var!r}")
    return int(m.group(1))


def diff(e: Expr, var) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to ``var``.

    ``var`` may be ``"t"``, ``"x3"``, a :class:`Var`, or the integer index
    (0 for ``t``). The result is not simplified beyond trivial folding.
    """
    v = _var_index(var)
    d: dict[int, Expr] = {}
    for node in walk(e):
        if isinstance(node, Const):
            r = ZERO
        elif isinstance(node, Var):
            r = ONE if node.index == v else ZERO
        elif isinstance(node, Neg):
            r = neg(d[id(node.arg)])
        elif isinstance(node, Call):
            u, du = node.arg, d[id(node.arg)]
            if _is(du, 0.0):
                r = ZERO
            elif node.func == "sin":
                r = mul(Call("cos", u), du)
            elif node.func == "cos":
                r = neg(mul(Call("sin", u), du))
            elif node.func == "tan":
                r = div(du, power(Call("cos", u), Const(2.0)))
            elif node.func == "exp":
                r = mul(node, du)
            elif node.func == "log":
                r = div(du, u)
            elif node.func == "sqrt":
                r = div(du, mul(Const(2.0), node))
            else:  # abs
                r = mul(div(u, node), du)
        else:
            a, b = node.left, node.right
            da, db = d[id(a)], d[id(b)]
            op = node.op
            if op == "+":
                r = add(da, db)
            elif op == "-":
                r = sub(da, db)
            elif op == "*":
                r = add(mul(da, b), mul(a, db))
            elif op == "/":
                if _is(db, 0.0):
                    r = div(da, b)
                else:
                    r = div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
            else:
                # exponent is constant by construction
                if _is(da, 0.0):
                    r = ZERO
                else:
                    cm1 = Const(b.value - 1.0) if isinstance(b, Const) else sub(b, ONE)
                    r = mul(mul(b, power(a, cm1)), da)
        d[id(node)] = r
    result = d[id(e)]
    if tree_size(result) > MAX_NODES:
        raise ResourceError(f"derivative exceeds {MAX_NODES} nodes")
    return result


# ---------------------------------------------------------------------------
# code generation

def _const_exponent(e: Expr) -> float:
    return evaluate(e, 0.0, ())


def _emit(exprs: Sequence[Expr], n: int, backend: str) -> str:
    lines = []
    names: dict[Expr, str] = {}
    counter = itertools.count()

    def ref(node: Expr) -> str:
        if isinstance(node, Const):
            return repr(node.value) if node.value >= 0 else f"({node.value!r})"
        if isinstance(node, Var):
            return node.name
        return names[node]

    for e in exprs:
        for node in walk(e):
            if isinstance(node, (Const, Var)) or node in names:
                continue
            if isinstance(node, Neg):
                code = f"-{ref(node.arg)}"
            elif isinstance(node, Call):
                code = f"{node.func}({ref(node.arg)})"
            elif node.op == "^":
                c = _const_exponent(node.right)
                if c == int(c) and abs(c) <= 64:
                    code = f"{ref(node.left)} ** {int(c)}"
                else:
                    code = f"_pow({ref(node.left)}, {c!r})"
            else:
                code = f"{ref(node.left)} {node.op} {ref(node.right)}"
            name = f"_v{next(counter)}"
            names[node] = name
            lines.append(f"    {name} = {code}")
    args = ", ".join(["t"] + [f"x{j}" for j in range(1, n + 1)])
    ret = ", ".join(ref(e) for e in exprs)
    body = "\n".join(lines) if lines else "    pass"
    return f"def _compiled({args}):\n{body}\n    return ({ret}{',' if len(exprs) == 1 else ''})\n"


_NUMPY_NS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "_pow": np.power,
}
_MATH_NS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp,
    "log": math.log, "sqrt": math.sqrt, "abs": abs, "_pow": math.pow,
}


class CompiledExprs:
    """A list of expressions compiled into one Python function.

    ``backend="numpy"`` accepts arrays for ``t`` and ``x`` (broadcasting) and
    raises :class:`DomainError` on invalid, divide-by-zero or overflow
    floating-point events; ``backend="math"`` is faster for scalars.
    """

    def __init__(self, exprs: Sequence[Expr], n: int, backend: str = "numpy"):
        if backend not in ("numpy", "math"):
            raise ArgumentError(f"unknown backend {backend!r}")
        self.exprs = tuple(exprs)
        self.n = n
        self.backend = backend
        self.source = _emit(self.exprs, n, backend)
        ns = dict(_NUMPY_NS if backend == "numpy" else _MATH_NS)
        exec(compile(self.source, "<avgkit-expr>", "exec"), ns)
        self._fn = ns["_compiled"]

    def __call__(self, t, x) -> tuple:
        try:
            if self.backend == "numpy":
                with np.errstate(divide="raise", invalid="raise", over="raise"):
                    return self._fn(t, *x)
            return self._fn(t, *x)
        except (FloatingPointError, ZeroDivisionError, OverflowError, ValueError) as exc:
            raise DomainError(str(exc)) from None

    def stacked(self, t, x, shape) -> np.ndarray:
        """Evaluate with the numpy backend and stack to ``(len(exprs),) + shape``."""
        vals = self(t, x)
        out = np.empty((len(vals),) + tuple(shape))
        for i, v in enumerate(vals):
            out[i] = v
        if not np.all(np.isfinite(out)):
            raise DomainError("non-finite value in expression evaluation")
        return out


# ---------------------------------------------------------------------------
# Frechet derivatives of vector fields

def multi_indices(n: int, m: int) -> list[tuple[int, ...]]:
    """Sorted multi-indices (0-based) of the distinct m-th order partials."""
    return list(itertools.combinations_with_replacement(range(n), m))


def symmetric_index_map(n: int, m: int) -> np.ndarray:
    """Array of shape ``(n,)*m`` mapping each index tuple to its sorted position."""
    pos = {alpha: i for i, alpha in enumerate(multi_indices(n, m))}
    idx = np.empty((n,) * m, dtype=np.intp)
    for full in itertools.product(range(n), repeat=m):
        idx[full] = pos[tuple(sorted(full))]
    return idx


class VectorField:
    """An n-vector of expressions with cached symbolic partial derivatives."""

    def __init__(self, exprs: Sequence[Expr], n: int):
        if len(exprs) != n:
            raise ArgumentError(f"vector field needs {n} components, got {len(exprs)}")
        self.exprs = tuple(exprs)
        self.n = n
        self._partials: dict[tuple[int, tuple[int, ...]], Expr] = {}
        self._compiled: dict[tuple[int, str], CompiledExprs] = {}

    def partial(self, component: int, alpha: tuple[int, ...]) -> Expr:
        """Mixed partial of one component; ``alpha`` holds sorted 0-based x indices."""
        key = (component, alpha)
        if key not in self._partials:
            if not alpha:
                self._partials[key] = self.exprs[component]
            else:
                lower = self.partial(component, alpha[:-1])
                self._partials[key] = diff(lower, alpha[-1] + 1)
        return self._partials[key]

    def derivative_exprs(self, m: int) -> list[Expr]:
        """Unique m-th order partials, component-major, sorted multi-index minor."""
        return [self.partial(c, a) for c in range(self.n) for a in multi_indices(self.n, m)]

    def compiled(self, m: int, backend: str = "numpy") -> CompiledExprs:
        key = (m, backend)
        if key not in self._compiled:
            self._compiled[key] = CompiledExprs(self.derivative_exprs(m), self.n, backend)
        return self._compiled[key]

    def tensor(self, m: int, t, z, batch_shape=()) -> np.ndarray:
        """Dense symmetric tensor of m-th partials, shape ``(n,)*(m+1) + batch_shape``.

        Axis 0 is the output component; axes 1..m are the contracted slots.
        ``t`` and the entries of ``z`` may be arrays broadcasting to ``batch_shape``.
        """
        if not 0 <= m <= MAX_TENSOR_ORDER:
            raise ArgumentError(f"derivative order must be in 0..{MAX_TENSOR_ORDER}")
        n = self.n
        flat = self.compiled(m).stacked(t, z, batch_shape)
        nu = len(multi_indices(n, m))
        flat = flat.reshape((n, nu) + tuple(batch_shape))
        if m == 0:
            return flat[:, 0]
        return flat[:, symmetric_index_map(n, m)]


def apply_tensor(tensor, vectors: Sequence) -> np.ndarray:
    """Contract a dense tensor ``(n_out, n, ..., n, *batch)`` with m vectors.

    Each vector has shape ``(n, *batch)``; trailing batch axes broadcast
    elementwise. ``tensor`` may also be a callable taking the m vectors.
    """
    if callable(tensor) and not isinstance(tensor, np.ndarray):
        return np.asarray(tensor(*vectors))
    m = len(vectors)
    if m == 0:
        return tensor
    letters = "abcdefgh"[:m]
    spec = "o" + letters + "...," + ",".join(f"{c}..." for c in letters) + "->o..."
    return np.einsum(spec, tensor, *vectors)


def frechet_tensor(F: Sequence[Expr] | VectorField, m: int, t: float, z) -> np.ndarray:
    """m-th Frechet derivative of the vector field ``F`` at ``(t, z)``.

    Returned as a dense symmetric array of shape ``(n,)*(m+1)``; apply it to m
    vectors with :func:`apply_tensor`.
    """
    field = F if isinstance(F, VectorField) else VectorField(F, len(z))
    z = [float(v) for v in z]
    return field.tensor(m, float(t), z)

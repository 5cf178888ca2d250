"""Scalar expression language for Hamiltonians and custom scaling functions.

Grammar (documented in docs/grammar.md; whitespace is insignificant):

    expr    = term   { ("+" | "-") term }
    term    = signed { ("*" | "/") signed }
    signed  = [ "-" | "+" ] power
    power   = atom [ "^" signed ]          right-associative, constant exponent
    atom    = NUMBER | VARIABLE | FUNC "(" expr ")" | "(" expr ")"
    FUNC    = "ln" | "exp" | "sqrt" | "sin" | "cos" | "tan" | "arctan"

Variables are ``x1`` .. ``xn`` for a declared dimension ``n``; expressions in
a single variable may use the symbol ``w`` instead.  The exponent of ``^``
must fold to a constant so derivatives stay closed-form.

Expressions are immutable; evaluation, differentiation, printing, and
compilation to flat stack programs (consumed by the kernel backends) never
mutate shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvalDomainError, ExprSyntaxError

__all__ = [
    "Expression", "Program", "parse", "evaluate", "differentiate",
    "OPCODES",
]

_FUNCTIONS = ("ln", "exp", "sqrt", "sin", "cos", "tan", "arctan")

# Opcode table shared with the kernel backends. _ckernels.pyx pins the same
# numbers as C constants; tests/test_kernels.py guards the correspondence.
OPCODES = {
    "const": 0, "var": 1, "neg": 2, "add": 3, "sub": 4, "mul": 5,
    "div": 6, "pow": 7, "ln": 8, "exp": 9, "sqrt": 10, "sin": 11,
    "cos": 12, "tan": 13, "arctan": 14,
}


# ---------------------------------------------------------------------------
# AST nodes


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Unary:
    op: str  # neg | ln | exp | sqrt | sin | cos | tan | arctan
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float


Node = Union[Const, Var, Unary, BinOp, Pow]


@dataclass(frozen=True)
class Program:
    """Flat postfix form of an expression for the evaluation kernels."""

    ops: np.ndarray      # int32
    args: np.ndarray     # int32, const index / variable index / -1
    consts: np.ndarray   # float64
    max_stack: int
    n_vars: int


@dataclass(frozen=True)
class Expression:
    """Parsed scalar expression over x1..xn (or the single variable w)."""

    root: Node
    dimension: int
    uses_w: bool = False

    def __call__(self, point) -> float:
        return evaluate(self, point)

    def derivative(self, var: int) -> "Expression":
        return differentiate(self, var)

    def __str__(self) -> str:
        return _print(self.root, 0, self.uses_w)

    def compile(self) -> Program:
        return _compile(self)


# ---------------------------------------------------------------------------
# Tokenizer


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ExprSyntaxError(f"bad number literal {text[i:j]!r}", i)
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent)


class _Parser:
    def __init__(self, tokens, dimension):
        self.tokens = tokens
        self.pos = 0
        self.dimension = dimension
        self.uses_w = False

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.advance()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected trailing input {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            node = _binop(op if op == "+" else "-", node, self.term())
        return node

    def term(self):
        node = self.signed()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            node = _binop(op, node, self.signed())
        return node

    def signed(self):
        tok = self.peek()
        if tok[0] == "-":
            self.advance()
            return _neg(self.signed())
        if tok[0] == "+":
            self.advance()
            return self.signed()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            caret = self.advance()
            exponent = self.signed()
            value = _fold_exponent(exponent, caret[2])
            return _pow(base, value)
        return base

    def atom(self):
        tok = self.advance()
        kind, value, at = tok
        if kind == "num":
            return Const(value)
        if kind == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if value in _FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(value, arg)
            if value == "w":
                if self.dimension != 1:
                    raise ExprSyntaxError(
                        "variable 'w' is only valid in one dimension", at)
                self.uses_w = True
                return Var(0)
            if value.startswith("x") and value[1:].isdigit():
                index = int(value[1:])
                if not 1 <= index <= self.dimension:
                    raise ExprSyntaxError(
                        f"variable {value} out of range for dimension "
                        f"{self.dimension}", at)
                return Var(index - 1)
            raise ExprSyntaxError(f"unknown identifier {value!r}", at)
        raise ExprSyntaxError(f"unexpected token {value!r}", at)


def _fold_exponent(node, at):
    if _contains_var(node):
        raise ExprSyntaxError("exponent of '^' must be constant", at)
    try:
        return _eval_node(node, ())
    except EvalDomainError:
        raise ExprSyntaxError("exponent of '^' does not evaluate", at)


def _contains_var(node):
    if isinstance(node, Var):
        return True
    if isinstance(node, Unary):
        return _contains_var(node.arg)
    if isinstance(node, BinOp):
        return _contains_var(node.left) or _contains_var(node.right)
    if isinstance(node, Pow):
        return _contains_var(node.base)
    return False


def parse(text: str, dimension: int) -> Expression:
    """Parse ``text`` into an :class:`Expression` over x1..x<dimension>."""
    if not isinstance(dimension, int) or dimension < 1:
        raise ValueError("dimension must be a positive integer")
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    parser = _Parser(_tokenize(text), dimension)
    root = parser.parse()
    return Expression(root, dimension, parser.uses_w)


# ---------------------------------------------------------------------------
# Simplifying constructors (0*e, 1*e, e+0, constant folding, sign chains)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def _is_const(node, value):
    return isinstance(node, Const) and node.value == value


def _binop(op, a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _fold_binop(op, a.value, b.value)
        if folded is not None:
            return Const(folded)
    if op == "+":
        if _is_const(a, 0.0):
            return b
        if _is_const(b, 0.0):
            return a
    elif op == "-":
        if _is_const(b, 0.0):
            return a
        if _is_const(a, 0.0):
            return _neg(b)
    elif op == "*":
        if _is_const(a, 0.0) or _is_const(b, 0.0):
            return Const(0.0)
        if _is_const(a, 1.0):
            return b
        if _is_const(b, 1.0):
            return a
        if _is_const(a, -1.0):
            return _neg(b)
        if _is_const(b, -1.0):
            return _neg(a)
    elif op == "/":
        if _is_const(b, 1.0):
            return a
    return BinOp(op, a, b)


def _fold_binop(op, x, y):
    try:
        if op == "+":
            v = x + y
        elif op == "-":
            v = x - y
        elif op == "*":
            v = x * y
        else:
            if y == 0.0:
                return None
            v = x / y
    except OverflowError:
        return None
    return v if math.isfinite(v) else None


def _pow(base, exponent):
    if exponent == 1.0:
        return base
    if isinstance(base, Const):
        try:
            v = math.pow(base.value, exponent)
        except (ValueError, OverflowError):
            return Pow(base, exponent)
        if math.isfinite(v):
            return Const(v)
    return Pow(base, exponent)


# ---------------------------------------------------------------------------
# Evaluation


def _eval_node(node, point):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return point[node.index]
    if isinstance(node, Unary):
        v = _eval_node(node.arg, point)
        return _apply_unary(node.op, v)
    if isinstance(node, Pow):
        b = _eval_node(node.base, point)
        try:
            r = math.pow(b, node.exponent)
        except (ValueError, OverflowError):
            raise EvalDomainError(
                f"{b!r}^{node.exponent!r} is not a finite real")
        return _require_finite(r, f"{b!r}^{node.exponent!r}")
    v = _eval_node(node.left, point)
    u = _eval_node(node.right, point)
    if node.op == "+":
        r = v + u
    elif node.op == "-":
        r = v - u
    elif node.op == "*":
        r = v * u
    else:
        if u == 0.0:
            raise EvalDomainError(f"division by zero ({v!r}/0)")
        r = v / u
    return _require_finite(r, f"{v!r} {node.op} {u!r}")


def _apply_unary(op, v):
    if op == "neg":
        return -v
    try:
        if op == "ln":
            if v <= 0.0:
                raise EvalDomainError(f"ln of non-positive value {v!r}")
            r = math.log(v)
        elif op == "exp":
            r = math.exp(v)
        elif op == "sqrt":
            if v < 0.0:
                raise EvalDomainError(f"sqrt of negative value {v!r}")
            r = math.sqrt(v)
        elif op == "sin":
            r = math.sin(v)
        elif op == "cos":
            r = math.cos(v)
        elif op == "tan":
            r = math.tan(v)
        elif op == "arctan":
            r = math.atan(v)
        else:  # pragma: no cover - constructors prevent this
            raise ValueError(f"unknown unary op {op!r}")
    except OverflowError:
        raise EvalDomainError(f"{op}({v!r}) overflows")
    return _require_finite(r, f"{op}({v!r})")


def _require_finite(value, what):
    if not math.isfinite(value):
        raise EvalDomainError(f"{what} is not finite")
    return value


def evaluate(expression: Expression, point) -> float:
    """Evaluate at ``point`` (sequence of length ``dimension``).

    Raises :class:`EvalDomainError` on any domain violation; a non-finite
    intermediate is never silently propagated.
    """
    if len(point) != expression.dimension:
        raise ValueError(
            f"point has length {len(point)}, expected {expression.dimension}")
    return _eval_node(expression.root, point)


# ---------------------------------------------------------------------------
# Symbolic differentiation


def _diff(node, var):
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.index == var else 0.0)
    if isinstance(node, Unary):
        u, du = node.arg, _diff(node.arg, var)
        if node.op == "neg":
            return _neg(du)
        if node.op == "ln":
            return _binop("/", du, u)
        if node.op == "exp":
            return _binop("*", du, Unary("exp", u))
        if node.op == "sqrt":
            return _binop("/", du, _binop("*", Const(2.0), Unary("sqrt", u)))
        if node.op == "sin":
            return _binop("*", du, Unary("cos", u))
        if node.op == "cos":
            return _neg(_binop("*", du, Unary("sin", u)))
        if node.op == "tan":
            return _binop("/", du, _pow(Unary("cos", u), 2.0))
        if node.op == "arctan":
            return _binop("/", du, _binop("+", Const(1.0), _pow(u, 2.0)))
        raise ValueError(f"unknown unary op {node.op!r}")  # pragma: no cover
    if isinstance(node, Pow):
        db = _diff(node.base, var)
        inner = _binop("*", Const(node.exponent), _pow(node.base, node.exponent - 1.0))
        return _binop("*", inner, db)
    a, b = node.left, node.right
    da, db = _diff(a, var), _diff(b, var)
    if node.op == "+":
        return _binop("+", da, db)
    if node.op == "-":
        return _binop("-", da, db)
    if node.op == "*":
        return _binop("+", _binop("*", da, b), _binop("*", a, db))
    num = _binop("-", _binop("*", da, b), _binop("*", a, db))
    return _binop("/", num, _pow(b, 2.0))


def differentiate(expression: Expression, var: int) -> Expression:
    """Symbolic partial derivative with respect to 0-based variable ``var``."""
    if not 0 <= var < expression.dimension:
        raise ValueError(f"variable index {var} out of range")
    return Expression(_diff(expression.root, var), expression.dimension,
                      expression.uses_w)


# ---------------------------------------------------------------------------
# Printing (parse(str(e)) evaluates identically to e)

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _format_float(v):
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _print(node, parent_prec, uses_w):
    if isinstance(node, Const):
        if node.value < 0:
            text = "-" + _format_float(-node.value)
            return f"({text})" if parent_prec > _PREC_ADD else text
        return _format_float(node.value)
    if isinstance(node, Var):
        return "w" if uses_w else f"x{node.index + 1}"
    if isinstance(node, Unary):
        if node.op == "neg":
            text = "-" + _print(node.arg, _PREC_NEG, uses_w)
            return f"({text})" if parent_prec > _PREC_ADD else text
        return f"{node.op}({_print(node.arg, 0, uses_w)})"
    if isinstance(node, Pow):
        base = _print(node.base, _PREC_POW + 1, uses_w)
        exp = _format_float(node.exponent)
        if node.exponent < 0:
            exp = f"({exp})"
        text = f"{base}^{exp}"
        return f"({text})" if parent_prec > _PREC_POW else text
    if node.op in "+-":
        prec = _PREC_ADD
        right = _print(node.right, prec + 1, uses_w)
        left = _print(node.left, prec, uses_w)
    else:
        prec = _PREC_MUL
        right = _print(node.right, prec + 1, uses_w)
        left = _print(node.left, prec, uses_w)
    text = f"{left} {node.op} {right}" if node.op in "+-" else f"{left}{node.op}{right}"
    return f"({text})" if parent_prec > prec else text


# ---------------------------------------------------------------------------
# Compilation to flat stack programs


def _compile(expression: Expression) -> Program:
    ops, args, consts = [], [], []

    def emit(node):
        if isinstance(node, Const):
            ops.append(OPCODES["const"])
            args.append(len(consts))
            consts.append(node.value)
            return 1
        if isinstance(node, Var):
            ops.append(OPCODES["var"])
            args.append(node.index)
            return 1
        if isinstance(node, Unary):
            h = emit(node.arg)
            ops.append(OPCODES[node.op])
            args.append(-1)
            return h
        if isinstance(node, Pow):
            h = emit(node.base)
            hi = max(h, 1 + emit(Const(node.exponent)))
            ops.append(OPCODES["pow"])
            args.append(-1)
            return hi
        h1 = emit(node.left)
        h2 = emit(node.right)
        name = {"+": "add", "-": "sub", "*": "mul", "/": "div"}[node.op]
        ops.append(OPCODES[name])
        args.append(-1)
        return max(h1, 1 + h2)

    depth = emit(expression.root)
    return Program(
        ops=np.asarray(ops, dtype=np.int32),
        args=np.asarray(args, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        max_stack=depth,
        n_vars=expression.dimension,
    )

"""Tiny expression grammar for target functions over (x1, x2).

Grammar (standard precedence, left associative):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | primary
    primary:= NUMBER | 'pi' | 'x1' | 'x2'
            | ('sin' | 'cos') '(' expr ')' | '(' expr ')'

Implicit multiplication is not supported.  Parse errors carry the byte
offset of the offending token.
"""

import math
import re
from dataclasses import dataclass

import numpy as np


class ExprError(ValueError):
    """Syntax or evaluation error with source position."""

    def __init__(self, message, position):
        super().__init__(f"{message} at offset {position}")
        self.position = position


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str        # "x1" or "x2"


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str          # one of + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str        # "sin" or "cos"
    arg: object


_FUNCTIONS = ("sin", "cos")
_NUMBER_RE = re.compile(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _NUMBER_RE.match(text, pos)
        if m:
            tokens.append(("num", float(m.group(0)), pos))
            pos = m.end()
            continue
        if text[pos].isalpha() or text[pos] == "_":
            m = re.match(r"[A-Za-z_]\w*", text[pos:])
            tokens.append(("ident", m.group(0), pos))
            pos += m.end()
            continue
        if text[pos] in "+-*/(),":
            tokens.append((text[pos], text[pos], pos))
            pos += 1
            continue
        raise ExprError(f"unexpected character {text[pos]!r}", pos)
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def advance(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, kind):
        tok = self.peek()
        if tok[0] != kind:
            raise ExprError(f"expected {kind!r}", tok[2])
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.factor())
        return self.primary()

    def primary(self):
        tok = self.advance()
        kind, value, pos = tok
        if kind == "num":
            return Num(value)
        if kind == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "ident":
            if value in ("x1", "x2"):
                return Var(value)
            if value == "pi":
                return Pi()
            if value in _FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                nxt = self.peek()
                if nxt[0] == ",":
                    raise ExprError(f"{value} takes exactly one argument", nxt[2])
                self.expect(")")
                return Call(value, arg)
            raise ExprError(f"unknown identifier {value!r}", pos)
        raise ExprError(f"unexpected token {value!r}" if value is not None
                        else "unexpected end of input", pos)


def parse_expr(text):
    """Parse to an AST; raises ExprError with the offending offset."""
    return _Parser(_tokenize(text)).parse()


def eval_expr(node, x1, x2):
    """Evaluate an AST at scalar or array coordinates."""
    if isinstance(node, Num):
        return node.value + 0.0 * np.asarray(x1)
    if isinstance(node, Var):
        return np.asarray(x1, dtype=float) if node.name == "x1" \
            else np.asarray(x2, dtype=float)
    if isinstance(node, Pi):
        return math.pi + 0.0 * np.asarray(x1)
    if isinstance(node, Neg):
        return -eval_expr(node.operand, x1, x2)
    if isinstance(node, BinOp):
        a = eval_expr(node.left, x1, x2)
        b = eval_expr(node.right, x1, x2)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Call):
        arg = eval_expr(node.arg, x1, x2)
        return np.sin(arg) if node.func == "sin" else np.cos(arg)
    raise TypeError(f"not an expression node: {node!r}")


def expr_to_str(node):
    """Canonical text form; parse(expr_to_str(ast)) == ast."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Neg):
        return f"-{_wrap(node.operand, 2)}"
    if isinstance(node, BinOp):
        prec = 0 if node.op in "+-" else 1
        left = _wrap(node.left, prec)
        # render the right operand with a strictly higher binding so
        # non-associative cases (a-b+c, a/b*c) regroup identically
        right = _wrap(node.right, prec + 1)
        return f"{left}{node.op}{right}"
    if isinstance(node, Call):
        return f"{node.func}({expr_to_str(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def _precedence(node):
    if isinstance(node, BinOp):
        return 0 if node.op in "+-" else 1
    if isinstance(node, Neg):
        return 2
    return 3


def _wrap(node, min_prec):
    text = expr_to_str(node)
    return f"({text})" if _precedence(node) < min_prec else text


def expr_function(text_or_node):
    """Callable f(x1, x2) from expression text or a parsed AST."""
    node = parse_expr(text_or_node) if isinstance(text_or_node, str) else text_or_node

    def f(x1, x2):
        return eval_expr(node, x1, x2)

    f.expression = expr_to_str(node)
    return f

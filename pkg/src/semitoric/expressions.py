"""Arithmetic expression parsing and symbolic differentiation.

User-defined Hamiltonians are plain arithmetic over the chart variables of a
manifold: ``+ - * / ^``, the functions ``sin cos exp ln sqrt``, numeric
literals and the constants ``pi`` and ``e``.  Parsing produces a small AST
that can evaluate itself and differentiate itself; first and second
derivatives of a parsed field are exact ASTs, not finite differences.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EvaluationDomainError, ExpressionError

_CONSTANTS = {"pi": math.pi, "e": math.e}
_FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------

class Node:
    def eval(self, env):
        raise NotImplementedError

    def diff(self, var):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self}>"


class Const(Node):
    def __init__(self, value):
        self.value = float(value)

    def eval(self, env):
        return self.value

    def diff(self, var):
        return Const(0.0)

    def __str__(self):
        return repr(self.value)


class Var(Node):
    def __init__(self, name):
        self.name = name

    def eval(self, env):
        return env[self.name]

    def diff(self, var):
        return Const(1.0 if var == self.name else 0.0)

    def __str__(self):
        return self.name


def _is_const(node, value=None):
    if not isinstance(node, Const):
        return False
    return value is None or node.value == value


def add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    return Sub(a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    return sub(Const(0.0), a)


def powr(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return Const(1.0)
    if _is_const(a) and _is_const(b):
        return Const(a.value ** b.value)
    return Pow(a, b)


class Add(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, env):
        return self.a.eval(env) + self.b.eval(env)

    def diff(self, var):
        return add(self.a.diff(var), self.b.diff(var))

    def __str__(self):
        return f"({self.a} + {self.b})"


class Sub(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, env):
        return self.a.eval(env) - self.b.eval(env)

    def diff(self, var):
        return sub(self.a.diff(var), self.b.diff(var))

    def __str__(self):
        return f"({self.a} - {self.b})"


class Mul(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, env):
        return self.a.eval(env) * self.b.eval(env)

    def diff(self, var):
        return add(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))

    def __str__(self):
        return f"({self.a} * {self.b})"


class Div(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, env):
        return self.a.eval(env) / self.b.eval(env)

    def diff(self, var):
        da, db = self.a.diff(var), self.b.diff(var)
        return div(sub(mul(da, self.b), mul(self.a, db)), mul(self.b, self.b))

    def __str__(self):
        return f"({self.a} / {self.b})"


class Pow(Node):
    """Power with constant or general exponent."""

    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, env):
        base = self.a.eval(env)
        expo = self.b.eval(env)
        if not isinstance(self.b, Const):
            if np.any(np.asarray(base) <= 0):
                raise EvaluationDomainError(
                    "nonconstant exponent requires a positive base")
        return base ** expo

    def diff(self, var):
        if isinstance(self.b, Const):
            n = self.b.value
            # d(a^n) = n a^(n-1) a'
            return mul(mul(Const(n), powr(self.a, Const(n - 1.0))),
                       self.a.diff(var))
        # a^b = exp(b ln a)
        return mul(self,
                   add(mul(self.b.diff(var), Ln(self.a)),
                       mul(self.b, div(self.a.diff(var), self.a))))

    def __str__(self):
        return f"({self.a} ^ {self.b})"


class Sin(Node):
    def __init__(self, a):
        self.a = a

    def eval(self, env):
        return np.sin(self.a.eval(env))

    def diff(self, var):
        return mul(Cos(self.a), self.a.diff(var))

    def __str__(self):
        return f"sin({self.a})"


class Cos(Node):
    def __init__(self, a):
        self.a = a

    def eval(self, env):
        return np.cos(self.a.eval(env))

    def diff(self, var):
        return mul(neg(Sin(self.a)), self.a.diff(var))

    def __str__(self):
        return f"cos({self.a})"


class Exp(Node):
    def __init__(self, a):
        self.a = a

    def eval(self, env):
        return np.exp(self.a.eval(env))

    def diff(self, var):
        return mul(self, self.a.diff(var))

    def __str__(self):
        return f"exp({self.a})"


class Ln(Node):
    def __init__(self, a):
        self.a = a

    def eval(self, env):
        x = self.a.eval(env)
        if np.any(np.asarray(x) <= 0):
            raise EvaluationDomainError("ln of a nonpositive number")
        return np.log(x)

    def diff(self, var):
        return div(self.a.diff(var), self.a)

    def __str__(self):
        return f"ln({self.a})"


class Sqrt(Node):
    def __init__(self, a):
        self.a = a

    def eval(self, env):
        x = self.a.eval(env)
        if np.any(np.asarray(x) < 0):
            raise EvaluationDomainError("sqrt of a negative number")
        return np.sqrt(x)

    def diff(self, var):
        return div(self.a.diff(var), mul(Const(2.0), self))

    def __str__(self):
        return f"sqrt({self.a})"


_FUNCTION_NODES = {"sin": Sin, "cos": Cos, "exp": Exp, "ln": Ln, "sqrt": Sqrt}


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind, self.text, self.pos = kind, text, pos


def _tokenize(source):
    tokens = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (source[j].isdigit() or (source[j] == "." and not seen_dot)):
                seen_dot = seen_dot or source[j] == "."
                j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            tokens.append(_Token("number", source[i:j], i))
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("name", source[i:j], i))
            i = j
        elif ch in "+-*/^(),":
            tokens.append(_Token(ch, ch, i))
            i += 1
        else:
            raise ExpressionError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    """Recursive descent with ^ right-associative and unary minus."""

    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.k = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.k]

    def take(self, kind=None):
        tok = self.tokens[self.k]
        if kind is not None and tok.kind != kind:
            raise ExpressionError(f"expected {kind!r}, found {tok.text!r}", tok.pos)
        self.k += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionError(f"unexpected {tok.text!r}", tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind in ("+", "-"):
            op = self.take().kind
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind in ("*", "/"):
            op = self.take().kind
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self):
        if self.peek().kind == "-":
            self.take()
            return neg(self.unary())
        if self.peek().kind == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "^":
            self.take()
            return powr(base, self.unary())  # right-associative
        return base

    def atom(self):
        tok = self.peek()
        if tok.kind == "number":
            self.take()
            return Const(float(tok.text))
        if tok.kind == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if tok.kind == "name":
            self.take()
            name = tok.text
            if name in _FUNCTION_NODES:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return _FUNCTION_NODES[name](arg)
            if name in _CONSTANTS:
                return Const(_CONSTANTS[name])
            if name in self.variables:
                return Var(name)
            raise ExpressionError(f"unknown identifier {name!r}", tok.pos)
        raise ExpressionError(f"unexpected {tok.text or 'end of input'!r}", tok.pos)


def parse_expression(source, variables):
    """Parse ``source`` over the given variable names; returns the AST root."""
    return _Parser(_tokenize(source), tuple(variables)).parse()


class ParsedField:
    """Scalar field on a chart, with symbolic first and second derivatives.

    The gradient and Hessian entry ASTs are built once at construction;
    evaluation is then pure arithmetic.
    """

    def __init__(self, source, variables):
        self.source = source
        self.variables = tuple(variables)
        self.root = parse_expression(source, self.variables)
        self._grad = [self.root.diff(v) for v in self.variables]
        self._hess = [[g.diff(v) for v in self.variables] for g in self._grad]

    def _env(self, coords):
        return dict(zip(self.variables, coords))

    def value(self, coords):
        return float(self.root.eval(self._env(coords)))

    def gradient(self, coords):
        env = self._env(coords)
        return np.array([g.eval(env) for g in self._grad], dtype=float)

    def hessian(self, coords):
        env = self._env(coords)
        n = len(self.variables)
        out = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                out[i, j] = out[j, i] = self._hess[i][j].eval(env)
        return out

"""Tiny arithmetic expression language for coefficient functions.

Grammar (recursive descent):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := number | name | name '(' expr ')' | '(' expr ')'

Names: the time variable t, spatial variables x1..x3 (x aliases x1),
constants pi and e, and the whitelisted functions sin, cos, tan, exp,
log, sqrt, abs, sinh, cosh, tanh.  Expressions are differentiated
symbolically so coefficient functions hand analytic spatial partials to
the root symbols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

FUNCTIONS = {
    "sin": (np.sin, lambda a: Call("cos", a)),
    "cos": (np.cos, lambda a: Neg(Call("sin", a))),
    "tan": (np.tan, lambda a: Div(Const(1.0), Pow(Call("cos", a), Const(2.0)))),
    "exp": (np.exp, lambda a: Call("exp", a)),
    "log": (np.log, lambda a: Div(Const(1.0), a)),
    "sqrt": (np.sqrt, lambda a: Div(Const(0.5), Call("sqrt", a))),
    "abs": (np.abs, lambda a: Div(a, Call("abs", a))),
    "sinh": (np.sinh, lambda a: Call("cosh", a)),
    "cosh": (np.cosh, lambda a: Call("sinh", a)),
    "tanh": (np.tanh, lambda a: Div(Const(1.0), Pow(Call("cosh", a), Const(2.0)))),
}

CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Const:
    value: float

    def free(self):
        return set()


@dataclass(frozen=True)
class Var:
    name: str

    def free(self):
        return {self.name}


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object

    def free(self):
        return self.arg.free()


@dataclass(frozen=True)
class Neg:
    arg: object

    def free(self):
        return self.arg.free()


@dataclass(frozen=True)
class Add:
    left: object
    right: object

    def free(self):
        return self.left.free() | self.right.free()


@dataclass(frozen=True)
class Sub(Add):
    pass


@dataclass(frozen=True)
class Mul(Add):
    pass


@dataclass(frozen=True)
class Div(Add):
    pass


@dataclass(frozen=True)
class Pow(Add):
    pass


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def error(self, msg):
        raise ConfigError(f"expression error at position {self.pos} in {self.text!r}: {msg}")

    def peek(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def parse(self):
        node = self.expr()
        if self.peek():
            self.error("trailing input")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.peek()
            self.pos += 1
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in ("*", "/"):
            op = self.peek()
            self.pos += 1
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self):
        if self.peek() == "-":
            self.pos += 1
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            return Pow(base, self.unary())
        return base

    def atom(self):
        ch = self.peek()
        if ch == "(":
            self.take("(")
            node = self.expr()
            self.take(")")
            return node
        if ch.isdigit() or ch == ".":
            start = self.pos
            while self.pos < len(self.text) and (self.text[self.pos].isdigit()
                                                 or self.text[self.pos] in ".eE"
                                                 or (self.text[self.pos] in "+-"
                                                     and self.text[self.pos - 1] in "eE")):
                self.pos += 1
            try:
                return Const(float(self.text[start:self.pos]))
            except ValueError:
                self.error("bad number")
        if ch.isalpha() or ch == "_":
            start = self.pos
            while self.pos < len(self.text) and (self.text[self.pos].isalnum()
                                                 or self.text[self.pos] == "_"):
                self.pos += 1
            name = self.text[start:self.pos]
            if name in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(name, arg)
            if name in CONSTANTS:
                return Const(CONSTANTS[name])
            if name == "t" or name == "x" or (name[0] == "x" and name[1:].isdigit()):
                return Var("x1" if name == "x" else name)
            self.error(f"unknown name {name!r}")
        self.error("unexpected character")


def parse(text: str):
    return _Parser(str(text)).parse()


def evaluate(node, env):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        if node.name not in env:
            raise ConfigError(f"variable {node.name} not available here")
        return env[node.name]
    if isinstance(node, Call):
        return FUNCTIONS[node.fn][0](evaluate(node.arg, env))
    if isinstance(node, Neg):
        return -evaluate(node.arg, env)
    a = evaluate(node.left, env)
    b = evaluate(node.right, env)
    if isinstance(node, Sub):
        return a - b
    if isinstance(node, Mul):
        return a * b
    if isinstance(node, Div):
        return a / b
    if isinstance(node, Pow):
        return a**b
    return a + b


def differentiate(node, var: str):
    """Symbolic partial derivative; no simplification beyond constants."""
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return Neg(differentiate(node.arg, var))
    if isinstance(node, Call):
        inner = differentiate(node.arg, var)
        outer = FUNCTIONS[node.fn][1](node.arg)
        return Mul(outer, inner)
    if isinstance(node, Sub):
        return Sub(differentiate(node.left, var), differentiate(node.right, var))
    if isinstance(node, Mul):
        return Add(Mul(differentiate(node.left, var), node.right),
                   Mul(node.left, differentiate(node.right, var)))
    if isinstance(node, Div):
        num = Sub(Mul(differentiate(node.left, var), node.right),
                  Mul(node.left, differentiate(node.right, var)))
        return Div(num, Pow(node.right, Const(2.0)))
    if isinstance(node, Pow):
        if isinstance(node.right, Const):
            k = node.right.value
            return Mul(Mul(Const(k), Pow(node.left, Const(k - 1.0))),
                       differentiate(node.left, var))
        # general power via exp(b log a)
        return Mul(node,
                   Add(Mul(differentiate(node.right, var), Call("log", node.left)),
                       Mul(node.right, Div(differentiate(node.left, var), node.left))))
    return Add(differentiate(node.left, var), differentiate(node.right, var))


def coefficient_from_expression(text, dim: int):
    """Build a reduction Coefficient from an expression string, with
    analytic spatial partials and independence flags from the free
    variables."""
    from .reduction import Coefficient

    node = parse(text)
    free = node.free()
    x_names = [f"x{j + 1}" for j in range(dim)]

    def env_of(t, x):
        env = {"t": t}
        if x is not None:
            for j, name in enumerate(x_names):
                env[name] = np.asarray(x[j])
        return env

    def fn(t, x):
        out = evaluate(node, env_of(t, x))
        shape = np.broadcast_shapes(*(np.shape(c) for c in x)) if x else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape)

    dx_nodes = [differentiate(node, name) for name in x_names]

    def make_dx(dnode):
        def dx(t, x):
            out = evaluate(dnode, env_of(t, x))
            shape = np.broadcast_shapes(*(np.shape(c) for c in x))
            return np.broadcast_to(np.asarray(out, dtype=float), shape)

        return dx

    return Coefficient(
        fn=fn,
        dx_fns=[make_dx(d) for d in dx_nodes],
        x_independent=not (free & set(x_names)),
        t_independent="t" not in free,
        name=text,
    )

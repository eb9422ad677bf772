"""Tiny arithmetic expression language for built-in model observations.

Built-in simulators accept eval() strings like
``abs(tothouseholds - histothouseholds)``: identifiers are registered
observables, combined with ``+ - * /``, unary minus, parentheses and
``abs()``.  External simulators interpret observation strings natively;
this module is only the built-ins' interpreter.
"""

from __future__ import annotations

import re


class ObsExprError(ValueError):
    """Malformed observation expression or unknown observable."""


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_-]*)"
    r"|(?P<op>[()+\-*/]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ObsExprError(f"bad character {text[pos:].strip()[0]!r} in observation expression")
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident")))
        else:
            tokens.append(("op", m.group("op")))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def pop(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.pop()
        if kind != "op" or val != op:
            raise ObsExprError(f"expected {op!r}")

    def parse(self):
        node = self.expr()
        if self.i != len(self.tokens):
            raise ObsExprError("trailing input in observation expression")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.pop()
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.pop()
            node = (op, node, self.factor())
        return node

    def factor(self):
        kind, val = self.pop()
        if kind == "num":
            return ("num", float(val))
        if kind == "op" and val == "-":
            return ("neg", self.factor())
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            if val == "abs" and self.peek() == ("op", "("):
                self.pop()
                node = self.expr()
                self.expect_op(")")
                return ("abs", node)
            return ("var", val)
        raise ObsExprError("malformed observation expression")


def compile_expr(text: str):
    """Parse an observation expression into a nested-tuple AST."""
    tokens = _tokenize(text)
    if not tokens:
        raise ObsExprError("empty observation expression")
    return _Parser(tokens).parse()


def eval_expr(node, lookup) -> float:
    """Evaluate a compiled expression; ``lookup(name)`` resolves observables."""
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return lookup(node[1])
    if tag == "neg":
        return -eval_expr(node[1], lookup)
    if tag == "abs":
        return abs(eval_expr(node[1], lookup))
    left = eval_expr(node[1], lookup)
    right = eval_expr(node[2], lookup)
    if tag == "+":
        return left + right
    if tag == "-":
        return left - right
    if tag == "*":
        return left * right
    if tag == "/":
        return left / right
    raise ObsExprError(f"unknown node {tag!r}")

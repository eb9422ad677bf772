"""Property query language: lexer, parser, checker, printer, evaluator.

A query is a list of parametric operator definitions followed by exactly one
``eval`` command naming the analysis kind and the expectation targets:

    obsAtStep(step,obs) = if (s.eval("steps") == step)
                          then s.eval(obs)
                          else next(obsAtStep(step,obs)) fi ;
    eval autoIR(E[ obsAtStep(step,"tothouseholds") ], step,0,1,570) ;

Operators may recurse only through ``next(...)`` in tail position (enforced
by the grammar); steady-state analyses require next-free operator bodies.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

EVAL_KINDS = ("autoIR", "autoWarmup", "autoBM", "autoRD", "manualBM", "manualRD")
STEADY_STATE_KINDS = ("autoWarmup", "autoBM", "autoRD", "manualBM", "manualRD")
MANUAL_KINDS = ("manualBM", "manualRD")

KEYWORDS = {"if", "then", "else", "fi", "next", "eval", "E", "s"}


class QuerySyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: tuple = ()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        loc = f"line {line}, column {col}"
        exp = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at {loc}{exp}")


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


class QueryCheckError(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class ParamRef:
    name: str


@dataclass(frozen=True)
class Arith:
    op: str  # + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Compare:
    op: str  # == != < <= > >=
    left: object
    right: object


@dataclass(frozen=True)
class If:
    cond: Compare
    then: object
    orelse: object


@dataclass(frozen=True)
class StateEval:
    arg: object  # Str or ParamRef


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Next:
    call: Call


@dataclass(frozen=True)
class OperatorDef:
    name: str
    params: tuple
    body: object


@dataclass(frozen=True)
class Parametric:
    param: str
    lower: float
    increment: float
    upper: float

    def values(self) -> list[float]:
        count = int((self.upper - self.lower) / self.increment + 1e-9) + 1
        return [self.lower + i * self.increment for i in range(max(count, 0))]


@dataclass(frozen=True)
class EvalCommand:
    kind: str
    targets: tuple  # of Call
    parametric: Parametric | None = None
    manual_warmup: int | None = None


@dataclass(frozen=True)
class QueryAst:
    operator_defs: tuple
    eval_command: EvalCommand

    def operator(self, name: str) -> OperatorDef:
        for od in self.operator_defs:
            if od.name == name:
                return od
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # IDENT NUMBER STRING PUNCT EOF
    value: str
    line: int
    col: int


_LEX_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>//[^\n]*|\#[^\n]*)
      | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<string>"(?:[^"\\\n]|\\.)*")
      | (?P<punct>==|!=|<=|>=|[()\[\],;=<>+\-*/.])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _LEX_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, col)
        lexeme = m.group(0)
        if m.lastgroup == "number":
            tokens.append(Token("NUMBER", lexeme, line, col))
        elif m.lastgroup == "ident":
            tokens.append(Token("IDENT", lexeme, line, col))
        elif m.lastgroup == "string":
            if "\n" in lexeme:
                raise QuerySyntaxError("unterminated string literal", line, col)
            tokens.append(Token("STRING", lexeme, line, col))
        elif m.lastgroup == "punct":
            tokens.append(Token("PUNCT", lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("EOF", "", line, col))
    return tokens


def _unquote(lexeme: str) -> str:
    body = lexeme[1:-1]
    return body.replace('\\"', '"').replace("\\\\", "\\")


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


# ---------------------------------------------------------------------------
# Parser (recursive descent)
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tok
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def error(self, message: str, expected: tuple = ()):
        tok = self.tok
        raise QuerySyntaxError(message, tok.line, tok.col, expected)

    def at_punct(self, value: str) -> bool:
        return self.tok.kind == "PUNCT" and self.tok.value == value

    def expect_punct(self, value: str) -> Token:
        if not self.at_punct(value):
            self.error(f"unexpected {self.tok.value or 'end of input'!r}", (repr(value),))
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "IDENT":
            self.error(f"expected {what}", (what,))
        return self.advance()

    # query := opdef+ evalcmd ------------------------------------------------

    def parse_query(self) -> QueryAst:
        opdefs = []
        while not (self.tok.kind == "IDENT" and self.tok.value == "eval"):
            if self.tok.kind == "EOF":
                self.error("query ends before an eval command", ("eval",))
            opdefs.append(self.parse_opdef())
        if not opdefs:
            self.error("query must declare at least one operator")
        cmd = self.parse_evalcmd()
        if self.tok.kind != "EOF":
            self.error("trailing input after the eval command", ("end of input",))
        return QueryAst(tuple(opdefs), cmd)

    def parse_opdef(self) -> OperatorDef:
        name_tok = self.expect_ident("operator name")
        if name_tok.value in KEYWORDS:
            raise QuerySyntaxError(
                f"{name_tok.value!r} is a reserved word", name_tok.line, name_tok.col
            )
        self.expect_punct("(")
        params = []
        if not self.at_punct(")"):
            while True:
                p = self.expect_ident("parameter name")
                if p.value in KEYWORDS:
                    raise QuerySyntaxError(
                        f"{p.value!r} is a reserved word", p.line, p.col
                    )
                params.append(p.value)
                if self.at_punct(","):
                    self.advance()
                    continue
                break
        self.expect_punct(")")
        self.expect_punct("=")
        body = self.parse_expr()
        self.expect_punct(";")
        return OperatorDef(name_tok.value, tuple(params), body)

    # expr := if ... | s.eval(...) | next(call) | arith ----------------------

    def parse_expr(self):
        if self.tok.kind == "IDENT" and self.tok.value == "if":
            return self.parse_if()
        if self.tok.kind == "IDENT" and self.tok.value == "next":
            return self.parse_next()
        return self.parse_arith()

    def parse_if(self) -> If:
        self.advance()  # if
        self.expect_punct("(")
        cond = self.parse_compare()
        self.expect_punct(")")
        self._expect_keyword("then")
        then = self.parse_expr()
        self._expect_keyword("else")
        orelse = self.parse_expr()
        self._expect_keyword("fi")
        return If(cond, then, orelse)

    def _expect_keyword(self, kw: str):
        if not (self.tok.kind == "IDENT" and self.tok.value == kw):
            self.error(f"expected {kw!r}", (kw,))
        self.advance()

    def parse_next(self) -> Next:
        self.advance()  # next
        self.expect_punct("(")
        call = self.parse_call()
        self.expect_punct(")")
        return Next(call)

    def parse_compare(self) -> Compare:
        left = self.parse_arith()
        if self.tok.kind != "PUNCT" or self.tok.value not in ("==", "!=", "<", "<=", ">", ">="):
            self.error("expected a comparison operator", ("==", "!=", "<", "<=", ">", ">="))
        op = self.advance().value
        right = self.parse_arith()
        return Compare(op, left, right)

    def parse_call(self) -> Call:
        name_tok = self.expect_ident("operator name")
        self.expect_punct("(")
        args = []
        if not self.at_punct(")"):
            while True:
                if self.tok.kind == "STRING":
                    args.append(Str(_unquote(self.advance().value)))
                else:
                    args.append(self.parse_arith())
                if self.at_punct(","):
                    self.advance()
                    continue
                break
        self.expect_punct(")")
        return Call(name_tok.value, tuple(args))

    def parse_arith(self):
        node = self.parse_term()
        while self.tok.kind == "PUNCT" and self.tok.value in ("+", "-"):
            op = self.advance().value
            node = Arith(op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.tok.kind == "PUNCT" and self.tok.value in ("*", "/"):
            op = self.advance().value
            node = Arith(op, node, self.parse_factor())
        return node

    def parse_factor(self):
        tok = self.tok
        if tok.kind == "NUMBER":
            self.advance()
            return Num(float(tok.value))
        if self.at_punct("-"):
            self.advance()
            return Neg(self.parse_factor())
        if self.at_punct("("):
            self.advance()
            node = self.parse_arith()
            self.expect_punct(")")
            return node
        if tok.kind == "IDENT" and tok.value == "s":
            return self.parse_state_eval()
        if tok.kind == "IDENT":
            if tok.value in KEYWORDS:
                self.error(f"unexpected keyword {tok.value!r}")
            self.advance()
            return ParamRef(tok.value)
        self.error("expected a number, parameter, or s.eval(...)")

    def parse_state_eval(self) -> StateEval:
        self.advance()  # s
        self.expect_punct(".")
        self._expect_keyword("eval")
        self.expect_punct("(")
        tok = self.tok
        if tok.kind == "STRING":
            self.advance()
            arg = Str(_unquote(tok.value))
        elif tok.kind == "IDENT" and tok.value not in KEYWORDS:
            self.advance()
            arg = ParamRef(tok.value)
        else:
            self.error("s.eval takes a string literal or an operator parameter",
                       ("string", "parameter"))
        self.expect_punct(")")
        return StateEval(arg)

    # evalcmd ---------------------------------------------------------------

    def parse_evalcmd(self) -> EvalCommand:
        self._expect_keyword("eval")
        kind_tok = self.expect_ident("analysis kind")
        if kind_tok.value not in EVAL_KINDS:
            raise QuerySyntaxError(
                f"unknown eval kind {kind_tok.value!r}", kind_tok.line, kind_tok.col,
                EVAL_KINDS,
            )
        self.expect_punct("(")
        targets = []
        parametric = None
        manual_warmup = None
        if self.at_punct(")"):
            self.error("expected at least one E[...] target", ("E[",))
        while True:
            if self.tok.kind == "IDENT" and self.tok.value == "E":
                self.advance()
                self.expect_punct("[")
                targets.append(self.parse_call())
                self.expect_punct("]")
            elif self.tok.kind == "IDENT":
                parametric = self.parse_parametric_tail()
                break
            elif self.tok.kind == "NUMBER" or self.at_punct("-"):
                manual_warmup = self.parse_warmup_tail()
                break
            else:
                self.error("expected E[...] target", ("E[",))
            if self.at_punct(","):
                self.advance()
                continue
            break
        if not targets:
            self.error("expected at least one E[...] target", ("E[",))
        self.expect_punct(")")
        self.expect_punct(";")
        return EvalCommand(kind_tok.value, tuple(targets), parametric, manual_warmup)

    def parse_parametric_tail(self) -> Parametric:
        name_tok = self.expect_ident("parametric variable")
        nums = []
        for _ in range(3):
            self.expect_punct(",")
            nums.append(self.parse_signed_number())
        return Parametric(name_tok.value, *nums)

    def parse_warmup_tail(self) -> int:
        tok = self.tok
        value = self.parse_signed_number()
        if value < 0 or value != int(value):
            raise QuerySyntaxError("warmup must be a nonnegative integer",
                                   tok.line, tok.col)
        return int(value)

    def parse_signed_number(self) -> float:
        sign = 1.0
        if self.at_punct("-"):
            self.advance()
            sign = -1.0
        if self.tok.kind != "NUMBER":
            self.error("expected a number", ("number",))
        return sign * float(self.advance().value)


def parse(source_text: str) -> QueryAst:
    """Parse a query; raises :class:`QuerySyntaxError` with line/column info."""
    return _Parser(tokenize(source_text)).parse_query()


# ---------------------------------------------------------------------------
# Printer (parse . print round-trips)
# ---------------------------------------------------------------------------

def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def print_expr(node) -> str:
    if isinstance(node, Num):
        return format_number(node.value)
    if isinstance(node, Str):
        return _quote(node.value)
    if isinstance(node, ParamRef):
        return node.name
    if isinstance(node, Neg):
        return f"-{print_expr(node.operand)}"
    if isinstance(node, Arith):
        return f"({print_expr(node.left)} {node.op} {print_expr(node.right)})"
    if isinstance(node, Compare):
        return f"{print_expr(node.left)} {node.op} {print_expr(node.right)}"
    if isinstance(node, If):
        return (f"if ({print_expr(node.cond)}) then {print_expr(node.then)} "
                f"else {print_expr(node.orelse)} fi")
    if isinstance(node, StateEval):
        return f"s.eval({print_expr(node.arg)})"
    if isinstance(node, Next):
        return f"next({print_expr(node.call)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(print_expr(a) for a in node.args)})"
    raise TypeError(f"cannot print {node!r}")


def print_query(ast: QueryAst) -> str:
    lines = []
    for od in ast.operator_defs:
        lines.append(f"{od.name}({', '.join(od.params)}) = {print_expr(od.body)} ;")
    cmd = ast.eval_command
    parts = [f"E[ {print_expr(t)} ]" for t in cmd.targets]
    if cmd.parametric is not None:
        p = cmd.parametric
        parts.append(f"{p.param}, {format_number(p.lower)}, "
                     f"{format_number(p.increment)}, {format_number(p.upper)}")
    if cmd.manual_warmup is not None:
        parts.append(str(cmd.manual_warmup))
    lines.append(f"eval {cmd.kind}({', '.join(parts)}) ;")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Semantic checker
# ---------------------------------------------------------------------------

def _walk(node):
    yield node
    for attr in ("left", "right", "operand", "cond", "then", "orelse", "arg", "call"):
        child = getattr(node, attr, None)
        if child is not None and not isinstance(child, (str, float, int)):
            yield from _walk(child)
    if isinstance(node, Call):
        for a in node.args:
            yield from _walk(a)


def _has_next(node) -> bool:
    return any(isinstance(n, Next) for n in _walk(node))


def check(ast: QueryAst) -> list[Diagnostic]:
    """Semantic validation; an empty list means the query is well-formed."""
    diags = []
    ops = {}
    for od in ast.operator_defs:
        if od.name in ops:
            diags.append(Diagnostic("E-DUP-OP", f"operator {od.name!r} defined twice"))
        ops[od.name] = od
        if len(set(od.params)) != len(od.params):
            diags.append(Diagnostic("E-DUP-PARAM",
                                    f"operator {od.name!r} repeats a parameter name"))
        for node in _walk(od.body):
            if isinstance(node, ParamRef) and node.name not in od.params:
                diags.append(Diagnostic(
                    "E-UNDEF-PARAM",
                    f"operator {od.name!r} references undeclared parameter {node.name!r}"))
            if isinstance(node, Next):
                callee = ops.get(node.call.name) or next(
                    (o for o in ast.operator_defs if o.name == node.call.name), None)
                if callee is None:
                    diags.append(Diagnostic(
                        "E-UNDEF-OP",
                        f"next() calls unknown operator {node.call.name!r}"))
            if isinstance(node, Call):
                callee = next((o for o in ast.operator_defs if o.name == node.name), None)
                if callee is not None and len(node.args) != len(callee.params):
                    diags.append(Diagnostic(
                        "E-ARITY",
                        f"call {node.name!r} passes {len(node.args)} arguments, "
                        f"operator declares {len(callee.params)}"))

    cmd = ast.eval_command
    all_ops = {od.name: od for od in ast.operator_defs}
    for target in cmd.targets:
        callee = all_ops.get(target.name)
        if callee is None:
            diags.append(Diagnostic("E-UNDEF-OP",
                                    f"target references unknown operator {target.name!r}"))
            continue
        if len(target.args) != len(callee.params):
            diags.append(Diagnostic(
                "E-ARITY",
                f"call {target.name!r} passes {len(target.args)} arguments, "
                f"operator declares {len(callee.params)}"))
        for node in target.args:
            for sub in _walk(node):
                if isinstance(sub, ParamRef):
                    if cmd.parametric is None or sub.name != cmd.parametric.param:
                        diags.append(Diagnostic(
                            "E-UNDEF-PARAM",
                            f"target argument references {sub.name!r}, which is not "
                            f"the parametric variable"))
        if cmd.kind in STEADY_STATE_KINDS and _has_next(callee.body):
            diags.append(Diagnostic(
                "E-SS-NEXT",
                f"steady-state operators must be next-free, but {callee.name!r} "
                f"uses next(...)"))

    if cmd.parametric is not None:
        p = cmd.parametric
        if p.increment <= 0:
            diags.append(Diagnostic("E-PARAM-RANGE", "parametric increment must be positive"))
        elif p.lower > p.upper:
            diags.append(Diagnostic("E-PARAM-RANGE", "empty parametric range"))
        if cmd.kind in STEADY_STATE_KINDS:
            diags.append(Diagnostic(
                "E-SS-PARAMETRIC",
                f"{cmd.kind} does not support a parametric block"))
    if cmd.kind in MANUAL_KINDS and cmd.manual_warmup is None:
        diags.append(Diagnostic(
            "E-MANUAL-WARMUP",
            f"{cmd.kind} requires a warmup length (trailing number or --warmup)"))
    if cmd.manual_warmup is not None and cmd.kind not in MANUAL_KINDS:
        diags.append(Diagnostic(
            "E-MANUAL-WARMUP", f"{cmd.kind} does not take a warmup length"))
    return diags


def check_or_raise(ast: QueryAst) -> QueryAst:
    diags = check(ast)
    if diags:
        raise QueryCheckError(diags)
    return ast


# ---------------------------------------------------------------------------
# Expansion into estimation targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpandedTarget:
    """One fully instantiated random variable: an operator call with
    concrete argument values (floats or strings)."""

    target_id: str
    op_name: str
    arg_values: tuple
    param_value: float | None = None  # the parametric value, if any


class EvalRuntimeError(Exception):
    """Query evaluation failure at simulation time."""


def _const_value(node, parametric_env: dict):
    """Evaluate a target argument down to a float or string."""
    if isinstance(node, Str):
        return node.value
    if isinstance(node, Num):
        return node.value
    if isinstance(node, ParamRef):
        return parametric_env[node.name]
    if isinstance(node, Neg):
        return -_const_value(node.operand, parametric_env)
    if isinstance(node, Arith):
        left = _const_value(node.left, parametric_env)
        right = _const_value(node.right, parametric_env)
        return {"+": left + right, "-": left - right,
                "*": left * right, "/": left / right}[node.op]
    raise EvalRuntimeError(f"target argument {node!r} is not a constant")


def _render_value(v) -> str:
    if isinstance(v, str):
        return _quote(v)
    return format_number(v)


def _target_id(name: str, arg_values: tuple) -> str:
    return f"{name}({','.join(_render_value(v) for v in arg_values)})"


def expand(ast: QueryAst) -> list[ExpandedTarget]:
    """Instantiate all (target, parametric value) pairs, target-major."""
    cmd = ast.eval_command
    out = []
    for target in cmd.targets:
        if cmd.parametric is not None:
            for value in cmd.parametric.values():
                env = {cmd.parametric.param: value}
                args = tuple(_const_value(a, env) for a in target.args)
                out.append(ExpandedTarget(_target_id(target.name, args),
                                          target.name, args, value))
        else:
            args = tuple(_const_value(a, {}) for a in target.args)
            out.append(ExpandedTarget(_target_id(target.name, args),
                                      target.name, args, None))
    return out


# ---------------------------------------------------------------------------
# Evaluation against a simulator
# ---------------------------------------------------------------------------

@dataclass
class _NextSignal:
    call_name: str
    arg_values: tuple


def _eval_state_arg(arg, env) -> str:
    if isinstance(arg, Str):
        return arg.value
    value = env[arg.name]
    if isinstance(value, str):
        return value
    return format_number(value)


def _eval_expr(node, env: dict, handle):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, ParamRef):
        return env[node.name]
    if isinstance(node, Str):
        return node.value
    if isinstance(node, Neg):
        return -_eval_expr(node.operand, env, handle)
    if isinstance(node, Arith):
        left = _eval_expr(node.left, env, handle)
        right = _eval_expr(node.right, env, handle)
        try:
            return {"+": left + right, "-": left - right,
                    "*": left * right, "/": left / right}[node.op]
        except TypeError:
            raise EvalRuntimeError("arithmetic on a string argument") from None
    if isinstance(node, StateEval):
        return handle.eval(_eval_state_arg(node.arg, env))
    if isinstance(node, If):
        cond = node.cond
        left = _eval_expr(cond.left, env, handle)
        right = _eval_expr(cond.right, env, handle)
        holds = {"==": left == right, "!=": left != right, "<": left < right,
                 "<=": left <= right, ">": left > right, ">=": left >= right}[cond.op]
        return _eval_expr(node.then if holds else node.orelse, env, handle)
    if isinstance(node, Next):
        args = tuple(_eval_expr(a, env, handle) for a in node.call.args)
        return _NextSignal(node.call.name, args)
    raise EvalRuntimeError(f"cannot evaluate {node!r}")


def _eval_call(ast: QueryAst, name: str, arg_values: tuple, handle):
    od = ast.operator(name)
    env = dict(zip(od.params, arg_values))
    return _eval_expr(od.body, env, handle)


def evaluate_now(ast: QueryAst, target: ExpandedTarget, handle) -> float:
    """Evaluate a next-free target in the simulator's current state."""
    result = _eval_call(ast, target.op_name, target.arg_values, handle)
    if isinstance(result, _NextSignal):
        raise EvalRuntimeError(f"target {target.target_id!r} is not next-free")
    return float(result)


def evaluate_transient(targets, ast: QueryAst, handle,
                       max_steps: int = 10 ** 6) -> dict[str, float]:
    """Co-evaluate transient targets on one freshly reset trajectory.

    All targets share the same simulation; a step is taken only while some
    target still needs one, so the run stops at the largest step any target
    requires.  Returns one sample per target_id.
    """
    pending = {t.target_id: (t.op_name, t.arg_values) for t in targets}
    done: dict[str, float] = {}
    steps = 0
    while pending:
        still: dict[str, tuple] = {}
        for tid, (name, args) in pending.items():
            result = _eval_call(ast, name, args, handle)
            if isinstance(result, _NextSignal):
                still[tid] = (result.call_name, result.arg_values)
            else:
                done[tid] = float(result)
        if not still:
            break
        if steps >= max_steps:
            raise EvalRuntimeError(
                f"query did not terminate within {max_steps} steps "
                f"(pending: {sorted(still)[:3]})")
        handle.next()
        steps += 1
        pending = still
    return done

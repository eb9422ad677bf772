"""Query language: parsing goldens, diagnostics, printing, expansion, evaluation."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from smcheck import query
from smcheck.models import ConstantModel, NormalModel
from smcheck.query import (
    Call,
    Compare,
    Diagnostic,
    EvalRuntimeError,
    If,
    Next,
    Num,
    ParamRef,
    Parametric,
    QueryCheckError,
    QuerySyntaxError,
    StateEval,
    Str,
    check,
    check_or_raise,
    evaluate_now,
    evaluate_transient,
    expand,
    parse,
    print_query,
)

from conftest import STEADY_LISTING, TRANSIENT_LISTING


# ---------------------------------------------------------------------------
# Parsing goldens
# ---------------------------------------------------------------------------

def test_transient_listing_golden_ast(listing_transient_ast):
    ast = listing_transient_ast
    assert len(ast.operator_defs) == 1
    od = ast.operator_defs[0]
    assert od.name == "obsAtStep"
    assert od.params == ("step", "obs")
    assert od.body == If(
        Compare("==", StateEval(Str("steps")), ParamRef("step")),
        StateEval(ParamRef("obs")),
        Next(Call("obsAtStep", (ParamRef("step"), ParamRef("obs")))),
    )
    cmd = ast.eval_command
    assert cmd.kind == "autoIR"
    assert len(cmd.targets) == 2
    assert cmd.targets[0] == Call("obsAtStep", (ParamRef("step"), Str("tothouseholds")))
    assert cmd.targets[1] == Call(
        "obsAtStep", (ParamRef("step"), Str("abs(tothouseholds - histothouseholds)")))
    assert cmd.parametric == Parametric("step", 0.0, 1.0, 570.0)
    assert cmd.manual_warmup is None
    assert check(ast) == []


def test_transient_listing_expands_to_1142_targets(listing_transient_ast):
    targets = expand(listing_transient_ast)
    assert len(targets) == 2 * 571
    # Target-major: all values of the first target precede the second.
    assert targets[0].param_value == 0.0
    assert targets[570].param_value == 570.0
    assert "tothouseholds" in targets[0].target_id
    assert targets[571].target_id.startswith("obsAtStep")
    assert "histothouseholds" in targets[571].target_id
    assert len({t.target_id for t in targets}) == 1142


def test_steady_listing_golden(listing_steady_ast):
    ast = listing_steady_ast
    assert ast.eval_command.kind == "autoBM"
    assert ast.eval_command.targets == (Call("obs", (Str("count turtles"),)),)
    assert check(ast) == []
    assert len(expand(ast)) == 1


def test_manual_warmup_trailing_number():
    ast = parse('obs(o) = s.eval(o) ;\neval manualRD(E[ obs("x") ], 250) ;\n')
    assert ast.eval_command.manual_warmup == 250
    assert check(ast) == []


def test_parametric_values_inclusive():
    p = Parametric("t", 0.0, 1.0, 570.0)
    assert len(p.values()) == 571
    assert p.values()[0] == 0.0
    assert p.values()[-1] == 570.0
    assert Parametric("t", 2.0, 2.0, 7.0).values() == [2.0, 4.0, 6.0]
    assert Parametric("t", 5.0, 1.0, 5.0).values() == [5.0]


def test_comments_are_ignored():
    src = ('// heading comment\nobs(o) = s.eval(o) ; # trailing\n'
           'eval autoBM(E[ obs("x") ]) ;\n')
    assert check(parse(src)) == []


# ---------------------------------------------------------------------------
# Syntax errors
# ---------------------------------------------------------------------------

def test_syntax_error_positions():
    with pytest.raises(QuerySyntaxError) as exc:
        parse('obs(o) = s.eval(o) @;\neval autoBM(E[ obs("x") ]) ;\n')
    assert exc.value.line == 1
    assert exc.value.col == 20

    with pytest.raises(QuerySyntaxError) as exc:
        parse('obs(o) = s.eval(o) ;\neval bogusKind(E[ obs("x") ]) ;\n')
    assert "bogusKind" in str(exc.value)
    assert exc.value.line == 2


def test_missing_eval_command():
    with pytest.raises(QuerySyntaxError):
        parse("obs(o) = s.eval(o) ;\n")


def test_reserved_words_rejected():
    with pytest.raises(QuerySyntaxError):
        parse('if(o) = s.eval(o) ;\neval autoBM(E[ if("x") ]) ;\n')
    with pytest.raises(QuerySyntaxError):
        parse('obs(next) = s.eval(next) ;\neval autoBM(E[ obs("x") ]) ;\n')


def test_next_only_in_tail_position():
    # next(...) inside arithmetic is not derivable from the grammar.
    with pytest.raises(QuerySyntaxError):
        parse('op(t) = 1 + next(op(t)) ;\neval autoIR(E[ op(0) ]) ;\n')


def test_trailing_garbage():
    with pytest.raises(QuerySyntaxError):
        parse('obs(o) = s.eval(o) ;\neval autoBM(E[ obs("x") ]) ; extra\n')


# ---------------------------------------------------------------------------
# Semantic diagnostics
# ---------------------------------------------------------------------------

def _codes(src):
    return sorted(d.code for d in check(parse(src)))


def test_diag_duplicate_operator():
    src = ('a(x) = s.eval(x) ;\na(y) = s.eval(y) ;\n'
           'eval autoBM(E[ a("v") ]) ;\n')
    assert "E-DUP-OP" in _codes(src)


def test_diag_undefined_parameter():
    src = 'a(x) = s.eval(y) ;\neval autoBM(E[ a("v") ]) ;\n'
    assert "E-UNDEF-PARAM" in _codes(src)


def test_diag_unknown_operator_target():
    src = 'a(x) = s.eval(x) ;\neval autoBM(E[ b("v") ]) ;\n'
    assert "E-UNDEF-OP" in _codes(src)


def test_diag_arity():
    src = 'a(x, y) = s.eval(x) ;\neval autoBM(E[ a("v") ]) ;\n'
    assert "E-ARITY" in _codes(src)


def test_diag_steady_state_rejects_next():
    src = ('a(t) = if (s.eval("steps") == t) then s.eval("x") '
           'else next(a(t)) fi ;\neval autoBM(E[ a(5) ]) ;\n')
    assert "E-SS-NEXT" in _codes(src)


def test_diag_steady_state_rejects_parametric():
    src = 'a(t) = s.eval("x") ;\neval autoBM(E[ a(t) ], t, 0, 1, 5) ;\n'
    assert "E-SS-PARAMETRIC" in _codes(src)


def test_diag_empty_parametric_range():
    src = ('a(t) = if (s.eval("steps") == t) then s.eval("x") else next(a(t)) fi ;\n'
           'eval autoIR(E[ a(t) ], t, 5, 1, 2) ;\n')
    diags = check(parse(src))
    assert any(d.code == "E-PARAM-RANGE" and "empty" in d.message for d in diags)


def test_diag_nonpositive_increment():
    src = ('a(t) = if (s.eval("steps") == t) then s.eval("x") else next(a(t)) fi ;\n'
           'eval autoIR(E[ a(t) ], t, 0, 0, 5) ;\n')
    assert "E-PARAM-RANGE" in _codes(src)


def test_diag_manual_warmup_required():
    src = 'a() = s.eval("x") ;\neval manualBM(E[ a() ]) ;\n'
    assert "E-MANUAL-WARMUP" in _codes(src)


def test_diag_warmup_on_non_manual_kind():
    src = 'a() = s.eval("x") ;\neval autoBM(E[ a() ], 100) ;\n'
    assert "E-MANUAL-WARMUP" in _codes(src)


def test_check_or_raise_collects_everything():
    src = ('a(x, x) = s.eval(y) ;\n'
           'eval autoBM(E[ b("v") ], t, 0, 1, 5) ;\n')
    with pytest.raises(QueryCheckError) as exc:
        check_or_raise(parse(src))
    codes = {d.code for d in exc.value.diagnostics}
    assert {"E-DUP-PARAM", "E-UNDEF-PARAM", "E-UNDEF-OP",
            "E-SS-PARAMETRIC"} <= codes


# ---------------------------------------------------------------------------
# Printing round-trips
# ---------------------------------------------------------------------------

def test_print_parse_round_trip_listings():
    for src in (TRANSIENT_LISTING, STEADY_LISTING):
        ast = parse(src)
        assert parse(print_query(ast)) == ast


def test_print_round_trip_tricky_numbers_and_strings():
    src = ('op(t) = if (s.eval("a\\"b") >= t / 3) then 0.125 - -2 '
           'else next(op(t + 1)) fi ;\n'
           'eval autoIR(E[ op(1.5) ], E[ op(2e3) ]) ;\n')
    ast = parse(src)
    assert parse(print_query(ast)) == ast


_expr = st.deferred(lambda: st.one_of(
    st.floats(min_value=0, max_value=1e6, allow_nan=False).map(query.Num),
    st.just(ParamRef("t")),
    st.builds(StateEval, st.one_of(
        st.just(Str("x")), st.just(ParamRef("t")))),
    st.builds(query.Arith, st.sampled_from("+-*/"), _expr, _expr),
    st.builds(query.Neg, _expr),
))


@given(_expr)
@settings(max_examples=150, deadline=None)
def test_print_parse_round_trip_random_bodies(body):
    ast = query.QueryAst(
        (query.OperatorDef("op", ("t",), body),),
        query.EvalCommand("autoIR", (Call("op", (Num(1.0),)),)),
    )
    printed = print_query(ast)
    assert parse(printed) == ast


def test_fuzz_parser_never_crashes_uncontrolled():
    rng = random.Random(1234)
    alphabet = 'abeEfinsvx01."()[],;=<>+-*/ \n\t_'
    good = bad = 0
    for _ in range(20000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 60)))
        try:
            parse(text)
            good += 1
        except QuerySyntaxError:
            bad += 1
    assert good + bad == 20000


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def test_evaluate_now_constant():
    ast = parse('twice(o) = 2 * s.eval(o) ;\neval autoBM(E[ twice("x") ]) ;\n')
    target = expand(ast)[0]
    sim = ConstantModel(c=3.5)
    sim.reset(0)
    assert evaluate_now(ast, target, sim) == 7.0


def test_evaluate_now_rejects_next():
    src = ('later(t) = if (s.eval("steps") == t) then s.eval("x") '
           'else next(later(t)) fi ;\neval autoIR(E[ later(5) ]) ;\n')
    ast = parse(src)
    target = expand(ast)[0]
    sim = ConstantModel()
    sim.reset(0)
    with pytest.raises(EvalRuntimeError):
        evaluate_now(ast, target, sim)


def test_evaluate_transient_steps_to_largest_target():
    src = ('at(t) = if (s.eval("steps") == t) then s.eval("x") '
           'else next(at(t)) fi ;\n'
           'eval autoIR(E[ at(t) ], t, 2, 3, 8) ;\n')
    ast = parse(src)
    targets = expand(ast)
    sim = ConstantModel(c=1.25)
    sim.reset(0)
    samples = evaluate_transient(targets, ast, sim)
    assert set(samples) == {t.target_id for t in targets}
    assert all(v == 1.25 for v in samples.values())
    assert sim.current_step == 8


def test_evaluate_transient_argument_evolution():
    # The recursion may rewrite its own arguments each step.
    src = ('count(t) = if (t <= 0) then s.eval("steps") '
           'else next(count(t - 1)) fi ;\n'
           'eval autoIR(E[ count(4) ]) ;\n')
    ast = parse(src)
    sim = ConstantModel()
    sim.reset(0)
    samples = evaluate_transient(expand(ast), ast, sim)
    assert list(samples.values()) == [4.0]


def test_evaluate_transient_nontermination_guard():
    src = ('forever(t) = if (s.eval("x") > 1) then 1 '
           'else next(forever(t)) fi ;\n'
           'eval autoIR(E[ forever(0) ]) ;\n')
    ast = parse(src)
    sim = ConstantModel(c=0.0)
    sim.reset(0)
    with pytest.raises(EvalRuntimeError):
        evaluate_transient(expand(ast), ast, sim, max_steps=50)


def test_evaluate_transient_shares_one_trajectory():
    # Both targets observe the same replication: identical step -> identical value.
    src = ('at(t) = if (s.eval("steps") == t) then s.eval("x") '
           'else next(at(t)) fi ;\n'
           'atTwice(t) = if (s.eval("steps") == t) then 2 * s.eval("x") '
           'else next(atTwice(t)) fi ;\n'
           'eval autoIR(E[ at(3) ], E[ atTwice(3) ]) ;\n')
    ast = parse(src)
    sim = NormalModel()
    sim.reset(42)
    samples = evaluate_transient(expand(ast), ast, sim)
    vals = list(samples.values())
    assert vals[1] == pytest.approx(2 * vals[0], rel=1e-12)


def test_diagnostic_str():
    d = Diagnostic("E-ARITY", "call passes 2 arguments")
    assert str(d) == "E-ARITY: call passes 2 arguments"

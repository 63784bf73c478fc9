import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoflow import scalar_expr as sx
from geoflow.errors import EvaluationError, ParseError, UnknownIdentifierError

N = 2
VARS = ["t", "q1", "q2", "dq1", "dq2"]


def bind(t=0.3, q1=0.7, q2=-0.4, dq1=0.5, dq2=1.2):
    return {"t": t, "q1": q1, "q2": q2, "dq1": dq1, "dq2": dq2}


def test_precedence_tree():
    e = sx.parse("q1 + 2*q2^2", N)
    assert e == sx.Binary("+", sx.Var("q1"), sx.Binary("*", sx.Const(2.0), sx.Binary("^", sx.Var("q2"), sx.Const(2.0))))


def test_power_is_right_associative():
    assert sx.evaluate(sx.parse("2^3^2", N), bind()) == 512.0


def test_unary_minus_binds_looser_than_power():
    assert sx.evaluate(sx.parse("-q1^2", N), bind(q1=3.0)) == -9.0


def test_constants_fold_into_tree():
    e = sx.parse("k*q1", 1, {"k": 4.0})
    assert e == sx.Binary("*", sx.Const(4.0), sx.Var("q1"))
    assert sx.evaluate(sx.parse("pi", 1), {}) == math.pi


def test_incomplete_expression_reports_offset():
    with pytest.raises(ParseError) as info:
        sx.parse("q1 +", N)
    assert info.value.offset == 4
    assert "number" in info.value.expected


def test_offset_is_in_bytes():
    with pytest.raises(ParseError) as info:
        sx.parse("q1 + é", N)
    assert info.value.offset == 5


@pytest.mark.parametrize("text", ["q3", "dq0", "foo(q1)", "x + 1"])
def test_unknown_identifiers(text):
    with pytest.raises(UnknownIdentifierError):
        sx.parse(text, N)


@pytest.mark.parametrize("text", ["(q1", "q1)", "sin q1", "q1 q2", "*q1", ""])
def test_malformed_inputs(text):
    with pytest.raises(ParseError):
        sx.parse(text, N)


def test_domain_error_carries_point():
    e = sx.parse("log(q1)", N)
    with pytest.raises(EvaluationError) as info:
        sx.evaluate(e, bind(q1=-1.0))
    assert info.value.point is not None


def test_differentiate_product_and_chain():
    e = sx.parse("q1*sin(q2*dq1)", N)
    d = sx.differentiate(e, "dq1")
    b = bind()
    expect = b["q1"] * math.cos(b["q2"] * b["dq1"]) * b["q2"]
    assert sx.evaluate(d, b) == pytest.approx(expect, rel=1e-14)


def test_simplifying_builders():
    q = sx.Var("q1")
    assert sx.mul(sx.ZERO, q) == sx.ZERO
    assert sx.add(q, sx.ZERO) == q
    assert sx.differentiate(sx.parse("q2 + t", N), "q1") == sx.ZERO


def test_compiled_matches_tree_evaluation():
    exprs = [sx.parse(s, N) for s in ("q1*dq2 - t", "exp(-q2)*cos(dq1)", "sqrt(1 + q1^2)")]
    fn = sx.compile_exprs(exprs)
    b = bind()
    got = fn([b["t"], b["q1"], b["q2"]], [b["dq1"], b["dq2"]])
    assert got == pytest.approx([sx.evaluate(e, b) for e in exprs], rel=1e-15)


# --- property tests ------------------------------------------------------

leaf = st.one_of(
    st.sampled_from(VARS).map(sx.Var),
    st.floats(min_value=0.0, max_value=50.0, allow_nan=False).map(lambda v: sx.Const(round(v, 3))),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: sx.Binary(*t)),
        st.tuples(st.sampled_from(("neg",) + sx.FUNCTIONS), children).map(lambda t: sx.Unary(*t)),
    )


trees = st.recursive(leaf, _extend, max_leaves=12)


@given(trees)
def test_print_parse_round_trip(e):
    assert sx.parse(sx.to_string(e), N) == e


@given(trees)
def test_printing_is_a_fixed_point(e):
    s = sx.to_string(e)
    assert sx.to_string(sx.parse(s, N)) == s


smooth = st.recursive(
    leaf,
    lambda ch: st.one_of(
        st.tuples(st.sampled_from("+-*"), ch, ch).map(lambda t: sx.Binary(*t)),
        st.tuples(st.sampled_from(("neg", "sin", "cos")), ch).map(lambda t: sx.Unary(*t)),
    ),
    max_leaves=8,
)


@given(smooth, st.sampled_from(VARS))
def test_derivative_matches_central_difference(e, var):
    b = {k: v * 0.3 for k, v in bind().items()}
    d = sx.evaluate(sx.differentiate(e, var), b)
    h = 1e-5

    def at(s):
        bb = dict(b)
        bb[var] += s
        return sx.evaluate(e, bb)

    fd = (at(h) - at(-h)) / (2 * h)
    scale = max(1.0, abs(d), abs(at(0.0)))
    assert abs(d - fd) <= 1e-5 * scale


@given(smooth)
def test_substitution_commutes_with_evaluation(e):
    repl = sx.parse("q2*t + 1", N)
    b = bind()
    direct = sx.evaluate(sx.substitute(e, {"q1": repl}), b)
    bb = dict(b, q1=sx.evaluate(repl, b))
    assert direct == pytest.approx(sx.evaluate(e, bb), rel=1e-12, abs=1e-12)


def test_free_vars_and_velocity_flag():
    e = sx.parse("q1 + dq2*t", N)
    assert sx.free_vars(e) == {"q1", "dq2", "t"}
    assert sx.mentions_velocity(e)
    assert not sx.mentions_velocity(sx.parse("q1*t", N))


def test_variable_index_bound_is_enforced():
    with pytest.raises(ValueError):
        sx.check_dimension(sx.parse("q2", 2), 1)


def test_finite_difference_slope_is_two():
    # central differences of a smooth function converge at second order
    e = sx.parse("sin(q1)*exp(q1)", 1)
    exact = sx.evaluate(sx.differentiate(e, "q1"), {"q1": 0.4})
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        fd = (sx.evaluate(e, {"q1": 0.4 + h}) - sx.evaluate(e, {"q1": 0.4 - h})) / (2 * h)
        errs.append(abs(fd - exact))
    slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.allclose(slopes, 2.0, atol=0.05)


def test_small_examples():
    assert sx.parse("dq1^2", 1) == sx.Binary("^", sx.Var("dq1"), sx.Const(2.0))
    assert sx.evaluate(sx.parse("sin(q2)/ (1+t)", 2), {"t": 0.0, "q2": math.pi / 2}) == 1.0
    assert sx.evaluate(sx.parse("exp(0)+cos(0)", 1), {}) == 2.0
    assert sx.evaluate(sx.parse("q1*q1", 1), {"q1": -2.0}) == 4.0
    assert sx.to_string(sx.differentiate(sx.parse("q1^2", 1), "q1")) == "2*q1"
    assert sx.differentiate(sx.parse("-k*q1", 1, {"k": 1.0}), "dq1") == sx.ZERO


def test_leading_minus_applies_to_first_factor():
    e = sx.parse("-k*q1", 1, {"k": 1.0})
    assert e == sx.Binary("*", sx.Unary("neg", sx.Const(1.0)), sx.Var("q1"))
    assert sx.evaluate(e, {"q1": 3.0}) == -3.0

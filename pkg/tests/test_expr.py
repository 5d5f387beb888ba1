import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from anisolve import expr as ex


@pytest.mark.parametrize(
    "src, env, expected",
    [
        ("2+3*4", {}, 14.0),
        ("2^3^2", {}, 512.0),
        ("(2^3)^2", {}, 64.0),
        ("-2^2", {}, -4.0),
        ("2^-1", {}, 0.5),
        ("x*(1-x)/2", {"x": 0.5}, 0.125),
        ("sin(3.141592653589793*x)", {"x": 0.5}, 1.0),
        ("3 + tanh(t)", {"t": 0.0}, 3.0),
        ("min(u, 2) + max(s, -1)", {"u": 5.0, "s": -3.0}, 1.0),
        ("clamp(7, 2.5, 4)", {}, 4.0),
        ("abs(-1.5e1)", {}, 15.0),
        ("exp(0) + cos(0)", {}, 2.0),
        ("10/4/5", {}, 0.5),
        ("8-3-2", {}, 3.0),
    ],
)
def test_examples(src, env, expected):
    assert ex.evaluate(ex.parse(src), env) == pytest.approx(expected, rel=1e-15)


def test_clamp_near_upper_bound_is_not_clamped():
    val = ex.evaluate(ex.parse("clamp(tanh(u)+3, 2.5, 4)"), {"u": 10.0})
    assert val == math.tanh(10.0) + 3
    assert val < 4.0


@pytest.mark.parametrize(
    "src, offset",
    [("1+", 2), ("foo(1)", 0), ("sin(1,2)", 0), ("x y", 2), ("2^", 2), ("@", 0), ("(1", 2), ("q", 0)],
)
def test_parse_errors_carry_offset(src, offset):
    with pytest.raises(ex.ParseError) as info:
        ex.parse(src)
    assert info.value.offset == offset


def test_offset_counts_bytes_not_characters():
    # 'é' is two bytes in UTF-8
    with pytest.raises(ex.ParseError) as info:
        ex.parse("1 + é")
    assert info.value.offset == 4


@pytest.mark.parametrize(
    "src, env",
    [
        ("1/x", {"x": 0.0}),
        ("0^(-1)", {}),
        ("(-2)^0.5", {}),
        ("exp(1000)", {}),
        ("clamp(1, 3, 2)", {}),
        ("y", {"x": 1.0}),
    ],
)
def test_evaluation_errors(src, env):
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.parse(src), env)


def test_array_error_reports_first_bad_index():
    x = np.array([1.0, 2.0, 0.0, 0.0])
    with pytest.raises(ex.EvalError) as info:
        ex.evaluate(ex.parse("1/x"), {"x": x})
    assert info.value.index == 2


def test_array_evaluation_broadcasts():
    x = np.linspace(0, 1, 5)
    out = ex.evaluate(ex.parse("x^2 + 1"), {"x": x})
    np.testing.assert_array_equal(out, x**2 + 1)
    assert isinstance(ex.evaluate(ex.parse("2"), {}), float)


def test_free_variables_and_constants():
    e = ex.parse("x + sin(t) * 2")
    assert ex.free_variables(e) == {"x", "t"}
    assert not ex.is_constant(e)
    c = ex.parse("3 + 2^2")
    assert ex.is_constant(c)
    assert ex.constant_value(c) == 7.0


# --- generated corpus ---------------------------------------------------

_LEAF = st.one_of(
    st.integers(0, 9).map(str),
    st.sampled_from(["x", "0.5", "2.25"]),
)


def _compound(children):
    binop = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda t: f"{t[0]}{t[1]}{t[2]}"
    )
    return st.one_of(
        binop,
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"({c})"),
        st.tuples(st.sampled_from(["sin", "cos", "tanh", "abs"]), children).map(
            lambda t: f"{t[0]}({t[1]})"
        ),
        st.tuples(st.sampled_from(["min", "max"]), children, children).map(
            lambda t: f"{t[0]}({t[1]}, {t[2]})"
        ),
    )


EXPRESSIONS = st.recursive(_LEAF, _compound, max_leaves=8)

_PY_ENV = {
    "sin": math.sin,
    "cos": math.cos,
    "tanh": math.tanh,
    "abs": abs,
    "min": min,
    "max": max,
}


def _python_value(src, x):
    """Reference value from Python's own parser, which shares the precedence
    table once '^' is spelled '**'."""
    try:
        val = eval(src.replace("^", "**"), {"__builtins__": {}}, {**_PY_ENV, "x": x})
    except (ZeroDivisionError, OverflowError, ValueError):
        return None
    if isinstance(val, complex) or not math.isfinite(val):
        return None
    return float(val)


@settings(max_examples=400, deadline=None)
@given(EXPRESSIONS, st.floats(-2.0, 2.0))
def test_precedence_matches_reference(src, x):
    expected = _python_value(src, x)
    try:
        got = ex.evaluate(ex.parse(src), {"x": x})
    except ex.EvalError:
        got = None
    assume(expected is not None and got is not None)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


@settings(max_examples=400, deadline=None)
@given(EXPRESSIONS)
def test_round_trip_is_structural_identity(src):
    tree = ex.parse(src)
    assert ex.parse(ex.to_source(tree)) == tree

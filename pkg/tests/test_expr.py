import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divstab.catalog import cubic_3d, damped_oscillator, linear_field, partially_stable, two_equilibria
from divstab.expr import (Add, Const, Div, DomainError, Func, Mul, Neg, ParseError, Pow, Sub, Var,
                          VectorField, diff_expr, divergence, eval_expr, fd_divergence, parse_expr,
                          to_text)


def annulus_points(n, count, seed, r_min=0.1, r_max=2.0):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(r_min, r_max, size=(count, 1))


# -- parser -----------------------------------------------------------------

def test_parse_single_variable():
    assert parse_expr("x2", 2) == Var(2)


def test_parse_polynomial_evaluates_by_hand():
    e = parse_expr("-x1 - x1^2*x2 - x2^3 + 0*x1", 2)
    assert eval_expr(e, (1.0, 1.0)) == -3.0


def test_unbalanced_parenthesis_offset():
    with pytest.raises(ParseError) as info:
        parse_expr("x1^(2", 2)
    assert info.value.offset == 5


@pytest.mark.parametrize("text, offset", [
    ("x1 +", 4),
    ("x1 $ x2", 3),
    ("2*y1", 2),
    ("x1^2^3", 4),
    ("(x1", 3),
])
def test_syntax_errors(text, offset):
    with pytest.raises(ParseError) as info:
        parse_expr(text, 2)
    assert info.value.offset == offset


def test_variable_out_of_range():
    with pytest.raises(ParseError, match="out of range"):
        parse_expr("x1 + x3", 2)


def test_whitespace_and_numbers():
    e = parse_expr("  2.5e1 *x1+ .5 ", 1)
    assert eval_expr(e, (2.0,)) == pytest.approx(50.5)


def test_unary_minus_binds_looser_than_power():
    assert eval_expr(parse_expr("-x1^2", 1), (3.0,)) == -9.0
    assert eval_expr(parse_expr("x1^-1", 1), (4.0,)) == 0.25
    assert eval_expr(parse_expr("(-x1)^2", 1), (3.0,)) == 9.0


def test_functions():
    e = parse_expr("sqrt(x1) + exp(x2) + ln(x1) + sin(x2) + cos(x2) + abs(x1 - 10)", 2)
    want = math.sqrt(4) + math.exp(0.5) + math.log(4) + math.sin(0.5) + math.cos(0.5) + 6
    assert eval_expr(e, (4.0, 0.5)) == pytest.approx(want, rel=1e-14)


# -- evaluation -------------------------------------------------------------

def test_eval_oscillator_divergence_closed_form():
    e = parse_expr("-x1^2 - 3*x2^2", 2)
    assert eval_expr(e, (1.0, 1.0)) == -4.0


def test_polynomial_without_constant_vanishes_at_origin():
    e = parse_expr("x1*x2 - 3*x1^3 + x2^5", 2)
    assert eval_expr(e, (0.0, 0.0)) == 0.0


@pytest.mark.parametrize("text, point", [
    ("1/x1", (0.0, 1.0)),
    ("ln(x1)", (-1.0, 1.0)),
    ("sqrt(x1)", (-1.0, 1.0)),
    ("x1^0.5", (-2.0, 1.0)),
    ("x1^(-2)", (0.0, 1.0)),
])
def test_domain_errors_carry_the_point(text, point):
    with pytest.raises(DomainError) as info:
        eval_expr(parse_expr(text, 2), point)
    assert info.value.point == point


def test_batch_matches_scalar():
    F = cubic_3d()
    X = annulus_points(3, 50, 1)
    batch = F.batch(X)
    for x, row in zip(X, batch):
        assert np.allclose(F.scalar(x), row, rtol=1e-14, atol=0)


# -- differentiation --------------------------------------------------------

def test_diff_partially_stable_component():
    f2 = parse_expr("0.1*x2 - x1^2*x2", 2)
    d = diff_expr(f2, 2)
    for p in annulus_points(2, 20, 2):
        assert eval_expr(d, p) == pytest.approx(0.1 - p[0] ** 2, rel=1e-14, abs=1e-15)


def test_diff_constant_is_zero():
    assert diff_expr(Const(3.0), 1) == Const(0.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0, 1.7])
def test_diff_norm_power_against_finite_difference(alpha):
    e = parse_expr(f"(x1^2 + x2^2)^{alpha}", 2)
    d = eval_expr(diff_expr(e, 1), (1.0, 1.0))
    h = 1e-5
    fd = (eval_expr(e, (1 + h, 1.0)) - eval_expr(e, (1 - h, 1.0))) / (2 * h)
    assert d == pytest.approx(alpha * 2 ** alpha, rel=1e-12)
    assert abs(d - fd) <= 1e-6 * abs(d)


def test_diff_abs_uses_sign_with_zero_at_zero():
    d = diff_expr(parse_expr("abs(x1)", 1), 1)
    assert eval_expr(d, (2.0,)) == 1.0
    assert eval_expr(d, (-2.0,)) == -1.0
    assert eval_expr(d, (0.0,)) == 0.0


def test_simplification_rules():
    x = Var(1)
    assert x * 0 == Const(0.0)
    assert x + 0 == x
    assert 1 * x == x


def test_diff_general_power():
    e = parse_expr("x1^x2", 2)
    p = (1.3, 0.7)
    assert eval_expr(diff_expr(e, 2), p) == pytest.approx(1.3 ** 0.7 * math.log(1.3), rel=1e-13)
    assert eval_expr(diff_expr(e, 1), p) == pytest.approx(0.7 * 1.3 ** -0.3, rel=1e-13)


# -- divergence -------------------------------------------------------------

def test_divergence_oscillator():
    d = divergence(damped_oscillator(1.0))
    for p in annulus_points(2, 50, 3):
        assert eval_expr(d, p) == pytest.approx(-p[0] ** 2 - 3 * p[1] ** 2, rel=1e-13)


def test_divergence_cubic():
    d = divergence(cubic_3d())
    for p in annulus_points(3, 50, 4):
        assert eval_expr(d, p) == pytest.approx(-10 * p[2] ** 2, rel=1e-13, abs=1e-15)


def test_divergence_constant_field():
    assert divergence(VectorField.parse(["3", "-1"])) == Const(0.0)


def test_fd_divergence_examples():
    assert fd_divergence(damped_oscillator(1.0), (1.0, 1.0), 1e-5) == pytest.approx(-4.0, abs=1e-6)
    assert fd_divergence(cubic_3d(), (0.0, 0.0, 1.0), 1e-5) == pytest.approx(-10.0, abs=1e-5)


def test_fd_divergence_linear_is_trace():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((3, 3))
    F = linear_field(A)
    for p in rng.standard_normal((10, 3)):
        assert fd_divergence(F, p, 1e-5) == pytest.approx(np.trace(A), abs=1e-8)


@pytest.mark.parametrize("F", [damped_oscillator(1.0), damped_oscillator(-1.0),
                               partially_stable(0.1), two_equilibria(), cubic_3d()],
                         ids=["oscillator+", "oscillator-", "partial", "two-eq", "cubic"])
def test_symbolic_divergence_matches_finite_differences(F):
    d = divergence(F)
    for p in annulus_points(F.dim, 100, 11):
        sym = eval_expr(d, p)
        assert abs(sym - fd_divergence(F, p, 1e-5)) <= 1e-6 * (1 + abs(sym))


# -- properties -------------------------------------------------------------

def _leaves(n):
    return st.one_of(
        st.integers(1, n).map(Var),
        st.floats(-3, 3, allow_nan=False).map(lambda v: Const(round(v, 3))),
    )


def exprs(n=2):
    def extend(children):
        binary = st.tuples(st.sampled_from([Add, Sub, Mul, Div]), children, children)
        return st.one_of(
            binary.map(lambda t: t[0](t[1], t[2])),
            children.map(Neg),
            st.tuples(children, st.integers(0, 3)).map(lambda t: Pow(t[0], Const(float(t[1])))),
            st.tuples(st.sampled_from(["sin", "cos", "exp", "abs"]), children).map(
                lambda t: Func(t[0], t[1])),
        )
    return st.recursive(_leaves(n), extend, max_leaves=12)


def _safe_eval(e, p):
    try:
        v = eval_expr(e, p)
    except DomainError:
        return None
    return v if math.isfinite(v) else None


points = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


@settings(max_examples=200, deadline=None)
@given(exprs(), points)
def test_print_parse_round_trip(e, p):
    again = parse_expr(to_text(e), 2)
    a, b = _safe_eval(e, p), _safe_eval(again, p)
    if a is None:
        return
    assert b is not None
    assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(exprs(), exprs(), st.floats(-3, 3), points, st.integers(1, 2))
def test_differentiation_is_linear(e1, e2, a, p, k):
    lhs = diff_expr(Const(a) * e1 + e2, k)
    rhs = Const(a) * diff_expr(e1, k) + diff_expr(e2, k)
    u, v = _safe_eval(lhs, p), _safe_eval(rhs, p)
    if u is None or v is None:
        return
    assert u == pytest.approx(v, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(exprs(), points, st.integers(1, 2))
def test_diff_closure_and_fd_agreement(e, p, k):
    d = diff_expr(e, k)
    h = 1e-6
    q_plus, q_minus = list(p), list(p)
    q_plus[k - 1] += h
    q_minus[k - 1] -= h
    vals = [_safe_eval(x, q) for x, q in ((d, p), (e, q_plus), (e, q_minus))]
    if any(v is None for v in vals):
        return
    sym, fp, fm = vals
    fd = (fp - fm) / (2 * h)
    # abs() kinks and large curvature make the comparison meaningless
    if "abs" in to_text(e) or abs(sym) > 1e4:
        return
    assert fd == pytest.approx(sym, rel=1e-4, abs=1e-4)

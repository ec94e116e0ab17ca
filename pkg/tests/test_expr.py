import numpy as np
import pytest
import sympy as sp

from symfin.expr import (
    DerivativeOrderError,
    EvaluationError,
    ExpressionError,
    ParseError,
    SymbolTable,
    UndeclaredSymbolError,
    bind,
    compile_numeric,
    declare,
    differentiate,
    eval_numeric,
    fresh_name,
    integrate_in_time,
    is_zero,
    parse,
    to_text,
)


def test_literals_are_exact(table):
    assert parse("1/2 + 0.25", table) == sp.Rational(3, 4)
    assert parse("2^3", table) == 8
    assert parse("2**-1", table) == sp.Rational(1, 2)


def test_primes_are_time_derivatives(table):
    P1 = table["P1"]
    assert parse("P1'", table) == sp.diff(P1, table.time)
    assert parse("P1''", table) == sp.diff(P1, table.time, 2)


def test_undeclared_symbol_reports_offset(table):
    with pytest.raises(UndeclaredSymbolError) as info:
        parse("x + zz", table)
    assert info.value.offset == 4


@pytest.mark.parametrize("text", ["1/0", "(x + 1", "x +", "x $ y"])
def test_syntax_errors(table, text):
    with pytest.raises(ParseError):
        parse(text, table)


@pytest.mark.parametrize("text", ["_k", "2 * _P1"])
def test_identifiers_start_with_a_letter(table, text):
    with pytest.raises(ParseError) as info:
        parse(text, table)
    assert info.value.offset == text.index("_")


def test_text_round_trip(table):
    for text in ["P1' * x + 2 * k", "exp(c * x - t) / 3", "Q1''*y^2"]:
        expr = parse(text, table)
        assert is_zero(parse(to_text(expr, table), table) - expr)


def test_zero_test():
    x, y = sp.symbols("x y", real=True)
    assert is_zero((x + 1) ** 2 - x**2 - 2 * x - 1)
    assert is_zero(sp.exp(x) * sp.exp(y) - sp.exp(x + y))
    assert is_zero(sp.exp(2 * x) - sp.exp(x) ** 2)
    assert not is_zero(x - y)
    assert not is_zero(sp.exp(x) - 1 - x)


def test_zero_test_with_radicals():
    rho = sp.Symbol("rho", real=True)
    w = sp.sqrt(1 - rho**2)
    assert is_zero(w**2 + rho**2 - 1)
    assert not is_zero(w - 1)


def test_antiderivative_declaration(table):
    table, atom = declare("I1 := int(P1 * k)", table)
    t = table.time
    assert sp.diff(atom, t) == table["P1"] * table["k"]
    assert "I1" in table.names
    assert parse("I1'", table) == table["P1"] * table["k"]


def test_antiderivative_must_depend_on_time_only(table):
    with pytest.raises(ExpressionError):
        table.with_antiderivative("I1", table.coordinates[0])


def test_redeclaration_is_rejected(table):
    with pytest.raises(ExpressionError):
        table.with_constant("k")
    with pytest.raises(ExpressionError):
        table.with_function("exp")


def test_derivative_order_cap(table):
    P1 = table["P1"]
    assert differentiate(P1, table.time, 3) == sp.diff(P1, table.time, 3)
    with pytest.raises(DerivativeOrderError):
        differentiate(P1, table.time, 4)


def test_constant_integrand_integrates_in_closed_form(table):
    new_table, expr = integrate_in_time(table, "I1", table["k"] / 2)
    assert new_table is table
    assert expr == table["k"] * table.time / 2
    new_table, expr = integrate_in_time(table, "I1", table["P1"])
    assert "I1" in new_table.antiderivatives


def test_fresh_name(table):
    assert fresh_name(table, "W") == "W"
    assert fresh_name(table, "k") == "k_1"


def test_bind_functions_and_constants(table):
    expr = parse("P1 * x + k", table)
    bound = bind(expr, {"P1": "t^2", "k": "1/3"}, table)
    t, x = table.time, table.coordinates[0]
    assert is_zero(bound - (t**2 * x + sp.Rational(1, 3)))


def test_bind_rebuilds_antiderivatives(table):
    table, atom = declare("I1 := int(P1)", table)
    bound = bind(atom, {"P1": "2*t"}, table)
    value = compile_numeric(bound, [table.time])(np.array([0.0, 1.0, 2.0]))
    assert np.allclose(value, [0.0, 1.0, 4.0])


def test_eval_numeric(table):
    expr = parse("P1' * k + c", table)
    assert eval_numeric(expr, {"P1'": 2, "k": 3, "c": 1}) == pytest.approx(7.0)
    with pytest.raises(EvaluationError):
        eval_numeric(expr, {"k": 3})
    with pytest.raises(EvaluationError):
        eval_numeric(parse("1/(k - 1)", table), {"k": 1})


def test_compile_numeric_broadcasts():
    table = SymbolTable()
    t, x, y = table.time, *table.coordinates
    f = compile_numeric(parse("exp(x + y) * t", table), [t, x, y])
    out = f(np.ones((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)))
    assert out.shape == (2, 3)
    assert np.allclose(out, 1.0)
    constant = compile_numeric(sp.Integer(2), [t, x, y])
    assert np.allclose(constant(np.zeros(4), np.zeros(4), np.zeros(4)), 2.0)


def test_compile_numeric_rejects_free_symbols(table):
    with pytest.raises(EvaluationError):
        compile_numeric(table["k"] * table.time, [table.time])

"""Expression kernel.

Expressions are sympy expressions over the time symbol, the spatial coordinates,
the dependent variable and jets, constant parameters, opaque functions of time
and antiderivative atoms. This module owns the symbol table, the text grammar,
the normal form and the zero test used by every other module.
"""

import logging
import re
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
import sympy as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import quad
from sympy.core.function import AppliedUndef
from sympy.printing.str import StrPrinter

logger = logging.getLogger("symfin")

MAX_DERIVATIVE_ORDER = 3
CHECK_DIGITS = 50


class ExpressionError(ValueError):
    """Base class for malformed or unusable expressions."""


class ParseError(ExpressionError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UndeclaredSymbolError(ParseError):
    def __init__(self, name: str, offset: int) -> None:
        super().__init__(f"Undeclared symbol '{name}'", offset)
        self.name = name


class DerivativeOrderError(ExpressionError):
    pass


class EvaluationError(ExpressionError):
    pass


class Antiderivative(sp.Function):
    """Atom I(t) whose only rewrite is dI/dt = integrand(t).

    Concrete atoms are generated subclasses carrying ``integrand`` (an
    expression in ``time``).
    """

    integrand: sp.Expr = sp.S.Zero
    time: sp.Symbol = sp.Symbol("t", real=True)

    def fdiff(self, argindex: int = 1) -> sp.Expr:
        return self.integrand.xreplace({self.time: self.args[0]})

    def _eval_is_real(self) -> bool:
        return True


def make_antiderivative(name: str, integrand: sp.Expr, time: sp.Symbol) -> type:
    """Create the atom class for ``name := int(integrand)``."""
    return type(name, (Antiderivative,), {"integrand": integrand, "time": time})


class SymbolTable(BaseModel):
    """Declared names of an expression universe.

    The table is immutable; every ``with_*`` method returns a new table.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    time: sp.Symbol = Field(
        default_factory=lambda: sp.Symbol("t", real=True),
        description="The time coordinate.",
    )
    coordinates: tuple[sp.Symbol, ...] = Field(
        default_factory=lambda: (sp.Symbol("x", real=True), sp.Symbol("y", real=True)),
        description="Spatial coordinates, in order.",
    )
    dependent: str = Field(default="u", description="Name of the dependent variable.")
    constants: dict[str, sp.Symbol] = Field(
        default_factory=dict, description="Constant parameters."
    )
    functions: dict[str, Any] = Field(
        default_factory=dict, description="Opaque functions of time (undefined classes)."
    )
    antiderivatives: dict[str, Any] = Field(
        default_factory=dict, description="Antiderivative atom classes."
    )

    @classmethod
    def build(
        cls,
        constants: Iterable[str] = (),
        functions: Iterable[str] = (),
        positive: Iterable[str] = (),
        coordinates: Sequence[str] = ("x", "y"),
    ) -> "SymbolTable":
        """Table with the given constants and time functions.

        Args:
            constants (Iterable[str]): Names of real constant parameters.
            functions (Iterable[str]): Names of opaque functions of time.
            positive (Iterable[str]): Constants (or functions) known to be positive.
            coordinates (Sequence[str]): Spatial coordinate names.

        Returns:
            SymbolTable: The new table.
        """
        table = cls().with_coordinates(coordinates)
        positive = set(positive)
        for name in constants:
            table = table.with_constant(name, positive=name in positive)
        for name in functions:
            table = table.with_function(name, positive=name in positive)
        return table

    @property
    def names(self) -> set[str]:
        reserved = {str(self.time), self.dependent}
        reserved |= {str(c) for c in self.coordinates}
        return reserved | set(self.constants) | set(self.functions) | set(self.antiderivatives)

    def _check_free(self, name: str) -> None:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise ExpressionError(f"Invalid identifier '{name}'")
        if name in self.names or name in _BUILTINS:
            raise ExpressionError(f"Symbol '{name}' is already declared")

    def with_coordinates(self, names: Sequence[str]) -> "SymbolTable":
        coords = tuple(sp.Symbol(n, real=True) for n in names)
        return self.model_copy(update={"coordinates": coords})

    def with_constant(self, name: str, positive: bool = False) -> "SymbolTable":
        self._check_free(name)
        symbol = sp.Symbol(name, positive=True) if positive else sp.Symbol(name, real=True)
        return self.model_copy(update={"constants": {**self.constants, name: symbol}})

    def with_function(self, name: str, positive: bool = False) -> "SymbolTable":
        self._check_free(name)
        func = sp.Function(name, positive=True) if positive else sp.Function(name, real=True)
        return self.model_copy(update={"functions": {**self.functions, name: func}})

    def with_antiderivative(
        self, name: str, integrand: sp.Expr
    ) -> tuple["SymbolTable", sp.Expr]:
        """Declare ``name := int(integrand) dt`` and return the atom I(t)."""
        self._check_free(name)
        integrand = sp.sympify(integrand)
        extra = integrand.free_symbols - {self.time} - set(self.constants.values())
        if extra:
            raise ExpressionError(
                f"Integrand of {name} depends on {sorted(map(str, extra))}, not only on time"
            )
        atom_cls = make_antiderivative(name, integrand, self.time)
        table = self.model_copy(
            update={"antiderivatives": {**self.antiderivatives, name: atom_cls}}
        )
        return table, atom_cls(self.time)

    def lookup(self, name: str) -> sp.Expr:
        """The expression bound to ``name``.

        Raises:
            KeyError: If the name is not declared.
        """
        if name == str(self.time):
            return self.time
        if name == self.dependent:
            return sp.Symbol(name, real=True)
        for coord in self.coordinates:
            if name == str(coord):
                return coord
        if name in self.constants:
            return self.constants[name]
        if name in self.functions:
            return self.functions[name](self.time)
        if name in self.antiderivatives:
            return self.antiderivatives[name](self.time)
        raise KeyError(name)

    def __getitem__(self, name: str) -> sp.Expr:
        return self.lookup(name)


def time_atoms(expr: sp.Expr) -> set[sp.Expr]:
    """Opaque function and antiderivative atoms of ``expr``."""
    expr = sp.sympify(expr)
    atoms = {a for a in expr.atoms(AppliedUndef)}
    atoms |= {a for a in expr.atoms(sp.Function) if isinstance(a, Antiderivative)}
    return atoms


def opaque_atoms(expr: sp.Expr) -> set[sp.Expr]:
    """Atoms treated as independent unknowns by the numeric zero check."""
    expr = sp.sympify(expr)
    return time_atoms(expr) | expr.atoms(sp.Derivative) | expr.atoms(sp.Subs)


def derivative_order(expr: sp.Expr) -> int:
    """Highest derivative order appearing in ``expr``."""
    orders = [d.derivative_count for d in sp.sympify(expr).atoms(sp.Derivative)]
    return max(orders, default=0)


def differentiate(
    expr: sp.Expr,
    var: sp.Symbol,
    order: int = 1,
    max_order: int = MAX_DERIVATIVE_ORDER,
) -> sp.Expr:
    """Exact derivative with the derivative-order cap enforced.

    Raises:
        DerivativeOrderError: If an opaque function would be differentiated
            beyond ``max_order``.
    """
    result = sp.diff(sp.sympify(expr), var, order)
    if derivative_order(result) > max_order:
        raise DerivativeOrderError(
            f"Derivative order {derivative_order(result)} exceeds the cap {max_order}"
        )
    return result


def integrate_in_time(
    table: SymbolTable, name: str, integrand: sp.Expr
) -> tuple[SymbolTable, sp.Expr]:
    """Antiderivative of ``integrand``, closed form for constants.

    A constant integrand c gives c*t; anything else becomes a declared atom.
    """
    integrand = sp.sympify(integrand)
    if table.time not in integrand.free_symbols and not time_atoms(integrand):
        return table, integrand * table.time
    return table.with_antiderivative(name, integrand)


def fresh_name(table: SymbolTable, base: str) -> str:
    """``base`` or ``base_<k>``, whichever is first unused in ``table``."""
    name, k = base, 0
    while name in table.names:
        k += 1
        name = f"{base}_{k}"
    return name


def substitute(expr: sp.Expr, mapping: Mapping[Any, Any]) -> sp.Expr:
    """Replace symbols or opaque function atoms by expressions.

    Derivative atoms of a replaced function are replaced by the derivative of
    its replacement.
    """
    expr = sp.sympify(expr)
    mapping = {sp.sympify(k): sp.sympify(v) for k, v in mapping.items()}
    symbols = {k: v for k, v in mapping.items() if isinstance(k, sp.Symbol)}
    atoms = {k: v for k, v in mapping.items() if not isinstance(k, sp.Symbol)}
    if atoms:
        derivatives = {}
        for der in expr.atoms(sp.Derivative):
            if der.expr in atoms:
                derivatives[der] = sp.diff(atoms[der.expr], *der.variable_count)
        expr = expr.xreplace(derivatives).xreplace(atoms)
    if symbols:
        if expr.atoms(sp.Derivative):
            expr = expr.subs(symbols, simultaneous=True)
        else:
            expr = expr.xreplace(symbols)
    return expr


def canonical(expr: sp.Expr) -> sp.Expr:
    """Normal form: expanded polynomial in the atoms with merged exponentials."""
    e = sp.expand(sp.sympify(expr), power_exp=False)
    e = sp.powsimp(e, combine="exp")
    e = e.replace(
        lambda a: isinstance(a, sp.exp), lambda a: sp.exp(sp.expand(a.args[0]))
    )
    return sp.expand(e, power_exp=False)


def _sample_values(
    atoms: Iterable[sp.Expr], rng: np.random.Generator
) -> dict[sp.Expr, sp.Expr]:
    # Rationals in (1/5, 4/5): positive, and 1 - rho^2 stays positive.
    return {a: sp.Rational(int(rng.integers(201, 800)), 1000) for a in atoms}


def _numeric_zero_check(expr: sp.Expr, samples: int, seed: int) -> bool:
    """True if ``expr`` vanishes at every random sample point."""
    rng = np.random.default_rng(seed)
    free = sorted(expr.free_symbols, key=str)
    derivatives = sorted(
        expr.atoms(sp.Derivative) | expr.atoms(sp.Subs), key=sp.default_sort_key
    )
    functions = sorted(time_atoms(expr), key=sp.default_sort_key)
    terms = sp.Add.make_args(expr)
    for _ in range(samples):
        values = _sample_values(derivatives + functions + free, rng)
        # Derivative atoms first so that their inner functions are still intact.
        staged = [t.xreplace({d: values[d] for d in derivatives}) for t in terms]
        staged = [t.xreplace({f: values[f] for f in functions}) for t in staged]
        staged = [t.xreplace({s: values[s] for s in free}) for t in staged]
        numbers = [sp.N(t, CHECK_DIGITS) for t in staged]
        if any(n.has(sp.zoo, sp.nan, sp.oo, -sp.oo) for n in numbers):
            continue
        magnitudes = [abs(complex(n)) for n in numbers]
        total = abs(sp.N(sp.Add(*numbers), CHECK_DIGITS))
        scale = max([1.0] + magnitudes)
        if total > sp.Float("1e-30", CHECK_DIGITS) * scale:
            return False
    return True


def is_zero(expr: sp.Expr, samples: int = 3, seed: int = 0) -> bool:
    """Decide whether ``expr`` is identically zero.

    Polynomial-exponential expressions in the atoms are decided exactly on the
    normal form. Radicals and logarithms of the atoms fall back on exact
    simplification, and on a high-precision evaluation at random rational points
    when simplification cannot conclude.
    """
    e = canonical(expr)
    if e == 0:
        return True
    num, _ = sp.fraction(sp.together(e))
    num = canonical(num)
    if num == 0:
        return True
    if not _numeric_zero_check(num, samples, seed):
        return False
    if sp.count_ops(num) <= 400 and sp.simplify(num) == 0:
        return True
    logger.warning(f"Zero test decided numerically for {sp.count_ops(num)} ops")
    return True


def _resolve_bindings(
    expr: sp.Expr, bindings: Mapping[Any, Any]
) -> dict[sp.Expr, sp.Expr]:
    by_name = {}
    for key, value in bindings.items():
        by_name[key if isinstance(key, str) else sp.sympify(key)] = sp.sympify(value)
    resolved = {}
    for atom in expr.free_symbols | opaque_atoms(expr):
        if atom in by_name:
            resolved[atom] = by_name[atom]
        elif isinstance(atom, sp.Symbol) and str(atom) in by_name:
            resolved[atom] = by_name[str(atom)]
        elif isinstance(atom, sp.Derivative):
            primed = atom.expr.func.__name__ + "'" * atom.derivative_count
            if primed in by_name:
                resolved[atom] = by_name[primed]
        elif not isinstance(atom, sp.Subs) and atom.func.__name__ in by_name:
            resolved[atom] = by_name[atom.func.__name__]
    return resolved


def eval_numeric(expr: sp.Expr, bindings: Mapping[Any, Any]) -> float:
    """Evaluate ``expr`` to a real float.

    Bindings are keyed by sympy atoms (symbols, function atoms, derivative
    atoms) or by the name of a symbol or function.

    Raises:
        EvaluationError: If a symbol is unbound, the value is infinite or
            undefined, or the value is not real.
    """
    expr = sp.sympify(expr)
    values = _resolve_bindings(expr, bindings)
    derivatives = {k: v for k, v in values.items() if isinstance(k, (sp.Derivative, sp.Subs))}
    rest = {k: v for k, v in values.items() if k not in derivatives}
    value = expr.xreplace(derivatives).xreplace(rest)
    if value.free_symbols or opaque_atoms(value):
        unbound = sorted(map(str, value.free_symbols | opaque_atoms(value)))
        raise EvaluationError(f"Unbound symbols {unbound}")
    value = sp.N(value, 30)
    if value.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
        raise EvaluationError(f"Expression is not finite: {value}")
    number = complex(value)
    if abs(number.imag) > 1e-12 * max(1.0, abs(number.real)):
        raise EvaluationError(f"Expression is not real: {number}")
    return number.real


def bind(expr: sp.Expr, bindings: Mapping[str, Any], table: "SymbolTable") -> sp.Expr:
    """Replace named constants and functions of time by expressions.

    String values are parsed against ``table``. Antiderivative atoms are
    rebuilt with their integrands bound the same way.
    """
    mapping = {}
    for name, value in bindings.items():
        value = parse(value, table) if isinstance(value, str) else sp.sympify(value)
        mapping[table.lookup(name)] = value
    return _bind(sp.sympify(expr), mapping)


def _bind(expr: sp.Expr, mapping: Mapping[sp.Expr, sp.Expr]) -> sp.Expr:
    rebuilt = {}
    for atom in expr.atoms(Antiderivative):
        cls = type(atom)
        integrand = _bind(cls.integrand, mapping)
        if integrand != cls.integrand:
            rebuilt[atom] = make_antiderivative(cls.__name__, integrand, cls.time)(*atom.args)
    return substitute(expr.xreplace(rebuilt), mapping)


def _antiderivative_callable(atom: sp.Expr) -> Callable[[np.ndarray], np.ndarray]:
    """Numeric I(t) = int_0^t integrand, by adaptive quadrature."""
    cls = type(atom)
    integrand = compile_numeric(cls.integrand, [cls.time])

    def evaluate(values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        unique, inverse = np.unique(values.ravel(), return_inverse=True)
        out = np.array(
            [quad(lambda s: float(integrand(s)), 0.0, v, limit=200)[0] for v in unique]
        )
        return out[inverse].reshape(values.shape)

    return evaluate


def compile_numeric(
    expr: sp.Expr, args: Sequence[sp.Expr]
) -> Callable[..., np.ndarray]:
    """Vectorized numpy callable of ``expr`` in the given arguments.

    Antiderivative atoms are evaluated by quadrature from t = 0.

    Raises:
        EvaluationError: If ``expr`` depends on anything besides ``args``.
    """
    expr = sp.sympify(expr)
    dummies = [sp.Dummy(f"a{i}") for i in range(len(args))]
    atoms = sorted(expr.atoms(Antiderivative), key=sp.default_sort_key)
    atom_dummies = [sp.Dummy(f"i{k}") for k in range(len(atoms))]
    expr = expr.xreplace(dict(zip(atoms, atom_dummies)))
    derivative_args = {a: d for a, d in zip(args, dummies) if isinstance(a, sp.Derivative)}
    other_args = {a: d for a, d in zip(args, dummies) if a not in derivative_args}
    body = expr.xreplace(derivative_args).xreplace(other_args)
    leftover = body.free_symbols - set(dummies) - set(atom_dummies)
    if leftover or opaque_atoms(body):
        raise EvaluationError(
            f"Cannot compile, unbound {sorted(map(str, leftover | opaque_atoms(body)))}"
        )
    inner = [
        (_antiderivative_callable(a), compile_numeric(a.args[0], args)) for a in atoms
    ]
    raw = sp.lambdify([*dummies, *atom_dummies], body, modules="numpy")

    def evaluate(*values: Any) -> np.ndarray:
        shape = np.broadcast(*values).shape if values else ()
        atom_values = [F(np.broadcast_to(arg(*values), shape)) for F, arg in inner]
        out = np.asarray(raw(*values, *atom_values), dtype=float)
        return out + np.zeros(shape)

    return evaluate


# ----------------------------------------------------------------------------
# Text grammar
# ----------------------------------------------------------------------------

_BUILTINS: dict[str, Callable[[sp.Expr], sp.Expr]] = {
    "exp": sp.exp,
    "sqrt": sp.sqrt,
    "log": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|:=|[-+*/^()'])"
    r")"
)


class _Parser:
    def __init__(self, text: str, table: SymbolTable) -> None:
        self.text = text
        self.table = table
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            match = _TOKEN.match(text, pos)
            if match is None or match.end() == pos:
                offset = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise ParseError(f"Unexpected character '{text[offset]}'", offset)
            kind = match.lastgroup
            start = match.start(kind)
            self.tokens.append((kind, match.group(kind), start))
            pos = match.end()
        self.index = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def next(self) -> tuple[str, str, int]:
        token = self.peek()
        if token is None:
            raise ParseError("Unexpected end of input", len(self.text))
        self.index += 1
        return token

    def accept(self, value: str) -> bool:
        token = self.peek()
        if token is not None and token[0] == "op" and token[1] == value:
            self.index += 1
            return True
        return False

    def expect(self, value: str) -> None:
        token = self.peek()
        if not self.accept(value):
            offset = token[2] if token else len(self.text)
            raise ParseError(f"Expected '{value}'", offset)

    def parse(self) -> sp.Expr:
        expr = self.expression()
        token = self.peek()
        if token is not None:
            raise ParseError(f"Unexpected token '{token[1]}'", token[2])
        return expr

    def expression(self) -> sp.Expr:
        value = self.term()
        while True:
            if self.accept("+"):
                value = value + self.term()
            elif self.accept("-"):
                value = value - self.term()
            else:
                return value

    def term(self) -> sp.Expr:
        value = self.unary()
        while True:
            if self.accept("*"):
                value = value * self.unary()
            elif self.accept("/"):
                token = self.peek()
                divisor = self.unary()
                if divisor == 0:
                    raise ParseError("Division by zero", token[2] if token else len(self.text))
                value = value / divisor
            else:
                return value

    def unary(self) -> sp.Expr:
        if self.accept("-"):
            return -self.unary()
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> sp.Expr:
        base = self.postfix()
        if self.accept("^") or self.accept("**"):
            return base ** self.unary()
        return base

    def postfix(self) -> sp.Expr:
        value = self.primary()
        while self.accept("'"):
            value = differentiate(value, self.table.time)
        return value

    def primary(self) -> sp.Expr:
        kind, value, offset = self.next()
        if kind == "number":
            return sp.Rational(value)
        if kind == "name":
            if value in _BUILTINS and self.accept("("):
                argument = self.expression()
                self.expect(")")
                return _BUILTINS[value](argument)
            if value == "pi":
                return sp.pi
            try:
                return self.table.lookup(value)
            except KeyError:
                raise UndeclaredSymbolError(value, offset) from None
        if value == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        raise ParseError(f"Unexpected token '{value}'", offset)


def parse(text: str, table: SymbolTable) -> sp.Expr:
    """Parse ``text`` in the expression grammar.

    Numeric literals become exact rationals; ``P1'`` is the time derivative of
    ``P1``; ``^`` and ``**`` are powers.

    Raises:
        ParseError: On a syntax error, with the byte offset of the problem.
        UndeclaredSymbolError: On an undeclared identifier.
    """
    return _Parser(text, table).parse()


def declare(text: str, table: SymbolTable) -> tuple[SymbolTable, sp.Expr]:
    """Process an antiderivative declaration ``I1 := int(expr)``."""
    match = re.fullmatch(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*:=\s*int\s*\((.*)\)\s*", text)
    if match is None:
        raise ParseError("Expected a declaration 'name := int(expr)'", 0)
    integrand = _Parser(match.group(2), table).parse()
    return table.with_antiderivative(match.group(1), integrand)


class _TextPrinter(StrPrinter):
    def __init__(self, time: sp.Symbol | None = None) -> None:
        super().__init__()
        self.time = time

    def _print_Function(self, expr: sp.Expr) -> str:
        opaque = isinstance(expr, (AppliedUndef, Antiderivative))
        if opaque and self.time is not None and expr.args == (self.time,):
            return expr.func.__name__
        return super()._print_Function(expr)

    def _print_Derivative(self, expr: sp.Derivative) -> str:
        inner = expr.expr
        variables = set(expr.variables)
        if (
            isinstance(inner, (AppliedUndef, Antiderivative))
            and self.time is not None
            and inner.args == (self.time,)
            and variables == {self.time}
        ):
            return inner.func.__name__ + "'" * expr.derivative_count
        return super()._print_Derivative(expr)

    def _print_Exp1(self, expr: sp.Expr) -> str:
        return "exp(1)"


def to_text(expr: sp.Expr, table: SymbolTable | None = None) -> str:
    """Print ``expr`` in the expression grammar."""
    time = table.time if table is not None else sp.Symbol("t", real=True)
    return _TextPrinter(time).doprint(sp.sympify(expr)).replace("**", "^")

"""Brackets, structure constants and the identification of the named algebras."""

import logging
from collections import defaultdict
from typing import Any, Sequence

import numpy as np
import pandas as pd
import sympy as sp
from pydantic import BaseModel, ConfigDict, Field

from symfin.expr import canonical, is_zero, opaque_atoms, to_text
from symfin.symmetry import Generator, VectorField

logger = logging.getLogger("symfin")

# Finite parts of the algebras of the catalog models.
EXPECTED_LABELS: dict[str, str] = {
    "bs2d_canonical": "{{sl(2,R)⊕ₛso(2)}⊕ₛW₅}",
    "heat2d": "{{sl(2,R)⊕ₛso(2)}⊕ₛW₅}",
    "bs2d_special_nonauto": "{{sl(2,R)⊕ₛso(2)}⊕ₛW₅}",
    "twofactor_autonomous": "{A₁⊕ₛW₅}",
    "twofactor_q0": "{A₁⊕ₛW₅}",
    "heat1d": "{sl(2,R)⊕ₛW₃}",
}

SOLUTION_IDEAL = "∞A₁"
_SUBSCRIPTS = str.maketrans("0123456789", "₀₁₂₃₄₅₆₇₈₉")


class AlgebraClosureError(ValueError):
    """A bracket of two basis elements leaves the span of the basis."""

    def __init__(self, pair: tuple[str, str], remainder: VectorField) -> None:
        super().__init__(
            f"[{pair[0]}, {pair[1]}] is not in the span of the basis; remainder {remainder.to_dict()}"
        )
        self.pair = pair
        self.remainder = remainder


class AlgebraSignature(BaseModel):
    """Structure constants C[i][j][k] (coefficient of e_k in [e_i, e_j]) and invariants."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    names: list[str] = Field(..., description="Basis names.")
    constants: list[list[list[Any]]] = Field(..., description="Structure constants.")
    derived_dimensions: list[int] = Field(..., description="Dimensions of the derived series.")
    center_dimension: int = Field(..., description="Dimension of the center.")
    is_abelian: bool = Field(..., description="All brackets vanish.")
    is_nilpotent: bool = Field(..., description="The lower central series reaches zero.")
    is_sl2: bool = Field(..., description="Three-dimensional, perfect, indefinite Killing form.")
    is_heisenberg: bool = Field(..., description="Odd dimension, derived algebra = 1-dim center.")
    has_so2_rotation: bool = Field(..., description="A complement acts by rotation on W.")
    solution_symmetries: list[tuple[str, str]] = Field(
        default_factory=list, description="Pairs whose bracket has a part in the solution ideal."
    )

    @property
    def dimension(self) -> int:
        return len(self.names)

    @property
    def is_numeric(self) -> bool:
        return all(sp.sympify(c).is_number for plane in self.constants for row in plane for c in row)


def commutator(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y] componentwise, X(Y^a) - Y(X^a)."""
    return X.with_components(
        [canonical(X.apply(b) - Y.apply(a)) for a, b in zip(X.components, Y.components)]
    )


def is_solution_symmetry(X: VectorField) -> bool:
    """X is of the pure f(t, x) d_u form."""
    return all(is_zero(c) for c in X.xi) and not X.eta.has(X.u)


def _field(g: Generator | VectorField) -> VectorField:
    return g.field if isinstance(g, Generator) else g


def _is_variable_factor(factor: sp.Expr, variables: set[sp.Symbol]) -> bool:
    return bool(factor.free_symbols & variables) or bool(opaque_atoms(factor))


def _split_terms(expr: sp.Expr, variables: set[sp.Symbol]) -> dict[sp.Expr, sp.Expr]:
    """Coefficients of ``expr`` grouped by the factors that carry the variables."""
    groups: dict[sp.Expr, sp.Expr] = defaultdict(lambda: sp.S.Zero)
    for term in sp.Add.make_args(canonical(expr)):
        monomial, coefficient = sp.S.One, sp.S.One
        for factor in sp.Mul.make_args(term):
            if _is_variable_factor(factor, variables):
                monomial *= factor
            else:
                coefficient *= factor
        groups[monomial] += coefficient
    return groups


def _solve_in_span(
    target: Sequence[sp.Expr],
    basis: Sequence[Sequence[sp.Expr]],
    variables: set[sp.Symbol],
) -> list[sp.Expr] | None:
    unknowns = sp.symbols(f"c_:{len(basis)}")
    equations = []
    for a, value in enumerate(target):
        combination = value - sum(c * b[a] for c, b in zip(unknowns, basis))
        equations += [e for e in _split_terms(combination, variables).values() if e != 0]
    if not equations:
        return [sp.S.Zero] * len(basis)
    solutions = sp.linsolve(equations, list(unknowns))
    if solutions == sp.S.EmptySet:
        return None
    (solution,) = solutions
    free = {c: 0 for c in unknowns}
    return [canonical(sp.sympify(v).xreplace(free)) for v in solution]


def decompose(
    Z: VectorField, basis: Sequence[VectorField]
) -> tuple[list[sp.Expr], VectorField | None]:
    """Coefficients of Z in the basis and the solution-symmetry remainder, if any.

    Raises:
        ValueError: If Z is neither in the span nor in the span plus f d_u.
    """
    variables = {*Z.variables, Z.u}
    rows = [b.components for b in basis]
    coefficients = _solve_in_span(Z.components, rows, variables)
    if coefficients is not None:
        rest = Z - _combine(coefficients, basis, Z)
        if rest.is_zero():
            return coefficients, None
    spatial = [r[:-1] for r in rows]
    coefficients = _solve_in_span(Z.xi, spatial, variables)
    if coefficients is not None:
        rest = (Z - _combine(coefficients, basis, Z)).canonical()
        if is_solution_symmetry(rest):
            return coefficients, rest
    raise ValueError("not in span")


def _combine(coefficients: Sequence[sp.Expr], basis: Sequence[VectorField], like: VectorField) -> VectorField:
    total = like * 0
    for c, b in zip(coefficients, basis):
        total = total + b * c
    return total


def structure_constants(
    basis: Sequence[Generator | VectorField], names: Sequence[str] | None = None
) -> AlgebraSignature:
    """Structure constants of ``basis`` by exact linear algebra.

    Brackets whose remainder is of the pure f d_u form are accepted and
    recorded as landing in the solution ideal.

    Raises:
        AlgebraClosureError: If a bracket leaves the span of the basis.
    """
    fields = [_field(g) for g in basis]
    if names is None:
        names = [g.name if isinstance(g, Generator) else f"e{i + 1}" for i, g in enumerate(basis)]
    names = list(names)
    n = len(fields)
    zero = [sp.S.Zero] * n
    C = [[list(zero) for _ in range(n)] for _ in range(n)]
    landing = []
    for i in range(n):
        for j in range(i + 1, n):
            Z = commutator(fields[i], fields[j])
            if Z.is_zero():
                continue
            try:
                coefficients, rest = decompose(Z, fields)
            except ValueError:
                raise AlgebraClosureError((names[i], names[j]), Z) from None
            if rest is not None:
                landing.append((names[i], names[j]))
            C[i][j] = coefficients
            C[j][i] = [-c for c in coefficients]
    return _signature(names, C, landing)


# ----------------------------------------------------------------------------
# Invariants of the structure constants
# ----------------------------------------------------------------------------

def _bracket(C: list[list[list[Any]]], u: sp.Matrix, v: sp.Matrix) -> sp.Matrix:
    n = len(C)
    return sp.Matrix(
        [sum(u[i] * v[j] * C[i][j][k] for i in range(n) for j in range(n)) for k in range(n)]
    )


def _span(vectors: Sequence[sp.Matrix]) -> list[sp.Matrix]:
    if not vectors:
        return []
    return [r.T for r in sp.Matrix.hstack(*vectors).T.rowspace()]


def _bracket_space(C: list[list[list[Any]]], A: list[sp.Matrix], B: list[sp.Matrix]) -> list[sp.Matrix]:
    return _span([_bracket(C, a, b) for a in A for b in B])


def _ad(C: list[list[list[Any]]], i: int) -> sp.Matrix:
    n = len(C)
    return sp.Matrix(n, n, lambda k, j: C[i][j][k])


def killing_form(C: list[list[list[Any]]]) -> sp.Matrix:
    n = len(C)
    ads = [_ad(C, i) for i in range(n)]
    return sp.Matrix(n, n, lambda i, j: (ads[i] * ads[j]).trace())


def _center(C: list[list[list[Any]]]) -> list[sp.Matrix]:
    n = len(C)
    if n == 0:
        return []
    rows = [sp.Matrix(1, n, lambda _, i: C[i][j][k]) for j in range(n) for k in range(n)]
    return sp.Matrix.vstack(*rows).nullspace()


def _complement(sub: list[sp.Matrix], whole: list[sp.Matrix]) -> list[sp.Matrix]:
    """Vectors of ``whole`` extending ``sub`` to a basis of span(whole)."""
    chosen = list(sub)
    extra = []
    for w in whole:
        if sp.Matrix.hstack(*chosen, w).rank() > len(chosen):
            chosen.append(w)
            extra.append(w)
    return extra


def _coordinates(vectors: list[sp.Matrix], v: sp.Matrix) -> sp.Matrix:
    M = sp.Matrix.hstack(*vectors)
    solution, params = M.gauss_jordan_solve(v)
    return solution.xreplace({p: 0 for p in params})


def _restricted_action(
    C: list[list[list[Any]]], x: sp.Matrix, space: list[sp.Matrix], ideal: list[sp.Matrix]
) -> sp.Matrix:
    """Matrix of ad_x on span(space) modulo span(ideal), in the ``space`` basis."""
    basis = [*space, *ideal]
    columns = []
    for v in space:
        image = _coordinates(basis, _bracket(C, x, v))
        columns.append(image[: len(space), :])
    return sp.Matrix.hstack(*columns)


def _quotient_killing(C: list[list[list[Any]]], rad: list[sp.Matrix]) -> sp.Matrix:
    n = len(C)
    standard = [sp.eye(n)[:, i] for i in range(n)]
    levi = _complement(rad, standard) if rad else standard
    actions = [_restricted_action(C, x, levi, rad) for x in levi]
    return sp.Matrix(len(levi), len(levi), lambda i, j: (actions[i] * actions[j]).trace())


def _derived_series(C: list[list[list[Any]]]) -> list[int]:
    n = len(C)
    current = [sp.eye(n)[:, i] for i in range(n)]
    dims = [n]
    while current:
        nxt = _bracket_space(C, current, current)
        if len(nxt) == len(current):
            break
        current = nxt
        dims.append(len(current))
    return dims


def _lower_central_is_zero(C: list[list[list[Any]]], space: list[sp.Matrix]) -> bool:
    current = space
    while current:
        nxt = _bracket_space(C, space, current)
        if len(nxt) == len(current):
            return False
        current = nxt
    return True


def _indefinite(form: sp.Matrix) -> bool:
    values = np.linalg.eigvalsh(np.array(form.evalf(), dtype=float))
    scale = max(1.0, float(np.max(np.abs(values))))
    return bool(np.any(values > 1e-9 * scale) and np.any(values < -1e-9 * scale))


def _rotation_count(
    C: list[list[list[Any]]], complement: list[sp.Matrix], nil: list[sp.Matrix], center: list[sp.Matrix]
) -> int:
    """Number of complement directions acting on nil/center as A^2 = -theta^2 I."""
    quotient = _complement(center, nil)
    if not quotient:
        return 0
    count = 0
    for x in complement:
        A = _restricted_action(C, x, quotient, center)
        square = A * A
        theta_sq = -square[0, 0]
        if theta_sq.is_positive and (square + theta_sq * sp.eye(A.shape[0])).is_zero_matrix:
            count += 1
    return count


def _signature(
    names: list[str], C: list[list[list[Any]]], landing: list[tuple[str, str]]
) -> AlgebraSignature:
    n = len(names)
    numeric = all(sp.sympify(c).is_number for plane in C for row in plane for c in row)
    abelian = all(c == 0 for plane in C for row in plane for c in row)
    if not numeric:
        logger.warning("Structure constants are symbolic; only the abelian flag is decided")
        return AlgebraSignature(
            names=names, constants=C, derived_dimensions=[n], center_dimension=0,
            is_abelian=abelian, is_nilpotent=abelian, is_sl2=False, is_heisenberg=False,
            has_so2_rotation=False, solution_symmetries=landing,
        )
    whole = [sp.eye(n)[:, i] for i in range(n)]
    derived = _derived_series(C)
    center = _center(C)
    derived_space = _bracket_space(C, whole, whole)
    center_dim = len(center)
    heisenberg = (
        n >= 3 and n % 2 == 1 and center_dim == 1 and len(derived_space) == 1
        and sp.Matrix.hstack(*derived_space, *center).rank() == 1
    )
    sl2 = n == 3 and len(derived_space) == 3 and _indefinite(killing_form(C))
    structure = None if abelian else _levi_and_nil(C)
    rotation = structure is not None and structure["so2"] > 0
    return AlgebraSignature(
        names=names, constants=C, derived_dimensions=derived, center_dimension=center_dim,
        is_abelian=abelian, is_nilpotent=_lower_central_is_zero(C, whole), is_sl2=sl2,
        is_heisenberg=heisenberg, has_so2_rotation=rotation, solution_symmetries=landing,
    )


def _levi_and_nil(C: list[list[list[Any]]]) -> dict[str, Any] | None:
    n = len(C)
    whole = [sp.eye(n)[:, i] for i in range(n)]
    B = killing_form(C)
    derived = _bracket_space(C, whole, whole)
    if derived:
        rad = (sp.Matrix.hstack(*derived).T * B).nullspace()
    else:
        rad = whole
    levi_dim = n - len(rad)
    levi = None
    if levi_dim == 3:
        levi = "sl(2,R)" if _indefinite(_quotient_killing(C, rad)) else None
        if levi is None:
            return None
    elif levi_dim != 0:
        return None
    if rad:
        R = sp.Matrix.hstack(*rad)
        nil = [R * v for v in (R.T * B * R).nullspace()]
    else:
        nil = []
    nil = _span(nil)
    if nil and not _lower_central_is_zero(C, nil):
        return None
    complement = _complement(nil, rad) if nil else list(rad)
    nil_center = [] if not nil else _sub_center(C, nil)
    nil_derived = _bracket_space(C, nil, nil) if nil else []
    heis = (
        len(nil) >= 3 and len(nil) % 2 == 1 and len(nil_center) == 1 and len(nil_derived) == 1
        and sp.Matrix.hstack(*nil_derived, *nil_center).rank() == 1
    )
    so2 = _rotation_count(C, complement, nil, nil_center) if heis else 0
    return {
        "levi": levi,
        "nil": nil,
        "heisenberg": heis,
        "complement": len(complement),
        "so2": so2,
    }


def _sub_center(C: list[list[list[Any]]], space: list[sp.Matrix]) -> list[sp.Matrix]:
    """Center of the subalgebra span(space)."""
    S = sp.Matrix.hstack(*space)
    stacked = sp.Matrix.vstack(*[_bracket_matrix(C, v) * S for v in space])
    return [S * v for v in stacked.nullspace()]


def _bracket_matrix(C: list[list[list[Any]]], v: sp.Matrix) -> sp.Matrix:
    """Matrix of x -> [x, v]."""
    n = len(C)
    return sp.Matrix(n, n, lambda k, i: sum(v[j] * C[i][j][k] for j in range(n)))


def classify(basis: Sequence[Generator | VectorField] | AlgebraSignature) -> str:
    """Decomposition label of the finite algebra spanned by ``basis``.

    Labels are built from sl(2,R), A₁, so(2) and the Heisenberg algebras W; the
    value "unrecognized" is returned for anything else.
    """
    signature = basis if isinstance(basis, AlgebraSignature) else structure_constants(basis)
    n = signature.dimension
    if signature.is_abelian:
        return "A₁" if n == 1 else "⊕".join(["A₁"] * n) + " (abelian)"
    if not signature.is_numeric:
        return "unrecognized"
    structure = _levi_and_nil(signature.constants)
    if structure is None:
        return "unrecognized"
    nil_dim = len(structure["nil"])
    if nil_dim and not structure["heisenberg"]:
        return "unrecognized"
    factors = ["sl(2,R)"] if structure["levi"] else []
    factors += ["A₁"] * (structure["complement"] - structure["so2"])
    factors += ["so(2)"] * structure["so2"]
    inner = "⊕ₛ".join(factors)
    if not nil_dim:
        return inner if len(factors) == 1 else "unrecognized"
    weyl = "W" + str(nil_dim).translate(_SUBSCRIPTS)
    if not factors:
        return weyl
    if len(factors) > 1:
        inner = "{" + inner + "}"
    return "{" + inner + "⊕ₛ" + weyl + "}"


def _combination_text(coefficients: Sequence[sp.Expr], names: Sequence[str]) -> str:
    terms = []
    for c, name in zip(coefficients, names):
        if c == 0:
            continue
        if c == 1:
            terms.append(name)
        elif c == -1:
            terms.append(f"-{name}")
        else:
            text = to_text(c)
            terms.append(f"({text})*{name}" if c.is_Add else f"{text}*{name}")
    return " + ".join(terms).replace("+ -", "- ") or "0"


def commutator_table(signature: AlgebraSignature) -> pd.DataFrame:
    """Commutator table with entries written in the basis names."""
    names = signature.names
    landing = {tuple(p) for p in signature.solution_symmetries}
    rows = {}
    for i, a in enumerate(names):
        row = {}
        for j, b in enumerate(names):
            text = _combination_text(signature.constants[i][j], names)
            if (a, b) in landing or (b, a) in landing:
                text = SOLUTION_IDEAL if text == "0" else f"{text} + {SOLUTION_IDEAL}"
            row[b] = text
        rows[a] = row
    return pd.DataFrame.from_dict(rows, orient="index")[names]


def commutator_table_text(signature: AlgebraSignature) -> str:
    return commutator_table(signature).to_string()


def commutator_table_json(signature: AlgebraSignature) -> dict[str, dict[str, str]]:
    return commutator_table(signature).to_dict(orient="index")


def change_basis(
    basis: Sequence[Generator], matrix: Sequence[Sequence[int]]
) -> list[Generator]:
    """New basis e'_i = sum_j matrix[i][j] e_j."""
    fields = [g.field for g in basis]
    out = []
    for i, row in enumerate(matrix):
        total = fields[0] * 0
        for c, f in zip(row, fields):
            total = total + f * c
        out.append(Generator(name=f"e{i + 1}", field=total.canonical()))
    return out

"""Lie point symmetries of linear evolution equations.

A generator is a vector field X = xi^t d_t + xi^i d_i + eta d_u with eta linear
in u. The symmetry test prolongs X to the second jet, applies it to Theta and
removes the multiple Lambda * Theta fixed by the u_t coefficient; X is a
symmetry iff every jet coefficient of the remainder vanishes.
"""

import logging
import pathlib
from multiprocessing.pool import ThreadPool
from typing import Any, Literal, Mapping, NamedTuple, Sequence

import sympy as sp
from environs import env
from pydantic import BaseModel, ConfigDict, Field, model_validator

from symfin.expr import (
    SymbolTable,
    canonical,
    declare,
    fresh_name,
    integrate_in_time,
    is_zero,
    parse,
    time_atoms,
    to_text,
)
from symfin.models import EXAMPLE_PARAMS, EvolutionPDE, JetSpace, catalog
from symfin.results import SymmetryReport, VerificationReport
from symfin.utils import load_config

logger = logging.getLogger("symfin")


class SymmetryError(ValueError):
    """The symmetry machinery cannot handle the equation or the field."""


class VectorField(BaseModel):
    """Point vector field on (t, x, u) with eta linear in u."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    table: SymbolTable = Field(..., description="Symbols of the components.")
    xi: tuple[Any, ...] = Field(..., description="(xi^t, xi^1, ..., xi^n).")
    eta: Any = Field(default=sp.S.Zero, description="Coefficient of d_u.")

    @model_validator(mode="before")
    @classmethod
    def sympify_components(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            if "xi" in data:
                data["xi"] = tuple(sp.sympify(c) for c in data["xi"])
            if "eta" in data:
                data["eta"] = sp.sympify(data["eta"])
        return data

    @model_validator(mode="after")
    def validate_data(self) -> "VectorField":
        """Validate the shape and the linearity of eta."""
        n = len(self.table.coordinates)
        assert len(self.xi) == n + 1, f"Expected {n + 1} xi components, got {len(self.xi)}"
        u = self.u
        for c in self.xi:
            assert not c.has(u), f"xi component {c} depends on {u}"
        assert sp.diff(self.eta, u, 2) == 0 or is_zero(
            sp.diff(self.eta, u, 2)
        ), f"eta is not linear in {u}"
        return self

    @classmethod
    def build(
        cls,
        table: SymbolTable,
        xi_t: Any = 0,
        xi_x: Any = 0,
        xi_y: Any = 0,
        eta: Any = 0,
    ) -> "VectorField":
        """Field from named components; xi_y is ignored in one dimension."""
        n = len(table.coordinates)
        xi = (xi_t, xi_x, xi_y)[: n + 1]
        return cls(table=table, xi=xi, eta=eta)

    @property
    def u(self) -> sp.Symbol:
        return sp.Symbol(self.table.dependent, real=True)

    @property
    def variables(self) -> tuple[sp.Symbol, ...]:
        return (self.table.time, *self.table.coordinates)

    @property
    def xi_t(self) -> sp.Expr:
        return self.xi[0]

    @property
    def xi_x(self) -> sp.Expr:
        return self.xi[1] if len(self.xi) > 1 else sp.S.Zero

    @property
    def xi_y(self) -> sp.Expr:
        return self.xi[2] if len(self.xi) > 2 else sp.S.Zero

    @property
    def components(self) -> tuple[sp.Expr, ...]:
        return (*self.xi, self.eta)

    def with_components(self, components: Sequence[sp.Expr]) -> "VectorField":
        return VectorField(table=self.table, xi=tuple(components[:-1]), eta=components[-1])

    def apply(self, f: sp.Expr) -> sp.Expr:
        """X(f) for an expression in (t, x, u)."""
        result = self.eta * sp.diff(f, self.u)
        for c, v in zip(self.xi, self.variables):
            result += c * sp.diff(f, v)
        return result

    def canonical(self) -> "VectorField":
        return self.with_components([canonical(c) for c in self.components])

    def is_zero(self) -> bool:
        return all(is_zero(c) for c in self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        return self.with_components([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self.with_components([a - b for a, b in zip(self.components, other.components)])

    def __mul__(self, scalar: Any) -> "VectorField":
        scalar = sp.sympify(scalar)
        return self.with_components([scalar * c for c in self.components])

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return self * -1

    def to_dict(self) -> dict[str, str]:
        names = ["xi_t", "xi_x", "xi_y"][: len(self.xi)]
        out = {name: to_text(c, self.table) for name, c in zip(names, self.xi)}
        out["eta"] = to_text(self.eta, self.table)
        return out


class Generator(BaseModel):
    """A named catalog field together with the repairs of its printed form."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field(..., description="Name of the generator.")
    field: VectorField = Field(..., description="The vector field.")
    repairs: tuple[str, ...] = Field(default=(), description="Repairs of the printed form.")


class Residual(NamedTuple):
    multiplier: sp.Expr
    residual: sp.Expr
    parts: dict[sp.Expr, sp.Expr]


class CoefficientCondition(BaseModel):
    """Outcome of the Lie-derivative test L_xi A = -2 psi A."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    holds: bool = Field(..., description="Whether the condition holds identically.")
    psi: Any = Field(..., description="The conformal factor read from the 11 component.")
    residual: tuple[tuple[Any, ...], ...] = Field(..., description="L_xi A + 2 psi A.")


# ----------------------------------------------------------------------------
# Prolongation and the symmetry test
# ----------------------------------------------------------------------------

def _field_on(X: VectorField | Generator) -> tuple[VectorField, str, tuple[str, ...]]:
    if isinstance(X, Generator):
        return X.field, X.name, X.repairs
    return X, "X", ()


def _check_variables(pde: EvolutionPDE, X: VectorField) -> None:
    if [str(v) for v in X.variables] != [str(v) for v in pde.variables]:
        raise SymmetryError(
            f"Field variables {X.variables} do not match equation variables {pde.variables}"
        )
    if X.table.dependent != pde.table.dependent:
        raise SymmetryError(
            f"Field acts on {X.table.dependent}, the equation on {pde.table.dependent}"
        )


def _time_coefficient(pde: EvolutionPDE) -> sp.Expr:
    s = canonical(pde.time_coefficient)
    if s.free_symbols & set(pde.variables) or time_atoms(s):
        raise SymmetryError(f"The u_t coefficient {s} of {pde.name} is not constant")
    return s


def prolong2(X: VectorField, jets: JetSpace | None = None) -> dict[sp.Symbol, sp.Expr]:
    """Coefficients of the second prolongation.

    First-order coefficients are returned for every independent variable,
    second-order ones for the purely spatial jets.

    Args:
        X (VectorField): The field to prolong.
        jets (JetSpace | None): Jet coordinates, built from the field's table
            when omitted.

    Returns:
        dict[sp.Symbol, sp.Expr]: The prolonged coefficient keyed by its jet symbol.
    """
    jets = jets or JetSpace(X.table)
    n = len(jets.variables)
    first = {}
    for a in range(n):
        expr = jets.total_derivative(X.eta, a)
        for b in range(n):
            expr -= jets.d1(b) * jets.total_derivative(X.xi[b], a)
        first[a] = sp.expand(expr, power_exp=False)
    prolonged = {jets.d1(a): first[a] for a in range(n)}
    for i in range(1, n):
        for j in range(i, n):
            expr = jets.total_derivative(first[i], j)
            for c in range(n):
                expr -= jets.d2(i, c) * jets.total_derivative(X.xi[c], j)
            prolonged[jets.d2(i, j)] = sp.expand(expr, power_exp=False)
    return prolonged


def on_solution_residual(pde: EvolutionPDE, X: VectorField | Generator) -> Residual:
    """X^[2] Theta - Lambda Theta split by jet coordinates.

    Lambda is the u_t coefficient of X^[2] Theta divided by that of Theta, so the
    remainder is X^[2] Theta restricted to solutions. The key 1 holds the
    jet-free part.

    Raises:
        SymmetryError: If the u_t coefficient is not constant or the field
            lives on other variables.
    """
    X, _, _ = _field_on(X)
    _check_variables(pde, X)
    s = _time_coefficient(pde)
    jets = JetSpace(pde.table)
    theta = pde.theta(jets)
    prolonged = prolong2(X, jets)
    applied = X.eta * sp.diff(theta, jets.u)
    for c, v in zip(X.xi, jets.variables):
        applied += c * sp.diff(theta, v)
    for jet, coefficient in prolonged.items():
        applied += coefficient * sp.diff(theta, jet)
    applied = sp.expand(applied, power_exp=False)
    multiplier = canonical(sp.diff(applied, jets.d1(0)) / s)
    residual = sp.expand(applied - multiplier * theta, power_exp=False)
    parts = {}
    for jet in jets.symbols:
        coefficient = sp.diff(residual, jet)
        if coefficient != 0:
            parts[jet] = coefficient
    parts[sp.S.One] = residual.xreplace({jet: 0 for jet in jets.symbols})
    return Residual(multiplier, residual, parts)


def check_symmetry(
    pde: EvolutionPDE,
    X: VectorField | Generator,
    with_psi: bool = False,
) -> SymmetryReport:
    """On-solution symmetry test of X for pde.

    Args:
        pde (EvolutionPDE): A linear equation with constant u_t coefficient.
        X (VectorField | Generator): The candidate field.
        with_psi (bool): Also evaluate the coefficient condition.

    Returns:
        SymmetryReport: Verdict with Lambda or the nonvanishing residual.
    """
    field, name, repairs = _field_on(X)
    result = on_solution_residual(pde, field)
    failing = [jet for jet, c in result.parts.items() if not is_zero(c)]
    psi = None
    if with_psi:
        condition = check_coefficient_condition(pde, field)
        psi = to_text(condition.psi, field.table) if condition.holds else None
    if failing:
        logger.debug(f"{name} fails on {pde.name}: nonzero coefficients of {failing}")
        return SymmetryReport(
            model=pde.name,
            generator=name,
            verdict="not-symmetry",
            residual=to_text(canonical(result.residual), field.table),
            psi=psi,
            repairs=list(repairs),
        )
    return SymmetryReport(
        model=pde.name,
        generator=name,
        verdict="symmetry",
        multiplier=to_text(result.multiplier, field.table),
        psi=psi,
        repairs=list(repairs),
    )


def check_coefficient_condition(pde: EvolutionPDE, X: VectorField) -> CoefficientCondition:
    """Lie derivative of the principal part along (xi^t, xi^i).

    The condition holds when L_xi A^ij = -2 psi A^ij with psi a function of
    time only.
    """
    _check_variables(pde, X)
    t, *xs = pde.variables
    n = pde.dimension
    if n == 0:
        return CoefficientCondition(holds=True, psi=sp.S.Zero, residual=())
    A = pde.diffusion
    xi = X.xi[1:]
    lie = [
        [
            X.xi_t * sp.diff(A[i][j], t)
            + sum(xi[k] * sp.diff(A[i][j], xs[k]) for k in range(n))
            - sum(A[i][k] * sp.diff(xi[j], xs[k]) for k in range(n))
            - sum(A[k][j] * sp.diff(xi[i], xs[k]) for k in range(n))
            for j in range(n)
        ]
        for i in range(n)
    ]
    psi = canonical(-lie[0][0] / (2 * A[0][0]))
    residual = tuple(
        tuple(canonical(lie[i][j] + 2 * psi * A[i][j]) for j in range(n)) for i in range(n)
    )
    holds = all(is_zero(r) for row in residual for r in row) and not (
        psi.free_symbols & set(xs)
    )
    return CoefficientCondition(holds=holds, psi=psi, residual=residual)


# ----------------------------------------------------------------------------
# Generator catalogs
# ----------------------------------------------------------------------------

CANONICAL_REPAIRS: dict[str, tuple[str, ...]] = {
    "X_u": ("coefficient 'F' of the scaling generator read as u",),
    "X2": ("u-coefficient 'x + phi1 t' read as 'x + 1/2 phi1 t'",),
    "X4": ("u-coefficient '1/2 (y+phi2 t)' read as 'y + 1/2 phi2 t'",),
    "X6": ("t-term '1/2 t(phi1^2+phi2^2+8k)' read as '1/4 t(phi1^2+phi2^2+8k)'",),
    "X7": (
        "u-coefficient read as '1/2(x^2+y^2) + 1/2 t(phi1 x+phi2 y) "
        "+ 1/8 t^2(phi1^2+phi2^2+8k) - t'",
    ),
}

SPECIAL_REPAIRS: dict[str, tuple[str, ...]] = {
    "Z5": ("u-term '1/2(Lambda1 y - 1/2 Lambda2 x)' dropped",),
    "Z7": (
        "'int t Lambda_i dt' read as 'int t Lambda_i' dt'",
        "u-coefficient 'tk' read as '2tk'",
    ),
    "Z8": ("'4t(t-1)' read as '4t(kt-1)'",),
}


def _is_constant(expr: sp.Expr, pde: EvolutionPDE) -> bool:
    expr = canonical(expr)
    return not (expr.free_symbols & set(pde.variables)) and not time_atoms(expr)


def _space_free(expr: sp.Expr, pde: EvolutionPDE) -> bool:
    return not (canonical(expr).free_symbols & set(pde.coordinates))


def linear_drift(pde: EvolutionPDE) -> tuple[sp.Matrix, sp.Matrix]:
    """(M, m) with drift B = -(M x + m) and M, m free of space.

    Raises:
        SymmetryError: If the drift is not affine in space.
    """
    xs = pde.coordinates
    n = pde.dimension
    M = sp.Matrix(n, n, lambda i, j: canonical(-sp.diff(pde.drift[i], xs[j])))
    m = sp.Matrix([canonical(-b.xreplace({x: 0 for x in xs})) for b in pde.drift])
    x_vec = sp.Matrix(xs)
    rebuilt = -(M * x_vec + m)
    for i in range(n):
        if not _space_free(M[i, :], pde) or not is_zero(pde.drift[i] - rebuilt[i]):
            raise SymmetryError(f"Drift of {pde.name} is not affine in space")
    return M, m


def canonical_family(pde: EvolutionPDE) -> list[Generator]:
    """Point symmetries of Delta u - m.grad u + c u + s u_t = 0, m and c constant.

    Two dimensions give X_t, X_u and X1-X7 (translations, Galilean boosts,
    rotation, dilation, projective field); one dimension gives X_t, X_u and
    X1-X4.
    """
    if not pde.is_identity_laplacian():
        raise SymmetryError(f"{pde.name} does not have an identity principal part")
    s = _time_coefficient(pde)
    m = [-b for b in pde.drift]
    c = pde.source
    if not all(_is_constant(e, pde) for e in (*m, c)):
        raise SymmetryError(f"{pde.name} does not have constant drift and source")
    table = pde.table
    t = table.time
    xs = table.coordinates
    n = len(xs)
    u = sp.Symbol(table.dependent, real=True)
    m_sq = sum(mi**2 for mi in m)
    m_x = sum(mi * xi for mi, xi in zip(m, xs))
    r_sq = sum(xi**2 for xi in xs)
    zero = [sp.S.Zero] * n

    def field(xi_t: Any, xi: Sequence[Any], eta: Any) -> VectorField:
        return VectorField(table=table, xi=(xi_t, *xi), eta=eta)

    def unit(i: int, value: Any) -> list[Any]:
        return [value if j == i else 0 for j in range(n)]

    named = [("X_t", field(1, zero, 0)), ("X_u", field(0, zero, u))]
    for i in range(n):
        named.append((f"X{2 * i + 1}", field(0, unit(i, 1), 0)))
        named.append(
            (
                f"X{2 * i + 2}",
                field(0, unit(i, t), (s * xs[i] / 2 + m[i] * t / 2) * u),
            )
        )
    if n == 2:
        x, y = xs
        named.append(("X5", field(0, [y, -x], (m[0] * y - m[1] * x) / 2 * u)))
    dilation = field(2 * t, xs, (m_x / 2 + t * (m_sq / 2 - 2 * c) / s) * u)
    projective = field(
        t**2,
        [t * xi for xi in xs],
        (s * r_sq / 4 + t * m_x / 2 + t**2 * (m_sq / 4 - c) / s - sp.Rational(n, 2) * t) * u,
    )
    last = len(named) - 1
    named += [(f"X{last}", dilation), (f"X{last + 1}", projective)]
    repairs = CANONICAL_REPAIRS if pde.name == "bs2d_canonical" else {}
    return [Generator(name=k, field=f, repairs=repairs.get(k, ())) for k, f in named]


class Mode(BaseModel):
    """Translation or Galilean mode of an autonomous affine drift."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["translation", "galilean"] = Field(..., description="Type of the mode.")
    eigenvalue: Any = Field(..., description="Eigenvalue of M (translation) or M^T (Galilean).")
    xi: tuple[Any, ...] = Field(..., description="Spatial components b(t).")
    phi: Any = Field(..., description="Coefficient of u in eta.")


def _simple_real_spectrum(M: sp.Matrix) -> list[tuple[sp.Expr, sp.Matrix]]:
    pairs = []
    for value, multiplicity, vectors in M.eigenvects():
        if not value.is_number:
            raise SymmetryError(f"Eigenvalue {value} is not numeric; bind the drift parameters")
        if multiplicity > 1:
            raise SymmetryError(f"Repeated eigenvalue {value} of the drift matrix")
        if value.is_real is False or sp.im(sp.N(value)) != 0:
            raise SymmetryError(f"Complex eigenvalue {value} of the drift matrix")
        pairs.append((value, vectors[0]))
    return sorted(pairs, key=lambda p: float(sp.N(p[0])))


def autonomous_modes(
    M: sp.Matrix, m: sp.Matrix, s: sp.Expr, time: sp.Symbol, coordinates: Sequence[sp.Symbol]
) -> list[Mode]:
    """Eigen-modes of Delta u - (M x + m).grad u + s u_t = 0.

    Translations are b = exp(-lambda t/s) e with M e = lambda e. Galilean modes
    have v = exp(mu t/s) f with M^T f = mu f and solve s b' + M b = v.

    Raises:
        SymmetryError: On repeated, complex or symbolic eigenvalues.
    """
    t = time
    xs = sp.Matrix(coordinates)
    n = M.shape[0]
    modes = []
    for value, e in _simple_real_spectrum(M):
        b = sp.exp(-value * t / s) * e
        modes.append(Mode(kind="translation", eigenvalue=value, xi=tuple(b), phi=0))
    for mu, f in _simple_real_spectrum(M.T):
        c = mu / s
        e0 = sp.Matrix(sp.symbols(f"e0_:{n}"))
        e1 = sp.Matrix(sp.symbols(f"e1_:{n}"))
        shifted = s * c * sp.eye(n) + M
        equations = list(shifted * e1) + list(shifted * e0 + s * e1 - f)
        unknowns = [*e0, *e1]
        solutions = sp.linsolve(equations, unknowns)
        if solutions == sp.S.EmptySet:
            raise SymmetryError(f"No Galilean mode for eigenvalue {mu}")
        (solution,) = solutions
        free = {sym: 0 for sym in unknowns}
        solution = [sp.sympify(v).xreplace(free) for v in solution]
        e0_val = sp.Matrix(solution[:n])
        e1_val = sp.Matrix(solution[n:])
        b = sp.exp(c * t) * (e0_val + t * e1_val)
        v = sp.exp(c * t) * f
        mf = (m.T * f)[0]
        h = sp.exp(c * t) * mf / (2 * mu) if mu != 0 else t * mf / (2 * s)
        phi = (v.T * xs)[0] / 2 + h
        modes.append(
            Mode(kind="galilean", eigenvalue=mu, xi=tuple(canonical(x) for x in b), phi=canonical(phi))
        )
    return modes


def _autonomous_generators(pde: EvolutionPDE) -> list[Generator]:
    if not pde.is_identity_laplacian():
        raise SymmetryError(f"{pde.name} does not have an identity principal part")
    s = _time_coefficient(pde)
    M, m = linear_drift(pde)
    if not all(_is_constant(e, pde) for e in (*M, *m, pde.source)):
        raise SymmetryError(f"{pde.name} is not autonomous")
    table = pde.table
    u = sp.Symbol(table.dependent, real=True)
    modes = autonomous_modes(M, m, s, table.time, table.coordinates)
    translations = [md for md in modes if md.kind == "translation"]
    galileans = [md for md in modes if md.kind == "galilean"]
    n = pde.dimension
    zero = [0] * n
    generators = [
        Generator(name="X_t", field=VectorField(table=table, xi=(1, *zero), eta=0)),
        Generator(name="X_F", field=VectorField(table=table, xi=(0, *zero), eta=u)),
    ]
    # M and M^T share their spectrum; pair modes of the same eigenvalue.
    for k, tr in enumerate(translations):
        partner = next(g for g in galileans if is_zero(g.eigenvalue - tr.eigenvalue))
        generators.append(
            Generator(name=f"X{2 * k + 1}", field=VectorField(table=table, xi=(0, *tr.xi), eta=0))
        )
        generators.append(
            Generator(
                name=f"X{2 * k + 2}",
                field=VectorField(table=table, xi=(0, *partner.xi), eta=partner.phi * u),
            )
        )
    return generators


def _twofactor_q0_generators(pde: EvolutionPDE) -> list[Generator]:
    M, m = linear_drift(pde)
    if not (is_zero(M[1, 0]) and is_zero(M[1, 1]) and is_zero(m[1])):
        raise SymmetryError(f"{pde.name} has a nonzero second drift row")
    p1, p2, p3 = M[0, 0], M[0, 1], m[0]
    table = pde.table
    t = table.time
    x, y = table.coordinates
    u = sp.Symbol(table.dependent, real=True)

    def field(xi_t: Any, xi_x: Any, xi_y: Any, eta: Any) -> VectorField:
        return VectorField(table=table, xi=(xi_t, xi_x, xi_y), eta=eta)

    decay = sp.exp(-p1 * t / 2)
    return [
        Generator(name="X_t", field=field(1, 0, 0, 0)),
        Generator(name="X_F", field=field(0, 0, 0, u)),
        Generator(name="X'1", field=field(0, p2, -p1, 0)),
        Generator(name="X'2", field=field(0, sp.exp(p1 * t / 2), 0, 0)),
        Generator(
            name="X'3", field=field(0, p1 * p2 * t + 2 * p2, -t * p1**2, p1**2 * y * u)
        ),
        Generator(
            name="X'4",
            field=field(
                0,
                decay * (p1**2 - p2**2),
                decay * 2 * p1 * p2,
                decay * p1**2 * (p1 * x + p2 * y + p3) * u,
            ),
        ),
    ]


def _special_nonauto_generators(pde: EvolutionPDE) -> list[Generator]:
    if not pde.is_identity_laplacian() or pde.dimension != 2:
        raise SymmetryError(f"{pde.name} is not of the identity-Laplacian (1+2) form")
    if not is_zero(_time_coefficient(pde) - 2):
        raise SymmetryError(f"{pde.name} must carry +2 u_t")
    if not all(_space_free(e, pde) for e in (*pde.drift, pde.source)):
        raise SymmetryError(f"Drift and source of {pde.name} must be free of space")
    table = pde.table
    t = table.time
    x, y = table.coordinates
    u = sp.Symbol(table.dependent, real=True)
    lam = [canonical(-b) for b in pde.drift]
    k = canonical(-pde.source / 2)

    atoms: dict[str, list[sp.Expr]] = {key: [] for key in "LJKDMNR"}
    for i, li in enumerate(lam, start=1):
        dl = sp.diff(li, t)
        table, L = integrate_in_time(table, fresh_name(table, f"L{i}"), li)
        table, J = integrate_in_time(table, fresh_name(table, f"J{i}"), t * dl)
        table, K = integrate_in_time(table, fresh_name(table, f"K{i}"), t**2 * sp.diff(li, t, 2))
        table, D = integrate_in_time(table, fresh_name(table, f"D{i}"), K + 3 * J)
        table, Mi = integrate_in_time(table, fresh_name(table, f"M{i}"), li * K)
        table, Ni = integrate_in_time(table, fresh_name(table, f"N{i}"), li * J)
        table, Ri = integrate_in_time(table, fresh_name(table, f"R{i}"), t**2 * li * dl)
        for key, value in zip("LJKDMNR", (L, J, K, D, Mi, Ni, Ri)):
            atoms[key].append(value)
    table, S = integrate_in_time(table, fresh_name(table, "S12"), t * (lam[0] ** 2 + lam[1] ** 2))
    L, J, K, D = atoms["L"], atoms["J"], atoms["K"], atoms["D"]
    xs = (x, y)

    def field(xi_t: Any, xi_x: Any, xi_y: Any, eta: Any) -> VectorField:
        return VectorField(table=table, xi=(xi_t, xi_x, xi_y), eta=eta)

    z8_eta = sum(
        -xs[i] / 2 * (K[i] + 3 * J[i] - t**2 * sp.diff(lam[i], t) - t * lam[i] - xs[i])
        for i in range(2)
    )
    z8_eta += (
        4 * t * (k * t - 1)
        - sum(atoms["M"])
        - 3 * sum(atoms["N"])
        + sum(atoms["R"])
        + S
    ) / 4
    named = [
        ("X_u", field(0, 0, 0, u)),
        ("Z1", field(0, 1, 0, 0)),
        ("Z2", field(0, t, 0, (L[0] / 2 + x) * u)),
        ("Z3", field(0, 0, 1, 0)),
        ("Z4", field(0, 0, t, (L[1] / 2 + y) * u)),
        ("Z5", field(0, y + L[1] / 2, -(x + L[0] / 2), 0)),
        ("Z6", field(1, -lam[0] / 2, -lam[1] / 2, k * u)),
        ("Z7", field(2 * t, x - L[0] / 2 - J[0], y - L[1] / 2 - J[1], 2 * t * k * u)),
        ("Z8", field(t**2, t * x - D[0] / 2, t * y - D[1] / 2, z8_eta * u)),
    ]
    return [Generator(name=n, field=f, repairs=SPECIAL_REPAIRS.get(n, ())) for n, f in named]


GENERATOR_CATALOGS = {
    "bs2d_canonical": canonical_family,
    "heat2d": canonical_family,
    "heat1d": canonical_family,
    "twofactor_q0": _twofactor_q0_generators,
    "twofactor_autonomous": _autonomous_generators,
    "bs2d_special_nonauto": _special_nonauto_generators,
}


def catalog_generators(
    model_id: str,
    params: Mapping[str, Any] | None = None,
    table: SymbolTable | None = None,
) -> list[Generator]:
    """Stored generators of a catalog model, in repaired form.

    ``twofactor_autonomous`` needs numeric drift coefficients; its example
    parameters are used when none are given.

    Raises:
        SymmetryError: If the model has no stored generator catalog.
    """
    if model_id not in GENERATOR_CATALOGS:
        raise SymmetryError(f"No generator catalog for model '{model_id}'")
    if not params and model_id == "twofactor_autonomous":
        params = EXAMPLE_PARAMS[model_id]
    pde = catalog(model_id, params, table)
    return GENERATOR_CATALOGS[model_id](pde)


# ----------------------------------------------------------------------------
# Generic vectors of the nonautonomous equations
# ----------------------------------------------------------------------------

GENERIC_NAMES = {"twofactor": ("a", "b1", "g", "h"), "bs2d": ("a", "b1", "f", "g")}


class GenericCoefficients(BaseModel):
    """Free data a(t), b1(t), b2(t), h(t) and the constant B2 of a generic vector.

    ``b2`` is printed as g for the two-factor model and as f for Black-Scholes;
    ``h`` is printed as h for the two-factor model and as g for Black-Scholes.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    family: Literal["twofactor", "bs2d"] = Field(..., description="Equation family.")
    time: Any = Field(default_factory=lambda: sp.Symbol("t", real=True), description="Time.")
    a: Any = Field(default=sp.S.Zero, description="Coefficient of d_t.")
    b1: Any = Field(default=sp.S.Zero, description="Translation in x.")
    b2: Any = Field(default=sp.S.Zero, description="Translation in y.")
    h: Any = Field(default=sp.S.Zero, description="Free term of the u-coefficient.")
    B2: Any = Field(default=sp.S.Zero, description="Rotation constant.")

    @model_validator(mode="before")
    @classmethod
    def sympify_values(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = {
                key: sp.sympify(value) if key in ("a", "b1", "b2", "h", "B2") else value
                for key, value in data.items()
            }
        return data

    @model_validator(mode="after")
    def validate_data(self) -> "GenericCoefficients":
        """Validate that B2 is a constant."""
        assert self.time not in self.B2.free_symbols and not time_atoms(
            self.B2
        ), f"B2 must be constant, got {self.B2}"
        return self

    @classmethod
    def symbolic(
        cls, family: Literal["twofactor", "bs2d"], table: SymbolTable, B2: Any = None
    ) -> tuple[SymbolTable, "GenericCoefficients"]:
        """Opaque a, b1, b2, h declared in ``table`` (B2 symbolic unless given)."""
        names = GENERIC_NAMES[family]
        for name in names:
            table = table.with_function(name)
        if B2 is None:
            table = table.with_constant("B2")
            B2 = table["B2"]
        values = dict(zip(("a", "b1", "b2", "h"), (table[n] for n in names)))
        return table, cls(family=family, time=table.time, B2=B2, **values)

    @property
    def unknowns(self) -> tuple[sp.Expr, ...]:
        return (self.a, self.b1, self.b2, self.h)

    def d(self, expr: sp.Expr, order: int = 1) -> sp.Expr:
        return sp.diff(expr, self.time, order)


def _table_of(c: GenericCoefficients, table: SymbolTable | None) -> SymbolTable:
    if table is not None:
        return table
    return SymbolTable(time=c.time)


def generic_vector_twofactor(
    c: GenericCoefficients, coeffs: Sequence[Any], table: SymbolTable | None = None
) -> VectorField:
    """Generic symmetry vector of the nonautonomous two-factor equation.

    Three monomials of the printed u-coefficient are repaired: '-4xb1'^2aP1''
    reads '-4xb1' + x^2aP1'', '-4yg'^2aQ2'' reads '-4yg' + y^2aQ2'' and
    '2yaQ3'^2a''' reads '2yaQ3' - y^2a'''.
    """
    table = _table_of(c, table)
    x, y = table.coordinates
    u = sp.Symbol(table.dependent, real=True)
    P1, P2, P3, Q1, Q2, Q3 = (sp.sympify(v) for v in coeffs)
    a, b1, g, h, B2 = c.a, c.b1, c.b2, c.h, c.B2
    d = c.d
    omega = B2 + a * P2 / 4 - a * Q1 / 4
    F = (
        4 * h
        + 2 * x * b1 * P1
        + 2 * x * g * P2
        + x**2 * (-P2 - Q1) * omega
        + 2 * x * omega * (y * P1 - y * Q2 - Q3)
        + x**2 * P1 * d(a)
        + 2 * x * y * P2 * d(a)
        + x * P3 * d(a)
        - 4 * x * d(b1)
        + x**2 * a * d(P1)
        + 2 * x * y * a * d(P2)
        + 2 * x * a * d(P3)
        - 4 * x * y * (P2 * d(a) / 4 - Q1 * d(a) / 4 + a * d(P2) / 4 - a * d(Q1) / 4)
        - x**2 * d(a, 2)
        + 2 * y * b1 * Q1
        + 2 * y * P3 * omega
        + y**2 * (P2 + Q1) * omega
        + 2 * y * g * Q2
        + y**2 * Q2 * d(a)
        + y * Q3 * d(a)
        - 4 * y * d(g)
        + y**2 * a * d(Q2)
        + 2 * y * a * d(Q3)
        - y**2 * d(a, 2)
    ) / 4
    xi_x = b1 + y * omega + x * d(a) / 2
    xi_y = g - x * omega + y * d(a) / 2
    return VectorField(table=table, xi=(a, xi_x, xi_y), eta=F * u)


def generic_vector_bs2d(
    c: GenericCoefficients, coeffs: Sequence[Any], table: SymbolTable | None = None
) -> VectorField:
    """Generic symmetry vector of the nonautonomous Black-Scholes equation.

    ``coeffs`` is (P1, Q1, Q2, Q3) or (P1, Q1, Q2, Q3, k). Repairs of the printed
    u-coefficient: '4yf'^2aQ2'' reads '4yf' + y^2aQ2'' and '2yaQ3'^2a''' reads
    '2yaQ3' + y^2a'''.
    """
    table = _table_of(c, table)
    x, y = table.coordinates
    u = sp.Symbol(table.dependent, real=True)
    P1, Q1, Q2, Q3 = (sp.sympify(v) for v in list(coeffs)[:4])
    a, b1, f, g, B2 = c.a, c.b1, c.b2, c.h, c.B2
    d = c.d
    omega = B2 + a * Q1 / 4
    F = (
        4 * g
        - x**2 * Q1 * omega
        - 2 * x * omega * (y * Q2 + Q3)
        + x * P1 * d(a)
        + 4 * x * d(b1)
        + 2 * x * a * d(P1)
        + x**2 * d(a, 2)
        + 4 * x * y * (Q1 * d(a) / 4 + a * d(Q1) / 4)
        + 2 * y * b1 * Q1
        + 2 * y * P1 * omega
        + y**2 * Q1 * omega
        + 2 * y * f * Q2
        + y**2 * Q2 * d(a)
        + y * Q3 * d(a)
        + 4 * y * d(f)
        + y**2 * a * d(Q2)
        + 2 * y * a * d(Q3)
        + y**2 * d(a, 2)
    ) / 4
    xi_x = b1 + y * omega + x * d(a) / 2
    xi_y = f - x * omega + y * d(a) / 2
    return VectorField(table=table, xi=(a, xi_x, xi_y), eta=F * u)


def determining_residuals_twofactor(
    c: GenericCoefficients, coeffs: Sequence[Any]
) -> list[sp.Expr]:
    """The four determining equations of the generic two-factor vector, as printed."""
    P1, P2, P3, Q1, Q2, Q3 = (sp.sympify(v) for v in coeffs)
    a, b1, g, h, B2 = c.a, c.b1, c.b2, c.h, c.B2
    d = c.d
    R = sp.Rational
    a1, a2 = d(a), d(a, 2)
    eq1 = (
        -R(1, 2) * b1 * P1 * P3 - R(1, 2) * g * P2 * P3 - R(1, 2) * b1 * Q1 * Q3
        - R(1, 2) * g * Q2 * Q3
        + R(1, 2) * P1 * a1 - R(1, 4) * P3**2 * a1 + R(1, 2) * Q2 * a1
        - R(1, 4) * Q3**2 * a1 + P3 * d(b1)
        + Q3 * d(g) - 2 * d(h) + R(1, 2) * a * d(P1) - R(1, 2) * a * P3 * d(P3)
        + R(1, 2) * a * d(Q2) - R(1, 2) * a * Q3 * d(Q3) - a2
    )
    eq2 = (
        -R(1, 2) * b1 * P1**2 - R(1, 2) * g * P1 * P2 + R(1, 2) * B2 * P2 * P3
        + R(1, 8) * a * P2**2 * P3 - R(1, 8) * a * P2 * P3 * Q1
        - R(1, 2) * b1 * Q1**2 - R(1, 2) * g * Q1 * Q2 + R(1, 2) * B2 * Q2 * Q3
        + R(1, 8) * a * P2 * Q2 * Q3 - R(1, 8) * a * Q1 * Q2 * Q3
        - R(3, 4) * P1 * P3 * a1 - R(3, 4) * Q1 * Q3 * a1 - P2 * d(g) + Q1 * d(g)
        - b1 * d(P1) - R(1, 2) * a * P3 * d(P1)
        - g * d(P2) - R(1, 2) * a * P1 * d(P3) - R(3, 2) * a1 * d(P3)
        - R(1, 2) * a * Q3 * d(Q1)
        + B2 * d(Q3) + R(1, 4) * a * P2 * d(Q3) - R(3, 4) * a * Q1 * d(Q3)
        + 2 * d(b1, 2) - a * d(P3, 2)
    )
    eq3 = (
        -R(1, 2) * b1 * P1 * P2 - R(1, 2) * g * P2**2 - R(1, 2) * B2 * P1 * P3
        - R(1, 8) * a * P1 * P2 * P3 + R(1, 8) * a * P1 * P3 * Q1
        - R(1, 2) * b1 * Q1 * Q2 - R(1, 2) * g * Q2**2 - R(1, 2) * B2 * Q1 * Q3
        - R(1, 8) * a * P2 * Q1 * Q3 + R(1, 8) * a * Q1**2 * Q3
        - R(3, 4) * P2 * P3 * a1 - R(3, 4) * Q2 * Q3 * a1 + P2 * d(b1) - Q1 * d(b1)
        - R(1, 2) * a * P3 * d(P2)
        - B2 * d(P3) - R(3, 4) * a * P2 * d(P3) + R(1, 4) * a * Q1 * d(P3)
        - b1 * d(Q1) - g * d(Q2)
        - R(1, 2) * a * Q3 * d(Q2) - R(1, 2) * a * Q2 * d(Q3) - R(3, 2) * a1 * d(Q3)
        + 2 * d(g, 2) - a * d(Q3, 2)
    )
    eq4 = (
        B2 * P1 * P2 + R(1, 4) * a * P1 * P2**2 - R(1, 4) * a * P1 * P2 * Q1 + B2 * Q1 * Q2
        + R(1, 4) * a * P2 * Q1 * Q2 - R(1, 4) * a * Q1**2 * Q2 - R(1, 2) * P1**2 * a1
        + R(1, 2) * P2**2 * a1 - R(1, 2) * Q1**2 * a1
        + R(1, 2) * Q2**2 * a1 - R(1, 2) * a * P1 * d(P1)
        - a1 * d(P1) + B2 * d(P2) + R(3, 4) * a * P2 * d(P2) - R(1, 4) * a * Q1 * d(P2)
        + B2 * d(Q1) + R(1, 4) * a * P2 * d(Q1) - R(3, 4) * a * Q1 * d(Q1)
        + R(1, 2) * a * Q2 * d(Q2) + a1 * d(Q2) - R(1, 2) * a * d(P1, 2)
        + R(1, 2) * a * d(Q2, 2)
    )
    return [eq1, eq2, eq3, eq4]


def determining_residuals_bs2d(c: GenericCoefficients, coeffs: Sequence[Any]) -> list[sp.Expr]:
    """The five determining equations of the generic Black-Scholes vector, as printed.

    ``coeffs`` is (P1, Q1, Q2, Q3, k).
    """
    P1, Q1, Q2, Q3, k = (sp.sympify(v) for v in coeffs)
    a, b1, f, g, B2 = c.a, c.b1, c.b2, c.h, c.B2
    d = c.d
    R = sp.Rational
    a1, a2 = d(a), d(a, 2)
    eq1 = (
        -R(1, 2) * b1 * Q1 * Q3 - R(1, 2) * f * Q2 * Q3 - 2 * k * a1 - R(1, 4) * P1**2 * a1
        + R(1, 2) * Q2 * a1 - R(1, 4) * Q3**2 * a1
        - P1 * d(b1) - Q3 * d(f) + 2 * d(g) - 2 * a * d(k)
        - R(1, 2) * a * P1 * d(P1) + R(1, 2) * a * d(Q2) - R(1, 2) * a * Q3 * d(Q3) + a2
    )
    eq2 = (
        -R(1, 2) * b1 * Q1**2 - R(1, 2) * f * Q1 * Q2 + R(1, 2) * B2 * Q2 * Q3
        + R(1, 8) * a * Q1 * Q2 * Q3 - R(3, 4) * Q1 * Q3 * a1
        - Q1 * d(f) + R(3, 2) * a1 * d(P1) - R(1, 2) * a * Q3 * d(Q1) - B2 * d(Q3)
        - R(3, 4) * a * Q1 * d(Q3) + 2 * d(b1, 2) + a * d(P1, 2)
    )
    eq3 = (
        -R(1, 2) * b1 * Q1 * Q2 - R(1, 2) * f * Q2**2 - R(1, 2) * B2 * Q1 * Q3
        - R(1, 8) * a * Q1**2 * Q3 - R(3, 4) * Q2 * Q3 * a1
        + Q1 * d(b1) + B2 * d(P1) + R(1, 4) * a * Q1 * d(P1) + b1 * d(Q1) + f * d(Q2)
        - R(1, 2) * a * Q3 * d(Q2) - R(1, 2) * a * Q2 * d(Q3) + R(3, 2) * a1 * d(Q3)
        + 2 * d(f, 2) + a * d(Q3, 2)
    )
    eq4 = (
        -R(1, 2) * B2 * Q1**2 - R(1, 8) * a * Q1**3 + R(1, 2) * B2 * Q2**2
        + R(1, 8) * a * Q1 * Q2**2
        - Q1 * Q2 * a1 - R(1, 2) * a * Q2 * d(Q1) + a1 * d(Q1) - B2 * d(Q2)
        - R(3, 4) * a * Q1 * d(Q2) + R(1, 2) * a * d(Q1, 2)
    )
    eq5 = (
        -B2 * Q1 * Q2 - R(1, 4) * a * Q1**2 * Q2 + R(1, 2) * Q1**2 * a1
        - R(1, 2) * Q2**2 * a1
        + B2 * d(Q1) + R(3, 4) * a * Q1 * d(Q1) - R(1, 2) * a * Q2 * d(Q2) + a1 * d(Q2)
        + R(1, 2) * a * d(Q2, 2)
    )
    return [eq1, eq2, eq3, eq4, eq5]


COEFFICIENT_NAMES = {
    "twofactor": ("P1", "P2", "P3", "Q1", "Q2", "Q3"),
    "bs2d": ("P1", "Q1", "Q2", "Q3", "k"),
}
NONAUTO_MODELS = {"twofactor": "twofactor_nonauto", "bs2d": "bs2d_nonauto"}


def engine_determining_system(
    c: GenericCoefficients, coeffs: Sequence[Any], table: SymbolTable
) -> dict[tuple[int, int], sp.Expr]:
    """Determining equations regenerated from the symmetry test.

    The on-solution residual of the generic vector is u times a quadratic
    polynomial in (x, y); its coefficients are returned keyed by the exponents.
    Every other jet coefficient vanishes identically.

    Raises:
        SymmetryError: If another jet coefficient survives.
    """
    names = COEFFICIENT_NAMES[c.family]
    pde = catalog(NONAUTO_MODELS[c.family], dict(zip(names, coeffs)), table)
    if c.family == "twofactor":
        X = generic_vector_twofactor(c, coeffs, pde.table)
    else:
        X = generic_vector_bs2d(c, coeffs, pde.table)
    result = on_solution_residual(pde, X)
    u = sp.Symbol(pde.table.dependent, real=True)
    for jet, coefficient in result.parts.items():
        if jet != u and not is_zero(coefficient):
            raise SymmetryError(f"Generic vector leaves a {jet} coefficient")
    u_part = sp.expand(result.parts.get(u, sp.S.Zero), power_exp=False)
    poly = sp.Poly(u_part, *pde.coordinates)
    return {monomial: coefficient for monomial, coefficient in poly.as_dict().items()}


def _monomial(system: Mapping[tuple[int, int], sp.Expr], i: int, j: int) -> sp.Expr:
    return system.get((i, j), sp.S.Zero)


def engine_residuals(
    c: GenericCoefficients, coeffs: Sequence[Any], table: SymbolTable
) -> list[sp.Expr]:
    """Engine combinations in the order of the printed equations."""
    U = engine_determining_system(c, coeffs, table)
    if c.family == "twofactor":
        return [_monomial(U, 0, 0), _monomial(U, 1, 0), _monomial(U, 0, 1),
                _monomial(U, 2, 0) - _monomial(U, 0, 2)]
    return [_monomial(U, 0, 0), _monomial(U, 1, 0), _monomial(U, 0, 1),
            _monomial(U, 1, 1), _monomial(U, 0, 2) - _monomial(U, 2, 0)]


def supplementary_residuals_twofactor(
    c: GenericCoefficients, coeffs: Sequence[Any], table: SymbolTable
) -> list[sp.Expr]:
    """The xy and trace conditions the printed two-factor system omits."""
    U = engine_determining_system(c, coeffs, table)
    return [_monomial(U, 1, 1), _monomial(U, 2, 0) + _monomial(U, 0, 2)]


def supplementary_residuals_bs2d(
    c: GenericCoefficients, coeffs: Sequence[Any], table: SymbolTable
) -> list[sp.Expr]:
    """The trace condition the printed Black-Scholes system omits."""
    U = engine_determining_system(c, coeffs, table)
    return [_monomial(U, 2, 0) + _monomial(U, 0, 2)]


# ----------------------------------------------------------------------------
# Batch verification
# ----------------------------------------------------------------------------

def worker_count(requested: int | None = None) -> int:
    """Pool size, capped by SYMFIN_THREADS."""
    cap = env.int("SYMFIN_THREADS", 1)
    return max(1, min(requested or cap, cap))


def verify_generators(
    pde: EvolutionPDE, generators: Sequence[Generator], workers: int | None = None
) -> VerificationReport:
    """Run check_symmetry over ``generators``, in a thread pool when allowed."""
    workers = worker_count(workers)
    logger.info(f"Verifying {len(generators)} generators of {pde.name} with {workers} workers")
    if workers > 1:
        with ThreadPool(workers) as pool:
            reports = pool.map(lambda g: check_symmetry(pde, g), generators)
    else:
        reports = [check_symmetry(pde, g) for g in generators]
    for report in reports:
        logger.info(f"{pde.name} {report.generator}: {report.verdict}")
    return VerificationReport(model=pde.name, reports=reports)


def verify_catalog(
    model_id: str,
    params: Mapping[str, Any] | None = None,
    workers: int | None = None,
) -> VerificationReport:
    """Verify every stored generator of ``model_id``."""
    if not params and model_id == "twofactor_autonomous":
        params = EXAMPLE_PARAMS[model_id]
    pde = catalog(model_id, params)
    return verify_generators(pde, catalog_generators(model_id, params), workers)


def generators_from_file(path: pathlib.Path | str, table: SymbolTable) -> list[Generator]:
    """Generators from a YAML or JSON document.

    The document holds an optional ``declarations`` list (``I1 := int(...)``)
    and a ``generators`` list of ``{name, xi_t, xi_x, xi_y, eta, repairs}``
    entries whose values are expression strings.

    Raises:
        SymmetryError: If the document is malformed.
        ExpressionError: If an expression does not parse.
    """
    data = load_config(pathlib.Path(path))
    if not isinstance(data, dict) or not isinstance(data.get("generators"), list):
        raise SymmetryError(f"{path} has no 'generators' list")
    for text in data.get("declarations", []):
        table, _ = declare(text, table)
    generators = []
    for entry in data["generators"]:
        if not isinstance(entry, dict) or "name" not in entry:
            raise SymmetryError(f"Malformed generator entry {entry!r} in {path}")
        values = {
            key: parse(str(entry.get(key, "0")), table)
            for key in ("xi_t", "xi_x", "xi_y", "eta")
        }
        try:
            field = VectorField.build(table, **values)
        except (AssertionError, ValueError) as err:
            raise SymmetryError(f"Invalid generator {entry['name']}: {err}") from err
        generators.append(
            Generator(name=str(entry["name"]), field=field, repairs=tuple(entry.get("repairs", ())))
        )
    return generators


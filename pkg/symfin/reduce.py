"""Maps to the heat equation, the invariant solution and reductions to (1+1)."""

import logging
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import sympy as sp
from pydantic import BaseModel, ConfigDict, Field

from symfin.expr import (
    SymbolTable,
    bind,
    canonical,
    compile_numeric,
    fresh_name,
    integrate_in_time,
    is_zero,
    substitute,
    time_atoms,
    to_text,
)
from symfin.models import (
    EvolutionPDE,
    PointTransformation,
    apply_transformation,
    catalog,
    new_symbols,
)
from symfin.results import ClosedFormReport
from symfin.symmetry import Generator, VectorField, check_symmetry

logger = logging.getLogger("symfin")

HEAT_TIME_COEFFICIENT = -1


class ReductionError(ValueError):
    pass


class UnsupportedShapeError(ReductionError):
    pass


def _constant_time_coefficient(pde: EvolutionPDE) -> sp.Expr:
    s = canonical(pde.time_coefficient)
    if s.free_symbols & set(pde.variables) or time_atoms(s):
        raise UnsupportedShapeError(f"{pde.name} has a non-constant u_t coefficient")
    return s


def _space_free(expr: sp.Expr, pde: EvolutionPDE) -> bool:
    return not (canonical(expr).free_symbols & set(pde.coordinates))


def to_heat(pde: EvolutionPDE) -> PointTransformation:
    """Map Delta u + B(t).grad u + c(t) u + s u_t = 0 onto Delta v - v_T = 0.

    With T = -t/s, xb = x - int B/s dt and u = exp(-int c/s dt) v the pullback is
    the heat equation term for term.

    Raises:
        UnsupportedShapeError: If the principal part is not the identity, s is
            not constant, or the drift or the source depends on space.
    """
    if pde.dimension == 1:
        return to_heat_1p1(pde)
    if pde.dimension != 2 or not pde.is_identity_laplacian():
        raise UnsupportedShapeError(f"{pde.name} is not an identity-Laplacian (1+2) equation")
    s = _constant_time_coefficient(pde)
    if not all(_space_free(e, pde) for e in (*pde.drift, pde.source)):
        raise UnsupportedShapeError(f"Drift and source of {pde.name} must be free of space")
    table = pde.table
    t = table.time
    tau, *bars = new_symbols(pde.dimension)
    shifts = []
    for x, b in zip(table.coordinates, pde.drift):
        table, G = integrate_in_time(table, fresh_name(table, f"G{x}"), canonical(b / s))
        shifts.append(G)
    table, E = integrate_in_time(table, fresh_name(table, "E"), canonical(-pde.source / s))
    back = {t: -s * tau}
    return PointTransformation(
        name="to_heat",
        old=pde.variables,
        new=(tau, *bars),
        inverse=(-t / s, *(x - G for x, G in zip(table.coordinates, shifts))),
        forward=(-s * tau, *(xb + substitute(G, back) for xb, G in zip(bars, shifts))),
        multiplier=sp.exp(E),
        target=("t", "x", "y"),
    )


def to_heat_1p1(pde: EvolutionPDE) -> PointTransformation:
    """Map u_xx + (A(t) x + beta(t)) u_x + c(t) u + s u_t = 0 onto v_xx - v_T = 0.

    The map is xb = exp(theta) x - G, T = -int exp(2 theta)/s dt and
    u = exp(-int c/s dt) v with theta = -int A/s dt and G = int beta exp(theta)/s dt.
    A forward map is attached only when A vanishes.

    Raises:
        UnsupportedShapeError: If the drift is not affine in x or the source
            depends on x.
    """
    if pde.dimension != 1 or not pde.is_identity_laplacian():
        raise UnsupportedShapeError(f"{pde.name} is not an identity-Laplacian (1+1) equation")
    s = _constant_time_coefficient(pde)
    table = pde.table
    t = table.time
    (x,) = table.coordinates
    drift = canonical(pde.drift[0])
    A = canonical(sp.diff(drift, x))
    beta = canonical(drift.xreplace({x: 0}))
    if not _space_free(A, pde) or not is_zero(drift - A * x - beta):
        raise UnsupportedShapeError(f"Drift of {pde.name} is not affine in {x}")
    if not _space_free(pde.source, pde):
        raise UnsupportedShapeError(f"Source of {pde.name} depends on {x}")
    tau, xb = new_symbols(1)
    table, theta = integrate_in_time(table, fresh_name(table, "Th"), canonical(-A / s))
    table, G = integrate_in_time(table, fresh_name(table, "G"), canonical(beta * sp.exp(theta) / s))
    table, E = integrate_in_time(table, fresh_name(table, "E"), canonical(-pde.source / s))
    if is_zero(A):
        time_map = -t / s
        forward = (-s * tau, xb + substitute(G, {t: -s * tau}))
    else:
        table, time_map = integrate_in_time(
            table, fresh_name(table, "T"), canonical(-sp.exp(2 * theta) / s)
        )
        forward = None
    return PointTransformation(
        name="to_heat_1p1",
        old=pde.variables,
        new=(tau, xb),
        inverse=(time_map, sp.exp(theta) * x - G),
        forward=forward,
        multiplier=sp.exp(E),
        target=("t", "x"),
    )


def is_maximally_symmetric_1p1(pde: EvolutionPDE) -> bool:
    """Whether a linear (1+1) equation is point-equivalent to the heat equation.

    The equation is first divided by its constant principal coefficient; the
    test builds the map of :func:`to_heat_1p1` and compares the pullback with
    the heat equation.

    Raises:
        UnsupportedShapeError: On a non-constant principal coefficient or a
            drift that is not affine in space.
    """
    if pde.dimension != 1:
        raise UnsupportedShapeError(f"{pde.name} is not a (1+1) equation")
    a = canonical(pde.diffusion[0][0])
    if a.free_symbols & set(pde.variables) or time_atoms(a) or is_zero(a):
        raise UnsupportedShapeError(f"{pde.name} has a non-constant principal coefficient")
    normalized = pde.model_copy(
        update={
            "diffusion": ((sp.S.One,),),
            "drift": (canonical(pde.drift[0] / a),),
            "source": canonical(pde.source / a),
            "time_coefficient": canonical(pde.time_coefficient / a),
        }
    )
    tr = to_heat_1p1(normalized)
    pulled = apply_transformation(normalized, tr, time_coefficient=HEAT_TIME_COEFFICIENT)
    return pulled.is_equivalent(catalog("heat1d"))


def _translation_part(pde: EvolutionPDE, X: VectorField) -> tuple[int, sp.Expr, sp.Expr]:
    """(axis, a, c) for X = a d_axis + c u d_u with constant a and c."""
    if not is_zero(X.xi_t):
        raise ReductionError("Only generators with xi^t = 0 are reduced")
    spatial = [canonical(c) for c in X.xi[1:]]
    axes = [i for i, c in enumerate(spatial) if not is_zero(c)]
    constant = all(
        not (c.free_symbols & set(pde.variables)) and not time_atoms(c) for c in spatial
    )
    if len(axes) != 1 or not constant:
        raise UnsupportedShapeError("Only translations along one coordinate axis are reduced")
    axis = axes[0]
    c = canonical(sp.diff(X.eta, X.u))
    if not is_zero(X.eta - c * X.u) or c.free_symbols & set(pde.variables) or time_atoms(c):
        raise UnsupportedShapeError("eta must be a constant multiple of u")
    return axis, spatial[axis], c


def reduce_once(pde: EvolutionPDE, X: VectorField | Generator) -> EvolutionPDE:
    """The equation for v after the ansatz u = exp(c/a x_i) v(t, other coordinates).

    Raises:
        ReductionError: If X is not a symmetry of ``pde`` or has xi^t != 0.
        UnsupportedShapeError: If X is not a constant axis translation with a
            constant multiple of u in eta.
    """
    field = X.field if isinstance(X, Generator) else X
    report = check_symmetry(pde, field)
    if not report.passed:
        raise ReductionError(f"Generator is not a symmetry of {pde.name}: {report.residual}")
    axis, a, c = _translation_part(pde, field)
    gamma = canonical(c / a)
    t = pde.table.time
    xs = pde.coordinates
    rest = [x for i, x in enumerate(xs) if i != axis]
    V = sp.Function("V_", real=True)(t, *rest)
    ansatz = sp.exp(gamma * xs[axis]) * V
    reduced = canonical(pde.apply(ansatz) / sp.exp(gamma * xs[axis]))

    v, v_t, v_r, v_rr = sp.symbols("v_ v_t v_r v_rr")
    jets = {V: v, sp.Derivative(V, t): v_t}
    if rest:
        jets[sp.Derivative(V, rest[0])] = v_r
        jets[sp.Derivative(V, (rest[0], 2))] = v_rr
    flat = canonical(reduced.xreplace(jets))
    coefficient = {j: canonical(flat.diff(j)) for j in jets.values()}
    if not is_zero(flat - sum(c * j for j, c in coefficient.items())) or any(
        c.has(xs[axis]) for c in coefficient.values()
    ):
        raise ReductionError(f"The ansatz does not separate {xs[axis]}")
    return EvolutionPDE(
        name=f"{pde.name}/{xs[axis]}",
        table=pde.table.with_coordinates([str(r) for r in rest]),
        diffusion=[[coefficient[v_rr]]] if rest else [],
        drift=[coefficient[v_r]] if rest else [],
        source=coefficient[v],
        time_coefficient=coefficient[v_t],
    )


def reduce_by_translations(pde: EvolutionPDE, shifts: Sequence[Any]) -> list[EvolutionPDE]:
    """Successive reductions by d_x + c1 u d_u, then d_y + c2 u d_u, and so on.

    Returns every intermediate equation; the last one has no spatial
    coordinate left once all axes are used.
    """
    steps = [pde]
    for shift in shifts:
        current = steps[-1]
        if current.dimension == 0:
            raise ReductionError(f"{current.name} has no coordinate left to reduce")
        u = sp.Symbol(current.table.dependent, real=True)
        xi = (0, 1, *([0] * (current.dimension - 1)))
        X = VectorField(table=current.table, xi=xi, eta=sp.Rational(shift) * u)
        steps.append(reduce_once(current, X))
        logger.debug(f"Reduced {current.name} to {steps[-1].name}")
    return steps[1:]


class ClosedFormSolution(BaseModel):
    """u = w(t) exp(c1 x + c2 y) with w the exponential of an antiderivative atom."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pde: EvolutionPDE = Field(..., description="The equation solved.")
    table: SymbolTable = Field(..., description="Symbols of w, including its atom.")
    c1: Any = Field(..., description="Rational c1.")
    c2: Any = Field(..., description="Rational c2.")
    w: Any = Field(..., description="w(t).")
    declarations: tuple[str, ...] = Field(default=(), description="Atom declarations of w.")

    @property
    def u(self) -> sp.Expr:
        x, y = self.pde.coordinates
        return self.w * sp.exp(self.c1 * x + self.c2 * y)

    def residual(self) -> sp.Expr:
        return canonical(self.pde.apply(self.u) / self.u)

    def to_report(self) -> ClosedFormReport:
        lam = [canonical(-b) for b in self.pde.drift]
        k = canonical(-self.pde.source / 2)
        return ClosedFormReport(
            c1=str(self.c1),
            c2=str(self.c2),
            w_expression=to_text(self.w, self.table),
            k_spec=to_text(k, self.table),
            lambda1_spec=to_text(lam[0], self.table),
            lambda2_spec=to_text(lam[1], self.table),
            declarations=list(self.declarations),
            residual_zero=is_zero(self.residual()),
        )


def _special_form(pde: EvolutionPDE) -> tuple[list[sp.Expr], sp.Expr]:
    if pde.dimension != 2 or not pde.is_identity_laplacian():
        raise UnsupportedShapeError(f"{pde.name} is not an identity-Laplacian (1+2) equation")
    if not is_zero(pde.time_coefficient - 2):
        raise UnsupportedShapeError(f"{pde.name} must carry +2 u_t")
    if not all(_space_free(e, pde) for e in (*pde.drift, pde.source)):
        raise UnsupportedShapeError(f"Drift and source of {pde.name} must be free of space")
    return [canonical(-b) for b in pde.drift], canonical(-pde.source / 2)


def invariant_solution(pde: EvolutionPDE, c1: Any, c2: Any) -> ClosedFormSolution:
    """u = w(t) exp(c1 x + c2 y), invariant under Z1 + c1 X_u and Z3 + c2 X_u.

    w = exp(int (2k - c1^2 - c2^2 + Lambda1 c1 + Lambda2 c2)/2 dt), with the
    integral a declared atom unless the integrand is constant.
    """
    lam, k = _special_form(pde)
    c1, c2 = sp.Rational(c1), sp.Rational(c2)
    integrand = canonical((2 * k - c1**2 - c2**2 + lam[0] * c1 + lam[1] * c2) / 2)
    table = pde.table
    name = fresh_name(table, "W")
    table, exponent = integrate_in_time(table, name, integrand)
    declarations = ()
    if name in table.antiderivatives:
        declarations = (f"{name} := int({to_text(integrand, table)})",)
    solution = ClosedFormSolution(
        pde=pde, table=table, c1=c1, c2=c2, w=sp.exp(exponent), declarations=declarations
    )
    logger.debug(f"Invariant solution w = {to_text(solution.w, table)}")
    return solution


def closed_form_callable(
    solution: ClosedFormSolution, bindings: Mapping[str, Any] | None = None
) -> Callable[..., np.ndarray]:
    """Vectorized u(t, x, y) with the model functions bound to ``bindings``."""
    u = bind(solution.u, bindings or {}, solution.table)
    return compile_numeric(u, solution.pde.variables)


def closed_form_field(
    solution: ClosedFormSolution,
    bindings: Mapping[str, Any],
    t: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """u on the broadcast of (t, x, y)."""
    return closed_form_callable(solution, bindings)(t, x, y)

"""Catalog of the evolution equations, parameter maps and point transformations."""

import logging
from typing import Any, Callable, Mapping, Sequence

import sympy as sp
from pydantic import BaseModel, ConfigDict, Field, model_validator

from symfin.expr import (
    ExpressionError,
    SymbolTable,
    canonical,
    compile_numeric,
    declare,
    is_zero,
    parse,
    substitute,
    time_atoms,
)

logger = logging.getLogger("symfin")


class ModelError(ValueError):
    """Unknown model, inconsistent parameters or violated parameter bounds."""


class TransformationError(ValueError):
    """A point transformation cannot be applied."""


class JetSpace:
    """Jet coordinates u, u_a and u_ab over the independent variables (t, x^i).

    Index 0 is time, spatial coordinates follow in table order.
    """

    def __init__(self, table: SymbolTable) -> None:
        self.table = table
        self.variables: tuple[sp.Symbol, ...] = (table.time, *table.coordinates)
        names = [str(v) for v in self.variables]
        dep = table.dependent
        self.u = sp.Symbol(dep, real=True)
        self.first = {a: sp.Symbol(f"{dep}_{names[a]}", real=True) for a in range(len(names))}
        self.second = {
            (a, b): sp.Symbol(f"{dep}_{names[a]}{names[b]}", real=True)
            for a in range(len(names))
            for b in range(a, len(names))
        }

    @property
    def dimension(self) -> int:
        return len(self.variables) - 1

    def d1(self, a: int) -> sp.Symbol:
        return self.first[a]

    def d2(self, a: int, b: int) -> sp.Symbol:
        return self.second[(min(a, b), max(a, b))]

    @property
    def symbols(self) -> list[sp.Symbol]:
        return [self.u, *self.first.values(), *self.second.values()]

    def total_derivative(self, expr: sp.Expr, a: int) -> sp.Expr:
        """D_a of an expression in (t, x, u, first-order jets)."""
        if any(expr.has(s) for s in self.second.values()):
            raise ExpressionError("Total derivative of a second-order expression")
        result = sp.diff(expr, self.variables[a]) + self.first[a] * sp.diff(expr, self.u)
        for b, ub in self.first.items():
            if expr.has(ub):
                result += self.d2(a, b) * sp.diff(expr, ub)
        return result


class MarketParams(BaseModel):
    """Financial parameters, each a rational constant or an expression in time."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sigma1: Any = Field(default=None, description="Volatility of the first factor.")
    sigma2: Any = Field(default=None, description="Volatility of the second factor.")
    rho: Any = Field(default=None, description="Correlation, strictly inside (-1, 1).")
    r: Any = Field(default=None, description="Risk-free rate.")
    kappa: Any = Field(default=None, description="Mean-reversion speed.")
    alpha: Any = Field(default=None, description="Long-run mean of the convenience yield.")
    lam: Any = Field(default=None, description="Market price of risk.")
    mu1: Any = Field(default=None, description="Drift of the first asset.")
    mu2: Any = Field(default=None, description="Drift of the second asset.")
    k: Any = Field(default=None, description="Discount rate.")

    @model_validator(mode="before")
    @classmethod
    def sympify_values(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = {
                key: sp.sympify(value, rational=True) if value is not None else None
                for key, value in data.items()
            }
        return data

    @model_validator(mode="after")
    def validate_data(self) -> "MarketParams":
        """Validate the numeric bounds that can be decided."""
        if self.rho is not None and self.rho.is_number:
            assert abs(self.rho) < 1, f"Correlation must satisfy |rho| < 1, got {self.rho}"
        for name in ("sigma1", "sigma2"):
            value = getattr(self, name)
            if value is not None and value.is_number:
                assert value > 0, f"{name} must be strictly positive, got {value}"
        return self

    def require(self, *names: str) -> list[sp.Expr]:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ModelError(f"Missing market parameters {missing}")
        return [getattr(self, n) for n in names]

    @property
    def w(self) -> sp.Expr:
        """sqrt(1 - rho^2)."""
        return sp.sqrt(1 - self.rho**2)


def _market(mp: MarketParams | Mapping[str, Any]) -> MarketParams:
    try:
        return mp if isinstance(mp, MarketParams) else MarketParams(**mp)
    except (AssertionError, ValueError) as err:
        raise ModelError(str(err)) from err


def _check_rho(rho: sp.Expr) -> None:
    if rho.is_number and abs(rho) >= 1:
        raise ModelError(f"Correlation must satisfy |rho| < 1, got {rho}")


def two_factor_params(mp: MarketParams | Mapping[str, Any]) -> tuple[sp.Expr, ...]:
    """Canonical drift coefficients (p1, p2, p3, q1, q2, q3) of the two-factor model.

    These are the coefficients the transformation S = exp(sigma1 x),
    delta = sigma2 (rho x + w y) produces from the commodity equation.
    """
    mp = _market(mp)
    s1, s2, rho, r, kappa, alpha, lam = mp.require(
        "sigma1", "sigma2", "rho", "r", "kappa", "alpha", "lam"
    )
    _check_rho(rho)
    w = mp.w
    p1 = 2 * rho * s2 / s1
    p2 = 2 * w * s2 / s1
    p3 = s1 - 2 * r / s1
    q1 = 2 * rho * (kappa * s1 - rho * s2) / (s1 * w)
    q2 = 2 * (kappa * s1 - rho * s2) / s1
    q3 = -(s1**2 * s2 * rho - 2 * s2 * rho * r + 2 * s1 * kappa * alpha - 2 * s1 * lam) / (
        s1 * s2 * w
    )
    return p1, p2, p3, q1, q2, q3


def _require_unit_sigma1(mp: MarketParams) -> None:
    if mp.sigma1 is None or sp.sympify(mp.sigma1) != 1:
        raise ModelError(f"The nonautonomous maps require sigma1 = 1, got {mp.sigma1}")


def two_factor_nonauto_coeffs(
    mp: MarketParams | Mapping[str, Any], time: sp.Symbol | None = None
) -> tuple[sp.Expr, ...]:
    """Time-dependent coefficients (P1, P2, P3, Q1, Q2, Q3) for sigma1 = 1."""
    mp = _market(mp)
    _require_unit_sigma1(mp)
    t = time if time is not None else SymbolTable().time
    s2, rho, r, kappa, alpha, lam = mp.require("sigma2", "rho", "r", "kappa", "alpha", "lam")
    _check_rho(rho)
    w = mp.w
    P1 = 2 * rho * s2
    P2 = 2 * s2 * w
    P3 = 1 - 2 * r
    Q1 = -(2 * (rho * s2) ** 2 + 2 * sp.diff(rho * s2, t) - 2 * rho * s2 * kappa) / (s2 * w)
    Q2 = -(2 * rho * s2 - 2 * kappa + 2 * sp.diff(s2, t) / s2) + 2 * rho * sp.diff(rho, t) / (
        1 - rho**2
    )
    Q3 = -(s2 * (rho - 2 * r * rho) + 2 * kappa * alpha - 2 * lam) / (s2 * w)
    return P1, P2, P3, Q1, Q2, Q3


def bs2d_params(mp: MarketParams | Mapping[str, Any]) -> tuple[sp.Expr, sp.Expr]:
    """Canonical drifts (phi1, phi2) of the two-dimensional Black-Scholes equation."""
    mp = _market(mp)
    s1, s2, rho, mu1, mu2 = mp.require("sigma1", "sigma2", "rho", "mu1", "mu2")
    if s1 == 0 or s2 == 0:
        raise ModelError("Volatilities must be nonzero")
    _check_rho(rho)
    phi1 = (s1**2 + 2 * mu1) / s1
    phi2 = (s1 * (s2**2 + 2 * mu2) - rho * s2 * (s1**2 + 2 * mu1)) / (s1 * s2 * mp.w)
    return phi1, phi2


def bs2d_nonauto_coeffs(
    mp: MarketParams | Mapping[str, Any], time: sp.Symbol | None = None
) -> tuple[sp.Expr, ...]:
    """Time-dependent coefficients (P1, Q1, Q2, Q3) for sigma1 = 1."""
    mp = _market(mp)
    _require_unit_sigma1(mp)
    t = time if time is not None else SymbolTable().time
    s2, rho, mu1, mu2 = mp.require("sigma2", "rho", "mu1", "mu2")
    _check_rho(rho)
    w = mp.w
    P1 = 1 + 2 * mu1
    Q1 = 2 * sp.diff(rho * s2, t) / (s2 * w)
    Q2 = -2 * (sp.diff(s2, t) * rho**2 + s2 * rho * sp.diff(rho, t) - sp.diff(s2, t)) / (
        s2 * (1 - rho**2)
    )
    Q3 = (s2 * (s2 - rho - 2 * mu1 * rho) + 2 * mu2) / (s2 * w)
    return P1, Q1, Q2, Q3


class EvolutionPDE(BaseModel):
    """Linear evolution equation A^ij u_ij + B^i u_i + source u + s u_t = 0."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field(..., description="Catalog id or a description of the equation.")
    table: SymbolTable = Field(..., description="Symbols of the equation.")
    diffusion: tuple[tuple[Any, ...], ...] = Field(
        ..., description="Symmetric principal part A^ij."
    )
    drift: tuple[Any, ...] = Field(..., description="First-order coefficients B^i.")
    source: Any = Field(default=sp.S.Zero, description="Coefficient of u.")
    time_coefficient: Any = Field(..., description="Coefficient s of u_t.")

    @model_validator(mode="before")
    @classmethod
    def sympify_coefficients(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            if "diffusion" in data:
                data["diffusion"] = tuple(
                    tuple(sp.sympify(a) for a in row) for row in data["diffusion"]
                )
            if "drift" in data:
                data["drift"] = tuple(sp.sympify(b) for b in data["drift"])
            for key in ("source", "time_coefficient"):
                if key in data:
                    data[key] = sp.sympify(data[key])
        return data

    @model_validator(mode="after")
    def validate_data(self) -> "EvolutionPDE":
        """Validate shapes, symmetry and linearity."""
        n = len(self.table.coordinates)
        assert n in (0, 1, 2), f"Unsupported number of spatial dimensions {n}"
        assert len(self.diffusion) == n and all(
            len(row) == n for row in self.diffusion
        ), "Principal part must be a square matrix of the spatial dimension"
        assert len(self.drift) == n, "Drift must have one entry per spatial coordinate"
        for i in range(n):
            for j in range(i + 1, n):
                assert is_zero(
                    self.diffusion[i][j] - self.diffusion[j][i]
                ), "Principal part must be symmetric"
        dependent = sp.Symbol(self.table.dependent, real=True)
        coefficients = [a for row in self.diffusion for a in row]
        coefficients += [*self.drift, self.source, self.time_coefficient]
        for c in coefficients:
            assert not c.has(dependent), f"Coefficient {c} depends on the dependent variable"
        assert not is_zero(self.time_coefficient), "The u_t coefficient must be nonzero"
        return self

    @property
    def coordinates(self) -> tuple[sp.Symbol, ...]:
        return self.table.coordinates

    @property
    def dimension(self) -> int:
        return len(self.table.coordinates)

    @property
    def variables(self) -> tuple[sp.Symbol, ...]:
        return (self.table.time, *self.table.coordinates)

    def theta(self, jets: JetSpace | None = None) -> sp.Expr:
        """Θ as a linear expression in the jet coordinates."""
        jets = jets or JetSpace(self.table)
        n = self.dimension
        expr = self.source * jets.u + self.time_coefficient * jets.d1(0)
        for i in range(n):
            expr += self.drift[i] * jets.d1(i + 1)
            for j in range(n):
                expr += self.diffusion[i][j] * jets.d2(i + 1, j + 1)
        return expr

    def apply(self, u: sp.Expr) -> sp.Expr:
        """Θ[u] for an explicit function u of the independent variables."""
        t, *xs = self.variables
        expr = self.source * u + self.time_coefficient * sp.diff(u, t)
        for i, xi in enumerate(xs):
            expr += self.drift[i] * sp.diff(u, xi)
            for j, xj in enumerate(xs):
                expr += self.diffusion[i][j] * sp.diff(u, xi, xj)
        return expr

    def coefficients(self) -> list[sp.Expr]:
        return [
            *(a for row in self.diffusion for a in row),
            *self.drift,
            self.source,
            self.time_coefficient,
        ]

    def is_equivalent(self, other: "EvolutionPDE") -> bool:
        """Equal up to a nonzero constant factor, coefficient by coefficient."""
        if [str(v) for v in self.variables] != [str(v) for v in other.variables]:
            return False
        rename = dict(zip(other.variables, self.variables))
        ratio = canonical(self.time_coefficient / other.time_coefficient)
        if ratio.free_symbols or time_atoms(ratio):
            return False
        return all(
            is_zero(a - ratio * b.xreplace(rename))
            for a, b in zip(self.coefficients(), other.coefficients())
        )

    def evaluate_coefficients(self) -> dict[str, Callable[..., Any]]:
        """Vectorized drift, source and u_t coefficients as functions of (t, x, y).

        Raises:
            EvaluationError: If a coefficient still holds a free parameter.
        """
        args = self.variables
        out = {f"drift{i}": compile_numeric(b, args) for i, b in enumerate(self.drift)}
        out["source"] = compile_numeric(self.source, args)
        out["time_coefficient"] = compile_numeric(self.time_coefficient, args)
        return out

    def is_identity_laplacian(self) -> bool:
        n = self.dimension
        return all(
            is_zero(self.diffusion[i][j] - (1 if i == j else 0))
            for i in range(n)
            for j in range(n)
        )


# ----------------------------------------------------------------------------
# Catalog
# ----------------------------------------------------------------------------

def _identity(n: int) -> list[list[int]]:
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def _build_bs01(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    (S,) = c
    return dict(
        diffusion=[[p["sigma1"] ** 2 * S**2 / 2]],
        drift=[p["r"] * S],
        source=-p["r"],
        time_coefficient=1,
    )


def _build_onefactor(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    (S,) = c
    return dict(
        diffusion=[[p["sigma1"] ** 2 * S**2 / 2]],
        drift=[p["kappa"] * (p["mu1"] - p["lam"] - sp.log(S)) * S],
        source=0,
        time_coefficient=-1,
    )


def _build_twofactor_original(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    S, delta = c
    cross = p["rho"] * p["sigma1"] * p["sigma2"] * S / 2
    return dict(
        diffusion=[[p["sigma1"] ** 2 * S**2 / 2, cross], [cross, p["sigma2"] ** 2 / 2]],
        drift=[(p["r"] - delta) * S, p["kappa"] * (p["alpha"] - delta) - p["lam"]],
        source=0,
        time_coefficient=-1,
    )


def _twofactor_canonical(P: Sequence[sp.Expr], Q: Sequence[sp.Expr], c: Sequence[sp.Symbol]):
    x, y = c
    return dict(
        diffusion=_identity(2),
        drift=[-(P[0] * x + P[1] * y + P[2]), -(Q[0] * x + Q[1] * y + Q[2])],
        source=0,
        time_coefficient=-2,
    )


def _build_twofactor_canonical(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    return _twofactor_canonical(
        [p["p1"], p["p2"], p["p3"]], [p["q1"], p["q2"], p["q3"]], c
    )


def _build_twofactor_q0(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    return _twofactor_canonical([p["p1"], p["p2"], p["p3"]], [0, 0, 0], c)


def _build_twofactor_nonauto(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    return _twofactor_canonical(
        [p["P1"], p["P2"], p["P3"]], [p["Q1"], p["Q2"], p["Q3"]], c
    )


def _build_bs2d_original(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    S1, S2 = c
    cross = p["rho"] * p["sigma1"] * p["sigma2"] * S1 * S2 / 2
    return dict(
        diffusion=[
            [p["sigma1"] ** 2 * S1**2 / 2, cross],
            [cross, p["sigma2"] ** 2 * S2**2 / 2],
        ],
        drift=[-p["mu1"] * S1, -p["mu2"] * S2],
        source=-p["k"],
        time_coefficient=1,
    )


def _bs2d_canonical(drift: Sequence[sp.Expr], k: sp.Expr) -> dict[str, Any]:
    return dict(
        diffusion=_identity(2),
        drift=[-d for d in drift],
        source=-2 * k,
        time_coefficient=2,
    )


def _build_bs2d_canonical(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    return _bs2d_canonical([p["phi1"], p["phi2"]], p["k"])


def _build_bs2d_nonauto(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    x, y = c
    return _bs2d_canonical([p["P1"], p["Q1"] * x + p["Q2"] * y + p["Q3"]], p["k"])


def _build_bs2d_special(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
    return _bs2d_canonical([p["Lambda1"], p["Lambda2"]], p["k"])


def _build_heat(n: int) -> Callable[[dict[str, sp.Expr], Sequence[sp.Symbol]], dict[str, Any]]:
    def build(p: dict[str, sp.Expr], c: Sequence[sp.Symbol]) -> dict[str, Any]:
        return dict(diffusion=_identity(n), drift=[0] * n, source=0, time_coefficient=-1)

    return build


# id -> (coordinates, constant parameters, time-function parameters, positive, builder)
CATALOG: dict[str, tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...], tuple[str, ...], Callable]] = {
    "bs01": (("S",), ("sigma1", "r"), (), ("sigma1",), _build_bs01),
    "onefactor": (("S",), ("sigma1", "kappa", "mu1", "lam"), (), ("sigma1",), _build_onefactor),
    "twofactor_original": (
        ("S", "delta"),
        ("sigma1", "sigma2", "rho", "r", "kappa", "alpha", "lam"),
        (),
        ("sigma1", "sigma2"),
        _build_twofactor_original,
    ),
    "twofactor_canonical": (
        ("x", "y"),
        ("p1", "p2", "p3", "q1", "q2", "q3"),
        (),
        (),
        _build_twofactor_canonical,
    ),
    "twofactor_autonomous": (
        ("x", "y"),
        ("p1", "p2", "p3", "q1", "q2", "q3"),
        (),
        (),
        _build_twofactor_canonical,
    ),
    "twofactor_q0": (("x", "y"), ("p1", "p2", "p3"), (), (), _build_twofactor_q0),
    "twofactor_nonauto": (
        ("x", "y"),
        (),
        ("P1", "P2", "P3", "Q1", "Q2", "Q3"),
        (),
        _build_twofactor_nonauto,
    ),
    "bs2d_original": (
        ("S1", "S2"),
        ("sigma1", "sigma2", "rho", "mu1", "mu2", "k"),
        (),
        ("sigma1", "sigma2"),
        _build_bs2d_original,
    ),
    "bs2d_canonical": (("x", "y"), ("phi1", "phi2", "k"), (), (), _build_bs2d_canonical),
    "bs2d_nonauto": (("x", "y"), (), ("P1", "Q1", "Q2", "Q3", "k"), (), _build_bs2d_nonauto),
    "bs2d_special_nonauto": (
        ("x", "y"),
        (),
        ("Lambda1", "Lambda2", "k"),
        (),
        _build_bs2d_special,
    ),
    "heat2d": (("x", "y"), (), (), (), _build_heat(2)),
    "heat1d": (("x",), (), (), (), _build_heat(1)),
}


def default_table(model_id: str) -> SymbolTable:
    """Symbol table declaring every parameter of a catalog model."""
    if model_id not in CATALOG:
        raise ModelError(f"Unknown model '{model_id}'")
    coordinates, constants, functions, positive, _ = CATALOG[model_id]
    return SymbolTable.build(
        constants=constants, functions=functions, positive=positive, coordinates=coordinates
    )


def catalog(
    model_id: str,
    params: Mapping[str, Any] | None = None,
    table: SymbolTable | None = None,
) -> EvolutionPDE:
    """The catalog equation ``model_id`` with the given parameter bindings.

    Unbound parameters stay symbolic (constants or opaque functions of time
    as declared by the model). String values are parsed in ``table``.

    Raises:
        ModelError: If the model id is unknown or a binding names a parameter
            the model does not have.
    """
    if model_id not in CATALOG:
        raise ModelError(f"Unknown model '{model_id}'")
    coordinates, constants, functions, _, builder = CATALOG[model_id]
    base = default_table(model_id)
    table = table.with_coordinates(coordinates) if table is not None else base
    params = dict(params or {})
    unknown = set(params) - set(constants) - set(functions)
    if unknown:
        raise ModelError(f"Model '{model_id}' has no parameters {sorted(unknown)}")
    values: dict[str, sp.Expr] = {}
    for name in (*constants, *functions):
        if name in params:
            value = params[name]
            try:
                values[name] = (
                    parse(value, table) if isinstance(value, str) else sp.sympify(value, rational=True)
                )
            except ExpressionError as err:
                raise ModelError(f"Invalid binding for {name}: {err}") from err
        else:
            try:
                values[name] = table.lookup(name)
            except KeyError:
                values[name] = base.lookup(name)
    fields = builder(values, table.coordinates)
    try:
        return EvolutionPDE(name=model_id, table=table, **fields)
    except (AssertionError, ValueError) as err:
        raise ModelError(f"Inconsistent parameters for '{model_id}': {err}") from err


# Numeric bindings for the commands that need exact numbers (classification,
# eigen-modes). phi2 = 1 + 2r and k = r with r = 1/20.
EXAMPLE_PARAMS: dict[str, dict[str, str]] = {
    "twofactor_autonomous": {"p1": "0", "p2": "2", "p3": "1", "q1": "0", "q2": "2", "q3": "0"},
    "twofactor_q0": {"p1": "1", "p2": "2", "p3": "1"},
    "bs2d_canonical": {"phi1": "1", "phi2": "11/10", "k": "1/20"},
}


def model_from_strings(
    model_id: str, bindings: Mapping[str, str] | None = None, declarations: Sequence[str] = ()
) -> EvolutionPDE:
    """Catalog equation from expression strings, as read from a configuration file.

    ``declarations`` are antiderivative declarations (``I1 := int(...)``) made
    available to the bindings.

    Raises:
        ModelError: On an unknown model, an unknown parameter or an expression
            that does not parse.
    """
    table = default_table(model_id)
    for text in declarations:
        try:
            table, _ = declare(text, table)
        except ExpressionError as err:
            raise ModelError(f"Invalid declaration '{text}': {err}") from err
    return catalog(model_id, {k: str(v) for k, v in (bindings or {}).items()}, table)


# ----------------------------------------------------------------------------
# Point transformations
# ----------------------------------------------------------------------------

NEW_NAMES = ("tau", "xb", "yb")
STANDARD_NAMES = ("t", "x", "y")


def new_symbols(n: int) -> tuple[sp.Symbol, ...]:
    return tuple(sp.Symbol(name, real=True) for name in NEW_NAMES[: n + 1])


class PointTransformation(BaseModel):
    """Change of variables (t, x) -> (T, xb) with u = multiplier * v.

    ``inverse`` gives the new coordinates in terms of the old ones,
    ``forward`` the old coordinates in terms of the new ones.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field(default="transformation", description="Label of the map.")
    old: tuple[sp.Symbol, ...] = Field(..., description="Old independent variables (t first).")
    new: tuple[sp.Symbol, ...] = Field(..., description="New independent variables (T first).")
    inverse: tuple[Any, ...] = Field(..., description="New coordinates as expressions in the old.")
    forward: tuple[Any, ...] | None = Field(
        default=None, description="Old coordinates as expressions in the new."
    )
    multiplier: Any = Field(default=sp.S.One, description="u = multiplier(old) * v.")
    target: tuple[str, ...] = Field(
        default=STANDARD_NAMES, description="Names given to the new coordinates afterwards."
    )

    @model_validator(mode="before")
    @classmethod
    def sympify_maps(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            for key in ("inverse", "forward"):
                if data.get(key) is not None:
                    data[key] = tuple(sp.sympify(e) for e in data[key])
            if "multiplier" in data:
                data["multiplier"] = sp.sympify(data["multiplier"])
        return data

    @model_validator(mode="after")
    def validate_data(self) -> "PointTransformation":
        """Validate map lengths."""
        n = len(self.old)
        assert len(self.new) == n, "Old and new coordinates differ in number"
        assert len(self.inverse) == n, "Inverse map needs one expression per coordinate"
        if self.forward is not None:
            assert len(self.forward) == n, "Forward map needs one expression per coordinate"
        assert len(self.target) >= n, "Not enough target names"
        assert not is_zero(self.multiplier), "Multiplier must be nonzero"
        return self

    @property
    def target_symbols(self) -> tuple[sp.Symbol, ...]:
        return tuple(sp.Symbol(name, real=True) for name in self.target[: len(self.old)])


def identity_transformation(table: SymbolTable) -> PointTransformation:
    old = (table.time, *table.coordinates)
    new = new_symbols(len(old) - 1)
    return PointTransformation(
        name="identity",
        old=old,
        new=new,
        inverse=old,
        forward=new,
        target=tuple(str(s) for s in old),
    )


def _in_new_time(expr: sp.Expr, time: sp.Symbol, tau: sp.Symbol) -> sp.Expr:
    return substitute(expr, {time: tau})


def two_factor_transformation(
    mp: MarketParams | Mapping[str, Any], table: SymbolTable
) -> PointTransformation:
    """S = exp(sigma1 x), delta = sigma2 (rho x + w y)."""
    mp = _market(mp)
    s1, s2, rho = mp.require("sigma1", "sigma2", "rho")
    _check_rho(rho)
    t = table.time
    S, delta = table.coordinates
    tau, xb, yb = new_symbols(2)
    w = mp.w
    x_of = sp.log(S) / s1
    inverse = (t, x_of, (delta / s2 - rho * x_of) / w)
    forward = (
        tau,
        sp.exp(_in_new_time(s1, t, tau) * xb),
        _in_new_time(s2 * (rho * xb + w * yb), t, tau),
    )
    return PointTransformation(
        name="two_factor", old=(t, S, delta), new=(tau, xb, yb), inverse=inverse, forward=forward
    )


def bs2d_transformation(
    mp: MarketParams | Mapping[str, Any], table: SymbolTable
) -> PointTransformation:
    """S1 = exp(sigma1 x), S2 = exp(sigma2 (rho x + w y))."""
    mp = _market(mp)
    s1, s2, rho = mp.require("sigma1", "sigma2", "rho")
    _check_rho(rho)
    t = table.time
    S1, S2 = table.coordinates
    tau, xb, yb = new_symbols(2)
    w = mp.w
    x_of = sp.log(S1) / s1
    inverse = (t, x_of, (sp.log(S2) / s2 - rho * x_of) / w)
    forward = (
        tau,
        sp.exp(_in_new_time(s1, t, tau) * xb),
        sp.exp(_in_new_time(s2 * (rho * xb + w * yb), t, tau)),
    )
    return PointTransformation(
        name="bs2d", old=(t, S1, S2), new=(tau, xb, yb), inverse=inverse, forward=forward
    )


def check_inverse(tr: PointTransformation) -> bool:
    """Forward and inverse maps compose to the identity."""
    if tr.forward is None:
        raise TransformationError(f"Transformation {tr.name} has no forward map")
    back = dict(zip(tr.old, tr.forward))
    return all(is_zero(substitute(n, back) - s) for n, s in zip(tr.inverse, tr.new))


def compose(outer: PointTransformation, inner: PointTransformation) -> PointTransformation:
    """The transformation applying ``inner`` first, then ``outer``."""
    if [str(s) for s in outer.old] != list(inner.target[: len(inner.old)]):
        raise TransformationError(
            f"Cannot compose {outer.name} after {inner.name}: coordinate names differ"
        )
    to_inner = dict(zip(outer.old, inner.inverse))
    inverse = tuple(substitute(e, to_inner) for e in outer.inverse)
    multiplier = inner.multiplier * substitute(outer.multiplier, to_inner)
    forward = None
    if inner.forward is not None and outer.forward is not None:
        to_outer = dict(zip(inner.new, outer.forward))
        forward = tuple(substitute(e, to_outer) for e in inner.forward)
    return PointTransformation(
        name=f"{outer.name}*{inner.name}",
        old=inner.old,
        new=outer.new,
        inverse=inverse,
        forward=forward,
        multiplier=multiplier,
        target=outer.target,
    )


def invert(tr: PointTransformation) -> PointTransformation:
    """The inverse transformation, mapping back to the old coordinate names."""
    if tr.forward is None:
        raise TransformationError(f"Transformation {tr.name} has no forward map")
    renamed = dict(zip(tr.new, tr.target_symbols))
    n = len(tr.old)
    new = new_symbols(n - 1)
    to_new = dict(zip(tr.old, new))
    multiplier = 1 / substitute(tr.multiplier, dict(zip(tr.old, tr.forward)))
    return PointTransformation(
        name=f"inverse({tr.name})",
        old=tr.target_symbols,
        new=new,
        inverse=tuple(e.xreplace(renamed) for e in tr.forward),
        forward=tuple(substitute(e, to_new) for e in tr.inverse),
        multiplier=multiplier.xreplace(renamed),
        target=tuple(str(s) for s in tr.old),
    )


def apply_transformation(
    pde: EvolutionPDE,
    tr: PointTransformation,
    time_coefficient: sp.Expr | int | None = None,
) -> EvolutionPDE:
    """Pull Θ back through ``tr`` and return the equation for v.

    The chain rule is carried out in the old coordinates; the result is divided
    by the multiplier, renormalized so that the v_t coefficient equals
    ``time_coefficient`` (or stays as computed when it is constant), rewritten
    in the new coordinates and renamed to ``tr.target``.

    Raises:
        TransformationError: If the Jacobian vanishes, second time derivatives
            appear, or the v_t coefficient cannot be made constant.
    """
    old = pde.variables
    if [str(s) for s in old] != [str(s) for s in tr.old]:
        raise TransformationError(
            f"Transformation variables {tr.old} do not match equation variables {old}"
        )
    n = len(old)
    # Align symbol identity with the equation's table
    align = dict(zip(tr.old, old))
    inverse = [e.xreplace(align) for e in tr.inverse]
    multiplier = tr.multiplier.xreplace(align)
    grad = [[sp.diff(inverse[A], old[a]) for a in range(n)] for A in range(n)]
    if is_zero(sp.Matrix(grad).det()):
        raise TransformationError(f"Transformation {tr.name} has a vanishing Jacobian")

    v = sp.Symbol("v_", real=True)
    vA = [sp.Symbol(f"v_{A}", real=True) for A in range(n)]
    vAB = {(A, B): sp.Symbol(f"v_{A}{B}", real=True) for A in range(n) for B in range(A, n)}

    def v2(A: int, B: int) -> sp.Symbol:
        return vAB[(min(A, B), max(A, B))]

    def du(a: int) -> sp.Expr:
        return sp.diff(multiplier, old[a]) * v + multiplier * sum(
            vA[A] * grad[A][a] for A in range(n)
        )

    def ddu(a: int, b: int) -> sp.Expr:
        expr = sp.diff(multiplier, old[a], old[b]) * v
        for A in range(n):
            expr += sp.diff(multiplier, old[a]) * vA[A] * grad[A][b]
            expr += sp.diff(multiplier, old[b]) * vA[A] * grad[A][a]
            expr += multiplier * vA[A] * sp.diff(inverse[A], old[a], old[b])
            for B in range(n):
                expr += multiplier * v2(A, B) * grad[A][a] * grad[B][b]
        return expr

    theta = pde.source * multiplier * v + pde.time_coefficient * du(0)
    for i in range(n - 1):
        theta += pde.drift[i] * du(i + 1)
        for j in range(n - 1):
            theta += pde.diffusion[i][j] * ddu(i + 1, j + 1)
    theta = sp.expand(theta / multiplier, power_exp=False)

    for A in range(n):
        if not is_zero(theta.diff(v2(0, A))):
            raise TransformationError(
                f"Transformation {tr.name} produces second derivatives in the new time"
            )
    s_new = canonical(theta.diff(vA[0]))
    if time_coefficient is not None:
        factor = canonical(s_new / sp.sympify(time_coefficient))
    else:
        factor = sp.S.One
    s_new = canonical(s_new / factor)
    if s_new.free_symbols & set(old) or time_atoms(s_new) or is_zero(s_new):
        raise TransformationError(
            f"Pullback leaves a non-constant u_t coefficient {s_new}; pass time_coefficient"
        )

    def coefficient(symbol: sp.Symbol, scale: int = 1) -> sp.Expr:
        return canonical(theta.diff(symbol) / (factor * scale))

    diffusion = [
        [coefficient(v2(A, B), 1 if A == B else 2) for B in range(1, n)] for A in range(1, n)
    ]
    drift = [coefficient(vA[A]) for A in range(1, n)]
    source = coefficient(v)

    in_old = [*(a for row in diffusion for a in row), *drift, source]
    if any(e.free_symbols & set(old) for e in in_old):
        if tr.forward is None:
            raise TransformationError(
                f"Coefficients depend on old coordinates and {tr.name} has no forward map"
            )
        back = dict(zip(old, tr.forward))

        def rewrite(e: sp.Expr) -> sp.Expr:
            return canonical(substitute(e, back)) if e.free_symbols & set(old) else e

        diffusion = [[rewrite(a) for a in row] for row in diffusion]
        drift = [rewrite(b) for b in drift]
        source = rewrite(source)

    targets = tr.target_symbols
    table = pde.table.with_coordinates([str(s) for s in targets[1:]])
    rename = dict(zip(tr.new, (table.time, *table.coordinates)))
    if tr.forward is None:
        # Coefficients are free of the old coordinates; only names change.
        rename.update(dict(zip(old, (table.time, *table.coordinates))))

    def renamed(e: sp.Expr) -> sp.Expr:
        return e.xreplace(rename)

    return EvolutionPDE(
        name=f"{pde.name}|{tr.name}",
        table=table,
        diffusion=[[renamed(a) for a in row] for row in diffusion],
        drift=[renamed(b) for b in drift],
        source=renamed(source),
        time_coefficient=renamed(s_new),
    )

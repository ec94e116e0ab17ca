"""Numeric side of the package.

* ``solve_fd``: Peaceman-Rachford ADI for identity-Laplacian (1+2) equations,
  terminal-value problems by time reversal.
* ``discrete_residual`` and ``flow_check``: centered-difference evaluation of
  Theta on a field, before and after a finite symmetry transformation.
* ``integrate_determining_system``: the printed determining systems as ODEs.
* ``ermakov_suite``: Ermakov-Pinney checks along one trajectory.
* ``fig3_scenario`` and ``transform_equivalence``: closed form, transformed and
  direct solutions against each other.
"""

import logging
import pathlib
from typing import Any, Callable, Literal, Mapping, Sequence

import numpy as np
import pandas as pd
import sympy as sp
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import expm, solve_banded

from symfin.expr import SymbolTable, bind, canonical, compile_numeric, is_zero, parse, time_atoms
from symfin.models import EvolutionPDE, bs2d_params, catalog
from symfin.reduce import closed_form_callable, invariant_solution, to_heat
from symfin.results import DeterminingReport, ErmakovReport, Fig3Report
from symfin.symmetry import (
    COEFFICIENT_NAMES,
    GENERIC_NAMES,
    NONAUTO_MODELS,
    GenericCoefficients,
    VectorField,
    determining_residuals_bs2d,
    determining_residuals_twofactor,
    linear_drift,
)

logger = logging.getLogger("symfin")

CSV_FLOAT_FORMAT = "%.17g"
RELATIVE_FLOOR = 1e-12

DataFunction = Callable[[Any, np.ndarray, np.ndarray], np.ndarray]


class NumericError(RuntimeError):
    pass


class ErmakovConstraintError(ValueError):
    pass


class UnsupportedFlowError(ValueError):
    pass


# ----------------------------------------------------------------------------
# Grids and fields
# ----------------------------------------------------------------------------

class Grid(BaseModel):
    """Uniform grid on [x_min, x_max] x [y_min, y_max] x [t_start, t_end]."""

    model_config = ConfigDict(frozen=True)

    x_min: float = PydanticField(default=-3.0, description="Left end of the x range.")
    x_max: float = PydanticField(default=3.0, description="Right end of the x range.")
    y_min: float = PydanticField(default=-3.0, description="Left end of the y range.")
    y_max: float = PydanticField(default=3.0, description="Right end of the y range.")
    nx: int = PydanticField(default=41, ge=5, description="Nodes in x, odd.")
    ny: int = PydanticField(default=41, ge=5, description="Nodes in y, odd.")
    t_start: float = PydanticField(default=0.0, description="First time.")
    t_end: float = PydanticField(default=1.0, description="Last time.")
    nt: int = PydanticField(default=100, ge=2, description="Number of time steps.")
    direction: Literal["forward", "backward"] = PydanticField(
        default="forward",
        description="forward: data at t_start; backward: terminal data at t_end.",
    )

    @model_validator(mode="after")
    def validate_data(self) -> "Grid":
        """Validate node parity and ranges."""
        assert self.nx % 2 == 1 and self.ny % 2 == 1, (
            f"Node counts must be odd, got nx={self.nx}, ny={self.ny}"
        )
        assert self.x_min < self.x_max, f"Empty x range [{self.x_min}, {self.x_max}]"
        assert self.y_min < self.y_max, f"Empty y range [{self.y_min}, {self.y_max}]"
        assert self.t_start < self.t_end, f"Empty time range [{self.t_start}, {self.t_end}]"
        return self

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.nt + 1)

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.nt

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.times, self.x, self.y, indexing="ij")

    def plane(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")


class Field(BaseModel):
    """Values on every node of a grid, indexed [time, x, y]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid = PydanticField(..., description="The grid.")
    values: np.ndarray = PydanticField(..., description="Array of shape (nt + 1, nx, ny).")
    provenance: Literal["fd", "closed-form", "transformed", "sampled"] = PydanticField(
        default="fd", description="How the values were produced."
    )

    @model_validator(mode="after")
    def validate_data(self) -> "Field":
        """Validate the shape; non-finite values are a numeric failure."""
        g = self.grid
        expected = (g.nt + 1, g.nx, g.ny)
        assert self.values.shape == expected, f"Expected shape {expected}, got {self.values.shape}"
        if not np.all(np.isfinite(self.values)):
            step = int(np.argmax(~np.isfinite(self.values).reshape(g.nt + 1, -1).all(axis=1)))
            raise NumericError(f"Field holds non-finite values, first at time index {step}")
        return self

    @classmethod
    def sample(
        cls,
        grid: Grid,
        func: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
        provenance: Literal["closed-form", "transformed", "sampled"] = "closed-form",
    ) -> "Field":
        """Field of an explicit function of (t, x, y)."""
        T, X, Y = grid.mesh()
        values = np.asarray(func(T, X, Y), dtype=float) + np.zeros(T.shape)
        return cls(grid=grid, values=values, provenance=provenance)

    def y_index(self, y0: float = 0.0) -> int:
        return int(np.argmin(np.abs(self.grid.y - y0)))

    def x_index(self, x0: float = 0.0) -> int:
        return int(np.argmin(np.abs(self.grid.x - x0)))

    def slice_y(self, y0: float = 0.0) -> np.ndarray:
        """The (t, x) plane at the node nearest to y0."""
        return self.values[:, :, self.y_index(y0)]

    def at(self, x0: float = 0.0, y0: float = 0.0) -> np.ndarray:
        """Time series at the node nearest to (x0, y0)."""
        return self.values[:, self.x_index(x0), self.y_index(y0)]

    def to_frame(self, y0: float | None = None) -> pd.DataFrame:
        """Long format t, x, y, u; t-major, then x, then y."""
        g = self.grid
        if y0 is None:
            T, X, Y = g.mesh()
            values = self.values
        else:
            j = self.y_index(y0)
            T, X, Y = np.meshgrid(g.times, g.x, g.y[j : j + 1], indexing="ij")
            values = self.values[:, :, j : j + 1]
        return pd.DataFrame(
            {"t": T.ravel(), "x": X.ravel(), "y": Y.ravel(), "u": values.ravel()}
        )

    def to_csv(self, path: pathlib.Path | str, y0: float | None = None) -> pathlib.Path:
        path = pathlib.Path(path)
        self.to_frame(y0).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        return path


def max_relative_error(
    values: np.ndarray | Field, reference: np.ndarray | Field, floor: float = RELATIVE_FLOOR
) -> float:
    """max |values - reference| / max(max |reference|, floor)."""
    a = values.values if isinstance(values, Field) else np.asarray(values)
    b = reference.values if isinstance(reference, Field) else np.asarray(reference)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), floor))


def bound_pde(pde: EvolutionPDE, bindings: Mapping[str, Any] | None) -> EvolutionPDE:
    """``pde`` with named parameters replaced by the given values."""
    if not bindings:
        return pde

    def b(e: sp.Expr) -> sp.Expr:
        return canonical(bind(e, bindings, pde.table))

    return EvolutionPDE(
        name=pde.name,
        table=pde.table,
        diffusion=[[b(a) for a in row] for row in pde.diffusion],
        drift=[b(d) for d in pde.drift],
        source=b(pde.source),
        time_coefficient=b(pde.time_coefficient),
    )


# ----------------------------------------------------------------------------
# ADI solver
# ----------------------------------------------------------------------------

def _numeric_time_coefficient(pde: EvolutionPDE) -> float:
    s = canonical(pde.time_coefficient)
    if s.free_symbols or time_atoms(s):
        raise NumericError(f"The u_t coefficient {s} of {pde.name} is not a number")
    return float(s)


def _apply_x(v: np.ndarray, h: float, drift: np.ndarray, source: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    out[1:-1] = (
        (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        + drift[1:-1] * (v[2:] - v[:-2]) / (2 * h)
        + 0.5 * source[1:-1] * v[1:-1]
    )
    return out


def _apply_y(v: np.ndarray, h: float, drift: np.ndarray, source: np.ndarray) -> np.ndarray:
    return _apply_x(v.T, h, drift.T, source.T).T


def _solve_line(
    rhs: np.ndarray,
    drift: np.ndarray,
    source: np.ndarray,
    h: float,
    half: float,
    left: float,
    right: float,
) -> np.ndarray:
    """(I - half L) v = rhs on one line with Dirichlet values at both ends."""
    lower = 1 / h**2 - drift / (2 * h)
    upper = 1 / h**2 + drift / (2 * h)
    diag = -2 / h**2 + 0.5 * source
    ab = np.zeros((3, rhs.size))
    ab[0, 1:] = -half * upper[:-1]
    ab[1] = 1 - half * diag
    ab[2, :-1] = -half * lower[1:]
    rhs = rhs.copy()
    rhs[0] += half * lower[0] * left
    rhs[-1] += half * upper[-1] * right
    return solve_banded((1, 1), ab, rhs)


def _extrapolate_boundary(v: np.ndarray) -> np.ndarray:
    """Boundary values with zero second normal derivative."""
    v = v.copy()
    v[0] = 2 * v[1] - v[2]
    v[-1] = 2 * v[-2] - v[-3]
    v[:, 0] = 2 * v[:, 1] - v[:, 2]
    v[:, -1] = 2 * v[:, -2] - v[:, -3]
    return v


def _pr_step(
    u: np.ndarray,
    half: float,
    hx: float,
    hy: float,
    bx: np.ndarray,
    by: np.ndarray,
    c: np.ndarray,
    g_a: np.ndarray,
    g_b: np.ndarray,
) -> np.ndarray:
    nx, ny = u.shape
    # Intermediate boundary values of the x sweep
    g_star = 0.5 * (g_a + half * _apply_y(g_a, hy, by, c)) + 0.5 * (
        g_b - half * _apply_y(g_b, hy, by, c)
    )
    star = g_star.copy()
    rhs = u + half * _apply_y(u, hy, by, c)
    for j in range(1, ny - 1):
        star[1:-1, j] = _solve_line(
            rhs[1:-1, j], bx[1:-1, j], c[1:-1, j], hx, half, star[0, j], star[-1, j]
        )
    new = g_b.copy()
    rhs = star + half * _apply_x(star, hx, bx, c)
    for i in range(1, nx - 1):
        new[i, 1:-1] = _solve_line(
            rhs[i, 1:-1], by[i, 1:-1], c[i, 1:-1], hy, half, new[i, 0], new[i, -1]
        )
    return new


def solve_fd(
    pde: EvolutionPDE,
    grid: Grid,
    initial: DataFunction,
    boundary: DataFunction | None = None,
) -> Field:
    """Peaceman-Rachford ADI solution of Delta u + B.grad u + c u + s u_t = 0.

    ``initial`` is evaluated at t_start for a forward grid and at t_end for a
    backward one. Dirichlet values come from ``boundary``; without it the
    boundary nodes are extrapolated linearly from the interior.

    Raises:
        NumericError: On a principal part other than the identity, a marching
            direction that makes the problem ill-posed, or non-finite values.
    """
    if pde.dimension != 2 or not pde.is_identity_laplacian():
        raise NumericError(f"{pde.name} does not have an identity principal part in 2D")
    s = _numeric_time_coefficient(pde)
    kappa = -1 / s if grid.direction == "forward" else 1 / s
    if kappa <= 0:
        raise NumericError(
            f"{pde.name} with u_t coefficient {s} is ill-posed in the {grid.direction} direction"
        )
    coefficients = pde.evaluate_coefficients()
    X, Y = grid.plane()
    times = grid.times
    order = list(range(grid.nt + 1))
    if grid.direction == "backward":
        order.reverse()
    values = np.empty((grid.nt + 1, grid.nx, grid.ny))
    u = np.asarray(initial(times[order[0]], X, Y), dtype=float) + np.zeros(X.shape)
    values[order[0]] = u
    half = kappa * grid.dt / 2
    logger.info(
        f"ADI solve of {pde.name}: {grid.nx}x{grid.ny} nodes, {grid.nt} steps, {grid.direction}"
    )
    for n in range(grid.nt):
        t_a, t_b = times[order[n]], times[order[n + 1]]
        t_m = 0.5 * (t_a + t_b)
        bx = coefficients["drift0"](t_m, X, Y)
        by = coefficients["drift1"](t_m, X, Y)
        c = coefficients["source"](t_m, X, Y)
        if boundary is None:
            g_a = g_b = u
        else:
            g_a = np.asarray(boundary(t_a, X, Y), dtype=float) + np.zeros(X.shape)
            g_b = np.asarray(boundary(t_b, X, Y), dtype=float) + np.zeros(X.shape)
        u = _pr_step(u, half, grid.hx, grid.hy, bx, by, c, g_a, g_b)
        if boundary is None:
            u = _extrapolate_boundary(u)
        if not np.all(np.isfinite(u)):
            raise NumericError(f"Non-finite values at step {n + 1} (t = {t_b:.6g})")
        values[order[n + 1]] = u
    return Field(grid=grid, values=values, provenance="fd")


def discrete_residual(
    field: Field, pde: EvolutionPDE, mask: np.ndarray | None = None
) -> float:
    """Max-norm of the centered-difference Theta over interior nodes and times.

    ``mask`` selects interior nodes (shape (nt - 1, nx - 2, ny - 2)).
    """
    g = field.grid
    v = field.values
    hx, hy, dt = g.hx, g.hy, g.dt
    T, X, Y = (a[1:-1, 1:-1, 1:-1] for a in g.mesh())
    args = pde.variables
    A = [[compile_numeric(a, args)(T, X, Y) for a in row] for row in pde.diffusion]
    b1 = compile_numeric(pde.drift[0], args)(T, X, Y)
    b2 = compile_numeric(pde.drift[1], args)(T, X, Y)
    c = compile_numeric(pde.source, args)(T, X, Y)
    s = compile_numeric(pde.time_coefficient, args)(T, X, Y)
    core = v[1:-1, 1:-1, 1:-1]
    u_t = (v[2:, 1:-1, 1:-1] - v[:-2, 1:-1, 1:-1]) / (2 * dt)
    u_x = (v[1:-1, 2:, 1:-1] - v[1:-1, :-2, 1:-1]) / (2 * hx)
    u_y = (v[1:-1, 1:-1, 2:] - v[1:-1, 1:-1, :-2]) / (2 * hy)
    u_xx = (v[1:-1, 2:, 1:-1] - 2 * core + v[1:-1, :-2, 1:-1]) / hx**2
    u_yy = (v[1:-1, 1:-1, 2:] - 2 * core + v[1:-1, 1:-1, :-2]) / hy**2
    u_xy = (
        v[1:-1, 2:, 2:] - v[1:-1, 2:, :-2] - v[1:-1, :-2, 2:] + v[1:-1, :-2, :-2]
    ) / (4 * hx * hy)
    theta = (
        A[0][0] * u_xx + 2 * A[0][1] * u_xy + A[1][1] * u_yy
        + b1 * u_x + b2 * u_y + c * core + s * u_t
    )
    if mask is not None:
        if not np.any(mask):
            raise NumericError("The residual mask selects no node")
        theta = theta[mask]
    return float(np.max(np.abs(theta)))


def heat_gaussian_solution(
    pde: EvolutionPDE, width: float = 1.0, t_data: float = 0.0
) -> DataFunction:
    """Exact solution whose heat-equation image is exp(-|x|^2/width^2) at t_data.

    Works for every equation :func:`symfin.reduce.to_heat` maps to the heat
    equation; for heat2d itself the data at t_data is the plain Gaussian.
    """
    tr = to_heat(pde)
    args = pde.variables
    T_map, xb_map, yb_map = (compile_numeric(e, args) for e in tr.inverse)
    multiplier = compile_numeric(tr.multiplier, args)
    T0 = float(T_map(t_data, 0.0, 0.0))

    def u(t: Any, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        T = T_map(t, x, y) - T0
        r2 = xb_map(t, x, y) ** 2 + yb_map(t, x, y) ** 2
        return multiplier(t, x, y) * np.exp(-r2 / (width**2 + 4 * T)) / (1 + 4 * T / width**2)

    return u


# ----------------------------------------------------------------------------
# Finite flows
# ----------------------------------------------------------------------------

def _affine_generator(xi: Sequence[sp.Expr], variables: Sequence[sp.Symbol]) -> np.ndarray:
    """Augmented matrix of the (t, x, y) part of a field, which must be affine."""
    rows = []
    for component in xi:
        component = canonical(component)
        row = []
        for v in variables:
            derivative = canonical(sp.diff(component, v))
            if derivative.free_symbols or time_atoms(derivative):
                raise UnsupportedFlowError(
                    f"Component {component} is not affine with numeric coefficients"
                )
            row.append(float(derivative))
        offset = component.xreplace({v: sp.S.Zero for v in variables})
        if offset.free_symbols or time_atoms(offset):
            raise UnsupportedFlowError(f"Component {component} has a non-numeric offset")
        rows.append([*row, float(offset)])
    rows.append([0.0] * (len(variables) + 1))
    return np.array(rows)


def transformed_field(
    field: Field,
    X: VectorField,
    eps: float,
    bindings: Mapping[str, Any] | None = None,
    method: str = "cubic",
    quadrature_nodes: int = 8,
) -> tuple[Field, np.ndarray]:
    """exp(eps X) applied to ``field`` and the mask of nodes whose preimage is inside the grid.

    Raises:
        UnsupportedFlowError: If the (t, x, y) part of X is not affine.
    """
    if not sp.expand(X.eta - sp.diff(X.eta, X.u) * X.u).is_zero:
        raise UnsupportedFlowError("eta must be a multiple of u")
    variables = X.variables
    xi = [canonical(bind(c, bindings or {}, X.table)) for c in X.xi]
    phi = canonical(bind(sp.diff(X.eta, X.u), bindings or {}, X.table))
    A = _affine_generator(xi, variables)
    rate = compile_numeric(phi, variables)
    g = field.grid
    T, Xm, Ym = g.mesh()
    points = np.stack([T.ravel(), Xm.ravel(), Ym.ravel(), np.ones(T.size)])
    pre = expm(-eps * A) @ points
    interpolator = RegularGridInterpolator(
        (g.times, g.x, g.y), field.values, method=method, bounds_error=False, fill_value=None
    )
    values = interpolator(pre[:3].T).reshape(T.shape)
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_nodes)
    integral = np.zeros(T.size)
    for node, weight in zip(nodes, weights):
        sigma = 0.5 * eps * (node + 1)
        p = expm(-sigma * A) @ points
        integral += 0.5 * eps * weight * rate(p[0], p[1], p[2])
    values = values * np.exp(integral).reshape(T.shape)
    tol = 1e-9
    inside = (
        (pre[0] >= g.t_start - tol) & (pre[0] <= g.t_end + tol)
        & (pre[1] >= g.x_min - tol) & (pre[1] <= g.x_max + tol)
        & (pre[2] >= g.y_min - tol) & (pre[2] <= g.y_max + tol)
    ).reshape(T.shape)
    mask = inside[1:-1, 1:-1, 1:-1].copy()
    for axis in range(3):
        for shift in (slice(2, None), slice(None, -2)):
            index = [slice(1, -1)] * 3
            index[axis] = shift
            mask &= inside[tuple(index)]
    return Field(grid=g, values=values, provenance="transformed"), mask


def flow_check(
    pde: EvolutionPDE,
    X: VectorField,
    eps: float,
    field: Field,
    bindings: Mapping[str, Any] | None = None,
    method: str = "cubic",
) -> float:
    """Discrete residual of exp(eps X) applied to ``field``, on nodes whose preimage is inside."""
    transformed, mask = transformed_field(field, X, eps, bindings, method)
    return discrete_residual(transformed, bound_pde(pde, bindings), mask)


# ----------------------------------------------------------------------------
# Cross-validation scenarios
# ----------------------------------------------------------------------------

def transform_equivalence(
    phi1: float, phi2: float, k: float, grid: Grid, width: float = 1.0
) -> float:
    """Relative difference of the direct solve of the canonical Black-Scholes
    equation and the heat-equation solve mapped back through the heat map."""
    pde = catalog("bs2d_canonical", {"phi1": phi1, "phi2": phi2, "k": k})
    grid = grid.model_copy(update={"direction": "backward"})
    exact = heat_gaussian_solution(pde, width, t_data=grid.t_end)
    direct = solve_fd(pde, grid, exact, exact)

    tr = to_heat(pde)
    args = pde.variables
    T_map, xb_map, yb_map = (compile_numeric(e, args) for e in tr.inverse)
    multiplier = compile_numeric(tr.multiplier, args)
    T, X, Y = grid.mesh()
    Tb, XB, YB = T_map(T, X, Y), xb_map(T, X, Y), yb_map(T, X, Y)
    margin = 2 * max(grid.hx, grid.hy)
    x_lo, x_hi = float(XB.min()) - margin, float(XB.max()) + margin
    y_lo, y_hi = float(YB.min()) - margin, float(YB.max()) + margin
    nx = 2 * int(np.ceil((x_hi - x_lo) / grid.hx / 2)) + 1
    ny = 2 * int(np.ceil((y_hi - y_lo) / grid.hy / 2)) + 1
    heat_grid = Grid(
        x_min=x_lo, x_max=x_hi, y_min=y_lo, y_max=y_hi, nx=nx, ny=ny,
        t_start=float(Tb.min()), t_end=float(Tb.max()), nt=grid.nt, direction="forward",
    )
    heat = catalog("heat2d")
    heat_exact = heat_gaussian_solution(heat, width, t_data=heat_grid.t_start)
    heat_field = solve_fd(heat, heat_grid, heat_exact, heat_exact)

    mapped = np.empty_like(direct.values)
    for n in range(grid.nt + 1):
        m = int(round((Tb[n, 0, 0] - heat_grid.t_start) / heat_grid.dt))
        slab = RegularGridInterpolator(
            (heat_grid.x, heat_grid.y), heat_field.values[m], method="cubic"
        )
        mapped[n] = slab(np.stack([XB[n].ravel(), YB[n].ravel()], axis=-1)).reshape(XB[n].shape)
    mapped *= multiplier(T, X, Y)
    error = max_relative_error(direct.values, mapped)
    logger.info(f"Transform equivalence: max relative error {error:.3e}")
    return error


def detect_frequency(
    times: np.ndarray, series: np.ndarray, threshold: float = 1e-9
) -> tuple[float | None, float]:
    """Angular frequency of the dominant DFT peak after linear detrending.

    Returns the frequency (None when the peak amplitude is below ``threshold``)
    and the angular width of one bin.
    """
    trend = np.polyval(np.polyfit(times, series, 1), times)
    residual = series - trend
    n = len(residual)
    spacing = float(times[1] - times[0])
    amplitude = 2 * np.abs(np.fft.rfft(residual)) / n
    frequencies = 2 * np.pi * np.fft.rfftfreq(n, d=spacing)
    amplitude[0] = 0.0
    peak = int(np.argmax(amplitude))
    width = float(frequencies[1])
    if amplitude[peak] <= threshold * max(1.0, float(np.max(np.abs(series)))):
        return None, width
    return float(frequencies[peak]), width


def fig3_scenario(
    r0: float,
    eps: float,
    omega: float,
    c1: float,
    c2: float,
    grid: Grid,
    sigma0: float = 0.3,
    rho: float = 0.5,
    x0: float = 0.0,
    csv_path: pathlib.Path | str | None = None,
) -> tuple[Field, Fig3Report]:
    """Periodic discount rate r(t) = r0 + eps sin(omega t) with mu1 = mu2 = k = r(t).

    Solves the nonautonomous Black-Scholes equation by finite differences
    against the invariant closed form, writes the y = 0 slice and reports the
    dominant angular frequency of the solved log u(t, x0, 0).
    """
    t = SymbolTable().time
    r = sp.Float(r0) + sp.Float(eps) * sp.sin(sp.Float(omega) * t)
    phi1, phi2 = bs2d_params({"sigma1": sigma0, "sigma2": sigma0, "rho": rho, "mu1": r, "mu2": r})
    pde = catalog("bs2d_special_nonauto", {"Lambda1": phi1, "Lambda2": phi2, "k": r})
    solution = invariant_solution(pde, sp.Rational(str(c1)), sp.Rational(str(c2)))
    exact = closed_form_callable(solution)
    grid = grid.model_copy(update={"direction": "backward"})
    field = solve_fd(pde, grid, exact, exact)
    reference = Field.sample(grid, exact, provenance="closed-form")
    error = max_relative_error(field, reference)
    # Peaks below the solver's own error are not reported.
    frequency, width = detect_frequency(grid.times, np.log(field.at(x0, 0.0)), threshold=error)
    csv = ""
    if csv_path is not None:
        csv = field.to_csv(csv_path, y0=0.0).name
    report = Fig3Report(
        r0=r0, eps=eps, omega=omega, detected_frequency=frequency,
        frequency_bin_width=width, error=error, csv=csv,
    )
    logger.info(f"Fig3 scenario: frequency {report.frequency_text}, FD error {error:.3e}")
    return field, report


# ----------------------------------------------------------------------------
# Determining systems as ODEs
# ----------------------------------------------------------------------------

# Printed equations that involve a(t) and none of the other unknowns' highest derivatives.
A_EQUATIONS = {"twofactor": (3,), "bs2d": (3, 4)}


class DeterminingTrajectory(BaseModel):
    """Integrated a, b1, b2, h (printed names) and the residuals along the way."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    system: Literal["twofactor", "bs2d"]
    B2: float
    times: np.ndarray
    values: dict[str, np.ndarray]
    residuals: np.ndarray
    constraints: tuple[int, ...] = ()

    @property
    def max_residuals(self) -> list[float]:
        return [float(np.max(np.abs(r))) for r in self.residuals]

    def to_frame(self) -> pd.DataFrame:
        """One row per output time: t, the unknowns, then residual_1, residual_2, ..."""
        frame = pd.DataFrame({"t": self.times, **{k: self.values[k] for k in sorted(self.values)}})
        for i, r in enumerate(self.residuals, start=1):
            frame[f"residual_{i}"] = r
        return frame

    def to_report(self, mode_error: float | None = None) -> DeterminingReport:
        return DeterminingReport(
            system=self.system,
            B2=self.B2,
            t_end=float(self.times[-1]),
            max_residuals=self.max_residuals,
            final_state={name: float(v[-1]) for name, v in sorted(self.values.items())},
            mode_error=mode_error,
        )


def _a_derivatives(
    equations: Sequence[sp.Expr],
    a_jets: Sequence[sp.Symbol],
    t: sp.Symbol,
    prescribed: sp.Expr | None,
) -> tuple[sp.Expr, sp.Expr, int | None]:
    """a' and a'' in terms of (t, a), and the index of the equation they come from.

    Each equation is linear in a and a'; the first whose a' coefficient does
    not vanish identically is solved for a', and a'' is its total derivative.
    """
    if prescribed is not None:
        return sp.diff(prescribed, t), sp.diff(prescribed, t, 2), None
    a0, a1, _ = a_jets
    for i, e in enumerate(equations):
        alpha = sp.diff(e, a1)
        if is_zero(alpha):
            continue
        first = -e.subs(a1, 0) / alpha
        return first, sp.diff(first, t) + sp.diff(first, a0) * first, i
    raise NumericError("The equations for a(t) do not determine a' for these coefficients; prescribe a")


def integrate_determining_system(
    system: Literal["twofactor", "bs2d"],
    coeffs: Mapping[str, Any],
    initial: Mapping[str, float],
    B2: float = 0.0,
    a: str | sp.Expr | None = None,
    t_span: tuple[float, float] = (0.0, 1.0),
    n_eval: int = 201,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    enforce: bool = True,
    constraint_tol: float = 1e-7,
) -> DeterminingTrajectory:
    """Integrate the printed determining equations.

    The second and third equations are solved for b1'' and the second
    translation's second derivative, the first for the derivative of the
    free term. a(t) follows the first of the remaining equations whose a'
    coefficient is not identically zero; the others constrain a and B2 and
    are checked along the trajectory. A prescribed ``a`` turns all of them
    into constraints. ``initial`` is keyed by the printed names, with a
    trailing prime for first derivatives (``a``, ``b1``, ``b1'``, ``g``,
    ``g'``, ``h`` for the two-factor system). Missing coefficients and
    initial values are zero.

    Raises:
        NumericError: If a' is not determined, the leading coefficients are
            singular, the integrator fails, or (with ``enforce``) a
            constraint exceeds ``constraint_tol`` relative to the trajectory.
    """
    table = SymbolTable()
    t = table.time
    names = COEFFICIENT_NAMES[system]
    unknown = set(coeffs) - set(names)
    if unknown:
        raise ValueError(f"The {system} system has no coefficients {sorted(unknown)}")
    values = [parse(str(coeffs.get(n, "0")), table) for n in names]
    prescribed = None
    if a is not None:
        prescribed = parse(a, table) if isinstance(a, str) else sp.sympify(a)
    a_name, b1_name, b2_name, h_name = GENERIC_NAMES[system]
    F = {n: sp.Function(n, real=True)(t) for n in (a_name, b1_name, b2_name, h_name)}
    c = GenericCoefficients(
        family=system, time=t, a=F[a_name], b1=F[b1_name], b2=F[b2_name], h=F[h_name],
        B2=sp.Float(B2),
    )
    if system == "twofactor":
        residuals = determining_residuals_twofactor(c, values)
    else:
        residuals = determining_residuals_bs2d(c, values)

    y = sp.symbols("y0:5")
    D = sp.symbols("D0:3")
    A = sp.symbols("A0:3")
    jets = {
        sp.Derivative(F[a_name], (t, 2)): A[2],
        sp.Derivative(F[a_name], t): A[1],
        F[a_name]: A[0],
        sp.Derivative(F[b1_name], (t, 2)): D[0],
        sp.Derivative(F[b2_name], (t, 2)): D[1],
        sp.Derivative(F[h_name], t): D[2],
        sp.Derivative(F[b1_name], t): y[1],
        sp.Derivative(F[b2_name], t): y[3],
        F[b1_name]: y[0],
        F[b2_name]: y[2],
        F[h_name]: y[4],
    }
    flat = [sp.expand(r).xreplace(jets) for r in residuals]
    a_rows = A_EQUATIONS[system]
    first, second, driver = _a_derivatives([flat[i] for i in a_rows], A, t, prescribed)
    constraints = tuple(i for k, i in enumerate(a_rows) if k != driver)
    first_f = compile_numeric(first, [t, A[0]])
    second_f = compile_numeric(second, [t, A[0]])
    M, rhs = sp.linear_eq_to_matrix([flat[1], flat[2], flat[0]], list(D))
    M_f = sp.lambdify((t, *y, *A), M, "numpy")
    rhs_f = sp.lambdify((t, *y, *A), rhs, "numpy")
    residual_f = sp.lambdify((t, *y, *A, *D), flat, "numpy")

    def a_jet(tt: float, state: Sequence[float]) -> tuple[float, float, float]:
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                jet = (float(state[5]), float(first_f(tt, state[5])), float(second_f(tt, state[5])))
        except ZeroDivisionError:
            jet = (float(state[5]), np.nan, np.nan)
        if not np.all(np.isfinite(jet)):
            raise NumericError(f"The a' coefficient of the {system} system vanishes at t = {tt:.6g}")
        return jet

    def highest(tt: float, state: Sequence[float]) -> tuple[np.ndarray, tuple[float, float, float]]:
        jet = a_jet(tt, state)
        matrix = np.array(M_f(tt, *state[:5], *jet), dtype=float)
        if abs(np.linalg.det(matrix)) < 1e-14:
            raise NumericError(f"Leading coefficients are singular at t = {tt:.6g}")
        vector = np.array(rhs_f(tt, *state[:5], *jet), dtype=float).ravel()
        return np.linalg.solve(matrix, vector), jet

    def derivative(tt: float, state: np.ndarray) -> list[float]:
        d, jet = highest(tt, state)
        return [state[1], d[0], state[3], d[1], d[2], jet[1]]

    keys = [b1_name, f"{b1_name}'", b2_name, f"{b2_name}'", h_name, a_name]
    start = [float(initial.get(k, 0.0)) for k in keys]
    if prescribed is not None:
        start[5] = float(compile_numeric(prescribed, [t])(t_span[0]))
    t_eval = np.linspace(t_span[0], t_span[1], n_eval)
    sol = solve_ivp(
        derivative, t_span, start, method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval
    )
    if not sol.success:
        raise NumericError(f"Integration of the {system} system failed: {sol.message}")
    history = []
    for k, tt in enumerate(sol.t):
        state = sol.y[:, k]
        d, jet = highest(tt, state)
        history.append(
            np.broadcast_to(np.array(residual_f(tt, *state[:5], *jet, *d), dtype=float), len(flat))
        )
    trajectory = DeterminingTrajectory(
        system=system,
        B2=float(B2),
        times=sol.t,
        values={a_name: sol.y[5], b1_name: sol.y[0], b2_name: sol.y[2], h_name: sol.y[4]},
        residuals=np.array(history).T,
        constraints=constraints,
    )
    if enforce and constraints:
        worst = max(trajectory.max_residuals[i] for i in constraints)
        scale = max(1.0, float(np.max(np.abs(sol.y))), abs(B2))
        if worst > constraint_tol * scale:
            raise NumericError(
                f"Equations {[i + 1 for i in constraints]} of the {system} system fail along the"
                f" trajectory (max |residual| {worst:.3e}): a and B2 = {B2:g} are not compatible"
                " with these coefficients"
            )
    return trajectory


def solution_dimension(
    system: Literal["twofactor", "bs2d"],
    coeffs: Mapping[str, Any],
    t_span: tuple[float, float] = (0.0, 1.0),
    n_eval: int = 21,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> int:
    """Dimension of the solution family of the printed system with a(t) integrated.

    The free data are the six initial values and B2. Every unit datum is
    integrated without enforcing the constraints, and the rank of the
    constraint histories is the number of conditions they impose.
    """
    a_name, b1_name, b2_name, h_name = GENERIC_NAMES[system]
    keys = [a_name, b1_name, f"{b1_name}'", b2_name, f"{b2_name}'", h_name]
    runs = [({key: 1.0}, 0.0) for key in keys] + [({}, 1.0)]
    columns = []
    for initial, B2 in runs:
        trajectory = integrate_determining_system(
            system, coeffs, initial, B2=B2, t_span=t_span, n_eval=n_eval,
            rtol=rtol, atol=atol, enforce=False,
        )
        columns.append(trajectory.residuals[list(trajectory.constraints)].ravel())
    matrix = np.array(columns).T
    rank = 0
    if matrix.size:
        singular = np.linalg.svd(matrix, compute_uv=False)
        rank = int(np.sum(singular > 1e-8 * max(1.0, float(singular[0]))))
    logger.info(f"Printed {system} system: {len(runs)} free data, {rank} constraints")
    return len(runs) - rank


def translation_modes(
    system: Literal["twofactor", "bs2d"], coeffs: Mapping[str, Any]
) -> list[tuple[float, np.ndarray, float]]:
    """(eigenvalue, eigenvector, rate) of the constant drift matrix; b = exp(rate t) e.

    Raises:
        NumericError: If the spectrum is not real.
    """
    pde = catalog(NONAUTO_MODELS[system], {k: str(v) for k, v in coeffs.items()})
    M, _ = linear_drift(pde)
    s = _numeric_time_coefficient(pde)
    if M.free_symbols or any(time_atoms(e) for e in M):
        raise NumericError(f"Drift matrix {M.tolist()} is not constant")
    eigenvalues, vectors = np.linalg.eig(np.array(M.evalf(), dtype=float))
    if np.any(np.abs(eigenvalues.imag) > 1e-12):
        raise NumericError(f"Drift matrix has complex eigenvalues {eigenvalues}")
    modes = [
        (float(lam.real), vectors[:, i].real, -float(lam.real) / s)
        for i, lam in enumerate(eigenvalues)
    ]
    return sorted(modes, key=lambda mode: mode[0])


def mode_initial_data(
    system: Literal["twofactor", "bs2d"], vector: np.ndarray, rate: float
) -> dict[str, float]:
    _, b1_name, b2_name, h_name = GENERIC_NAMES[system]
    return {
        b1_name: float(vector[0]),
        f"{b1_name}'": float(rate * vector[0]),
        b2_name: float(vector[1]),
        f"{b2_name}'": float(rate * vector[1]),
        h_name: 0.0,
    }


def mode_error(trajectory: DeterminingTrajectory, vector: np.ndarray, rate: float) -> float:
    """Relative distance of the integrated translation part from exp(rate t) e."""
    _, b1_name, b2_name, _ = GENERIC_NAMES[trajectory.system]
    growth = np.exp(rate * trajectory.times)
    expected = np.stack([growth * vector[0], growth * vector[1]])
    found = np.stack([trajectory.values[b1_name], trajectory.values[b2_name]])
    return max_relative_error(found, expected)


# ----------------------------------------------------------------------------
# Ermakov-Pinney
# ----------------------------------------------------------------------------

class ErmakovCase(BaseModel):
    """Two linear solutions, the Pinney combination rho and one test trajectory x."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    A: float
    B: float
    C: float
    times: np.ndarray
    v1: np.ndarray
    dv1: np.ndarray
    v2: np.ndarray
    dv2: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    phase: np.ndarray
    omega_sq: np.ndarray
    pinney: np.ndarray

    @property
    def wronskian(self) -> np.ndarray:
        return self.v1 * self.dv2 - self.dv1 * self.v2

    @property
    def rho(self) -> np.ndarray:
        return np.sqrt(self.A * self.v1**2 + 2 * self.B * self.v1 * self.v2 + self.C * self.v2**2)

    @property
    def drho(self) -> np.ndarray:
        return (
            self.A * self.v1 * self.dv1
            + self.B * (self.dv1 * self.v2 + self.v1 * self.dv2)
            + self.C * self.v2 * self.dv2
        ) / self.rho

    @property
    def pinney_residual(self) -> np.ndarray:
        """Relative gap between rho and the Pinney equation integrated on its own."""
        return (self.pinney - self.rho) / np.max(np.abs(self.rho))

    @property
    def canonical_pair(self) -> tuple[np.ndarray, np.ndarray]:
        """Q = x/rho, P = rho x' - rho' x."""
        return self.x / self.rho, self.rho * self.dx - self.drho * self.x

    @property
    def invariant(self) -> np.ndarray:
        Q, P = self.canonical_pair
        return 0.5 * (P**2 + Q**2)


def omega_function(expression: str) -> Callable[[float], float]:
    """omega(t) from an expression string in t."""
    table = SymbolTable()
    compiled = compile_numeric(parse(expression, table), [table.time])
    return lambda t: float(compiled(t))


def ermakov_case(
    omega: Callable[[float], float],
    A: float,
    B: float,
    C: float,
    t_span: tuple[float, float],
    x0: float = 0.3,
    v0: float = 0.7,
    n_eval: int = 2001,
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> ErmakovCase:
    """Integrate x'' + omega^2 x = 0 for v1 (1, 0), v2 (0, 1), x (x0, v0), T' = rho^-2
    and the Pinney equation rho'' + omega^2 rho = rho^-3 from rho(0) = sqrt(A),
    rho'(0) = B / sqrt(A).

    Raises:
        ErmakovConstraintError: If (AC - B^2) W^2 != 1 or rho^2 is not positive definite.
        NumericError: If the integrator fails.
    """
    # v1 (1, 0) and v2 (0, 1) have Wronskian 1 for every omega.
    wronskian = 1.0
    if A <= 0 or abs((A * C - B**2) * wronskian**2 - 1) > 1e-9 * max(1.0, abs(A * C), B**2):
        raise ErmakovConstraintError(
            f"(AC - B^2) W^2 = {(A * C - B**2) * wronskian**2:.12g} must equal 1 with A > 0"
        )

    def derivative(t: float, z: np.ndarray) -> list[float]:
        w2 = omega(t) ** 2
        rho_sq = A * z[0] ** 2 + 2 * B * z[0] * z[2] + C * z[2] ** 2
        return [
            z[1], -w2 * z[0], z[3], -w2 * z[2], z[5], -w2 * z[4], 1 / rho_sq,
            z[8], -w2 * z[7] + 1 / z[7] ** 3,
        ]

    t_eval = np.linspace(t_span[0], t_span[1], n_eval)
    sol = solve_ivp(
        derivative, t_span, [1.0, 0.0, 0.0, 1.0, x0, v0, 0.0, np.sqrt(A), B / np.sqrt(A)],
        method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval,
    )
    if not sol.success:
        raise NumericError(f"Ermakov integration failed: {sol.message}")
    omega_sq = np.array([omega(t) ** 2 for t in sol.t])
    v1, dv1, v2, dv2, x, dx, phase, pinney, _ = sol.y
    return ErmakovCase(
        A=A, B=B, C=C, times=sol.t, v1=v1, dv1=dv1, v2=v2, dv2=dv2,
        x=x, dx=dx, phase=phase, omega_sq=omega_sq, pinney=pinney,
    )


def ermakov_suite(
    omega: Callable[[float], float],
    A: float,
    B: float,
    C: float,
    t_span: tuple[float, float],
    **kwargs: Any,
) -> ErmakovReport:
    """Pinney residual, Wronskian and invariant drift, canonical phase and T monotonicity."""
    case = ermakov_case(omega, A, B, C, t_span, **kwargs)
    W = case.wronskian
    invariant = case.invariant
    Q, P = case.canonical_pair
    T = case.phase
    predicted = Q[0] * np.cos(T) + P[0] * np.sin(T)
    report = ErmakovReport(
        A=A, B=B, C=C,
        wronskian=float(W[0]),
        wronskian_drift=float(np.max(np.abs(W - W[0]))),
        pinney_residual=float(np.max(np.abs(case.pinney_residual))),
        invariant_drift=float(np.max(np.abs(invariant - invariant[0]))),
        phase_drift=float(np.max(np.abs(Q - predicted))),
        time_monotone=bool(np.all(np.diff(T) > 0)),
    )
    logger.info(
        f"Ermakov suite: Pinney residual {report.pinney_residual:.3e}, "
        f"invariant drift {report.invariant_drift:.3e}"
    )
    return report

import numpy as np
import pandas as pd
import pytest

from symfin.config import DEFAULT_COEFFICIENTS
from symfin.models import catalog
from symfin.numeric import (
    ErmakovConstraintError,
    Field,
    Grid,
    NumericError,
    detect_frequency,
    discrete_residual,
    ermakov_case,
    ermakov_suite,
    fig3_scenario,
    flow_check,
    heat_gaussian_solution,
    integrate_determining_system,
    max_relative_error,
    mode_error,
    mode_initial_data,
    omega_function,
    solution_dimension,
    solve_fd,
    transform_equivalence,
    translation_modes,
)
from symfin.symmetry import VectorField, catalog_generators

TWOFACTOR = {"P1": "2", "P2": "1", "P3": "1/5", "Q1": "0", "Q2": "3", "Q3": "1/10"}
BS2D = {"P1": "11/10", "Q1": "1/2", "Q2": "2", "Q3": "1/5", "k": "1/20"}


def _grid(n: int = 41, nt: int = 40, **kwargs) -> Grid:
    return Grid(nx=n, ny=n, nt=nt, t_end=0.5, **kwargs)


@pytest.fixture(scope="module")
def heat_field() -> Field:
    heat = catalog("heat2d")
    exact = heat_gaussian_solution(heat)
    return solve_fd(heat, _grid(), exact, exact)


def test_grid_needs_odd_node_counts():
    with pytest.raises(ValueError):
        Grid(nx=40)


def test_heat_gaussian_forward(heat_field):
    reference = Field.sample(heat_field.grid, heat_gaussian_solution(catalog("heat2d")))
    assert max_relative_error(heat_field, reference) < 1e-2


def test_second_order_convergence():
    heat = catalog("heat2d")
    exact = heat_gaussian_solution(heat)
    errors = []
    for n, nt in [(41, 40), (81, 80)]:
        grid = _grid(n, nt)
        field = solve_fd(heat, grid, exact, exact)
        errors.append(max_relative_error(field, Field.sample(grid, exact)))
    assert 3.4 <= errors[0] / errors[1] <= 4.6


def test_discrete_residual_of_the_exact_solution_is_second_order():
    heat = catalog("heat2d")
    exact = heat_gaussian_solution(heat)
    residuals = [
        discrete_residual(Field.sample(_grid(n, nt), exact), heat)
        for n, nt in [(41, 40), (81, 80)]
    ]
    assert 3.4 <= residuals[0] / residuals[1] <= 4.6


def test_heat_equation_cannot_march_backward():
    heat = catalog("heat2d")
    exact = heat_gaussian_solution(heat)
    with pytest.raises(NumericError):
        solve_fd(heat, _grid(direction="backward"), exact, exact)


def test_black_scholes_backward(bs2d_example):
    grid = _grid(direction="backward")
    exact = heat_gaussian_solution(bs2d_example, t_data=grid.t_end)
    field = solve_fd(bs2d_example, grid, exact, exact)
    assert max_relative_error(field, Field.sample(grid, exact)) < 1e-2


def test_translation_flow_keeps_the_residual(heat_field):
    heat = catalog("heat2d")
    shift = VectorField(table=heat.table, xi=(0, 1, 0), eta=0)
    baseline = discrete_residual(heat_field, heat)
    assert flow_check(heat, shift, 0.3, heat_field) <= baseline * (1 + 1e-6) + 1e-10


def test_boost_flow_beats_a_stretch(heat_field):
    heat = catalog("heat2d")
    boost = {g.name: g.field for g in catalog_generators("heat2d")}["X2"]
    _, x, _ = heat.variables
    stretch = VectorField(table=heat.table, xi=(0, x, 0), eta=0)
    assert flow_check(heat, boost, 0.3, heat_field) < 0.5 * flow_check(heat, stretch, 0.3, heat_field)


def test_transform_equivalence():
    assert transform_equivalence(1.0, 1.1, 0.05, _grid()) < 2e-2


def test_detect_frequency_of_a_pure_trend():
    times = np.linspace(0.0, 1.0, 101)
    frequency, width = detect_frequency(times, 0.3 + 2.0 * times)
    assert frequency is None
    assert width == pytest.approx(2 * np.pi * 100 / 101)


def test_fig3_without_oscillation():
    _, report = fig3_scenario(0.05, 0.0, 8 * np.pi, 0.5, 0.25, _grid(nt=50))
    assert report.detected_frequency is None


def test_fig3_detects_the_rate_frequency(tmp_path):
    omega = 8 * np.pi
    grid = Grid(nx=41, ny=41, nt=100)
    _, report = fig3_scenario(0.05, 0.02, omega, 0.5, 0.25, grid, csv_path=tmp_path / "fig3.csv")
    assert report.detected_frequency is not None
    assert abs(report.detected_frequency - omega) <= report.frequency_bin_width
    assert report.frequency_bin_width == pytest.approx(2 * np.pi * 100 / 101)
    assert report.error < 1e-2
    frame = pd.read_csv(tmp_path / "fig3.csv")
    assert list(frame.columns) == ["t", "x", "y", "u"]
    assert len(frame) == 101 * 41


@pytest.mark.slow
def test_heat_gaussian_on_the_production_grid():
    heat = catalog("heat2d")
    exact = heat_gaussian_solution(heat)
    grid = Grid(nx=101, ny=101, nt=400, t_end=1.0)
    field = solve_fd(heat, grid, exact, exact)
    assert max_relative_error(field, Field.sample(grid, exact)) <= 1e-3


@pytest.mark.slow
def test_fig3_on_the_production_grid():
    omega = 2 * np.pi
    _, report = fig3_scenario(0.05, 0.02, omega, 0.5, 0.5, Grid(nx=101, ny=101, nt=400))
    assert report.error <= 1e-3
    assert report.detected_frequency is not None
    assert abs(report.detected_frequency - omega) <= report.frequency_bin_width


@pytest.mark.parametrize("system, coeffs", [("twofactor", TWOFACTOR), ("bs2d", BS2D)])
def test_translation_modes_integrate_to_exponentials(system, coeffs):
    modes = translation_modes(system, coeffs)
    assert len(modes) == 2
    for _, vector, rate in modes:
        trajectory = integrate_determining_system(
            system, coeffs, mode_initial_data(system, vector, rate), rtol=1e-11, atol=1e-13
        )
        assert mode_error(trajectory, vector, rate) <= 1e-7
        assert max(trajectory.max_residuals) <= 1e-7


def test_time_dependent_coefficients_keep_small_residuals():
    coeffs = {**TWOFACTOR, "P1": "1 + sin(t)", "Q3": "t/10"}
    trajectory = integrate_determining_system(
        "twofactor", coeffs, {"b1": 1.0, "g": -0.5, "h": 0.2}, t_span=(0.0, 2.0)
    )
    assert max(trajectory.max_residuals) <= 1e-7
    frame = trajectory.to_frame()
    assert list(frame.columns[:5]) == ["t", "a", "b1", "g", "h"]
    assert trajectory.to_report().t_end == pytest.approx(2.0)


def test_unknown_coefficient_is_rejected():
    with pytest.raises(ValueError):
        integrate_determining_system("bs2d", {"P2": "1"}, {})


VARYING = {"P1": "1 + sin(t)", "P2": "1/2 + t/10", "P3": "1/5", "Q1": "cos(t)/4", "Q2": "3", "Q3": "t/10"}


@pytest.mark.parametrize("B2, a0", [(1.0, 0.0), (0.0, 1.0)])
def test_a_follows_its_equation(B2, a0):
    trajectory = integrate_determining_system(
        "twofactor", VARYING, {"a": a0, "b1": 1.0, "g": -0.5, "h": 0.2}, B2=B2,
        rtol=1e-11, atol=1e-13,
    )
    assert trajectory.constraints == ()
    assert max(trajectory.max_residuals) <= 1e-7
    assert np.ptp(trajectory.values["a"]) > 0


def test_bs2d_a_is_held_by_the_last_equation():
    trajectory = integrate_determining_system(
        "bs2d", BS2D, {"a": 1.0, "b1": 1.0}, B2=-0.125, rtol=1e-11, atol=1e-13
    )
    assert trajectory.constraints == (4,)
    assert np.allclose(trajectory.values["a"], 1.0)
    assert max(trajectory.max_residuals) <= 1e-7


def test_incompatible_B2_is_rejected():
    with pytest.raises(NumericError):
        integrate_determining_system("bs2d", BS2D, {"a": 1.0, "b1": 1.0}, B2=1.0)


def test_prescribed_a_must_satisfy_its_equation():
    with pytest.raises(NumericError):
        integrate_determining_system("twofactor", TWOFACTOR, {"b1": 1.0}, a="t")


def test_undetermined_a_must_be_prescribed():
    coeffs = {"P1": "11/10", "Q3": "1/5", "k": "1/20"}
    with pytest.raises(NumericError):
        integrate_determining_system("bs2d", coeffs, {"b1": 1.0})
    trajectory = integrate_determining_system(
        "bs2d", coeffs, {"b1": 1.0}, B2=1.0, a="1 + t/2", rtol=1e-11, atol=1e-13
    )
    assert trajectory.constraints == (3, 4)
    assert trajectory.values["a"][-1] == pytest.approx(1.5)
    assert max(trajectory.max_residuals) <= 1e-7


@pytest.mark.parametrize("system, dimension", [("twofactor", 7), ("bs2d", 6)])
def test_solution_dimension_of_the_default_systems(system, dimension):
    assert solution_dimension(system, DEFAULT_COEFFICIENTS[system]) == dimension


def test_ermakov_suite():
    report = ermakov_suite(omega_function("1 + sin(t)/2"), 1.0, 0.0, 1.0, (0.0, 10.0))
    assert report.wronskian == pytest.approx(1.0)
    assert report.wronskian_drift <= 1e-8
    assert report.pinney_residual <= 1e-8
    assert report.invariant_drift <= 1e-6
    assert report.phase_drift < 1e-6
    assert report.time_monotone


def test_ermakov_constraint():
    with pytest.raises(ErmakovConstraintError):
        ermakov_suite(omega_function("1"), 1.0, 0.0, 2.0, (0.0, 1.0))


def test_pinney_check_tells_frequencies_apart():
    case = ermakov_case(omega_function("1 + sin(t)/2"), 1.0, 0.0, 1.0, (0.0, 10.0))
    assert np.max(np.abs(case.pinney_residual)) <= 1e-8
    constant = ermakov_case(omega_function("1"), 1.0, 0.0, 1.0, (0.0, 10.0))
    assert np.allclose(constant.pinney, 1.0)
    mixed = case.model_copy(update={"pinney": constant.pinney})
    assert np.max(np.abs(mixed.pinney_residual)) > 1e-2


def test_field_slices(heat_field):
    plane = heat_field.slice_y(0.0)
    assert plane.shape == (heat_field.grid.nt + 1, heat_field.grid.nx)
    center = heat_field.at(0.0, 0.0)
    assert np.array_equal(plane[:, heat_field.x_index(0.0)], center)
    frame = heat_field.to_frame(0.0)
    assert len(frame) == (heat_field.grid.nt + 1) * heat_field.grid.nx

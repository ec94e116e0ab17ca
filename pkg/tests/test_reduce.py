import numpy as np
import pytest
import sympy as sp

from symfin.expr import is_zero
from symfin.models import apply_transformation, catalog
from symfin.reduce import (
    ReductionError,
    UnsupportedShapeError,
    closed_form_callable,
    closed_form_field,
    invariant_solution,
    is_maximally_symmetric_1p1,
    reduce_by_translations,
    reduce_once,
    to_heat,
)
from symfin.symmetry import VectorField, catalog_generators


def test_canonical_model_maps_onto_the_heat_equation(bs2d_example):
    pulled = apply_transformation(bs2d_example, to_heat(bs2d_example), time_coefficient=-1)
    assert pulled.is_equivalent(catalog("heat2d"))


def test_special_model_maps_onto_the_heat_equation():
    special = catalog("bs2d_special_nonauto")
    pulled = apply_transformation(special, to_heat(special), time_coefficient=-1)
    assert pulled.is_equivalent(catalog("heat2d"))


def test_space_dependent_drift_is_not_mapped():
    with pytest.raises(UnsupportedShapeError):
        to_heat(catalog("twofactor_canonical"))


def test_invariant_solution_solves_the_special_model():
    solution = invariant_solution(catalog("bs2d_special_nonauto"), "1/2", "1/3")
    assert is_zero(solution.residual())
    report = solution.to_report()
    assert report.residual_zero
    assert report.declarations and report.declarations[0].startswith("W := int(")


def test_translations_reduce_to_the_ode_of_w():
    special = catalog("bs2d_special_nonauto")
    steps = reduce_by_translations(special, ["1/2", "1/3"])
    assert [s.dimension for s in steps] == [1, 0]
    assert is_maximally_symmetric_1p1(steps[0])
    ode = steps[-1]
    solution = invariant_solution(special, "1/2", "1/3")
    t = special.table.time
    growth = sp.diff(solution.w, t) / solution.w
    assert is_zero(-ode.source / ode.time_coefficient - growth)
    with pytest.raises(ReductionError):
        reduce_by_translations(special, ["1", "1", "1"])


def test_reduction_needs_a_symmetry():
    heat = catalog("heat2d")
    _, x, _ = heat.variables
    with pytest.raises(ReductionError):
        reduce_once(heat, VectorField(table=heat.table, xi=(0, x, 0), eta=0))


def test_rotation_is_not_reduced():
    by_name = {g.name: g for g in catalog_generators("heat2d")}
    heat = catalog("heat2d")
    with pytest.raises(UnsupportedShapeError):
        reduce_once(heat, by_name["X5"])


def test_time_translation_is_not_reduced():
    by_name = {g.name: g for g in catalog_generators("heat2d")}
    with pytest.raises(ReductionError):
        reduce_once(catalog("heat2d"), by_name["X_t"])


def test_non_constant_principal_part_is_unsupported():
    heat = catalog("heat1d")
    _, x = heat.variables
    stretched = heat.model_copy(update={"diffusion": ((1 + x**2,),)})
    with pytest.raises(UnsupportedShapeError):
        is_maximally_symmetric_1p1(stretched)


def test_closed_form_callable_matches_the_exponential():
    solution = invariant_solution(catalog("bs2d_special_nonauto"), "1/2", "1/3")
    u = closed_form_callable(solution, {"Lambda1": "1", "Lambda2": "1", "k": "1/20"})
    c1, c2 = 0.5, 1.0 / 3.0
    rate = (2 * 0.05 - c1**2 - c2**2 + c1 + c2) / 2
    t = np.linspace(0.0, 1.0, 5)
    x = np.full_like(t, 0.4)
    y = np.full_like(t, -0.7)
    expected = np.exp(rate * t + c1 * x + c2 * y)
    assert np.allclose(u(t, x, y), expected, rtol=1e-8)


def test_closed_form_field_on_a_mesh():
    solution = invariant_solution(catalog("bs2d_special_nonauto"), "0", "0")
    bindings = {"Lambda1": "1", "Lambda2": "1", "k": "1/20"}
    t, x, y = np.meshgrid(np.linspace(0, 1, 3), np.linspace(-1, 1, 4), [0.0], indexing="ij")
    values = closed_form_field(solution, bindings, t, x, y)
    assert values.shape == (3, 4, 1)
    assert np.allclose(values, np.exp(0.05 * t))

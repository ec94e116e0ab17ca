import json

import pytest
import sympy as sp

from symfin.expr import SymbolTable, is_zero
from symfin.models import catalog
from symfin.symmetry import (
    GenericCoefficients,
    SymmetryError,
    VectorField,
    autonomous_modes,
    catalog_generators,
    check_coefficient_condition,
    check_symmetry,
    determining_residuals_bs2d,
    determining_residuals_twofactor,
    engine_residuals,
    generators_from_file,
    prolong2,
    supplementary_residuals_bs2d,
    supplementary_residuals_twofactor,
    verify_catalog,
    verify_generators,
    worker_count,
)


@pytest.mark.parametrize(
    "model_id, count",
    [
        ("heat1d", 6),
        ("heat2d", 9),
        ("bs2d_canonical", 9),
        ("twofactor_q0", 6),
        ("twofactor_autonomous", 6),
        ("bs2d_special_nonauto", 9),
    ],
)
def test_stored_catalogs_are_symmetries(model_id, count):
    report = verify_catalog(model_id)
    assert len(report.reports) == count
    assert report.failed == []


def test_repairs_travel_with_the_verdicts():
    report = verify_catalog("bs2d_canonical")
    by_name = {r.generator: r for r in report.reports}
    assert by_name["X2"].repairs
    assert by_name["X_t"].repairs == []
    dumped = by_name["X_t"].model_dump(by_alias=True)
    assert "lambda" in dumped


def test_printed_corruption_is_rejected():
    pde = catalog("bs2d_canonical")
    t, x, _ = pde.variables
    u = sp.Symbol("u", real=True)
    phi1 = pde.table["phi1"]
    printed = VectorField(table=pde.table, xi=(0, t, 0), eta=(x + phi1 * t) * u)
    report = check_symmetry(pde, printed)
    assert report.verdict == "not-symmetry"
    assert report.residual
    repaired = VectorField(table=pde.table, xi=(0, t, 0), eta=(x + phi1 * t / 2) * u)
    assert check_symmetry(pde, repaired).passed


def test_stretch_is_not_a_heat_symmetry():
    heat = catalog("heat2d")
    _, x, _ = heat.variables
    report = check_symmetry(heat, VectorField(table=heat.table, xi=(0, x, 0), eta=0))
    assert not report.passed


def test_translation_prolongs_to_zero():
    heat = catalog("heat2d")
    X = VectorField(table=heat.table, xi=(0, 1, 0), eta=0)
    assert all(c == 0 for c in prolong2(X).values())


def test_prolongation_is_linear():
    heat = catalog("heat2d")
    t, x, y = heat.variables
    u = sp.Symbol("u", real=True)
    X = VectorField(table=heat.table, xi=(2 * t, x, y), eta=-u)
    Y = VectorField(table=heat.table, xi=(0, t, 0), eta=-x * u / 2)
    a, b = sp.Rational(3, 7), sp.Rational(-5, 2)
    combined = prolong2(X * a + Y * b)
    px, py = prolong2(X), prolong2(Y)
    for jet, value in combined.items():
        assert is_zero(value - a * px[jet] - b * py[jet])


def test_coefficient_condition_of_the_dilation():
    heat = catalog("heat2d")
    t, x, y = heat.variables
    dilation = VectorField(table=heat.table, xi=(2 * t, x, y), eta=0)
    condition = check_coefficient_condition(heat, dilation)
    assert condition.holds
    assert condition.psi == 1


def test_field_on_other_variables_is_rejected():
    heat = catalog("heat2d")
    X = VectorField(table=SymbolTable.build(coordinates=("a", "b")), xi=(0, 1, 0), eta=0)
    with pytest.raises(SymmetryError):
        check_symmetry(heat, X)


def test_unknown_catalog():
    with pytest.raises(SymmetryError):
        catalog_generators("twofactor_canonical")


def test_autonomous_modes_rejects_repeated_eigenvalues():
    t, x, y = sp.symbols("t x y", real=True)
    M = sp.Matrix([[1, 0], [0, 1]])
    with pytest.raises(SymmetryError):
        autonomous_modes(M, sp.Matrix([0, 0]), -2, t, (x, y))


def test_translation_modes_of_an_autonomous_drift():
    t, x, y = sp.symbols("t x y", real=True)
    M = sp.Matrix([[2, 1], [0, 3]])
    modes = autonomous_modes(M, sp.Matrix([0, 0]), -2, t, (x, y))
    translations = [m for m in modes if m.kind == "translation"]
    assert [m.eigenvalue for m in translations] == [2, 3]
    assert is_zero(translations[0].xi[0] - sp.exp(t))
    assert translations[0].xi[1] == 0


def test_generators_from_file(tmp_path):
    path = tmp_path / "generators.json"
    path.write_text(
        json.dumps(
            {
                "generators": [
                    {"name": "Tx", "xi_x": "1"},
                    {"name": "Boost", "xi_x": "t", "eta": "-x*u/2"},
                    {"name": "Bad", "xi_x": "x"},
                ]
            }
        )
    )
    heat = catalog("heat2d")
    generators = generators_from_file(path, heat.table)
    assert [g.name for g in generators] == ["Tx", "Boost", "Bad"]
    report = verify_generators(heat, generators)
    assert report.failed == ["Bad"]


def test_generators_from_file_needs_a_list(tmp_path):
    path = tmp_path / "generators.yaml"
    path.write_text("generators: nope\n")
    with pytest.raises(SymmetryError):
        generators_from_file(path, catalog("heat2d").table)


def test_worker_count_is_capped(monkeypatch):
    monkeypatch.setenv("SYMFIN_THREADS", "2")
    assert worker_count(8) == 2
    assert worker_count(None) == 2
    assert worker_count(1) == 1


def test_thread_pool_gives_the_same_verdicts(monkeypatch):
    monkeypatch.setenv("SYMFIN_THREADS", "3")
    pde = catalog("heat2d")
    generators = catalog_generators("heat2d")
    serial = verify_generators(pde, generators, workers=1)
    pooled = verify_generators(pde, generators, workers=3)
    assert [r.verdict for r in serial.reports] == [r.verdict for r in pooled.reports]


def _mode_coefficients(family, coeffs, vector, rate):
    t = sp.Symbol("t", real=True)
    growth = sp.exp(rate * t)
    return GenericCoefficients(
        family=family, time=t, b1=growth * vector[0], b2=growth * vector[1]
    )


def test_twofactor_eigenmode_solves_printed_and_generated_systems():
    # M = [[2, 1], [0, 3]]: e = (1, 0) for 2 and (1, 1) for 3; s = -2
    coeffs = [2, 1, sp.Rational(1, 5), 0, 3, sp.Rational(1, 10)]
    for eigenvalue, vector in [(2, (1, 0)), (3, (1, 1))]:
        c = _mode_coefficients("twofactor", coeffs, vector, sp.Rational(eigenvalue, 2))
        printed = determining_residuals_twofactor(c, coeffs)
        generated = engine_residuals(c, coeffs, SymbolTable())
        extra = supplementary_residuals_twofactor(c, coeffs, SymbolTable())
        assert all(is_zero(r) for r in printed)
        assert all(is_zero(r) for r in generated)
        assert all(is_zero(r) for r in extra)


def test_bs2d_eigenmode_solves_printed_and_generated_systems():
    # M = [[0, 0], [Q1, Q2]] with Q1 = 1/2, Q2 = 2; s = 2
    coeffs = [sp.Rational(11, 10), sp.Rational(1, 2), 2, sp.Rational(1, 5), sp.Rational(1, 20)]
    for eigenvalue, vector in [(0, (2, sp.Rational(-1, 2))), (2, (0, 1))]:
        c = _mode_coefficients("bs2d", coeffs, vector, sp.Rational(-eigenvalue, 2))
        printed = determining_residuals_bs2d(c, coeffs)
        generated = engine_residuals(c, coeffs, SymbolTable())
        extra = supplementary_residuals_bs2d(c, coeffs, SymbolTable())
        assert all(is_zero(r) for r in printed)
        assert all(is_zero(r) for r in generated)
        assert all(is_zero(r) for r in extra)


def test_off_mode_data_violates_the_printed_system():
    coeffs = [2, 1, sp.Rational(1, 5), 0, 3, sp.Rational(1, 10)]
    c = _mode_coefficients("twofactor", coeffs, (1, 0), sp.Rational(1, 3))
    printed = determining_residuals_twofactor(c, coeffs)
    assert not all(is_zero(r) for r in printed)

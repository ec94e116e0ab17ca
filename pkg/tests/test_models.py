import pydantic
import pytest
import sympy as sp

from symfin.expr import SymbolTable, is_zero
from symfin.models import (
    EvolutionPDE,
    JetSpace,
    ModelError,
    apply_transformation,
    bs2d_nonauto_coeffs,
    bs2d_params,
    bs2d_transformation,
    catalog,
    check_inverse,
    compose,
    identity_transformation,
    invert,
    model_from_strings,
    two_factor_nonauto_coeffs,
    two_factor_params,
    two_factor_transformation,
)

MARKET = {
    "sigma1": "1/2",
    "sigma2": "1/5",
    "rho": "3/5",
    "mu1": "1/10",
    "mu2": "1/20",
    "k": "1/20",
}


def test_heat_equations():
    heat = catalog("heat2d")
    assert heat.dimension == 2
    assert heat.is_identity_laplacian()
    assert heat.time_coefficient == -1
    assert catalog("heat1d").dimension == 1


def test_signs_are_stored_as_printed():
    assert catalog("bs2d_canonical").time_coefficient == 2
    assert catalog("twofactor_canonical").time_coefficient == -2
    assert catalog("bs01").time_coefficient == 1
    special = catalog("bs2d_special_nonauto")
    assert special.source == -2 * special.table["k"]


def test_unknown_model_and_parameter():
    with pytest.raises(ModelError):
        catalog("nope")
    with pytest.raises(ModelError):
        catalog("heat2d", {"k": "1"})
    with pytest.raises(ModelError):
        catalog("bs2d_canonical", {"phi1": "1 +"})


def test_unbound_parameters_stay_symbolic():
    pde = catalog("bs2d_canonical", {"phi1": "1"})
    phi2 = pde.table["phi2"]
    assert pde.drift[0] == -1
    assert pde.drift[1] == -phi2


def test_model_from_strings_with_declaration():
    pde = model_from_strings(
        "bs2d_special_nonauto",
        {"Lambda1": "1", "Lambda2": "t", "k": "1/20 + I1"},
        ["I1 := int(t^2)"],
    )
    assert "I1" in pde.table.antiderivatives
    assert sp.diff(pde.source, pde.table.time) == -2 * pde.table.time**2


def test_apply_and_theta_agree():
    heat = catalog("heat2d")
    t, x, y = heat.variables
    assert is_zero(heat.apply(sp.exp(x + t)))
    assert is_zero(heat.apply(sp.exp(x + 2 * y + 5 * t)))
    assert not is_zero(heat.apply(sp.exp(x - t)))
    jets = JetSpace(heat.table)
    theta = heat.theta(jets)
    assert theta == jets.d2(1, 1) + jets.d2(2, 2) - jets.d1(0)


def test_invalid_equations_are_rejected():
    table = SymbolTable()
    x = table.coordinates[0]
    with pytest.raises(pydantic.ValidationError):
        EvolutionPDE(
            name="asymmetric", table=table, diffusion=[[1, x], [0, 1]],
            drift=[0, 0], time_coefficient=1,
        )
    with pytest.raises(pydantic.ValidationError):
        EvolutionPDE(
            name="static", table=table, diffusion=[[1, 0], [0, 1]],
            drift=[0, 0], time_coefficient=0,
        )


def test_correlation_bounds():
    with pytest.raises(ModelError):
        bs2d_params({**MARKET, "rho": "1"})


def test_bs2d_params_without_correlation():
    phi1, phi2 = bs2d_params({**MARKET, "rho": "0"})
    assert phi1 == sp.Rational(1, 2) + sp.Rational(2, 5)
    assert phi2 == (sp.Rational(1, 25) + sp.Rational(1, 10)) * 5


def test_two_factor_params_at_zero_correlation():
    p1, p2, p3, q1, q2, q3 = two_factor_params(
        {"sigma1": 1, "sigma2": "1/2", "rho": 0, "r": "1/20", "kappa": 2, "alpha": 1, "lam": 0}
    )
    assert p1 == 0 and q1 == 0
    assert p2 == 1
    assert p3 == 1 - sp.Rational(1, 10)
    assert q2 == 4


def test_two_factor_params_of_the_unit_market():
    # The pullback fixes p3 = 1 and q2 = 2 here, not the printed p3 = 0, q2 = 1.
    params = two_factor_params(
        {"sigma1": 1, "sigma2": 1, "rho": 0, "r": 0, "kappa": 1, "alpha": "1/10", "lam": "1/10"}
    )
    assert params == (0, 2, 1, 0, 2, 0)


def test_bs2d_transformation_gives_the_canonical_form():
    original = catalog("bs2d_original", MARKET)
    tr = bs2d_transformation(MARKET, original.table)
    assert check_inverse(tr)
    pulled = apply_transformation(original, tr, time_coefficient=2)
    phi1, phi2 = bs2d_params(MARKET)
    target = catalog("bs2d_canonical", {"phi1": phi1, "phi2": phi2, "k": MARKET["k"]})
    assert pulled.is_equivalent(target)


def test_identity_and_inverse_maps():
    pde = catalog("bs2d_canonical")
    same = apply_transformation(pde, identity_transformation(pde.table))
    assert same.is_equivalent(pde)
    original = catalog("bs2d_original", MARKET)
    tr = bs2d_transformation(MARKET, original.table)
    back = invert(tr)
    assert check_inverse(back)
    round_trip = compose(back, tr)
    for expr, symbol in zip(round_trip.inverse, original.variables):
        assert is_zero(expr - symbol)


COMMODITY = {
    "sigma1": "1/2",
    "sigma2": "1/5",
    "rho": "3/5",
    "r": "1/20",
    "kappa": "2",
    "alpha": "1/10",
    "lam": "1/50",
}


def test_two_factor_transformation_gives_the_canonical_form():
    original = catalog("twofactor_original", COMMODITY)
    tr = two_factor_transformation(COMMODITY, original.table)
    assert check_inverse(tr)
    pulled = apply_transformation(original, tr, time_coefficient=-2)
    names = ["p1", "p2", "p3", "q1", "q2", "q3"]
    target = catalog("twofactor_canonical", dict(zip(names, two_factor_params(COMMODITY))))
    assert pulled.is_equivalent(target)


def test_nonautonomous_maps_reduce_to_the_constant_ones():
    commodity = {**COMMODITY, "sigma1": "1"}
    constant = two_factor_params(commodity)
    for a, b in zip(two_factor_nonauto_coeffs(commodity), constant):
        assert is_zero(a - b)
    market = {**MARKET, "sigma1": "1"}
    P1, Q1, Q2, Q3 = bs2d_nonauto_coeffs(market)
    phi1, phi2 = bs2d_params(market)
    assert Q1 == 0 and Q2 == 0
    assert is_zero(P1 - phi1) and is_zero(Q3 - phi2)


def test_nonautonomous_maps_need_unit_sigma1():
    with pytest.raises(ModelError):
        bs2d_nonauto_coeffs(MARKET)


def test_time_dependent_volatility_enters_the_drift_matrix():
    t = sp.Symbol("t", real=True)
    market = {**MARKET, "sigma1": "1", "sigma2": 1 + t}
    _, Q1, Q2, _ = bs2d_nonauto_coeffs(market, t)
    assert Q1 != 0
    assert is_zero(Q2 - 2 / (1 + t))

import numpy as np
import pytest

from symfin.algebra import (
    EXPECTED_LABELS,
    AlgebraClosureError,
    change_basis,
    classify,
    commutator,
    commutator_table,
    commutator_table_json,
    commutator_table_text,
    structure_constants,
)
from symfin.models import EXAMPLE_PARAMS, catalog
from symfin.symmetry import VectorField, catalog_generators


@pytest.mark.parametrize(
    "model_id",
    ["heat1d", "heat2d", "bs2d_canonical", "twofactor_q0", "twofactor_autonomous"],
)
def test_catalog_algebras_are_identified(model_id):
    generators = catalog_generators(model_id, EXAMPLE_PARAMS.get(model_id))
    assert classify(generators) == EXPECTED_LABELS[model_id]


def test_commuting_translations_are_abelian():
    heat = catalog("heat2d")
    dx = VectorField(table=heat.table, xi=(0, 1, 0), eta=0)
    dy = VectorField(table=heat.table, xi=(0, 0, 1), eta=0)
    assert classify([dx, dy]) == "A₁⊕A₁ (abelian)"


def test_commutator_is_antisymmetric():
    by_name = {g.name: g.field for g in catalog_generators("heat2d")}
    X, Y = by_name["X2"], by_name["X7"]
    assert (commutator(X, Y) + commutator(Y, X)).is_zero()


@pytest.mark.parametrize("model_id", ["heat2d", "bs2d_canonical", "twofactor_q0"])
def test_jacobi_identity_on_random_triples(model_id):
    fields = [g.field for g in catalog_generators(model_id, EXAMPLE_PARAMS.get(model_id))]
    rng = np.random.default_rng(7)
    for _ in range(4):
        X, Y, Z = (fields[i] for i in rng.choice(len(fields), size=3, replace=False))
        total = (
            commutator(commutator(X, Y), Z)
            + commutator(commutator(Y, Z), X)
            + commutator(commutator(Z, X), Y)
        )
        assert total.is_zero()


def test_time_translation_and_boost():
    by_name = {g.name: g.field for g in catalog_generators("heat2d")}
    assert (commutator(by_name["X_t"], by_name["X2"]) - by_name["X1"]).is_zero()


def test_closure_failure_names_the_pair():
    heat = catalog("heat2d")
    t = heat.table.time
    dt = VectorField(table=heat.table, xi=(1, 0, 0), eta=0)
    projective = VectorField(table=heat.table, xi=(t**2, 0, 0), eta=0)
    with pytest.raises(AlgebraClosureError) as info:
        structure_constants([dt, projective], ["A", "B"])
    assert info.value.pair == ("A", "B")


def test_change_of_basis_keeps_the_label():
    generators = catalog_generators("heat1d")
    n = len(generators)
    matrix = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    matrix[0][1] = 2
    matrix[3][2] = -1
    changed = change_basis(generators, matrix)
    assert [g.name for g in changed][:2] == ["e1", "e2"]
    assert classify(changed) == EXPECTED_LABELS["heat1d"]


def test_symbolic_constants_are_not_classified():
    generators = catalog_generators("bs2d_canonical")
    assert classify(generators) == "unrecognized"


def test_commutator_tables():
    signature = structure_constants(catalog_generators("heat1d"))
    frame = commutator_table(signature)
    assert list(frame.columns) == signature.names
    assert frame.loc["X_t", "X_t"] == "0"
    assert frame.loc["X_t", "X2"] == "X1"
    text = commutator_table_text(signature)
    assert all(name in text for name in signature.names)
    as_json = commutator_table_json(signature)
    assert as_json["X2"]["X_t"] == "-X1"
    assert signature.dimension == 6

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import klein, test_algebras
from maltsev_csp.algebra import (
    AlgebraError,
    FiniteAlgebra,
    OperationTable,
    affine,
    algebra_from_dict,
    algebra_to_dict,
    bits,
    check_identities,
    discriminator,
    evaluate,
    find_isomorphism,
    generate_subuniverse,
    is_homomorphism,
    majority2,
    mask_from_vector,
    mask_of,
    power,
    quotient,
    restrict,
    vector_from_mask,
)
from maltsev_csp.congruence import Partition, congruence_generated


def test_evaluate_examples():
    assert evaluate(affine(3), "m", (1, 1, 2)) == 2
    assert evaluate(affine(3), "m", (2, 0, 1)) == 0
    assert evaluate(discriminator(3), "t", (0, 1, 2)) == 0


def test_evaluate_errors():
    with pytest.raises(AlgebraError):
        evaluate(affine(3), "q", (0, 0, 0))
    with pytest.raises(AlgebraError):
        evaluate(affine(3), "m", (0, 0))
    with pytest.raises(AlgebraError):
        evaluate(affine(3), "m", (0, 0, 3))


def test_identity_examples():
    assert check_identities(affine(3), "m").is_maltsev
    assert check_identities(affine(3), "m").is_idempotent
    maj = check_identities(majority2(), "maj")
    assert maj.is_idempotent and not maj.is_maltsev
    d3 = check_identities(discriminator(3), "t")
    assert d3.is_idempotent and d3.is_maltsev


def test_maltsev_check_rejects_binary_operation():
    alg = FiniteAlgebra(2, [OperationTable("min", 2, np.minimum(*np.indices((2, 2))), 2)])
    with pytest.raises(AlgebraError):
        check_identities(alg, "min")


@pytest.mark.parametrize("name", sorted(test_algebras()))
def test_identities_match_double_loop(name):
    alg = test_algebras()[name]
    for op in alg.operations:
        if op.arity != 3:
            continue
        expected = all(
            evaluate(alg, op.name, (x, x, y)) == y and evaluate(alg, op.name, (y, x, x)) == y
            for x in range(alg.size) for y in range(alg.size)
        )
        assert check_identities(alg, op.name).is_maltsev == expected


def test_subuniverse_examples():
    z4 = affine(4)
    assert generate_subuniverse(z4, [0, 2]).elements == [0, 2]
    assert generate_subuniverse(z4, [1]).elements == [1]
    assert generate_subuniverse(z4, [0, 1]).elements == [0, 1, 2, 3]
    with pytest.raises(AlgebraError):
        generate_subuniverse(z4, [])


@pytest.mark.parametrize("name", sorted(test_algebras()))
def test_subuniverse_closure_is_idempotent_and_closed(name):
    alg = test_algebras()[name]
    for seed in itertools.chain.from_iterable(
        itertools.combinations(range(alg.size), r) for r in (1, 2)
    ):
        sub = generate_subuniverse(alg, seed)
        assert generate_subuniverse(alg, sub.elements).mask == sub.mask
        assert set(seed) <= set(sub.elements)
        for op in alg.operations:
            for args in itertools.product(sub.elements, repeat=op.arity):
                assert int(op.table[args]) in sub.elements


def test_quotient_of_z4_by_parity_is_xor():
    z4 = affine(4)
    q = quotient(z4, Partition.from_blocks([[0, 2], [1, 3]]))
    assert q.size == 2
    x, y, z = np.indices((2, 2, 2))
    assert (q.operation("m").table == (x ^ y ^ z)).all()


def test_quotient_rejects_incompatible_partition():
    with pytest.raises(AlgebraError):
        quotient(affine(4), Partition.from_blocks([[0, 1], [2, 3]]))


def test_power_and_restrict():
    assert power(affine(2), 2).size == 4
    sub = restrict(affine(4), generate_subuniverse(affine(4), [1, 3]))
    assert sub.size == 2
    assert find_isomorphism(sub, affine(2)) == [0, 1]
    x, y, z = np.indices((2, 2, 2))
    assert (sub.operation("m").table == (x ^ y ^ z)).all()


def test_quotient_twice_equals_coarser_quotient():
    z4 = affine(4)
    zero = congruence_generated(z4, None, [])
    parity = congruence_generated(z4, None, [(0, 2)])
    direct = quotient(z4, parity)
    q1 = quotient(z4, zero)
    # image of the parity congruence in the (isomorphic) discrete quotient
    image = Partition.from_blocks([[0, 2], [1, 3]])
    via = quotient(q1, image)
    assert (via.operation("m").table == direct.operation("m").table).all()
    # parity first, then the image of the full congruence
    full = congruence_generated(z4, None, [(0, 1)])
    assert quotient(direct, Partition.from_blocks([[0, 1]])).size == quotient(z4, full).size == 1


@pytest.mark.parametrize("alg", [power(affine(2), 2), power(affine(3), 2), power(discriminator(2), 3)])
def test_derived_algebras_are_total(alg):
    for op in alg.operations:
        assert op.table.shape == (alg.size,) * op.arity
        assert op.table.min() >= 0 and op.table.max() < alg.size


def test_power_encoding_is_lexicographic():
    sq = power(affine(3), 2)
    assert int(sq.encode(np.array([1, 2]))) == 5
    assert list(sq.decode(5)) == [1, 2]
    # coordinatewise operation
    a, b, c = 5, 0, 7  # (1,2), (0,0), (2,1)
    assert list(sq.decode(evaluate(sq, "m", (a, b, c)))) == [(1 - 0 + 2) % 3, (2 - 0 + 1) % 3]


def test_isomorphism_search():
    assert find_isomorphism(affine(3), affine(3)) is not None
    assert find_isomorphism(affine(4), klein()) is None
    iso = find_isomorphism(klein(), klein())
    assert is_homomorphism(klein(), klein(), iso)


def test_algebra_json_round_trip():
    alg = discriminator(3)
    data = algebra_to_dict(alg)
    assert data["size"] == 3 and data["ops"][0]["arity"] == 3
    # row-major: last argument varies fastest
    assert data["ops"][0]["table"][:3] == [0, 1, 2]
    again = algebra_from_dict(data)
    assert (again.operation("t").table == alg.operation("t").table).all()


@pytest.mark.parametrize("bad", [
    {"size": 2},
    {"size": 0, "ops": []},
    {"size": 2, "ops": [{"name": "m", "arity": 3, "table": [0] * 7}]},
    {"size": 2, "ops": [{"name": "m", "arity": 3, "table": [0.5] * 8}]},
    {"size": 2, "ops": [{"name": "m", "arity": 3, "table": [2] * 8}]},
])
def test_algebra_json_rejects_malformed(bad):
    with pytest.raises(AlgebraError):
        algebra_from_dict(bad)


@given(st.integers(min_value=0, max_value=(1 << 20) - 1))
@settings(max_examples=200, deadline=None)
def test_mask_vector_round_trip(mask):
    vec = vector_from_mask(mask, 20)
    assert mask_from_vector(vec) == mask
    assert bits(mask) == np.flatnonzero(vec).tolist()
    assert mask_of(bits(mask)) == mask

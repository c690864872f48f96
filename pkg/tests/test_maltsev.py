import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import parity_equality, petersen_tseitin
from maltsev_csp.algebra import affine, bits, find_isomorphism, popcount, quotient
from maltsev_csp.congruence import Partition
from maltsev_csp.consistency import BinaryInstance, binarize, enforce_kl_consistency, path_consistency
from maltsev_csp.generators import GeneratorSpec, corpus_specs, generate, gauss_solve
from maltsev_csp.maltsev import (
    PassiveSet,
    TestPair as Pair,
    build_schedule,
    build_test_instance,
    enforce_maltsev_consistency,
    maltsev_check,
    run_pair,
    update_passive,
)
from maltsev_csp.oracle import brute_solve, brute_solve_binary
from maltsev_csp.solver import UNSAT, solve

PARITY = Partition.from_blocks([[0, 2], [1, 3]])


def binary_of(inst):
    b = binarize(inst, 2)
    assert b is not None
    return b


def full_instance(alg, nvars, domains=None):
    names = [f"x{i}" for i in range(nvars)]
    return BinaryInstance.from_constraints(alg, names, domains or [alg.full_mask] * nvars, {})


def test_schedule_on_simple_domains():
    inst = full_instance(affine(3), 3)
    sched = build_schedule(inst)
    assert [(p.var, p.sub) for p in sched] == [(0, 7), (1, 7), (2, 7)]
    assert all(len(p.theta) == 3 for p in sched)


def test_schedule_orders_z4_parity_before_its_blocks():
    sched = build_schedule(full_instance(affine(4), 1))
    keys = [(p.sub, p.theta) for p in sched]
    assert keys.index((15, PARITY)) < keys.index((0b0101, Partition.from_blocks([[0], [2]])))
    assert keys.index((15, PARITY)) < keys.index((0b1010, Partition.from_blocks([[1], [3]])))
    # every pair whose subuniverse sits in a block comes later
    for k, p in enumerate(sched):
        for q in sched[k + 1:]:
            inside = any(p.sub & ~b == 0 for b in q.theta.blocks)
            assert not (inside and p.sub != q.sub)


def test_schedule_skips_singletons():
    assert build_schedule(full_instance(affine(3), 2, [1, 2])) == []


def test_schedule_grows_linearly():
    sizes = [len(build_schedule(full_instance(affine(4), n))) for n in (1, 2, 4, 8)]
    assert sizes == [sizes[0] * n for n in (1, 2, 4, 8)]


def test_parity_equality_test_instance():
    inst = binary_of(parity_equality())
    assert path_consistency(inst)
    test = build_test_instance(inst, Pair(0, 15, PARITY))
    assert test.relevant == [0, 1, 2]
    assert all(Partition(tuple(row)) == PARITY for row in test.blocks)
    q = test.quotient
    for i in range(3):
        for j in range(3):
            assert (q.rel[i, j] == np.eye(2, dtype=bool)).all()


def test_full_product_edge_leaves_only_the_base():
    alg = affine(4)
    inst = full_instance(alg, 3)
    test = build_test_instance(inst, Pair(0, 15, PARITY))
    assert test.relevant == [0]


def test_relevant_quotients_are_isomorphic():
    inst = binary_of(parity_equality())
    path_consistency(inst)
    test = build_test_instance(inst, Pair(1, 15, PARITY), verify=True)
    base = quotient(affine(4), PARITY)
    for r in range(len(test.relevant)):
        assert find_isomorphism(quotient(affine(4), test.alpha(r)), base) is not None


def test_parity_equality_keeps_both_blocks():
    inst = binary_of(parity_equality())
    path_consistency(inst)
    out = run_pair(inst, Pair(0, 15, PARITY))
    assert out.removed == []
    assert len(out.strands) == 2
    assert sorted(s.masks[0] for s in out.strands) == [0b0101, 0b1010]
    for s in out.strands:
        assert len(set(s.masks)) == 1


def test_odd_block_swap_cycle_removes_both_blocks():
    # three odd differences cannot sum to 0 mod 4
    odd = parity_equality(odd=True)
    assert brute_solve(odd).count == 0
    rel = np.array([[(a - b) % 2 == 1 for b in range(4)] for a in range(4)])
    inst = BinaryInstance.from_constraints(affine(4), odd.variables, [15] * 3,
                                           {(0, 1): rel, (1, 2): rel, (2, 0): rel})
    out = run_pair(inst, Pair(0, 15, PARITY))
    assert sorted(out.cyclic_removed) == [0b0101, 0b1010]
    assert not enforce_maltsev_consistency(inst).consistent
    assert solve(odd).status == UNSAT


def test_singleton_blocks_reduce_to_one_consistency():
    alg = affine(3)
    eq = np.eye(3, dtype=bool)
    inst = BinaryInstance.from_constraints(alg, ["x", "y"], [7, 7], {(0, 1): eq})
    out = run_pair(inst, Pair(0, 7, Partition.from_blocks([[0], [1], [2]])))
    assert out.removed == []
    assert [s.masks for s in out.strands] == [[1, 1], [2, 2], [4, 4]]


def test_consistent_instance_is_a_fixpoint():
    inst = binary_of(parity_equality())
    path_consistency(inst)
    res = enforce_maltsev_consistency(inst)
    assert res.consistent
    assert res.instance.domains() == inst.domains()
    assert len(res.passive) > 0
    assert maltsev_check(inst)


def passive_for(inst):
    out = run_pair(inst, Pair(0, 15, PARITY))
    passive = PassiveSet()
    passive.admit(out)
    return passive


def test_update_passive_disjoint_reduction():
    alg = affine(4)
    names = ["x", "y", "z"]
    rel = np.array([[(a - b) % 2 == 0 for b in range(4)] for a in range(4)])
    inst = BinaryInstance.from_constraints(alg, names, [15] * 3, {(0, 1): rel})
    passive = passive_for(inst)
    before = [list(m.masks) for m in passive.members[Pair(0, 15, PARITY).key()]]
    assert [len(b) for b in before] == [2, 2]
    inst.restrict_domain(2, 0b0011)
    update_passive(passive, inst)
    after = passive.members[Pair(0, 15, PARITY).key()]
    assert [m.masks for m in after] == before
    assert not any(m.dirty for m in after)


def test_update_passive_drops_and_rechecks():
    inst = binary_of(parity_equality())
    path_consistency(inst)
    passive = passive_for(inst)
    key = Pair(0, 15, PARITY).key()
    # drop the odd block at x, shrink the even block at y to {0}
    inst.restrict_domain(0, 0b0101)
    inst.restrict_domain(1, 0b0001)
    path_consistency(inst)
    update_passive(passive, inst)
    members = passive.members[key]
    assert len(members) == 1 and members[0].dirty
    assert passive.survivors(inst, Pair(0, 15, PARITY)) == [0b0101]
    assert not members[0].dirty
    assert members[0].masks == [0b0101, 0b0001, 0b0101]


def preserved(inst_csp) -> bool:
    binst = binarize(inst_csp, inst_csp.max_arity)
    if binst is None or not path_consistency(binst):
        return brute_solve(inst_csp).count == 0
    before = brute_solve_binary(binst).solution_set(binst.variables)
    res = enforce_maltsev_consistency(binst, verify=True)
    after = set() if not res.consistent else brute_solve_binary(res.instance).solution_set(binst.variables)
    assert not res.diagnostics, [d.as_dict() for d in res.diagnostics]
    assert res.max_depth < binst.max_domain()
    return before == after


@pytest.mark.parametrize("spec", corpus_specs(60, seed=7), ids=lambda s: f"{s.kind}-{s.seed}")
def test_solution_sets_are_preserved(spec):
    _, inst = generate(spec)
    assert preserved(inst)


@given(st.sampled_from(["linsys", "affine-z4", "discriminator"]), st.integers(2, 5),
       st.integers(1, 6), st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_solution_sets_are_preserved_random(kind, nvars, ncons, seed):
    spec = GeneratorSpec(kind, nvars, ncons, 4 if kind == "affine-z4" else 2, 2, seed=seed)
    _, inst = generate(spec)
    assert preserved(inst)


def test_strand_mode_is_validated():
    inst = binary_of(parity_equality())
    with pytest.raises(ValueError):
        enforce_maltsev_consistency(inst, strands="nearby")


@pytest.fixture(scope="module")
def petersen():
    return petersen_tseitin()


def test_petersen_survives_local_consistency(petersen):
    fam = enforce_kl_consistency(petersen, 4, 6)
    assert fam is not None
    b = binarize(petersen, 3, fam)
    assert path_consistency(b)


def test_petersen_extended_strands_refute_at_consistency(petersen):
    res = solve(petersen, strands="extended")
    assert res.status == UNSAT and res.backtracks == 0
    assert res.trace[-1]["stage"] == "maltsev-consistency"

"""Decision procedures for simple idempotent algebras.

These back diagnostics and tests; the solver never branches on the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import AlgebraError, FiniteAlgebra, is_idempotent, maltsev_operation, power
from .congruence import StructuralViolation, all_congruences, congruence_generated, is_simple


@dataclass(frozen=True)
class AbsorbingElement:
    element: int


@dataclass(frozen=True)
class Abelian:
    pass


@dataclass(frozen=True)
class SkewFree:
    pass


SimpleClass = AbsorbingElement | Abelian | SkewFree


def _depends_on(table: np.ndarray, axis: int) -> bool:
    first = np.take(table, [0], axis=axis)
    return bool((table != first).any())


def find_absorbing_element(alg: FiniteAlgebra) -> int | None:
    """An element absorbing every basic operation at every essential position.

    Checking basic operations suffices: absorption at essential positions is
    inherited by every term built from them.
    """
    for cand in range(alg.size):
        essential = False
        ok = True
        for op in alg.operations:
            for axis in range(op.arity):
                if not _depends_on(op.table, axis):
                    continue
                essential = True
                if not (np.take(op.table, cand, axis=axis) == cand).all():
                    ok = False
                    break
            if not ok:
                break
        if ok and essential:
            return cand
    return None


def _require_maltsev(alg: FiniteAlgebra) -> None:
    if maltsev_operation(alg) is None:
        raise AlgebraError("the diagonal criterion needs a Maltsev operation")


def is_abelian(alg: FiniteAlgebra) -> bool:
    """Diagonal of A^2 is a block of the congruence generated by diagonal pairs."""
    _require_maltsev(alg)
    n = alg.size
    sq = power(alg, 2)
    diag = [a * n + a for a in range(n)]
    delta = congruence_generated(sq, None, [(diag[0], d) for d in diag[1:]])
    diag_mask = sum(1 << d for d in diag)
    block = delta.partition.block_of(diag[0])
    return block == diag_mask


def is_skew_free(alg: FiniteAlgebra) -> bool:
    """Con(A^2) is exactly {0, ker pi_1, ker pi_2, 1}."""
    if alg.size < 2 or not is_simple(alg):
        raise AlgebraError("skew-freeness is only decided for simple algebras")
    return len(all_congruences(power(alg, 2))) == 4


def classify_simple(alg: FiniteAlgebra) -> SimpleClass:
    if not is_idempotent(alg):
        raise AlgebraError("classification needs an idempotent algebra")
    if not is_simple(alg):
        raise AlgebraError("classification needs a simple algebra")
    absorbing = find_absorbing_element(alg)
    has_maltsev = maltsev_operation(alg) is not None
    if absorbing is not None:
        if has_maltsev:
            raise StructuralViolation("Maltsev algebra with an absorbing element", element=absorbing)
        return AbsorbingElement(absorbing)
    abelian = is_abelian(alg)
    skew_free = is_skew_free(alg)
    if abelian and skew_free:
        raise StructuralViolation("algebra is both Abelian and skew-free")
    if not (abelian or skew_free):
        raise StructuralViolation("simple Maltsev algebra is neither Abelian nor skew-free")
    return Abelian() if abelian else SkewFree()


def class_name(cls: SimpleClass) -> str:
    if isinstance(cls, AbsorbingElement):
        return "absorbing"
    if isinstance(cls, Abelian):
        return "abelian"
    return "skew-free"

"""Partitions, congruences and binary subdirect products."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .algebra import AlgebraError, FiniteAlgebra, bits, maltsev_operation, mask_of, popcount


class StructuralViolation(RuntimeError):
    """An input contradicts a structure theorem it was claimed to satisfy."""

    def __init__(self, message: str, **detail):
        super().__init__(message)
        self.detail = detail


@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty blocks (bitmasks) in canonical order by minimum."""

    blocks: tuple[int, ...]

    def __post_init__(self):
        seen = 0
        for b in self.blocks:
            if b == 0 or b & seen:
                raise ValueError("partition blocks must be nonempty and disjoint")
            seen |= b
        ordered = tuple(sorted(self.blocks, key=lambda b: (b & -b)))
        object.__setattr__(self, "blocks", ordered)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]]) -> "Partition":
        return cls(tuple(mask_of(b) for b in blocks))

    @classmethod
    def from_labels(cls, elements: Iterable[int], labels: Iterable[int]) -> "Partition":
        groups: dict[int, int] = {}
        for e, lab in zip(elements, labels):
            groups[int(lab)] = groups.get(int(lab), 0) | (1 << int(e))
        return cls(tuple(groups.values()))

    @classmethod
    def discrete(cls, carrier: int) -> "Partition":
        return cls(tuple(1 << e for e in bits(carrier)))

    @classmethod
    def full(cls, carrier: int) -> "Partition":
        return cls((carrier,))

    @property
    def carrier(self) -> int:
        out = 0
        for b in self.blocks:
            out |= b
        return out

    def __len__(self) -> int:
        return len(self.blocks)

    def is_discrete(self) -> bool:
        return all(b & (b - 1) == 0 for b in self.blocks)

    def is_full(self) -> bool:
        return len(self.blocks) == 1

    def block_of(self, element: int) -> int:
        for b in self.blocks:
            if b >> element & 1:
                return b
        raise KeyError(element)

    def label_array(self, size: int) -> np.ndarray:
        """Block index per element of ``0..size-1``; -1 off the carrier."""
        labels = np.full(size, -1, dtype=np.int64)
        for i, b in enumerate(self.blocks):
            labels[bits(b)] = i
        return labels

    def refines(self, other: "Partition") -> bool:
        return all(any(b & ~o == 0 for o in other.blocks) for b in self.blocks)

    def to_lists(self) -> list[list[int]]:
        return [bits(b) for b in self.blocks]

    def key(self) -> tuple:
        return tuple(tuple(bits(b)) for b in self.blocks)

    def __repr__(self) -> str:
        return f"Partition({self.to_lists()})"


@dataclass(frozen=True)
class Congruence:
    algebra: FiniteAlgebra
    partition: Partition
    verify: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.verify and not is_compatible(self.algebra, self.partition):
            raise AlgebraError(f"{self.partition} is not a congruence")

    @property
    def blocks(self) -> tuple[int, ...]:
        return self.partition.blocks

    @property
    def carrier(self) -> int:
        return self.partition.carrier


@dataclass(frozen=True)
class BinaryRelation:
    left: int
    right: int
    pairs: frozenset

    @classmethod
    def of(cls, pairs: Iterable[tuple[int, int]], left: int | None = None, right: int | None = None):
        pairs = frozenset((int(a), int(b)) for a, b in pairs)
        if left is None:
            left = mask_of(a for a, _ in pairs)
        if right is None:
            right = mask_of(b for _, b in pairs)
        return cls(left, right, pairs)

    def __post_init__(self):
        for a, b in self.pairs:
            if not (self.left >> a & 1 and self.right >> b & 1):
                raise ValueError(f"pair {(a, b)} outside the carriers")

    def is_subdirect(self) -> bool:
        return (
            mask_of(a for a, _ in self.pairs) == self.left
            and mask_of(b for _, b in self.pairs) == self.right
        )

    def converse(self) -> "BinaryRelation":
        return BinaryRelation(self.right, self.left, frozenset((b, a) for a, b in self.pairs))


# -- compatibility and generation -------------------------------------------


def _local(alg: FiniteAlgebra, carrier: int) -> tuple[FiniteAlgebra, list[int]]:
    """The subalgebra on ``carrier`` and its elements in ``alg``'s numbering."""
    if carrier == alg.full_mask:
        return alg, list(range(alg.size))
    sub = alg.restrict(carrier)
    return sub, list(sub.elements)


def is_compatible(alg: FiniteAlgebra, partition: Partition) -> bool:
    """Exhaustive check that every basic operation respects ``partition``.

    The carrier must be a subuniverse of ``alg``.
    """
    carrier = partition.carrier
    if not alg.is_closed(carrier):
        return False
    sub, elements = _local(alg, carrier)
    labels = partition.label_array(alg.size)[elements]
    reps = np.array([elements.index(bits(b)[0]) for b in partition.blocks], dtype=np.int64)[labels]
    for op in sub.operations:
        out = labels[op.table]
        for axis in range(op.arity):
            if not (out == np.take(out, reps, axis=axis)).all():
                return False
    return True


def _axis_slices(sub: FiniteAlgebra) -> list[np.ndarray]:
    """Per operation and argument position, row ``a`` lists the outputs with ``a`` there."""
    def compute():
        out = []
        for op in sub.operations:
            for axis in range(op.arity):
                out.append(np.ascontiguousarray(np.moveaxis(op.table, axis, 0).reshape(sub.size, -1)))
        return out

    return sub.memo(("axis-slices",), compute)


def _cg_local(sub: FiniteAlgebra, pairs: Iterable[tuple[int, int]]) -> np.ndarray:
    """Least congruence of ``sub`` (local indices) containing ``pairs``; labels."""
    parent = list(range(sub.size))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    n = sub.size
    slices = _axis_slices(sub)
    queue = [(int(a), int(b)) for a, b in pairs]
    while queue:
        a, b = queue.pop()
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        parent[max(ra, rb)] = min(ra, rb)
        # only merging pairs need translating: they generate the equivalence
        for flat in slices:
            ta, tb = flat[a], flat[b]
            diff = ta != tb
            if diff.any():
                codes = np.unique(ta[diff] * n + tb[diff])
                queue.extend(zip((codes // n).tolist(), (codes % n).tolist()))
    return np.array([find(i) for i in range(sub.size)], dtype=np.int64)


def congruence_generated(
    alg: FiniteAlgebra, carrier: int | None = None, pairs: Iterable[tuple[int, int]] = ()
) -> Congruence:
    """Least congruence on the subalgebra ``carrier`` containing ``pairs``."""
    if carrier is None:
        carrier = alg.full_mask
    if not alg.is_closed(carrier):
        raise AlgebraError("carrier is not a subuniverse")
    sub, elements = _local(alg, carrier)
    local_pairs = []
    for a, b in pairs:
        if not (carrier >> a & 1 and carrier >> b & 1):
            raise AlgebraError(f"pair {(a, b)} outside the carrier")
        local_pairs.append((elements.index(a), elements.index(b)))
    labels = _cg_local(sub, local_pairs)
    return Congruence(alg, Partition.from_labels(elements, labels))


def _canonical_labels(labels: np.ndarray) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(int(v), len(seen)) for v in labels)


def _join_labels(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    parent = list(range(len(a)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for labels in (a, b):
        first: dict[int, int] = {}
        for i, lab in enumerate(labels):
            j = first.setdefault(lab, i)
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    return _canonical_labels(np.array([find(i) for i in range(len(a))]))


def _all_congruence_labels(sub: FiniteAlgebra) -> list[tuple[int, ...]]:
    n = sub.size
    zero = tuple(range(n))
    principal = set()
    for a in range(n):
        for b in range(a + 1, n):
            principal.add(_canonical_labels(_cg_local(sub, [(a, b)])))
    found = {zero} | principal
    frontier = list(principal)
    # join-closure; joins of congruences are plain equivalence joins
    while frontier:
        nxt = []
        for c in frontier:
            for p in principal:
                j = _join_labels(c, p)
                if j not in found:
                    found.add(j)
                    nxt.append(j)
        frontier = nxt
    return list(found)


def all_congruences(alg: FiniteAlgebra, carrier: int | None = None) -> list[Congruence]:
    """Every congruence of the subalgebra on ``carrier``, in canonical order."""
    if carrier is None:
        carrier = alg.full_mask

    if not alg.is_closed(carrier):
        raise AlgebraError("carrier is not a subuniverse")

    def compute():
        sub, elements = _local(alg, carrier)
        parts = [Partition.from_labels(elements, lab) for lab in _all_congruence_labels(sub)]
        parts.sort(key=lambda p: (-len(p), p.key()))
        return [Congruence(alg, p, verify=False) for p in parts]

    return list(alg.memo(("congruences", carrier), compute))


def congruence_partitions(alg: FiniteAlgebra, carrier: int | None = None) -> list[Partition]:
    return [c.partition for c in all_congruences(alg, carrier)]


def maximal_congruences(alg: FiniteAlgebra, carrier: int | None = None) -> list[Congruence]:
    """Coatoms of the congruence lattice, canonical partition order."""
    if carrier is None:
        carrier = alg.full_mask

    def compute():
        proper = [c for c in all_congruences(alg, carrier) if not c.partition.is_full()]
        maximal = [
            c for c in proper
            if not any(d is not c and c.partition.refines(d.partition) and d.partition != c.partition
                       for d in proper)
        ]
        return sorted(maximal, key=lambda c: c.partition.key())

    return alg.memo(("maximal", carrier), compute)


def is_simple(alg: FiniteAlgebra, carrier: int | None = None) -> bool:
    if carrier is None:
        carrier = alg.full_mask
    if popcount(carrier) < 2:
        return False
    return len(all_congruences(alg, carrier)) == 2


# -- binary subdirect products ---------------------------------------------


def _relation_invariant(rel: BinaryRelation, alg_a: FiniteAlgebra, alg_b: FiniteAlgebra) -> bool:
    if alg_a.signature != alg_b.signature:
        raise AlgebraError("algebras have different signatures")
    pairs = np.array(sorted(rel.pairs), dtype=np.int64)
    member = np.zeros((alg_a.size, alg_b.size), dtype=bool)
    member[pairs[:, 0], pairs[:, 1]] = True
    idx = np.arange(len(pairs))
    for i, arity in enumerate(alg_a.arities):
        grids = np.meshgrid(*([idx] * arity), indexing="ij")
        left = alg_a.apply(i, [pairs[g, 0] for g in grids])
        right = alg_b.apply(i, [pairs[g, 1] for g in grids])
        if not member[left, right].all():
            return False
    return True


def _linked_labels(rel: BinaryRelation):
    """Connected components of the bipartite graph of ``rel``."""
    left, right = bits(rel.left), bits(rel.right)
    nodes = [("L", a) for a in left] + [("R", b) for b in right]
    index = {n: i for i, n in enumerate(nodes)}
    parent = list(range(len(nodes)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in sorted(rel.pairs):
        ra, rb = find(index[("L", a)]), find(index[("R", b)])
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    lab_left = [find(index[("L", a)]) for a in left]
    lab_right = [find(index[("R", b)]) for b in right]
    return left, lab_left, right, lab_right


def linkedness(
    rel: BinaryRelation, alg_a: FiniteAlgebra, alg_b: FiniteAlgebra, validate: bool = True
) -> tuple[Congruence, Congruence]:
    """Linkedness congruences of a subdirect product on its two carriers.

    ``a ~ a'`` when some ``b`` is related to both, closed transitively; dually
    on the right.
    """
    if not rel.is_subdirect():
        raise AlgebraError("relation is not subdirect on its carriers")
    if validate:
        for alg, carrier, side in ((alg_a, rel.left, "left"), (alg_b, rel.right, "right")):
            if not alg.is_closed(carrier):
                raise AlgebraError(f"{side} carrier is not a subuniverse")
        if not _relation_invariant(rel, alg_a, alg_b):
            raise AlgebraError("relation is not invariant under the operations")
    left, lab_left, right, lab_right = _linked_labels(rel)
    alpha = Congruence(alg_a, Partition.from_labels(left, lab_left))
    beta = Congruence(alg_b, Partition.from_labels(right, lab_right))
    return alpha, beta


@dataclass(frozen=True)
class FullProduct:
    pass


@dataclass(frozen=True)
class Isomorphism:
    mapping: tuple[tuple[int, int], ...]

    def as_dict(self) -> dict[int, int]:
        return dict(self.mapping)


@dataclass(frozen=True)
class Linked:
    alpha: Congruence
    beta: Congruence


def classify_subdirect(rel: BinaryRelation, alg_a: FiniteAlgebra, alg_b: FiniteAlgebra, validate: bool = True):
    alpha, beta = linkedness(rel, alg_a, alg_b, validate=validate)
    if alpha.partition.is_full() and beta.partition.is_full():
        if len(rel.pairs) == popcount(rel.left) * popcount(rel.right):
            return FullProduct()
    if alpha.partition.is_discrete() and beta.partition.is_discrete():
        # each component is a single edge, so the relation is a bijection graph
        return Isomorphism(tuple(sorted(rel.pairs)))
    if (
        is_simple(alg_a, rel.left)
        and is_simple(alg_b, rel.right)
        and maltsev_operation(alg_a.restrict(rel.left)) is not None
        and maltsev_operation(alg_b.restrict(rel.right)) is not None
    ):
        raise StructuralViolation(
            "subdirect product of simple Maltsev algebras is neither full nor an isomorphism graph",
            alpha=alpha.partition.to_lists(),
            beta=beta.partition.to_lists(),
        )
    return Linked(alpha, beta)

"""Finite algebras given by explicit operation tables.

Elements of an algebra of size ``n`` are the integers ``0..n-1``.  Sets of
elements are passed around as Python ``int`` bitmasks (bit ``i`` set means
element ``i`` is present); see :func:`bits` and :func:`mask_of`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class AlgebraError(ValueError):
    pass


def bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def mask_of(elements: Iterable[int]) -> int:
    mask = 0
    for e in elements:
        mask |= 1 << int(e)
    return mask


def mask_from_vector(vec: np.ndarray) -> int:
    return int.from_bytes(np.packbits(np.asarray(vec, dtype=bool), bitorder="little").tobytes(), "little")


def vector_from_mask(mask: int, size: int) -> np.ndarray:
    raw = np.frombuffer(mask.to_bytes((size + 7) // 8 or 1, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:size].astype(bool)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


class OperationTable:
    """A total operation ``{0..n-1}^arity -> {0..n-1}`` stored as an ndarray."""

    def __init__(self, name: str, arity: int, table, size: int | None = None):
        if arity < 1:
            raise AlgebraError(f"operation {name!r}: arity must be positive")
        arr = np.asarray(table, dtype=np.int64)
        if size is None:
            size = round(arr.size ** (1.0 / arity))
        shape = (size,) * arity
        if arr.size != size**arity:
            raise AlgebraError(
                f"operation {name!r}: table has {arr.size} entries, expected {size ** arity}"
            )
        arr = arr.reshape(shape)
        if arr.size and (arr.min() < 0 or arr.max() >= size):
            raise AlgebraError(f"operation {name!r}: output out of range")
        arr.setflags(write=False)
        self.name = name
        self.arity = arity
        self.size = size
        self.table = arr

    def __call__(self, *args: int) -> int:
        return int(self.table[args])

    def flat(self) -> list[int]:
        return self.table.ravel().tolist()

    def __repr__(self) -> str:
        return f"OperationTable({self.name!r}, arity={self.arity}, size={self.size})"


class FiniteAlgebra:
    """An algebra ``(A, F)`` on ``{0..size-1}`` with named basic operations.

    Derived structure (closures, restrictions, congruences) is memoised on the
    instance, so algebras must be treated as immutable once built.
    """

    def __init__(self, size: int, operations: Sequence[OperationTable], name: str = ""):
        if size < 1:
            raise AlgebraError("algebra size must be positive")
        if not operations:
            raise AlgebraError("an algebra needs at least one operation")
        names = [op.name for op in operations]
        if len(set(names)) != len(names):
            raise AlgebraError(f"duplicate operation names in {names}")
        for op in operations:
            if op.size != size:
                raise AlgebraError(f"operation {op.name!r} has size {op.size}, expected {size}")
        self.size = size
        self._ops = tuple(operations)
        self.name = name
        self._cache: dict = {}

    @property
    def operations(self) -> tuple[OperationTable, ...]:
        return self._ops

    @property
    def signature(self) -> tuple[tuple[str, int], ...]:
        return tuple((op.name, op.arity) for op in self.operations)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(a for _, a in self.signature)

    @property
    def full_mask(self) -> int:
        return (1 << self.size) - 1

    def operation(self, name: str) -> OperationTable:
        for op in self.operations:
            if op.name == name:
                return op
        raise AlgebraError(f"unknown operation {name!r}")

    def op_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.signature):
            if n == name:
                return i
        raise AlgebraError(f"unknown operation {name!r}")

    def apply(self, index: int, args: Sequence[np.ndarray]) -> np.ndarray:
        """Vectorised, unchecked application of the ``index``-th operation."""
        return self._ops[index].table[tuple(args)]

    def __repr__(self) -> str:
        label = f"{self.name}, " if self.name else ""
        return f"FiniteAlgebra({label}size={self.size}, ops={[n for n, _ in self.signature]})"

    # -- memoised structure -------------------------------------------------

    def memo(self, key, compute):
        try:
            return self._cache[key]
        except KeyError:
            value = self._cache[key] = compute()
            return value

    def closure(self, mask: int) -> int:
        """Least subuniverse containing ``mask``."""
        if mask == 0:
            raise AlgebraError("cannot generate a subuniverse from an empty seed")
        return self.memo(("closure", mask), lambda: _closure(self, mask))

    def is_closed(self, mask: int) -> bool:
        return mask != 0 and self.closure(mask) == mask

    def restrict(self, mask: int) -> "SubAlgebra":
        return self.memo(("restrict", mask), lambda: SubAlgebra(self, mask))

    def subuniverses_within(self, mask: int) -> list[int]:
        """All subuniverses contained in ``mask``, largest first then by bits."""
        return self.memo(("subuniverses", mask), lambda: _subuniverses_within(self, mask))


def _closure(alg: FiniteAlgebra, mask: int) -> int:
    current = mask
    while True:
        elems = np.array(bits(current), dtype=np.int64)
        new = current
        for i, arity in enumerate(alg.arities):
            grids = np.meshgrid(*([elems] * arity), indexing="ij")
            out = alg.apply(i, grids)
            new |= mask_of(np.unique(out).tolist())
        if new == current:
            return current
        current = new


def _subuniverses_within(alg: FiniteAlgebra, mask: int) -> list[int]:
    found: set[int] = set()
    frontier = []
    for e in bits(mask):
        sub = alg.closure(1 << e)
        if sub & ~mask == 0 and sub not in found:
            found.add(sub)
            frontier.append(sub)
    while frontier:
        nxt = []
        for sub in frontier:
            for e in bits(mask & ~sub):
                bigger = alg.closure(sub | (1 << e))
                if bigger & ~mask == 0 and bigger not in found:
                    found.add(bigger)
                    nxt.append(bigger)
        frontier = nxt
    return sorted(found, key=lambda m: (-popcount(m), bits(m)))


class SubAlgebra(FiniteAlgebra):
    """The subalgebra on a closed subset, re-indexed in ascending order.

    ``elements[i]`` is the parent element with local index ``i``.
    """

    def __init__(self, parent: FiniteAlgebra, mask: int):
        elements = bits(mask)
        if not elements:
            raise AlgebraError("cannot restrict to an empty set")
        lookup = np.full(parent.size, -1, dtype=np.int64)
        lookup[elements] = np.arange(len(elements))
        elems = np.array(elements, dtype=np.int64)
        ops = []
        for i, (name, arity) in enumerate(parent.signature):
            grids = np.meshgrid(*([elems] * arity), indexing="ij")
            local = lookup[parent.apply(i, grids)]
            if (local < 0).any():
                raise AlgebraError(f"set {elements} is not closed under {name!r}")
            ops.append(OperationTable(name, arity, local, size=len(elements)))
        super().__init__(len(elements), ops, name=f"{parent.name}|{elements}")
        self.parent = parent
        self.mask = mask
        self.elements = tuple(elements)
        self.lookup = lookup

    def to_local(self, mask: int) -> int:
        return mask_of(self.lookup[bits(mask)].tolist())

    def to_parent(self, local_mask: int) -> int:
        return mask_of(self.elements[i] for i in bits(local_mask))


class PowerAlgebra(FiniteAlgebra):
    """``base ** exponent`` with coordinatewise operations.

    Tuples are indexed lexicographically: ``(a_1..a_k)`` has index
    ``sum(a_i * n**(k-i))``.  Full tables are only materialised on demand and
    only for exponents up to 3; larger powers evaluate coordinatewise.
    """

    MATERIALIZE_UP_TO = 3

    def __init__(self, base: FiniteAlgebra, exponent: int):
        if exponent < 1:
            raise AlgebraError("exponent must be positive")
        self.base = base
        self.exponent = exponent
        self.size = base.size**exponent
        self.name = f"{base.name}^{exponent}"
        self._ops = None
        self._weights = base.size ** np.arange(exponent - 1, -1, -1, dtype=np.int64)
        self._cache = {}

    @property
    def signature(self):
        return self.base.signature

    @property
    def operations(self) -> tuple[OperationTable, ...]:
        if self._ops is None:
            if self.exponent > self.MATERIALIZE_UP_TO:
                raise AlgebraError("refusing to materialise tables for exponent > 3")
            ops = []
            everything = np.arange(self.size)
            for i, (name, arity) in enumerate(self.signature):
                grids = np.meshgrid(*([everything] * arity), indexing="ij")
                ops.append(OperationTable(name, arity, self._apply_coordinatewise(i, grids), self.size))
            self._ops = tuple(ops)
        return self._ops

    def decode(self, index) -> np.ndarray:
        """Coordinates of tuple indices; trailing axis has length ``exponent``."""
        index = np.asarray(index, dtype=np.int64)
        return (index[..., None] // self._weights) % self.base.size

    def encode(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=np.int64) @ self._weights

    def _apply_coordinatewise(self, index: int, args: Sequence[np.ndarray]) -> np.ndarray:
        decoded = [self.decode(a) for a in args]
        out = self.base.apply(index, decoded)
        return self.encode(out)

    def apply(self, index: int, args: Sequence[np.ndarray]) -> np.ndarray:
        if self._ops is not None:
            return self._ops[index].table[tuple(args)]
        return self._apply_coordinatewise(index, args)


@dataclass(frozen=True)
class Subuniverse:
    algebra: FiniteAlgebra
    mask: int

    @property
    def elements(self) -> list[int]:
        return bits(self.mask)

    def __len__(self) -> int:
        return popcount(self.mask)


def _check_element(alg: FiniteAlgebra, e) -> int:
    if not isinstance(e, (int, np.integer)) or not 0 <= e < alg.size:
        raise AlgebraError(f"element {e!r} out of range for size {alg.size}")
    return int(e)


def evaluate(alg: FiniteAlgebra, op: str, args: Sequence[int]) -> int:
    index = alg.op_index(op)
    arity = alg.arities[index]
    if len(args) != arity:
        raise AlgebraError(f"operation {op!r} has arity {arity}, got {len(args)} arguments")
    checked = [np.int64(_check_element(alg, a)) for a in args]
    return int(alg.apply(index, checked))


@dataclass(frozen=True)
class Identities:
    is_idempotent: bool
    is_maltsev: bool


def check_identities(alg: FiniteAlgebra, op: str) -> Identities:
    """Idempotence of ``op`` and, for ternary ``op``, the Maltsev identities.

    Raises AlgebraError for a non-ternary operation since the Maltsev check is
    undefined there.
    """
    table = alg.operation(op).table
    if table.ndim != 3:
        raise AlgebraError(f"Maltsev check needs a ternary operation, {op!r} has arity {table.ndim}")
    n = alg.size
    diag = table[(np.arange(n),) * 3]
    x = np.arange(n)[:, None]
    y = np.arange(n)[None, :]
    maltsev = bool((table[x, x, y] == y).all() and (table[y, x, x] == y).all())
    return Identities(is_idempotent=bool((diag == np.arange(n)).all()), is_maltsev=maltsev)


def is_idempotent(alg: FiniteAlgebra) -> bool:
    n = np.arange(alg.size)
    return all((op.table[(n,) * op.arity] == n).all() for op in alg.operations)


def maltsev_operation(alg: FiniteAlgebra) -> str | None:
    """Name of the first ternary basic operation satisfying the Maltsev identities."""
    for name, arity in alg.signature:
        if arity == 3 and check_identities(alg, name).is_maltsev:
            return name
    return None


def generate_subuniverse(alg: FiniteAlgebra, seed: Iterable[int]) -> Subuniverse:
    seed = list(seed)
    if not seed:
        raise AlgebraError("cannot generate a subuniverse from an empty seed")
    mask = mask_of(_check_element(alg, e) for e in seed)
    return Subuniverse(alg, alg.closure(mask))


def power(alg: FiniteAlgebra, k: int) -> FiniteAlgebra:
    if k == 1:
        return alg
    return PowerAlgebra(alg, k)


def restrict(alg: FiniteAlgebra, sub: Subuniverse | int) -> SubAlgebra:
    mask = sub.mask if isinstance(sub, Subuniverse) else sub
    return alg.restrict(mask)


def quotient(alg: FiniteAlgebra, cong) -> FiniteAlgebra:
    """Quotient by a congruence whose carrier is a subuniverse of ``alg``.

    Blocks are numbered in canonical order (by minimum element).  The
    congruence is re-verified, so an incompatible partition is rejected.
    """
    from .congruence import Congruence, Partition, is_compatible

    partition = cong.partition if isinstance(cong, Congruence) else cong
    if not isinstance(partition, Partition):
        partition = Partition.from_blocks(partition)
    if not is_compatible(alg, partition):
        raise AlgebraError("partition is not a congruence")
    labels = partition.label_array(alg.size)
    reps = np.array([bits(b)[0] for b in partition.blocks], dtype=np.int64)
    ops = []
    for i, (name, arity) in enumerate(alg.signature):
        grids = np.meshgrid(*([reps] * arity), indexing="ij")
        ops.append(OperationTable(name, arity, labels[alg.apply(i, grids)], size=len(reps)))
    return FiniteAlgebra(len(reps), ops, name=f"{alg.name}/~")


def find_isomorphism(a: FiniteAlgebra, b: FiniteAlgebra) -> list[int] | None:
    """Backtracking search for an isomorphism ``a -> b`` (as an image list)."""
    if a.size != b.size or a.signature != b.signature:
        return None
    n = a.size
    tables_a = [op.table for op in a.operations]
    tables_b = [op.table for op in b.operations]
    image = [-1] * n
    used = [False] * n

    def consistent(upto: int) -> bool:
        assigned = np.arange(upto)
        img = np.array(image, dtype=np.int64)
        taken = np.array(used)
        for ta, tb in zip(tables_a, tables_b):
            grids = np.meshgrid(*([assigned] * ta.ndim), indexing="ij")
            out_a = ta[tuple(grids)]
            out_b = tb[tuple(img[g] for g in grids)]
            mapped = img[out_a]
            known = mapped >= 0
            if (mapped[known] != out_b[known]).any():
                return False
            # an unassigned output cannot reuse an image that is already taken
            if taken[out_b[~known]].any():
                return False
        return True

    def search(i: int) -> bool:
        if i == n:
            return is_homomorphism(a, b, image)
        for c in range(n):
            if used[c]:
                continue
            image[i] = c
            used[c] = True
            if consistent(i + 1) and search(i + 1):
                return True
            used[c] = False
            image[i] = -1
        return False

    return list(image) if search(0) else None


def is_homomorphism(a: FiniteAlgebra, b: FiniteAlgebra, image: Sequence[int]) -> bool:
    if a.signature != b.signature:
        return False
    img = np.asarray(image, dtype=np.int64)
    for ta, tb in zip(a.operations, b.operations):
        mapped_args = tuple(img[g] for g in np.indices(ta.table.shape))
        if not (img[ta.table] == tb.table[mapped_args]).all():
            return False
    return True


# -- standard algebras -----------------------------------------------------


def affine(n: int) -> FiniteAlgebra:
    """``(Z_n; x - y + z)``."""
    x, y, z = np.indices((n, n, n))
    return FiniteAlgebra(n, [OperationTable("m", 3, (x - y + z) % n, n)], name=f"Z{n}")


def discriminator(n: int) -> FiniteAlgebra:
    """``({0..n-1}; t)`` with ``t(x,y,z) = z if x == y else x``."""
    x, y, z = np.indices((n, n, n))
    return FiniteAlgebra(n, [OperationTable("t", 3, np.where(x == y, z, x), n)], name=f"D{n}")


def majority2() -> FiniteAlgebra:
    x, y, z = np.indices((2, 2, 2))
    return FiniteAlgebra(2, [OperationTable("maj", 3, ((x + y + z) >= 2).astype(int), 2)], name="Maj2")


def semilattice2() -> FiniteAlgebra:
    x, y = np.indices((2, 2))
    return FiniteAlgebra(2, [OperationTable("min", 2, np.minimum(x, y), 2)], name="Min2")


# -- JSON ------------------------------------------------------------------


def algebra_to_dict(alg: FiniteAlgebra) -> dict:
    return {
        "size": alg.size,
        "ops": [{"name": op.name, "arity": op.arity, "table": op.flat()} for op in alg.operations],
    }


def algebra_from_dict(data: dict) -> FiniteAlgebra:
    try:
        size = data["size"]
        ops_data = data["ops"]
    except (KeyError, TypeError) as exc:
        raise AlgebraError(f"algebra document is missing {exc}") from None
    if not isinstance(size, int) or isinstance(size, bool) or size < 1:
        raise AlgebraError("algebra size must be a positive integer")
    ops = []
    for i, op in enumerate(ops_data):
        try:
            name, arity, table = op["name"], op["arity"], op["table"]
        except (KeyError, TypeError):
            raise AlgebraError(f"ops[{i}] needs name, arity and table") from None
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in table):
            raise AlgebraError(f"ops[{i}].table must contain integers only")
        ops.append(OperationTable(name, arity, table, size=size))
    return FiniteAlgebra(size, ops)


def load_algebra(path) -> FiniteAlgebra:
    with open(path, encoding="utf-8") as fh:
        return algebra_from_dict(json.load(fh))


def dump_algebra(alg: FiniteAlgebra) -> str:
    return json.dumps(algebra_to_dict(alg))


"""Reference solvers by exhaustive search, used to check everything else.

Nothing here depends on the consistency or congruence machinery.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .algebra import FiniteAlgebra, bits
from .csp import CspInstance

DEFAULT_CAP = 10**7


class CapExceeded(RuntimeError):
    pass


def oracle_cap() -> int:
    raw = os.environ.get("MALTSEV_ORACLE_CAP")
    return int(raw) if raw else DEFAULT_CAP


@dataclass
class OracleResult:
    solutions: list[dict[str, int]]

    @property
    def sat(self) -> bool:
        return bool(self.solutions)

    @property
    def count(self) -> int:
        return len(self.solutions)

    def solution_set(self, variables=None) -> set[tuple[int, ...]]:
        if not self.solutions:
            return set()
        variables = variables or list(self.solutions[0])
        return {tuple(s[v] for v in variables) for s in self.solutions}


def brute_solve(inst: CspInstance, cap: int | None = -1) -> OracleResult:
    """Every satisfying assignment, by extending partial assignments in variable order.

    A constraint is checked as soon as its last variable is assigned, so dead
    branches are cut early.  ``cap`` bounds the product of domain sizes
    (-1 reads ``MALTSEV_ORACLE_CAP``, None disables the bound).
    """
    if cap == -1:
        cap = oracle_cap()
    sizes = [len(inst.domain(v)) for v in inst.variables]
    total = 1
    for s in sizes:
        total *= s
    if cap is not None and total > cap:
        raise CapExceeded(f"search space {total} exceeds the cap {cap}")
    idx = inst.index()
    n = inst.template.size
    due: dict[int, list] = {}
    for c in inst.constraints:
        pos = [idx[v] for v in c.scope]
        if not c.relation:
            return OracleResult([])
        tuples = np.array(sorted(c.relation), dtype=np.int64).reshape(len(c.relation), len(pos))
        weights = n ** np.arange(len(pos) - 1, -1, -1, dtype=np.int64)
        due.setdefault(max(pos), []).append((pos, weights, tuples @ weights))

    rows = np.zeros((1, 0), dtype=np.int64)
    for k, v in enumerate(inst.variables):
        dom = np.array(inst.domain(v), dtype=np.int64)
        rows = np.concatenate(
            [np.repeat(rows, len(dom), axis=0), np.tile(dom, len(rows))[:, None]], axis=1
        )
        for pos, weights, codes in due.get(k, []):
            rows = rows[np.isin(rows[:, pos] @ weights, codes)]
        if len(rows) == 0:
            return OracleResult([])
    return OracleResult([dict(zip(inst.variables, map(int, r))) for r in rows])


def brute_solve_binary(binst) -> OracleResult:
    """Exhaustive search over a binary instance (every pair checked)."""
    return brute_solve(binst.to_csp(), cap=None)


def closed_under(alg: FiniteAlgebra, op: str, rows: set[tuple[int, ...]]) -> bool:
    """Whether a set of tuples is closed under ``op`` applied coordinatewise."""
    table = alg.operation(op).table
    if not rows:
        return True
    arr = np.array(sorted(rows), dtype=np.int64)
    m, width = arr.shape
    weights = alg.size ** np.arange(width, dtype=np.int64)
    codes = np.sort(arr @ weights)
    arity = table.ndim
    # fix all but the last two arguments, broadcast those over every pair of rows
    for head in itertools.product(range(m), repeat=max(arity - 2, 0)):
        args = [arr[h][None, None, :] for h in head]
        if arity >= 2:
            args += [arr[:, None, :], arr[None, :, :]]
        else:
            args += [arr[:, None, :]]
        out = table[tuple(np.broadcast_arrays(*args))] @ weights
        pos = np.searchsorted(codes, out)
        if ((pos >= len(codes)) | (codes[np.minimum(pos, len(codes) - 1)] != out)).any():
            return False
    return True


# -- partitions and congruences by enumeration -----------------------------------------------


def set_partitions(elements: list[int]) -> Iterator[list[list[int]]]:
    """All partitions of ``elements`` via restricted growth strings."""
    n = len(elements)
    if n == 0:
        yield []
        return

    def grow(prefix: list[int], top: int):
        if len(prefix) == n:
            blocks: list[list[int]] = [[] for _ in range(top + 1)]
            for e, lab in zip(elements, prefix):
                blocks[lab].append(e)
            yield blocks
            return
        for lab in range(top + 2):
            yield from grow(prefix + [lab], max(top, lab))

    yield from grow([0], 0)


def naive_compatible(alg: FiniteAlgebra, blocks: list[list[int]]) -> bool:
    """Related arguments give related results, checked over all argument tuples.

    Argument tuples are grouped by their tuple of block labels; within each
    group every result must carry the same label.
    """
    elements = sorted(e for b in blocks for e in b)
    label = np.full(alg.size, -1, dtype=np.int64)
    for i, b in enumerate(blocks):
        label[b] = i
    elems = np.array(elements, dtype=np.int64)
    k = len(blocks)
    for op in alg.operations:
        grids = np.meshgrid(*([elems] * op.arity), indexing="ij")
        out = label[op.table[tuple(grids)]].ravel()
        if (out < 0).any():
            return False
        key = np.zeros(out.shape, dtype=np.int64)
        for g in grids:
            key = key * k + label[g].ravel()
        order = np.argsort(key, kind="stable")
        key, out = key[order], out[order]
        same = key[1:] == key[:-1]
        if (out[1:][same] != out[:-1][same]).any():
            return False
    return True


def compatible_partitions(alg: FiniteAlgebra, carrier: int | None = None) -> list[list[list[int]]]:
    """All congruences of the subalgebra on ``carrier`` found by brute force."""
    elements = bits(carrier) if carrier is not None else list(range(alg.size))
    return [p for p in set_partitions(elements) if naive_compatible(alg, p)]

"""Cyclic instances: every edge is a full product or an isomorphism graph.

Reachability in the element graph is computed by propagating minimum labels
along the bijection edges (a connected-components pass) instead of a logspace
procedure.  A reachability class is *dirty* when it contains two elements of
one domain; picking any element of a dirty class forces a contradiction along
some path.  Solutions of a connected component are exactly its clean
classes, so a component is satisfiable iff it has one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .algebra import find_isomorphism, mask_from_vector
from .congruence import BinaryRelation, FullProduct, StructuralViolation, classify_subdirect, is_simple
from .consistency import BinaryInstance


class CyclicPreconditionError(ValueError):
    """The instance is not of the cyclic shape."""


@dataclass
class InstanceGraph:
    """Variables joined by isomorphism edges.

    ``bij[i, j]`` marks an edge and ``perm[i, j, a]`` is the image of ``a``
    (meaningful on the domain of ``i`` only).
    """

    bij: np.ndarray
    perm: np.ndarray

    @property
    def size(self) -> int:
        return len(self.bij)

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.bij, 1))
        return list(zip(i.tolist(), j.tolist()))

    def neighbours(self, i: int) -> list[int]:
        return np.flatnonzero(self.bij[i]).tolist()

    def image(self, i: int, j: int, a: int) -> int:
        return int(self.perm[i, j, a])

    def components(self) -> list[list[int]]:
        seen = [False] * self.size
        out = []
        for start in range(self.size):
            if seen[start]:
                continue
            comp, queue = [], deque([start])
            seen[start] = True
            while queue:
                v = queue.popleft()
                comp.append(v)
                for w in self.neighbours(v):
                    if not seen[w]:
                        seen[w] = True
                        queue.append(w)
            out.append(sorted(comp))
        return out


def check_preconditions(inst: BinaryInstance) -> None:
    """1-consistency, simple domains and pairwise isomorphic domains."""
    alg = inst.algebra
    doms = inst.domains()
    for i, d in enumerate(doms):
        if d == 0:
            raise CyclicPreconditionError(f"domain of {inst.variables[i]} is empty")
        if not alg.is_closed(d) or not is_simple(alg, d):
            raise CyclicPreconditionError(f"domain of {inst.variables[i]} is not a simple subalgebra")
    for i in range(len(inst)):
        dv = inst.domain_vector(i)
        for j in range(len(inst)):
            if not inst.rel[i, j][dv].any(axis=1).all():
                raise CyclicPreconditionError(
                    f"not 1-consistent: an element of {inst.variables[i]} has no support at {inst.variables[j]}"
                )
    first = doms[0] if doms else 0
    for i, d in enumerate(doms[1:], start=1):
        if d != first and find_isomorphism(alg.restrict(first), alg.restrict(d)) is None:
            raise CyclicPreconditionError(f"domain of {inst.variables[i]} is not isomorphic to the first domain")


def _domains(inst: BinaryInstance) -> np.ndarray:
    n = len(inst)
    if n == 0:
        return np.zeros((0, inst.algebra.size), dtype=bool)
    return np.stack([inst.domain_vector(i) for i in range(n)])


def classify_edges_and_build(inst: BinaryInstance, check: bool = True) -> InstanceGraph:
    if check:
        check_preconditions(inst)
    alg = inst.algebra
    dom = _domains(inst)
    box = dom[:, None, :, None] & dom[None, :, None, :]
    rel = inst.rel & box
    full = (rel == box).all(axis=(2, 3))
    # bijection: every domain element has exactly one partner on the other side
    rows_ok = (rel.sum(axis=3) == 1) | ~dom[:, None, :]
    cols_ok = (rel.sum(axis=2) == 1) | ~dom[None, :, :]
    bij = rows_ok.all(axis=2) & cols_ok.all(axis=2) & ~full
    np.fill_diagonal(bij, False)
    odd = ~(full | bij)
    np.fill_diagonal(odd, False)
    for i, j in zip(*np.nonzero(np.triu(odd, 1))):
        # neither shape: let the subdirect classifier decide how to report it
        rel_ij = BinaryRelation.of(inst.pair_relation(i, j), inst.domain(i), inst.domain(j))
        if not isinstance(classify_subdirect(rel_ij, alg, alg, validate=False), FullProduct):
            raise StructuralViolation(
                "edge of a cyclic instance is linked but neither full nor a bijection",
                edge=[inst.variables[i], inst.variables[j]],
            )
    perm = rel.argmax(axis=3)
    return InstanceGraph(bij, perm)


@dataclass(frozen=True)
class Witness:
    """Two elements ``a != b`` of ``variable`` whose paths meet in ``c``."""

    variable: str
    a: int
    b: int
    c: tuple[str, int]
    path_a: tuple[tuple[str, int], ...]
    path_b: tuple[tuple[str, int], ...]

    def as_dict(self) -> dict:
        return {
            "variable": self.variable,
            "a": self.a,
            "b": self.b,
            "c": list(self.c),
            "path_a": [list(p) for p in self.path_a],
            "path_b": [list(p) for p in self.path_b],
        }


@dataclass
class CyclicResult:
    sat: bool
    assignment: list[int] | None
    witness: Witness | None
    viable: list[int]
    # verdict of the "no element reachable from two elements of one domain" rule
    strict_rule_sat: bool
    graph: InstanceGraph


def element_classes(graph: InstanceGraph, dom: np.ndarray) -> np.ndarray:
    """Reachability class of every domain element, as its least node id; -1 elsewhere."""
    n, s = dom.shape
    big = n * s
    labels = np.where(dom, np.arange(n * s).reshape(n, s), big)
    if n == 0:
        return labels
    cols = np.arange(n)[None, :, None]
    edge = graph.bij[:, :, None] & dom[:, None, :]
    while True:
        reached = np.where(edge, labels[cols, graph.perm], big).min(axis=1)
        new = np.minimum(labels, reached)
        if np.array_equal(new, labels):
            break
        labels = new
    return np.where(dom, labels, -1)


def _path(graph: InstanceGraph, src: tuple[int, int], dst: tuple[int, int]):
    prev = {src: None}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if node == dst:
            break
        i, a = node
        for j in graph.neighbours(i):
            nxt = (j, graph.image(i, j, a))
            if nxt not in prev:
                prev[nxt] = node
                queue.append(nxt)
    out, node = [], dst
    while node is not None:
        out.append(node)
        node = prev[node]
    return out[::-1]


def _witness(inst: BinaryInstance, graph: InstanceGraph, var: int, a: int, b: int) -> Witness:
    path = _path(graph, (var, a), (var, b))
    mid = len(path) // 2
    named = [(inst.variables[i], e) for i, e in path]
    return Witness(inst.variables[var], a, b, named[mid], tuple(named[: mid + 1]), tuple(reversed(named[mid:])))


def _dirty_labels(labels: np.ndarray, dom: np.ndarray) -> np.ndarray:
    n, s = labels.shape
    # count each (variable, label) pair over the domain elements
    keys = (np.arange(n)[:, None] * (n * s + 1) + labels)[dom]
    vals, counts = np.unique(keys, return_counts=True)
    return np.unique(vals[counts > 1] % (n * s + 1))


def solve_cyclic(inst: BinaryInstance, graph: InstanceGraph | None = None, check: bool = True,
                 witness: bool = True) -> CyclicResult:
    if graph is None:
        graph = classify_edges_and_build(inst, check=check)
    dom = _domains(inst)
    labels = element_classes(graph, dom)
    dirty = _dirty_labels(labels, dom)
    clean = dom & ~np.isin(labels, dirty)
    strict = len(dirty) == 0
    sat = bool(clean.any(axis=1).all())
    # an unsatisfiable component leaves no solution anywhere
    viable = [mask_from_vector(row) if sat else 0 for row in clean]
    assignment = None
    wit = None
    if sat:
        picks = [-1] * len(inst)
        for comp in graph.components():
            # the clean class holding the least element of the component's first variable
            a = int(np.flatnonzero(clean[comp[0]])[0])
            cls = labels[comp[0], a]
            for i in comp:
                picks[i] = int(np.flatnonzero(labels[i] == cls)[0])
        assignment = picks
        idx = np.arange(len(inst))
        vals = np.array(picks, dtype=np.int64)
        if not inst.rel[idx[:, None], idx[None, :], vals[:, None], vals[None, :]].all():
            raise StructuralViolation("assembled cyclic assignment violates a constraint", assignment=picks)
    elif witness:
        i = int(np.flatnonzero(~clean.any(axis=1))[0])
        row = labels[i]
        for a in np.flatnonzero(dom[i]):
            same = np.flatnonzero(dom[i] & (row == row[a]))
            if len(same) > 1:
                wit = _witness(inst, graph, i, int(same[0]), int(same[1]))
                break
    return CyclicResult(sat, assignment, wit, viable, strict, graph)


def viable_values(inst: BinaryInstance, graph: InstanceGraph | None = None, check: bool = True) -> list[int]:
    """Per variable, the elements used by some solution."""
    return solve_cyclic(inst, graph, check, witness=False).viable

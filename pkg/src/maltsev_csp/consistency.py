"""Local consistency, binarisation and path-pattern realisation.

A :class:`BinaryInstance` keeps one boolean matrix per ordered pair of
variables, indexed by elements of its domain algebra, inside a single array
``rel`` of shape ``(N, N, s, s)``.  The diagonal ``rel[i, i]`` is the identity
on the domain of variable ``i``, so domains and constraints are pruned by the
same composition rule.  Pairs without a constraint hold the full product.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import FiniteAlgebra, algebra_to_dict, bits, mask_from_vector, power, vector_from_mask
from .csp import Constraint, CspInstance


class BinaryInstance:
    """Syntactically simple binary instance over ``algebra``.

    ``origin`` maps each variable to the tuple of original variable names it
    stands for after binarisation (a 1-tuple for unbinarised instances).
    """

    def __init__(self, algebra: FiniteAlgebra, variables: Sequence[str], rel: np.ndarray,
                 origin: Sequence[tuple[str, ...]] | None = None):
        n = len(variables)
        s = algebra.size
        if rel.shape != (n, n, s, s):
            raise ValueError(f"relation array has shape {rel.shape}, expected {(n, n, s, s)}")
        self.algebra = algebra
        self.variables = list(variables)
        self.rel = rel
        self.origin = [tuple(o) for o in origin] if origin is not None else [(v,) for v in variables]

    @classmethod
    def from_constraints(cls, algebra: FiniteAlgebra, variables: Sequence[str],
                         domains: Sequence[int], constraints: dict[tuple[int, int], np.ndarray],
                         origin=None) -> "BinaryInstance":
        """Build from domains and a sparse map of pair constraints.

        Both orientations of each given pair are intersected; missing pairs
        become full products.
        """
        n, s = len(variables), algebra.size
        dom = np.array([vector_from_mask(d, s) for d in domains]).reshape(n, s)
        rel = dom[:, None, :, None] & dom[None, :, None, :]
        for i in range(n):
            rel[i, i] = np.diag(dom[i])
        for (i, j), mat in constraints.items():
            if i == j:
                raise ValueError("constraints must join distinct variables")
            rel[i, j] &= mat
            rel[j, i] &= mat.T
        return cls(algebra, variables, rel, origin)

    @classmethod
    def from_csp(cls, inst: CspInstance) -> "BinaryInstance":
        """The same instance without any propagation; constraints of arity at most 2 only."""
        if inst.max_arity > 2:
            raise ValueError("only unary and binary constraints have a direct binary form")
        idx = inst.index()
        s = inst.template.size
        doms = [inst.domains[v] for v in inst.variables]
        mats: dict[tuple[int, int], np.ndarray] = {}
        for c in inst.constraints:
            if c.arity == 1:
                doms[idx[c.scope[0]]] &= sum(1 << t[0] for t in c.relation)
                continue
            i, j = idx[c.scope[0]], idx[c.scope[1]]
            mat = np.zeros((s, s), dtype=bool)
            for a, b in c.relation:
                mat[a, b] = True
            if i == j:
                doms[i] &= mask_from_vector(np.diag(mat))
                continue
            if i > j:
                i, j, mat = j, i, mat.T
            mats[(i, j)] = mats[(i, j)] & mat if (i, j) in mats else mat
        return cls.from_constraints(inst.template, inst.variables, doms, mats)

    def __len__(self) -> int:
        return len(self.variables)

    def copy(self) -> "BinaryInstance":
        return BinaryInstance(self.algebra, self.variables, self.rel.copy(), self.origin)

    def domain_vector(self, i: int) -> np.ndarray:
        return self.rel[i, i].diagonal()

    def domain(self, i: int) -> int:
        return mask_from_vector(self.domain_vector(i))

    def domains(self) -> list[int]:
        return [self.domain(i) for i in range(len(self))]

    def domain_sizes(self) -> np.ndarray:
        return np.array([int(self.domain_vector(i).sum()) for i in range(len(self))], dtype=np.int64)

    def max_domain(self) -> int:
        return int(self.domain_sizes().max(initial=0))

    def restrict_domain(self, i: int, mask: int) -> None:
        keep = vector_from_mask(mask, self.algebra.size)
        self.rel[i, :, ~keep, :] = False
        self.rel[:, i, :, ~keep] = False

    def sub(self, indices: Sequence[int], masks: Sequence[int] | None = None) -> "BinaryInstance":
        """Subinstance on ``indices``, optionally shrinking their domains."""
        idx = np.asarray(indices, dtype=np.int64)
        rel = self.rel[np.ix_(idx, idx)].copy()
        out = BinaryInstance(self.algebra, [self.variables[i] for i in indices], rel,
                             [self.origin[i] for i in indices])
        if masks is not None:
            keep = np.stack([vector_from_mask(m, self.algebra.size) for m in masks])
            out.rel &= keep[:, None, :, None] & keep[None, :, None, :]
        return out

    def is_empty(self) -> bool:
        return any(not self.domain_vector(i).any() for i in range(len(self)))

    def pair_relation(self, i: int, j: int) -> list[tuple[int, int]]:
        a, b = np.nonzero(self.rel[i, j])
        return list(zip(a.tolist(), b.tolist()))

    def to_csp(self) -> CspInstance:
        """Plain instance over ``algebra`` with one constraint per pair ``i < j``.

        Full-product pairs are omitted.
        """
        doms = self.domains()
        constraints = []
        for i, j in itertools.combinations(range(len(self)), 2):
            di, dj = vector_from_mask(doms[i], self.algebra.size), vector_from_mask(doms[j], self.algebra.size)
            block = self.rel[i, j][np.ix_(di, dj)]
            if block.all():
                continue
            constraints.append(Constraint((self.variables[i], self.variables[j]),
                                          frozenset(self.pair_relation(i, j))))
        return CspInstance(self.algebra, list(self.variables),
                           {v: d for v, d in zip(self.variables, doms)}, constraints)

    def key(self) -> bytes:
        return self.rel.tobytes()


def binary_instance_to_dict(inst: BinaryInstance) -> dict:
    csp = inst.to_csp()
    return {
        "algebra": algebra_to_dict(inst.algebra),
        "variables": list(csp.variables),
        "domains": {v: bits(csp.domains[v]) for v in csp.variables},
        "constraints": [
            {"scope": list(c.scope), "tuples": [list(t) for t in sorted(c.relation)]}
            for c in csp.constraints
        ],
    }


# -- (2,3)-consistency on binary instances ----------------------------------


def path_consistency(inst: BinaryInstance) -> bool:
    """Prune ``inst`` in place to its path-consistent core; False on wipe-out.

    Applies ``R[i,j] &= R[i,z] o R[z,j]`` for every ``z`` until nothing
    changes.  With the identity on the diagonal this also enforces arc
    consistency.  Pruning is an intersection, so the fixpoint does not depend
    on the order of updates; small instances compose through every pivot at
    once.
    """
    rel = inst.rel
    n = len(inst)
    if n == 0:
        return True
    s = inst.algebra.size
    batched = n ** 3 * s ** 2 <= _BATCH_LIMIT
    while True:
        before = rel.copy()
        f = rel.astype(np.float32)
        if batched:
            # comp[z, i, j] = R[i, z] o R[z, j]
            comp = np.matmul(f.transpose(1, 0, 2, 3)[:, :, None], f[:, None, :]) > 0
            rel &= comp.all(axis=0)
        else:
            for z in range(n):
                rel &= np.matmul(f[:, z][:, None], f[z, :][None, :]) > 0
        if not all(rel[i, i].any() for i in range(n)):
            return False
        if np.array_equal(before, rel):
            return True


_BATCH_LIMIT = 4_000_000


# -- (k,l)-consistency on arbitrary instances -------------------------------


class ConsistentFamily:
    """Partial solutions on every k-subset of variables, pruned to a fixpoint.

    Each entry is a boolean array over the template, one axis per variable of
    the (sorted) subset.  Produced by :func:`enforce_kl_consistency`.
    """

    def __init__(self, inst: CspInstance, k: int, l: int, tables: dict[tuple[int, ...], np.ndarray]):
        self.instance = inst
        self.k = k
        self.l = l
        self.tables = tables
        self._proj: dict[tuple[int, ...], np.ndarray] = {}

    def project(self, subset: Sequence[int]) -> np.ndarray:
        """Assignments to ``subset`` compatible with every k-set containing it."""
        key = tuple(sorted(subset))
        if key in self._proj:
            return self._proj[key]
        n = self.instance.template.size
        out = np.ones((n,) * len(key), dtype=bool)
        for w, table in self.tables.items():
            if set(key) <= set(w):
                drop = tuple(ax for ax, v in enumerate(w) if v not in key)
                out &= table.any(axis=drop) if drop else table
        self._proj[key] = out
        return out

    def domains(self) -> list[int]:
        return [mask_from_vector(self.project((i,))) for i in range(len(self.instance.variables))]

    def reduced_instance(self) -> CspInstance:
        inst = self.instance
        idx = inst.index()
        constraints = []
        for c in inst.constraints:
            distinct = sorted({idx[v] for v in c.scope})
            allowed = self.project(distinct)
            pos = [distinct.index(idx[v]) for v in c.scope]
            kept = frozenset(t for t in c.relation if allowed[tuple(t[pos.index(p)] for p in range(len(distinct)))])
            constraints.append(Constraint(c.scope, kept))
        doms = self.domains()
        return CspInstance(inst.template, list(inst.variables),
                           {v: doms[i] for i, v in enumerate(inst.variables)}, constraints)


def _constraint_table(c: Constraint, idx: dict[str, int], n: int):
    """Boolean array of ``c`` over its distinct variables in index order."""
    distinct = sorted({idx[v] for v in c.scope})
    table = np.zeros((n,) * len(distinct), dtype=bool)
    for t in c.relation:
        vals: dict[int, int] = {}
        if all(vals.setdefault(idx[v], a) == a for v, a in zip(c.scope, t)):
            table[tuple(vals[d] for d in distinct)] = True
    return tuple(distinct), table


def _expand(table: np.ndarray, sub: Sequence[int], into: Sequence[int]) -> np.ndarray:
    """View ``table`` (axes = sorted ``sub``) broadcastable over sorted ``into``."""
    shape = [table.shape[sub.index(v)] if v in sub else 1 for v in into]
    return table.reshape(shape)


def enforce_kl_consistency(inst: CspInstance, k: int, l: int) -> ConsistentFamily | None:
    """Standard (k,l)-consistency; None when some partial-solution set empties.

    Every k-set ``W`` keeps the assignments that satisfy the constraints
    inside ``W`` and extend, on every l-set ``U`` containing ``W``, to an
    assignment whose k-subsets are all still allowed.
    """
    if not 1 <= k <= l:
        raise ValueError("need 1 <= k <= l")
    idx = inst.index()
    nvars = len(inst.variables)
    n = inst.template.size
    if nvars == 0:
        return ConsistentFamily(inst, k, l, {})
    k, l = min(k, nvars), min(l, nvars)
    dom = [vector_from_mask(inst.domains[v], n) for v in inst.variables]
    ctables = [_constraint_table(c, idx, n) for c in inst.constraints]
    for scope, _ in ctables:
        if len(scope) > k:
            raise ValueError(f"constraint on {len(scope)} variables does not fit in k={k}")

    tables: dict[tuple[int, ...], np.ndarray] = {}
    for w in itertools.combinations(range(nvars), k):
        t = np.ones((n,) * k, dtype=bool)
        for pos, v in enumerate(w):
            shape = [1] * k
            shape[pos] = n
            t = t & dom[v].reshape(shape)
        for scope, ct in ctables:
            if set(scope) <= set(w):
                t = t & _expand(ct, list(scope), list(w))
        if not t.any():
            return None
        tables[w] = t

    if l > k:
        supersets = list(itertools.combinations(range(nvars), l))
        changed = True
        while changed:
            changed = False
            for u in supersets:
                subs = list(itertools.combinations(u, k))
                sol = np.ones((n,) * l, dtype=bool)
                for w in subs:
                    sol = sol & _expand(tables[w], list(w), list(u))
                if not sol.any():
                    return None
                for w in subs:
                    drop = tuple(ax for ax, v in enumerate(u) if v not in w)
                    new = tables[w] & sol.any(axis=drop)
                    if not np.array_equal(new, tables[w]):
                        tables[w] = new
                        changed = True
    return ConsistentFamily(inst, k, l, tables)


# -- binarisation -------------------------------------------------------------


def tuple_name(names: Sequence[str]) -> str:
    return names[0] if len(names) == 1 else "(" + ",".join(names) + ")"


def binarize(inst: CspInstance, p: int | None = None,
             family: ConsistentFamily | None = None, tuples: str = "distinct") -> BinaryInstance | None:
    """Syntactically simple instance over ``template ** ceil(p/2)``.

    One new variable per ``ceil(p/2)``-tuple of original variables; the
    constraint between two new variables allows exactly the value pairs whose
    combined assignment survives the (2*ceil(p/2), 3*ceil(p/2))-consistent
    family.  ``tuples="distinct"`` uses increasing tuples of distinct
    variables, ``tuples="all"`` every tuple (repeats get diagonal domains).
    Returns None when the family is empty.
    """
    if tuples not in ("distinct", "all"):
        raise ValueError("tuples must be 'distinct' or 'all'")
    if p is None:
        p = inst.max_arity
    half = max(1, math.ceil(p / 2))
    if family is None:
        family = enforce_kl_consistency(inst, 2 * half, 3 * half)
        if family is None:
            return None
    nvars = len(inst.variables)
    h = min(half, nvars) if nvars else 1
    if tuples == "all":
        groups = list(itertools.product(range(nvars), repeat=h))
    else:
        groups = list(itertools.combinations(range(nvars), h))
    base = inst.template
    alg = power(base, h)
    n = base.size
    size = alg.size
    digits = np.array(list(itertools.product(range(n), repeat=h)), dtype=np.int64).reshape(size, h)

    rel = np.zeros((len(groups), len(groups), size, size), dtype=bool)
    for a, ga in enumerate(groups):
        for b in range(a, len(groups)):
            gb = groups[b]
            union = sorted(set(ga) | set(gb))
            # every coordinate naming v must carry the same value
            agree = np.ones((size, size), dtype=bool)
            index = []
            for v in union:
                cols = [digits[:, c][:, None] for c, u in enumerate(ga) if u == v]
                cols += [digits[:, c][None, :] for c, u in enumerate(gb) if u == v]
                for other in cols[1:]:
                    agree &= cols[0] == other
                index.append(np.broadcast_to(cols[0], (size, size)))
            mat = family.project(union)[tuple(index)] & agree
            rel[a, b] = mat
            rel[b, a] = mat.T
    names = [tuple(inst.variables[i] for i in g) for g in groups]
    return BinaryInstance(alg, [tuple_name(nm) for nm in names], rel, names)


def decode_assignment(inst: BinaryInstance, values: Sequence[int], original: Sequence[str]) -> dict[str, int]:
    """Original-variable values from a binarised assignment.

    Each variable takes its value from the first tuple containing it; the
    remaining tuples are asserted to agree.
    """
    alg = inst.algebra
    k = len(inst.origin[0]) if inst.origin else 1
    out: dict[str, int] = {}
    for names, val in zip(inst.origin, values):
        coords = alg.decode(val).tolist() if k > 1 else [int(val)]
        for name, c in zip(names, coords):
            if out.setdefault(name, c) != c:
                raise AssertionError(f"tuple variables disagree on {name}")
    missing = [v for v in original if v not in out]
    if missing:
        raise AssertionError(f"variables {missing} not covered by the binarisation")
    return {v: out[v] for v in original}


# -- path patterns ----------------------------------------------------------------


@dataclass(frozen=True)
class PathPattern:
    steps: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a path pattern needs at least one step")
        for (_, y), (x2, _) in zip(self.steps, self.steps[1:]):
            if y != x2:
                raise ValueError("consecutive steps must chain end to start")
        for x, y in self.steps:
            if x == y:
                raise ValueError("a step joins two distinct variables")
        if len(set(self.steps)) != len(self.steps):
            raise ValueError("steps must use distinct constraints")

    @property
    def start(self) -> int:
        return self.steps[0][0]

    @property
    def end(self) -> int:
        return self.steps[-1][1]

    def inverse(self) -> "PathPattern":
        return PathPattern(tuple((y, x) for x, y in reversed(self.steps)))

    def __add__(self, other: "PathPattern") -> "PathPattern":
        return PathPattern(self.steps + other.steps)


def realize(inst: BinaryInstance, pattern: PathPattern, start: int) -> int:
    """End elements of all realisations of ``pattern`` starting in ``start``."""
    n = len(inst)
    for x, y in pattern.steps:
        if not (0 <= x < n and 0 <= y < n):
            raise ValueError(f"step {(x, y)} is not a scope of this instance")
    if start & ~inst.domain(pattern.start):
        raise ValueError("start set leaves the domain of the start variable")
    current = vector_from_mask(start, inst.algebra.size)
    for x, y in pattern.steps:
        current = inst.rel[x, y][current].any(axis=0)
    return mask_from_vector(current)


def dumps_binary(inst: BinaryInstance) -> str:
    return json.dumps(binary_instance_to_dict(inst), sort_keys=True, separators=(",", ":"))

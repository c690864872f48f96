"""Seeded instance generators and the GF(p) elimination checker.

Randomness comes from SplitMix64 so corpora are reproducible anywhere.  With
all arithmetic modulo 2**64 and ``>>`` a logical shift::

    state = state + 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output z ^ (z >> 31)

``below(n)`` rejects outputs at or above ``2**64 - (2**64 mod n)`` and
returns the rest modulo ``n``, so draws are exactly uniform.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np

from .algebra import FiniteAlgebra, affine, bits, discriminator, generate_subuniverse, power
from .csp import Constraint, CspInstance

MASK64 = (1 << 64) - 1
KINDS = ("linsys", "affine-z4", "discriminator", "cyclic-shift")


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n

    def choice(self, seq):
        return seq[self.below(len(seq))]

    def sample(self, seq, k: int) -> list:
        """``k`` distinct items in draw order (partial Fisher-Yates)."""
        pool = list(seq)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    variables: int = 4
    constraints: int = 4
    modulus: int = 2
    arity: int = 2
    seed: int = 0
    base: str = "affine"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.variables < 1 or self.constraints < 0:
            raise ValueError("need at least one variable and a nonnegative constraint count")
        if not 1 <= self.arity <= 3:
            raise ValueError("arity must be between 1 and 3")
        if self.kind == "linsys" and not is_prime(self.modulus):
            raise ValueError(f"modulus {self.modulus} is not prime")
        if self.kind == "cyclic-shift" and self.base not in ("affine", "discriminator"):
            raise ValueError("cyclic-shift base must be 'affine' or 'discriminator'")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        return cls(**data)


def is_prime(p: int) -> bool:
    return p >= 2 and all(p % d for d in range(2, int(p**0.5) + 1))


def _names(n: int) -> list[str]:
    return [f"x{i}" for i in range(n)]


# -- linear systems ---------------------------------------------------------------


@dataclass(frozen=True)
class Equation:
    variables: tuple[int, ...]
    coefficients: tuple[int, ...]
    rhs: int


def random_equations(rng: SplitMix64, nvars: int, count: int, p: int, max_arity: int) -> list[Equation]:
    eqs = []
    for _ in range(count):
        r = 1 + rng.below(min(max_arity, nvars))
        vs = tuple(sorted(rng.sample(range(nvars), r)))
        coeffs = tuple(1 + rng.below(p - 1) for _ in vs)
        eqs.append(Equation(vs, coeffs, rng.below(p)))
    return eqs


def gauss_solve(eqs: list[Equation], nvars: int, p: int) -> tuple[bool, int]:
    """Consistency and rank of a linear system over GF(p), by row reduction."""
    rows = []
    for e in eqs:
        row = [0] * (nvars + 1)
        for v, c in zip(e.variables, e.coefficients):
            row[v] = (row[v] + c) % p
        row[nvars] = e.rhs % p
        rows.append(row)
    rank = 0
    for col in range(nvars):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col]), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        inv = pow(rows[rank][col], p - 2, p)
        rows[rank] = [(x * inv) % p for x in rows[rank]]
        for r in range(len(rows)):
            if r != rank and rows[r][col]:
                f = rows[r][col]
                rows[r] = [(a - f * b) % p for a, b in zip(rows[r], rows[rank])]
        rank += 1
    consistent = all(any(row[:nvars]) or row[nvars] == 0 for row in rows)
    return consistent, rank


def equation_relation(e: Equation, p: int) -> frozenset:
    return frozenset(
        t for t in itertools.product(range(p), repeat=len(e.variables))
        if sum(c * a for c, a in zip(e.coefficients, t)) % p == e.rhs
    )


def linsys_instance(eqs: list[Equation], nvars: int, p: int) -> CspInstance:
    names = _names(nvars)
    alg = affine(p)
    constraints = [Constraint(tuple(names[v] for v in e.variables), equation_relation(e, p)) for e in eqs]
    return CspInstance(alg, names, {v: alg.full_mask for v in names}, constraints)


def linsys_ground_truth(spec: GeneratorSpec) -> tuple[bool, int]:
    """(satisfiable, number of solutions) by elimination, independent of search."""
    rng = SplitMix64(spec.seed)
    eqs = random_equations(rng, spec.variables, spec.constraints, spec.modulus, spec.arity)
    ok, rank = gauss_solve(eqs, spec.variables, spec.modulus)
    return ok, (spec.modulus ** (spec.variables - rank) if ok else 0)


# -- relations as generated subpowers ------------------------------------------------------


def _subpower_relation(alg: FiniteAlgebra, rng: SplitMix64, doms: list[list[int]], generators: int) -> frozenset:
    k = len(doms)
    big = power(alg, k)
    seeds = set()
    for _ in range(generators):
        t = [rng.choice(d) for d in doms]
        seeds.add(int(big.encode(np.array(t))) if k > 1 else t[0])
    sub = generate_subuniverse(big, sorted(seeds))
    if k == 1:
        return frozenset((e,) for e in sub.elements)
    return frozenset(tuple(int(a) for a in big.decode(e)) for e in sub.elements)


def _random_closed(alg: FiniteAlgebra, rng: SplitMix64) -> int:
    subs = alg.subuniverses_within(alg.full_mask)
    # bias towards the full domain so most instances are not trivial
    if rng.below(2) == 0:
        return alg.full_mask
    return rng.choice(subs)


def _subpower_instance(alg: FiniteAlgebra, spec: GeneratorSpec, rng: SplitMix64) -> CspInstance:
    names = _names(spec.variables)
    domains = {v: _random_closed(alg, rng) for v in names}
    constraints = []
    for _ in range(spec.constraints):
        r = 1 + rng.below(min(spec.arity, spec.variables))
        if r == 1 and spec.arity > 1 and spec.variables > 1:
            r = 2
        scope = rng.sample(names, r)
        doms = [bits(domains[v]) for v in scope]
        rel = _subpower_relation(alg, rng, doms, 1 + rng.below(3))
        constraints.append(Constraint(tuple(scope), rel))
    return CspInstance(alg, names, domains, constraints)


# -- cyclic instances ----------------------------------------------------------------------


def shift_cycle(n: int, shifts: list[int], names: list[str] | None = None) -> CspInstance:
    """``x_{i+1} = x_i + shifts[i]`` around a cycle, over ``(Z_n; x - y + z)``."""
    alg = affine(n)
    k = len(shifts)
    names = names or _names(k)
    constraints = [
        Constraint((names[i], names[(i + 1) % k]), frozenset((a, (a + s) % n) for a in range(n)))
        for i, s in enumerate(shifts)
    ]
    return CspInstance(alg, names, {v: alg.full_mask for v in names}, constraints)


def _cyclic_instance(spec: GeneratorSpec, rng: SplitMix64) -> CspInstance:
    n = spec.modulus
    alg = affine(n) if spec.base == "affine" else discriminator(n)
    names = _names(spec.variables)
    perms = list(itertools.permutations(range(n)))
    constraints = []
    order = list(range(spec.variables))
    edges = [(order[i], order[(i + 1) % len(order)]) for i in range(len(order))] if len(order) > 1 else []
    extra = max(0, spec.constraints - len(edges))
    for _ in range(extra):
        if spec.variables > 1:
            a, b = rng.sample(range(spec.variables), 2)
            edges.append((a, b))
    for a, b in edges[: max(spec.constraints, 0)]:
        if rng.below(5) == 0:
            continue  # a full-product edge imposes nothing
        if spec.base == "affine":
            s = rng.below(n)
            pairs = frozenset((x, (x + s) % n) for x in range(n))
        else:
            perm = rng.choice(perms)
            pairs = frozenset((x, perm[x]) for x in range(n))
        constraints.append(Constraint((names[a], names[b]), pairs))
    return CspInstance(alg, names, {v: alg.full_mask for v in names}, constraints)


def generate(spec: GeneratorSpec) -> tuple[FiniteAlgebra, CspInstance]:
    rng = SplitMix64(spec.seed)
    if spec.kind == "linsys":
        eqs = random_equations(rng, spec.variables, spec.constraints, spec.modulus, spec.arity)
        inst = linsys_instance(eqs, spec.variables, spec.modulus)
    elif spec.kind == "affine-z4":
        inst = _subpower_instance(affine(4), spec, rng)
    elif spec.kind == "discriminator":
        inst = _subpower_instance(discriminator(3), spec, rng)
    else:
        inst = _cyclic_instance(spec, rng)
    return inst.template, inst


# -- corpus --------------------------------------------------------------------------------


def corpus_specs(count: int, seed: int = 0) -> list[GeneratorSpec]:
    """A deterministic mix of every generator kind at desk scale.

    Instances have 3 to 8 variables; about a quarter allow ternary constraints.
    """
    rng = SplitMix64(seed)
    specs = []
    plans = [
        ("linsys", 2), ("linsys", 3), ("affine-z4", 4), ("discriminator", 3), ("cyclic-shift", 0),
    ]
    for i in range(count):
        kind, p = plans[i % len(plans)]
        s = rng.next()
        ternary = rng.below(4) == 0
        arity = 3 if ternary else 2
        nvars = 3 + rng.below(6)
        if kind == "linsys":
            spec = GeneratorSpec("linsys", nvars, 2 + rng.below(nvars + 2), p, arity, s)
        elif kind == "cyclic-shift":
            base, mod = rng.choice([("affine", 2), ("affine", 3), ("discriminator", 3), ("discriminator", 2)])
            nv = 3 + rng.below(6)
            spec = GeneratorSpec("cyclic-shift", nv, nv + rng.below(3), mod, 2, s, base)
        else:
            spec = GeneratorSpec(kind, nvars, 2 + rng.below(nvars + 1), p, arity, s)
        specs.append(spec)
    return specs

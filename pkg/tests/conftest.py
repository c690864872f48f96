import itertools

import numpy as np
import pytest

from maltsev_csp.algebra import (
    FiniteAlgebra,
    OperationTable,
    affine,
    discriminator,
    generate_subuniverse,
    majority2,
    power,
    semilattice2,
)
from maltsev_csp.csp import Constraint, CspInstance


def klein() -> FiniteAlgebra:
    """``(Z2 x Z2; x - y + z)`` as a 4-element algebra."""
    return power(affine(2), 2)


def test_algebras() -> dict[str, FiniteAlgebra]:
    """Every algebra of size at most 4 used across the suite."""
    return {
        "Z1": affine(1),
        "Z2": affine(2),
        "Z3": affine(3),
        "Z4": affine(4),
        "Z2xZ2": klein(),
        "D2": discriminator(2),
        "D3": discriminator(3),
        "D4": discriminator(4),
        "Maj2": majority2(),
        "Min2": semilattice2(),
    }


test_algebras.__test__ = False


def relation(pairs) -> frozenset:
    return frozenset(tuple(p) for p in pairs)


def shift(n: int, s: int) -> frozenset:
    return frozenset((a, (a + s) % n) for a in range(n))


def equations_instance(p: int, nvars: int, equations) -> CspInstance:
    """``equations`` holds (scope indices, coefficients, rhs) over Z_p."""
    alg = affine(p)
    names = [f"x{i}" for i in range(nvars)]
    cons = []
    for scope, coeffs, rhs in equations:
        rel = frozenset(
            t for t in itertools.product(range(p), repeat=len(scope))
            if sum(c * a for c, a in zip(coeffs, t)) % p == rhs % p
        )
        cons.append(Constraint(tuple(names[i] for i in scope), rel))
    return CspInstance(alg, names, {v: alg.full_mask for v in names}, cons)


def parity_equality(odd: bool = False) -> CspInstance:
    """Three Z4 variables joined pairwise by ``a = b mod 2`` (or ``a != b mod 2``)."""
    alg = affine(4)
    names = ["x", "y", "z"]
    diff = 1 if odd else 0
    rel = frozenset((a, b) for a in range(4) for b in range(4) if (a - b) % 2 == diff)
    cons = [Constraint(("x", "y"), rel), Constraint(("y", "z"), rel), Constraint(("z", "x"), rel)]
    return CspInstance(alg, names, {v: alg.full_mask for v in names}, cons)


@pytest.fixture
def z2():
    return affine(2)


@pytest.fixture
def z3():
    return affine(3)


@pytest.fixture
def z4():
    return affine(4)


def table_algebra(n: int, name: str, fn, arity: int = 3) -> FiniteAlgebra:
    grid = np.indices((n,) * arity)
    return FiniteAlgebra(n, [OperationTable(name, arity, fn(*grid) % n, n)])


MALTSEV_ALGEBRAS = {
    "Z2": affine(2), "Z3": affine(3), "Z4": affine(4), "Z2xZ2": klein(),
    "D2": discriminator(2), "D3": discriminator(3),
}


def invariant_relation(alg: FiniteAlgebra, seeds) -> frozenset:
    """The subuniverse of ``alg ** 2`` generated by ``seeds`` as a set of pairs."""
    sq = power(alg, 2)
    codes = [a * alg.size + b for a, b in seeds]
    sub = generate_subuniverse(sq, codes)
    return frozenset(divmod(e, alg.size) for e in sub.elements)


def linked_components(pairs) -> list[tuple[set, set]]:
    """Connected components of the bipartite graph of ``pairs``."""
    comps: list[tuple[set, set]] = []
    for a, b in pairs:
        hit = [c for c in comps if a in c[0] or b in c[1]]
        left, right = {a}, {b}
        for c in hit:
            left |= c[0]
            right |= c[1]
            comps.remove(c)
        comps.append((left, right))
    return comps


def petersen_tseitin() -> CspInstance:
    """Parity of the edges at each Petersen vertex, odd charge at vertex 0.

    One variable per edge; the charges sum to 1, so the system is unsatisfiable.
    """
    from maltsev_csp.generators import Equation, linsys_instance

    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    edges = outer + spokes + inner
    eqs = [Equation(tuple(i for i, e in enumerate(edges) if v in e), (1, 1, 1), int(v == 0))
           for v in range(10)]
    return linsys_instance(eqs, len(edges), 2)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

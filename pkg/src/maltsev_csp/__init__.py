"""Constraint satisfaction over templates with a Maltsev polymorphism."""

from .algebra import FiniteAlgebra, affine, check_identities, discriminator, maltsev_operation
from .consistency import BinaryInstance, binarize, enforce_kl_consistency, path_consistency
from .csp import Constraint, CspInstance, evaluate, parse, serialize, validate
from .cyclic import solve_cyclic
from .generators import GeneratorSpec, generate
from .maltsev import enforce_maltsev_consistency
from .oracle import brute_solve
from .solver import SolveResult, solve

__all__ = [
    "BinaryInstance",
    "Constraint",
    "CspInstance",
    "FiniteAlgebra",
    "GeneratorSpec",
    "SolveResult",
    "affine",
    "binarize",
    "brute_solve",
    "check_identities",
    "discriminator",
    "enforce_kl_consistency",
    "enforce_maltsev_consistency",
    "evaluate",
    "generate",
    "maltsev_operation",
    "parse",
    "path_consistency",
    "serialize",
    "solve",
    "solve_cyclic",
    "validate",
]

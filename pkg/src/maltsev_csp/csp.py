"""CSP instances over a finite template algebra, with JSON (de)serialisation."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .algebra import AlgebraError, FiniteAlgebra, algebra_from_dict, algebra_to_dict, bits, mask_of


class ParseError(ValueError):
    """Malformed instance document; ``position`` is a JSON path or line:col."""

    def __init__(self, message: str, position: str = "$"):
        super().__init__(f"{position}: {message}")
        self.position = position


@dataclass(frozen=True)
class Constraint:
    scope: tuple[str, ...]
    relation: frozenset[tuple[int, ...]]

    def __post_init__(self):
        if not self.scope:
            raise ValueError("constraint scope must be nonempty")
        for t in self.relation:
            if len(t) != len(self.scope):
                raise ValueError(f"tuple {t} does not match scope {self.scope}")

    @property
    def arity(self) -> int:
        return len(self.scope)


@dataclass
class CspInstance:
    template: FiniteAlgebra
    variables: list[str]
    domains: dict[str, int]
    constraints: list[Constraint] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("duplicate variable names")

    def domain(self, var: str) -> list[int]:
        return bits(self.domains[var])

    @property
    def max_arity(self) -> int:
        return max((c.arity for c in self.constraints), default=1)

    def index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.variables)}


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def relation_preserved(alg: FiniteAlgebra, tuples: Sequence[tuple[int, ...]]):
    """First operation application leaving the relation, or None."""
    if not tuples:
        return None
    rel = np.array(sorted(tuples), dtype=np.int64)
    weights = alg.size ** np.arange(rel.shape[1] - 1, -1, -1, dtype=np.int64)
    codes = rel @ weights
    idx = np.arange(len(rel))
    for i, (name, arity) in enumerate(alg.signature):
        grids = np.meshgrid(*([idx] * arity), indexing="ij")
        out = alg.apply(i, [rel[g] for g in grids])
        bad = ~np.isin(out @ weights, codes)
        if bad.any():
            pos = np.unravel_index(int(np.flatnonzero(bad)[0]), bad.shape)
            args = [tuple(rel[g[pos]].tolist()) for g in grids]
            return name, args, tuple(out[pos].tolist())
    return None


def validate(inst: CspInstance) -> ValidationReport:
    """Structural checks plus invariance of every relation and domain."""
    report = ValidationReport()
    declared = set(inst.variables)
    alg = inst.template
    for v in inst.variables:
        mask = inst.domains.get(v, 0)
        if mask == 0:
            report.violations.append(Violation("domain", v, "missing or empty domain"))
        elif mask >> alg.size:
            report.violations.append(Violation("domain", v, "domain outside the universe"))
        elif not alg.is_closed(mask):
            report.violations.append(Violation("domain", v, f"{bits(mask)} is not a subuniverse"))
    for ci, c in enumerate(inst.constraints):
        where = f"constraints[{ci}]"
        missing = [v for v in c.scope if v not in declared]
        if missing:
            report.violations.append(Violation("scope", where, f"undeclared variables {missing}"))
            continue
        for t in sorted(c.relation):
            outside = [v for v, a in zip(c.scope, t) if not inst.domains.get(v, 0) >> a & 1]
            if outside:
                report.violations.append(
                    Violation("tuple", where, f"tuple {list(t)} leaves the domain of {outside[0]}")
                )
                break
        bad = relation_preserved(alg, sorted(c.relation))
        if bad is not None:
            name, args, row = bad
            report.violations.append(
                Violation("polymorphism", where, f"{name}{tuple(args)} = {row} not in relation")
            )
    return report


def evaluate(inst: CspInstance, assignment: Mapping[str, int]) -> bool:
    missing = [v for v in inst.variables if v not in assignment]
    if missing:
        raise ValueError(f"assignment is not total, missing {missing}")
    return all(tuple(assignment[v] for v in c.scope) in c.relation for c in inst.constraints)


# -- JSON --------------------------------------------------------------------


def _int(value, position: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ParseError(f"expected an integer, got {value!r}", position)
    return value


def instance_from_dict(data, base_dir: str | None = None) -> CspInstance:
    if not isinstance(data, dict):
        raise ParseError("instance document must be an object")
    for key in ("algebra", "variables", "domains"):
        if key not in data:
            raise ParseError(f"missing key {key!r}")
    alg_data = data["algebra"]
    try:
        if isinstance(alg_data, str):
            path = os.path.join(base_dir or ".", alg_data)
            with open(path, encoding="utf-8") as fh:
                alg_data = json.load(fh)
        template = algebra_from_dict(alg_data)
    except (AlgebraError, OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(exc), "$.algebra") from None

    variables = data["variables"]
    if not isinstance(variables, list):
        raise ParseError("variables must be a list", "$.variables")
    seen = set()
    for i, v in enumerate(variables):
        if not isinstance(v, str):
            raise ParseError("variable names must be strings", f"$.variables[{i}]")
        if v in seen:
            raise ParseError(f"duplicate variable {v!r}", f"$.variables[{i}]")
        seen.add(v)

    raw_domains = data["domains"]
    if not isinstance(raw_domains, dict):
        raise ParseError("domains must be an object", "$.domains")
    for name in raw_domains:
        if name not in seen:
            raise ParseError(f"domain given for undeclared variable {name!r}", f"$.domains.{name}")
    domains = {}
    for v in variables:
        if v not in raw_domains:
            raise ParseError(f"missing domain for variable {v!r}", "$.domains")
        elems = raw_domains[v]
        pos = f"$.domains.{v}"
        if not isinstance(elems, list) or not elems:
            raise ParseError(f"domain of {v!r} must be a nonempty list", pos)
        for j, e in enumerate(elems):
            if not 0 <= _int(e, f"{pos}[{j}]") < template.size:
                raise ParseError(f"element {e} out of range", f"{pos}[{j}]")
        domains[v] = mask_of(elems)

    constraints = []
    for ci, c in enumerate(data.get("constraints", [])):
        pos = f"$.constraints[{ci}]"
        if not isinstance(c, dict) or "scope" not in c or "tuples" not in c:
            raise ParseError("constraint needs scope and tuples", pos)
        scope = c["scope"]
        if not isinstance(scope, list) or not scope:
            raise ParseError("scope must be a nonempty list", f"{pos}.scope")
        for j, v in enumerate(scope):
            if v not in seen:
                raise ParseError(f"scope names undeclared variable {v!r}", f"{pos}.scope[{j}]")
        tuples = set()
        for j, t in enumerate(c["tuples"]):
            tpos = f"{pos}.tuples[{j}]"
            if not isinstance(t, list) or len(t) != len(scope):
                raise ParseError(f"tuple must have length {len(scope)}", tpos)
            for k, e in enumerate(t):
                if not 0 <= _int(e, f"{tpos}[{k}]") < template.size:
                    raise ParseError(f"element {e} out of range", f"{tpos}[{k}]")
            tuples.add(tuple(t))
        constraints.append(Constraint(tuple(scope), frozenset(tuples)))
    return CspInstance(template, list(variables), domains, constraints)


def parse(text: str, base_dir: str | None = None) -> CspInstance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{exc.lineno}:{exc.colno}") from None
    return instance_from_dict(data, base_dir)


def load_instance(path: str) -> CspInstance:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), os.path.dirname(os.path.abspath(path)))


def instance_to_dict(inst: CspInstance) -> dict:
    return {
        "algebra": algebra_to_dict(inst.template),
        "variables": list(inst.variables),
        "domains": {v: bits(inst.domains[v]) for v in inst.variables},
        "constraints": [
            {"scope": list(c.scope), "tuples": [list(t) for t in sorted(c.relation)]}
            for c in inst.constraints
        ],
    }


def serialize(inst: CspInstance) -> str:
    """Canonical text: sorted keys and lexicographically sorted tuples.

    Variable order is kept as declared since it fixes the processing order.
    """
    return json.dumps(instance_to_dict(inst), sort_keys=True, separators=(",", ":"))

"""Seeded corpora, manifests and the solver-versus-oracle comparison."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .csp import CspInstance, evaluate, serialize
from .generators import GeneratorSpec, corpus_specs, generate, linsys_ground_truth
from .oracle import CapExceeded, brute_solve
from .solver import ERROR, SAT, UNSAT, solve


def spec_name(spec: GeneratorSpec, index: int) -> str:
    return f"{index:04d}-{spec.kind}-v{spec.variables}-c{spec.constraints}-a{spec.arity}"


def corpus(count: int, seed: int = 0) -> list[tuple[str, GeneratorSpec, CspInstance]]:
    out = []
    for i, spec in enumerate(corpus_specs(count, seed)):
        _, inst = generate(spec)
        out.append((spec_name(spec, i), spec, inst))
    return out


def manifest(count: int, seed: int = 0) -> dict:
    """Specs with the oracle verdict and solution count of each instance."""
    entries = []
    for name, spec, inst in corpus(count, seed):
        res = brute_solve(inst)
        entry = {"name": name, "spec": spec.as_dict(), "expected": SAT if res.sat else UNSAT,
                 "solutions": res.count}
        if spec.kind == "linsys":
            ok, n = linsys_ground_truth(spec)
            entry["elimination"] = {"expected": SAT if ok else UNSAT, "solutions": n}
        entries.append(entry)
    return {"count": count, "seed": seed, "instances": entries}


def manifest_instances(data: dict) -> list[tuple[str, CspInstance, dict]]:
    out = []
    for entry in data["instances"]:
        spec = GeneratorSpec.from_dict(entry["spec"])
        _, inst = generate(spec)
        out.append((entry["name"], inst, entry))
    return out


@dataclass
class CompareReport:
    records: list[dict] = field(default_factory=list)

    @property
    def mismatches(self) -> list[dict]:
        return [r for r in self.records if not r["agree"]]

    @property
    def backtracks(self) -> int:
        return sum(r["backtracks"] for r in self.records)

    def summary(self) -> dict:
        counts = {SAT: 0, UNSAT: 0, ERROR: 0}
        for r in self.records:
            counts[r["solver"]] = counts.get(r["solver"], 0) + 1
        return {
            "instances": len(self.records),
            "mismatches": len(self.mismatches),
            "sat": counts[SAT],
            "unsat": counts[UNSAT],
            "errors": counts[ERROR],
            "backtracks": self.backtracks,
        }

    def as_dict(self) -> dict:
        return {"summary": self.summary(), "records": self.records}


def compare_one(name: str, inst: CspInstance, expected: dict | None = None) -> tuple[dict, str]:
    """Solve and enumerate one instance; returns the record and the trace text."""
    result = solve(inst)
    record = {
        "name": name,
        "instance_sha256": hashlib.sha256(serialize(inst).encode()).hexdigest(),
        "solver": result.status,
        "backtracks": result.backtracks,
    }
    problems = []
    if result.status == ERROR:
        problems.append(f"solver error: {result.error}")
    try:
        oracle = brute_solve(inst)
        record["oracle"] = SAT if oracle.sat else UNSAT
        record["solutions"] = oracle.count
        if result.status != ERROR and record["oracle"] != result.status:
            problems.append("verdicts differ")
    except CapExceeded as exc:
        record["oracle"] = None
        problems.append(str(exc))
    if result.sat:
        record["assignment"] = result.assignment
        record["witness_ok"] = evaluate(inst, result.assignment)
        if not record["witness_ok"]:
            problems.append("assignment violates a constraint")
    if expected is not None:
        if expected.get("expected") not in (None, record["oracle"]):
            problems.append("oracle disagrees with the manifest")
        if expected.get("solutions") not in (None, record.get("solutions")):
            problems.append("solution count disagrees with the manifest")
        elim = expected.get("elimination")
        if elim is not None and elim["expected"] != record["oracle"]:
            problems.append("oracle disagrees with elimination")
    if result.backtracks:
        record["backtrack_states"] = result.backtrack_events()
    trace = result.trace_json()
    record["trace_sha256"] = hashlib.sha256(trace.encode()).hexdigest()
    record["agree"] = not problems
    if problems:
        record["problems"] = problems
    return record, trace


def run_compare(items, trace_sink=None) -> CompareReport:
    """``items`` yields (name, instance, expected-or-None)."""
    report = CompareReport()
    for name, inst, expected in items:
        record, trace = compare_one(name, inst, expected)
        report.records.append(record)
        if trace_sink is not None:
            trace_sink(name, trace)
    return report

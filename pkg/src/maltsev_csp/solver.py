"""Top-level pipeline: consistency, binarisation, Maltsev consistency, reduction.

The reduction walks the variables in order and shrinks each domain to a
block of a maximal congruence until it is a singleton, re-establishing the
consistencies after every shrink.  Sibling blocks are kept as a fallback:
if a choice empties some domain the state is restored and the next block is
tried.  Every such event increments ``backtracks`` and is logged with the
domains and choice path at the failure point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .algebra import bits, maltsev_operation, popcount
from .congruence import maximal_congruences
from .consistency import BinaryInstance, binarize, decode_assignment, enforce_kl_consistency, path_consistency
from .csp import CspInstance, evaluate, validate
from .maltsev import (
    PassiveSet,
    TestPair,
    apply_recorded_failures,
    enforce_maltsev_consistency,
    run_pair,
    update_passive,
)

SAT, UNSAT, ERROR = "SAT", "UNSAT", "ERROR"


@dataclass
class SolveResult:
    status: str
    assignment: dict[str, int] | None = None
    backtracks: int = 0
    trace: list[dict] = field(default_factory=list)
    error: str | None = None

    @property
    def sat(self) -> bool:
        return self.status == SAT

    def backtrack_events(self) -> list[dict]:
        return [e for e in self.trace if e["event"] == "backtrack"]

    def to_dict(self) -> dict:
        out = {"status": self.status, "backtracks": self.backtracks}
        if self.assignment is not None:
            out["assignment"] = self.assignment
        if self.error is not None:
            out["error"] = self.error
        return out

    def trace_json(self) -> str:
        return json.dumps({"result": self.to_dict(), "events": self.trace}, sort_keys=True, indent=1)


@dataclass
class SolverState:
    instance: BinaryInstance
    passive: PassiveSet
    processed: int = 0
    choices: list[tuple[int, int]] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    strands: str = "relevant"

    @property
    def backtracks(self) -> int:
        # the log is shared by every state on the search path
        return sum(1 for e in self.log if e["event"] == "backtrack")

    def snapshot(self) -> dict:
        inst = self.instance
        return {
            "domains": {v: bits(d) for v, d in zip(inst.variables, inst.domains())},
            "choices": [[inst.variables[x], bits(b)] for x, b in self.choices],
        }


def _split(inst: BinaryInstance, x: int):
    """A maximal congruence splitting the domain of ``x`` and its blocks.

    A domain that is not a subuniverse is split along a congruence of the
    subuniverse it generates.
    """
    alg = inst.algebra
    dom = inst.domain(x)
    carrier = dom if alg.is_closed(dom) else alg.closure(dom)
    for cong in maximal_congruences(alg, carrier):
        blocks = [b & dom for b in cong.blocks if b & dom]
        if len(blocks) > 1:
            return cong.partition, blocks, carrier == dom
    return None, [1 << e for e in bits(dom)], False


def _candidates(state: SolverState, x: int) -> list[int]:
    inst = state.instance
    theta, blocks, closed = _split(inst, x)
    if not closed:
        return blocks
    pair = TestPair(x, inst.domain(x), theta)
    alive = state.passive.survivors(inst, pair)
    if alive is None:
        outcome = run_pair(inst, pair, strands=state.strands)
        state.passive.admit(outcome)
        alive = state.passive.survivors(inst, pair)
    return [b for b in blocks if b in alive]


def _shrink(state: SolverState, x: int, block: int) -> SolverState | None:
    inst = state.instance.copy()
    inst.restrict_domain(x, block)
    if not path_consistency(inst):
        return None
    passive = update_passive(state.passive.copy(), inst)
    if apply_recorded_failures(inst, passive) is None:
        return None
    result = enforce_maltsev_consistency(inst, passive, proper=False, strands=state.strands)
    if not result.consistent:
        return None
    return SolverState(result.instance, result.passive, state.processed,
                       state.choices + [(x, block)], state.log, state.strands)


def reduce_next_variable(state: SolverState) -> SolverState | None:
    """Reduce the first non-singleton variable to a single element.

    Returns the state after the variable and everything after it were
    reduced, or None when every block choice dead-ends.
    """
    inst = state.instance
    sizes = inst.domain_sizes()
    while state.processed < len(inst) and sizes[state.processed] == 1:
        state.processed += 1
    if state.processed == len(inst):
        return state
    x = state.processed
    for block in _candidates(state, x):
        state.log.append({"event": "reduce", "variable": inst.variables[x], "block": bits(block),
                          "depth": len(state.choices)})
        child = _shrink(state, x, block)
        if child is not None:
            done = reduce_next_variable(child)
            if done is not None:
                return done
        fail_state = child.snapshot() if child is not None else SolverState(
            inst, state.passive, choices=state.choices + [(x, block)], log=[]).snapshot()
        state.log.append({"event": "backtrack", "variable": inst.variables[x], "block": bits(block),
                          "depth": len(state.choices), "state": fail_state})
    return None


def solve(inst: CspInstance, check_input: bool = True, verify_tests: bool = False,
          tuples: str = "distinct", strands: str = "relevant") -> SolveResult:
    """Decide ``inst`` and return a verified assignment when satisfiable.

    ``tuples`` selects the binarisation variables (see ``binarize``) and
    ``strands`` how strands are checked (see ``enforce_maltsev_consistency``).
    """
    trace: list[dict] = []
    alg = inst.template
    op = maltsev_operation(alg)
    if op is None:
        return SolveResult(ERROR, error="template has no Maltsev operation", trace=trace)
    if check_input:
        report = validate(inst)
        if not report.ok:
            v = report.violations[0]
            return SolveResult(ERROR, error=f"invalid instance: {v.kind} at {v.where}: {v.detail}", trace=trace)
    if not inst.variables:
        return SolveResult(SAT, assignment={}, trace=trace)

    p = inst.max_arity
    h = math.ceil(p / 2)
    trace.append({"event": "start", "maltsev_operation": op, "arity": p, "variables": len(inst.variables),
                  "strands": strands})
    family = enforce_kl_consistency(inst, 2 * h, 3 * h)
    if family is None:
        trace.append({"event": "unsat", "stage": "kl-consistency", "k": 2 * h, "l": 3 * h})
        return SolveResult(UNSAT, trace=trace)
    binst = binarize(inst, p, family, tuples=tuples)
    trace.append({"event": "binarized", "variables": len(binst), "domain_size": binst.algebra.size,
                  "tuples": tuples})
    if not path_consistency(binst):
        trace.append({"event": "unsat", "stage": "path-consistency"})
        return SolveResult(UNSAT, trace=trace)

    mres = enforce_maltsev_consistency(binst, verify=verify_tests, strands=strands)
    trace.append({
        "event": "maltsev-consistency",
        "consistent": mres.consistent,
        "tests": mres.tests,
        "max_depth": mres.max_depth,
        "report": mres.report,
        "gaps": [d.as_dict() for d in mres.diagnostics],
    })
    if not mres.consistent:
        trace.append({"event": "unsat", "stage": "maltsev-consistency"})
        return SolveResult(UNSAT, trace=trace)
    trace.append({"event": "passive", "members": mres.passive.as_report(mres.instance)})

    state = SolverState(mres.instance, mres.passive, log=trace, strands=strands)
    final = reduce_next_variable(state)
    backtracks = state.backtracks
    if final is None:
        trace.append({"event": "unsat", "stage": "reduction", "backtracks": backtracks})
        return SolveResult(UNSAT, backtracks=backtracks, trace=trace)

    values = [bits(d)[0] for d in final.instance.domains()]
    assert all(popcount(d) == 1 for d in final.instance.domains())
    try:
        assignment = decode_assignment(final.instance, values, inst.variables)
    except AssertionError as exc:
        return SolveResult(ERROR, backtracks=backtracks, trace=trace, error=f"decoding failed: {exc}")
    if not evaluate(inst, assignment):
        trace.append({"event": "error", "detail": "reduced assignment violates a constraint"})
        return SolveResult(ERROR, backtracks=backtracks, trace=trace,
                           error="internal verification failed: assignment violates a constraint")
    trace.append({"event": "sat", "backtracks": backtracks})
    return SolveResult(SAT, assignment=assignment, backtracks=backtracks, trace=trace)

"""Maltsev consistency: test instances over maximal-congruence quotients.

For a pair ``(A, theta)`` at variable ``x`` the test instance lives on the
quotient ``A/theta``.  A variable ``y`` is relevant when the theta-blocks of
``A`` have pairwise disjoint images in ``y``; those images form the blocks of
``alpha_y`` and are labelled by the theta-block they come from, so every
relevant domain is read in the same label set.  Otherwise the quotient-level
relation must be the full product and ``y`` drops out.

Blocks that no test solution uses, or whose strand subinstance fails the
recursive check on smaller domains, hold no solution of the instance.  They
are removed from the domain when ``A`` is the whole domain and only recorded
otherwise, since the complement of a block inside a larger domain need not
be a subuniverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import bits, is_homomorphism, mask_from_vector, popcount, quotient, vector_from_mask
from .congruence import Partition, StructuralViolation, is_compatible, maximal_congruences
from .consistency import BinaryInstance, path_consistency
from .cyclic import solve_cyclic


@dataclass(frozen=True)
class TestPair:
    var: int
    sub: int
    theta: Partition

    def key(self) -> tuple:
        return (self.var, self.sub, self.theta.key())

    def sort_key(self) -> tuple:
        return (-popcount(self.sub), self.var, bits(self.sub), self.theta.key())

    def describe(self, inst: BinaryInstance) -> dict:
        return {
            "variable": inst.variables[self.var],
            "subuniverse": bits(self.sub),
            "theta": self.theta.to_lists(),
        }


def build_schedule(inst: BinaryInstance, proper: bool = True) -> list[TestPair]:
    """All (subuniverse, maximal congruence) pairs, larger subuniverses first.

    A subuniverse inside a theta-block of ``A`` is strictly smaller than
    ``A``, so ordering by size puts ``(A, theta)`` before it.  With
    ``proper=False`` only the current domains themselves are used.
    """
    alg = inst.algebra
    pairs = []
    for i in range(len(inst)):
        dom = inst.domain(i)
        if popcount(dom) < 2:
            continue
        subs = alg.subuniverses_within(dom) if proper else ([dom] if alg.is_closed(dom) else [])
        for sub in subs:
            if popcount(sub) < 2:
                continue
            for cong in maximal_congruences(alg, sub):
                pairs.append(TestPair(i, sub, cong.partition))
    return sorted(pairs, key=TestPair.sort_key)


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    detail: dict

    def as_dict(self) -> dict:
        return {"kind": self.kind, **self.detail}


@dataclass
class TestInstance:
    pair: TestPair
    relevant: list[int]
    images: list[int]
    # blocks[r][label] is the alpha-block of relevant[r] linked to theta-block ``label``
    blocks: list[list[int]]
    quotient: BinaryInstance

    def alpha(self, r: int) -> Partition:
        return Partition(tuple(self.blocks[r]))


def _indicator(masks: list[int], size: int) -> np.ndarray:
    return np.array([vector_from_mask(m, size) for m in masks], dtype=np.float32).reshape(len(masks), size)


def build_test_instance(inst: BinaryInstance, pair: TestPair, verify: bool = False):
    """The (A, theta)-test instance, or a :class:`Diagnostic` explaining why not."""
    alg = inst.algebra
    s = alg.size
    x, theta = pair.var, pair.theta
    nb = len(theta)
    ind = _indicator(list(theta.blocks), s)
    # linked[y, b, e]: element e of y is joined to theta-block b
    linked = np.matmul(ind[None], inst.rel[x].astype(np.float32)) > 0
    relevant, images, blocks = [x], [pair.sub], [list(theta.blocks)]
    for y in range(len(inst)):
        if y == x:
            continue
        per_elem = linked[y].sum(axis=0)
        image = per_elem > 0
        if (per_elem[image] == 1).all():
            relevant.append(y)
            images.append(mask_from_vector(image))
            blocks.append([mask_from_vector(linked[y, b]) for b in range(nb)])
        elif not (per_elem[image] == nb).all():
            return Diagnostic("non-rectangular", {
                **pair.describe(inst),
                "at": inst.variables[y],
                "links": [np.flatnonzero(linked[y, b]).tolist() for b in range(nb)],
            })

    if any(b == 0 for row in blocks for b in row):
        return Diagnostic("not-subdirect", {**pair.describe(inst)})

    quot_alg = quotient(alg, theta)
    if verify:
        for r, y in enumerate(relevant[1:], start=1):
            alpha = Partition(tuple(blocks[r]))
            if not is_compatible(alg, alpha):
                return Diagnostic("alpha-not-congruence", {**pair.describe(inst), "at": inst.variables[y]})
            qy = quotient(alg, alpha)
            order = [blocks[r].index(b) for b in alpha.blocks]
            if not is_homomorphism(qy, quot_alg, order):
                return Diagnostic("quotient-not-isomorphic", {**pair.describe(inst), "at": inst.variables[y]})

    idx = np.array(relevant, dtype=np.int64)
    ind_all = np.stack([_indicator(row, s) for row in blocks])
    sub_rel = inst.rel[np.ix_(idx, idx)].astype(np.float32)
    q = np.matmul(np.matmul(ind_all[:, None], sub_rel), np.swapaxes(ind_all, 1, 2)[None]) > 0
    qinst = BinaryInstance(quot_alg, [inst.variables[i] for i in relevant], q)
    return TestInstance(pair, relevant, images, blocks, qinst)


@dataclass
class Strand:
    label: int
    variables: list[int]
    masks: list[int]


@dataclass
class TestOutcome:
    pair: TestPair
    test: TestInstance | None
    removed: list[int] = field(default_factory=list)
    strands: list[Strand] = field(default_factory=list)
    cyclic_removed: list[int] = field(default_factory=list)
    strand_failures: list[int] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def report(self, inst: BinaryInstance, depth: int) -> dict:
        entry = self.pair.describe(inst)
        entry["depth"] = depth
        if self.test is None:
            entry["verdict"] = "skipped"
        else:
            entry["relevant"] = [inst.variables[i] for i in self.test.relevant]
            entry["verdict"] = "removed" if self.removed else "pass"
            entry["removed_blocks"] = [bits(b) for b in self.removed]
            entry["strands"] = len(self.strands)
        entry["gaps"] = [d.as_dict() for d in self.diagnostics]
        return entry


STRAND_MODES = ("relevant", "extended")


class _Context:
    """Shared state for one enforcement: memo of recursive verdicts, counters."""

    def __init__(self, verify: bool = False, strands: str = "relevant"):
        if strands not in STRAND_MODES:
            raise ValueError(f"strands must be one of {STRAND_MODES}")
        self.verify = verify
        self.strands = strands
        self.memo: dict[bytes, bool] = {}
        self.tests = 0
        self.max_depth = 0
        self.diagnostics: list[Diagnostic] = []


def run_test(inst: BinaryInstance, pair: TestPair, budget: int, ctx: _Context | None = None,
             depth: int = 0) -> TestOutcome:
    """Cyclic test of ``pair`` plus the recursive check of each strand."""
    ctx = ctx or _Context()
    ctx.tests += 1
    ctx.max_depth = max(ctx.max_depth, depth)
    test = build_test_instance(inst, pair, verify=ctx.verify)
    if isinstance(test, Diagnostic):
        ctx.diagnostics.append(test)
        return TestOutcome(pair, None, diagnostics=[test])
    try:
        result = solve_cyclic(test.quotient, check=False, witness=False)
    except StructuralViolation as exc:
        diag = Diagnostic("quotient-not-cyclic", {**pair.describe(inst), **exc.detail})
        ctx.diagnostics.append(diag)
        return TestOutcome(pair, None, diagnostics=[diag])
    out = TestOutcome(pair, test)
    viable = result.viable[0]
    for label, block in enumerate(pair.theta.blocks):
        if not viable >> label & 1:
            out.cyclic_removed.append(block)
            out.removed.append(block)
            continue
        strand = Strand(label, list(test.relevant), [row[label] for row in test.blocks])
        if ctx.strands == "relevant":
            sub = inst.sub(strand.variables, strand.masks)
        else:
            # the whole instance with only the relevant domains narrowed
            sub = inst.copy()
            for v, m in zip(strand.variables, strand.masks):
                sub.restrict_domain(v, m)
        if not _check(sub, budget - 1, ctx, depth + 1):
            out.strand_failures.append(block)
            out.removed.append(block)
        else:
            out.strands.append(strand)
    return out


def _check(inst: BinaryInstance, budget: int, ctx: _Context, depth: int) -> bool:
    """Verdict-only Maltsev consistency on domains of size at most ``budget``."""
    if not path_consistency(inst):
        return False
    budget = min(budget, inst.max_domain())
    if budget <= 1:
        return True
    key = inst.key()
    if key in ctx.memo:
        return ctx.memo[key]
    ok = True
    changed = True
    while ok and changed:
        changed = False
        for pair in build_schedule(inst, proper=False):
            if inst.domain(pair.var) != pair.sub:
                continue
            outcome = run_test(inst, pair, budget, ctx, depth)
            if outcome.removed:
                keep = pair.sub & ~_union(outcome.removed)
                inst.restrict_domain(pair.var, keep)
                if keep == 0 or not path_consistency(inst):
                    ok = False
                    break
                changed = True
    ctx.memo[key] = ok
    return ok


def _union(masks) -> int:
    out = 0
    for m in masks:
        out |= m
    return out


def maltsev_check(inst: BinaryInstance, budget: int | None = None) -> bool:
    """The recursive check M_k on a copy of ``inst``; True when consistent."""
    work = inst.copy()
    if budget is None:
        budget = work.max_domain()
    return _check(work, budget, _Context(), 0)


# -- passive subinstances ----------------------------------------------------------


@dataclass
class PassiveMember:
    pair_key: tuple
    label: int
    block: int
    variables: list[int]
    masks: list[int]
    dirty: bool = False


class PassiveSet:
    """Surviving strand subinstances keyed by the test pair that produced them."""

    def __init__(self):
        self.members: dict[tuple, list[PassiveMember]] = {}
        # blocks of proper-subuniverse pairs shown to hold no solution
        self.failures: dict[tuple, int] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self.members.values())

    def admit(self, outcome: TestOutcome) -> None:
        key = outcome.pair.key()
        self.members[key] = [
            PassiveMember(key, st.label, outcome.pair.theta.blocks[st.label], list(st.variables), list(st.masks))
            for st in outcome.strands
        ]

    def record_failures(self, pair: TestPair, blocks) -> None:
        if blocks:
            key = pair.key()
            self.failures[key] = self.failures.get(key, 0) | _union(blocks)

    def copy(self) -> "PassiveSet":
        out = PassiveSet()
        out.members = {
            k: [PassiveMember(m.pair_key, m.label, m.block, list(m.variables), list(m.masks), m.dirty) for m in v]
            for k, v in self.members.items()
        }
        out.failures = dict(self.failures)
        return out

    def survivors(self, inst: BinaryInstance, pair: TestPair) -> list[int] | None:
        """Blocks of ``pair`` whose strands are still alive; None if never tested."""
        key = pair.key()
        if key not in self.members:
            return None
        alive = []
        kept = []
        for m in self.members[key]:
            if m.dirty:
                sub = inst.sub(m.variables, m.masks)
                if not path_consistency(sub):
                    continue
                m.masks = sub.domains()
                m.dirty = False
            kept.append(m)
            alive.append(m.block)
        self.members[key] = kept
        return alive

    def as_report(self, inst: BinaryInstance) -> list[dict]:
        out = []
        for key in sorted(self.members):
            var, sub, theta = key
            for m in self.members[key]:
                out.append({
                    "variable": inst.variables[var],
                    "subuniverse": bits(sub),
                    "block": bits(m.block),
                    "strand": {inst.variables[v]: bits(mk) for v, mk in zip(m.variables, m.masks)},
                })
        return out


def update_passive(passive: PassiveSet, inst: BinaryInstance) -> PassiveSet:
    """Intersect every member with the current domains of ``inst``.

    Members whose strand or base block empties are dropped; shrunk members are
    marked for a lazy (2,3) re-check.
    """
    doms = inst.domains()
    for key in list(passive.members):
        kept = []
        for m in passive.members[key]:
            new = [mk & doms[v] for v, mk in zip(m.variables, m.masks)]
            if any(mk == 0 for mk in new):
                continue
            if new != m.masks:
                m.masks = new
                m.dirty = True
            kept.append(m)
        passive.members[key] = kept
    return passive


# -- top-level enforcement -------------------------------------------------------------


@dataclass
class MaltsevResult:
    instance: BinaryInstance | None
    passive: PassiveSet
    report: list[dict]
    diagnostics: list[Diagnostic]
    tests: int
    max_depth: int

    @property
    def consistent(self) -> bool:
        return self.instance is not None


def apply_recorded_failures(inst: BinaryInstance, passive: PassiveSet) -> bool | None:
    """Remove recorded failing blocks of pairs whose subuniverse is now a domain.

    Returns None on wipe-out, else whether anything changed.
    """
    changed = False
    for (var, sub, _), blocks in sorted(passive.failures.items()):
        dom = inst.domain(var)
        if dom == sub and dom & blocks:
            inst.restrict_domain(var, dom & ~blocks)
            changed = True
            if not path_consistency(inst):
                return None
    return changed


def enforce_maltsev_consistency(inst: BinaryInstance, passive: PassiveSet | None = None,
                                proper: bool = True, verify: bool = False,
                                strands: str = "relevant") -> MaltsevResult:
    """Run the schedule to a fixpoint on a copy of ``inst``.

    Proper-subuniverse pairs are tested in the first pass only; later passes
    re-test the pairs of current domains until nothing is removed.
    ``strands="extended"`` checks each strand inside the whole instance
    instead of on the relevant variables alone.
    """
    work = inst.copy()
    passive = passive.copy() if passive is not None else PassiveSet()
    ctx = _Context(verify, strands)
    report: list[dict] = []

    def fail():
        return MaltsevResult(None, passive, report, ctx.diagnostics, ctx.tests, ctx.max_depth)

    if not path_consistency(work):
        return fail()
    update_passive(passive, work)
    first = proper
    while True:
        changed = apply_recorded_failures(work, passive)
        if changed is None:
            return fail()
        budget = work.max_domain()
        for pair in build_schedule(work, proper=first):
            dom = work.domain(pair.var)
            if pair.sub & ~dom:
                # the domain shrank under this pair during the pass
                report.append({**pair.describe(work), "verdict": "stale"})
                continue
            outcome = run_test(work, pair, budget, ctx)
            report.append(outcome.report(work, 0))
            if pair.sub == dom:
                passive.admit(outcome)
                if outcome.removed:
                    work.restrict_domain(pair.var, dom & ~_union(outcome.removed))
                    if not path_consistency(work):
                        return fail()
                    update_passive(passive, work)
                    changed = True
            else:
                passive.record_failures(pair, outcome.removed)
        first = False
        if not changed:
            break
    for i in range(len(work)):
        d = work.domain(i)
        if popcount(d) > 1 and not work.algebra.is_closed(d):
            ctx.diagnostics.append(Diagnostic("domain-not-closed", {
                "variable": work.variables[i], "domain": bits(d)}))
    return MaltsevResult(work, passive, report, ctx.diagnostics, ctx.tests, ctx.max_depth)


def run_pair(inst: BinaryInstance, pair: TestPair, verify: bool = False,
             strands: str = "relevant") -> TestOutcome:
    """Run one test on ``inst`` (unchanged) with the budget of its largest domain."""
    return run_test(inst.copy(), pair, inst.max_domain(), _Context(verify, strands))


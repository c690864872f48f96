"""The ten acceptance criteria, one test each.

Every test prints a PASS/FAIL line; the lines are repeated in the terminal
summary.
"""

import itertools
import json
import math
import os
import subprocess
import sys
import time

import pytest

from conftest import ACCEPTANCE_LINES, MALTSEV_ALGEBRAS, invariant_relation, linked_components, petersen_tseitin, test_algebras
from maltsev_csp.algebra import affine, check_identities, discriminator, majority2, maltsev_operation, power, semilattice2
from maltsev_csp.classify import Abelian, AbsorbingElement, SkewFree, classify_simple, find_absorbing_element
from maltsev_csp.congruence import BinaryRelation, all_congruences, linkedness
from maltsev_csp.consistency import BinaryInstance, binarize, decode_assignment, enforce_kl_consistency, path_consistency
from maltsev_csp.corpus import compare_one, corpus, run_compare
from maltsev_csp.cyclic import solve_cyclic
from maltsev_csp.generators import GeneratorSpec, SplitMix64, generate, linsys_ground_truth, shift_cycle
from maltsev_csp.maltsev import enforce_maltsev_consistency
from maltsev_csp.oracle import brute_solve, brute_solve_binary, compatible_partitions, set_partitions
from maltsev_csp.solver import SAT, UNSAT

CORPUS_SIZE = 500
CORPUS_SEED = 0


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        line = f"[{verdict}] criterion {self.number}: {self.title}"
        if self.detail:
            line += f" ({self.detail})"
        if exc_type is not None and exc is not None:
            line += f" -- {exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return False


@pytest.fixture(scope="module")
def compared():
    items = corpus(CORPUS_SIZE, CORPUS_SEED)
    traces = {}
    start = time.perf_counter()
    report = run_compare(((name, inst, None) for name, _, inst in items), lambda n, t: traces.__setitem__(n, t))
    elapsed = time.perf_counter() - start
    return items, report, traces, elapsed


def test_criterion_1_oracle_equivalence(compared):
    items, report, _, elapsed = compared
    with Criterion(1, "oracle equivalence on the seeded corpus") as c:
        summary = report.summary()
        c.detail = (f"{summary['instances']} instances, {summary['mismatches']} mismatches, "
                    f"{summary['sat']} SAT / {summary['unsat']} UNSAT, {elapsed:.0f}s")
        assert summary["instances"] >= 500
        kinds = {(s.kind, s.modulus if s.kind == "linsys" else None) for _, s, _ in items}
        assert {("linsys", 2), ("linsys", 3), ("affine-z4", None), ("discriminator", None),
                ("cyclic-shift", None)} <= kinds
        for _, spec, inst in items:
            assert len(inst.variables) <= 8 and inst.template.size <= 4 and inst.max_arity <= 3
        assert summary["errors"] == 0
        assert report.mismatches == []
        for record in report.records:
            assert record["solver"] == record["oracle"]
            if record["solver"] == SAT:
                assert record["witness_ok"]
        # elimination is a second, search-free oracle for the linear systems
        for (_, spec, _), record in zip(items, report.records):
            if spec.kind == "linsys":
                ok, count = linsys_ground_truth(spec)
                assert record["oracle"] == (SAT if ok else UNSAT) and record["solutions"] == count
        assert elapsed < 300


def test_criterion_2_maltsev_identities():
    with Criterion(2, "Maltsev identity checking") as c:
        positive = {"Z2": affine(2), "Z3": affine(3), "Z5": affine(5), "D2": discriminator(2), "D3": discriminator(3)}
        for name, alg in positive.items():
            assert check_identities(alg, alg.operations[0].name).is_maltsev is True, name
        assert check_identities(majority2(), "maj").is_maltsev is False
        # the same facts by direct evaluation of m(x,x,y) = m(y,x,x) = y
        for alg in positive.values():
            t = alg.operations[0].table
            assert all(t[x, x, y] == y == t[y, x, x] for x in range(alg.size) for y in range(alg.size))
        c.detail = f"{len(positive)} Maltsev, majority rejected"


def test_criterion_3_congruences_vs_enumeration():
    with Criterion(3, "congruence engine equals partition enumeration") as c:
        algebras = test_algebras()
        for name, alg in algebras.items():
            if alg.size == 4:
                assert sum(1 for _ in set_partitions(list(range(4)))) == 15
            brute = {tuple(sorted(tuple(b) for b in p)) for p in compatible_partitions(alg)}
            engine = {tuple(sorted(tuple(b) for b in cg.partition.to_lists())) for cg in all_congruences(alg)}
            assert engine == brute, name
        c.detail = f"{len(algebras)} algebras of size <= 4"


def test_criterion_4_classifier():
    with Criterion(4, "simple-algebra classifier") as c:
        for p in (2, 3, 5):
            assert classify_simple(affine(p)) == Abelian()
        d3 = discriminator(3)
        assert classify_simple(d3) == SkewFree()
        assert len(compatible_partitions(power(d3, 2))) == 4
        assert classify_simple(semilattice2()) == AbsorbingElement(0)
        templates = {}
        for _, _, inst in corpus(50, CORPUS_SEED):
            alg = inst.template
            templates[(alg.size, alg.operations[0].table.tobytes())] = alg
        checked = list(templates.values()) + list(MALTSEV_ALGEBRAS.values())
        for alg in checked:
            assert maltsev_operation(alg) is not None
            assert find_absorbing_element(alg) is None
        c.detail = f"Con(D3^2) has 4 members; {len(checked)} Maltsev algebras without absorbing elements"


def random_relation(rng: SplitMix64):
    names = sorted(MALTSEV_ALGEBRAS)
    alg = MALTSEV_ALGEBRAS[names[rng.below(len(names))]]
    n = alg.size
    seeds = {(rng.below(n), rng.below(n)) for _ in range(1 + rng.below(4))}
    return alg, invariant_relation(alg, sorted(seeds))


def test_criterion_5_rectangularity_and_linked_blocks():
    with Criterion(5, "rectangularity and linked-block fullness") as c:
        rng = SplitMix64(2024)
        violations = 0
        for _ in range(200):
            alg, rel = random_relation(rng)
            for (a, b), (a2, b2) in itertools.product(rel, repeat=2):
                if (a, b2) in rel and (a2, b2) in rel and (a2, b) not in rel:
                    violations += 1
            comps = linked_components(rel)
            for left, right in comps:
                violations += sum((x, y) not in rel for x in left for y in right)
            # the engine's linkedness congruences give the same blocks
            alpha, beta = linkedness(BinaryRelation.of(rel), alg, alg)
            assert sorted(map(sorted, alpha.partition.to_lists())) == sorted(sorted(left) for left, _ in comps)
            assert sorted(map(sorted, beta.partition.to_lists())) == sorted(sorted(right) for _, right in comps)
        c.detail = f"200 relations, {violations} violations"
        assert violations == 0


def test_criterion_6_binarization_equisatisfiable():
    with Criterion(6, "binarization equisatisfiability") as c:
        rng = SplitMix64(6)
        agree = sat = 0
        for k in range(100):
            p = 2 + k % 2
            spec = GeneratorSpec("linsys", 3 + rng.below(4), 1 + rng.below(6), p, 3, rng.next())
            _, inst = generate(spec)
            original = brute_solve(inst).solution_set(inst.variables)
            b = binarize(inst, 3)
            if b is None or not path_consistency(b):
                assert not original
                agree += 1
                continue
            decoded = [tuple(decode_assignment(b, [s[v] for v in b.variables], inst.variables).values())
                       for s in brute_solve_binary(b).solutions]
            assert len(decoded) == len(set(decoded)) == len(original)
            assert set(decoded) == original
            agree += 1
            sat += bool(original)
        c.detail = f"{agree}/100 agree, {sat} satisfiable"


def test_criterion_7_cyclic_shift_cycles():
    with Criterion(7, "cyclic solver on Z3 shift cycles") as c:
        count = 0
        for length in range(3, 9):
            for shifts in itertools.product(range(3), repeat=length):
                inst = shift_cycle(3, list(shifts))
                verdict = solve_cyclic(BinaryInstance.from_csp(inst)).sat
                assert verdict == (sum(shifts) % 3 == 0) == brute_solve(inst).sat, shifts
                count += 1
        c.detail = f"{count} cycles of length 3-8, every shift vector"


def test_criterion_8_solution_preservation():
    with Criterion(8, "Maltsev consistency preserves solution sets") as c:
        checked = refuted = 0
        for name, _, inst in corpus(CORPUS_SIZE, CORPUS_SEED):
            original = brute_solve(inst).solution_set(inst.variables)
            p = inst.max_arity
            h = math.ceil(p / 2)
            family = enforce_kl_consistency(inst, 2 * h, 3 * h)
            b = None if family is None else binarize(inst, p, family)
            if b is None or not path_consistency(b):
                assert not original, name
                refuted += 1
                continue
            before = brute_solve_binary(b).solution_set(b.variables)
            decoded = {tuple(decode_assignment(b, list(t), inst.variables).values()) for t in before}
            assert decoded == original, name
            res = enforce_maltsev_consistency(b)
            after = brute_solve_binary(res.instance).solution_set(b.variables) if res.consistent else set()
            assert before == after, name
            checked += 1
        c.detail = f"{checked} instances compared, {refuted} refuted before the check"


def test_criterion_9_backtrack_instrumentation(compared):
    _, report, _, _ = compared
    with Criterion(9, "backtrack counter reported") as c:
        total = report.backtracks
        with_states = [r for r in report.records if r["backtracks"]]
        for r in with_states:
            assert len(r["backtrack_states"]) == r["backtracks"]
        # an instance outside the corpus that does need backtracking
        record, trace = compare_one("petersen-tseitin", petersen_tseitin())
        assert record["agree"] and record["solver"] == UNSAT
        assert record["backtracks"] > 0
        stages = [e["stage"] for e in json.loads(trace)["events"] if e["event"] == "unsat"]
        assert stages == ["reduction"]
        for event in record["backtrack_states"]:
            assert set(event["state"]) == {"domains", "choices"}
            json.dumps(event)
        c.detail = (f"corpus backtracks = {total}; Petersen Tseitin instance: "
                    f"{record['backtracks']} backtracks, states serialized")


def test_criterion_10_determinism(compared, tmp_path):
    _, report, traces, _ = compared
    with Criterion(10, "byte-identical reports, traces and witnesses") as c:
        env = dict(os.environ, PYTHONHASHSEED="12345")
        out = tmp_path / "traces"
        rep = tmp_path / "report.json"
        proc = subprocess.run(
            [sys.executable, "-m", "maltsev_csp.cli", "compare", "--generate", str(CORPUS_SIZE),
             "--seed", str(CORPUS_SEED), "--report", str(rep), "--traces", str(out)],
            env=env, capture_output=True, text=True, check=False,
        )
        assert proc.returncode == 0, proc.stderr
        here = json.dumps(report.as_dict(), sort_keys=True, indent=1) + "\n"
        assert rep.read_text() == here
        files = sorted(out.iterdir())
        assert len(files) == len(traces)
        for path in files:
            name = path.name[: -len(".trace.json")]
            assert path.read_text() == traces[name] + "\n", name
        assert json.loads(proc.stdout) == report.summary()
        c.detail = f"report and {len(files)} traces identical across processes"

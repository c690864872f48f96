"""Command-line front end: ``maltsev-csp <command> ...``.

Exit codes: 0 for SAT (or success), 1 for UNSAT (or a failed comparison),
2 for usage and input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

from .algebra import AlgebraError, algebra_from_dict, bits, maltsev_operation, power
from .classify import class_name, classify_simple, find_absorbing_element, is_abelian
from .congruence import StructuralViolation, all_congruences, is_simple
from .consistency import BinaryInstance, binarize, dumps_binary, enforce_kl_consistency
from .corpus import corpus, manifest, manifest_instances, run_compare
from .csp import CspInstance, ParseError, load_instance, parse, serialize, validate
from .cyclic import CyclicPreconditionError, solve_cyclic
from .generators import KINDS, GeneratorSpec, generate
from .maltsev import STRAND_MODES
from .oracle import CapExceeded, brute_solve
from .solver import ERROR, SAT, solve

EXIT_SAT, EXIT_UNSAT, EXIT_ERROR = 0, 1, 2
DEFAULT_BINARIZE_BOUND = 4096

class UsageError(Exception):
    pass

def _read_instance(path: str) -> CspInstance:
    try:
        if path == "-":
            return parse(sys.stdin.read(), os.getcwd())
        return load_instance(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except ParseError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None

def _read_json(path: str):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse {path}: {exc.msg} at {exc.lineno}:{exc.colno}") from None

def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")

def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))

def _warn_binarize(inst: CspInstance, tuples: str, bound: int) -> None:
    n = len(inst.variables)
    h = math.ceil(inst.max_arity / 2) if inst.constraints else 1
    count = n**h if tuples == "all" else math.comb(n, min(h, n))
    if count > bound:
        print(f"warning: binarization introduces {count} variables (bound {bound})", file=sys.stderr)

# -- commands ------------------------------------------------------------------

def cmd_solve(args) -> int:
    inst = _read_instance(args.instance)
    if args.cyclic:
        return _solve_cyclic(inst)
    _warn_binarize(inst, args.tuples, args.binarize_bound)
    result = solve(inst, tuples=args.tuples, strands=args.strands)
    if args.trace:
        _write(args.trace, result.trace_json())
    if result.status == ERROR:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_ERROR
    if args.oracle_check:
        try:
            oracle = brute_solve(inst)
        except CapExceeded as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        if oracle.sat != result.sat:
            print(f"error: solver says {result.status} but the oracle disagrees", file=sys.stderr)
            return EXIT_ERROR
    if result.sat:
        _emit({"status": SAT, "assignment": result.assignment, "backtracks": result.backtracks})
        return EXIT_SAT
    _emit({"status": result.status, "backtracks": result.backtracks})
    return EXIT_UNSAT

def _solve_cyclic(inst: CspInstance) -> int:
    try:
        binst = BinaryInstance.from_csp(inst)
    except ValueError:
        raise UsageError("--cyclic needs an instance with unary and binary constraints only") from None
    try:
        res = solve_cyclic(binst)
    except (CyclicPreconditionError, StructuralViolation) as exc:
        print(f"error: not a cyclic instance: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if res.sat:
        _emit({"status": SAT, "assignment": dict(zip(inst.variables, res.assignment))})
        return EXIT_SAT
    out = {"status": "UNSAT"}
    if res.witness is not None:
        out["witness"] = res.witness.as_dict()
    _emit(out)
    return EXIT_UNSAT

def cmd_oracle(args) -> int:
    inst = _read_instance(args.instance)
    try:
        res = brute_solve(inst, cap=args.cap if args.cap is not None else -1)
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = {"status": SAT if res.sat else "UNSAT", "solutions": res.count}
    if args.all:
        out["assignments"] = res.solutions
    elif res.sat:
        out["assignment"] = res.solutions[0]
    _emit(out)
    return EXIT_SAT if res.sat else EXIT_UNSAT

def cmd_compare(args) -> int:
    items = []
    for path in args.instances:
        items.append((path, _read_instance(path), None))
    if args.manifest:
        items.extend(manifest_instances(_read_json(args.manifest)))
    if args.generate:
        items.extend((name, inst, None) for name, _, inst in corpus(args.generate, args.seed))
    if not items:
        raise UsageError("compare needs instance files, --manifest or --generate")

    sink = None
    if args.traces:
        os.makedirs(args.traces, exist_ok=True)

        def sink(name, trace):
            _write(os.path.join(args.traces, os.path.basename(name) + ".trace.json"), trace)

    start = time.perf_counter()
    report = run_compare(items, sink)
    elapsed = time.perf_counter() - start
    text = json.dumps(report.as_dict(), sort_keys=True, indent=1)
    if args.report:
        _write(args.report, text)
    summary = report.summary()
    for r in report.mismatches:
        print(f"MISMATCH {r['name']}: {'; '.join(r.get('problems', []))}", file=sys.stderr)
    for r in report.records:
        for event in r.get("backtrack_states", []):
            print(f"BACKTRACK {r['name']}: {json.dumps(event, sort_keys=True)}", file=sys.stderr)
    _emit(summary)
    print(f"compared {summary['instances']} instances in {elapsed:.1f}s", file=sys.stderr)
    return EXIT_SAT if not report.mismatches else EXIT_UNSAT

def _load_algebra(path: str):
    data = _read_json(path)
    if isinstance(data, dict) and "algebra" in data and "size" not in data:
        data = data["algebra"]
    try:
        return algebra_from_dict(data)
    except AlgebraError as exc:
        raise UsageError(f"cannot load algebra from {path}: {exc}") from None

def cmd_classify(args) -> int:
    alg = _load_algebra(args.algebra)
    try:
        cls = classify_simple(alg)
    except (AlgebraError, StructuralViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    name = class_name(cls)
    print(name)
    witness: dict = {"size": alg.size, "simple": is_simple(alg), "maltsev_operation": maltsev_operation(alg)}
    if name == "absorbing":
        witness["absorbing_element"] = find_absorbing_element(alg)
    elif name == "abelian":
        witness["diagonal_is_block"] = is_abelian(alg)
    else:
        witness["congruences_of_square"] = [c.partition.to_lists() for c in all_congruences(power(alg, 2))]
    _emit(witness)
    return EXIT_SAT

def cmd_gen(args) -> int:
    arity = args.arity if args.arity is not None else (3 if args.kind == "linsys" else 2)
    try:
        spec = GeneratorSpec(args.kind, args.vars, args.eqs, args.p, arity, args.seed, args.base)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _, inst = generate(spec)
    text = serialize(inst)
    if args.output:
        _write(args.output, text)
    else:
        print(text)
    return EXIT_SAT

def cmd_corpus(args) -> int:
    text = json.dumps(manifest(args.count, args.seed), sort_keys=True, indent=1)
    if args.output:
        _write(args.output, text)
    else:
        print(text)
    return EXIT_SAT

def _parse_kl(text: str) -> tuple[int, int]:
    try:
        k, l = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected k,l with two integers") from None
    if not 1 <= k <= l:
        raise argparse.ArgumentTypeError("need 1 <= k <= l")
    return k, l

def cmd_consistency(args) -> int:
    inst = _read_instance(args.instance)
    report = validate(inst)
    if not report.ok:
        v = report.violations[0]
        raise UsageError(f"invalid instance: {v.kind} at {v.where}: {v.detail}")
    if args.consistency is None:
        h = math.ceil(inst.max_arity / 2) if inst.constraints else 1
        k, l = 2 * h, 3 * h
    else:
        k, l = args.consistency
    if any(c.arity > k for c in inst.constraints):
        raise UsageError(f"k={k} is smaller than the largest constraint arity")
    family = enforce_kl_consistency(inst, k, l)
    if family is None:
        _emit({"status": "UNSAT", "k": k, "l": l})
        return EXIT_UNSAT
    if args.binarize:
        if k < 2:
            raise UsageError("--binarize needs k >= 2")
        _warn_binarize(inst, args.tuples, args.binarize_bound)
        binst = binarize(inst, 2 * (k // 2), family, tuples=args.tuples)
        print(dumps_binary(binst))
    else:
        out = {"status": "consistent", "k": k, "l": l,
               "domains": {v: bits(d) for v, d in zip(inst.variables, family.domains())}}
        _emit(out)
    return EXIT_SAT

# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maltsev-csp", description="CSP solver for Maltsev templates")
    sub = parser.add_subparsers(dest="command", required=True)

    def binarize_opts(p):
        p.add_argument("--tuples", choices=("distinct", "all"), default="distinct",
                       help="binarisation variables: increasing distinct tuples or every tuple")
        p.add_argument("--binarize-bound", type=int, default=DEFAULT_BINARIZE_BOUND,
                       help="warn when binarisation creates more variables than this")

    p = sub.add_parser("solve", help="decide an instance")
    p.add_argument("instance", help="instance JSON file, or - for stdin")
    p.add_argument("--oracle-check", action="store_true", help="confirm the verdict by brute force")
    p.add_argument("--trace", metavar="FILE", help="write the event log as JSON")
    p.add_argument("--cyclic", action="store_true", help="use the cyclic solver directly")
    p.add_argument("--strands", choices=STRAND_MODES, default="relevant",
                   help="check strands on the relevant variables or inside the whole instance")
    binarize_opts(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="solve by exhaustive search")
    p.add_argument("instance")
    p.add_argument("--all", action="store_true", help="print every solution")
    p.add_argument("--cap", type=int, help="bound on the search space (default MALTSEV_ORACLE_CAP or 10^7)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="run solver and oracle and diff the verdicts")
    p.add_argument("instances", nargs="*")
    p.add_argument("--manifest", help="corpus manifest written by the corpus command")
    p.add_argument("--generate", type=int, default=0, metavar="N", help="compare N seeded corpus instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", metavar="FILE", help="write the full report as JSON")
    p.add_argument("--traces", metavar="DIR", help="write every solver trace into DIR")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("classify", help="classify a simple idempotent algebra")
    p.add_argument("algebra", help="algebra JSON file (or an instance file with an inline algebra)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gen", help="generate a seeded instance")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--p", type=int, default=2, help="modulus or algebra size")
    p.add_argument("--vars", type=int, default=4)
    p.add_argument("--eqs", "--constraints", dest="eqs", type=int, default=4)
    p.add_argument("--arity", type=int)
    p.add_argument("--base", choices=("affine", "discriminator"), default="affine")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("corpus", help="write a manifest of seeded instances with oracle verdicts")
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("consistency", help="enforce (k,l)-consistency")
    p.add_argument("instance")
    p.add_argument("--consistency", type=_parse_kl, metavar="K,L")
    p.add_argument("--binarize", action="store_true", help="print the binarized instance")
    binarize_opts(p)
    p.set_defaults(func=cmd_consistency)
    return parser

def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

if __name__ == "__main__":
    sys.exit(main())

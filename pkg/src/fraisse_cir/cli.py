"""Command-line frontend. Every run writes one JSON report."""

from __future__ import annotations

import argparse
import itertools
import json
import random
import sys

from . import cir as cirmod
from . import dynamics as dyn
from .fraisse import (
    CLASS_NAMES,
    DEFAULT_SIZE_CAP,
    GrowthCapExceeded,
    build_approximation,
    check_extension_property,
    get_class,
)
from .structures import PartialMap, tuple_type_equal

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VIOLATION, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3
COMMANDS = ("build-limit", "check-cir", "no-cir-cert", "build-shift", "check-repulsive",
            "check-shifty", "conjugate", "verify-density", "word-search")

# what the no-CIR certificate should say for classes where the answer is known
CERT_EXPECTED = {"circular": True, "circular-point": False, "dlo": False}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _nonneg(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {v}")
    return v


def make_parser():
    p = _Parser(prog="fraisse-cir", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--class", dest="klass", help=f"one of: {', '.join(CLASS_NAMES)}")
    p.add_argument("--cir", help=f"one of: {', '.join(cirmod.CIR_NAMES)}")
    p.add_argument("--stages", type=_nonneg, default=6)
    p.add_argument("--rounds", type=_nonneg, default=3)
    p.add_argument("--ext-size", type=_nonneg, default=1)
    p.add_argument("--budget", type=_nonneg, default=None,
                   help="random samples (checks) or witnesses per stage (shift builds)")
    p.add_argument("--n-max", type=_nonneg, default=None)
    p.add_argument("--core-size", type=_nonneg, default=8)
    p.add_argument("--max-len", type=_nonneg, default=2)
    p.add_argument("--base-size", type=_nonneg, default=2)
    p.add_argument("--min-size", type=_nonneg, default=None,
                   help="pad approximations to this many points (check-cir 40, no-cir-cert 8)")
    p.add_argument("--seed-block", type=_nonneg, default=1,
                   help="size of the first block of a shift system")
    p.add_argument("--witness-stages", type=_nonneg, default=None)
    p.add_argument("--verify-len", type=_nonneg, default=0,
                   help="0 checks every interval pair, k only intervals up to length k")
    p.add_argument("--truncate", type=_nonneg, default=None)
    p.add_argument("--word-len", type=_nonneg, default=4)
    p.add_argument("--target", choices=("shift", "identity", "random"), default="shift")
    p.add_argument("--axiom", choices=cirmod.AXIOMS, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size-cap", type=_nonneg, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--json", action=argparse.BooleanOptionalAction, default=True)
    return p


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (set, frozenset)):
        return sorted(_jsonable(v) for v in x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def dumps(doc) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n"


# helpers --------------------------------------------------------------------------

def _resolve(args, need_cir):
    cir_name = args.cir
    klass = args.klass
    if need_cir:
        if cir_name is None:
            raise UsageError("--cir is required for this command")
        if cir_name not in cirmod.CIR_NAMES:
            raise UsageError(f"unknown cir {cir_name!r}")
        if klass is None:
            klass = cirmod.default_class(cir_name)
        try:
            P = cirmod.get_cir(cir_name, klass)
        except KeyError as e:
            raise UsageError(str(e.args[0])) from None
        return P.klass, P
    if klass is None:
        raise UsageError("--class is required for this command")
    try:
        return get_class(klass), None
    except KeyError as e:
        raise UsageError(str(e.args[0])) from None


def _seed_block(K, args):
    if args.seed_block <= 1:
        return None
    return K.random_member(args.seed_block, random.Random(f"seed-block:{args.seed}"))


def _system(args):
    K, P = _resolve(args, True)
    if args.stages < 1:
        raise UsageError("--stages must be at least 1")
    budget = 4 if args.budget is None else args.budget
    verify = True if args.verify_len == 0 else args.verify_len
    return dyn.build_shift_system(K, P, args.stages, budget, args.seed,
                                  seed_block=_seed_block(K, args),
                                  witness_stages=args.witness_stages,
                                  size_cap=args.size_cap or dyn.SHIFT_SIZE_CAP,
                                  verify=verify)


def _system_summary(S):
    return {"stage": S.stage, "size": S.size, "class": S.klass.name, "cir": S.cir.name,
            "witnesses": sum(len(e["witnesses"]) for e in S.ledger)}


# commands --------------------------------------------------------------------------

def cmd_build_limit(args):
    K, _ = _resolve(args, False)
    if args.ext_size < 1:
        raise UsageError("--ext-size must be at least 1")
    L = build_approximation(K, args.ext_size, args.rounds, args.seed,
                            size_cap=args.size_cap or DEFAULT_SIZE_CAP)
    core = L.stage_sizes[-2] if len(L.stage_sizes) > 1 else L.stage_sizes[-1]
    ep = check_extension_property(L, core, args.ext_size)
    ok = ep["unsatisfied"] == 0 or args.rounds == 0
    return (EXIT_OK if ok else EXIT_VIOLATION), {"approximation": L.to_doc(), "extension_property": ep}


def _approx_for(K, args, min_size):
    return build_approximation(K, args.ext_size or 1, args.rounds, args.seed, max_base=3,
                               min_size=min_size, size_cap=args.size_cap or DEFAULT_SIZE_CAP)


def cmd_check_cir(args):
    K, P = _resolve(args, True)
    L = _approx_for(K, args, 40 if args.min_size is None else args.min_size)
    budget = cirmod.Budget(samples=200 if args.budget is None else args.budget)
    axioms = [args.axiom] if args.axiom else list(cirmod.AXIOMS)
    reports = [cirmod.check_axiom(P, ax, L, budget, args.seed) for ax in axioms]
    unexpected = [r["axiom"] for r in reports if (r["status"] == "fail") != (r["expected"] == "fail")]
    for r in reports:
        if r["expected"] == "fail" and r["status"] == "fail":
            r["note"] = "failed as expected"
    code = EXIT_VIOLATION if unexpected else EXIT_OK
    return code, {"structure_size": L.structure.size, "reports": reports, "unexpected": unexpected}


def cmd_no_cir_cert(args):
    K, _ = _resolve(args, False)
    L = _approx_for(K, args, max(args.base_size + 1, 8) if args.min_size is None else args.min_size)
    result = cirmod.all_one_types_split(L, args.base_size)
    expected = CERT_EXPECTED.get(K.name)
    doc = {"structure_size": L.structure.size, "base_size": args.base_size,
           "all_one_types_split": result, "expected": expected,
           "certificate": "all 1-types split" if result else None,
           "structure": L.structure.to_doc()}
    code = EXIT_OK if expected is None or expected == result else EXIT_VIOLATION
    return code, doc


def cmd_build_shift(args):
    S = _system(args)
    rep = dyn.verify_shift_system(S, None if args.verify_len == 0 else args.verify_len,
                                  anchored=args.verify_len != 0)
    return (EXIT_OK if rep["ok"] else EXIT_VIOLATION), {"system": S.to_doc(), "verification": rep}


def cmd_check_repulsive(args):
    S = _system(args)
    m_max = S.stage - 2
    if m_max < 0:
        raise UsageError("need at least 2 stages")
    blk = sorted(S.block(0, min(1, S.stage - 1)) - set(S.fixed_points()))
    rows = []
    code = EXIT_OK
    for k in range(len(blk) + 1):
        for A in itertools.combinations(blk, k):
            r = dyn.check_strongly_repulsive(S, A, m_max)
            rows.append({"A": list(A), "n": r["n"], "status": r["status"]})
            if r["status"] == "undefined":
                code = max(code, EXIT_INCONCLUSIVE)
            elif r["status"] != "pass" or r["n"] > 2:
                code = EXIT_VIOLATION
    return code, {"system": _system_summary(S), "m_max": m_max, "results": rows}


def cmd_check_shifty(args):
    S = _system(args)
    samples = 100 if args.budget is None else args.budget
    r = dyn.check_shifty(S, samples, args.n_max, args.seed)
    code = EXIT_OK if r["samples"] and r["success_rate"] >= 0.95 else EXIT_INCONCLUSIVE
    return code, {"system": _system_summary(S), "shifty": r}


def _conjugator(args):
    S = _system(args)
    C = dyn.build_conjugator(S, args.core_size, args.max_len, args.n_max)
    return S, C


def cmd_conjugate(args):
    S, C = _conjugator(args)
    rep = dyn.verify_cyclic_density(C)
    ok = rep["coverage"] == 1.0 and rep["partial_isomorphism"] and rep["rechecks_passed"]
    return (EXIT_OK if ok else EXIT_VIOLATION), {"system": _system_summary(S),
                                                  "conjugator": C.to_doc(), "density": rep}


def cmd_verify_density(args):
    S, C = _conjugator(args)
    if args.truncate is not None:
        C = C.truncated(args.truncate)
    rep = dyn.verify_cyclic_density(C)
    if args.truncate is not None:
        code = EXIT_OK
    else:
        code = EXIT_OK if rep["coverage"] == 1.0 else EXIT_VIOLATION
    return code, {"system": _system_summary(S), "density": rep}


def cmd_word_search(args):
    S = _system(args)
    M = S.structure
    sigma = S.shift_map(1)
    gens = [sigma]
    if args.core_size:
        C = dyn.build_conjugator(S, args.core_size, args.max_len, args.n_max)
        gens.append(C.as_map())
    base = sorted(S.block(0, 0) - set(S.fixed_points()))
    if args.target == "identity":
        target = PartialMap(M, M, {x: x for x in base})
    elif args.target == "shift":
        target = PartialMap(M, M, {x: sigma(x) for x in base if x in sigma.domain})
    else:
        rng = random.Random(args.seed)
        pts = list(range(min(M.size, max(args.core_size, 2))))
        for _ in range(1000):
            a = tuple(rng.sample(pts, min(2, len(pts))))
            b = tuple(rng.sample(pts, len(a)))
            if tuple_type_equal(M, a, b):
                break
        target = PartialMap(M, M, dict(zip(a, b)))
    word = dyn.word_density_search(S, gens, target, args.word_len)
    doc = {"system": _system_summary(S), "target": target.to_doc(),
           "generators": ["sigma", "tau"][:len(gens)],
           "word": None if word is None else [list(w) for w in word]}
    if word is not None:
        doc["verified"] = dyn.apply_word(gens, word, target.domain) == target.image
    return (EXIT_OK if word is not None else EXIT_INCONCLUSIVE), doc


HANDLERS = {
    "build-limit": cmd_build_limit,
    "check-cir": cmd_check_cir,
    "no-cir-cert": cmd_no_cir_cert,
    "build-shift": cmd_build_shift,
    "check-repulsive": cmd_check_repulsive,
    "check-shifty": cmd_check_shifty,
    "conjugate": cmd_conjugate,
    "verify-density": cmd_verify_density,
    "word-search": cmd_word_search,
}

STATUS = {EXIT_OK: "ok", EXIT_VIOLATION: "violation", EXIT_INCONCLUSIVE: "inconclusive",
          EXIT_USAGE: "usage-error"}


def run(args) -> tuple[int, dict]:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "json")}
    try:
        code, result = HANDLERS[args.command](args)
    except UsageError as e:
        code, result = EXIT_USAGE, {"error": str(e)}
    except (GrowthCapExceeded, dyn.ShiftError) as e:
        code, result = EXIT_INCONCLUSIVE, {"error": str(e)}
    report = {"schema_version": SCHEMA_VERSION, "command": args.command, "config": config,
              "seed": args.seed, "status": STATUS[code], "exit_code": code, "result": result}
    return code, report


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    code, report = run(args)
    text = dumps(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.json and not args.out:
        sys.stdout.write(text)
    elif not args.json:
        print(f"{args.command}: {report['status']} (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())

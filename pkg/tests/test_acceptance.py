"""End-to-end acceptance suite. Each test records one PASS/FAIL line."""

import itertools
import random
import time

import pytest

from acceptance_log import record
from fraisse_cir.cir import (
    AXIOMS,
    Budget,
    all_one_types_split,
    check_axiom,
    get_cir,
    indep,
    non_splitting_report,
    splits,
)
from fraisse_cir.cli import main
from fraisse_cir.dynamics import (
    build_conjugator,
    build_shift_system,
    check_shifty,
    check_strongly_repulsive,
    verify_cyclic_density,
    verify_shift_system,
)
from fraisse_cir.fraisse import build_approximation, get_class
from fraisse_cir.structures import FinStructure, OrderRelation, generated_substructure

# (label, cir name, class name)
CATALOG = [
    ("trivial", "trivial", "set"),
    ("dlo", "dlo", "dlo"),
    ("random graph", "free", "graph"),
    ("henson", "free", "henson"),
    ("tournament", "tournament", "tournament"),
    ("poset", "poset", "poset"),
    ("circular-point", "circular-point", "circular-point"),
    ("ordered-graph", "ordered-graph", "ordered-graph"),
    ("tree-point", "tree-point", "tree-point"),
]

SHIFT_SYSTEMS = [("pure set", "trivial"), ("dlo", "dlo"), ("random graph", "free"),
                 ("tournament", "tournament"), ("ordered random graph", "ordered-graph")]


def approximation(klass):
    return build_approximation(get_class(klass), rounds=3, seed=1, max_base=3, min_size=40)


@pytest.fixture(scope="module")
def approximations():
    return {label: (get_cir(c, k), approximation(k)) for label, c, k in CATALOG}


@pytest.fixture(scope="module")
def small_systems():
    out = {}
    for label, c in SHIFT_SYSTEMS:
        P = get_cir(c)
        D0 = P.klass.random_member(3, random.Random(f"seed-block:{label}"))
        out[label] = build_shift_system(P.klass, P, 5, seed=1, seed_block=D0)
    return out


# 1 ------------------------------------------------------------------------------------------

def test_criterion_1_axiom_suite(approximations):
    budget = Budget(max_set=2, window=8, samples=200, max_random_set=3)
    problems = []
    slowest = 0.0
    inconclusive = 0
    for label, (P, L) in approximations.items():
        assert L.structure.size >= 40
        t0 = time.perf_counter()
        for ax in AXIOMS:
            r = check_axiom(P, ax, L, budget, seed=0)
            if ax == "extension":
                inconclusive += r["inconclusive"]
                if r["status"] == "fail":
                    problems.append((label, ax))
                continue
            if r["status"] != "pass":
                problems.append((label, ax, r["counterexample"]))
            if r["random_configs"] < 200:
                problems.append((label, ax, "too few random configurations"))
        slowest = max(slowest, time.perf_counter() - t0)
    ok = not problems and slowest < 180
    record(1, ok, f"{len(approximations)} CIRs x {len(AXIOMS)} axioms, violations={problems}, "
                  f"extension inconclusives={inconclusive}, slowest entry {slowest:.1f}s")
    assert ok


# 2 ------------------------------------------------------------------------------------------

def test_criterion_2_naive_tree_counterexample():
    P = get_cir("naive-tree")
    L = approximation("tree")
    r = check_axiom(P, "transitivity-left", L, Budget(), seed=0)
    M = L.structure
    cx = r["counterexample"] or {}
    A, D, C, B = (frozenset(cx.get(k, ())) for k in ("A", "D", "C", "B"))
    ok = r["status"] == "fail" and len(A) == len(D) == len(B) == 1 and not C
    if ok:
        (x,), (c,), (b,) = A, D, B
        gen = generated_substructure(M, {x, c, b})
        ok = (M.meet(x, c) == x and M.less(x, c)         # x plays the role of a^c
              and indep(P, M, {x}, {c}, {b})              # a^c indep over c from b
              and indep(P, M, {c}, (), {b})               # c indep from b
              and not indep(P, M, {x}, (), {b})           # but a^c not indep from b
              and not indep(P, M, {x, c}, (), {b})
              and len(gen) <= 5)
    record(2, ok, f"status={r['status']} counterexample={cx}")
    assert ok


# 3 ------------------------------------------------------------------------------------------

def test_criterion_3_no_cir_certificate():
    t0 = time.perf_counter()
    circ = build_approximation(get_class("circular"), rounds=3, seed=1, max_base=3, min_size=8)
    dlo = build_approximation(get_class("dlo"), rounds=3, seed=1, max_base=3, min_size=8)
    pointed = build_approximation(get_class("circular-point"), rounds=3, seed=1, max_base=3,
                                  min_size=8)
    sizes = (circ.structure.size, dlo.structure.size, pointed.structure.size)
    got = (all_one_types_split(circ, 2), all_one_types_split(dlo, 2),
           all_one_types_split(pointed, 2))
    dt = time.perf_counter() - t0
    ok = got == (True, False, False) and min(sizes) >= 8 and dt < 60
    record(3, ok, f"circular/dlo/circular-point split={got} sizes={sizes} in {dt:.1f}s")
    assert ok


# 4 ------------------------------------------------------------------------------------------

def test_criterion_4_shift_invariants(small_systems):
    bad = {}
    checked = 0
    for label, S in small_systems.items():
        rep = verify_shift_system(S)
        checked += rep["independence_checked"] + rep["isomorphism_checked"]
        if not rep["ok"] or S.stage < 4:
            bad[label] = rep
    ok = not bad
    record(4, ok, f"{len(small_systems)} systems with 5 stages, {checked} interval checks, "
                  f"failures={sorted(bad)}")
    assert ok


# 5 ------------------------------------------------------------------------------------------

def test_criterion_5_strong_repulsiveness(small_systems):
    failures = []
    total = 0
    for label, S in small_systems.items():
        M = S.structure
        m_max = S.stage - 2
        blk = sorted(S.block(0, 1) - set(S.fixed_points()))
        for k in range(len(blk) + 1):
            for A in itertools.combinations(blk, k):
                total += 1
                r = check_strongly_repulsive(S, A, m_max, max_len=3)
                if r["status"] != "pass" or r["n"] > 2:
                    failures.append((label, A, r["status"], r["n"]))
                    continue
                # independent recheck of every defined m from n on
                for m in range(r["n"], m_max + 1):
                    img = frozenset(S.shift(x, m) for x in A)
                    sa = tuple(S.shift(x, m) for x in sorted(A))
                    if not (indep(S.cir, M, A, S.fixed_points(), img)
                            and not splits(M, tuple(sorted(A)), img, 3)
                            and not splits(M, sa, A, 3)):
                        failures.append((label, A, "recheck", m))
    ok = not failures and total > 0
    record(5, ok, f"{total} subsets of length-2 blocks, failures={failures[:5]}")
    assert ok


# 6 ------------------------------------------------------------------------------------------

def test_criterion_6_cyclic_density():
    results = {}
    dlo, graph = get_class("dlo"), get_class("graph")
    seeds = {
        "dlo": (dlo, FinStructure(dlo.signature, 8, {"<": OrderRelation(range(8))}), 330),
        "random graph": (graph, graph.random_member(8, random.Random("seed-block:graph")), 240),
    }
    ok = True
    for label, (K, D0, stages) in seeds.items():
        P = get_cir("dlo" if label == "dlo" else "free")
        t0 = time.perf_counter()
        S = build_shift_system(K, P, stages, seed=0, seed_block=D0, witness_stages=4, verify=2)
        C = build_conjugator(S, 8, 2)
        rep = verify_cyclic_density(C)
        good = (rep["coverage"] == 1.0 and rep["partial_isomorphism"]
                and rep["rechecks_passed"] and len(C.rechecks) == len(C.batches))
        ok = ok and good
        results[label] = (f"{rep['satisfied']}/{rep['requirements']} batches={len(C.batches)} "
                          f"|S|={S.size} {time.perf_counter() - t0:.1f}s")
    record(6, ok, f"{results}")
    assert ok


# 7 ------------------------------------------------------------------------------------------

def test_criterion_7_non_splitting(approximations):
    bad = {}
    counts = {}
    for label, (P, L) in approximations.items():
        rep = non_splitting_report(P, L, samples=100, seed=7)
        counts[label] = rep["checked"]
        if rep["checked"] < 100 or rep["violations"]:
            bad[label] = rep["violations"][:2] or "too few samples"
    ok = not bad
    record(7, ok, f"independent pairs checked per CIR={counts}, violations={bad}")
    assert ok


# 8 ------------------------------------------------------------------------------------------

def test_criterion_8_shiftiness():
    out = {}
    ok = True
    for label, c in (("dlo", "dlo"), ("random graph", "free")):
        P = get_cir(c)
        D0 = P.klass.random_member(8, random.Random(f"seed-block:{label}"))
        S = build_shift_system(P.klass, P, 12, seed=0, seed_block=D0, witness_stages=4, verify=2)
        r = check_shifty(S, samples=100, n_max=S.stage - 2, seed=8)
        good = r["samples"] >= 100 and r["success_rate"] >= 0.95
        ok = ok and good
        out[label] = f"{r['successes']}/{r['samples']} inconclusive={len(r['inconclusive'])}"
    record(8, ok, f"{out}")
    assert ok


# 9 ------------------------------------------------------------------------------------------

CLI_RUNS = [
    ["check-cir", "--cir", "naive-tree", "--class", "tree", "--axiom", "transitivity-left"],
    ["check-cir", "--cir", "tournament", "--axiom", "stationarity"],
    ["no-cir-cert", "--class", "circular", "--base-size", "2"],
    ["build-limit", "--class", "graph", "--seed", "5"],
    ["build-shift", "--cir", "ordered-graph", "--stages", "5", "--seed-block", "3"],
    ["check-repulsive", "--cir", "free", "--stages", "5", "--seed-block", "3"],
    ["check-shifty", "--cir", "dlo", "--stages", "12", "--seed-block", "8",
     "--witness-stages", "4", "--verify-len", "2"],
    ["conjugate", "--cir", "trivial", "--stages", "24", "--seed-block", "3", "--core-size", "3",
     "--budget", "0"],
    ["word-search", "--cir", "trivial", "--stages", "24", "--seed-block", "3", "--core-size", "3",
     "--max-len", "1", "--budget", "0", "--target", "random", "--seed", "3"],
]


def test_criterion_9_determinism(tmp_path):
    differ = []
    for i, argv in enumerate(CLI_RUNS):
        blobs = []
        for j in range(2):
            path = tmp_path / f"{i}-{j}.json"
            main(argv + ["--out", str(path)])
            blobs.append(path.read_bytes())
        if blobs[0] != blobs[1] or not blobs[0]:
            differ.append(argv[0])
    ok = not differ
    record(9, ok, f"{len(CLI_RUNS)} commands run twice, differing reports={differ}")
    assert ok

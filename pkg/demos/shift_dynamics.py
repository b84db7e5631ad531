"""
A strongly repulsive shift and a cyclically dense conjugate
===========================================================

Build the interval-labeled system carrying the shift on a small random graph
window, check repulsiveness, and conjugate on a pure set.
"""

import random

from fraisse_cir.cir import get_cir
from fraisse_cir.dynamics import (
    build_conjugator,
    build_shift_system,
    check_shifty,
    check_strongly_repulsive,
    verify_cyclic_density,
    verify_shift_system,
    word_density_search,
)
from fraisse_cir.structures import FinStructure, PartialMap

P = get_cir("free")
D0 = P.klass.random_member(3, random.Random(0))
S = build_shift_system(P.klass, P, 5, seed=1, seed_block=D0)
print("system size:", S.size, "verified:", verify_shift_system(S)["ok"])

A = sorted(S.block(0, 1))[:2]
print("repulsive from n =", check_strongly_repulsive(S, A, S.stage - 2)["n"])
print("shifty success rate:", check_shifty(S, samples=50, seed=0)["success_rate"])

# on a pure set the conjugator needs only disjoint shifts
T = get_cir("trivial")
S = build_shift_system(T.klass, T, 24, witness_budget=0, seed_block=FinStructure(T.klass.signature, 3))
C = build_conjugator(S, core_size=3, max_len=2)
rep = verify_cyclic_density(C)
print("requirements met:", rep["satisfied"], "/", rep["requirements"], "batches:", len(C.batches))

M = S.structure
gens = [S.shift_map(1), C.as_map()]
print("word for 0 -> 1:", word_density_search(S, gens, PartialMap(M, M, {0: 1}), 6))

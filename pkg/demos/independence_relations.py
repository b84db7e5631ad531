"""
Canonical independence relations
================================

Evaluate the catalog relations, run one axiom check, and show why the
circular order has none.
"""

from fraisse_cir import build_approximation, get_class
from fraisse_cir.cir import Budget, all_one_types_split, check_axiom, get_cir, indep
from fraisse_cir.fraisse import linear_order

# on the rational order, A is independent from B over C when A sits below B in each cut of C
P = get_cir("dlo")
L = build_approximation(P.klass, rounds=2, seed=0, min_size=12)
M = L.structure
order = linear_order(M)
lo, hi = order[0], order[-1]
print("low indep high:", indep(P, M, {lo}, (), {hi}), " high indep low:", indep(P, M, {hi}, (), {lo}))

small = Budget(max_set=1, samples=50)
print("dlo transitivity-left:", check_axiom(P, "transitivity-left", L, small)["status"])

# the tempting relation on meet trees breaks transitivity
Q = get_cir("naive-tree")
T = build_approximation(Q.klass, rounds=2, seed=0, max_base=2, min_size=20)
r = check_axiom(Q, "transitivity-left", T, small)
print("naive tree transitivity-left:", r["status"], r["counterexample"])

# every 1-type over a 2-point base of the circular order splits, so it has no such relation
for name in ("circular", "circular-point", "dlo"):
    A = build_approximation(get_class(name), rounds=3, seed=1, max_base=3, min_size=8)
    print(f"{name}: all 1-types split = {all_one_types_split(A, 2)}")

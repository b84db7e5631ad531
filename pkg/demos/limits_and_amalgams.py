"""
Growing a Fraisse limit
=======================

Build finite approximations of the random graph and the rational order and
check that every small extension demand is met.
"""

from fraisse_cir import build_approximation, check_extension_property, get_class
from fraisse_cir.fraisse import linear_order

# the random graph after three rounds of extension scheduling
K = get_class("graph")
L = build_approximation(K, max_ext_size=1, rounds=3, seed=0)
print("graph stage sizes:", L.stage_sizes)
rep = check_extension_property(L, L.stage_sizes[-2], 1)
print("extension demands over the core:", rep["checked"], "unmet:", rep["unsatisfied"])

# every cut of the earlier points of the order gets filled
K = get_class("dlo")
L = build_approximation(K, 1, 3, seed=0)
print("points listed in order:", linear_order(L.structure))

# with nothing scheduled, demands stay open
L0 = build_approximation(get_class("graph"), 1, 0, seed=0, min_size=3)
print("unmet with zero rounds:", check_extension_property(L0, 3, 1)["unsatisfied"])

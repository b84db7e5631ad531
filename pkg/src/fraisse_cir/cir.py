"""Canonical independence relations, axiom checkers and splitting tests."""

from __future__ import annotations

import bisect
import itertools
import random
from dataclasses import dataclass

from .fraisse import (
    AmalgamationError,
    ClassPlugin,
    LimitApprox,
    ProductClass,
    circular_linearization,
    get_class,
    order_positions,
)
from .structures import (
    FinStructure,
    PartialMap,
    SignatureError,
    StructureError,
    generated_substructure,
    tuple_type_equal,
    type_key,
)

AXIOMS = ("stationarity", "extension", "transitivity-left", "transitivity-right",
          "monotonicity", "existence")


class IndependenceError(RuntimeError):
    pass


class CirPlugin:
    """A candidate independence relation on the limit of ``klass``.

    Subclasses implement ``_indep(M, Ac, Cc, Bc)`` on closed sets with
    ``Ac = <AC>``, ``Bc = <BC>`` and ``Cc = <C>``."""

    name = "cir"
    expected_fail: frozenset = frozenset()

    def __init__(self, klass: ClassPlugin):
        self.klass = klass

    def indep(self, M, A, C, B) -> bool:
        return indep(self, M, A, C, B)

    def _indep(self, M, Ac, Cc, Bc) -> bool:
        raise NotImplementedError

    def _amalgam(self, Aside, Bside, h):
        return self.klass._amalgam(Aside, Bside, h)

    def expects(self, axiom) -> bool:
        return axiom not in self.expected_fail

    def __repr__(self):
        return f"<cir {self.name} on {self.klass.name}>"


def _member(K: ClassPlugin, M: FinStructure) -> bool:
    key = ("member", K.name)
    if key not in M._cache:
        M._cache[key] = K.is_member(M)
    return M._cache[key]


def indep(P: CirPlugin, M: FinStructure, A, C, B) -> bool:
    """Evaluate ``A`` independent from ``B`` over ``C`` in ``M``."""
    if not _member(P.klass, M):
        raise StructureError(f"structure is not a member of class {P.klass.name!r}")
    C = frozenset(C)
    Ac = generated_substructure(M, C.union(A))
    Bc = generated_substructure(M, C.union(B))
    Cc = generated_substructure(M, C)
    memo = M._cache.setdefault(("indep", P.name), {})
    key = (Ac, Cc, Bc)
    if key not in memo:
        memo[key] = bool(P._indep(M, Ac, Cc, Bc))
    return memo[key]


def _disjoint_over(Ac, Cc, Bc) -> bool:
    return (Ac & Bc) <= Cc


class TrivialCir(CirPlugin):
    name = "trivial"

    def _indep(self, M, Ac, Cc, Bc):
        return _disjoint_over(Ac, Cc, Bc)


def _order_indep(pos, Ac, Cc, Bc):
    """Points of ``A`` lie below points of ``B`` in every cut of ``C``.

    ``pos`` gives the position of each point in the linear order."""
    cpos = sorted(pos[c] for c in Cc)
    top = {}
    for a in Ac - Cc:
        k = bisect.bisect(cpos, pos[a])
        top[k] = max(top.get(k, -1), pos[a])
    for b in Bc - Cc:
        k = bisect.bisect(cpos, pos[b])
        if top.get(k, -1) > pos[b]:
            return False
    return True


class DloCir(CirPlugin):
    name = "dlo"

    def __init__(self, klass, rel="<"):
        super().__init__(klass)
        self.rel = rel

    def _indep(self, M, Ac, Cc, Bc):
        if not _disjoint_over(Ac, Cc, Bc):
            return False
        return _order_indep(order_positions(M, self.rel), Ac, Cc, Bc)


class FreeCir(CirPlugin):
    """No relation between the new parts: the free amalgam."""

    name = "free"

    def _indep(self, M, Ac, Cc, Bc):
        if not _disjoint_over(Ac, Cc, Bc):
            return False
        An, Bn = Ac - Cc, Bc - Cc
        if not An or not Bn:
            return True
        for name in M.signature.relation_names:
            R = M.rel(name)
            if M.signature.arity(name) == 2 and len(An) * len(Bn) < len(R):
                if any((a, b) in R or (b, a) in R for a in An for b in Bn):
                    return False
            else:
                for t in R:
                    s = set(t)
                    if s & An and s & Bn:
                        return False
        return True


class TournamentCir(CirPlugin):
    name = "tournament"

    def _indep(self, M, Ac, Cc, Bc):
        if not _disjoint_over(Ac, Cc, Bc):
            return False
        R = M.rel("R")
        return all((a, b) in R for a in Ac - Cc for b in Bc - Cc)


class PosetCir(CirPlugin):
    """Comparabilities between the new parts all factor through ``C``."""

    name = "poset"

    def _indep(self, M, Ac, Cc, Bc):
        if not _disjoint_over(Ac, Cc, Bc):
            return False
        lt = M.rel("<")
        for a in Ac - Cc:
            for b in Bc - Cc:
                for x, y in ((a, b), (b, a)):
                    through = any((x, c) in lt and (c, y) in lt for c in Cc)
                    if ((x, y) in lt) != through:
                        return False
        return True


class CircularPointCir(CirPlugin):
    """Cut the circle at the named point and use the order independence."""

    name = "circular-point"

    def _indep(self, M, Ac, Cc, Bc):
        if not _disjoint_over(Ac, Cc, Bc):
            return False
        p = M.constants["p"]
        key = ("pos", "C", p)
        if key not in M._cache:
            M._cache[key] = {x: i for i, x in enumerate(circular_linearization(M, p))}
        return _order_indep(M._cache[key], Ac - {p}, Cc - {p}, Bc - {p})


class TreePointCir(CirPlugin):
    name = "tree-point"

    def _indep(self, M, Ac, Cc, Bc):
        if not _disjoint_over(Ac, Cc, Bc):
            return False
        p = M.constants["p"]
        ctup = tuple(sorted(Cc))
        # below p: A's projections sit under B's projections of the same type
        As = {M.meet(a, p) for a in Ac} - Cc
        Bs = {M.meet(b, p) for b in Bc} - Cc
        if As and Bs:
            bkeys = [(y, type_key(M, (y,) + ctup)) for y in Bs]
            for x in As:
                kx = type_key(M, (x,) + ctup)
                for y, ky in bkeys:
                    if kx == ky and not M.less(x, y):
                        return False
        # above p: fresh branches of A and B split exactly at p
        def fresh(S):
            return [x for x in S if M.less(p, x)
                    and not any(M.less(p, M.meet(x, c)) for c in Cc)]
        Bg = fresh(Bc)
        for a in fresh(Ac):
            for b in Bg:
                if M.meet(a, b) != p:
                    return False
        return True


class NaiveTreeCir(CirPlugin):
    """The natural first guess on dense meet trees, which is not transitive."""

    name = "naive-tree"
    expected_fail = frozenset({"transitivity-left"})

    def _indep(self, M, Ac, Cc, Bc):
        if not _disjoint_over(Ac, Cc, Bc):
            return False
        An, Bn = Ac - Cc, Bc - Cc
        if not Cc:
            return all(M.less(M.meet(a, b), a) and M.less(M.meet(a, b), b)
                       for a in An for b in Bn)
        return all(M.less(M.meet(a, c), M.meet(b, c)) for a in An for b in Bn for c in Cc)


class ProductCir(CirPlugin):
    """Conjunction of two relations living on disjoint relational signatures."""

    def __init__(self, first: CirPlugin, second: CirPlugin, klass=None, name=None):
        if klass is None:
            klass = ProductClass(first.klass, second.klass)
        super().__init__(klass)
        self.factors = (first, second)
        self.name = name or f"{first.name}*{second.name}"
        self.expected_fail = first.expected_fail | second.expected_fail

    def _reduct(self, M, i):
        key = ("reduct", self.name, i)
        if key not in M._cache:
            M._cache[key] = M.reduct(self.factors[i].klass.signature.relation_names)
        return M._cache[key]

    def _indep(self, M, Ac, Cc, Bc):
        return all(P._indep(self._reduct(M, i), Ac, Cc, Bc) for i, P in enumerate(self.factors))

    def _amalgam(self, Aside, Bside, h):
        outs = []
        for i, P in enumerate(self.factors):
            names = P.klass.signature.relation_names
            outs.append(P._amalgam(Aside.reduct(names), Bside.reduct(names), h))
        (D1, g1), (D2, g2) = outs
        if g1 != g2 or D1.size != D2.size:
            raise AmalgamationError("coordinate amalgams disagree on the universe")
        return self.klass._combine(D1.size, (D1, D2)), g1


def product_cir(P1: CirPlugin, P2: CirPlugin, name=None) -> CirPlugin:
    overlap = set(P1.klass.signature.relation_names) & set(P2.klass.signature.relation_names)
    if overlap:
        raise SignatureError(f"the two relations share symbols {sorted(overlap)}")
    return ProductCir(P1, P2, name=name)


def independent_amalgam(P: CirPlugin, f: PartialMap, g: PartialMap):
    """Amalgamate ``f: C -> A-side`` and ``g: C -> B-side`` so that the A-side is
    independent from the B-side over the image of ``C``.

    Returns ``(D, f2, g2)`` where ``f2`` is the identity on the A-side."""
    if f.source is not g.source and not f.source.same_as(g.source):
        raise AmalgamationError("the two embeddings have different sources")
    C = f.source
    if len(f.pairs) != C.size or len(g.pairs) != C.size:
        raise AmalgamationError("amalgam inputs must be total on C")
    if not (f.is_embedding() and g.is_embedding()):
        raise AmalgamationError("amalgam inputs must be embeddings")
    Aside, Bside = f.target, g.target
    fd, gd = f.as_dict(), g.as_dict()
    h = {gd[c]: fd[c] for c in range(C.size)}
    D, gmap = P._amalgam(Aside, Bside, h)
    if not _member(P.klass, D):
        raise AmalgamationError(f"amalgam left class {P.klass.name!r}")
    if not indep(P, D, range(Aside.size), [fd[c] for c in range(C.size)], gmap.values()):
        raise IndependenceError(f"{P.name}: amalgam does not realize independence")
    return D, PartialMap(Aside, D, {x: x for x in range(Aside.size)}), PartialMap(Bside, D, gmap)


# catalog ---------------------------------------------------------------------

def _dlo_graph(klass):
    if klass is None:
        klass = get_class("ordered-graph")
    P1, P2 = DloCir(klass.factors[0]), FreeCir(klass.factors[1])
    return ProductCir(P1, P2, klass=klass, name="ordered-graph")


_CIRS = {
    "trivial": (TrivialCir, "set"),
    "dlo": (DloCir, "dlo"),
    "free": (FreeCir, "graph"),
    "tournament": (TournamentCir, "tournament"),
    "poset": (PosetCir, "poset"),
    "circular-point": (CircularPointCir, "circular-point"),
    "tree-point": (TreePointCir, "tree-point"),
    "naive-tree": (NaiveTreeCir, "tree"),
    "ordered-graph": (_dlo_graph, "ordered-graph"),
}
_ALLOWED = {"free": ("graph", "henson")}

CIR_NAMES = tuple(_CIRS)


def default_class(cir_name: str) -> str:
    return _CIRS[cir_name][1]


def get_cir(name: str, klass=None) -> CirPlugin:
    """Look up a catalog relation; ``klass`` may be a class plugin or class name."""
    if name not in _CIRS:
        raise KeyError(f"unknown cir {name!r}; known: {', '.join(CIR_NAMES)}")
    factory, default = _CIRS[name]
    if klass is None:
        klass = default
    if isinstance(klass, str):
        if klass not in _ALLOWED.get(name, (default,)):
            raise KeyError(f"cir {name!r} does not live on class {klass!r}")
        klass = get_class(klass)
    return factory(klass)


# splitting -------------------------------------------------------------------

def _distinct_tuples(B, max_len):
    B = sorted(B)
    for k in range(1, min(max_len, len(B)) + 1):
        yield from itertools.permutations(B, k)


def splitting_witness(M: FinStructure, a, B, max_len: int = 3):
    """Same-type tuples ``b1, b2`` from ``B`` that ``a`` tells apart, or None."""
    a = tuple(a)
    groups = {}
    for b in _distinct_tuples(B, max_len):
        k = type_key(M, b)
        ka = type_key(M, a + b)
        seen = groups.setdefault(k, {})
        if ka not in seen:
            if seen:
                other = next(iter(seen.values()))
                return other, b
            seen[ka] = b
    return None


def splits(M: FinStructure, a, B, max_len: int = 3) -> bool:
    return splitting_witness(M, a, B, max_len) is not None


def all_one_types_split(L, base_size: int = 2, max_len: int = 3) -> bool:
    M = L.structure if isinstance(L, LimitApprox) else L
    if M.size < base_size + 1:
        raise ValueError("structure too small for the requested base size")
    for B in itertools.combinations(range(M.size), base_size):
        for a in range(M.size):
            if a not in B and not splits(M, (a,), B, max_len):
                return False
    return True


def non_splitting_report(P: CirPlugin, L, samples: int = 100, seed: int = 0,
                         max_set: int = 3, max_len: int = 3, max_tries: int = 200000) -> dict:
    """Sample independent pairs over the empty set and test both splitting directions."""
    M = L.structure if isinstance(L, LimitApprox) else L
    rng = random.Random(seed)
    checked, tries, violations = 0, 0, []
    while checked < samples and tries < max_tries:
        tries += 1
        A = _random_set(rng, M.size, max_set, low=1)
        B = _random_set(rng, M.size, max_set, low=1)
        if not indep(P, M, A, (), B):
            continue
        checked += 1
        for x, y in ((A, B), (B, A)):
            w = splitting_witness(M, tuple(sorted(x)), y, max_len)
            if w is not None:
                violations.append({"A": sorted(x), "B": sorted(y), "witness": [list(t) for t in w]})
    return {"cir": P.name, "checked": checked, "tries": tries,
            "violations": violations, "seed": seed}


# axiom checking ----------------------------------------------------------------

@dataclass(frozen=True)
class Budget:
    max_set: int = 2
    window: int = 8
    samples: int = 200
    max_random_set: int = 3
    ext_samples: int = 150
    max_tries: int = 20000


def _subsets(points, k):
    points = sorted(points)
    out = []
    for n in range(k + 1):
        out.extend(frozenset(c) for c in itertools.combinations(points, n))
    return out


def _random_set(rng, n, k, low=0):
    size = rng.randint(low, min(k, n))
    return frozenset(rng.sample(range(n), size))


def _doc(cfg):
    return {k: sorted(v) for k, v in cfg.items()}


class _Search:
    """Collects violations and keeps the smallest one."""

    def __init__(self, M):
        self.M = M
        self.best = None
        self.count = 0
        self.hits = 0

    def violation(self, cfg, extra=None):
        self.count += 1
        union = frozenset().union(*cfg.values())
        rank = (sum(len(v) for v in cfg.values()),
                len(generated_substructure(self.M, union)),
                [sorted(cfg[k]) for k in sorted(cfg)])
        if self.best is None or rank < self.best[0]:
            doc = _doc(cfg)
            if extra:
                doc.update(extra)
            self.best = (rank, doc)


def _perm_keys(M, S):
    return [(type_key(M, p), p) for p in itertools.permutations(sorted(S))]


def _check_stationarity(P, M, subsets, random_pairs, search):
    table = {}
    configs = 0

    def visit(A, B):
        nonlocal configs
        configs += 1
        if not indep(P, M, A, (), B):
            return
        search.hits += 1
        for ka, a in _perm_keys(M, A):
            for kb, b in _perm_keys(M, B):
                k = type_key(M, a + b)
                prev = table.setdefault((ka, kb), (k, a, b))
                if prev[0] != k:
                    search.violation({"A": frozenset(prev[1]), "B": frozenset(prev[2]),
                                      "A'": A, "B'": B},
                                     {"tuples": [list(prev[1]), list(prev[2]), list(a), list(b)]})

    for A in subsets:
        for B in subsets:
            visit(A, B)
    exhaustive = configs
    for A, B in random_pairs:
        visit(A, B)
    return exhaustive, configs - exhaustive


def _check_monotonicity(P, M, triples, search):
    n = 0
    for A, C, B in triples:
        n += 1
        if not indep(P, M, A, C, B):
            continue
        search.hits += 1
        for A2 in _subsets(A, len(A)):
            for B2 in _subsets(B, len(B)):
                if not indep(P, M, A2, C, B2):
                    search.violation({"A": A, "C": C, "B": B, "A'": A2, "B'": B2})
    return n


def _check_existence(P, M, pairs, search):
    n = 0
    for A, C in pairs:
        n += 1
        if not indep(P, M, A, C, C):
            search.violation({"A": A, "C": C, "B": C})
        elif not indep(P, M, C, C, A):
            search.violation({"A": C, "C": C, "B": A})
    return n


def _check_transitivity(P, M, side, quads, search):
    """left: A|_{DC}B and D|_C B imply AD|_C B.
    right: A|_{DC}B and A|_C D imply A|_C BD."""
    n = 0
    for A, B, C, D in quads:
        n += 1
        if side == "left":
            hyp = indep(P, M, D, C, B) and indep(P, M, A, D | C, B)
            ok = not hyp or indep(P, M, A | D, C, B)
        else:
            hyp = indep(P, M, A, C, D) and indep(P, M, A, D | C, B)
            ok = not hyp or indep(P, M, A, C, B | D)
        if hyp:
            search.hits += 1
        if not ok:
            search.violation({"A": A, "B": B, "C": C, "D": D})
    return n


def _exhaustive_quads(P, M, subsets, side):
    # outer loop fixes the sets in the cheap hypothesis, inner loop the rest
    for C in subsets:
        for B in subsets:
            for D in subsets:
                if side == "left":
                    if not indep(P, M, D, C, B):
                        continue
                    for A in subsets:
                        yield A, B, C, D
                else:
                    # reuse names: here D pairs with A in the hypothesis A|_C D
                    A = B
                    if not indep(P, M, A, C, D):
                        continue
                    for B2 in subsets:
                        yield A, B2, C, D


def _check_extension(P, M, rng, budget, search, window):
    found = inconclusive = 0
    tries = 0
    witnesses = []
    while found + inconclusive < budget.ext_samples and tries < budget.max_tries:
        tries += 1
        pool = window if rng.random() < 0.5 else M.size
        A = _random_set(rng, pool, budget.max_set)
        C = _random_set(rng, pool, budget.max_set)
        B = _random_set(rng, pool, budget.max_set)
        if not indep(P, M, A, C, B):
            continue
        base = tuple(sorted(generated_substructure(M, B | C)))
        d = rng.randrange(M.size)
        if d in base:
            continue
        kd = type_key(M, (d,) + base)
        wit = None
        for d2 in range(M.size):
            if type_key(M, (d2,) + base) == kd and indep(P, M, A, C, B | {d2}):
                wit = d2
                break
        if wit is None:
            inconclusive += 1
            if len(witnesses) < 5:
                witnesses.append({"A": sorted(A), "C": sorted(C), "B": sorted(B), "d": d})
        else:
            found += 1
    return found, inconclusive, witnesses, tries


def check_axiom(P: CirPlugin, axiom: str, L, budget: Budget | None = None, seed: int = 0) -> dict:
    """Search for violations of one axiom of ``P`` inside the approximation ``L``.

    Sets of size up to ``budget.max_set`` drawn from the first ``budget.window``
    points are enumerated exhaustively; then ``budget.samples`` random
    configurations with sets up to ``budget.max_random_set`` are drawn from the
    whole structure."""
    if axiom not in AXIOMS:
        raise ValueError(f"unknown axiom {axiom!r}")
    budget = budget or Budget()
    M = L.structure if isinstance(L, LimitApprox) else L
    if not _member(P.klass, M):
        raise StructureError(f"approximation is not a member of {P.klass.name!r}")
    rng = random.Random(f"{seed}:{P.name}:{axiom}")
    window = min(budget.window, M.size)
    subsets = _subsets(range(window), budget.max_set)
    search = _Search(M)
    k = budget.max_random_set

    def rset(low=0):
        return _random_set(rng, M.size, k, low)

    report = {"cir": P.name, "class": P.klass.name, "axiom": axiom, "seed": seed,
              "expected": "pass" if P.expects(axiom) else "fail",
              "structure_size": M.size, "window": window, "inconclusive": 0}
    if axiom == "extension":
        found, inc, wits, tries = _check_extension(P, M, rng, budget, search, window)
        report.update(configs_checked=found + inc, exhaustive_configs=0,
                      random_configs=found + inc, hypothesis_hits=found + inc,
                      inconclusive=inc, witnessed=found, inconclusive_examples=wits)
        report["status"] = "inconclusive" if inc else "pass"
        report["counterexample"] = None
        return report
    if axiom == "stationarity":
        pairs = [(rset(), rset()) for _ in range(budget.samples)]
        ex, rnd = _check_stationarity(P, M, subsets, pairs, search)
    elif axiom == "monotonicity":
        ex = _check_monotonicity(P, M, ((A, C, B) for A in subsets for C in subsets for B in subsets), search)
        rnd = _check_monotonicity(P, M, [(rset(), rset(), rset()) for _ in range(budget.samples)], search)
    elif axiom == "existence":
        ex = _check_existence(P, M, ((A, C) for A in subsets for C in subsets), search)
        rnd = _check_existence(P, M, [(rset(), rset()) for _ in range(budget.samples)], search)
    else:
        side = axiom.split("-")[1]
        ex = _check_transitivity(P, M, side, _exhaustive_quads(P, M, subsets, side), search)
        rnd = _check_transitivity(P, M, side, _random_quads(P, M, side, rng, budget), search)
    report.update(configs_checked=ex + rnd, exhaustive_configs=ex, random_configs=rnd,
                  hypothesis_hits=search.hits, violations=search.count)
    report["status"] = "fail" if search.count else "pass"
    report["counterexample"] = search.best[1] if search.best else None
    return report


def _random_quads(P, M, side, rng, budget):
    """Random configurations, biased towards ones meeting the hypothesis."""
    k = budget.max_random_set
    out = []
    tries = 0
    while len(out) < budget.samples and tries < budget.max_tries:
        tries += 1
        A, B, C, D = (_random_set(rng, M.size, k) for _ in range(4))
        hyp = indep(P, M, D, C, B) if side == "left" else indep(P, M, A, C, D)
        if hyp or tries > budget.max_tries // 2:
            out.append((A, B, C, D))
    return out


def check_all_axioms(P: CirPlugin, L, budget: Budget | None = None, seed: int = 0) -> dict:
    reports = [check_axiom(P, ax, L, budget, seed) for ax in AXIOMS]
    unexpected = [r["axiom"] for r in reports
                  if (r["status"] == "fail") != (r["expected"] == "fail")]
    return {"cir": P.name, "class": P.klass.name, "reports": reports, "unexpected": unexpected}

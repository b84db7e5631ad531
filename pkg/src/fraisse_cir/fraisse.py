"""Amalgamation classes and finite approximations of their Fraisse limits."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from .structures import (
    FinStructure,
    OrderRelation,
    PartialMap,
    Signature,
    SignatureError,
    StructureError,
    _check_meet_tree,
    first_embedding,
    generated_substructure,
    meet_tree,
    tree_parents,
    type_key,
)

DEFAULT_SIZE_CAP = 512


class GrowthCapExceeded(RuntimeError):
    pass


class AmalgamationError(RuntimeError):
    pass


# ordering helpers ----------------------------------------------------------

def linear_order(M: FinStructure, rel: str = "<") -> list:
    """Points of a linearly ordered structure from least to greatest."""
    lt = M.rel(rel)
    if isinstance(lt, OrderRelation) and len(lt.seq) == M.size:
        return list(lt.seq)
    below = [0] * M.size
    for _, y in lt:
        below[y] += 1
    return sorted(range(M.size), key=below.__getitem__)


def order_positions(M: FinStructure, rel: str = "<") -> dict:
    key = ("pos", rel)
    if key not in M._cache:
        M._cache[key] = {x: i for i, x in enumerate(linear_order(M, rel))}
    return M._cache[key]


def circular_linearization(M: FinStructure, base: int, rel: str = "C") -> list:
    """Points of a circular order read off clockwise starting at ``base``."""
    C = M.rel(rel)
    rest = [x for x in range(M.size) if x != base]
    return [base] + sorted(rest, key=lambda x: sum(1 for y in rest if (base, y, x) in C))


def circular_from_sequence(seq: list) -> list:
    n = len(seq)
    out = []
    for i, j, k in itertools.permutations(range(n), 3):
        if i < j < k or j < k < i or k < i < j:
            out.append((seq[i], seq[j], seq[k]))
    return out


def _merge_sequences(bseq, cseq, h, rng=None):
    """Merge two linear orders sharing the points ``h`` (C-point -> B-point).

    Fresh B-points precede fresh C-points inside the same gap unless ``rng``
    is given, in which case the interleaving inside each gap is random.
    Returns a list of ("B", x) / ("C", y) items.
    """
    hv = set(h.values())
    common_b = [x for x in bseq if x in hv]
    rank = {x: i for i, x in enumerate(common_b)}
    gaps_b = [[] for _ in range(len(common_b) + 1)]
    g = 0
    for x in bseq:
        if x in rank:
            g = rank[x] + 1
        else:
            gaps_b[g].append(("B", x))
    gaps_c = [[] for _ in range(len(common_b) + 1)]
    g = 0
    last = -1
    for y in cseq:
        if y in h:
            r = rank[h[y]]
            if r < last:
                raise AmalgamationError("the common part is ordered differently on the two sides")
            last = r
            g = r + 1
        else:
            gaps_c[g].append(("C", y))
    out = []
    for g in range(len(common_b) + 1):
        if g > 0:
            out.append(("B", common_b[g - 1]))
        bs, cs = gaps_b[g], gaps_c[g]
        if rng is None:
            out.extend(bs + cs)
        else:
            slots = sorted(rng.sample(range(len(bs) + len(cs)), len(bs)))
            merged, bi, ci = [], 0, 0
            for pos in range(len(bs) + len(cs)):
                if bi < len(bs) and slots[bi] == pos:
                    merged.append(bs[bi])
                    bi += 1
                else:
                    merged.append(cs[ci])
                    ci += 1
            out.extend(merged)
    return out


def _fresh_map(B: FinStructure, C: FinStructure, h: dict):
    """B's points keep their indices, fresh C-points are appended in index order."""
    gmap = dict(h)
    nxt = B.size
    for y in range(C.size):
        if y not in gmap:
            gmap[y] = nxt
            nxt += 1
    return nxt, gmap


def _glue_relational(B: FinStructure, C: FinStructure, h: dict):
    """Common skeleton of relational amalgams: the union of both relation tables."""
    nxt, gmap = _fresh_map(B, C, h)
    rels = {n: set(B.rel(n)) for n in B.signature.relation_names}
    for n in C.signature.relation_names:
        rels[n].update(tuple(gmap[x] for x in t) for t in C.rel(n))
    return nxt, rels, gmap


class ClassPlugin:
    """An amalgamation class given by universal axioms and a canonical amalgam."""

    name = "class"
    signature = Signature()
    closure_bound = 1

    def is_member(self, A: FinStructure) -> bool:
        if A.signature != self.signature:
            raise SignatureError(f"{A.signature} is not the signature of class {self.name!r}")
        return self._axioms(A)

    def _axioms(self, A: FinStructure) -> bool:
        raise NotImplementedError

    def initial(self) -> FinStructure:
        """The substructure generated by the empty set."""
        if self.signature.constants:
            consts = {c: i for i, c in enumerate(self.signature.constants)}
            return self._build(len(consts), {}, consts)
        return self._build(0, {})

    def _build(self, size, rels, consts=None) -> FinStructure:
        return FinStructure(self.signature, size, rels, consts or {}, validate=False)

    def one_point_extensions(self, A: FinStructure) -> list:
        """Every extension of ``A`` generated by ``A`` plus one new point, with the
        generator at index ``|A|`` and closure points after it."""
        raise NotImplementedError

    def _amalgam(self, B: FinStructure, C: FinStructure, h: dict, rng=None):
        """Amalgamate ``C`` into ``B`` over ``h`` (C-point -> B-point).

        Returns ``(D, gmap)``; ``B`` sits inside ``D`` as the identity."""
        raise NotImplementedError

    def random_member(self, size: int, rng) -> FinStructure:
        M = self.initial()
        while M.size < size:
            A = self.initial()
            B = rng.choice(self.one_point_extensions(A))
            M, _ = self._amalgam(M, B, {i: i for i in range(A.size)}, rng)
        return M

    def __repr__(self):
        return f"<class {self.name}>"


class PureSetClass(ClassPlugin):
    name = "set"
    signature = Signature()

    def _axioms(self, A):
        return True

    def one_point_extensions(self, A):
        return [self._build(A.size + 1, {})]

    def _amalgam(self, B, C, h, rng=None):
        size, rels, gmap = _glue_relational(B, C, h)
        return self._build(size, rels), gmap


class GraphClass(ClassPlugin):
    """Finite simple graphs; with ``triangle_free`` the Henson class."""

    def __init__(self, triangle_free: bool = False, rel: str = "E"):
        self.triangle_free = triangle_free
        self.rel = rel
        self.name = "henson" if triangle_free else "graph"
        self.signature = Signature(((rel, 2),))

    def _axioms(self, A):
        E = A.rel(self.rel)
        for x, y in E:
            if x == y or (y, x) not in E:
                return False
        if self.triangle_free:
            adj = [set() for _ in range(A.size)]
            for x, y in E:
                adj[x].add(y)
            for x, y in E:
                if x < y and adj[x] & adj[y]:
                    return False
        return True

    def one_point_extensions(self, A):
        n = A.size
        E = A.rel(self.rel)
        out = []
        for mask in range(1 << n):
            nbrs = [x for x in range(n) if mask >> x & 1]
            if self.triangle_free and any((x, y) in E for x, y in itertools.combinations(nbrs, 2)):
                continue
            edges = set(E)
            for x in nbrs:
                edges.update({(x, n), (n, x)})
            out.append(self._build(n + 1, {self.rel: edges}))
        return out

    def _amalgam(self, B, C, h, rng=None):
        size, rels, gmap = _glue_relational(B, C, h)
        if rng is not None:
            E = rels[self.rel]
            adj = [set() for _ in range(size)]
            for x, y in E:
                adj[x].add(y)
            fresh = sorted(gmap[y] for y in range(C.size) if y not in h)
            old = [x for x in range(B.size) if x not in set(h.values())]
            for x in old:
                for y in fresh:
                    if rng.random() < 0.5 and not (self.triangle_free and adj[x] & adj[y]):
                        E.update({(x, y), (y, x)})
                        adj[x].add(y)
                        adj[y].add(x)
        return self._build(size, rels), gmap


class TournamentClass(ClassPlugin):
    name = "tournament"
    signature = Signature((("R", 2),))

    def _axioms(self, A):
        R = A.rel("R")
        if any(x == y for x, y in R):
            return False
        for x, y in itertools.combinations(range(A.size), 2):
            if ((x, y) in R) == ((y, x) in R):
                return False
        return True

    def one_point_extensions(self, A):
        n = A.size
        out = []
        for mask in range(1 << n):
            R = set(A.rel("R"))
            for x in range(n):
                R.add((x, n) if mask >> x & 1 else (n, x))
            out.append(self._build(n + 1, {"R": R}))
        return out

    def _amalgam(self, B, C, h, rng=None):
        size, rels, gmap = _glue_relational(B, C, h)
        common = set(h.values())
        fresh = sorted(gmap[y] for y in range(C.size) if y not in h)
        for x in range(B.size):
            if x in common:
                continue
            for y in fresh:
                if rng is not None and rng.random() < 0.5:
                    rels["R"].add((y, x))
                else:
                    rels["R"].add((x, y))
        return self._build(size, rels), gmap


class LinearOrderClass(ClassPlugin):
    """Finite linear orders; the limit is the dense linear order."""

    def __init__(self, rel: str = "<"):
        self.rel = rel
        self.name = "dlo"
        self.signature = Signature(((rel, 2),))

    def _axioms(self, A):
        lt = A.rel(self.rel)
        if isinstance(lt, OrderRelation):
            return sorted(lt.seq) == list(range(A.size))
        # a strict linear order is exactly "fewer predecessors"
        n = A.size
        if len(lt) != n * (n - 1) // 2:
            return False
        below = [0] * n
        for x, y in lt:
            if x == y:
                return False
            below[y] += 1
        if sorted(below) != list(range(n)):
            return False
        return all(below[x] < below[y] for x, y in lt)

    def one_point_extensions(self, A):
        seq = linear_order(A, self.rel)
        out = []
        for gap in range(A.size + 1):
            new = seq[:gap] + [A.size] + seq[gap:]
            out.append(self._build(A.size + 1, {self.rel: OrderRelation(new)}))
        return out

    def _amalgam(self, B, C, h, rng=None):
        merged = _merge_sequences(linear_order(B, self.rel), linear_order(C, self.rel), h, rng)
        size, gmap = _fresh_map(B, C, h)
        seq = [x if side == "B" else gmap[x] for side, x in merged]
        return self._build(size, {self.rel: OrderRelation(seq)}), gmap


class PosetClass(ClassPlugin):
    name = "poset"
    signature = Signature((("<", 2),))

    def _axioms(self, A):
        lt = A.rel("<")
        for x, y in lt:
            if x == y or (y, x) in lt:
                return False
            for z in range(A.size):
                if (y, z) in lt and (x, z) not in lt:
                    return False
        return True

    def one_point_extensions(self, A):
        n = A.size
        out = []
        for rel in itertools.product((0, 1, 2), repeat=n):
            lt = set(A.rel("<"))
            for x, r in enumerate(rel):
                if r == 1:
                    lt.add((x, n))
                elif r == 2:
                    lt.add((n, x))
            B = self._build(n + 1, {"<": lt})
            if self._axioms(B):
                out.append(B)
        return out

    def _amalgam(self, B, C, h, rng=None):
        size, rels, gmap = _glue_relational(B, C, h)
        lt = rels["<"]
        changed = True
        while changed:
            changed = False
            for x, y in list(lt):
                for z in range(size):
                    if (y, z) in lt and (x, z) not in lt:
                        lt.add((x, z))
                        changed = True
        return self._build(size, rels), gmap


class CircularClass(ClassPlugin):
    """Finite circular orders, optionally with a named point ``p``."""

    def __init__(self, pointed: bool = False):
        self.pointed = pointed
        self.name = "circular-point" if pointed else "circular"
        self.signature = Signature((("C", 3),), ("p",) if pointed else ())

    def _axioms(self, A):
        if A.size == 0:
            return not A.rel("C")
        seq = circular_linearization(A, self._base(A))
        return set(A.rel("C")) == set(circular_from_sequence(seq))

    def _base(self, A):
        return A.constants["p"] if self.pointed else 0

    def one_point_extensions(self, A):
        n = A.size
        if n == 0:
            return [self._build(1, {})]
        seq = circular_linearization(A, self._base(A))
        out = []
        for gap in range(1, n + 1):
            new = seq[:gap] + [n] + seq[gap:]
            out.append(self._build(n + 1, {"C": circular_from_sequence(new)}, A.constants))
        return out

    def _amalgam(self, B, C, h, rng=None):
        size, gmap = _fresh_map(B, C, h)
        if h:
            if self.pointed:
                bb, cb = B.constants["p"], C.constants["p"]
            else:
                cb = min(h, key=lambda y: h[y])
                bb = h[cb]
        else:
            bb, cb = 0, 0
        bseq = circular_linearization(B, bb) if B.size else []
        cseq = circular_linearization(C, cb) if C.size else []
        merged = _merge_sequences(bseq, cseq, h, rng)
        seq = [x if side == "B" else gmap[x] for side, x in merged]
        return self._build(size, {"C": circular_from_sequence(seq)}, B.constants), gmap


class TreeClass(ClassPlugin):
    """Finite meet trees in {<, meet}, optionally with a named point ``p``."""

    closure_bound = 2

    def __init__(self, pointed: bool = False):
        self.pointed = pointed
        self.name = "tree-point" if pointed else "tree"
        self.signature = Signature((("<", 2),), ("p",) if pointed else (), True)

    def _axioms(self, A):
        try:
            _check_meet_tree(A)
        except StructureError:
            return False
        return True

    def initial(self):
        return meet_tree([None], {"p": 0}) if self.pointed else meet_tree([])

    def one_point_extensions(self, A):
        n = A.size
        if n == 0:
            return [meet_tree([None])]
        par = tree_parents(A)
        out = []
        for x in range(n):
            below = par + [par[x]]
            below[x] = n
            child = par + [x]
            branch = par + [n + 1, par[x]]
            branch[x] = n + 1
            for p in (below, child, branch):
                out.append(meet_tree(p, A.constants))
        return out

    def _amalgam(self, B, C, h, rng=None):
        parents = tree_parents(B)
        gmap = dict(h)

        def new_node(parent):
            parents.append(parent)
            return len(parents) - 1

        def insert(c):
            if c in gmap:
                return
            X = list(gmap)
            if X:
                m = _chain_max(C, [C.meet(c, x) for x in X])
                if m != c and m not in gmap:
                    insert(m)
                    X = list(gmap)
            up = [x for x in X if C.less(c, x)]
            if up:
                x_high = next(x for x in up if all(x == y or C.less(x, y) for y in up))
                top = gmap[x_high]
                node = new_node(parents[top])
                parents[top] = node
            elif not X:
                if parents:
                    root = parents.index(None)
                    r = new_node(None)
                    parents[root] = r
                    node = new_node(r)
                else:
                    node = new_node(None)
            else:
                m = _chain_max(C, [C.meet(c, x) for x in X])
                node = new_node(gmap[m])
            gmap[c] = node

        for c in range(C.size):
            insert(c)
        return meet_tree(parents, B.constants), gmap


def _chain_max(M, chain):
    best = chain[0]
    for z in chain[1:]:
        if M.less(best, z):
            best = z
    return best


class ProductClass(ClassPlugin):
    """Structures whose reducts to two disjoint relational signatures lie in
    the respective classes."""

    def __init__(self, first: ClassPlugin, second: ClassPlugin, name=None):
        for K in (first, second):
            if K.signature.constants or K.signature.has_meet:
                raise SignatureError("product classes need purely relational factors")
        overlap = set(first.signature.relation_names) & set(second.signature.relation_names)
        if overlap:
            raise SignatureError(f"factor signatures overlap in {sorted(overlap)}")
        self.factors = (first, second)
        self.name = name or f"{first.name}*{second.name}"
        self.signature = Signature(first.signature.relations + second.signature.relations)

    def _split(self, A):
        return [A.reduct(K.signature.relation_names) for K in self.factors]

    def _axioms(self, A):
        return all(K._axioms(R) for K, R in zip(self.factors, self._split(A)))

    def _combine(self, size, parts):
        rels = {}
        for P in parts:
            for n in P.signature.relation_names:
                rels[n] = P.rel(n)
        return self._build(size, rels)

    def one_point_extensions(self, A):
        K1, K2 = self.factors
        A1, A2 = self._split(A)
        return [self._combine(A.size + 1, (B1, B2))
                for B1 in K1.one_point_extensions(A1) for B2 in K2.one_point_extensions(A2)]

    def _amalgam(self, B, C, h, rng=None):
        outs = [K._amalgam(Bi, Ci, h, rng)
                for K, Bi, Ci in zip(self.factors, self._split(B), self._split(C))]
        (D1, g1), (D2, g2) = outs
        if g1 != g2 or D1.size != D2.size:
            raise AmalgamationError("factor amalgams disagree on the universe")
        return self._combine(D1.size, (D1, D2)), g1


# catalog ---------------------------------------------------------------------

def _catalog():
    return {
        "set": PureSetClass,
        "dlo": LinearOrderClass,
        "graph": GraphClass,
        "henson": lambda: GraphClass(triangle_free=True),
        "tournament": TournamentClass,
        "poset": PosetClass,
        "tree": TreeClass,
        "tree-point": lambda: TreeClass(pointed=True),
        "circular": CircularClass,
        "circular-point": lambda: CircularClass(pointed=True),
        "ordered-graph": lambda: ProductClass(LinearOrderClass(), GraphClass(), "ordered-graph"),
    }


CLASS_NAMES = tuple(_catalog())


def get_class(name: str) -> ClassPlugin:
    try:
        return _catalog()[name]()
    except KeyError:
        raise KeyError(f"unknown class {name!r}; known: {', '.join(CLASS_NAMES)}") from None


# amalgamation ------------------------------------------------------------------

def is_member(K: ClassPlugin, A: FinStructure) -> bool:
    return K.is_member(A)


def canonical_amalgam(K: ClassPlugin, f: PartialMap, g: PartialMap):
    """Amalgamate ``f: A -> B`` and ``g: A -> C``.

    Returns ``(D, f2, g2)`` with ``f2: B -> D`` the identity on B's indices and
    ``f2 o f == g2 o g``. Fresh B-points come before fresh C-points."""
    if f.source is not g.source and not f.source.same_as(g.source):
        raise AmalgamationError("the two embeddings have different sources")
    A, B, C = f.source, f.target, g.target
    if set(f.domain) != set(range(A.size)) or set(g.domain) != set(range(A.size)):
        raise AmalgamationError("amalgam inputs must be total on A")
    if not (f.is_embedding() and g.is_embedding()):
        raise AmalgamationError("amalgam inputs must be embeddings")
    fd, gd = f.as_dict(), g.as_dict()
    h = {gd[a]: fd[a] for a in range(A.size)}
    D, gmap = K._amalgam(B, C, h)
    if not K.is_member(D):
        raise AmalgamationError(f"class {K.name!r} produced a non-member amalgam")
    return D, PartialMap(B, D, {x: x for x in range(B.size)}), PartialMap(C, D, gmap)


def extend(K: ClassPlugin, M: FinStructure, base: tuple, B: FinStructure, rng=None):
    """Realize ``B`` over ``base`` in a superstructure of ``M``.

    ``B``'s first ``len(base)`` points are identified with ``base``. Returns
    ``(D, gmap)``."""
    h = {i: x for i, x in enumerate(base)}
    return K._amalgam(M, B, h, rng)


def has_extension(M: FinStructure, base: tuple, B: FinStructure):
    return first_embedding(B, M, {i: x for i, x in enumerate(base)})


def closed_subsets(M: FinStructure, points, max_size=None):
    """Closed subsets of ``points`` by size, then lexicographically."""
    points = sorted(points)
    consts = sorted(M.constant_points)
    free = [x for x in points if x not in M.constant_points]
    top = len(free) if max_size is None else max(0, max_size - len(consts))
    for k in range(0, min(top, len(free)) + 1):
        for combo in itertools.combinations(free, k):
            S = frozenset(combo) | frozenset(consts)
            if not M.has_meet or generated_substructure(M, S) == S:
                yield tuple(sorted(S))


@dataclass
class LimitApprox:
    klass: ClassPlugin
    stage: int
    structure: FinStructure
    ledger: list = field(default_factory=list)
    seed: int = 0
    stage_sizes: list = field(default_factory=list)
    max_base: int | None = None
    max_ext_size: int = 1

    def to_doc(self) -> dict:
        doc = self.structure.to_doc()
        doc.update({
            "class": self.klass.name,
            "stage": self.stage,
            "stage_sizes": list(self.stage_sizes),
            "max_base": self.max_base,
            "ledger": self.ledger,
            "seed": self.seed,
        })
        return doc


def _requirements(K, M, upto, max_base, max_ext_size):
    reqs = []
    for A in closed_subsets(M, range(upto), max_base):
        As, _ = M.induced(A)
        for j, B in enumerate(K.one_point_extensions(As)):
            # closure points do not count against the budget
            if B.size - As.size <= max_ext_size * K.closure_bound:
                reqs.append((len(A), B.size, A, j, B))
    reqs.sort(key=lambda r: r[:4])
    return reqs


def build_approximation(K: ClassPlugin, max_ext_size: int = 1, rounds: int = 3, seed: int = 0,
                        *, max_base: int | None = None, min_size: int = 0,
                        size_cap: int = DEFAULT_SIZE_CAP) -> LimitApprox:
    """Grow a finite structure in ``K`` with the extension property up to a horizon.

    Round ``r`` realizes, for every closed ``A`` (``|A| <= max_base``) inside the
    structure as it was after round ``r-1``, every one-point extension of ``A``.
    Missing witnesses are added by a seeded random amalgam. Afterwards random
    extensions are added until the structure has ``min_size`` points.
    """
    if max_ext_size < 1:
        raise ValueError("max_ext_size must be at least 1")
    rng = random.Random(seed)
    M = K.initial()
    sizes = [M.size]
    ledger = []
    for r in range(1, rounds + 1):
        upto = M.size
        for nA, nB, A, j, B in _requirements(K, M, upto, max_base, max_ext_size):
            wit = has_extension(M, A, B)
            if wit is None:
                M, gmap = extend(K, M, A, B, rng)
                witness = [gmap[i] for i in range(len(A), B.size)]
                added = True
            else:
                witness = [wit(i) for i in range(len(A), B.size)]
                added = False
            if M.size > size_cap:
                raise GrowthCapExceeded(f"approximation of {K.name!r} exceeded {size_cap} points")
            ledger.append({"round": r, "base": list(A), "extension": j,
                           "witness": witness, "added": added})
        sizes.append(M.size)
    while M.size < min_size:
        k = rng.randint(0, 2 if max_base is None else min(2, max_base))
        pts = rng.sample(range(M.size), min(k, M.size))
        A = tuple(sorted(generated_substructure(M, pts)))
        As, _ = M.induced(A)
        B = rng.choice(K.one_point_extensions(As))
        M, _ = extend(K, M, A, B, rng)
        if M.size > size_cap:
            raise GrowthCapExceeded(f"approximation of {K.name!r} exceeded {size_cap} points")
    if not K.is_member(M):
        raise AmalgamationError(f"approximation left class {K.name!r}")
    return LimitApprox(K, rounds, M, ledger, seed, sizes, max_base, max_ext_size)


def check_extension_property(L: LimitApprox, upto_core: int, ext_budget: int = 1,
                             max_base: int | None = -1) -> dict:
    """Recheck that every one-point extension of every closed subset of the
    first ``upto_core`` points is realized in ``L``."""
    if max_base == -1:
        max_base = L.max_base
    M = L.structure
    checked = 0
    missing = []
    for _, _, A, j, B in _requirements(L.klass, M, upto_core, max_base, ext_budget):
        checked += 1
        if has_extension(M, A, B) is None:
            missing.append({"base": list(A), "extension": j, "structure": B.to_doc()})
    return {
        "checked": checked,
        "satisfied": checked - len(missing),
        "unsatisfied": len(missing),
        "counterexamples": missing,
    }


def canonical_form(A: FinStructure) -> tuple:
    """Isomorphism-invariant key of a small structure (brute force over orderings)."""
    return min(type_key(A, p) for p in itertools.permutations(range(A.size)))


def small_extension_pairs(K: ClassPlugin, max_base: int = 2) -> list:
    """Pairs ``(A, B)`` with ``A`` ranging over members up to isomorphism with at most
    ``max_base`` points and ``B`` over one-point extensions of ``A``."""
    level = [K.initial()]
    seen = {canonical_form(level[0])}
    members = list(level)
    while level:
        nxt = []
        for A in level:
            for B in K.one_point_extensions(A):
                if B.size > max_base:
                    continue
                key = canonical_form(B)
                if key not in seen:
                    seen.add(key)
                    nxt.append(B)
        members.extend(nxt)
        level = nxt
    return [(A, B) for A in members for B in K.one_point_extensions(A)]

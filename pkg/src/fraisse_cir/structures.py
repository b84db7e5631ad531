"""Finite structures, embeddings, generated substructures and quantifier-free types.

Every structure has universe ``range(size)``. Relations are stored as frozensets
of index tuples; meet trees additionally carry a total meet table.
"""

from __future__ import annotations

import itertools
from collections.abc import Set as AbstractSet
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping


class SignatureError(ValueError):
    pass


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class Signature:
    relations: tuple[tuple[str, int], ...] = ()
    constants: tuple[str, ...] = ()
    has_meet: bool = False

    def __post_init__(self):
        object.__setattr__(self, "relations", tuple((str(n), int(a)) for n, a in self.relations))
        object.__setattr__(self, "constants", tuple(self.constants))
        names = [n for n, _ in self.relations]
        if len(set(names)) != len(names):
            raise SignatureError(f"duplicate relation names in {names}")
        if len(set(self.constants)) != len(self.constants):
            raise SignatureError("duplicate constant names")
        for n, a in self.relations:
            if a < 1:
                raise SignatureError(f"relation {n!r} has arity {a}")
        if self.has_meet and ("<", 2) not in self.relations:
            raise SignatureError("a meet signature needs the binary relation '<'")

    @property
    def relation_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.relations)

    def arity(self, name: str) -> int:
        for n, a in self.relations:
            if n == name:
                return a
        raise KeyError(name)

    def restrict(self, names: Iterable[str]) -> "Signature":
        names = set(names)
        return Signature(tuple(r for r in self.relations if r[0] in names))

    def to_doc(self) -> dict:
        return {
            "relations": [{"name": n, "arity": a} for n, a in self.relations],
            "constants": list(self.constants),
            "has_meet": self.has_meet,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Signature":
        return cls(
            tuple((r["name"], r["arity"]) for r in doc.get("relations", [])),
            tuple(doc.get("constants", [])),
            bool(doc.get("has_meet", False)),
        )


class OrderRelation(AbstractSet):
    """The strict order ``<`` of a sequence, stored by positions.

    Behaves like the frozenset of pairs ``(seq[i], seq[j])`` with ``i < j`` but
    answers membership in O(1) and never materializes the pairs unless iterated."""

    __slots__ = ("seq", "pos")

    def __init__(self, seq):
        self.seq = tuple(int(x) for x in seq)
        self.pos = {x: i for i, x in enumerate(self.seq)}
        if len(self.pos) != len(self.seq):
            raise StructureError("order sequence repeats a point")

    @classmethod
    def _from_iterable(cls, it):
        return frozenset(it)

    def __contains__(self, t):
        try:
            x, y = t
        except (TypeError, ValueError):
            return False
        px, py = self.pos.get(x), self.pos.get(y)
        return px is not None and py is not None and px < py

    def __iter__(self):
        s = self.seq
        for i in range(len(s)):
            for j in range(i + 1, len(s)):
                yield (s[i], s[j])

    def __len__(self):
        n = len(self.seq)
        return n * (n - 1) // 2

    __hash__ = AbstractSet._hash

    def __repr__(self):
        return f"OrderRelation({list(self.seq)})"


class FinStructure:
    """An immutable finite structure on ``0..size-1``."""

    __slots__ = ("signature", "size", "_rels", "constants", "_meet", "_cache")

    def __init__(self, signature: Signature, size: int, relations=None, constants=None,
                 meet=None, validate: bool = True):
        self.signature = signature
        self.size = int(size)
        relations = relations or {}
        unknown = set(relations) - set(signature.relation_names)
        if unknown:
            raise SignatureError(f"relations {sorted(unknown)} not in signature")
        self._rels = {
            name: _freeze(relations.get(name, ()))
            for name in signature.relation_names
        }
        self.constants = dict(constants or {})
        if signature.has_meet:
            self._meet = _meet_table(self.size, meet)
        else:
            if meet:
                raise SignatureError("meet table given for a signature without meet")
            self._meet = None
        self._cache = {}
        if validate:
            self._validate()

    def _validate(self):
        sig = self.signature
        for name, arity in sig.relations:
            for t in self._rels[name]:
                if len(t) != arity:
                    raise StructureError(f"tuple {t} has wrong arity for {name!r}")
                if any(not 0 <= x < self.size for x in t):
                    raise StructureError(f"tuple {t} of {name!r} out of range")
        if set(self.constants) != set(sig.constants):
            raise StructureError(f"constants {sorted(self.constants)} do not match signature")
        for name, x in self.constants.items():
            if not 0 <= x < self.size:
                raise StructureError(f"constant {name!r} -> {x} out of range")
        if sig.has_meet:
            _check_meet_tree(self)

    # access -----------------------------------------------------------
    def rel(self, name: str) -> frozenset:
        return self._rels[name]

    def holds(self, name: str, t: tuple) -> bool:
        return t in self._rels[name]

    def less(self, x: int, y: int) -> bool:
        return (x, y) in self._rels["<"]

    def meet(self, x: int, y: int) -> int:
        return self._meet[x][y]

    @property
    def has_meet(self) -> bool:
        return self._meet is not None

    @property
    def constant_points(self) -> frozenset:
        return frozenset(self.constants.values())

    def __len__(self):
        return self.size

    def __repr__(self):
        rels = ", ".join(f"{n}:{len(t)}" for n, t in self._rels.items())
        return f"FinStructure(size={self.size}, {rels}, constants={self.constants})"

    def same_as(self, other: "FinStructure") -> bool:
        return self.to_doc() == other.to_doc()

    # derived structures ----------------------------------------------
    def induced(self, points: Iterable[int]) -> tuple["FinStructure", dict]:
        """Substructure on ``points`` (which must be closed), renumbered in
        increasing order. Returns the structure and the old->new index map."""
        pts = sorted(set(points))
        new = {x: i for i, x in enumerate(pts)}
        rels = {}
        for name, ts in self._rels.items():
            if isinstance(ts, OrderRelation):
                rels[name] = OrderRelation(new[x] for x in ts.seq if x in new)
            else:
                rels[name] = [tuple(new[x] for x in t) for t in ts if all(x in new for x in t)]
        try:
            consts = {c: new[x] for c, x in self.constants.items()}
        except KeyError:
            raise StructureError("induced substructure must contain the constants") from None
        meet = None
        if self._meet is not None:
            meet = {}
            for x, y in itertools.combinations_with_replacement(pts, 2):
                m = self._meet[x][y]
                if m not in new:
                    raise StructureError("induced substructure is not meet-closed")
                meet[(new[x], new[y])] = new[m]
        return FinStructure(self.signature, len(pts), rels, consts, meet, validate=False), new

    def reduct(self, names: Iterable[str]) -> "FinStructure":
        sig = self.signature.restrict(names)
        return FinStructure(sig, self.size, {n: self._rels[n] for n in sig.relation_names},
                            validate=False)

    # serialization ----------------------------------------------------
    def to_doc(self) -> dict:
        doc = {
            "signature": self.signature.to_doc(),
            "size": self.size,
            "relations": {n: [list(t) for t in sorted(ts)] for n, ts in self._rels.items()},
            "constants": dict(sorted(self.constants.items())),
        }
        if self._meet is not None:
            doc["meet"] = [[x, y, self._meet[x][y]]
                           for x in range(self.size) for y in range(x + 1, self.size)]
        return doc

    @classmethod
    def from_doc(cls, doc: Mapping) -> "FinStructure":
        sig = Signature.from_doc(doc["signature"])
        rels = {n: [tuple(t) for t in ts] for n, ts in doc.get("relations", {}).items()}
        meet = None
        if sig.has_meet:
            meet = {(x, y): m for x, y, m in doc.get("meet", [])}
        return cls(sig, doc["size"], rels, doc.get("constants", {}), meet)


def _freeze(ts):
    if isinstance(ts, (OrderRelation, frozenset)):
        return ts
    return frozenset(tuple(int(x) for x in t) for t in ts)


def _meet_table(n: int, meet) -> list:
    table = [[None] * n for _ in range(n)]
    for x in range(n):
        table[x][x] = x
    if meet is None:
        meet = {}
    items = meet.items() if isinstance(meet, Mapping) else (((x, y), m) for x, y, m in meet)
    for (x, y), m in items:
        table[x][y] = m
        table[y][x] = m
    for row in table:
        if None in row:
            raise StructureError("meet table is not total")
    return table


def _check_meet_tree(M: FinStructure):
    n = M.size
    lt = M.rel("<")
    for x in range(n):
        if (x, x) in lt:
            raise StructureError("'<' is not irreflexive")
    for x, y in lt:
        if (y, x) in lt:
            raise StructureError("'<' is not antisymmetric")
        for z in range(n):
            if (y, z) in lt and (x, z) not in lt:
                raise StructureError("'<' is not transitive")
    le = lambda a, b: a == b or (a, b) in lt  # noqa: E731
    for z in range(n):
        below = [x for x in range(n) if le(x, z)]
        for x, y in itertools.combinations(below, 2):
            if not (le(x, y) or le(y, x)):
                raise StructureError("tree axiom fails: elements below a point are not a chain")
    for x in range(n):
        for y in range(n):
            m = M.meet(x, y)
            lower = [z for z in range(n) if le(z, x) and le(z, y)]
            if m not in lower or any(not le(z, m) for z in lower):
                raise StructureError(f"meet({x},{y})={m} is not the greatest lower bound")


def meet_tree(parents: list, constants=None, extra_relations=None) -> FinStructure:
    """Build a meet tree from a parent array (``None`` marks the root)."""
    n = len(parents)
    anc = []
    for x in range(n):
        chain = []
        y = parents[x]
        while y is not None:
            chain.append(y)
            y = parents[y]
            if len(chain) > n:
                raise StructureError("parent array has a cycle")
        anc.append(chain)
    roots = [x for x in range(n) if parents[x] is None]
    if n and len(roots) != 1:
        raise StructureError("a finite meet tree has exactly one root")
    lt = [(y, x) for x in range(n) for y in anc[x]]
    meet = {}
    for x in range(n):
        up_x = [x] + anc[x]
        for y in range(x + 1, n):
            ys = {y, *anc[y]}
            meet[(x, y)] = next(z for z in up_x if z in ys)
    consts = dict(constants or {})
    rels = {"<": lt}
    rels.update(extra_relations or {})
    sig = Signature((("<", 2),), tuple(sorted(consts)), True)
    return FinStructure(sig, n, rels, consts, meet, validate=False)


def tree_parents(M: FinStructure) -> list:
    """Parent array of a finite meet tree: parent(x) is the largest element below x."""
    parents = [None] * M.size
    lt = M.rel("<")
    below = [[] for _ in range(M.size)]
    for y, x in lt:
        below[x].append(y)
    for x in range(M.size):
        if below[x]:
            parents[x] = max(below[x], key=lambda y: sum(1 for z in below[x] if (z, y) in lt))
    return parents


def empty_structure(signature: Signature) -> FinStructure:
    if signature.constants:
        raise StructureError("a signature with constants has no empty structure")
    return FinStructure(signature, 0, validate=False)


@dataclass(frozen=True)
class PartialMap:
    """A finite injective map between the universes of two structures."""

    source: FinStructure = field(repr=False)
    target: FinStructure = field(repr=False)
    pairs: tuple = ()

    def __post_init__(self):
        pairs = self.pairs
        if isinstance(pairs, Mapping):
            pairs = pairs.items()
        pairs = tuple(sorted((int(a), int(b)) for a, b in pairs))
        object.__setattr__(self, "pairs", pairs)
        if len({b for _, b in pairs}) != len(pairs) or len({a for a, _ in pairs}) != len(pairs):
            raise StructureError("partial map is not injective")

    def as_dict(self) -> dict:
        return dict(self.pairs)

    def __call__(self, x: int) -> int:
        return self.as_dict()[x]

    @property
    def domain(self) -> tuple:
        return tuple(a for a, _ in self.pairs)

    @property
    def image(self) -> tuple:
        return tuple(b for _, b in self.pairs)

    def inverse(self) -> "PartialMap":
        return PartialMap(self.target, self.source, tuple((b, a) for a, b in self.pairs))

    def compose(self, other: "PartialMap") -> "PartialMap":
        """``other`` after ``self``."""
        g = other.as_dict()
        return PartialMap(self.source, other.target,
                          tuple((a, g[b]) for a, b in self.pairs if b in g))

    def is_embedding(self) -> bool:
        """Preserves and reflects relations, constants and meets on its domain."""
        dom = self.domain
        img = self.image
        if not tuple_type_equal_across(self.source, dom, self.target, img):
            return False
        return True

    def to_doc(self) -> list:
        return [list(p) for p in self.pairs]


# closure ---------------------------------------------------------------

def generated_substructure(M: FinStructure, S: Iterable[int]) -> frozenset:
    """Least superset of ``S`` closed under the constants and the meet table."""
    S = frozenset(S)
    cache = M._cache.setdefault("closure", {})
    hit = cache.get(S)
    if hit is not None:
        return hit
    out = set(S) | set(M.constants.values())
    if M.has_meet:
        todo = list(out)
        seen = list(out)
        while todo:
            x = todo.pop()
            for y in list(seen):
                m = M.meet(x, y)
                if m not in out:
                    out.add(m)
                    seen.append(m)
                    todo.append(m)
    res = frozenset(out)
    cache[S] = res
    return res


def is_closed(M: FinStructure, S: Iterable[int]) -> bool:
    S = frozenset(S)
    return generated_substructure(M, S) == S


# embeddings ------------------------------------------------------------

def _check_signatures(A: FinStructure, M: FinStructure):
    if A.signature != M.signature:
        raise SignatureError(f"signature mismatch: {A.signature} vs {M.signature}")


def _embedding_plan(A: FinStructure):
    plan = A._cache.get("embed_plan")
    if plan is not None:
        return plan
    n = A.size
    checks = []
    for x in range(n):
        rel_checks = []
        for name, arity in A.signature.relations:
            rel = A.rel(name)
            for t in itertools.product(range(x + 1), repeat=arity):
                if x in t:
                    rel_checks.append((name, t, t in rel))
        meet_checks = []
        if A.has_meet:
            for u in range(x + 1):
                for v in range(u, x + 1):
                    m = A.meet(u, v)
                    if max(u, v, m) == x:
                        meet_checks.append((u, v, m))
        consts = [c for c, p in A.constants.items() if p == x]
        checks.append((rel_checks, meet_checks, consts))
    A._cache["embed_plan"] = checks
    return checks


def iter_embeddings(A: FinStructure, M: FinStructure, over=None) -> Iterator[dict]:
    """Yield every embedding of ``A`` into ``M`` extending ``over`` as a dict,
    in lexicographic order of the image tuple."""
    _check_signatures(A, M)
    fixed = {}
    if over is not None:
        fixed = over.as_dict() if isinstance(over, PartialMap) else dict(over)
    plan = _embedding_plan(A)
    n = A.size
    f = [None] * n
    used = set()

    def ok(x, m):
        rel_checks, meet_checks, consts = plan[x]
        for c in consts:
            if M.constants[c] != m:
                return False
        for name, t, val in rel_checks:
            if (tuple(f[i] for i in t) in M.rel(name)) != val:
                return False
        for u, v, w in meet_checks:
            if M.meet(f[u], f[v]) != f[w]:
                return False
        return True

    def rec(x):
        if x == n:
            yield dict(enumerate(f))
            return
        cands = (fixed[x],) if x in fixed else range(M.size)
        for m in cands:
            if m in used:
                continue
            f[x] = m
            if ok(x, m):
                used.add(m)
                yield from rec(x + 1)
                used.discard(m)
            f[x] = None

    yield from rec(0)


def find_embeddings(A: FinStructure, M: FinStructure, over=None) -> list:
    """All embeddings of ``A`` into ``M`` extending ``over``, as PartialMaps."""
    return [PartialMap(A, M, e) for e in iter_embeddings(A, M, over)]


def first_embedding(A: FinStructure, M: FinStructure, over=None):
    e = next(iter_embeddings(A, M, over), None)
    return None if e is None else PartialMap(A, M, e)


# types -------------------------------------------------------------------

def _closure_correspondence(M, a, N, b):
    """Extend a_i -> b_i through constants and meets on both sides at once.
    Returns the map on the generated substructures or None if not well defined."""
    f = {}
    for x, y in zip(a, b):
        if f.get(x, y) != y:
            return None
        f[x] = y
    for c, x in M.constants.items():
        y = N.constants[c]
        if f.get(x, y) != y:
            return None
        f[x] = y
    if len(set(f.values())) != len(f):
        return None
    if M.has_meet:
        elems = list(f)
        k = 0
        while k < len(elems):
            x = elems[k]
            for j in range(k + 1):
                u = elems[j]
                m, mi = M.meet(u, x), N.meet(f[u], f[x])
                if m in f:
                    if f[m] != mi:
                        return None
                else:
                    f[m] = mi
                    elems.append(m)
            k += 1
        if len(set(f.values())) != len(f):
            return None
    return f


def tuple_type_equal_across(M: FinStructure, a, N: FinStructure, b) -> bool:
    a, b = tuple(a), tuple(b)
    if len(a) != len(b):
        raise ValueError(f"tuples of different lengths {len(a)} and {len(b)}")
    f = _closure_correspondence(M, a, N, b)
    if f is None:
        return False
    dom = list(f)
    for name, arity in M.signature.relations:
        rm, rn = M.rel(name), N.rel(name)
        for t in itertools.product(dom, repeat=arity):
            if (t in rm) != (tuple(f[x] for x in t) in rn):
                return False
    if M.has_meet:
        for u in dom:
            for v in dom:
                if f[M.meet(u, v)] != N.meet(f[u], f[v]):
                    return False
    return True


def tuple_type_equal(M: FinStructure, a, b) -> bool:
    """Whether ``a`` and ``b`` have the same quantifier-free type in ``M``."""
    return tuple_type_equal_across(M, a, M, b)


def type_key(M: FinStructure, a) -> tuple:
    """Canonical hashable key of the quantifier-free type of ``a``.

    Two tuples of ``M`` get equal keys exactly when ``tuple_type_equal`` holds.
    """
    a = tuple(a)
    cache = M._cache.setdefault("type_key", {})
    hit = cache.get(a)
    if hit is not None:
        return hit
    elems = []
    index = {}

    def add(x):
        if x not in index:
            index[x] = len(elems)
            elems.append(x)
        return index[x]

    pos = tuple(add(x) for x in a)
    cpos = tuple(add(M.constants[c]) for c in M.signature.constants)
    meets = ()
    if M.has_meet:
        mt = []
        k = 0
        while k < len(elems):
            for j in range(k + 1):
                mt.append(add(M.meet(elems[j], elems[k])))
            k += 1
        meets = tuple(mt)
    rels = []
    L = range(len(elems))
    for name, arity in M.signature.relations:
        rel = M.rel(name)
        rels.append(tuple(t for t in itertools.product(L, repeat=arity)
                          if tuple(elems[i] for i in t) in rel))
    key = (pos, cpos, meets, tuple(rels))
    cache[a] = key
    return key

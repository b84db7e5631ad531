"""Shift automorphisms built from an independence relation, and the checks
around them: repulsiveness, shiftiness and cyclic density of a conjugacy
class at finite scale."""

from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .cir import CirPlugin, indep, splitting_witness
from .fraisse import (
    ClassPlugin,
    GrowthCapExceeded,
    small_extension_pairs,
)
from .structures import (
    FinStructure,
    PartialMap,
    first_embedding,
    iter_embeddings,
    tuple_type_equal,
)

SHIFT_SIZE_CAP = 4096


class IntervalLabel(NamedTuple):
    lo: int
    hi: int
    i: int

    def shifted(self, n: int) -> "IntervalLabel":
        return IntervalLabel(self.lo + n, self.hi + n, self.i)

    @property
    def length(self) -> int:
        return self.hi - self.lo + 1


class Undefined(NamedTuple):
    """Marker for a shift leaving the constructed window."""
    label: IntervalLabel


class ShiftError(RuntimeError):
    pass


@dataclass
class ShiftSystem:
    cir: CirPlugin
    klass: ClassPlugin
    stage: int
    structure: FinStructure
    labels: list            # point -> IntervalLabel, or None for constants
    ledger: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        self.index_of = {lab: x for x, lab in enumerate(self.labels) if lab is not None}
        self._blocks = {}

    @property
    def size(self):
        return self.structure.size

    def fixed_points(self):
        return [x for x, lab in enumerate(self.labels) if lab is None]

    def block(self, lo: int, hi: int) -> frozenset:
        """Points labeled by subintervals of [lo, hi], together with the constants."""
        key = (lo, hi)
        if key not in self._blocks:
            self._blocks[key] = frozenset(
                x for x, lab in enumerate(self.labels)
                if lab is None or (lo <= lab.lo and lab.hi <= hi))
        return self._blocks[key]

    def intervals(self, max_len=None):
        for lo in range(self.stage):
            for hi in range(lo, self.stage):
                if max_len is None or hi - lo + 1 <= max_len:
                    yield lo, hi

    def shift(self, x: int, n: int):
        lab = self.labels[x]
        if lab is None:
            return x
        target = lab.shifted(n)
        return self.index_of.get(target, Undefined(target))

    def shift_map(self, n: int = 1) -> PartialMap:
        """sigma^n as a partial map on the structure."""
        pairs = {}
        for x in range(self.size):
            y = self.shift(x, n)
            if not isinstance(y, Undefined):
                pairs[x] = y
        return PartialMap(self.structure, self.structure, pairs)

    def to_doc(self) -> dict:
        doc = self.structure.to_doc()
        doc.update({
            "class": self.klass.name,
            "cir": self.cir.name,
            "stage": self.stage,
            "labels": [None if lab is None else list(lab) for lab in self.labels],
            "ledger": self.ledger,
            "seed": self.seed,
        })
        return doc


def shift_image(S: ShiftSystem, points, n: int):
    """Image of ``points`` under sigma^n, or an ``Undefined`` marker naming the
    first missing label (points taken in increasing order)."""
    out = []
    for x in sorted(points):
        y = S.shift(x, n)
        if isinstance(y, Undefined):
            return y
        out.append(y)
    return frozenset(out)


def _shift_tuple(S, a, n):
    out = []
    for x in a:
        y = S.shift(x, n)
        if isinstance(y, Undefined):
            return None
        out.append(y)
    return tuple(out)


# construction --------------------------------------------------------------------

def _default_seed_block(K, seed_block):
    if seed_block is not None:
        return seed_block
    A = K.initial()
    return K.one_point_extensions(A)[0]


def _label_seed(D0):
    labels = []
    i = 0
    for x in range(D0.size):
        if x in D0.constant_points:
            labels.append(None)
        else:
            labels.append(IntervalLabel(0, 0, i))
            i += 1
    return labels


def _next_stage(S_labels, M, K, P, n):
    """Glue a translated copy of the stage-``n`` structure over its overlap.

    Returns the new structure and labels; the old structure keeps its indices."""
    index_of = {lab: x for x, lab in enumerate(S_labels) if lab is not None}
    h = {}
    for x, lab in enumerate(S_labels):
        if lab is None:
            h[x] = x
        elif lab.hi <= n - 2:
            h[x] = index_of[lab.shifted(1)]
    D, gmap = P._amalgam(M, M, h)
    labels = list(S_labels) + [None] * (D.size - M.size)
    for x, lab in enumerate(S_labels):
        if x not in h:
            labels[gmap[x]] = lab.shifted(1)
    taken = {lab for lab in labels if lab is not None}
    extra = [x for x in range(M.size, D.size) if labels[x] is None]
    j = 0
    for x in extra:
        while IntervalLabel(0, n, j) in taken:
            j += 1
        labels[x] = IntervalLabel(0, n, j)
        taken.add(labels[x])
    core = [x for x, lab in enumerate(S_labels) if lab is None or lab.lo >= 1]
    if not indep(P, D, range(M.size), core, gmap.values()):
        raise ShiftError(f"stage {n + 1}: amalgam is not independent over the overlap")
    return D, labels


def _add_witnesses(S_labels, M, K, pairs, n, budget, rng, done):
    """Realize pending extension demands over the structure of stage n-1."""
    window = [x for x, lab in enumerate(S_labels) if lab is None or lab.hi <= n - 2]
    Wsub, old_new = M.induced(window)
    new_old = {v: k for k, v in old_new.items()}
    added = []
    added_count = 0
    for l, (A, B) in enumerate(pairs[:max(0, n - 1)]):
        for f in iter_embeddings(A, Wsub):
            img = tuple(new_old[f[i]] for i in range(A.size))
            key = (l, img)
            if key in done:
                continue
            if first_embedding(B, M, {i: img[i] for i in range(A.size)}) is not None:
                done.add(key)
                continue
            if added_count >= budget:
                return M, S_labels, added
            old = M.size
            M, _ = K._amalgam(M, B, {i: img[i] for i in range(A.size)}, rng)
            S_labels = list(S_labels) + [None] * (M.size - old)
            taken = {lab for lab in S_labels if lab is not None}
            j = 0
            for x in range(old, M.size):
                while IntervalLabel(0, n, j) in taken:
                    j += 1
                S_labels[x] = IntervalLabel(0, n, j)
                taken.add(S_labels[x])
            added_count += 1
            done.add(key)
            added.append({"pair": l, "base": list(img), "points": list(range(old, M.size))})
    return M, S_labels, added


def build_shift_system(K: ClassPlugin, P: CirPlugin, stages: int, witness_budget: int = 4,
                       seed: int = 0, *, seed_block: FinStructure | None = None,
                       witness_stages: int | None = None, witness_base: int = 2,
                       size_cap: int = SHIFT_SIZE_CAP, verify=True) -> ShiftSystem:
    """Construct the interval-labeled approximation carrying the shift.

    Stage 1 is ``seed_block``. Stage ``n+1`` amalgamates the stage-``n``
    structure (left) with its translate by one (right) over the common part
    ``block[1, n-1]`` so that left is independent from right over it, then adds
    up to ``witness_budget`` extension witnesses labeled ``[0, n]`` (only while
    ``n+1 <= witness_stages`` when that is set).

    ``verify`` is True (check every interval pair), an int (intervals up to
    that length, independence anchored at 0) or False.
    """
    if stages < 1:
        raise ValueError("stages must be at least 1")
    if P.klass.name != K.name:
        raise ValueError(f"cir {P.name!r} lives on {P.klass.name!r}, not {K.name!r}")
    rng = random.Random(seed)
    D0 = _default_seed_block(K, seed_block)
    if not K.is_member(D0):
        raise ValueError("seed block is not a member of the class")
    M, labels = D0, _label_seed(D0)
    pairs = small_extension_pairs(K, witness_base) if witness_budget else []
    done = set()
    ledger = []
    for n in range(1, stages):
        M, labels = _next_stage(labels, M, K, P, n)
        added = []
        if witness_budget and (witness_stages is None or n + 1 <= witness_stages):
            M, labels, added = _add_witnesses(labels, M, K, pairs, n, witness_budget, rng, done)
        if M.size > size_cap:
            raise GrowthCapExceeded(f"shift system exceeded {size_cap} points at stage {n + 1}")
        ledger.append({"stage": n + 1, "size": M.size, "witnesses": added})
    S = ShiftSystem(P, K, stages, M, labels, ledger, seed)
    if verify:
        rep = verify_shift_system(S, None if verify is True else int(verify),
                                  anchored=verify is not True)
        if not rep["ok"]:
            raise ShiftError(f"shift system invariants failed: {rep}")
    return S


def verify_shift_system(S: ShiftSystem, max_len: int | None = None,
                        anchored: bool = False) -> dict:
    """Independent recheck of block isomorphism and block independence.

    With ``anchored`` only pairs whose left interval starts at 0 are checked for
    independence; together with the isomorphism of translated blocks this
    covers every pair, since the independence of a pair is invariant under
    translating both intervals."""
    M = S.structure
    member = S.klass.is_member(M)
    iso_bad = []
    iso_checked = 0
    for lo, hi in S.intervals(max_len):
        if lo == 0:
            continue
        iso_checked += 1
        pairs = {}
        ok = True
        for x in S.block(0, hi - lo):
            y = S.shift(x, lo)
            if isinstance(y, Undefined):
                ok = False
                break
            pairs[x] = y
        ok = ok and set(pairs.values()) == S.block(lo, hi)
        if ok:
            ok = PartialMap(M, M, pairs).is_embedding()
        if not ok:
            iso_bad.append([lo, hi])
    ind_bad = []
    ind_checked = 0
    ivs = list(S.intervals(max_len))
    for s in ivs:
        if anchored and s[0] != 0:
            continue
        for t in ivs:
            if s[0] > t[0]:
                continue
            ind_checked += 1
            lo, hi = t[0], min(s[1], t[1])
            base = S.block(lo, hi) if lo <= hi else frozenset(S.fixed_points())
            if not indep(S.cir, M, S.block(*s), base, S.block(*t)):
                ind_bad.append([list(s), list(t)])
    return {
        "member": member,
        "isomorphism_checked": iso_checked,
        "isomorphism_violations": iso_bad,
        "independence_checked": ind_checked,
        "independence_violations": ind_bad,
        "ok": member and not iso_bad and not ind_bad,
    }


# repulsiveness and shiftiness -------------------------------------------------------

def check_strongly_repulsive(S: ShiftSystem, A, m_max: int, max_len: int = 3) -> dict:
    """Least n such that every m in [n, m_max] makes A and sigma^m(A) independent
    and mutually non-splitting."""
    M = S.structure
    A = frozenset(A)
    a = tuple(sorted(A))
    rows = []
    for m in range(m_max + 1):
        img = shift_image(S, A, m)
        if isinstance(img, Undefined):
            return {"check": "strongly-repulsive", "A": list(a), "m_max": m_max,
                    "status": "undefined", "missing": list(img.label), "n": None, "rows": rows}
        sa = _shift_tuple(S, a, m)
        ok_ind = indep(S.cir, M, A, S.fixed_points(), img)
        w1 = splitting_witness(M, a, img, max_len)
        w2 = splitting_witness(M, sa, A, max_len)
        rows.append({"m": m, "indep": ok_ind, "splits_forward": w1 is not None,
                     "splits_backward": w2 is not None,
                     "ok": ok_ind and w1 is None and w2 is None})
    n = m_max + 1
    for row in reversed(rows):
        if not row["ok"]:
            break
        n = row["m"]
    status = "pass" if n <= m_max else "fail"
    return {"check": "strongly-repulsive", "A": list(a), "m_max": m_max,
            "status": status, "n": n if n <= m_max else None, "rows": rows}


def _early_points(S):
    h = max(0, (S.stage - 2) // 2)
    return sorted(x for x, lab in enumerate(S.labels) if lab is not None and lab.hi <= h)


def check_shifty(S: ShiftSystem, samples: int = 100, n_max: int | None = None, seed: int = 0,
                 max_set: int = 2, max_tries: int = 200000) -> dict:
    """Sample (A, b, b') with b' of b's type and A independent from b', and look
    for n with b' and sigma^n(b) of the same type over A."""
    M = S.structure
    if n_max is None:
        n_max = S.stage - 2
    rng = random.Random(seed)
    early = _early_points(S)
    every = list(range(M.size))
    base = S.fixed_points()
    checked = success = skipped = tries = 0
    inconclusive = []
    hits = []
    while checked < samples and tries < max_tries:
        tries += 1
        A = tuple(sorted(rng.sample(early, rng.randint(1, min(max_set, len(early))))))
        b = tuple(rng.sample(early, rng.randint(1, min(max_set, len(early)))))
        b2 = tuple(rng.sample(every, len(b)))
        if not tuple_type_equal(M, b, b2):
            continue
        if not indep(S.cir, M, A, base, b2):
            skipped += 1
            continue
        checked += 1
        found = None
        for n in range(n_max + 1):
            bn = _shift_tuple(S, b, n)
            if bn is not None and tuple_type_equal(M, A + b2, A + bn):
                found = n
                break
        if found is None:
            inconclusive.append({"A": list(A), "b": list(b), "b'": list(b2)})
        else:
            success += 1
            if len(hits) < 10:
                hits.append({"A": list(A), "b": list(b), "b'": list(b2), "n": found})
    rate = success / checked if checked else 0.0
    return {"check": "shifty", "samples": checked, "successes": success,
            "success_rate": rate, "inconclusive": inconclusive, "skipped": skipped,
            "n_max": n_max, "witnesses": hits, "seed": seed}


# conjugator --------------------------------------------------------------------------

@dataclass
class Conjugator:
    system: ShiftSystem
    pairs: list               # tau as an ordered list of (x, y)
    ledger: list              # (a, b, n) per requirement
    requirements: list
    batches: list = field(default_factory=list)
    rechecks: list = field(default_factory=list)

    @property
    def tau(self) -> dict:
        return dict(self.pairs)

    def truncated(self, k: int) -> "Conjugator":
        return Conjugator(self.system, self.pairs[:k], self.ledger, self.requirements,
                          self.batches, self.rechecks[:k])

    def as_map(self) -> PartialMap:
        M = self.system.structure
        return PartialMap(M, M, dict(self.pairs))

    def to_doc(self) -> dict:
        return {"pairs": [list(p) for p in self.pairs],
                "ledger": [{"a": list(a), "b": list(b), "n": n} for a, b, n in self.ledger],
                "batches": self.batches}


def core_points(S: ShiftSystem, core_size: int) -> list:
    """The first points in creation order (stage-1 points come first)."""
    return list(range(min(core_size, S.size)))


def density_requirements(S: ShiftSystem, core_size: int, max_len: int) -> list:
    M = S.structure
    core = core_points(S, core_size)
    reqs = []
    for k in range(1, max_len + 1):
        tups = list(itertools.permutations(core, k))
        for a in tups:
            for b in tups:
                if tuple_type_equal(M, a, b):
                    reqs.append((a, b))
    return reqs


def _consistent(M, pi, a, b):
    new = dict(pi)
    for x, y in zip(a, b):
        if new.get(x, y) != y:
            return None
        new[x] = y
    if len(set(new.values())) != len(new):
        return None
    dom = tuple(new)
    if not tuple_type_equal(M, dom, tuple(new[x] for x in dom)):
        return None
    return new


def extends_partial_iso(M: FinStructure, old: dict, new: list) -> bool:
    """Whether adding ``new`` pairs to the partial isomorphism ``old`` keeps it one.

    Only configurations touching a new pair are examined for purely relational
    signatures with arities up to 2; otherwise the full map is rechecked."""
    full = dict(old)
    for x, y in new:
        if full.get(x, y) != y:
            return False
        full[x] = y
    if len(set(full.values())) != len(full):
        return False
    sig = M.signature
    if sig.has_meet or any(a > 2 for _, a in sig.relations):
        dom = tuple(full)
        return tuple_type_equal(M, dom, tuple(full[x] for x in dom))
    consts = M.constant_points
    for x, y in new:
        if (x in consts or y in consts) and x != y:
            return False
    items = list(full.items())
    for name, arity in sig.relations:
        R = M.rel(name)
        for x, y in new:
            if arity == 1:
                if ((x,) in R) != ((y,) in R):
                    return False
                continue
            for d, e in items:
                if ((x, d) in R) != ((y, e) in R) or ((d, x) in R) != ((e, y) in R):
                    return False
    return True


def build_conjugator(S: ShiftSystem, core_size: int, max_len: int = 2,
                     n_max: int | None = None) -> Conjugator:
    """Back-and-forth construction of tau with sigma^-n tau sigma^n meeting every
    basic open set given by the requirements.

    Requirements are packed first-fit into partial isomorphisms of the core.
    Batch k is transported by the least n for which sigma^n(core) is defined and
    independent from everything already used, so n depends only on k."""
    M = S.structure
    if n_max is None:
        n_max = S.stage - 1
    reqs = density_requirements(S, core_size, max_len)
    batches = []
    where = []
    for a, b in reqs:
        for j, pi in enumerate(batches):
            new = _consistent(M, pi, a, b)
            if new is not None:
                batches[j] = new
                where.append(j)
                break
        else:
            new = _consistent(M, {}, a, b)
            if new is None:
                raise ShiftError(f"requirement {a} -> {b} is not a partial isomorphism")
            batches.append(new)
            where.append(len(batches) - 1)
    core = frozenset(core_points(S, core_size))
    used = set(S.fixed_points())
    shifts = []
    pairs = []
    rechecks = []
    base = S.fixed_points()
    n_from = 0
    for j, pi in enumerate(batches):
        n = None
        for cand in range(n_from, n_max + 1):
            img = shift_image(S, core, cand)
            if isinstance(img, Undefined):
                break
            if not (img & used - set(base)) and indep(S.cir, M, used, base, img):
                n = cand
                break
        if n is None:
            raise ShiftError(f"no admissible shift for batch {j} within n <= {n_max}; "
                             "build a deeper system")
        shifts.append(n)
        used |= shift_image(S, core, n)
        n_from = n + 1
        tau = dict(pairs)
        new = [(S.shift(x, n), S.shift(pi[x], n)) for x in sorted(pi)]
        new = [(x, y) for x, y in new if x not in tau]
        ok = extends_partial_iso(M, tau, new)
        pairs.extend(new)
        rechecks.append(ok)
        if not ok:
            raise ShiftError(f"tau stopped being a partial isomorphism at batch {j}")
    ledger = [(a, b, shifts[where[r]]) for r, (a, b) in enumerate(reqs)]
    docs = [{"n": shifts[j], "size": len(pi)} for j, pi in enumerate(batches)]
    return Conjugator(S, pairs, ledger, reqs, docs, rechecks)


def verify_cyclic_density(C: Conjugator) -> dict:
    """Recheck every requirement: shifting a by n, applying tau and shifting
    back by -n must give b."""
    S = C.system
    tau = C.tau
    unmet = []
    for a, b, n in C.ledger:
        sa = _shift_tuple(S, a, n)
        ok = sa is not None and all(x in tau for x in sa)
        if ok:
            back = _shift_tuple(S, tuple(tau[x] for x in sa), -n)
            ok = back == tuple(b)
        if not ok:
            unmet.append({"a": list(a), "b": list(b), "n": n})
    total = len(C.ledger)
    M = S.structure
    dom = tuple(tau)
    iso = tuple_type_equal(M, dom, tuple(tau[x] for x in dom))
    return {"check": "cyclic-density", "requirements": total,
            "satisfied": total - len(unmet),
            "coverage": 1.0 if total == 0 else (total - len(unmet)) / total,
            "unmet": unmet, "tau_size": len(tau), "partial_isomorphism": iso,
            "rechecks_passed": all(C.rechecks)}


# words ---------------------------------------------------------------------------------

def word_density_search(S: ShiftSystem, generators: list, target: PartialMap,
                        max_word_len: int):
    """Breadth-first search for a word in the generators and their inverses that
    agrees with ``target`` on its domain. Letters act left to right; the
    letter order is generator index, then inverse. Returns the word as a list
    of ``(index, +1 | -1)`` or None."""
    maps = []
    for g in generators:
        d = g.as_dict()
        maps.append(d)
        maps.append({v: k for k, v in d.items()})
    letters = [(i // 2, 1 if i % 2 == 0 else -1) for i in range(len(maps))]
    start = tuple(target.domain)
    goal = tuple(target(x) for x in start)
    seen = {start: []}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        word = seen[state]
        if state == goal:
            return word
        if len(word) >= max_word_len:
            continue
        for letter, m in zip(letters, maps):
            try:
                nxt = tuple(m[x] for x in state)
            except KeyError:
                continue
            if nxt not in seen:
                seen[nxt] = word + [letter]
                queue.append(nxt)
    return None


def apply_word(generators: list, word: list, points):
    out = []
    for x in points:
        for i, sign in word:
            d = generators[i].as_dict()
            if sign < 0:
                d = {v: k for k, v in d.items()}
            if x not in d:
                return None
            x = d[x]
        out.append(x)
    return tuple(out)

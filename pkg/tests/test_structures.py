import itertools

import pytest
from hypothesis import given, settings, strategies as st

from fraisse_cir.structures import (
    FinStructure,
    OrderRelation,
    PartialMap,
    Signature,
    SignatureError,
    StructureError,
    empty_structure,
    find_embeddings,
    first_embedding,
    generated_substructure,
    is_closed,
    meet_tree,
    tree_parents,
    tuple_type_equal,
    type_key,
)

import oracles

GRAPH = Signature((("E", 2),))
ORDER = Signature((("<", 2),))
PURE = Signature()


def graph(n, edges):
    E = set()
    for x, y in edges:
        E |= {(x, y), (y, x)}
    return FinStructure(GRAPH, n, {"E": E})


def chain(n):
    return FinStructure(ORDER, n, {"<": [(i, j) for i in range(n) for j in range(i + 1, n)]})


# signatures and validation -------------------------------------------------------

def test_signature_rejects_duplicates_and_bad_arity():
    with pytest.raises(SignatureError):
        Signature((("E", 2), ("E", 1)))
    with pytest.raises(SignatureError):
        Signature((("E", 0),))
    with pytest.raises(SignatureError):
        Signature((("R", 2),), (), True)


def test_signature_doc_roundtrip():
    sig = Signature((("<", 2), ("P", 1)), ("p",), True)
    assert Signature.from_doc(sig.to_doc()) == sig


def test_structure_validation():
    with pytest.raises(StructureError):
        FinStructure(GRAPH, 2, {"E": [(0, 2)]})
    with pytest.raises(StructureError):
        FinStructure(GRAPH, 2, {"E": [(0,)]})
    with pytest.raises(SignatureError):
        FinStructure(GRAPH, 2, {"R": [(0, 1)]})
    with pytest.raises(StructureError):
        FinStructure(Signature((), ("p",)), 1, {}, {"p": 3})


def test_meet_tree_validation_rejects_missing_meet():
    sig = Signature((("<", 2),), (), True)
    # a and b incomparable with no element below both: the meet table cannot be right
    with pytest.raises(StructureError):
        FinStructure(sig, 2, {"<": []}, meet={(0, 1): 0})
    # a proper tree a < b, a < c with b ^ c = a
    T = FinStructure(sig, 3, {"<": [(0, 1), (0, 2)]}, meet={(0, 1): 0, (0, 2): 0, (1, 2): 0})
    assert T.meet(1, 2) == 0 and T.meet(2, 2) == 2


def test_empty_structure():
    E = empty_structure(GRAPH)
    assert E.size == 0
    with pytest.raises(StructureError):
        empty_structure(Signature((), ("p",)))


def test_doc_roundtrip_and_canonical_order():
    M = graph(3, [(2, 1), (0, 1)])
    doc = M.to_doc()
    assert doc["relations"]["E"] == sorted(doc["relations"]["E"])
    assert FinStructure.from_doc(doc).to_doc() == doc
    T = meet_tree([None, 0, 0, 1], {})
    assert FinStructure.from_doc(T.to_doc()).to_doc() == T.to_doc()


def test_order_relation_behaves_like_pairs():
    r = OrderRelation([2, 0, 1])
    assert frozenset(r) == {(2, 0), (2, 1), (0, 1)}
    assert r == frozenset({(2, 0), (2, 1), (0, 1)})
    assert (0, 2) not in r and (2, 1) in r and (5, 1) not in r
    assert len(r) == 3
    M = FinStructure(ORDER, 3, {"<": r})
    assert M.to_doc() == FinStructure(ORDER, 3, {"<": list(r)}).to_doc()
    sub, m = M.induced([0, 2])
    assert sub.rel("<") == {(m[2], m[0])}


def test_induced_and_reduct():
    M = graph(4, [(0, 1), (1, 2), (2, 3)])
    sub, m = M.induced([1, 3, 2])
    assert m == {1: 0, 2: 1, 3: 2}
    assert sub.rel("E") == {(0, 1), (1, 0), (1, 2), (2, 1)}
    T = meet_tree([None, 0, 0])
    with pytest.raises(StructureError):
        T.induced([1, 2])


def test_meet_tree_parents_roundtrip():
    parents = [None, 0, 0, 1, 1, 2]
    T = meet_tree(parents)
    assert tree_parents(T) == parents
    assert T.meet(3, 5) == 0 and T.meet(3, 4) == 1


# closure --------------------------------------------------------------------------

def test_closure_pure_set_is_identity():
    M = FinStructure(PURE, 6)
    assert generated_substructure(M, {3, 5}) == {3, 5}


def test_closure_adds_meets():
    # a < b, a < c and b ^ c = a
    T = meet_tree([None, 0, 0])
    assert generated_substructure(T, {1, 2}) == {0, 1, 2}


def test_closure_tree_with_point():
    # root r; p and b incomparable above r; closure of {b} is {b, b^p, p}
    T = meet_tree([None, 0, 0], {"p": 1})
    got = generated_substructure(T, {2})
    assert got == {2, 0, 1}
    assert got == oracles.closure(T, {2})


@st.composite
def trees(draw, max_size=9, pointed=False):
    n = draw(st.integers(1, max_size))
    parents = [None] + [draw(st.integers(0, i - 1)) for i in range(1, n)]
    consts = {"p": draw(st.integers(0, n - 1))} if pointed else {}
    return meet_tree(parents, consts)


@settings(max_examples=60, deadline=None)
@given(trees(pointed=True), st.data())
def test_closure_matches_oracle_and_is_a_closure(T, data):
    S = data.draw(st.sets(st.integers(0, T.size - 1), max_size=4))
    S2 = data.draw(st.sets(st.integers(0, T.size - 1), max_size=3))
    cl = generated_substructure(T, S)
    assert cl == oracles.closure(T, S)
    assert set(S) <= cl
    assert generated_substructure(T, cl) == cl
    assert cl <= generated_substructure(T, set(S) | S2)
    assert is_closed(T, cl)


@settings(max_examples=40, deadline=None)
@given(trees())
def test_random_trees_validate(T):
    FinStructure(T.signature, T.size, {"<": T.rel("<")}, T.constants,
                 {(x, y): T.meet(x, y) for x in range(T.size) for y in range(T.size)})


# embeddings ------------------------------------------------------------------------

def test_edge_into_triangle():
    edge = graph(2, [(0, 1)])
    tri = graph(3, [(0, 1), (1, 2), (0, 2)])
    found = find_embeddings(edge, tri)
    assert len(found) == 6
    assert len(oracles.all_embeddings(edge, tri)) == 6
    imgs = [f.image for f in found]
    assert imgs == sorted(imgs)


def test_edge_into_edgeless():
    assert find_embeddings(graph(2, [(0, 1)]), graph(2, [])) == []


def test_empty_into_anything():
    M = graph(3, [(0, 1)])
    found = find_embeddings(graph(0, []), M)
    assert len(found) == 1 and found[0].pairs == ()


def test_signature_mismatch():
    with pytest.raises(SignatureError):
        find_embeddings(graph(1, []), chain(2))


def test_over_full_map():
    edge = graph(2, [(0, 1)])
    tri = graph(3, [(0, 1), (1, 2), (0, 2)])
    got = find_embeddings(edge, tri, {0: 2, 1: 0})
    assert [f.as_dict() for f in got] == [{0: 2, 1: 0}]
    path = graph(3, [(0, 1)])
    assert find_embeddings(edge, path, {0: 0, 1: 2}) == []


@st.composite
def digraphs(draw, max_size=5):
    n = draw(st.integers(0, max_size))
    pairs = [(x, y) for x in range(n) for y in range(n) if x != y]
    R = draw(st.sets(st.sampled_from(pairs), max_size=len(pairs))) if pairs else set()
    return FinStructure(Signature((("R", 2),)), n, {"R": R})


@settings(max_examples=60, deadline=None)
@given(digraphs(3), digraphs(5))
def test_embeddings_match_brute_force(A, M):
    got = [f.as_dict() for f in find_embeddings(A, M)]
    want = oracles.all_embeddings(A, M)
    assert got == want
    for f in find_embeddings(A, M):
        assert f.is_embedding()


@settings(max_examples=30, deadline=None)
@given(trees(5), trees(7))
def test_tree_embeddings_match_brute_force(A, M):
    got = [f.as_dict() for f in find_embeddings(A, M)]
    assert got == oracles.all_embeddings(A, M)


def test_first_embedding_composes_with_inclusion():
    tri = graph(3, [(0, 1), (1, 2), (0, 2)])
    sub, m = tri.induced([0, 2])
    inc = PartialMap(sub, tri, {v: k for k, v in m.items()})
    f = first_embedding(sub, tri)
    assert inc.is_embedding() and f.is_embedding()
    assert f.compose(PartialMap(tri, tri, {x: x for x in range(3)})).is_embedding()


# types ---------------------------------------------------------------------------------

def test_dlo_types():
    M = chain(3)
    assert tuple_type_equal(M, (0, 1), (1, 2))
    assert not tuple_type_equal(M, (0, 1), (1, 0))


def test_graph_types():
    M = graph(3, [(0, 1)])
    assert not tuple_type_equal(M, (0, 1), (1, 2))
    assert tuple_type_equal(M, (0, 1), (1, 0))


def test_type_length_mismatch():
    with pytest.raises(ValueError):
        tuple_type_equal(chain(3), (0,), (0, 1))


def test_empty_tuple_has_one_type():
    M = chain(3)
    assert tuple_type_equal(M, (), ())
    assert type_key(M, ()) == type_key(chain(5), ())


def test_tree_types_see_meets():
    # 1 and 2 meet at the root, 3 and 4 meet at 1
    T = meet_tree([None, 0, 0, 1, 1])
    assert tuple_type_equal(T, (1, 2), (3, 4))
    # (3, 2): meet is the root, below 1; same quantifier-free type as (1, 2)
    assert tuple_type_equal(T, (3, 2), (1, 2))
    # 0 < 1 but 2, 3 incomparable
    assert not tuple_type_equal(T, (0, 1), (2, 3))


@settings(max_examples=80, deadline=None)
@given(digraphs(5), st.data())
def test_types_match_relational_oracle(M, data):
    if M.size == 0:
        return
    k = data.draw(st.integers(0, min(3, M.size)))
    pt = st.integers(0, M.size - 1)
    a = tuple(data.draw(pt) for _ in range(k))
    b = tuple(data.draw(pt) for _ in range(k))
    want = oracles.relational_type_equal(M, a, b)
    assert tuple_type_equal(M, a, b) == want
    assert (type_key(M, a) == type_key(M, b)) == want


@settings(max_examples=50, deadline=None)
@given(trees(8, pointed=True), st.data())
def test_type_key_agrees_with_type_equality_on_trees(T, data):
    k = data.draw(st.integers(1, min(3, T.size)))
    a = tuple(data.draw(st.permutations(range(T.size)))[:k])
    b = tuple(data.draw(st.permutations(range(T.size)))[:k])
    assert (type_key(T, a) == type_key(T, b)) == tuple_type_equal(T, a, b)


@settings(max_examples=40, deadline=None)
@given(digraphs(5), st.data())
def test_type_equality_is_an_equivalence(M, data):
    if M.size < 2:
        return
    tups = list(itertools.permutations(range(M.size), 2))
    a, b, c = (data.draw(st.sampled_from(tups)) for _ in range(3))
    assert tuple_type_equal(M, a, a)
    assert tuple_type_equal(M, a, b) == tuple_type_equal(M, b, a)
    if tuple_type_equal(M, a, b) and tuple_type_equal(M, b, c):
        assert tuple_type_equal(M, a, c)

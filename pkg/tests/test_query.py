import pytest
from hypothesis import given, settings, strategies as st

from kgquery.errors import ContractError, SchemaError, TopologyError
from kgquery.query import (AbstractQueryGraph, GroundedEdge, GroundedQueryGraph, NodeKind, Term, Topology,
                           canonical_form, canonical_graph, check_graph_invariants, classify_topology,
                           free_var_projection, union_answers)

F, E, C = NodeKind.FREE, NodeKind.EXISTENTIAL, NodeKind.CONSTANT


def G(kinds, edges):
    return AbstractQueryGraph.build(kinds, edges)


def test_topology_examples():
    assert classify_topology(G([F, C], [(0, 1)])) is Topology.SDAG
    assert classify_topology(G([F, C], [(0, 1), (0, 1)])) is Topology.MULTI
    assert classify_topology(G([F, E, E, C], [(0, 1), (1, 2), (0, 2), (2, 3)])) is Topology.CYCLIC
    # a negated parallel edge still makes a multigraph
    assert classify_topology(G([F, E, C], [(0, 1), (0, 1, True), (1, 2)])) is Topology.MULTI
    with pytest.raises(TopologyError):
        classify_topology(G([F, E, E, C], [(0, 1), (0, 1), (1, 2), (0, 2), (2, 3)]))


def test_build_rejects_bad_edges():
    with pytest.raises(ContractError):
        G([F, C], [(0, 0)])
    with pytest.raises(ContractError):
        G([F, C], [(0, 2)])


def test_invariants():
    assert check_graph_invariants(G([F, C], [(0, 1)])) == []
    assert "not connected" in check_graph_invariants(G([F, C, C], [(0, 1)]))
    assert any("no positive edge" in p for p in check_graph_invariants(G([F, C], [(0, 1, True)])))
    assert "no free node" in check_graph_invariants(G([E, C], [(0, 1)]))


def test_canonical_form_examples():
    assert canonical_form(G([C, F], [(0, 1)])) == b"fc|0-1"
    # two anchors of one free node, listed in either order
    assert canonical_form(G([C, F, C], [(1, 0), (1, 2, True)])) == b"fcc|0-1;0-2~"
    assert canonical_form(G([C, F, C], [(1, 0), (1, 2, True)]), polarity=False) == b"fcc|0-1;0-2"


def test_canonical_graph_is_fixed_point():
    g = G([C, E, F, C], [(0, 1), (1, 2), (2, 3, True)])
    cg = canonical_graph(g)
    assert canonical_form(cg) == canonical_form(g)
    assert canonical_graph(cg) == cg
    assert cg.kinds[0] is NodeKind.FREE


@st.composite
def small_graphs(draw):
    n = draw(st.integers(2, 6))
    kinds = [draw(st.sampled_from([F, E, C])) for _ in range(n)]
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=7))
    negs = draw(st.lists(st.booleans(), min_size=len(edges), max_size=len(edges)))
    return G(kinds, [(u, v, b) for (u, v), b in zip(edges, negs)])


@settings(max_examples=150, deadline=None)
@given(small_graphs(), st.randoms(use_true_random=False))
def test_canonical_form_is_relabelling_invariant(g, rnd):
    perm = list(range(g.n_nodes))
    rnd.shuffle(perm)
    kinds = [None] * g.n_nodes
    for old, new in enumerate(perm):
        kinds[new] = g.kinds[old]
    h = G(kinds, [(perm[u], perm[v], neg) for u, v, neg in g.edges])
    assert canonical_form(h) == canonical_form(g)
    assert canonical_form(h, polarity=False) == canonical_form(g, polarity=False)


def test_canonical_form_separates_kinds_and_polarity():
    a = G([F, E, C], [(0, 1), (1, 2)])
    b = G([F, E, C], [(0, 2), (1, 2)])
    c = G([F, E, C], [(0, 1), (1, 2, True)])
    assert len({canonical_form(a), canonical_form(b), canonical_form(c)}) == 3


def test_abstract_json_round_trip():
    g = G([F, E, C, C], [(0, 1), (1, 2), (0, 3, True)])
    assert AbstractQueryGraph.from_json(g.to_json()) == g
    with pytest.raises(SchemaError):
        AbstractQueryGraph.from_json({"nodes": [{"id": 0, "kind": "free"}], "edges": [{"u": 0}]})


def _q():
    edges = (GroundedEdge(Term.const(5), 0, Term.var(1), False),
             GroundedEdge(Term.var(1), 2, Term.var(0), False),
             GroundedEdge(Term.const(7), 3, Term.var(0), True))
    return GroundedQueryGraph(edges, (0,))


def test_grounded_basics():
    q = _q()
    assert q.variables == [0, 1] and q.existential_vars == [1] and q.k == 1
    g, consts = q.abstract()
    assert g.kinds == (NodeKind.FREE, NodeKind.EXISTENTIAL, NodeKind.CONSTANT, NodeKind.CONSTANT)
    assert consts == {2: 5, 3: 7}
    assert g.n_neg == 1
    assert GroundedQueryGraph.from_json(q.to_json()) == q
    assert len(q.without_edge(2).edges) == 2


def test_grounded_validation():
    e = GroundedEdge(Term.var(0), 0, Term.var(0), False)
    with pytest.raises(ContractError):
        GroundedQueryGraph((e,), (0,))
    with pytest.raises(ContractError):
        GroundedQueryGraph((GroundedEdge(Term.const(1), 0, Term.var(1), False),), (0,))
    with pytest.raises(ContractError):
        _q().check_ranges(6, 4)
    with pytest.raises(SchemaError):
        GroundedQueryGraph.from_json({"edges": [{"h": {"var": 0}, "r": -1, "t": {"var": 1}, "neg": False}],
                                      "free_vars": [0]})


def test_union_and_projection():
    a = frozenset({(1, 2), (1, 3)})
    b = frozenset({(4, 2)})
    u = union_answers([a, b])
    assert u == {(1, 2), (1, 3), (4, 2)}
    assert free_var_projection(u, 0) == {1, 4}
    assert free_var_projection(u, 1) == {2, 3}
    with pytest.raises(ContractError):
        union_answers([a, frozenset({(1,)})])
    with pytest.raises(ContractError):
        free_var_projection(u, 2)


@settings(max_examples=50, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 9), st.integers(0, 9))))
def test_projection_matches_comprehension(tuples):
    a = frozenset(tuples)
    for i in range(2):
        assert free_var_projection(a, i, 2) == {t[i] for t in a}

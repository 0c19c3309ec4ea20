import random

import pytest
from hypothesis import given, settings, strategies as st

from kgquery.errors import ContractError, ResourceLimit
from kgquery.kg import KnowledgeGraph, random_kg_pair
from kgquery.query import GroundedEdge, GroundedQueryGraph, Term
from kgquery.selfcheck import random_grounding
from kgquery.solver import (SolveStats, brute_force_csp, brute_force_oracle, build_network, propagate,
                            solve_csp, solve_efo)

c, v = Term.const, Term.var


def kg_of(n, raw):
    """Graph over raw relations given as (h, r, t); relation r becomes 2r, its inverse 2r+1."""
    n_rel = 2 * (max((r for _, r, _ in raw), default=0) + 1)
    rows = {(h, 2 * r, t) for h, r, t in raw} | {(t, 2 * r + 1, h) for h, r, t in raw}
    return KnowledgeGraph(n, n_rel, rows)


def q(edges, free=(0,)):
    return GroundedQueryGraph(tuple(GroundedEdge(*e) for e in edges), tuple(free))


# 0 -a-> 1, 0 -a-> 2, 1 -b-> 3, 2 -b-> 4, 3 -a-> 4
KG = kg_of(5, [(0, 0, 1), (0, 0, 2), (1, 1, 3), (2, 1, 4), (3, 0, 4)])
A, B = 0, 2


def test_build_network_examples():
    net = build_network(q([(c(0), A, v(0), False), (v(0), B, v(1), False)], free=(0,)), KG)
    assert net.domains[0] == {1, 2}
    assert net.domains[1] == set(range(5))
    assert len(net.arcs) == 1 and not net.empty
    # a negation against a constant is a set difference
    net = build_network(q([(c(0), A, v(0), False), (c(1), B, v(0), True)]), KG)
    assert net.domains[0] == {1, 2}
    net = build_network(q([(c(0), A, v(0), False), (c(0), A, v(0), True)]), KG)
    assert net.empty


def test_propagation_matches_bfs():
    query = q([(c(0), A, v(1), False), (v(1), B, v(0), False)])
    net = propagate(build_network(query, KG), KG)
    # BFS by hand: 0 -a-> {1, 2} -b-> {3, 4}
    assert net.domains == {0: {3, 4}, 1: {1, 2}}


def test_chain_and_negation():
    path = [(c(0), A, v(1), False), (v(1), B, v(0), False)]
    assert solve_efo(q(path), KG) == {(3,), (4,)}
    assert solve_efo(q(path + [(c(3), A, v(0), True)]), KG) == {(3,)}


def test_contradiction_is_empty():
    assert solve_efo(q([(c(0), A, v(0), False), (c(4), A, v(0), False)]), KG) == frozenset()


def test_single_negative_is_complement():
    assert solve_efo(q([(c(0), A, v(0), True)]), KG) == {(0,), (3,), (4,)}
    # negated variable-variable edge: some y in {1, 2} has no b-edge to x
    query = q([(c(0), A, v(1), False), (v(1), B, v(0), True)])
    want = {(x,) for x in range(5) if any(not KG.has(y, B, x) for y in (1, 2))}
    assert solve_efo(query, KG) == want


def test_two_free_variables():
    query = q([(c(0), A, v(0), False), (v(0), B, v(1), False)], free=(0, 1))
    assert solve_efo(query, KG) == {(1, 3), (2, 4)}
    variables, full = solve_csp(query, KG)
    assert variables == (0, 1) and full == {(1, 3), (2, 4)}


def test_cycle_and_parallel():
    # 0 -a-> x -b-> y -a-> f: only 0 -> 1 -> 3 -> 4 exists
    cyc = q([(c(0), A, v(1), False), (v(1), B, v(2), False), (v(2), A, v(0), False)])
    assert solve_efo(cyc, KG) == {(4,)}
    par = q([(c(0), A, v(0), False), (c(0), A, v(0), False)])
    assert solve_efo(par, KG) == {(1,), (2,)}


def test_resource_limit():
    query = q([(c(0), A, v(0), False), (v(0), B, v(1), False)], free=(0, 1))
    with pytest.raises(ResourceLimit):
        solve_efo(query, KG, max_tuples=1)
    with pytest.raises(ResourceLimit):
        solve_csp(query, KG, cap=1)
    with pytest.raises(ResourceLimit):
        brute_force_oracle(query, KG, cap=10)


def test_out_of_range_ids():
    with pytest.raises(ContractError):
        solve_efo(q([(c(9), A, v(0), False)]), KG)
    with pytest.raises(ContractError):
        solve_efo(q([(c(0), 7, v(0), False)]), KG)


def test_stats_are_recorded():
    stats = SolveStats()
    solve_efo(q([(c(0), A, v(1), False), (v(1), B, v(0), False)]), KG, stats)
    assert stats.wall_time > 0


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10 ** 6), st.data())
def test_csp_projection_and_itertools_oracle(default_types, seed, data):
    rng = random.Random(seed)
    types = default_types
    g = types[data.draw(st.integers(0, len(types) - 1))]
    kgs = random_kg_pair(rng.randint(3, 7), rng.randint(1, 2), rng.randint(3, 30), rng)
    query = random_grounding(g, kgs.full.n_entities, kgs.full.n_relations, rng)
    got = solve_efo(query, kgs.full)
    variables, full = solve_csp(query, kgs.full)
    assert full == brute_force_csp(query, kgs.full)
    assert got == {t[:query.k] for t in full}
    assert got == brute_force_oracle(query, kgs.full)

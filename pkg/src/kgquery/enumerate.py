"""Enumerate nontrivial abstract query graphs within a size budget.

Generation runs in four steps: connected simple graphs over the variables,
optional parallel edges up to the extra-edge budget, constants attached as
leaves, and up to ``max_neg_edges`` negated edges. Structural filters then
drop graphs that are redundant, decomposable, carry unbounded negation or
are too wide, and isomorphic copies are merged.
"""
from __future__ import annotations

import itertools
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Iterator

from .errors import ContractError
from .query import AbstractQueryGraph, NodeKind, canonical_form, canonical_graph, classify_topology

NEGATION_RULES = ("anchored", "components", "local")
DEDUP_MODES = ("skeleton", "exact")


@dataclass(frozen=True)
class EnumBudget:
    max_free: int = 2
    max_exist: int = 2
    max_const: int = 3
    max_nodes: int = 6
    max_edges: int = 6
    max_extra_edges: int = 0
    max_neg_edges: int = 1
    max_dist_to_free: int = 3

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not isinstance(val, int) or val < 0:
                raise ContractError(f"budget field {name} must be a non-negative int, got {val!r}")
        if self.max_free < 1:
            raise ContractError("max_free must be at least 1")


def check_no_redundancy(g: AbstractQueryGraph) -> bool:
    """No constant-constant edge and no variable-free (sentence) part after removing constants."""
    for u, v, _ in g.edges:
        if not g.is_variable(u) and not g.is_variable(v):
            return False
    return check_no_decomposition(g)


def check_no_decomposition(g: AbstractQueryGraph) -> bool:
    """Removing every constant leaves exactly one connected component of variables."""
    variables = [i for i in range(g.n_nodes) if g.is_variable(i)]
    if not variables:
        return False
    parent = {v: v for v in variables}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v, _ in g.edges:
        if u in parent and v in parent:
            parent[find(u)] = find(v)
    return len({find(v) for v in variables}) == 1


def check_negation_placement(g: AbstractQueryGraph) -> bool:
    """Every variable has at least one positive incident edge."""
    return all(g.neighbors(i, positive_only=True) for i in range(g.n_nodes) if g.is_variable(i))


def _positive_components(g: AbstractQueryGraph) -> list[set[int]]:
    adj = g.adjacency(positive_only=True)
    seen, comps = set(), []
    for s in range(g.n_nodes):
        if s in seen or not adj[s]:
            continue
        comp, stack = {s}, [s]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        comps.append(comp)
    return comps


def check_anchored(g: AbstractQueryGraph) -> bool:
    """Every variable reaches some constant through positive edges only.

    Without this a negated edge can leave a group of variables bounded only
    by a negation, whose answers are then almost the whole entity set.
    """
    for comp in _positive_components(g):
        if not any(not g.is_variable(i) for i in comp):
            return False
    return all(any(i in c for c in _positive_components(g))
               for i in range(g.n_nodes) if g.is_variable(i))


def check_free_components(g: AbstractQueryGraph) -> bool:
    """Every positive component holds a free variable and one of them holds a constant."""
    comps = _positive_components(g)
    has_free = all(any(g.kinds[i] is NodeKind.FREE for i in c) for c in comps)
    has_const = any(any(g.kinds[i] is NodeKind.CONSTANT for i in c) for c in comps)
    return has_free and has_const


def check_diameter(g: AbstractQueryGraph, max_dist: int) -> bool:
    """Every node lies within ``max_dist`` undirected hops of some free node."""
    best = {}
    for f in g.free_vars:
        for node, d in g.distances_from(f).items():
            best[node] = min(best.get(node, d), d)
    return len(best) == g.n_nodes and max(best.values()) <= max_dist


def is_valid(g: AbstractQueryGraph, budget: EnumBudget, negation_rule: str = "anchored") -> bool:
    if negation_rule not in NEGATION_RULES:
        raise ContractError(f"unknown negation rule {negation_rule!r}")
    if not (1 <= g.n_free <= budget.max_free and g.n_exist <= budget.max_exist
            and g.n_const <= budget.max_const and g.n_nodes <= budget.max_nodes
            and len(g.edges) <= budget.max_edges
            and len(g.edges) <= g.n_nodes + budget.max_extra_edges
            and g.n_neg <= budget.max_neg_edges):
        return False
    if not g.is_connected():
        return False
    if not (check_no_redundancy(g) and check_negation_placement(g)):
        return False
    if not check_diameter(g, budget.max_dist_to_free):
        return False
    # two negated copies of the same pair are near vacuous
    neg_pairs = Counter((u, v) for u, v, neg in g.edges if neg)
    if any(c > 1 for c in neg_pairs.values()):
        return False
    if negation_rule == "anchored":
        return check_anchored(g)
    if negation_rule == "components":
        return check_free_components(g)
    return True


def _connected_simple_graphs(n: int) -> Iterator[tuple[tuple[int, int], ...]]:
    pairs = list(itertools.combinations(range(n), 2))
    if n == 1:
        yield ()
        return
    for m in range(n - 1, len(pairs) + 1):
        for edges in itertools.combinations(pairs, m):
            adj = defaultdict(set)
            for u, v in edges:
                adj[u].add(v)
                adj[v].add(u)
            seen, stack = {0}, [0]
            while stack:
                for w in adj[stack.pop()]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            if len(seen) == n:
                yield edges


def _candidates(budget: EnumBudget) -> Iterator[AbstractQueryGraph]:
    max_vars = min(budget.max_free + budget.max_exist, budget.max_nodes)
    for n_var in range(1, max_vars + 1):
        for k in range(1, min(budget.max_free, n_var) + 1):
            e = n_var - k
            if e > budget.max_exist:
                continue
            kinds = [NodeKind.FREE] * k + [NodeKind.EXISTENTIAL] * e
            for simple in _connected_simple_graphs(n_var):
                room = min(n_var + budget.max_extra_edges, budget.max_edges) - len(simple)
                for extra in range(0, max(room, -1) + 1):
                    for dup in itertools.combinations_with_replacement(simple, extra):
                        var_edges = list(simple) + list(dup)
                        for c in range(1, budget.max_const + 1):
                            if n_var + c > budget.max_nodes or len(var_edges) + c > budget.max_edges:
                                break
                            for anchors in itertools.combinations_with_replacement(range(n_var), c):
                                all_kinds = kinds + [NodeKind.CONSTANT] * c
                                edges = var_edges + [(a, n_var + j) for j, a in enumerate(anchors)]
                                yield from _negations(all_kinds, edges, budget.max_neg_edges)


def _negations(kinds, edges, max_neg):
    n = len(edges)
    for m in range(0, min(max_neg, n) + 1):
        for flip in itertools.combinations(range(n), m):
            fs = set(flip)
            yield AbstractQueryGraph.build(kinds, [(u, v, i in fs) for i, (u, v) in enumerate(edges)])


def enumerate_abstract(budget: EnumBudget, negation_rule: str = "anchored",
                       dedup: str = "skeleton") -> list[AbstractQueryGraph]:
    """All valid graphs within ``budget``, one per isomorphism class.

    ``dedup="exact"`` keeps every class under kind- and polarity-preserving
    isomorphism. ``dedup="skeleton"`` keeps all positive graphs, but for
    graphs with negation keeps only one per (positive skeleton, number of
    negated edges): the valid negated variant with the smallest canonical
    form. The result is sorted by (node count, edge count, canonical form)
    and every graph is relabelled into canonical node order.
    """
    if dedup not in DEDUP_MODES:
        raise ContractError(f"unknown dedup mode {dedup!r}")
    chosen: dict[bytes, bytes] = {}
    graphs: dict[bytes, AbstractQueryGraph] = {}
    for g in _candidates(budget):
        if not is_valid(g, budget, negation_rule):
            continue
        form = canonical_form(g)
        if form in graphs:
            continue
        if dedup == "skeleton" and g.n_neg:
            key = canonical_form(g, polarity=False) + b"#%d" % g.n_neg
            prev = chosen.get(key)
            if prev is not None and prev <= form:
                continue
            if prev is not None:
                del graphs[prev]
            chosen[key] = form
        graphs[form] = g
    ordered = sorted(graphs.items(), key=lambda kv: (kv[1].n_nodes, len(kv[1].edges), kv[0]))
    return [canonical_graph(g) for _, g in ordered]


def cell_key(g: AbstractQueryGraph) -> tuple[int, int, int, str]:
    """(free count, constant count, existential count, topology) grouping key."""
    return g.n_free, g.n_const, g.n_exist, classify_topology(g).value


def count_table(graphs) -> dict[tuple[int, int, int, str], int]:
    return dict(sorted(Counter(cell_key(g) for g in graphs).items()))

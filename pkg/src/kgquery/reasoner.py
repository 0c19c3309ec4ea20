"""Node ordering and single-pass state computation over query graphs.

A reasoner supplies set operators (projection, negated projection,
intersection) over opaque states. The ordering visits constants first, then
grows a frontier, preferring existential nodes farthest from the free
variables, and the executor feeds each node the projections of its already
visited neighbours. ``CrispOps`` is the exact set-based reference.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from collections import defaultdict
from typing import Any, Sequence

import numpy as np

from .errors import ContractError, ExecutionError
from .kg import KnowledgeGraph, inverse
from .query import AbstractQueryGraph, GroundedQueryGraph, NodeKind


class OperatorInterface(ABC):
    n_entities: int

    @abstractmethod
    def entity_encode(self, entity: int) -> Any: ...

    @abstractmethod
    def projection(self, state: Any, relation: int) -> Any: ...

    @abstractmethod
    def negated_projection(self, state: Any, relation: int) -> Any: ...

    @abstractmethod
    def intersection(self, states: Sequence[Any]) -> Any: ...

    @abstractmethod
    def score(self, state: Any, entity: int) -> float: ...

    def scores(self, state: Any) -> np.ndarray:
        return np.array([self.score(state, e) for e in range(self.n_entities)], dtype=float)


class CrispOps(OperatorInterface):
    """States are frozensets of entities; scores are 1 inside the set, 0 outside."""

    def __init__(self, kg: KnowledgeGraph):
        self.kg = kg
        self.n_entities = kg.n_entities

    def entity_encode(self, entity):
        return frozenset((entity,))

    def projection(self, state, relation):
        out = set()
        for e in state:
            out |= self.kg.tail_set(e, relation)
        return frozenset(out)

    def negated_projection(self, state, relation):
        return self.kg.universe - self.projection(state, relation)

    def intersection(self, states):
        return frozenset.intersection(*states)

    def score(self, state, entity):
        return 1.0 if entity in state else 0.0

    def scores(self, state):
        out = np.zeros(self.n_entities)
        if state:
            out[list(state)] = 1.0
        return out


def order_nodes(g: AbstractQueryGraph) -> list[int]:
    """Visiting order: constants, then existential frontier nodes farthest from the free nodes.

    The existential frontier is drained first, most remote node first (total
    distance to every free node, ties to the lowest id); free frontier nodes
    are taken, lowest id first, only when no existential node is waiting.
    """
    if not g.is_connected():
        raise ContractError("cannot order a disconnected graph")
    adj = g.adjacency()
    free = g.free_vars
    dist = {f: g.distances_from(f) for f in free}
    remote = {n: sum(dist[f][n] for f in free) for n in range(g.n_nodes)}
    order = []
    s1, s2, explored = set(), set(), set()

    def push(node):
        (s1 if g.kinds[node] is NodeKind.EXISTENTIAL else s2).add(node)

    for i in range(g.n_nodes):
        if g.kinds[i] is NodeKind.CONSTANT:
            order.append(i)
            explored.add(i)
    for c in list(order):
        for j in sorted(adj[c]):
            if j not in explored:
                push(j)
    if not order:
        # no constant: start from the lowest free node
        s2.add(min(free))
    while len(order) < g.n_nodes:
        if s1:
            node = min(s1, key=lambda n: (-remote[n], n))
            s1.discard(node)
        elif s2:
            node = min(s2)
            s2.discard(node)
        else:
            raise ContractError("frontier empty before every node was ordered")
        explored.add(node)
        for j in sorted(adj[node]):
            if j not in explored:
                push(j)
        order.append(node)
    return order


def execute(q: GroundedQueryGraph, ordering: Sequence[int], ops: OperatorInterface) -> dict[int, Any]:
    """State of every node after one forward pass along ``ordering``.

    ``ordering`` refers to the node ids of ``q.abstract()``. A node with no
    visited neighbour gets ``None``.
    """
    g, const_entity = q.abstract()
    if sorted(ordering) != list(range(g.n_nodes)):
        raise ContractError("ordering must list every node exactly once")
    # per abstract edge, the grounded relation oriented u -> v
    rel_of = defaultdict(list)
    abstract_edges = _edge_relations(q, g)
    for (u, v, neg), r in abstract_edges:
        rel_of[u].append((v, r, neg))
        rel_of[v].append((u, inverse(r), neg))
    states: dict[int, Any] = {}
    done = set()
    for node in ordering:
        if g.kinds[node] is NodeKind.CONSTANT:
            states[node] = ops.entity_encode(const_entity[node])
            done.add(node)
            continue
        inputs = []
        for other, r, neg in rel_of[node]:
            # r holds from node to other; project from other back to node
            if other not in done or states.get(other) is None:
                continue
            back = inverse(r)
            inputs.append(ops.negated_projection(states[other], back) if neg
                          else ops.projection(states[other], back))
        if not inputs:
            states[node] = None
        elif len(inputs) == 1:
            states[node] = inputs[0]
        else:
            states[node] = ops.intersection(inputs)
        done.add(node)
    for f in g.free_vars:
        if states.get(f) is None:
            raise ExecutionError(f"free variable {f} has no state")
    return states


def _edge_relations(q: GroundedQueryGraph, g: AbstractQueryGraph):
    """Pair each grounded edge with its abstract edge, in ``q.abstract()`` numbering."""
    out = []
    next_const = max(q.variables) + 1 if q.variables else 0
    for h, r, t, neg in q.edges:
        ends = []
        for term in (h, t):
            if term.is_const:
                ends.append(next_const)
                next_const += 1
            else:
                ends.append(term.value)
        u, v = ends
        if u > v:
            u, v, r = v, u, inverse(r)
        out.append(((u, v, neg), r))
    return out


def rank(states: dict[int, Any], ops: OperatorInterface, free_vars: Sequence[int]) -> dict[int, np.ndarray]:
    """Per free variable, entity ids from best to worst (ties by ascending id)."""
    out = {}
    for f in free_vars:
        s = ops.scores(states[f])
        out[f] = np.lexsort((np.arange(len(s)), -s))
    return out


def run_reasoner(q: GroundedQueryGraph, ops: OperatorInterface) -> dict[int, Any]:
    g, _ = q.abstract()
    return execute(q, order_nodes(g), ops)


def is_tree_form(g: AbstractQueryGraph) -> bool:
    """One free variable, no negation, a simple tree whose other leaves are all constants."""
    if g.n_free != 1 or g.n_neg or len(g.edges) != g.n_nodes - 1 or not g.is_connected():
        return False
    adj = g.adjacency()
    return all(g.kinds[n] is NodeKind.CONSTANT or g.kinds[n] is NodeKind.FREE
               for n in range(g.n_nodes) if len(adj[n]) == 1)

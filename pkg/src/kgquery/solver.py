"""Exact answers of grounded query graphs.

Queries become binary constraint networks. Arc consistency over the positive
constraints narrows the domains, then backtracking over the free variables
enumerates answer tuples. For each free assignment the existential part is
checked component by component, with memoization on the boundary values.
Negative constraints are only tested against concrete values, except when
one endpoint is a constant, where they shrink the domain once up front.
"""
from __future__ import annotations

import itertools
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceLimit
from .kg import KnowledgeGraph, inverse
from .query import GroundedQueryGraph


@dataclass
class Arc:
    """Constraint r(u, v) between two variables, or its negation."""

    u: int
    r: int
    v: int
    neg: bool


@dataclass
class ConstraintNetwork:
    domains: dict[int, set[int]]
    arcs: list[Arc]
    free_vars: tuple[int, ...]
    empty: bool = False
    # raw query constraints with a constant endpoint that could not be folded
    # into a domain: (constant, relation, constant, neg)
    ground_checks: list[tuple[int, int, int, bool]] = field(default_factory=list)


@dataclass
class SolveStats:
    propagation_rounds: int = 0
    backtrack_nodes: int = 0
    wall_time: float = 0.0


def build_network(q: GroundedQueryGraph, kg: KnowledgeGraph) -> ConstraintNetwork:
    q.check_ranges(kg.n_entities, kg.n_relations)
    domains: dict[int, set[int] | None] = {v: None for v in q.variables}
    arcs = []
    negated_const = defaultdict(list)
    empty = False
    checks = []
    for h, r, t, neg in q.edges:
        if h.is_const and t.is_const:
            ok = kg.has(h.value, r, t.value)
            if ok == neg:
                empty = True
            checks.append((h.value, r, t.value, neg))
            continue
        if h.is_const or t.is_const:
            # normalise to constant --r--> variable
            if h.is_const:
                c, rel, var = h.value, r, t.value
            else:
                c, rel, var = t.value, inverse(r), h.value
            image = kg.tail_set(c, rel)
            if neg:
                negated_const[var].append(image)
            else:
                domains[var] = set(image) if domains[var] is None else domains[var] & image
            continue
        arcs.append(Arc(h.value, r, t.value, neg))
    for var in domains:
        if domains[var] is None:
            domains[var] = set(kg.universe)
        for image in negated_const[var]:
            domains[var] -= image
        if not domains[var]:
            empty = True
    return ConstraintNetwork(domains, arcs, q.free_vars, empty, checks)


def _image(kg: KnowledgeGraph, values, r: int) -> set[int]:
    out = set()
    for x in values:
        out |= kg.tail_set(x, r)
    return out


def _revise(kg: KnowledgeGraph, dom_src: set[int], r: int, dom_dst: set[int]) -> set[int]:
    """Values of ``dom_dst`` with an r-support in ``dom_src``."""
    if len(dom_src) <= len(dom_dst):
        return dom_dst & _image(kg, dom_src, r)
    back = inverse(r)
    return {y for y in dom_dst if not kg.tail_set(y, back).isdisjoint(dom_src)}


def propagate(net: ConstraintNetwork, kg: KnowledgeGraph, stats: SolveStats | None = None) -> ConstraintNetwork:
    """Arc-consistent fixpoint over the positive variable-variable constraints."""
    doms = {v: set(d) for v, d in net.domains.items()}
    out = ConstraintNetwork(doms, net.arcs, net.free_vars, net.empty, net.ground_checks)
    if out.empty:
        return out
    positive = [a for a in net.arcs if not a.neg]
    touching = defaultdict(list)
    for a in positive:
        touching[a.u].append(a)
        touching[a.v].append(a)
    queue = list(positive)
    queued = set(range(len(queue)))
    index = {id(a): i for i, a in enumerate(positive)}
    while queue:
        if stats is not None:
            stats.propagation_rounds += 1
        a = queue.pop(0)
        queued.discard(index[id(a)])
        changed = []
        new_v = _revise(kg, doms[a.u], a.r, doms[a.v])
        if len(new_v) < len(doms[a.v]):
            doms[a.v] = new_v
            changed.append(a.v)
        new_u = _revise(kg, doms[a.v], inverse(a.r), doms[a.u])
        if len(new_u) < len(doms[a.u]):
            doms[a.u] = new_u
            changed.append(a.u)
        for var in changed:
            if not doms[var]:
                out.empty = True
                return out
            for b in touching[var]:
                if b is not a and index[id(b)] not in queued:
                    queue.append(b)
                    queued.add(index[id(b)])
    return out


def _holds(kg, arc: Arc, a: int, b: int) -> bool:
    return kg.has(a, arc.r, b) != arc.neg


class _Search:
    def __init__(self, net: ConstraintNetwork, kg: KnowledgeGraph, stats: SolveStats):
        self.kg = kg
        self.doms = net.domains
        self.stats = stats
        self.by_var = defaultdict(list)
        for a in net.arcs:
            self.by_var[a.u].append(a)
            self.by_var[a.v].append(a)
        self.free = list(net.free_vars)
        free_set = set(self.free)
        self.exist = [v for v in self.doms if v not in free_set]
        self.components = self._exist_components()
        self.memo = {}

    def _exist_components(self):
        exist = set(self.exist)
        comps, seen = [], set()
        for s in sorted(exist):
            if s in seen:
                continue
            comp, stack = [s], [s]
            seen.add(s)
            while stack:
                u = stack.pop()
                for a in self.by_var[u]:
                    w = a.v if a.u == u else a.u
                    if w in exist and w not in seen:
                        seen.add(w)
                        comp.append(w)
                        stack.append(w)
            boundary = sorted({(a.v if a.u == u else a.u)
                               for u in comp for a in self.by_var[u]} - exist)
            comps.append((self._order(comp), tuple(boundary)))
        return comps

    def _order(self, variables):
        """Most-constrained first, then keep expanding along constraints."""
        rest = set(variables)
        order = []
        while rest:
            placed = set(order)
            nxt = max(sorted(rest), key=lambda v: (sum((a.v if a.u == v else a.u) in placed for a in self.by_var[v]),
                                                    len(self.by_var[v]), -len(self.doms[v])))
            order.append(nxt)
            rest.discard(nxt)
        return order

    def candidates(self, var, assign):
        """Values of ``var`` consistent with every assigned neighbour."""
        dom = self.doms[var]
        cands = None
        pending_neg = []
        for a in self.by_var[var]:
            other = a.v if a.u == var else a.u
            if other not in assign:
                continue
            if a.neg:
                pending_neg.append(a)
                continue
            # positive: var must be in the image of the assigned value
            rel = a.r if a.v == var else inverse(a.r)
            img = self.kg.tail_set(assign[other], rel)
            cands = img if cands is None else cands & img
            if not cands:
                return []
        pool = dom if cands is None else (cands & dom)
        out = []
        for x in sorted(pool):
            if all(_holds(self.kg, a, *((assign[a.u], x) if a.v == var else (x, assign[a.v])))
                   for a in pending_neg):
                out.append(x)
        return out

    def _extend(self, order, i, assign):
        if i == len(order):
            return True
        var = order[i]
        for x in self.candidates(var, assign):
            self.stats.backtrack_nodes += 1
            assign[var] = x
            if self._extend(order, i + 1, assign):
                del assign[var]
                return True
            del assign[var]
        return False

    def existentials_ok(self, assign):
        for ci, (order, boundary) in enumerate(self.components):
            key = (ci, tuple(assign[b] for b in boundary))
            hit = self.memo.get(key)
            if hit is None:
                hit = self._extend(order, 0, dict(assign))
                self.memo[key] = hit
            if not hit:
                return False
        return True

    def answers(self, limit=None):
        order = sorted(self.free, key=lambda v: (-len(self.by_var[v]), v))
        # after the first pick, prefer free variables adjacent to assigned ones
        order = self._order(order) if len(order) > 1 else order
        out = set()
        assign = {}

        def rec(i):
            if i == len(order):
                if self.existentials_ok(assign):
                    out.add(tuple(assign[v] for v in self.free))
                    if limit is not None and len(out) > limit:
                        raise ResourceLimit(f"more than {limit} answer tuples")
                return
            var = order[i]
            for x in self.candidates(var, assign):
                self.stats.backtrack_nodes += 1
                assign[var] = x
                rec(i + 1)
                del assign[var]

        rec(0)
        return frozenset(out)


def solve_efo(q: GroundedQueryGraph, kg: KnowledgeGraph, stats: SolveStats | None = None,
              max_tuples: int | None = None) -> frozenset:
    """Free-variable tuples for which some existential witness satisfies every constraint.

    ``max_tuples`` aborts with ``ResourceLimit`` once the answer grows past it.
    """
    stats = stats if stats is not None else SolveStats()
    start = time.perf_counter()
    net = propagate(build_network(q, kg), kg, stats)
    if net.empty:
        stats.wall_time += time.perf_counter() - start
        return frozenset()
    result = _Search(net, kg, stats).answers(max_tuples)
    stats.wall_time += time.perf_counter() - start
    return result


def solve_csp(q: GroundedQueryGraph, kg: KnowledgeGraph, cap: int = 10 ** 7,
              stats: SolveStats | None = None) -> tuple[tuple[int, ...], frozenset]:
    """Every satisfying assignment over all variables.

    Returns ``(variable order, assignments)``; variables are listed free
    first then existential, each ascending. Raises ``ResourceLimit`` when
    the product of propagated domain sizes exceeds ``cap``.
    """
    stats = stats if stats is not None else SolveStats()
    net = propagate(build_network(q, kg), kg, stats)
    variables = tuple(q.free_vars) + tuple(q.existential_vars)
    if net.empty:
        return variables, frozenset()
    size = 1
    for v in variables:
        size *= max(1, len(net.domains[v]))
        if size > cap:
            raise ResourceLimit(f"search space {size} exceeds cap {cap}")
    search = _Search(net, kg, stats)
    order = search._order(list(variables))
    out = set()
    assign = {}

    def rec(i):
        if i == len(order):
            out.add(tuple(assign[v] for v in variables))
            return
        var = order[i]
        for x in search.candidates(var, assign):
            stats.backtrack_nodes += 1
            assign[var] = x
            rec(i + 1)
            del assign[var]

    rec(0)
    return variables, frozenset(out)


def adjacency_tensor(kg: KnowledgeGraph) -> np.ndarray:
    """Boolean array ``A[r, h, t]`` of the whole graph."""
    a = np.zeros((kg.n_relations, kg.n_entities, kg.n_entities), dtype=bool)
    if kg.triples:
        h, r, t = np.array(sorted(kg.triples)).T
        a[r, h, t] = True
    return a


def brute_force_oracle(q: GroundedQueryGraph, kg: KnowledgeGraph, cap: int = 5 * 10 ** 7,
                       tensor: np.ndarray | None = None) -> frozenset:
    """Reference answers by evaluating every assignment of every variable.

    The truth value of the conjunction over all ``|E|^n`` assignments is
    built as one boolean array by broadcasting, then existential axes are
    reduced with ``any``. No pruning, no propagation.
    """
    variables = tuple(q.free_vars) + tuple(q.existential_vars)
    n, ne = len(variables), kg.n_entities
    if ne ** n > cap:
        raise ResourceLimit(f"{ne}^{n} assignments exceed oracle cap {cap}")
    if ne == 0:
        return frozenset()
    a = adjacency_tensor(kg) if tensor is None else tensor
    axis = {v: i for i, v in enumerate(variables)}
    truth = np.ones((ne,) * n, dtype=bool)
    for h, r, t, neg in q.edges:
        rel = a[r]
        if h.is_const and t.is_const:
            val = bool(rel[h.value, t.value]) != neg
            if not val:
                return frozenset()
            continue
        if h.is_const or t.is_const:
            var = t.value if h.is_const else h.value
            vec = rel[h.value, :] if h.is_const else rel[:, t.value]
            if neg:
                vec = ~vec
            shape = [1] * n
            shape[axis[var]] = ne
            truth &= vec.reshape(shape)
            continue
        mat = ~rel if neg else rel
        i, j = axis[h.value], axis[t.value]
        shape = [1] * n
        shape[i] = shape[j] = ne
        block = mat if i < j else mat.T
        truth &= block.reshape(shape)
    k = len(q.free_vars)
    if n > k:
        truth = truth.any(axis=tuple(range(k, n)))
    return frozenset(tuple(int(x) for x in idx) for idx in zip(*np.nonzero(truth)))


def brute_force_csp(q: GroundedQueryGraph, kg: KnowledgeGraph) -> frozenset:
    """Full assignments by plain iteration; only for tiny instances."""
    variables = tuple(q.free_vars) + tuple(q.existential_vars)
    out = set()
    for values in itertools.product(range(kg.n_entities), repeat=len(variables)):
        val = dict(zip(variables, values))
        ok = True
        for h, r, t, neg in q.edges:
            a = h.value if h.is_const else val[h.value]
            b = t.value if t.is_const else val[t.value]
            if kg.has(a, r, b) == neg:
                ok = False
                break
        if ok:
            out.add(values)
    return frozenset(out)

"""Sample grounded queries for abstract query graphs.

Grounding happens in two phases. The positive part is grounded backward from
a witness: in each connected piece one variable gets a random entity and the
assignment is extended along positive edges by sampling incident triples, so
the grounded positive part always has a solution. Each negative edge is then grounded so that it
removes at least one value (or value pair) from the arc-consistent candidate
sets of the positive part.
"""
from __future__ import annotations

import json
import logging
import multiprocessing
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .errors import InvariantError, ResourceLimit, SamplingExhausted
from .kg import KgPair, KnowledgeGraph, inverse
from .query import (AbstractQueryGraph, GroundedEdge, GroundedQueryGraph, NodeKind, Term,
                    answer_set, free_var_projection)
from .solver import build_network, propagate, solve_efo

log = logging.getLogger(__name__)

# a type whose first few samples all fail is abandoned
GIVE_UP_AFTER = 8


@dataclass
class SampleConfig:
    num_positive_type: int = 1000
    num_negative_type: int = 500
    answer_bound_per_free: int = 100
    seed: int = 0
    max_retries: int = 128
    workers: int = 1

    def __post_init__(self):
        for name in ("num_positive_type", "num_negative_type", "answer_bound_per_free", "max_retries", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class GroundedSample:
    formula_id: str
    index: int
    query: GroundedQueryGraph
    answers: frozenset
    easy_answers: frozenset
    hard_answers: frozenset = field(init=False)

    def __post_init__(self):
        self.hard_answers = self.answers - self.easy_answers

    @property
    def k(self) -> int:
        return self.query.k

    def marginal_hard(self, i: int) -> frozenset:
        return free_var_projection(self.answers, i, self.k) - free_var_projection(self.easy_answers, i, self.k)

    def to_json(self) -> dict:
        return {
            "formula_id": self.formula_id,
            "index": self.index,
            **self.query.to_json(),
            "answers": sorted(list(t) for t in self.answers),
            "easy_answers": sorted(list(t) for t in self.easy_answers),
            "hard_answers": sorted(list(t) for t in self.hard_answers),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundedSample":
        from .errors import SchemaError
        q = GroundedQueryGraph.from_json(obj)
        try:
            fid, idx = obj["formula_id"], obj.get("index", 0)
            if not isinstance(fid, str) or not isinstance(idx, int):
                raise SchemaError("formula_id must be a string and index an int")
            full = answer_set(obj["answers"], q.k)
            easy = answer_set(obj["easy_answers"], q.k)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad sample record: {exc!r}") from exc
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc
        s = cls(fid, idx, q, full, easy)
        if "hard_answers" in obj and answer_set(obj["hard_answers"], q.k) != s.hard_answers:
            raise SchemaError("hard_answers disagree with answers minus easy_answers")
        return s


@dataclass
class PositivePart:
    graph: AbstractQueryGraph
    nodes: frozenset          # V': endpoints of positive edges
    positive_edges: tuple     # indices into graph.edges


@dataclass
class Grounding:
    values: dict[int, int]    # node -> entity (constants, plus the witness for variables)
    relations: dict[int, int]  # edge index -> relation, oriented from edge.u to edge.v

    def constants(self, g: AbstractQueryGraph) -> dict[int, int]:
        return {n: e for n, e in self.values.items() if g.kinds[n] is NodeKind.CONSTANT}


def split_positive_subgraph(g: AbstractQueryGraph) -> tuple[PositivePart, list[int]]:
    """Positive part and the indices of the negative edges."""
    pos = tuple(i for i, e in enumerate(g.edges) if not e.neg)
    neg = [i for i, e in enumerate(g.edges) if e.neg]
    nodes = frozenset(x for i in pos for x in g.edges[i][:2])
    for i in range(g.n_nodes):
        if i not in nodes and g.is_variable(i):
            raise InvariantError(f"variable {i} has no positive edge")
    return PositivePart(g, nodes, pos), neg


def _term(g, values, node):
    return Term.const(values[node]) if g.kinds[node] is NodeKind.CONSTANT else Term.var(node)


def _grounded(g: AbstractQueryGraph, grounding: Grounding, edge_ids) -> GroundedQueryGraph:
    edges = []
    for i in edge_ids:
        u, v, neg = g.edges[i]
        edges.append(GroundedEdge(_term(g, grounding.values, u), grounding.relations[i],
                                  _term(g, grounding.values, v), neg))
    free = tuple(v for v in g.free_vars if any(v in g.edges[i][:2] for i in edge_ids))
    return GroundedQueryGraph(tuple(edges), free)


def _orient(edge, src, rel):
    """Relation for ``edge`` (stored u->v) given that ``rel`` holds from ``src`` to the other end."""
    return rel if edge[0] == src else inverse(rel)


def ground_positive(gp: PositivePart, kg: KnowledgeGraph, rng: random.Random) -> tuple[Grounding, dict[int, set]]:
    """Ground the positive part and return arc-consistent candidate sets.

    Raises ``SamplingExhausted`` when this attempt cannot be completed; the
    caller decides whether to retry.
    """
    g = gp.graph
    starts = kg.non_isolated()
    if not starts or not gp.positive_edges:
        raise SamplingExhausted("empty knowledge graph or no positive edge")
    incident = {n: [] for n in gp.nodes}
    for i in gp.positive_edges:
        u, v, _ = g.edges[i]
        incident[u].append(i)
        incident[v].append(i)
    values, relations = {}, {}
    # the positive part may split into several pieces, each grounded from its own witness
    for comp in _components(g, gp, incident):
        roots = sorted(n for n in comp if g.is_variable(n)) or sorted(comp)
        root = rng.choice(roots)
        values[root] = rng.choice(starts)
        _extend_witness(g, root, incident, values, relations, kg, rng)
    grounding = Grounding(values, relations)
    q = _grounded(g, grounding, gp.positive_edges)
    net = propagate(build_network(q, kg), kg)
    if net.empty:
        raise InvariantError("witness-grounded positive part has no solution")
    return grounding, net.domains


def _components(g, gp, incident):
    seen, comps = set(), []
    for s in sorted(gp.nodes):
        if s in seen:
            continue
        comp, stack = {s}, [s]
        while stack:
            u = stack.pop()
            for i in incident[u]:
                for w in g.edges[i][:2]:
                    if w not in comp:
                        comp.add(w)
                        stack.append(w)
        seen |= comp
        comps.append(comp)
    return comps


def _extend_witness(g, root, incident, values, relations, kg, rng):
    queue = [root]
    while queue:
        node = queue.pop(0)
        for i in incident[node]:
            if i in relations:
                continue
            edge = g.edges[i]
            other = edge[1] if edge[0] == node else edge[0]
            if other not in values:
                out = kg.out_edges(values[node])
                if not out:
                    raise SamplingExhausted("dead end while extending witness")
                r, t = rng.choice(out)
                values[other] = t
                relations[i] = _orient(edge, node, r)
                queue.append(other)
            else:
                # closes a cycle or doubles an edge: needs a relation between two fixed entities
                a, b = values[edge[0]], values[edge[1]]
                used = {relations[j] for j in incident[node]
                        if j in relations and g.edges[j][:2] == edge[:2]}
                choices = [r for r in kg.relations_between(a, b) if r not in used]
                if not choices:
                    raise SamplingExhausted("no relation closes the cycle or parallel edge")
                relations[i] = rng.choice(choices)


def _endpoint_values(g, node, grounding, candidates):
    if g.kinds[node] is NodeKind.CONSTANT:
        return {grounding.values[node]}
    return candidates[node]


def ground_negative(g: AbstractQueryGraph, partial: Grounding, candidates: dict[int, set],
                    kg: KnowledgeGraph, rng: random.Random) -> Grounding:
    """Ground every negative edge so that it removes some candidate."""
    values = dict(partial.values)
    relations = dict(partial.relations)
    for i, (u, v, neg) in enumerate(g.edges):
        if not neg:
            continue
        # positive relations on the same pair; reusing one would make the query contradictory
        clash = {relations[j] for j, e in enumerate(g.edges)
                 if not e.neg and e[:2] == (u, v) and j in relations}
        if u in values or g.is_variable(u):
            if v in values or g.is_variable(v):
                rel = _negative_between(g, u, v, values, candidates, kg, rng, clash)
            else:
                rel, values[v] = _negative_fresh(v, u, (u, v), candidates, kg, rng)
        else:
            rel, values[u] = _negative_fresh(u, v, (u, v), candidates, kg, rng)
        relations[i] = rel
    return Grounding(values, relations)


def _negative_between(g, u, v, values, candidates, kg, rng, clash):
    """Both endpoints already grounded: pick r hitting some candidate pair.

    A candidate pair must also satisfy every positive edge on the same pair
    of nodes (``clash``), otherwise the negation would remove nothing.
    """
    grounding = Grounding(values, {})
    left = sorted(_endpoint_values(g, u, grounding, candidates))
    right = _endpoint_values(g, v, grounding, candidates)
    rng.shuffle(left)
    for a in left:
        hits = [r for r, t in kg.out_edges(a)
                if t in right and r not in clash and all(kg.has(a, c, t) for c in clash)]
        if hits:
            return rng.choice(hits)
    raise SamplingExhausted("no relation removes a candidate pair")


def _negative_fresh(const_node, var_node, edge, candidates, kg, rng):
    """Fresh constant: pick (entity, r) whose image hits a candidate of the variable."""
    pool = sorted(candidates[var_node])
    rng.shuffle(pool)
    for b in pool:
        out = kg.out_edges(b)
        if out:
            r, a = rng.choice(out)          # b -r-> a, so a -inverse(r)-> b
            return _orient(edge, const_node, inverse(r)), a
    raise SamplingExhausted("no constant can negate a candidate")


def ground_query(g: AbstractQueryGraph, kg: KnowledgeGraph, rng: random.Random) -> GroundedQueryGraph:
    """One grounding attempt (positive then negative phase)."""
    gp, neg = split_positive_subgraph(g)
    partial, cands = ground_positive(gp, kg, rng)
    full = ground_negative(g, partial, cands, kg, rng) if neg else partial
    return _grounded(g, full, range(len(g.edges)))


def sample_one(formula_id: str, index: int, g: AbstractQueryGraph, kgs: KgPair,
               cfg: SampleConfig) -> GroundedSample | None:
    """Retry until a grounding passes the answer filters, or give up (``None``)."""
    rng = random.Random(f"{cfg.seed}:ground:{formula_id}:{index}")
    k = g.n_free
    bound = cfg.answer_bound_per_free * k
    for _ in range(cfg.max_retries):
        try:
            q = ground_query(g, kgs.full, rng)
            full = solve_efo(q, kgs.full, max_tuples=bound ** k)
        except (SamplingExhausted, ResourceLimit):
            continue
        if any(len(free_var_projection(full, i, k)) > bound for i in range(k)):
            continue
        easy = solve_efo(q, kgs.observed)
        if not full - easy:
            continue
        return GroundedSample(formula_id, index, q, full, easy)
    return None


def _sample_type(args):
    formula_id, g, kgs, cfg = args
    target = cfg.num_negative_type if g.n_neg else cfg.num_positive_type
    out, seen = [], set()
    failures = 0
    for index in range(target):
        s = sample_one(formula_id, index, g, kgs, cfg)
        if s is None:
            failures += 1
            if not out and failures >= GIVE_UP_AFTER:
                break
            continue
        key = json.dumps(s.query.to_json(), sort_keys=True)
        if key in seen:
            continue
        seen.add(key)
        out.append(s)
    return formula_id, out, target - len(out)


_SHARED = {}


def _init_worker(kgs):
    _SHARED["kgs"] = kgs


def _sample_type_shared(args):
    formula_id, g, cfg = args
    return _sample_type((formula_id, g, _SHARED["kgs"], cfg))


def sample_dataset(types: list[tuple[str, AbstractQueryGraph]], kgs: KgPair,
                   cfg: SampleConfig) -> tuple[list[GroundedSample], dict[str, int]]:
    """Samples for every type plus the per-type shortfall against the target count.

    Output order is (type order, sample index) whatever the worker count.
    """
    if not types:
        raise ValueError("no query types given")
    if cfg.workers > 1 and len(types) > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(cfg.workers, mp_context=ctx, initializer=_init_worker,
                                 initargs=(kgs,)) as pool:
            results = list(pool.map(_sample_type_shared, [(fid, g, cfg) for fid, g in types]))
    else:
        results = [_sample_type((fid, g, kgs, cfg)) for fid, g in types]
    samples, shortfall = [], {}
    for fid, out, missing in results:
        samples.extend(out)
        if missing:
            shortfall[fid] = missing
    if shortfall:
        log.warning("%d types produced fewer samples than requested", len(shortfall))
    return samples, shortfall


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("KGQUERY_WORKERS", "1")))
    except ValueError:
        return 1

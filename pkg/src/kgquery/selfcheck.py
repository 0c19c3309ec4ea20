"""Randomized cross-checks of the solver against the brute-force oracle."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .enumerate import EnumBudget, enumerate_abstract
from .errors import ResourceLimit, SamplingExhausted
from .ground import ground_query
from .kg import KgPair, random_kg_pair
from .query import AbstractQueryGraph, GroundedEdge, GroundedQueryGraph, NodeKind, Term
from .solver import adjacency_tensor, brute_force_oracle, solve_csp, solve_efo

INSTANCES_PER_KG = 25


@dataclass
class OracleReport:
    instances: int = 0
    mismatches: int = 0
    csp_checked: int = 0
    csp_mismatches: int = 0
    nonempty: int = 0
    types_covered: set = field(default_factory=set)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.mismatches == 0 and self.csp_mismatches == 0


def random_grounding(g: AbstractQueryGraph, n_entities: int, n_relations: int,
                     rng: random.Random) -> GroundedQueryGraph:
    """Uniformly random constants and relations, with no satisfiability guarantee."""
    values = {i: rng.randrange(n_entities) for i in range(g.n_nodes) if g.kinds[i] is NodeKind.CONSTANT}

    def term(i):
        return Term.const(values[i]) if i in values else Term.var(i)

    edges = tuple(GroundedEdge(term(u), rng.randrange(n_relations), term(v), neg) for u, v, neg in g.edges)
    return GroundedQueryGraph(edges, tuple(g.free_vars))


def random_kg(rng: random.Random, max_entities: int, max_relations: int) -> KgPair:
    n_ent = rng.randint(max(4, max_entities // 2), max_entities)
    n_rel = rng.randint(1, max_relations)
    n_tri = int(n_ent * n_rel * rng.uniform(0.8, 2.5))
    return random_kg_pair(n_ent, n_rel, n_tri, rng)


def random_instances(types, n_instances: int, max_entities: int, max_relations: int, seed: int):
    """Yield ``(kg, query, type index)``, cycling over ``types``.

    Passes over the type list alternate between groundings from a witness,
    whose answers tend to be nonempty, and uniformly random constants and
    relations.
    """
    rng = random.Random(f"{seed}:oracle")
    kgs = None
    for i in range(n_instances):
        if i % INSTANCES_PER_KG == 0:
            kgs = random_kg(rng, max_entities, max_relations)
        ti = i % len(types)
        g = types[ti]
        q = None
        if (i // len(types)) % 2 == 0:
            try:
                q = ground_query(g, kgs.full, rng)
            except SamplingExhausted:
                q = None
        if q is None:
            q = random_grounding(g, kgs.full.n_entities, kgs.full.n_relations, rng)
        yield kgs.full, q, ti


def oracle_suite(n_instances: int = 1000, max_entities: int = 40, max_relations: int = 5,
                 seed: int = 0, types: list[AbstractQueryGraph] | None = None,
                 csp_cap: int = 200_000) -> OracleReport:
    types = types if types is not None else enumerate_abstract(EnumBudget())
    report = OracleReport()
    tensor_of = {}
    for kg, q, ti in random_instances(types, n_instances, max_entities, max_relations, seed):
        tensor = tensor_of.get(id(kg))
        if tensor is None:
            tensor_of.clear()
            tensor = tensor_of[id(kg)] = adjacency_tensor(kg)
        got = solve_efo(q, kg)
        want = brute_force_oracle(q, kg, tensor=tensor)
        report.instances += 1
        report.types_covered.add(ti)
        report.nonempty += bool(want)
        if got != want:
            report.mismatches += 1
            if len(report.failures) < 5:
                report.failures.append({"type": ti, "query": q.to_json(),
                                        "solver_only": sorted(got - want)[:5],
                                        "oracle_only": sorted(want - got)[:5]})
        try:
            variables, full = solve_csp(q, kg, cap=csp_cap)
        except ResourceLimit:
            continue
        report.csp_checked += 1
        k = q.k
        if frozenset(t[:k] for t in full) != got:
            report.csp_mismatches += 1
    return report

"""Marginal, multiply and joint ranking metrics and their aggregation.

Rankings are exchanged in compact form: for each free variable, only the
entities that are answers (full or observed) are recorded, each with its
position in the strict ranking, its score, and how many entities score
strictly higher or equally. That is enough to rank an answer against the
non-answers with pessimistic ties, and to recover whole-set positions for
the joint metric.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ContractError
from .ground import GroundedSample
from .query import classify_topology, free_var_projection

DEFAULT_HITS = (1, 3, 10)


class RankEntry(NamedTuple):
    position: int   # 1-based rank in the strict order (score desc, id asc)
    score: float
    n_better: int   # entities with a strictly higher score
    n_tied: int     # other entities with an equal score


def rank_entries(scores: np.ndarray, entities: Iterable[int]) -> dict[int, RankEntry]:
    """Rank entries for ``entities`` from a full score vector."""
    n = len(scores)
    order = np.lexsort((np.arange(n), -scores))
    position = np.empty(n, dtype=np.int64)
    position[order] = np.arange(1, n + 1)
    asc = np.sort(scores)
    out = {}
    for e in sorted(set(entities)):
        s = scores[e]
        higher = n - int(np.searchsorted(asc, s, side="right"))
        equal = int(np.searchsorted(asc, s, side="right") - np.searchsorted(asc, s, side="left")) - 1
        out[e] = RankEntry(int(position[e]), float(s), higher, equal)
    return out


@dataclass
class RankContext:
    """Per-query ranking information needed by every metric."""

    entries: list[dict[int, RankEntry]]   # per free-variable index
    answers: frozenset
    easy_answers: frozenset

    @property
    def k(self) -> int:
        return len(self.entries)

    def answer_entities(self, i: int) -> frozenset:
        return free_var_projection(self.answers, i, self.k) | free_var_projection(self.easy_answers, i, self.k)

    def rank_against_non_answers(self, i: int, entity: int) -> int:
        """1 + non-answers scored strictly higher + non-answers tied (pessimistic)."""
        entries = self.entries[i]
        if entity not in entries:
            raise ContractError(f"no ranking recorded for entity {entity} at variable {i}")
        me = entries[entity]
        better_answers = tied_answers = 0
        for other in self.answer_entities(i):
            if other == entity:
                continue
            s = entries[other].score
            if s > me.score:
                better_answers += 1
            elif s == me.score:
                tied_answers += 1
        return 1 + (me.n_better - better_answers) + (me.n_tied - tied_answers)

    def whole_set_rank(self, i: int, entity: int) -> int:
        return self.entries[i][entity].position

    @classmethod
    def from_scores(cls, scores: Sequence[np.ndarray], answers: frozenset, easy: frozenset) -> "RankContext":
        k = len(scores)
        entries = []
        for i in range(k):
            ents = free_var_projection(answers, i, k) | free_var_projection(easy, i, k)
            entries.append(rank_entries(np.asarray(scores[i], dtype=float), ents))
        return cls(entries, answers, easy)


def filtered_rank(ctx: RankContext, i: int, entity: int) -> int:
    """Rank of a marginal hard answer against the non-answers of variable ``i``."""
    hard = free_var_projection(ctx.answers, i, ctx.k) - free_var_projection(ctx.easy_answers, i, ctx.k)
    if entity not in hard:
        raise ContractError(f"entity {entity} is not a marginal hard answer of variable {i}")
    return ctx.rank_against_non_answers(i, entity)


def _scores_from_ranks(ranks: Sequence[int], hits: Sequence[int]) -> dict[str, float]:
    out = {"mrr": float(np.mean([1.0 / r for r in ranks]))}
    for h in hits:
        out[f"hit@{h}"] = float(np.mean([r <= h for r in ranks]))
    return out


def marginal_metrics(ctx: RankContext, hits: Sequence[int] = DEFAULT_HITS) -> dict[str, float] | None:
    """Mean over free variables that have marginal hard answers; ``None`` when none has."""
    per_var = []
    for i in range(ctx.k):
        hard = free_var_projection(ctx.answers, i, ctx.k) - free_var_projection(ctx.easy_answers, i, ctx.k)
        if not hard:
            continue
        per_var.append(_scores_from_ranks([filtered_rank(ctx, i, e) for e in sorted(hard)], hits))
    if not per_var:
        return None
    return {key: float(np.mean([v[key] for v in per_var])) for key in per_var[0]}


def multiply_metrics(ctx: RankContext, hits: Sequence[int] = DEFAULT_HITS) -> dict[str, float]:
    """HIT@n^k: a hard tuple counts when every component is in the top n of its variable."""
    hard = sorted(ctx.answers - ctx.easy_answers)
    if not hard:
        raise ContractError("multiply metrics need at least one hard answer tuple")
    ranks = [[ctx.rank_against_non_answers(i, a) for i, a in enumerate(t)] for t in hard]
    return {f"hit@{h}": float(np.mean([all(r <= h for r in rs) for rs in ranks])) for h in hits}


def joint_rank_k2(r1: int, r2: int) -> int:
    """Position of (r1, r2) among all rank pairs sorted by sum, then by r1.

    Exact as long as the entity set has at least ``r1 + r2 - 1`` members;
    beyond that the formula also counts pairs that do not exist.
    """
    if r1 < 1 or r2 < 1:
        raise ContractError("ranks start at 1")
    return math.comb(r1 + r2 - 1, 2) + r1


def joint_metrics(ctx: RankContext, hits: Sequence[int] = DEFAULT_HITS) -> dict[str, float]:
    """Filtered joint rank of each hard tuple, from unfiltered per-variable positions."""
    if ctx.k != 2:
        raise ContractError(f"joint metrics are defined for two free variables, got {ctx.k}")
    hard = sorted(ctx.answers - ctx.easy_answers)
    if not hard:
        raise ContractError("joint metrics need at least one hard answer tuple")

    def raw(t):
        return joint_rank_k2(ctx.whole_set_rank(0, t[0]), ctx.whole_set_rank(1, t[1]))

    others = sorted(raw(t) for t in ctx.answers | ctx.easy_answers)
    ranks = []
    for t in hard:
        r = raw(t)
        ahead = int(np.searchsorted(others, r, side="left"))
        ranks.append(r - ahead)
    return _scores_from_ranks(ranks, hits)


def query_metrics(ctx: RankContext, families: Sequence[str], hits: Sequence[int] = DEFAULT_HITS) -> dict:
    """Metric dict for one query: ``{family: scores or None}``."""
    out = {}
    for fam in families:
        if fam == "marginal":
            out[fam] = marginal_metrics(ctx, hits)
        elif fam == "multiply":
            out[fam] = multiply_metrics(ctx, hits) if ctx.answers - ctx.easy_answers else None
        elif fam == "joint":
            out[fam] = joint_metrics(ctx, hits) if ctx.k == 2 and ctx.answers - ctx.easy_answers else None
        else:
            raise ContractError(f"unknown metric family {fam!r}")
    return out


class CellKey(NamedTuple):
    k: int
    c: int
    e: int
    topology: str


def sample_cell(sample: GroundedSample) -> CellKey:
    g, _ = sample.query.abstract()
    return CellKey(g.n_free, g.n_const, g.n_exist, classify_topology(g).value)


def _mean_dicts(dicts):
    keys = dicts[0].keys()
    return {k: float(np.mean([d[k] for d in dicts])) for k in keys}


def aggregate(per_query: Sequence[tuple[str, CellKey, dict]], families: Sequence[str]) -> dict:
    """Queries -> type -> (k, c, e, topology) cell, plus row and column means.

    ``per_query`` holds ``(formula_id, cell, metrics)``. Type and cell scores
    are plain means; a row (fixed k and c) or column (fixed k, e and
    topology) score is the mean of the type scores it contains. Cells with
    no scored query are left out rather than reported as zero.
    """
    by_type = defaultdict(lambda: defaultdict(list))
    cell_of = {}
    skipped = defaultdict(lambda: defaultdict(int))
    counts = defaultdict(int)
    for fid, cell, metrics in per_query:
        cell_of[fid] = cell
        counts[fid] += 1
        for fam in families:
            m = metrics.get(fam)
            if m is None:
                skipped[fid][fam] += 1
            else:
                by_type[fid][fam].append(m)
    type_scores = {}
    for fid in sorted(cell_of):
        type_scores[fid] = {fam: _mean_dicts(by_type[fid][fam]) for fam in families if by_type[fid][fam]}

    def group(keyfn):
        groups = defaultdict(lambda: defaultdict(list))
        members = defaultdict(set)
        for fid, cell in cell_of.items():
            key = keyfn(cell)
            members[key].add(fid)
            for fam, sc in type_scores[fid].items():
                groups[key][fam].append(sc)
        rows = []
        for key in sorted(members):
            fids = members[key]
            row = {"key": list(key), "n_types": len(fids), "n_queries": sum(counts[f] for f in fids),
                   "skipped": {fam: sum(skipped[f][fam] for f in fids) for fam in families}}
            for fam in families:
                if groups[key][fam]:
                    row[fam] = _mean_dicts(groups[key][fam])
            rows.append(row)
        return rows

    return {
        "families": list(families),
        "types": [{"formula_id": fid, "cell": list(cell_of[fid]), "n_queries": counts[fid],
                   **type_scores[fid]} for fid in sorted(cell_of)],
        "cells": group(lambda c: tuple(c)),
        "rows": group(lambda c: (c.k, c.c)),
        "columns": group(lambda c: (c.k, c.e, c.topology)),
    }


def crisp_sanity_eval(samples: Sequence[GroundedSample], observed) -> dict:
    """Share of easy answers of tree-form queries that the crisp reasoner scores 1 on the observed graph."""
    from .reasoner import CrispOps, is_tree_form, run_reasoner
    ops = CrispOps(observed)
    checked = passed = queries = 0
    for s in samples:
        g, _ = s.query.abstract()
        if not is_tree_form(g):
            continue
        queries += 1
        states = run_reasoner(s.query, ops)
        f = s.query.free_vars[0]
        for (a,) in s.easy_answers:
            checked += 1
            passed += a in states[f]
    return {"queries": queries, "easy_answers": checked,
            "pass_rate": (passed / checked) if checked else 1.0}

"""Triple store with observed/full splits.

Every raw relation ``r`` gets two dense ids: ``2i`` for ``r`` and ``2i + 1``
for its inverse, so ``inverse(r) == r ^ 1`` and every atom can be walked in
both directions.
"""
from __future__ import annotations

import os
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ContractError, SchemaError

SPLIT_FILES = ("train", "valid", "test")
INVERSE_SUFFIX = "^-1"


def inverse(relation: int) -> int:
    return relation ^ 1


class KnowledgeGraph:
    """Immutable, indexed set of (head, relation, tail) triples.

    ``triples`` must already contain the inverse of every triple.
    """

    def __init__(self, n_entities: int, n_relations: int, triples: Iterable[tuple[int, int, int]]):
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.triples = frozenset(triples)
        fwd = defaultdict(set)
        bwd = defaultdict(set)
        ends = [set() for _ in range(n_relations)]
        out = defaultdict(list)
        for h, r, t in self.triples:
            if not (0 <= h < n_entities and 0 <= t < n_entities and 0 <= r < n_relations):
                raise ContractError(f"triple {(h, r, t)} out of id range")
            fwd[h, r].add(t)
            bwd[t, r].add(h)
            ends[r].add(h)
            ends[r].add(t)
        self._fwd = {k: frozenset(v) for k, v in fwd.items()}
        self._bwd = {k: frozenset(v) for k, v in bwd.items()}
        self._endpoints = [frozenset(s) for s in ends]
        for h, r, t in sorted(self.triples):
            out[h].append((r, t))
        # sorted (relation, tail) pairs per head; used for uniform edge sampling
        self._out = dict(out)
        self._heads = tuple(sorted(self._out))
        self.universe = frozenset(range(n_entities))

    def __len__(self):
        return len(self.triples)

    def _check_entity(self, e):
        if not 0 <= e < self.n_entities:
            raise ContractError(f"entity id {e} out of range [0, {self.n_entities})")

    def _check_relation(self, r):
        if not 0 <= r < self.n_relations:
            raise ContractError(f"relation id {r} out of range [0, {self.n_relations})")

    def tails(self, head: int, relation: int) -> list[int]:
        self._check_entity(head)
        self._check_relation(relation)
        return sorted(self._fwd.get((head, relation), ()))

    def heads(self, tail: int, relation: int) -> list[int]:
        self._check_entity(tail)
        self._check_relation(relation)
        return sorted(self._bwd.get((tail, relation), ()))

    def tail_set(self, head: int, relation: int) -> frozenset:
        """Unchecked fast path used by the solver and the reasoner."""
        return self._fwd.get((head, relation), frozenset())

    def head_set(self, tail: int, relation: int) -> frozenset:
        return self._bwd.get((tail, relation), frozenset())

    def endpoints(self, relation: int) -> frozenset:
        self._check_relation(relation)
        return self._endpoints[relation]

    def has(self, h: int, r: int, t: int) -> bool:
        return t in self._fwd.get((h, r), ())

    def out_edges(self, head: int) -> list[tuple[int, int]]:
        return self._out.get(head, [])

    def relations_between(self, h: int, t: int) -> list[int]:
        return [r for r, tt in self.out_edges(h) if tt == t]

    def non_isolated(self) -> tuple[int, ...]:
        """Entities with at least one incident triple, ascending."""
        return self._heads


@dataclass
class KgPair:
    observed: KnowledgeGraph
    full: KnowledgeGraph
    entity_labels: list[str] = field(default_factory=list)
    relation_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.observed.triples <= self.full.triples:
            raise ContractError("observed triples must be a subset of full triples")


def _read_triples(path, ent_ids, rel_ids):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 3 or not all(parts):
                raise SchemaError("expected 3 tab-separated tokens (head, relation, tail)", path, lineno)
            h, r, t = parts
            for tok in (h, t):
                if tok not in ent_ids:
                    ent_ids[tok] = len(ent_ids)
            if r not in rel_ids:
                rel_ids[r] = len(rel_ids)
            rows.append((ent_ids[h], rel_ids[r], ent_ids[t]))
    return rows


def _with_inverses(rows):
    out = set()
    for h, r, t in rows:
        out.add((h, 2 * r, t))
        out.add((t, 2 * r + 1, h))
    return out


def load_kg(paths: dict[str, Sequence[str | os.PathLike]] | Sequence[tuple[str, str | os.PathLike]],
            observed_splits: Sequence[str] = ("train",)) -> KgPair:
    """Load triple files tagged by split name.

    ``paths`` maps split name to one or more files (or is a list of
    ``(split, path)`` pairs). Files are read in the order given, which fixes
    the dense id assignment. Splits listed in ``observed_splits`` form the
    observed graph; every split goes into the full graph.
    """
    if isinstance(paths, dict):
        items = [(split, p) for split, ps in paths.items()
                 for p in ([ps] if isinstance(ps, (str, os.PathLike)) else ps)]
    else:
        items = list(paths)
    ent_ids: dict[str, int] = {}
    rel_ids: dict[str, int] = {}
    observed_rows, full_rows = [], []
    for split, path in items:
        if not Path(path).is_file():
            raise SchemaError("no such triple file", path)
        rows = _read_triples(path, ent_ids, rel_ids)
        full_rows.extend(rows)
        if split in observed_splits:
            observed_rows.extend(rows)
    n_ent, n_rel = len(ent_ids), 2 * len(rel_ids)
    rel_labels = []
    for label in rel_ids:
        rel_labels += [label, label + INVERSE_SUFFIX]
    return KgPair(
        observed=KnowledgeGraph(n_ent, n_rel, _with_inverses(observed_rows)),
        full=KnowledgeGraph(n_ent, n_rel, _with_inverses(full_rows)),
        entity_labels=list(ent_ids),
        relation_labels=rel_labels,
    )


def load_kg_dir(directory: str | os.PathLike) -> KgPair:
    """Load ``train.txt``, ``valid.txt`` and ``test.txt`` from a directory.

    Only ``train.txt`` is required; train is the observed graph.
    """
    d = Path(directory)
    if not d.is_dir():
        raise SchemaError("knowledge graph directory not found", d)
    paths = {s: [d / f"{s}.txt"] for s in SPLIT_FILES if (d / f"{s}.txt").is_file()}
    if "train" not in paths:
        raise SchemaError("missing train.txt", d)
    return load_kg(paths)


def write_id_maps(pair: KgPair, directory: str | os.PathLike) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "entity_id.tsv", "w", encoding="utf-8") as fh:
        for i, label in enumerate(pair.entity_labels):
            fh.write(f"{label}\t{i}\n")
    with open(d / "relation_id.tsv", "w", encoding="utf-8") as fh:
        for i, label in enumerate(pair.relation_labels):
            fh.write(f"{label}\t{i}\n")


def random_kg_pair(n_entities: int, n_relations: int, n_triples: int, rng: random.Random,
                   observed_fraction: float = 0.8) -> KgPair:
    """Random KG for tests and self-checks.

    ``n_relations`` counts raw relations; the graph holds twice as many ids.
    A random ``observed_fraction`` of the raw triples is observed.
    """
    raw = set()
    limit = n_entities * n_entities * n_relations
    n_triples = min(n_triples, limit)
    while len(raw) < n_triples:
        raw.add((rng.randrange(n_entities), rng.randrange(n_relations), rng.randrange(n_entities)))
    raw = sorted(raw)
    observed = [t for t in raw if rng.random() < observed_fraction]
    n_rel = 2 * n_relations
    return KgPair(
        observed=KnowledgeGraph(n_entities, n_rel, _with_inverses(observed)),
        full=KnowledgeGraph(n_entities, n_rel, _with_inverses(raw)),
        entity_labels=[f"e{i}" for i in range(n_entities)],
        relation_labels=[lab for i in range(n_relations) for lab in (f"r{i}", f"r{i}{INVERSE_SUFFIX}")],
    )


def write_kg_dir(pair: KgPair, directory: str | os.PathLike) -> None:
    """Write a pair back out as train/test files of raw (non-inverse) triples."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ents, rels = pair.entity_labels, pair.relation_labels
    train = sorted(t for t in pair.observed.triples if t[1] % 2 == 0)
    rest = sorted(t for t in pair.full.triples - pair.observed.triples if t[1] % 2 == 0)
    for name, rows in (("train", train), ("test", rest)):
        with open(d / f"{name}.txt", "w", encoding="utf-8") as fh:
            for h, r, t in rows:
                fh.write(f"{ents[h]}\t{rels[r]}\t{ents[t]}\n")

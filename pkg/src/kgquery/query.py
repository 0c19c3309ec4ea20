"""Abstract and grounded query graphs, topology classes, canonical forms and answer sets."""
from __future__ import annotations

import enum
import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .errors import ContractError, SchemaError, TopologyError


class NodeKind(str, enum.Enum):
    CONSTANT = "constant"
    EXISTENTIAL = "existential"
    FREE = "free"


KIND_CODE = {NodeKind.FREE: "f", NodeKind.EXISTENTIAL: "e", NodeKind.CONSTANT: "c"}
# canonical node order: free, existential, constant
KIND_RANK = {NodeKind.FREE: 0, NodeKind.EXISTENTIAL: 1, NodeKind.CONSTANT: 2}


class Topology(str, enum.Enum):
    SDAG = "SDAG"
    MULTI = "Multi"
    CYCLIC = "Cyclic"


class AbstractEdge(NamedTuple):
    u: int
    v: int
    neg: bool


@dataclass(frozen=True)
class AbstractQueryGraph:
    """Node kinds indexed by node id plus a multiset of undirected edges.

    Edges are stored with ``u <= v`` and kept sorted, so equal graphs compare
    equal. Direction is chosen only when a relation is grounded.
    """

    kinds: tuple[NodeKind, ...]
    edges: tuple[AbstractEdge, ...]

    @classmethod
    def build(cls, kinds: Sequence[NodeKind | str], edges: Iterable[tuple]) -> "AbstractQueryGraph":
        ks = tuple(NodeKind(k) for k in kinds)
        es = []
        for e in edges:
            u, v = e[0], e[1]
            neg = bool(e[2]) if len(e) > 2 else False
            if not (0 <= u < len(ks) and 0 <= v < len(ks)):
                raise ContractError(f"edge {e} references unknown node")
            if u == v:
                raise ContractError(f"self-loop on node {u}")
            es.append(AbstractEdge(min(u, v), max(u, v), neg))
        return cls(ks, tuple(sorted(es)))

    @property
    def n_nodes(self) -> int:
        return len(self.kinds)

    def nodes_of(self, kind: NodeKind) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k is kind]

    @property
    def free_vars(self) -> list[int]:
        return self.nodes_of(NodeKind.FREE)

    @property
    def n_free(self) -> int:
        return len(self.free_vars)

    @property
    def n_exist(self) -> int:
        return len(self.nodes_of(NodeKind.EXISTENTIAL))

    @property
    def n_const(self) -> int:
        return len(self.nodes_of(NodeKind.CONSTANT))

    @property
    def n_neg(self) -> int:
        return sum(e.neg for e in self.edges)

    def is_variable(self, i: int) -> bool:
        return self.kinds[i] is not NodeKind.CONSTANT

    def neighbors(self, i: int, positive_only: bool = False) -> list[int]:
        out = set()
        for u, v, neg in self.edges:
            if positive_only and neg:
                continue
            if u == i:
                out.add(v)
            elif v == i:
                out.add(u)
        return sorted(out)

    def adjacency(self, positive_only: bool = False) -> dict[int, set[int]]:
        adj = {i: set() for i in range(self.n_nodes)}
        for u, v, neg in self.edges:
            if positive_only and neg:
                continue
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def distances_from(self, src: int) -> dict[int, int]:
        adj = self.adjacency()
        dist = {src: 0}
        frontier = [src]
        while frontier:
            nxt = []
            for u in frontier:
                for w in sorted(adj[u]):
                    if w not in dist:
                        dist[w] = dist[u] + 1
                        nxt.append(w)
            frontier = nxt
        return dist

    def is_connected(self) -> bool:
        return self.n_nodes == 0 or len(self.distances_from(0)) == self.n_nodes

    def positive_part(self) -> "AbstractQueryGraph":
        return AbstractQueryGraph(self.kinds, tuple(e for e in self.edges if not e.neg))

    def skeleton(self) -> "AbstractQueryGraph":
        """Same graph with every edge positive."""
        return AbstractQueryGraph(self.kinds, tuple(sorted(AbstractEdge(u, v, False) for u, v, _ in self.edges)))

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": i, "kind": k.value} for i, k in enumerate(self.kinds)],
            "edges": [{"u": u, "v": v, "neg": neg} for u, v, neg in self.edges],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AbstractQueryGraph":
        try:
            nodes = sorted(obj["nodes"], key=lambda n: n["id"])
            if [n["id"] for n in nodes] != list(range(len(nodes))):
                raise SchemaError("node ids must be 0..n-1")
            kinds = [NodeKind(n["kind"]) for n in nodes]
            edges = []
            for e in obj["edges"]:
                if not isinstance(e["neg"], bool):
                    raise SchemaError("edge 'neg' must be a boolean")
                edges.append((int(e["u"]), int(e["v"]), e["neg"]))
            return cls.build(kinds, edges)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad abstract query graph: {exc!r}") from exc


def check_graph_invariants(g: AbstractQueryGraph) -> list[str]:
    """Return the list of violated structural invariants (empty when valid)."""
    problems = []
    if not g.is_connected():
        problems.append("not connected")
    if g.n_free < 1:
        problems.append("no free node")
    for u, v, _ in g.edges:
        if not g.is_variable(u) and not g.is_variable(v):
            problems.append(f"constant-constant edge {u}-{v}")
    for i in range(g.n_nodes):
        if g.is_variable(i) and not g.neighbors(i, positive_only=True):
            problems.append(f"variable {i} has no positive edge")
    return problems


def classify_topology(g: AbstractQueryGraph) -> Topology:
    pairs = Counter((u, v) for u, v, _ in g.edges)
    multi = any(c >= 2 for c in pairs.values())
    # a connected simple graph has a cycle iff it has at least as many edges as nodes;
    # count per component so disconnected inputs are still classified sensibly
    parent = list(range(g.n_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    cyclic = False
    for u, v in pairs:
        ru, rv = find(u), find(v)
        if ru == rv:
            cyclic = True
        else:
            parent[ru] = rv
    if multi and cyclic:
        raise TopologyError("graph is both a multigraph and cyclic")
    if multi:
        return Topology.MULTI
    if cyclic:
        return Topology.CYCLIC
    return Topology.SDAG


def _edge_code(edges, perm):
    return tuple(sorted((min(perm[u], perm[v]), max(perm[u], perm[v]), neg) for u, v, neg in edges))


def canonical_form(g: AbstractQueryGraph, polarity: bool = True) -> bytes:
    """Canonical byte string under kind-preserving relabelling.

    Candidate relabellings only permute nodes that share a kind and a degree
    signature, then the lexicographically smallest edge list wins. With
    ``polarity=False`` negative edges are treated as positive.
    """
    edges = g.edges if polarity else g.skeleton().edges
    pos_deg = Counter()
    neg_deg = Counter()
    for u, v, neg in edges:
        (neg_deg if neg else pos_deg)[u] += 1
        (neg_deg if neg else pos_deg)[v] += 1
    sig = {i: (KIND_RANK[g.kinds[i]], -pos_deg[i], -neg_deg[i]) for i in range(g.n_nodes)}
    classes = defaultdict(list)
    for i in range(g.n_nodes):
        classes[sig[i]].append(i)
    keys = sorted(classes)
    best = None
    for choice in itertools.product(*(itertools.permutations(classes[k]) for k in keys)):
        order = [i for block in choice for i in block]
        perm = {old: new for new, old in enumerate(order)}
        code = _edge_code(edges, perm)
        if best is None or code < best:
            best = code
    kinds = "".join(KIND_CODE[g.kinds[i]] for k in keys for i in classes[k])
    body = ";".join(f"{u}-{v}{'~' if neg else ''}" for u, v, neg in (best or ()))
    return f"{kinds}|{body}".encode("ascii")


def canonical_graph(g: AbstractQueryGraph, polarity: bool = True) -> AbstractQueryGraph:
    """The graph relabelled into its canonical node order."""
    kinds_code, body = canonical_form(g, polarity).decode("ascii").split("|")
    inv = {v: k for k, v in KIND_CODE.items()}
    kinds = [inv[c] for c in kinds_code]
    edges = []
    if body:
        for tok in body.split(";"):
            neg = tok.endswith("~")
            u, v = tok.rstrip("~").split("-")
            edges.append((int(u), int(v), neg))
    return AbstractQueryGraph.build(kinds, edges)


class Term(NamedTuple):
    """Either a constant entity (``is_const``) or a variable node id."""

    is_const: bool
    value: int

    @classmethod
    def const(cls, entity: int) -> "Term":
        return cls(True, entity)

    @classmethod
    def var(cls, node: int) -> "Term":
        return cls(False, node)

    def to_json(self) -> dict:
        return {"const": self.value} if self.is_const else {"var": self.value}

    @classmethod
    def from_json(cls, obj) -> "Term":
        if not isinstance(obj, dict) or len(obj) != 1:
            raise SchemaError(f"bad term {obj!r}")
        (key, val), = obj.items()
        if key not in ("const", "var") or not isinstance(val, int) or val < 0:
            raise SchemaError(f"bad term {obj!r}")
        return cls(key == "const", val)


class GroundedEdge(NamedTuple):
    h: Term
    r: int
    t: Term
    neg: bool


@dataclass(frozen=True)
class GroundedQueryGraph:
    edges: tuple[GroundedEdge, ...]
    free_vars: tuple[int, ...]

    def __post_init__(self):
        if list(self.free_vars) != sorted(set(self.free_vars)):
            raise ContractError("free_vars must be strictly ascending")
        for h, _, t, _ in self.edges:
            if h == t and not h.is_const:
                raise ContractError(f"self-loop on variable {h.value}")
        missing = set(self.free_vars) - set(self.variables)
        if missing:
            raise ContractError(f"free variables {sorted(missing)} do not appear in any edge")

    @property
    def variables(self) -> list[int]:
        out = set()
        for h, _, t, _ in self.edges:
            for term in (h, t):
                if not term.is_const:
                    out.add(term.value)
        return sorted(out)

    @property
    def existential_vars(self) -> list[int]:
        free = set(self.free_vars)
        return [v for v in self.variables if v not in free]

    @property
    def k(self) -> int:
        return len(self.free_vars)

    def check_ranges(self, n_entities: int, n_relations: int) -> None:
        for h, r, t, _ in self.edges:
            if not 0 <= r < n_relations:
                raise ContractError(f"relation id {r} out of range")
            for term in (h, t):
                if term.is_const and not 0 <= term.value < n_entities:
                    raise ContractError(f"entity id {term.value} out of range")

    def abstract(self) -> tuple[AbstractQueryGraph, dict[int, int]]:
        """Abstract shape plus the entity bound to each constant node.

        Variable nodes keep their ids. Every constant occurrence becomes its
        own node after the variables; constants only ever appear as leaves
        in enumerated types, so this recovers the original shape.
        """
        variables = self.variables
        n = (max(variables) + 1) if variables else 0
        kinds = [NodeKind.EXISTENTIAL] * n
        for v in self.free_vars:
            kinds[v] = NodeKind.FREE
        const_entity = {}
        edges = []
        for h, _, t, neg in self.edges:
            ends = []
            for term in (h, t):
                if term.is_const:
                    const_entity[len(kinds)] = term.value
                    ends.append(len(kinds))
                    kinds.append(NodeKind.CONSTANT)
                else:
                    ends.append(term.value)
            edges.append((ends[0], ends[1], neg))
        return AbstractQueryGraph.build(kinds, edges), const_entity

    def without_edge(self, index: int) -> "GroundedQueryGraph":
        return GroundedQueryGraph(self.edges[:index] + self.edges[index + 1:], self.free_vars)

    def to_json(self) -> dict:
        return {
            "edges": [{"h": h.to_json(), "r": r, "t": t.to_json(), "neg": neg} for h, r, t, neg in self.edges],
            "free_vars": list(self.free_vars),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundedQueryGraph":
        try:
            edges = []
            for e in obj["edges"]:
                if not isinstance(e["r"], int) or e["r"] < 0 or not isinstance(e["neg"], bool):
                    raise SchemaError(f"bad edge {e!r}")
                edges.append(GroundedEdge(Term.from_json(e["h"]), e["r"], Term.from_json(e["t"]), e["neg"]))
            free = obj["free_vars"]
            if not isinstance(free, list) or not all(isinstance(v, int) for v in free):
                raise SchemaError("free_vars must be a list of ints")
            return cls(tuple(edges), tuple(free))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad grounded query: {exc!r}") from exc
        except ContractError as exc:
            raise SchemaError(str(exc)) from exc


AnswerSet = frozenset  # frozenset of k-tuples of entity ids


def answer_set(tuples: Iterable[Sequence[int]], k: int | None = None) -> frozenset:
    out = frozenset(tuple(t) for t in tuples)
    if k is not None and any(len(t) != k for t in out):
        raise ContractError(f"answer tuples must all have arity {k}")
    return out


def _arity(a: frozenset) -> int | None:
    for t in a:
        return len(t)
    return None


def union_answers(parts: Sequence[frozenset], k: int | None = None) -> frozenset:
    """Union of per-disjunct answer sets; all parts must share one arity."""
    arities = {len(t) for p in parts for t in p}
    if k is not None:
        arities.add(k)
    if len(arities) > 1:
        raise ContractError(f"arity mismatch in union: {sorted(arities)}")
    return frozenset().union(*parts)


def free_var_projection(a: frozenset, i: int, k: int | None = None) -> frozenset:
    k = k if k is not None else _arity(a)
    if k is not None and not 0 <= i < k:
        raise ContractError(f"projection index {i} out of range for arity {k}")
    if k is None and i < 0:
        raise ContractError("negative projection index")
    return frozenset(t[i] for t in a)

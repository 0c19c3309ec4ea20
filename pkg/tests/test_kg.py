import random

import pytest
from hypothesis import given, settings, strategies as st

from kgquery.errors import ContractError, SchemaError
from kgquery.kg import KgPair, KnowledgeGraph, inverse, load_kg, load_kg_dir, random_kg_pair, write_id_maps, write_kg_dir


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_inverse_pairs():
    assert [inverse(r) for r in range(6)] == [1, 0, 3, 2, 5, 4]


def test_load_materialises_inverses_and_dedups(tmp_path):
    p = _write(tmp_path / "train.txt", "a\tr\tb\na\tr\tb\nb\ts\tc\n")
    kgs = load_kg({"train": p})
    kg = kgs.full
    assert (kg.n_entities, kg.n_relations) == (3, 4)
    assert len(kg) == 4  # duplicate line collapses; each triple gets its inverse
    assert kg.tails(0, 0) == [1] and kg.tails(1, 1) == [0]
    assert kgs.entity_labels == ["a", "b", "c"]
    assert kgs.relation_labels == ["r", "r^-1", "s", "s^-1"]


def test_observed_is_train_only(tmp_path):
    train = _write(tmp_path / "train.txt", "a\tr\tb\n")
    test = _write(tmp_path / "test.txt", "b\tr\tc\n")
    kgs = load_kg({"train": train, "test": test})
    assert kgs.observed.triples < kgs.full.triples
    assert kgs.observed.n_entities == kgs.full.n_entities == 3


def test_load_dir_requires_train(tmp_path):
    _write(tmp_path / "test.txt", "a\tr\tb\n")
    with pytest.raises(SchemaError):
        load_kg_dir(tmp_path)
    with pytest.raises(SchemaError):
        load_kg_dir(tmp_path / "missing")


def test_empty_file_set():
    kgs = load_kg({})
    assert kgs.full.n_entities == 0 and len(kgs.full) == 0


def test_parse_error_reports_line(tmp_path):
    p = _write(tmp_path / "train.txt", "a\tr\tb\n\na\tr\n")
    with pytest.raises(SchemaError) as exc:
        load_kg({"train": p})
    assert exc.value.line == 3
    assert ":3:" in str(exc.value)


def test_whitespace_separated_lines(tmp_path):
    p = _write(tmp_path / "train.txt", "a r b\n")
    assert len(load_kg({"train": p}).full) == 2


def test_out_of_range_ids_raise():
    kg = KnowledgeGraph(3, 2, [(0, 0, 1), (1, 1, 0)])
    with pytest.raises(ContractError):
        kg.tails(3, 0)
    with pytest.raises(ContractError):
        kg.heads(0, 2)
    with pytest.raises(ContractError):
        kg.endpoints(-1)
    with pytest.raises(ContractError):
        KnowledgeGraph(2, 2, [(0, 0, 5)])


def test_observed_must_be_subset():
    a = KnowledgeGraph(2, 2, [(0, 0, 1), (1, 1, 0)])
    b = KnowledgeGraph(2, 2, [])
    with pytest.raises(ContractError):
        KgPair(observed=a, full=b)


def test_id_maps_round_trip(tmp_path):
    kgs = random_kg_pair(6, 2, 10, random.Random(0))
    write_id_maps(kgs, tmp_path)
    ents = (tmp_path / "entity_id.tsv").read_text().splitlines()
    rels = (tmp_path / "relation_id.tsv").read_text().splitlines()
    assert ents[0] == "e0\t0" and len(ents) == 6
    assert rels[:2] == ["r0\t0", "r0^-1\t1"]


def test_write_and_reload_dir(tmp_path):
    kgs = random_kg_pair(12, 3, 40, random.Random(1))
    write_kg_dir(kgs, tmp_path)
    again = load_kg_dir(tmp_path)
    relabel = {lab: i for i, lab in enumerate(again.entity_labels)}
    rrelabel = {lab: i for i, lab in enumerate(again.relation_labels)}

    def mapped(kg, src):
        return {(relabel[src.entity_labels[h]], rrelabel[src.relation_labels[r]], relabel[src.entity_labels[t]])
                for h, r, t in kg.triples}

    assert mapped(kgs.full, kgs) == again.full.triples
    assert mapped(kgs.observed, kgs) == again.observed.triples


triples = st.lists(st.tuples(st.integers(0, 7), st.integers(0, 2), st.integers(0, 7)), max_size=40)


@settings(max_examples=60, deadline=None)
@given(triples)
def test_indexes_match_linear_scan(raw):
    rows = {(h, 2 * r, t) for h, r, t in raw} | {(t, 2 * r + 1, h) for h, r, t in raw}
    kg = KnowledgeGraph(8, 6, rows)
    for r in range(6):
        assert kg.endpoints(r) == {x for h, rr, t in rows if rr == r for x in (h, t)}
        for e in range(8):
            assert kg.tails(e, r) == sorted(t for h, rr, t in rows if h == e and rr == r)
            assert kg.heads(e, r) == sorted(h for h, rr, t in rows if t == e and rr == r)
            # inverse symmetry
            assert kg.tails(e, r) == kg.heads(e, inverse(r))
    assert kg.non_isolated() == tuple(sorted({h for h, _, _ in rows}))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.integers(1, 4), st.integers(0, 60), st.integers(0, 10 ** 6))
def test_random_pair_invariants(n, r, m, seed):
    kgs = random_kg_pair(n, r, m, random.Random(seed))
    assert kgs.observed.triples <= kgs.full.triples
    assert len(kgs.full) == 2 * min(m, n * n * r)
    for h, rel, t in kgs.full.triples:
        assert kgs.full.has(t, inverse(rel), h)

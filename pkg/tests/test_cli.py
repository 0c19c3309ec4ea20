import json
import random

import pytest

from kgquery.cli import PipelineConfig, main
from kgquery.enumerate import EnumBudget
from kgquery.errors import SchemaError
from kgquery.jsonl import read_jsonl
from kgquery.kg import random_kg_pair, write_kg_dir

SMALL = ["--max-free", "1", "--max-exist", "1", "--max-const", "2", "--max-nodes", "4", "--max-edges", "4"]


@pytest.fixture
def kg_dir(tmp_path):
    d = tmp_path / "kg"
    write_kg_dir(random_kg_pair(25, 3, 120, random.Random(5)), d)
    return d


def test_pipeline_end_to_end(tmp_path, kg_dir, capsys):
    types = tmp_path / "types.jsonl"
    assert main(["enumerate", *SMALL, "-o", str(types)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("k=1") and "total" in out
    data = tmp_path / "data.jsonl"
    assert main(["ground", "--kg", str(kg_dir), "--types", str(types), "--num-pos", "3", "--num-neg", "2",
                 "-o", str(data)]) == 0
    rows = [r for _, r in read_jsonl(data)]
    assert rows and all(r["hard_answers"] for r in rows)
    solved = tmp_path / "solved.jsonl"
    assert main(["solve", "--kg", str(kg_dir), "--queries", str(data), "-o", str(solved)]) == 0
    for (_, a), (_, b) in zip(read_jsonl(data), read_jsonl(solved)):
        assert a["answers"] == b["answers"]
    ranks = tmp_path / "rankings.jsonl"
    assert main(["infer", "--kg", str(kg_dir), "--queries", str(data), "-o", str(ranks)]) == 0
    report = tmp_path / "report.json"
    assert main(["evaluate", "--rankings", str(ranks), "--data", str(data), "-o", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["families"] == ["marginal", "multiply", "joint"] and rep["cells"]
    assert (tmp_path / "report.csv").read_text().startswith("group,k,c,e,topology")
    assert list(tmp_path.glob("report_marginal_k1.png"))
    assert main(["stats", str(types), "--figure", str(tmp_path / "t.png")]) == 0
    assert (tmp_path / "t.png").stat().st_size > 0


def test_verify_oracle(capsys):
    assert main(["verify", "--oracle", "--instances", "60", "--entities", "12", "--relations", "2"]) == 0
    assert "oracle agreement: 60/60" in capsys.readouterr().out


def test_exit_codes(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main(["stats", str(tmp_path / "missing.jsonl")]) == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"nodes": [{"id": 0, "kind": "free"}], "edges": []}\nnot json\n')
    assert main(["stats", str(bad)]) == 2
    assert ":2:" in capsys.readouterr().err
    assert main(["ground", "--kg", str(tmp_path / "nokg"), "--types", str(bad), "-o", str(tmp_path / "x")]) == 2


def test_config_file_supplies_flags(tmp_path, kg_dir):
    types = tmp_path / "types.jsonl"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_free": 1, "max_exist": 0, "max_const": 1, "max_nodes": 2,
                               "max_edges": 1, "max_neg_edges": 0, "output": str(types)}))
    assert main(["--config", str(cfg), "enumerate"]) == 0
    assert len(list(read_jsonl(types))) == 1
    cfg.write_text(json.dumps({"no_such_flag": 1}))
    assert main(["--config", str(cfg), "enumerate", "-o", str(types)]) == 2


def test_pipeline_config_round_trip(tmp_path):
    cfg = PipelineConfig(kg="data/kg", budget=EnumBudget(max_free=1), hits=(1, 5), seed=9)
    path = tmp_path / "p.json"
    cfg.save(path)
    again = PipelineConfig.load(path)
    assert again.to_flags() == cfg.to_flags()
    assert again.sampling.seed == 9 and again.budget.max_free == 1
    with pytest.raises(SchemaError):
        PipelineConfig.from_flags({"bogus": 1})


def test_invariant_breach_exits_3(monkeypatch, capsys):
    import kgquery.selfcheck as selfcheck
    monkeypatch.setattr(selfcheck, "oracle_suite",
                        lambda *a, **k: selfcheck.OracleReport(instances=1, mismatches=1))
    assert main(["verify", "--oracle"]) == 3
    monkeypatch.setattr(selfcheck, "oracle_suite", lambda *a, **k: 1 / 0)
    assert main(["verify", "--oracle"]) == 3
    assert "ZeroDivisionError" in capsys.readouterr().err

"""Command-line pipeline: enumerate, ground, solve, infer, evaluate, verify, stats.

Exit codes: 0 success, 1 runtime failure, 2 bad input (missing file, schema
violation, bad arguments), 3 internal invariant breach.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .enumerate import DEDUP_MODES, NEGATION_RULES, EnumBudget, count_table, enumerate_abstract
from .errors import ContractError, InvariantError, KgQueryError, SchemaError
from .ground import SampleConfig, default_workers, sample_dataset
from .jsonl import read_jsonl, read_samples, read_types, type_record, write_jsonl
from .kg import load_kg_dir, write_id_maps
from .metrics import DEFAULT_HITS, RankContext, RankEntry, aggregate, query_metrics, rank_entries, sample_cell
from .query import free_var_projection
from .reasoner import CrispOps, run_reasoner
from .solver import solve_efo

log = logging.getLogger("kgquery")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3
METRIC_FAMILIES = ("marginal", "multiply", "joint")
REASONERS = {"crisp": CrispOps}


@dataclass
class PipelineConfig:
    """Everything a full pipeline run depends on; stored as flat JSON keyed like the CLI flags."""

    kg: str | None = None
    budget: EnumBudget = field(default_factory=EnumBudget)
    sampling: SampleConfig = field(default_factory=SampleConfig)
    metrics: tuple[str, ...] = METRIC_FAMILIES
    hits: tuple[int, ...] = DEFAULT_HITS
    output_dir: str = "."
    seed: int = 0

    def to_flags(self) -> dict:
        out = {"kg": self.kg, "output_dir": self.output_dir, "seed": self.seed,
               "metrics": ",".join(self.metrics), "hits": ",".join(map(str, self.hits))}
        out.update(asdict(self.budget))
        s = self.sampling
        out.update({"num_pos": s.num_positive_type, "num_neg": s.num_negative_type,
                    "bound": s.answer_bound_per_free, "max_retries": s.max_retries})
        return out

    @classmethod
    def from_flags(cls, flags: dict) -> "PipelineConfig":
        known = {f.name for f in fields(EnumBudget)} | {
            "kg", "output_dir", "seed", "metrics", "hits", "num_pos", "num_neg", "bound", "max_retries"}
        unknown = set(flags) - known
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        budget = EnumBudget(**{f.name: flags[f.name] for f in fields(EnumBudget) if f.name in flags})
        seed = flags.get("seed", 0)
        sampling = SampleConfig(num_positive_type=flags.get("num_pos", 1000),
                                num_negative_type=flags.get("num_neg", 500),
                                answer_bound_per_free=flags.get("bound", 100),
                                max_retries=flags.get("max_retries", 128), seed=seed)
        return cls(kg=flags.get("kg"), budget=budget, sampling=sampling,
                   metrics=_csv_list(flags.get("metrics", ",".join(METRIC_FAMILIES))),
                   hits=tuple(int(h) for h in _csv_list(flags.get("hits", "1,3,10"))),
                   output_dir=flags.get("output_dir", "."), seed=seed)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_flags(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_flags(_read_config(path))


def _csv_list(value) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


def _read_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise SchemaError("config file not found", p)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON config: {exc.msg}", p, exc.lineno) from exc
    if not isinstance(data, dict):
        raise SchemaError("config must be a JSON object", p)
    return {k.replace("-", "_"): v for k, v in data.items()}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kgquery", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="JSON file of flag defaults (keys as long flag names)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("enumerate", help="enumerate abstract query graphs")
    b = EnumBudget()
    for f in fields(EnumBudget):
        e.add_argument("--" + f.name.replace("_", "-"), type=int, default=getattr(b, f.name))
    e.add_argument("--negation-rule", choices=NEGATION_RULES, default="anchored",
                   help="which negated graphs count as bounded (default: anchored)")
    e.add_argument("--dedup", choices=DEDUP_MODES, default="skeleton",
                   help="merge negated variants per positive skeleton, or keep every polarity class")
    e.add_argument("-o", "--output", required=True)
    e.add_argument("--figure", help="also render the count tables to this image")
    e.set_defaults(func=cmd_enumerate)

    g = sub.add_parser("ground", help="sample grounded queries with answers")
    g.add_argument("--kg", required=True, help="directory with train.txt [valid.txt test.txt]")
    g.add_argument("--types", required=True)
    g.add_argument("--num-pos", type=int, default=1000)
    g.add_argument("--num-neg", type=int, default=500)
    g.add_argument("--bound", type=int, default=100, help="answer bound per free variable")
    g.add_argument("--max-retries", type=int, default=128)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=None, help="default: $KGQUERY_WORKERS or 1")
    g.add_argument("--id-maps", help="write entity_id.tsv and relation_id.tsv to this directory")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_ground)

    s = sub.add_parser("solve", help="exact answers of grounded queries")
    s.add_argument("--kg", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--which", choices=("full", "observed"), default="full")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_solve)

    i = sub.add_parser("infer", help="rank entities with a reasoner over the observed graph")
    i.add_argument("--kg", required=True)
    i.add_argument("--queries", required=True)
    i.add_argument("--reasoner", choices=sorted(REASONERS), default="crisp")
    i.add_argument("-o", "--output", required=True)
    i.set_defaults(func=cmd_infer)

    v = sub.add_parser("evaluate", help="compute metrics and write report, CSV table and figures")
    v.add_argument("--rankings", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--metrics", default="marginal,multiply,joint")
    v.add_argument("--hits", default="1,3,10")
    v.add_argument("--no-figures", action="store_true")
    v.add_argument("-o", "--output", required=True, help="report JSON; CSV and PNGs go alongside")
    v.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("verify", help="cross-check the solver against the brute-force oracle")
    o.add_argument("--oracle", action="store_true", required=True)
    o.add_argument("--instances", type=int, default=1000)
    o.add_argument("--entities", type=int, default=40)
    o.add_argument("--relations", type=int, default=5)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--types", help="types file (default: enumerate with the default budget)")
    o.set_defaults(func=cmd_verify)

    t = sub.add_parser("stats", help="count matrices of a types file")
    t.add_argument("types")
    t.add_argument("--figure", help="also render the matrices to this image")
    t.set_defaults(func=cmd_stats)
    return p


def cmd_enumerate(args) -> int:
    budget = EnumBudget(**{f.name: getattr(args, f.name) for f in fields(EnumBudget)})
    graphs = enumerate_abstract(budget, args.negation_rule, args.dedup)
    write_jsonl(args.output, (type_record(f"type_{i:04d}", g) for i, g in enumerate(graphs)))
    table = count_table(graphs)
    from .report import format_count_tables, plot_count_tables
    sys.stdout.write(format_count_tables(table))
    if args.figure:
        plot_count_tables(table, args.figure)
    return EXIT_OK


def cmd_stats(args) -> int:
    types = read_types(args.types)
    from .report import format_count_tables, plot_count_tables
    table = count_table(g for _, g in types)
    sys.stdout.write(format_count_tables(table))
    if args.figure:
        plot_count_tables(table, args.figure)
    return EXIT_OK


def cmd_ground(args) -> int:
    kgs = load_kg_dir(args.kg)
    types = read_types(args.types)
    cfg = SampleConfig(num_positive_type=args.num_pos, num_negative_type=args.num_neg,
                       answer_bound_per_free=args.bound, seed=args.seed, max_retries=args.max_retries,
                       workers=args.workers or default_workers())
    samples, shortfall = sample_dataset(types, kgs, cfg)
    write_jsonl(args.output, (s.to_json() for s in samples))
    if args.id_maps:
        write_id_maps(kgs, args.id_maps)
    print(f"wrote {len(samples)} samples for {len(types)} types; {len(shortfall)} types short of target",
          file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    kgs = load_kg_dir(args.kg)
    kg = kgs.full if args.which == "full" else kgs.observed
    rows = []
    for _, s in read_jsonl(args.queries, _query_record):
        fid, idx, q = s
        ans = solve_efo(q, kg)
        rows.append({"formula_id": fid, "index": idx, "answers": sorted(list(t) for t in ans)})
    write_jsonl(args.output, rows)
    return EXIT_OK


def _query_record(obj):
    from .query import GroundedQueryGraph
    q = GroundedQueryGraph.from_json(obj)
    return obj.get("formula_id", ""), obj.get("index", 0), q


def cmd_infer(args) -> int:
    kgs = load_kg_dir(args.kg)
    ops = REASONERS[args.reasoner](kgs.observed)
    samples = read_samples(args.queries)
    rows = []
    for s in samples:
        s.query.check_ranges(kgs.observed.n_entities, kgs.observed.n_relations)
        states = run_reasoner(s.query, ops)
        entries = []
        for i, f in enumerate(s.query.free_vars):
            recorded = free_var_projection(s.answers, i, s.k) | free_var_projection(s.easy_answers, i, s.k)
            ranked = rank_entries(ops.scores(states[f]), recorded)
            entries.append([[e, *ranked[e]] for e in sorted(ranked)])
        rows.append({"formula_id": s.formula_id, "index": s.index, "free_vars": list(s.query.free_vars),
                     "n_entities": ops.n_entities, "entries": entries})
    write_jsonl(args.output, rows)
    return EXIT_OK


def _ranking_record(obj):
    entries = []
    for per_var in obj["entries"]:
        table = {}
        for row in per_var:
            e, pos, score, better, tied = row
            table[int(e)] = RankEntry(int(pos), float(score), int(better), int(tied))
        entries.append(table)
    return (obj["formula_id"], obj["index"]), entries


def cmd_evaluate(args) -> int:
    families = _csv_list(args.metrics)
    for fam in families:
        if fam not in METRIC_FAMILIES:
            raise SchemaError(f"unknown metric family {fam!r}")
    try:
        hits = tuple(int(h) for h in _csv_list(args.hits))
    except ValueError as exc:
        raise SchemaError(f"bad --hits value: {args.hits}") from exc
    rankings = dict(r for _, r in read_jsonl(args.rankings, _ranking_record))
    per_query = []
    for s in read_samples(args.data):
        key = (s.formula_id, s.index)
        if key not in rankings:
            raise SchemaError(f"no ranking for query {key}", args.rankings)
        entries = rankings[key]
        if len(entries) != s.k:
            raise SchemaError(f"ranking arity mismatch for query {key}", args.rankings)
        ctx = RankContext(entries, s.answers, s.easy_answers)
        per_query.append((s.formula_id, sample_cell(s), query_metrics(ctx, families, hits)))
    report = aggregate(per_query, families)
    report["hits"] = list(hits)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    from .report import plot_metric_report, write_metric_csv
    write_metric_csv(report, out.with_suffix(".csv"))
    if not args.no_figures:
        plot_metric_report(report, out.parent, out.stem)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .selfcheck import oracle_suite
    types = [g for _, g in read_types(args.types)] if args.types else None
    r = oracle_suite(args.instances, args.entities, args.relations, args.seed, types)
    agree = r.instances - r.mismatches
    print(f"oracle agreement: {agree}/{r.instances} ({100.0 * agree / max(1, r.instances):.1f}%), "
          f"{r.nonempty} with nonempty answers")
    print(f"csp projection identity: {r.csp_checked - r.csp_mismatches}/{r.csp_checked}")
    for f in r.failures:
        print(json.dumps(f), file=sys.stderr)
    if not r.ok:
        raise InvariantError("solver disagrees with the oracle")
    return EXIT_OK


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    flags = _read_config(known.config)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    dests = set()
    for sp in sub_action.choices.values():
        dests |= {a.dest for a in sp._actions}
    unknown = set(flags) - dests
    if unknown:
        raise SchemaError(f"unknown config keys: {sorted(unknown)}", known.config)
    for sp in sub_action.choices.values():
        own = {a.dest for a in sp._actions}
        defaults = {k: v for k, v in flags.items() if k in own}
        sp.set_defaults(**defaults)
        # a flag supplied by the config no longer has to be given on the command line
        for a in sp._actions:
            if a.dest in defaults:
                a.required = False


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:   # usage errors, --help and --version
            return exc.code if isinstance(exc.code, int) else EXIT_INPUT
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (SchemaError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except KgQueryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception:  # anything unexpected is a bug
        traceback.print_exc()
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

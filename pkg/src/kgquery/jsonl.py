"""JSONL readers and writers with per-line schema validation."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Callable, Iterable, Iterator, TypeVar

from .errors import KgQueryError, SchemaError
from .ground import GroundedSample
from .query import AbstractQueryGraph

T = TypeVar("T")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_jsonl(path: str | os.PathLike, rows: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(dumps(row) + "\n")
            n += 1
    return n


def read_jsonl(path: str | os.PathLike, parse: Callable[[dict], T] = lambda d: d) -> Iterator[tuple[int, T]]:
    """Yield ``(line number, parsed record)``; blank lines are skipped."""
    p = Path(path)
    if not p.is_file():
        raise SchemaError("no such file", p)
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", p, lineno) from exc
            if not isinstance(obj, dict):
                raise SchemaError("record must be a JSON object", p, lineno)
            try:
                yield lineno, parse(obj)
            except SchemaError as exc:
                raise SchemaError(str(exc), p, lineno) from exc
            except (KgQueryError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"invalid record: {exc}", p, lineno) from exc


def type_record(fid: str, g: AbstractQueryGraph) -> dict:
    return {"formula_id": fid, **g.to_json()}


def read_types(path) -> list[tuple[str, AbstractQueryGraph]]:
    out = []
    for lineno, obj in read_jsonl(path):
        try:
            g = AbstractQueryGraph.from_json(obj)
        except SchemaError as exc:
            raise SchemaError(str(exc), path, lineno) from exc
        fid = obj.get("formula_id", f"type_{len(out):04d}")
        if not isinstance(fid, str):
            raise SchemaError("formula_id must be a string", path, lineno)
        out.append((fid, g))
    return out


def read_samples(path) -> list[GroundedSample]:
    return [s for _, s in read_jsonl(path, GroundedSample.from_json)]

"""Corpus manifests: newline-delimited JSON records and split statistics.

A manifest line carries exactly these fields::

    id, problem, image_path, dsl, givens, query_marker, answer,
    schema, difficulty, split

``schema`` is one of ``proportional_distribution``, ``rate_percentage``,
``change_revert``, ``difference_analysis``, ``sum_split``; ``difficulty``
is ``easy``/``medium``/``hard``; ``split`` is ``train``/``test``.  DSL
text is parsed and macro-expanded eagerly so malformed records surface at
load time, each with its line number.  Loading succeeds partially: bad
lines become :class:`IngestError` values, and only a manifest with zero
good records is fatal.

Statistics bucket instances per split by schema, by difficulty, and by
operation length, where the operation length of an instance is the number
of statements after macro expansion, bucketed as <=3, 4, 5, 6, 7, >=8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .dsl import ExpansionError, ParseError, Program, expand_macros, parse
from .verify import Difficulty, ProblemMeta, Schema

__all__ = [
    "CorpusStats",
    "IngestError",
    "Instance",
    "LoadResult",
    "OPLEN_BUCKETS",
    "Split",
    "load_manifest",
    "operation_length",
    "oplen_bucket",
    "save_manifest",
    "stats",
    "stats_json",
    "stats_table",
]

OPLEN_BUCKETS = ("<=3", "4", "5", "6", "7", ">=8")

_SCHEMA_TITLES = {
    Schema.PROPORTIONAL_DISTRIBUTION: "Proportional Distribution",
    Schema.RATE_PERCENTAGE: "Rate & Percentage",
    Schema.CHANGE_REVERT: "Change & Revert",
    Schema.DIFFERENCE_ANALYSIS: "Difference Analysis",
    Schema.SUM_SPLIT: "Sum & Split",
}


class Split(Enum):
    TRAIN = "train"
    TEST = "test"


class IngestError(Exception):
    """A manifest line that could not be ingested (or a fully empty load)."""

    def __init__(self, line: int | None, message: str):
        location = "manifest" if line is None else f"line {line}"
        super().__init__(f"{location}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class Instance:
    id: str
    problem: str
    image_path: str | None
    dsl: str
    meta: ProblemMeta
    split: Split
    program: Program = field(compare=False, repr=False, default=None)  # type: ignore[assignment]


@dataclass
class LoadResult:
    instances: list[Instance]
    errors: list[IngestError]


def _require(record: dict, key: str, kinds: tuple[type, ...], line: int):
    if key not in record:
        raise IngestError(line, f"missing field {key!r}")
    value = record[key]
    if not isinstance(value, kinds):
        names = " or ".join(k.__name__ for k in kinds)
        raise IngestError(line, f"field {key!r} must be {names}")
    return value


def _instance_from_record(record: dict, line: int) -> Instance:
    if not isinstance(record, dict):
        raise IngestError(line, "record is not an object")
    instance_id = _require(record, "id", (str,), line)
    problem = _require(record, "problem", (str,), line)
    dsl_text = _require(record, "dsl", (str,), line)

    image_path = record.get("image_path")
    if image_path is not None and not isinstance(image_path, str):
        raise IngestError(line, "field 'image_path' must be str or null")

    givens_raw = record.get("givens", [])
    if not isinstance(givens_raw, list) or not all(isinstance(g, str) for g in givens_raw):
        raise IngestError(line, "field 'givens' must be a list of str")

    query_marker = record.get("query_marker")
    if query_marker is not None and not isinstance(query_marker, str):
        raise IngestError(line, "field 'query_marker' must be str or null")

    answer = record.get("answer")
    if answer is not None and not isinstance(answer, (int, float)):
        raise IngestError(line, "field 'answer' must be a number or null")

    try:
        schema = Schema(_require(record, "schema", (str,), line))
    except ValueError:
        raise IngestError(line, f"unknown schema {record['schema']!r}") from None
    try:
        difficulty = Difficulty(_require(record, "difficulty", (str,), line))
    except ValueError:
        raise IngestError(line, f"unknown difficulty {record['difficulty']!r}") from None
    try:
        split = Split(_require(record, "split", (str,), line))
    except ValueError:
        raise IngestError(line, f"unknown split {record['split']!r}") from None

    try:
        program = expand_macros(parse(dsl_text, source_name=instance_id))
    except (ParseError, ExpansionError) as exc:
        raise IngestError(line, f"dsl does not parse: {exc}") from exc

    meta = ProblemMeta(
        givens=tuple(givens_raw),
        query_marker=query_marker,
        answer=float(answer) if answer is not None else None,
        schema=schema,
        difficulty=difficulty,
    )
    return Instance(instance_id, problem, image_path, dsl_text, meta, split, program)


def load_manifest(path: str | Path) -> LoadResult:
    """Load a JSONL manifest; raises :class:`IngestError` only when not a
    single record survives."""
    instances: list[Instance] = []
    errors: list[IngestError] = []
    for line_no, raw in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            errors.append(IngestError(line_no, f"bad JSON: {exc.msg}"))
            continue
        try:
            instances.append(_instance_from_record(record, line_no))
        except IngestError as exc:
            errors.append(exc)
    if not instances:
        raise IngestError(None, "no usable records in manifest")
    return LoadResult(instances, errors)


def _record_from_instance(instance: Instance) -> dict:
    meta = instance.meta
    return {
        "id": instance.id,
        "problem": instance.problem,
        "image_path": instance.image_path,
        "dsl": instance.dsl,
        "givens": list(meta.givens),
        "query_marker": meta.query_marker,
        "answer": meta.answer,
        "schema": meta.schema.value if meta.schema else None,
        "difficulty": meta.difficulty.value if meta.difficulty else None,
        "split": instance.split.value,
    }


def save_manifest(instances: list[Instance], path: str | Path) -> None:
    """Write canonical JSONL: fixed field order, one record per line."""
    lines = [
        json.dumps(_record_from_instance(i), ensure_ascii=False) for i in instances
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Statistics


def operation_length(program: Program) -> int:
    """Statement count after macro expansion."""
    return len(expand_macros(program).statements)


def oplen_bucket(length: int) -> str:
    if length <= 3:
        return "<=3"
    if length >= 8:
        return ">=8"
    return str(length)


@dataclass
class CorpusStats:
    total: int
    by_schema: dict[str, int]
    by_difficulty: dict[str, int]
    by_oplen: dict[str, int]


def stats(instances: list[Instance]) -> dict[Split, CorpusStats]:
    """Bucket counts per split; every bucket key is present, zero included."""
    out: dict[Split, CorpusStats] = {}
    for split in Split:
        members = [i for i in instances if i.split is split]
        by_schema = {s.value: 0 for s in Schema}
        by_difficulty = {d.value: 0 for d in Difficulty}
        by_oplen = {bucket: 0 for bucket in OPLEN_BUCKETS}
        for instance in members:
            if instance.meta.schema is not None:
                by_schema[instance.meta.schema.value] += 1
            if instance.meta.difficulty is not None:
                by_difficulty[instance.meta.difficulty.value] += 1
            by_oplen[oplen_bucket(operation_length(instance.program))] += 1
        out[split] = CorpusStats(len(members), by_schema, by_difficulty, by_oplen)
    return out


def stats_json(by_split: dict[Split, CorpusStats]) -> dict:
    return {
        split.value: {
            "total": s.total,
            "by_schema": dict(s.by_schema),
            "by_difficulty": dict(s.by_difficulty),
            "by_oplen": dict(s.by_oplen),
        }
        for split, s in by_split.items()
    }


def stats_table(by_split: dict[Split, CorpusStats]) -> str:
    """Aligned text table: schemas, difficulty levels, operation lengths."""
    train = by_split[Split.TRAIN]
    test = by_split[Split.TEST]

    rows: list[tuple[str, str, str]] = [("", "Train", "Test")]

    rows.append(("Problem schemas", "", ""))
    for schema in Schema:
        rows.append(
            (
                f"  {_SCHEMA_TITLES[schema]}",
                str(train.by_schema[schema.value]),
                str(test.by_schema[schema.value]),
            )
        )
    rows.append(("Difficulty levels", "", ""))
    for level in Difficulty:
        rows.append(
            (
                f"  {level.value.capitalize()}",
                str(train.by_difficulty[level.value]),
                str(test.by_difficulty[level.value]),
            )
        )
    rows.append(("Operation length", "", ""))
    for bucket in OPLEN_BUCKETS:
        rows.append((f"  {bucket}", str(train.by_oplen[bucket]), str(test.by_oplen[bucket])))
    rows.append(("Total", str(train.total), str(test.total)))

    label_w = max(len(r[0]) for r in rows)
    col_w = max(max(len(r[1]), len(r[2])) for r in rows)
    lines = [
        f"{label:<{label_w}}  {left:>{col_w}}  {right:>{col_w}}".rstrip()
        for label, left, right in rows
    ]
    return "\n".join(lines) + "\n"

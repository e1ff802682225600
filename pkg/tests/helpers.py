"""Shared fixture builders for the unit suite and the acceptance gate.

Everything here is deterministic: generators take an explicit
``random.Random`` and all file writers produce byte-identical output on
repeated runs.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from bardsl.dsl import (
    Compare,
    HorizontalBrace,
    HorizontalLine,
    Program,
    VerticalBrace,
    VerticalLink,
    canonical_print,
)

# Boundary coordinates stay multiples of 0.5, which binary floats represent
# exactly, so snapped-boundary membership never depends on rounding.
PALETTE = (1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0)

BASIC_SOURCE = (
    'HL "white chalk ?" 0 3 -2\n'
    'HL "color chalk" 1 3\n'
    "VL 3 0 1\n"
    'HB "5" N 0 0 5\n'
    'VB "both" 6 0 1\n'
)

HAND_SOURCES: list[tuple[str, str]] = [
    ("basic", BASIC_SOURCE),
    ("single-bar", 'HL "A" 0 3\n'),
    ("dashed-only", 'HL "missing part" 0 -4\n'),
    (
        "mixed-signs",
        'HL "have" 0 2 1.5 -1\nHL "need" 1 4.5\nVL 4.5 0 1\nHB "rest ?" S 0 3.5 4.5\n',
    ),
    ("cmp-pair", 'HL "long 5" 0 3 2\nHL "short 3" 1 3\nCMP "gap ?" 0 1\n'),
    ("escapes", 'HL "say \\"hi\\" \\\\ now" 0 2\n'),
    ("negative-row-link", 'HL "base" 0 2\nVL 0 -1 0\nHB "up" N -1 0 2\n'),
    (
        "comments-and-blanks",
        '# header comment\n\nHL "a # not a comment" 0 1 1  # trailing\n\nHB "2" N 0 0 2\n',
    ),
    ("long-label", 'HL "a very wordy bar name that keeps going" 0 6\n'),
    ("fractional", 'HL "halves" 0 1.5 1.5\nHB "1.5" N 0 0 1.5\nHB "1.5" S 0 1.5 3\n'),
]


def random_program(rng: random.Random) -> Program:
    """A structurally valid macro-free program with snapped braces."""
    n_rows = rng.randint(1, 4)
    statements: list = []
    bounds: dict[int, list[float]] = {}
    for row in range(n_rows):
        segments = []
        for _ in range(rng.randint(1, 4)):
            value = rng.choice(PALETTE)
            if rng.random() < 0.3:
                value = -value
            segments.append(value)
        name = rng.choice((f"bar {row}", "part ?", "whole", "rest", "x"))
        statements.append(HorizontalLine(name, row, tuple(segments)))
        acc, edges = 0.0, [0.0]
        for seg in segments:
            acc += abs(seg)
            edges.append(acc)
        bounds[row] = edges
    for _ in range(rng.randint(0, 2)):
        row = rng.randrange(n_rows)
        i, j = sorted(rng.sample(range(len(bounds[row])), 2))
        statements.append(
            HorizontalBrace(
                rng.choice(("span", "piece", "left ?")),
                rng.choice("NS"),
                row,
                bounds[row][i],
                bounds[row][j],
            )
        )
    if n_rows >= 2 and rng.random() < 0.7:
        r0 = rng.randrange(n_rows - 1)
        shared = sorted(set(bounds[r0]) & set(bounds[r0 + 1]))
        statements.append(VerticalLink(rng.choice(shared), r0, r0 + 1))
    if n_rows >= 2 and rng.random() < 0.5:
        col = max(edges[-1] for edges in bounds.values()) + 1.0
        statements.append(VerticalBrace("all", col, 0, n_rows - 1))
    return Program(tuple(statements))


def cmp_program(rng: random.Random) -> Program:
    """Two single-bar rows with distinct totals under a CMP macro."""
    la = rng.choice(PALETTE)
    lb = rng.choice([v for v in PALETTE if v != la])
    return Program(
        (
            HorizontalLine("first", 0, (la,)),
            HorizontalLine("second", 1, (lb,)),
            Compare("difference ?", 0, 1),
        )
    )


def fixture_sources() -> list[tuple[str, str]]:
    """At least fifty named programs covering every statement form,
    both segment signs, and the comparison macro."""
    out = list(HAND_SOURCES)
    rng = random.Random(7042)
    for k in range(40):
        out.append((f"gen-{k:02d}", canonical_print(random_program(rng))))
    for k in range(6):
        out.append((f"cmp-{k}", canonical_print(cmp_program(rng))))
    return out


# ---------------------------------------------------------------------------
# Alignment property material


def snapped_program(rng: random.Random) -> Program:
    """Braces and a link that all sit exactly on segment boundaries."""
    n_rows = rng.randint(2, 4)
    statements: list = []
    bounds: dict[int, list[float]] = {}
    for row in range(n_rows):
        segments = tuple(
            rng.choice(PALETTE) * (1 if rng.random() < 0.8 else -1)
            for _ in range(rng.randint(1, 4))
        )
        statements.append(HorizontalLine(f"bar {row}", row, segments))
        acc, edges = 0.0, [0.0]
        for seg in segments:
            acc += abs(seg)
            edges.append(acc)
        bounds[row] = edges
    for _ in range(rng.randint(1, 3)):
        row = rng.randrange(n_rows)
        i, j = sorted(rng.sample(range(len(bounds[row])), 2))
        statements.append(
            HorizontalBrace("piece", rng.choice("NS"), row, bounds[row][i], bounds[row][j])
        )
    r0 = rng.randrange(n_rows - 1)
    shared = sorted(set(bounds[r0]) & set(bounds[r0 + 1]))
    statements.append(VerticalLink(rng.choice(shared), r0, r0 + 1))
    return Program(tuple(statements))


def perturb_one_endpoint(program: Program, rng: random.Random) -> Program:
    """Move exactly one brace endpoint or link coordinate off-boundary.

    Boundaries are multiples of 0.5 and distinct ones are at least 1.0
    apart, so a shift below 0.5 in magnitude stays at least 1e-3 away from
    every boundary and preserves x0 < x1.
    """
    targets = [
        (index, name)
        for index, stmt in enumerate(program.statements)
        for name in (
            ("x0", "x1")
            if isinstance(stmt, HorizontalBrace)
            else ("x",) if isinstance(stmt, VerticalLink) else ()
        )
    ]
    index, name = rng.choice(targets)
    stmt = program.statements[index]
    delta = rng.choice((0.137, 0.251, -0.173, 0.349))
    value = getattr(stmt, name) + delta
    if value < 0:
        value = getattr(stmt, name) + abs(delta)
    if isinstance(stmt, HorizontalBrace):
        replaced = HorizontalBrace(
            stmt.label,
            stmt.side,
            stmt.row,
            value if name == "x0" else stmt.x0,
            value if name == "x1" else stmt.x1,
        )
    else:
        replaced = VerticalLink(value, stmt.row0, stmt.row1)
    statements = list(program.statements)
    statements[index] = replaced
    return Program(tuple(statements))


# ---------------------------------------------------------------------------
# Judge transcripts

CRITERION_TITLES = {
    "C1": "Alignment",
    "C2": "Completeness",
    "C3": "Numeric consistency",
    "C4": "Transfer encoding",
    "C5": "Answer leakage",
    "C6": "Brace and link usage",
    "N1": "Reduction convention",
    "N2": "Multiplicative structure",
    "N3": "Decomposition",
    "N4": "Label conciseness",
}
CRITERION_ORDER = tuple(CRITERION_TITLES)


def transcript(fails: set[str] | frozenset[str] = frozenset(), stated: float | None = None) -> str:
    """A well-formed judge reply failing exactly ``fails``; the stated score
    is derived from the verdicts unless overridden."""
    if stated is None:
        if fails & {"C1", "C2", "C3", "C4", "C5", "C6"}:
            stated = 0.0
        else:
            stated = round(1.0 - 0.1 * len(fails), 1)
    lines = ["[Scoring Rationale]"]
    for number, check_id in enumerate(CRITERION_ORDER, start=1):
        verdict = "FAIL" if check_id in fails else "PASS"
        reason = "not satisfied" if check_id in fails else "looks right"
        lines.append(f"({number}) {CRITERION_TITLES[check_id]}: [{verdict}] - {reason}")
    lines.append(f"[Final Score]: {stated}")
    return "\n".join(lines) + "\n"


def write_transcript(directory: Path, instance_id: str, text: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{instance_id}.txt"
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Scripted drafting fixtures

LEAKY_ID = "t5"

_T1_DRAFT = 'HL "red 3" 0 3 2\nHB "5" N 0 0 5\nHB "pears ?" S 0 3 5\n'
_T2_DRAFT = 'HL "rope 9" 0 4 5\nHB "4" N 0 0 4\nHB "rest ?" S 0 4 9\n'
_T3_DRAFT = 'HL "Tom 5" 0 3 2\nHL "Jill 3" 1 3\nCMP "longer ?" 0 1\n'
_T4_BAD_DRAFT = 'HL "tank 8" 0 2 -6\nHB "6" S 0 3 8\n'
_T4_DRAFT = 'HL "tank 8" 0 2 -6\nHB "6" S 0 2 8\nHB "left ?" N 0 0 2\n'
_T5_DRAFT = 'HL "ribbon 12" 0 7 -5\nHB "5" S 0 7 12\nHB "left ?" N 0 0 7\n'
_T5_LEAKY_DRAFT = 'HL "ribbon 12" 0 7 -5\nHB "5" S 0 7 12\nHB "left ? is 7" N 0 0 7\n'


def _reply(explanation: str, block: str | None, answer: str | None = None) -> str:
    parts = [explanation]
    if block is not None:
        parts.append("```dsl\n" + block + "```")
    if answer is not None:
        parts.append(f"Answer: {answer}")
    return "\n\n".join(parts) + "\n"


def drafting_records() -> list[dict]:
    """Five manifest records for the scripted drafting loop; ``t5`` has no
    reference answer, so only the guard can catch its leak."""

    def record(instance_id, problem, dsl, givens, answer, schema, difficulty):
        return {
            "id": instance_id,
            "problem": problem,
            "image_path": None,
            "dsl": dsl,
            "givens": givens,
            "query_marker": "?",
            "answer": answer,
            "schema": schema,
            "difficulty": difficulty,
            "split": "test",
        }

    return [
        record(
            "t1",
            "Ada has 3 red apples on a shelf of 5 fruits. How many pears are there?",
            _T1_DRAFT,
            ["3", "5"],
            2,
            "sum_split",
            "easy",
        ),
        record(
            "t2",
            "A rope of 9 m is cut into a 4 m piece and the rest. How long is the rest?",
            _T2_DRAFT,
            ["9", "4"],
            5,
            "sum_split",
            "medium",
        ),
        record(
            "t3",
            "Tom's ribbon is 5 dm and Jill's is 3 dm. How much longer is Tom's?",
            _T3_DRAFT,
            ["5", "3"],
            2,
            "difference_analysis",
            "easy",
        ),
        record(
            "t4",
            "A tank holds 8 L and 6 L is poured out. How much stays?",
            _T4_DRAFT,
            ["8", "6"],
            2,
            "sum_split",
            "hard",
        ),
        record(
            LEAKY_ID,
            "A 12 m ribbon loses 5 m. How much ribbon remains?",
            _T5_DRAFT,
            ["12", "5"],
            None,
            "sum_split",
            "medium",
        ),
    ]


def drafting_responses() -> dict[str, list[str]]:
    return {
        "t1": [
            _reply("Three red plus unknown pears makes five.", _T1_DRAFT),
            _reply("The pear segment spans 3 to 5.", _T1_DRAFT, "2"),
        ],
        "t2": [
            _reply("First try.", 'HL rope 0 9\n'),
            _reply("Quoted the bar name and split at 4.", _T2_DRAFT),
            _reply("The rest spans 4 to 9.", _T2_DRAFT, "5"),
        ],
        "t3": [
            _reply("Compare the two ribbons.", _T3_DRAFT),
            _reply("Tom exceeds Jill by the 3..5 piece.", _T3_DRAFT, "2"),
        ],
        "t4": [
            _reply("Removed part drawn dashed.", _T4_BAD_DRAFT),
            _reply("Moved the brace onto boundaries and marked the query.", _T4_DRAFT),
            _reply("What stays is the 0..2 piece.", _T4_DRAFT, "2"),
        ],
        LEAKY_ID: [
            _reply("Seven metres remain after the loss.", _T5_DRAFT),
            _reply("The remaining piece spans 0 to 7.", _T5_LEAKY_DRAFT, "7"),
        ],
    }


def write_drafting_fixtures(directory: Path) -> tuple[Path, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / "drafting.jsonl"
    manifest.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in drafting_records()) + "\n",
        encoding="utf-8",
    )
    responses = directory / "responses.json"
    responses.write_text(
        json.dumps(drafting_responses(), ensure_ascii=False, indent=2), encoding="utf-8"
    )
    return manifest, responses


# ---------------------------------------------------------------------------
# Corpus-shaped manifest

TRAIN_SCHEMA = {
    "proportional_distribution": 4265,
    "rate_percentage": 2771,
    "change_revert": 1635,
    "difference_analysis": 905,
    "sum_split": 854,
}
TEST_SCHEMA = {
    "proportional_distribution": 245,
    "rate_percentage": 265,
    "change_revert": 119,
    "difference_analysis": 141,
    "sum_split": 172,
}
TRAIN_DIFFICULTY = {"easy": 1400, "medium": 7602, "hard": 1428}
TEST_DIFFICULTY = {"easy": 208, "medium": 680, "hard": 54}
TRAIN_OPLEN = {"<=3": 1834, "4": 2490, "5": 2693, "6": 1612, "7": 1002, ">=8": 799}
TEST_OPLEN = {"<=3": 163, "4": 279, "5": 296, "6": 115, "7": 56, ">=8": 33}

_BUCKET_STATEMENTS = {"<=3": 2, "4": 4, "5": 5, "6": 6, "7": 7, ">=8": 9}


def _dsl_with_statements(count: int) -> str:
    lines = ['HL "r ?" 0 1'] + ['HB "w" N 0 0 1'] * (count - 1)
    return "\n".join(lines) + "\n"


def write_shaped_manifest(path: Path) -> None:
    """A manifest whose three marginal distributions each sum to the full
    corpus totals, built by zipping the per-bucket sequences."""
    dsl_json = {
        bucket: json.dumps(_dsl_with_statements(count))
        for bucket, count in _BUCKET_STATEMENTS.items()
    }
    lines: list[str] = []
    counter = 0
    groups = (
        ("train", TRAIN_SCHEMA, TRAIN_DIFFICULTY, TRAIN_OPLEN),
        ("test", TEST_SCHEMA, TEST_DIFFICULTY, TEST_OPLEN),
    )
    for split, schemas, difficulties, oplens in groups:
        schema_seq = [s for s, n in schemas.items() for _ in range(n)]
        diff_seq = [d for d, n in difficulties.items() for _ in range(n)]
        dsl_seq = [dsl_json[b] for b, n in oplens.items() for _ in range(n)]
        for schema, difficulty, dsl in zip(schema_seq, diff_seq, dsl_seq, strict=True):
            counter += 1
            lines.append(
                f'{{"id":"i{counter}","problem":"p","image_path":null,"dsl":{dsl},'
                f'"givens":[],"query_marker":null,"answer":null,'
                f'"schema":"{schema}","difficulty":"{difficulty}","split":"{split}"}}'
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

"""Structural verification of bar-model programs.

Six critical checks and four non-critical checks, each identified by a
stable id:

== ==================== ========
C1 alignment            critical
C2 completeness         critical
C3 numeric-consistency  critical
C4 transfer             critical
C5 leakage              critical
C6 vb-vl-usage          critical
N1 reduction-convention lint
N2 multiplicative-structure lint
N3 semantic-decomposition lint
N4 label-conciseness    lint
== ==================== ========

Any critical failure zeroes the rubric score; otherwise each distinct
failed non-critical check costs 0.1.  Checks that need problem metadata
(C2, C4, C5) are skipped when the metadata is absent and count as passed.

:func:`verify` needs a scene, so it propagates :class:`SceneError` for
programs with duplicate bar rows; callers treat that like any other
structural failure of the draft.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum

from .dsl import (
    EPS,
    HorizontalBrace,
    HorizontalLine,
    Program,
    Statement,
    VerticalBrace,
    format_number,
)
from .scene import Scene, SegmentStyle, build_scene, on_boundary

__all__ = [
    "CHECK_IDS",
    "CRITICAL_IDS",
    "Diagnostic",
    "Difficulty",
    "Dimensions",
    "NONCRITICAL_IDS",
    "ProblemMeta",
    "Schema",
    "Severity",
    "VerificationReport",
    "check_alignment",
    "check_completeness",
    "check_leakage",
    "check_noncritical",
    "check_numeric_consistency",
    "check_transfer",
    "check_vb_vl_usage",
    "report_json",
    "report_text",
    "rubric_score",
    "verify",
    "visible_labels",
]

CRITICAL_IDS = ("C1", "C2", "C3", "C4", "C5", "C6")
NONCRITICAL_IDS = ("N1", "N2", "N3", "N4")
CHECK_IDS = CRITICAL_IDS + NONCRITICAL_IDS


class Schema(Enum):
    PROPORTIONAL_DISTRIBUTION = "proportional_distribution"
    RATE_PERCENTAGE = "rate_percentage"
    CHANGE_REVERT = "change_revert"
    DIFFERENCE_ANALYSIS = "difference_analysis"
    SUM_SPLIT = "sum_split"


class Difficulty(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


@dataclass(frozen=True)
class ProblemMeta:
    """Problem-side facts the verifier can hold a program against."""

    givens: tuple[str, ...] = ()
    query_marker: str | None = None
    answer: float | None = None
    schema: Schema | None = None
    difficulty: Difficulty | None = None


class Severity(Enum):
    CRITICAL = "critical"
    NON_CRITICAL = "non-critical"


@dataclass(frozen=True)
class Diagnostic:
    check_id: str
    severity: Severity
    location: int | None  # statement index, None for program-level findings
    message: str


@dataclass(frozen=True)
class Dimensions:
    align: float
    cover: float
    num: float
    norm: float
    leak: float

    def as_dict(self) -> dict[str, float]:
        return {
            "align": self.align,
            "cover": self.cover,
            "num": self.num,
            "norm": self.norm,
            "leak": self.leak,
        }

    def mean(self) -> float:
        return (self.align + self.cover + self.num + self.norm + self.leak) / 5.0


@dataclass(frozen=True)
class VerificationReport:
    diagnostics: tuple[Diagnostic, ...]
    rubric_score: float
    dims: Dimensions
    notes: tuple[str, ...] = field(default=())


def _critical(check_id: str, location: int | None, message: str) -> Diagnostic:
    return Diagnostic(check_id, Severity.CRITICAL, location, message)


def _lint(check_id: str, location: int | None, message: str) -> Diagnostic:
    return Diagnostic(check_id, Severity.NON_CRITICAL, location, message)


def visible_labels(program: Program) -> list[tuple[int, str]]:
    """All quoted strings with their statement index; the program's visible text."""
    out: list[tuple[int, str]] = []
    for index, stmt in enumerate(program.statements):
        if isinstance(stmt, HorizontalLine):
            out.append((index, stmt.name))
        elif isinstance(stmt, (HorizontalBrace, VerticalBrace)):
            out.append((index, stmt.label))
        elif hasattr(stmt, "label"):
            out.append((index, stmt.label))
    return out


# ---------------------------------------------------------------------------
# C1 alignment


def check_alignment(scene: Scene) -> list[Diagnostic]:
    """Braces and links must land on segment boundaries of the bars they touch.

    At most one diagnostic per offending statement: either a dangling row
    reference or a misaligned coordinate.
    """
    diags: list[Diagnostic] = []
    for hb in scene.hbraces:
        bar = scene.rows.get(hb.row)
        if bar is None:
            diags.append(
                _critical("C1", hb.stmt_index, f"brace references row {hb.row} which has no bar")
            )
            continue
        bad = [
            x for x in (hb.x0, hb.x1) if not on_boundary(bar.boundaries, x)
        ]
        if bad:
            shown = ", ".join(format_number(x) for x in bad)
            diags.append(
                _critical(
                    "C1",
                    hb.stmt_index,
                    f"brace endpoint {shown} not on a segment boundary of row {hb.row}",
                )
            )
    for link in scene.links:
        missing = [r for r in (link.row0, link.row1) if r not in scene.rows]
        if missing:
            shown = ", ".join(str(r) for r in missing)
            diags.append(
                _critical(
                    "C1", link.stmt_index, f"link references row {shown} which has no bar"
                )
            )
            continue
        spanned = scene.bar_rows(link.row0, link.row1)
        off = [bar.row for bar in spanned if not on_boundary(bar.boundaries, link.x)]
        if off:
            shown = ", ".join(str(r) for r in off)
            diags.append(
                _critical(
                    "C1",
                    link.stmt_index,
                    f"link at x={format_number(link.x)} misses a boundary of row {shown}",
                )
            )
    return diags


# ---------------------------------------------------------------------------
# C2 completeness


def _collapse(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).split())


def missing_givens(program: Program, meta: ProblemMeta) -> list[str]:
    visible = _collapse(" ".join(label for _, label in visible_labels(program)))
    return [g for g in meta.givens if _collapse(g) not in visible]


def check_completeness(program: Program, meta: ProblemMeta) -> list[Diagnostic]:
    """Every given must appear in the visible text; one label must mark the
    query with ``?``.  Matching is NFC plus whitespace collapsing."""
    diags = [
        _critical("C2", None, f"given {g!r} does not appear in any label")
        for g in missing_givens(program, meta)
    ]
    if not any("?" in label for _, label in visible_labels(program)):
        diags.append(_critical("C2", None, "no label marks the queried quantity with '?'"))
    return diags


# ---------------------------------------------------------------------------
# C3 numeric consistency

_PURE_NUMBER_RE = re.compile(r"-?[0-9]+(?:\.[0-9]+)?\Z")


def _pure_number(label: str) -> float | None:
    text = label.strip()
    if _PURE_NUMBER_RE.match(text):
        return float(text)
    return None


def check_numeric_consistency(scene: Scene) -> list[Diagnostic]:
    """Pure-number labels must equal the quantity they annotate: brace width
    for HB, sum of spanned bar totals for VB.  Mixed text is not checked."""
    diags: list[Diagnostic] = []
    for hb in scene.hbraces:
        q = _pure_number(hb.label)
        if q is None:
            continue
        width = hb.x1 - hb.x0
        if abs(q - width) > EPS * max(1.0, q):
            diags.append(
                _critical(
                    "C3",
                    hb.stmt_index,
                    f"brace labelled {format_number(q)} spans {format_number(width)}",
                )
            )
    for vb in scene.vbraces:
        q = _pure_number(vb.label)
        if q is None:
            continue
        total = sum(bar.total for bar in scene.bar_rows(vb.row0, vb.row1))
        if abs(q - total) > EPS * max(1.0, q):
            diags.append(
                _critical(
                    "C3",
                    vb.stmt_index,
                    f"brace labelled {format_number(q)} aggregates {format_number(total)}",
                )
            )
    return diags


# ---------------------------------------------------------------------------
# C4 transfer


def check_transfer(scene: Scene, meta: ProblemMeta) -> list[Diagnostic]:
    """Change-and-revert problems must encode the moved amount twice: a
    dashed segment of length t on the giving row, a trailing solid segment
    of length t on the receiving row, and a link at a boundary both rows
    share.  Only runs for that schema."""
    if meta.schema is not Schema.CHANGE_REVERT:
        return []
    bars = list(scene.rows.values())
    for giver in bars:
        dashed = [s.length for s in giver.segments if s.style is SegmentStyle.DASHED]
        if not dashed:
            continue
        for taker in bars:
            if taker.row == giver.row or not taker.segments:
                continue
            last = taker.segments[-1]
            if last.style is not SegmentStyle.SOLID:
                continue
            if not any(abs(last.length - t) <= EPS for t in dashed):
                continue
            lo, hi = min(giver.row, taker.row), max(giver.row, taker.row)
            for link in scene.links:
                if link.row0 <= lo and link.row1 >= hi \
                        and on_boundary(giver.boundaries, link.x) \
                        and on_boundary(taker.boundaries, link.x):
                    return []
    return [
        _critical(
            "C4",
            None,
            "no paired dashed/solid transfer of equal amount joined by a shared-boundary link",
        )
    ]


# ---------------------------------------------------------------------------
# C5 leakage

_NUMBER_RUN_RE = re.compile(r"[0-9]+(?:\.[0-9]+)?")


def check_leakage(program: Program, meta: ProblemMeta) -> list[Diagnostic]:
    """No visible numeric token may equal the final answer."""
    if meta.answer is None:
        return []
    diags: list[Diagnostic] = []
    for index, label in visible_labels(program):
        for token in _NUMBER_RUN_RE.findall(label):
            if float(token) == float(meta.answer):
                diags.append(
                    _critical(
                        "C5",
                        index,
                        f"label {label!r} exposes the answer {format_number(meta.answer)}",
                    )
                )
                break
    return diags


# ---------------------------------------------------------------------------
# C6 vertical brace and link usage


def check_vb_vl_usage(scene: Scene) -> list[Diagnostic]:
    """VB must aggregate at least two bar rows; VL must sit on a boundary
    shared by at least two of the rows it spans."""
    diags: list[Diagnostic] = []
    for vb in scene.vbraces:
        count = len(scene.bar_rows(vb.row0, vb.row1))
        if count < 2:
            diags.append(
                _critical(
                    "C6",
                    vb.stmt_index,
                    f"vertical brace spans {count} bar row(s), needs at least 2",
                )
            )
    for link in scene.links:
        sharing = [
            bar.row
            for bar in scene.bar_rows(link.row0, link.row1)
            if on_boundary(bar.boundaries, link.x)
        ]
        if len(sharing) < 2:
            diags.append(
                _critical(
                    "C6",
                    link.stmt_index,
                    f"link at x={format_number(link.x)} is not a boundary shared by two bar rows",
                )
            )
    return diags


# ---------------------------------------------------------------------------
# N1..N4 conventions


def check_noncritical(scene: Scene, program: Program) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    # N1: solid segments belong before dashed ones.
    for row in sorted(scene.rows):
        bar = scene.rows[row]
        seen_dashed = False
        for span in bar.segments:
            if span.style is SegmentStyle.DASHED:
                seen_dashed = True
            elif seen_dashed:
                diags.append(
                    _lint("N1", bar.stmt_index, f"row {row} draws a solid segment after a dashed one")
                )
                break

    # N2: a row of k >= 2 unit copies should sit below its single-unit base row.
    bars = [scene.rows[r] for r in sorted(scene.rows)]
    for repeated in bars:
        if len(repeated.segments) < 2:
            continue
        for base in bars:
            if base.row == repeated.row or base.total <= EPS:
                continue
            if all(abs(s.length - base.total) <= EPS for s in repeated.segments):
                if base.row > repeated.row:
                    diags.append(
                        _lint(
                            "N2",
                            repeated.stmt_index,
                            f"row {repeated.row} repeats the unit of row {base.row}, "
                            "which should sit above it",
                        )
                    )
                    break

    # N3: a single-segment bar carrying two or more braces is undersplit.
    for row in sorted(scene.rows):
        bar = scene.rows[row]
        if len(bar.segments) != 1:
            continue
        attached = sum(1 for hb in scene.hbraces if hb.row == row)
        if attached >= 2:
            diags.append(
                _lint(
                    "N3",
                    bar.stmt_index,
                    f"row {row} is one undivided segment but carries {attached} braces",
                )
            )

    # N4: labels stay short and free of embedded calculations.
    for index, label in visible_labels(program):
        if len(label) > 40:
            diags.append(_lint("N4", index, f"label of {len(label)} characters exceeds 40"))
        elif "=" in label:
            diags.append(_lint("N4", index, f"label {label!r} embeds a calculation"))
    return diags


# ---------------------------------------------------------------------------
# Scoring and reports


def rubric_score(diagnostics: list[Diagnostic] | tuple[Diagnostic, ...]) -> float:
    """0.0 under any critical failure, else 1 - 0.1 per distinct failed lint."""
    if any(d.severity is Severity.CRITICAL for d in diagnostics):
        return 0.0
    failed = {d.check_id for d in diagnostics if d.severity is Severity.NON_CRITICAL}
    return max(0.0, 1.0 - 0.1 * len(failed))


def _sorted_diags(diags: list[Diagnostic]) -> tuple[Diagnostic, ...]:
    return tuple(
        sorted(diags, key=lambda d: (d.location is None, d.location or 0, d.check_id))
    )


def verify(program: Program, meta: ProblemMeta | None = None) -> VerificationReport:
    """Run every applicable check and score the result.

    Propagates :class:`bardsl.scene.SceneError` when the program has two
    bars on one row and therefore no scene.
    """
    scene = build_scene(program)
    notes: list[str] = []
    diags: list[Diagnostic] = []
    diags += check_alignment(scene)

    cover = 1.0
    if meta is not None and meta.givens:
        diags += check_completeness(program, meta)
        found = len(meta.givens) - len(missing_givens(program, meta))
        cover = found / len(meta.givens)
    else:
        notes.append("completeness skipped: no givens provided")

    diags += check_numeric_consistency(scene)

    if meta is not None and meta.schema is Schema.CHANGE_REVERT:
        diags += check_transfer(scene, meta)

    if meta is not None and meta.answer is not None:
        diags += check_leakage(program, meta)
    else:
        notes.append("leakage skipped: no answer provided")

    diags += check_vb_vl_usage(scene)
    diags += check_noncritical(scene, program)

    failed_lints = {d.check_id for d in diags if d.severity is Severity.NON_CRITICAL}
    dims = Dimensions(
        align=0.0 if any(d.check_id == "C1" for d in diags) else 1.0,
        cover=cover,
        num=0.0 if any(d.check_id == "C3" for d in diags) else 1.0,
        norm=1.0 - 0.25 * len(failed_lints),
        leak=0.0 if any(d.check_id == "C5" for d in diags) else 1.0,
    )
    return VerificationReport(
        diagnostics=_sorted_diags(diags),
        rubric_score=rubric_score(diags),
        dims=dims,
        notes=tuple(notes),
    )


def report_text(report: VerificationReport) -> str:
    """One diagnostic per line: ``severity check_id stmt:<n> message``."""
    lines = [
        f"{d.severity.value} {d.check_id} "
        f"stmt:{'-' if d.location is None else d.location} {d.message}"
        for d in report.diagnostics
    ]
    lines.append(f"rubric_score {format_number(report.rubric_score)}")
    return "\n".join(lines) + "\n"


def report_json(report: VerificationReport) -> dict:
    return {
        "rubric_score": report.rubric_score,
        "align": report.dims.align,
        "cover": report.dims.cover,
        "num": report.dims.num,
        "norm": report.dims.norm,
        "leak": report.dims.leak,
        "diagnostics": [
            {
                "check_id": d.check_id,
                "severity": d.severity.value,
                "stmt": d.location,
                "message": d.message,
            }
            for d in report.diagnostics
        ],
        "notes": list(report.notes),
    }

"""Geometry resolution: from a macro-free program to a virtual-grid scene.

Rows are logical y indices (row 0 at the top), x runs rightward in grid
units, and every bar is anchored at x = 0.  A bar's boundary set is the
prefix-sum sequence of its absolute segment lengths, 0 included; boundary
membership everywhere uses the shared :data:`bardsl.dsl.EPS` tolerance.

Dangling row references (links or braces naming rows without bars) are
legal here and survive into the scene; the verifier reports them.  The
only structural failure is two bars on one row.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .dsl import (
    EPS,
    Compare,
    HorizontalBrace,
    HorizontalLine,
    Program,
    VerticalBrace,
    VerticalLink,
    format_number,
)

__all__ = [
    "BarRow",
    "Extent",
    "ResolvedHBrace",
    "ResolvedLink",
    "ResolvedVBrace",
    "Scene",
    "SceneError",
    "SceneErrorKind",
    "SegmentSpan",
    "SegmentStyle",
    "build_scene",
    "dump_scene",
    "on_boundary",
]


class SegmentStyle(Enum):
    SOLID = "solid"
    DASHED = "dashed"


class SceneErrorKind(Enum):
    DUPLICATE_ROW = "DuplicateRow"
    MACRO_PRESENT = "MacroPresent"


class SceneError(Exception):
    def __init__(self, kind: SceneErrorKind, stmt_index: int, message: str):
        super().__init__(f"statement {stmt_index}: {kind.value}: {message}")
        self.kind = kind
        self.stmt_index = stmt_index
        self.message = message


@dataclass(frozen=True)
class SegmentSpan:
    length: float
    style: SegmentStyle
    start_x: float
    end_x: float


@dataclass(frozen=True)
class BarRow:
    name: str
    row: int
    segments: tuple[SegmentSpan, ...]
    boundaries: tuple[float, ...]
    total: float
    stmt_index: int


@dataclass(frozen=True)
class ResolvedLink:
    x: float
    row0: int
    row1: int
    stmt_index: int


@dataclass(frozen=True)
class ResolvedHBrace:
    label: str
    side: str
    row: int
    x0: float
    x1: float
    stmt_index: int


@dataclass(frozen=True)
class ResolvedVBrace:
    label: str
    col: float
    row0: int
    row1: int
    stmt_index: int


@dataclass(frozen=True)
class Extent:
    max_x: float
    max_row: int


@dataclass(frozen=True)
class Scene:
    rows: Mapping[int, BarRow]
    links: tuple[ResolvedLink, ...]
    hbraces: tuple[ResolvedHBrace, ...]
    vbraces: tuple[ResolvedVBrace, ...]
    extent: Extent

    def bar_rows(self, row0: int, row1: int) -> list[BarRow]:
        """Bars on rows ``row0..row1`` inclusive, in row order."""
        return [self.rows[r] for r in range(row0, row1 + 1) if r in self.rows]


def on_boundary(boundaries: Iterable[float], x: float, eps: float = EPS) -> bool:
    return any(abs(x - b) <= eps for b in boundaries)


def build_scene(program: Program) -> Scene:
    """Resolve a macro-free program.  Raises :class:`SceneError` on a
    duplicate bar row (and, defensively, on an unexpanded macro)."""
    rows: dict[int, BarRow] = {}
    links: list[ResolvedLink] = []
    hbraces: list[ResolvedHBrace] = []
    vbraces: list[ResolvedVBrace] = []
    max_x = 0.0
    max_row = 0

    for index, stmt in enumerate(program.statements):
        if isinstance(stmt, Compare):
            raise SceneError(
                SceneErrorKind.MACRO_PRESENT, index, "CMP must be expanded before building a scene"
            )
        if isinstance(stmt, HorizontalLine):
            if stmt.row in rows:
                raise SceneError(
                    SceneErrorKind.DUPLICATE_ROW,
                    index,
                    f"row {stmt.row} already has a bar",
                )
            spans: list[SegmentSpan] = []
            boundaries = [0.0]
            x = 0.0
            for value in stmt.segments:
                length = abs(value)
                style = SegmentStyle.SOLID if value > 0 else SegmentStyle.DASHED
                spans.append(SegmentSpan(length, style, x, x + length))
                x += length
                boundaries.append(x)
            rows[stmt.row] = BarRow(
                stmt.name, stmt.row, tuple(spans), tuple(boundaries), x, index
            )
            max_x = max(max_x, x)
            max_row = max(max_row, stmt.row)
        elif isinstance(stmt, VerticalLink):
            links.append(ResolvedLink(stmt.x, stmt.row0, stmt.row1, index))
            max_x = max(max_x, stmt.x)
            max_row = max(max_row, stmt.row1)
        elif isinstance(stmt, HorizontalBrace):
            hbraces.append(ResolvedHBrace(stmt.label, stmt.side, stmt.row, stmt.x0, stmt.x1, index))
            max_x = max(max_x, stmt.x0, stmt.x1)
            max_row = max(max_row, stmt.row)
        elif isinstance(stmt, VerticalBrace):
            vbraces.append(ResolvedVBrace(stmt.label, stmt.col, stmt.row0, stmt.row1, index))
            max_x = max(max_x, stmt.col)
            max_row = max(max_row, stmt.row1)
        else:
            raise TypeError(f"not a statement: {stmt!r}")

    return Scene(rows, tuple(links), tuple(hbraces), tuple(vbraces), Extent(max_x, max_row))


def dump_scene(scene: Scene) -> str:
    """Deterministic structured-text dump, used in test fixtures."""
    lines: list[str] = []
    for row in sorted(scene.rows):
        bar = scene.rows[row]
        parts = ",".join(
            f"{s.style.value}:{format_number(s.start_x)}-{format_number(s.end_x)}"
            for s in bar.segments
        )
        bounds = ",".join(format_number(b) for b in bar.boundaries)
        lines.append(
            f"row {row} name={bar.name!r} total={format_number(bar.total)} "
            f"boundaries=[{bounds}] segments=[{parts}]"
        )
    for link in scene.links:
        lines.append(f"link x={format_number(link.x)} rows={link.row0}..{link.row1}")
    for hb in scene.hbraces:
        lines.append(
            f"hbrace label={hb.label!r} side={hb.side} row={hb.row} "
            f"span={format_number(hb.x0)}..{format_number(hb.x1)}"
        )
    for vb in scene.vbraces:
        lines.append(
            f"vbrace label={vb.label!r} col={format_number(vb.col)} rows={vb.row0}..{vb.row1}"
        )
    lines.append(
        f"extent max_x={format_number(scene.extent.max_x)} max_row={scene.extent.max_row}"
    )
    return "\n".join(lines) + "\n"

"""Core types, parser, printer, and macro expansion for the bar-model DSL.

The language is line oriented: one statement per line, ``#`` starts a
comment (outside quotes), blank lines are ignored.  Five statement forms
exist::

    HL "name" row len1 len2 ...
    VL x row0 row1
    HB "label" N|S row x0 x1
    VB "label" col row0 row1
    CMP "label" rowA rowB

``HL`` draws a horizontal bar on a row, split into segments.  Segment
lengths are signed: positive renders solid, negative renders dashed, and
the absolute value is the length in grid units.  ``VL`` draws a vertical
link marking a shared boundary across rows, ``HB`` a horizontal brace over
``[x0, x1]`` above (``N``) or below (``S``) a row's bar, and ``VB`` a
vertical brace aggregating rows ``row0..row1``.  ``CMP`` is an authoring
macro; :func:`expand_macros` rewrites it into a link plus a difference
brace over the longer of two single-bar rows.

Numbers are plain decimals (optional sign, digits, optional fraction, no
exponent).  Strings are double-quoted with ``\\"`` and ``\\\\`` escapes and
may carry any codepoint except a line break, which is unrepresentable in a
line-oriented surface form.

:func:`parse` is total over text: every input yields a :class:`Program` or
a located :class:`ParseError`; it never raises anything else.  The first
error wins.  :func:`canonical_print` is the inverse normal form: parsing
its output reproduces a structurally equal program, and printing is
idempotent.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from typing import Union

__all__ = [
    "EPS",
    "Compare",
    "ExpansionError",
    "HorizontalBrace",
    "HorizontalLine",
    "ParseError",
    "ParseErrorKind",
    "Program",
    "Statement",
    "VerticalBrace",
    "VerticalLink",
    "canonical_print",
    "expand_macros",
    "format_number",
    "parse",
]

# Tolerance, in grid units, for every coordinate comparison downstream
# (boundary membership, brace widths, degenerate comparisons).
EPS = 1e-6


@dataclass(frozen=True)
class HorizontalLine:
    """A bar on ``row`` made of signed segment lengths (negative = dashed)."""

    name: str
    row: int
    segments: tuple[float, ...]


@dataclass(frozen=True)
class VerticalLink:
    """A vertical tie at grid x spanning rows ``row0`` through ``row1``."""

    x: float
    row0: int
    row1: int


@dataclass(frozen=True)
class HorizontalBrace:
    """A labelled brace over ``[x0, x1]`` on ``row``; side N above, S below."""

    label: str
    side: str
    row: int
    x0: float
    x1: float


@dataclass(frozen=True)
class VerticalBrace:
    """A labelled brace at column ``col`` aggregating rows ``row0..row1``."""

    label: str
    col: float
    row0: int
    row1: int


@dataclass(frozen=True)
class Compare:
    """Macro comparing the single bars on two rows; see :func:`expand_macros`."""

    label: str
    row_a: int
    row_b: int


Statement = Union[HorizontalLine, VerticalLink, HorizontalBrace, VerticalBrace, Compare]


@dataclass(frozen=True)
class Program:
    """An ordered sequence of statements.

    ``source_name`` is carried for error reporting only and is excluded
    from structural equality.
    """

    statements: tuple[Statement, ...]
    source_name: str | None = field(default=None, compare=False)


class ParseErrorKind(Enum):
    UNKNOWN_KEYWORD = "UnknownKeyword"
    MALFORMED_NUMBER = "MalformedNumber"
    UNTERMINATED_STRING = "UnterminatedString"
    ARITY_MISMATCH = "ArityMismatch"
    ZERO_SEGMENT = "ZeroSegment"
    BAD_ROW_ORDER = "BadRowOrder"
    BAD_SIDE = "BadSide"
    EMPTY_PROGRAM = "EmptyProgram"


class ParseError(Exception):
    """First syntax error in a source text, with 1-based line and column."""

    def __init__(self, line: int, column: int, kind: ParseErrorKind, message: str):
        super().__init__(f"{line}:{column}: {kind.value}: {message}")
        self.line = line
        self.column = column
        self.kind = kind
        self.message = message


class ExpansionError(Exception):
    """A ``CMP`` macro that cannot be rewritten (see :func:`expand_macros`)."""

    def __init__(self, stmt_index: int, message: str):
        super().__init__(f"statement {stmt_index}: {message}")
        self.stmt_index = stmt_index
        self.message = message


# ---------------------------------------------------------------------------
# Lexing

_STRING = "string"
_WORD = "word"

_INT_RE = re.compile(r"-?[0-9]+\Z")
_UINT_RE = re.compile(r"[0-9]+\Z")
_NUM_RE = re.compile(r"-?[0-9]+(?:\.[0-9]+)?\Z")
_UNUM_RE = re.compile(r"[0-9]+(?:\.[0-9]+)?\Z")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str  # decoded payload for strings, raw lexeme for words
    column: int  # 1-based


def _lex_line(text: str, line_no: int) -> list[_Token]:
    """Split one physical line into word and string tokens.

    ``#`` outside quotes drops the rest of the line.  Raises
    :class:`ParseError` only for an unterminated string.
    """
    tokens: list[_Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            break
        start = i
        if ch == '"':
            i += 1
            payload: list[str] = []
            closed = False
            while i < n:
                c = text[i]
                if c == "\\" and i + 1 < n and text[i + 1] in ('"', "\\"):
                    payload.append(text[i + 1])
                    i += 2
                    continue
                if c == '"':
                    closed = True
                    i += 1
                    break
                payload.append(c)
                i += 1
            if not closed:
                raise ParseError(
                    line_no,
                    start + 1,
                    ParseErrorKind.UNTERMINATED_STRING,
                    "string is not closed before end of line",
                )
            tokens.append(_Token(_STRING, "".join(payload), start + 1))
        else:
            while i < n and text[i] not in ' \t"#':
                i += 1
            tokens.append(_Token(_WORD, text[start:i], start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parsing


def _err(line_no: int, tok: _Token, kind: ParseErrorKind, message: str) -> ParseError:
    return ParseError(line_no, tok.column, kind, message)


def _expect_string(tok: _Token, line_no: int, what: str) -> str:
    if tok.kind != _STRING:
        raise _err(line_no, tok, ParseErrorKind.ARITY_MISMATCH, f"expected quoted {what}")
    return tok.text


def _expect_number(
    tok: _Token, line_no: int, what: str, *, integer: bool, signed: bool
) -> float:
    if tok.kind != _WORD:
        raise _err(line_no, tok, ParseErrorKind.MALFORMED_NUMBER, f"expected {what}")
    if integer:
        pattern = _INT_RE if signed else _UINT_RE
    else:
        pattern = _NUM_RE if signed else _UNUM_RE
    if not pattern.match(tok.text):
        raise _err(
            line_no, tok, ParseErrorKind.MALFORMED_NUMBER, f"{tok.text!r} is not a valid {what}"
        )
    value = float(tok.text)
    if not math.isfinite(value):
        raise _err(line_no, tok, ParseErrorKind.MALFORMED_NUMBER, f"{what} is too large")
    return value


def _expect_int(tok: _Token, line_no: int, what: str, *, signed: bool = True) -> int:
    _expect_number(tok, line_no, what, integer=True, signed=signed)
    return int(tok.text)


def _check_arity(tokens: list[_Token], line_no: int, line_text: str, low: int, high: int | None) -> None:
    # high is None for variadic statements (HL).
    count = len(tokens) - 1
    if count < low:
        column = len(line_text.rstrip()) + 1
        raise ParseError(
            line_no,
            column,
            ParseErrorKind.ARITY_MISMATCH,
            f"{tokens[0].text} takes at least {low} operands, got {count}"
            if high is None
            else f"{tokens[0].text} takes {low} operands, got {count}",
        )
    if high is not None and count > high:
        extra = tokens[1 + high]
        raise _err(
            line_no,
            extra,
            ParseErrorKind.ARITY_MISMATCH,
            f"{tokens[0].text} takes {high} operands, got {count}",
        )


def _parse_line(line_text: str, line_no: int) -> Statement | None:
    tokens = _lex_line(line_text, line_no)
    if not tokens:
        return None
    head = tokens[0]
    if head.kind != _WORD or head.text not in ("HL", "VL", "HB", "VB", "CMP"):
        raise _err(
            line_no,
            head,
            ParseErrorKind.UNKNOWN_KEYWORD,
            f"expected HL, VL, HB, VB, or CMP, got {head.text!r}",
        )
    keyword = head.text

    if keyword == "HL":
        _check_arity(tokens, line_no, line_text, 3, None)
        name = _expect_string(tokens[1], line_no, "bar name")
        row = _expect_int(tokens[2], line_no, "row index", signed=False)
        segments: list[float] = []
        for tok in tokens[3:]:
            value = _expect_number(tok, line_no, "segment length", integer=False, signed=True)
            if value == 0.0:
                raise _err(line_no, tok, ParseErrorKind.ZERO_SEGMENT, "segment length is zero")
            segments.append(value)
        return HorizontalLine(name, row, tuple(segments))

    if keyword == "VL":
        _check_arity(tokens, line_no, line_text, 3, 3)
        x = _expect_number(tokens[1], line_no, "x coordinate", integer=False, signed=False)
        row0 = _expect_int(tokens[2], line_no, "row index")
        row1 = _expect_int(tokens[3], line_no, "row index")
        if row0 >= row1:
            raise _err(
                line_no,
                tokens[3],
                ParseErrorKind.BAD_ROW_ORDER,
                f"row0 must be less than row1, got {row0} and {row1}",
            )
        return VerticalLink(x, row0, row1)

    if keyword == "HB":
        _check_arity(tokens, line_no, line_text, 5, 5)
        label = _expect_string(tokens[1], line_no, "label")
        side_tok = tokens[2]
        if side_tok.kind != _WORD or side_tok.text not in ("N", "S"):
            raise _err(line_no, side_tok, ParseErrorKind.BAD_SIDE, "side must be N or S")
        row = _expect_int(tokens[3], line_no, "row index")
        x0 = _expect_number(tokens[4], line_no, "x coordinate", integer=False, signed=True)
        x1 = _expect_number(tokens[5], line_no, "x coordinate", integer=False, signed=True)
        if x0 >= x1:
            raise _err(
                line_no,
                tokens[5],
                ParseErrorKind.BAD_ROW_ORDER,
                f"x0 must be less than x1, got {format_number(x0)} and {format_number(x1)}",
            )
        return HorizontalBrace(label, side_tok.text, row, x0, x1)

    if keyword == "VB":
        _check_arity(tokens, line_no, line_text, 4, 4)
        label = _expect_string(tokens[1], line_no, "label")
        col = _expect_number(tokens[2], line_no, "column coordinate", integer=False, signed=False)
        row0 = _expect_int(tokens[3], line_no, "row index")
        row1 = _expect_int(tokens[4], line_no, "row index")
        if row0 >= row1:
            raise _err(
                line_no,
                tokens[4],
                ParseErrorKind.BAD_ROW_ORDER,
                f"row0 must be less than row1, got {row0} and {row1}",
            )
        return VerticalBrace(label, col, row0, row1)

    # CMP
    _check_arity(tokens, line_no, line_text, 3, 3)
    label = _expect_string(tokens[1], line_no, "label")
    row_a = _expect_int(tokens[2], line_no, "row index")
    row_b = _expect_int(tokens[3], line_no, "row index")
    return Compare(label, row_a, row_b)


def parse(source: str, source_name: str | None = None) -> Program:
    """Parse DSL text into a :class:`Program`.

    Raises :class:`ParseError` for the first syntax error, including
    :data:`ParseErrorKind.EMPTY_PROGRAM` when no statement survives comment
    and blank-line stripping.  No other exception escapes.
    """
    statements: list[Statement] = []
    for line_no, line_text in enumerate(source.split("\n"), start=1):
        if line_text.endswith("\r"):
            line_text = line_text[:-1]
        stmt = _parse_line(line_text, line_no)
        if stmt is not None:
            statements.append(stmt)
    if not statements:
        raise ParseError(1, 1, ParseErrorKind.EMPTY_PROGRAM, "no statements in input")
    return Program(tuple(statements), source_name)


# ---------------------------------------------------------------------------
# Printing


def format_number(value: float) -> str:
    """Shortest decimal form: no exponent, no trailing zeros, no ``.0``."""
    if value == int(value):
        return str(int(value))
    text = repr(value)
    if "e" in text or "E" in text:
        text = format(Decimal(text), "f")
    return text


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _print_statement(stmt: Statement) -> str:
    if isinstance(stmt, HorizontalLine):
        segments = " ".join(format_number(s) for s in stmt.segments)
        return f"HL {_quote(stmt.name)} {stmt.row} {segments}"
    if isinstance(stmt, VerticalLink):
        return f"VL {format_number(stmt.x)} {stmt.row0} {stmt.row1}"
    if isinstance(stmt, HorizontalBrace):
        return (
            f"HB {_quote(stmt.label)} {stmt.side} {stmt.row} "
            f"{format_number(stmt.x0)} {format_number(stmt.x1)}"
        )
    if isinstance(stmt, VerticalBrace):
        return f"VB {_quote(stmt.label)} {format_number(stmt.col)} {stmt.row0} {stmt.row1}"
    if isinstance(stmt, Compare):
        return f"CMP {_quote(stmt.label)} {stmt.row_a} {stmt.row_b}"
    raise TypeError(f"not a statement: {stmt!r}")


def canonical_print(program: Program) -> str:
    """Normal form: one statement per line, single spaces, trailing newline."""
    if not program.statements:
        return ""
    return "\n".join(_print_statement(s) for s in program.statements) + "\n"


# ---------------------------------------------------------------------------
# Macro expansion


def bar_total(stmt: HorizontalLine) -> float:
    """Total drawn length of a bar: the sum of absolute segment lengths."""
    return sum(abs(s) for s in stmt.segments)


def expand_macros(program: Program) -> Program:
    """Rewrite every ``CMP`` into a ``VL`` plus a southern difference ``HB``.

    Each compared row must carry exactly one bar.  With totals La and Lb,
    the macro becomes a link at min(La, Lb) spanning both rows, followed by
    a brace over [min, max] on the row with the longer bar.  Programs
    without ``CMP`` are returned unchanged, so expansion is idempotent.
    """
    if not any(isinstance(s, Compare) for s in program.statements):
        return program

    bars_by_row: dict[int, list[HorizontalLine]] = {}
    for stmt in program.statements:
        if isinstance(stmt, HorizontalLine):
            bars_by_row.setdefault(stmt.row, []).append(stmt)

    out: list[Statement] = []
    for index, stmt in enumerate(program.statements):
        if not isinstance(stmt, Compare):
            out.append(stmt)
            continue
        lengths: dict[int, float] = {}
        for row in (stmt.row_a, stmt.row_b):
            bars = bars_by_row.get(row, [])
            if len(bars) == 0:
                raise ExpansionError(index, f"compared row {row} has no bar")
            if len(bars) > 1:
                raise ExpansionError(index, f"compared row {row} has {len(bars)} bars")
            lengths[row] = bar_total(bars[0])
        la = lengths[stmt.row_a]
        lb = lengths[stmt.row_b]
        if abs(la - lb) <= EPS:
            raise ExpansionError(
                index, f"compared rows have equal totals ({format_number(la)})"
            )
        lo, hi = min(la, lb), max(la, lb)
        longer_row = stmt.row_a if la > lb else stmt.row_b
        out.append(VerticalLink(lo, min(stmt.row_a, stmt.row_b), max(stmt.row_a, stmt.row_b)))
        out.append(HorizontalBrace(stmt.label, "S", longer_row, lo, hi))
    return replace(program, statements=tuple(out))

"""Deterministic rendering: byte-stable SVG, grayscale raster, GeoGebra.

One layout pass turns a scene into a flat list of drawing ops in a fixed
order: bars by ascending row (fills, then boundary ticks), links in
statement order, horizontal braces, vertical braces, then all text.  The
SVG and raster backends consume the same ops, so the two surfaces agree
up to pixel rounding.

Pixel mapping: ``x_px = margin + x * unit`` and ``y_px = margin + row *
row_pitch``; bars are ``bar_height`` tall from their row line.  Solid
segments are filled rectangles, dashed segments outlined rectangles with
the configured dash pattern.  Braces are square-bracket polylines offset
from the bar.  Text is never rasterized through a font: the raster marks
a label as a filled box of ``len(label) * glyph_w`` by ``glyph_h`` at the
label anchor, which keeps image comparisons font-free.

The GeoGebra exporter stays in grid units with rows mapped to ``y = -row``
so the script can be pasted into a command bar for inspection.

Everything here is pure; rendering the same scene twice yields identical
bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

from .dsl import format_number
from .scene import Scene, SegmentStyle

__all__ = [
    "DEFAULT_CONFIG",
    "Raster",
    "RenderConfig",
    "RenderError",
    "RenderOutput",
    "export_geogebra",
    "load_config",
    "render_all",
    "render_raster",
    "render_svg",
]

# Soft cap on raster size so absurd row or x values fail cleanly instead
# of exhausting memory.
_MAX_RASTER_PIXELS = 64_000_000


class RenderError(Exception):
    pass


@dataclass(frozen=True)
class RenderConfig:
    unit_px: int = 40
    row_pitch_px: int = 60
    bar_height_px: int = 18
    margin_px: int = 20
    dash_pattern: tuple[int, int] = (6, 4)
    brace_offset_px: int = 8
    brace_depth_px: int = 6
    glyph_w_px: int = 7
    glyph_h_px: int = 12
    background: int = 255
    ink: int = 0


DEFAULT_CONFIG = RenderConfig()


def load_config(path: str | Path, base: RenderConfig = DEFAULT_CONFIG) -> RenderConfig:
    """Read ``key=value`` lines (``#`` comments allowed) over a base config."""
    overrides: dict[str, object] = {}
    known = {f for f in RenderConfig.__dataclass_fields__}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RenderError(f"bad config line: {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise RenderError(f"unknown config key: {key!r}")
        if key == "dash_pattern":
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 2:
                raise RenderError(f"dash_pattern needs two integers, got {value!r}")
            overrides[key] = (int(parts[0]), int(parts[1]))
        else:
            overrides[key] = int(value)
    return replace(base, **overrides)


# ---------------------------------------------------------------------------
# Layout ops


@dataclass(frozen=True)
class _FillRect:
    x: float
    y: float
    w: float
    h: float


@dataclass(frozen=True)
class _DashRect:
    x: float
    y: float
    w: float
    h: float


@dataclass(frozen=True)
class _Line:
    x1: float
    y1: float
    x2: float
    y2: float
    dashed: bool = False


@dataclass(frozen=True)
class _Polyline:
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class _Text:
    x: float
    baseline: float
    text: str
    anchor: str  # start | middle | end


_Op = _FillRect | _DashRect | _Line | _Polyline | _Text


def _canvas_size(scene: Scene, cfg: RenderConfig) -> tuple[int, int]:
    max_x = max(scene.extent.max_x, 0.0)
    max_row = max(scene.extent.max_row, 0)
    width = 2 * cfg.margin_px + math.ceil(max_x * cfg.unit_px)
    height = 2 * cfg.margin_px + max_row * cfg.row_pitch_px + cfg.bar_height_px
    return width, height


def _layout(scene: Scene, cfg: RenderConfig) -> list[_Op]:
    def px(x: float) -> float:
        return cfg.margin_px + x * cfg.unit_px

    def row_top(row: int) -> float:
        return cfg.margin_px + row * cfg.row_pitch_px

    bar_h = cfg.bar_height_px
    depth = cfg.brace_depth_px
    offset = cfg.brace_offset_px
    glyph_h = cfg.glyph_h_px

    ops: list[_Op] = []
    texts: list[_Text] = []

    for row in sorted(scene.rows):
        bar = scene.rows[row]
        top = row_top(row)
        for span in bar.segments:
            x0, x1 = px(span.start_x), px(span.end_x)
            if span.style is SegmentStyle.SOLID:
                ops.append(_FillRect(x0, top, x1 - x0, bar_h))
            else:
                ops.append(_DashRect(x0, top, x1 - x0, bar_h))
        for boundary in bar.boundaries:
            bx = px(boundary)
            ops.append(_Line(bx, top, bx, top + bar_h))
        texts.append(
            _Text(cfg.margin_px - 4, top + (bar_h + glyph_h) / 2, bar.name, "end")
        )

    for link in scene.links:
        lx = px(link.x)
        ops.append(
            _Line(lx, row_top(link.row0), lx, row_top(link.row1) + bar_h, dashed=True)
        )

    for hb in scene.hbraces:
        x0, x1 = px(hb.x0), px(hb.x1)
        top = row_top(hb.row)
        if hb.side == "N":
            yh = top - offset - depth
            arm = yh + depth
            baseline = yh - 2
        else:
            yh = top + bar_h + offset + depth
            arm = yh - depth
            baseline = yh + 2 + glyph_h
        ops.append(_Polyline(((x0, arm), (x0, yh), (x1, yh), (x1, arm))))
        texts.append(_Text((x0 + x1) / 2, baseline, hb.label, "middle"))

    for vb in scene.vbraces:
        cx = px(vb.col)
        y0 = row_top(vb.row0)
        y1 = row_top(vb.row1) + bar_h
        ops.append(_Polyline(((cx - depth, y0), (cx, y0), (cx, y1), (cx - depth, y1))))
        texts.append(_Text(cx + 4, (y0 + y1) / 2 + glyph_h / 2, vb.label, "start"))

    ops.extend(texts)
    return ops


# ---------------------------------------------------------------------------
# SVG backend


def _fmt(value: float) -> str:
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def _xml_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(scene: Scene, cfg: RenderConfig = DEFAULT_CONFIG) -> str:
    """Byte-stable SVG: fixed element order, alphabetical attributes, and
    coordinates printed with at most two decimals."""
    width, height = _canvas_size(scene, cfg)
    dash = f"{cfg.dash_pattern[0]} {cfg.dash_pattern[1]}"
    lines = [
        f'<svg height="{height}" version="1.1" viewBox="0 0 {width} {height}" '
        f'width="{width}" xmlns="http://www.w3.org/2000/svg">',
        f'<rect fill="#ffffff" height="{height}" width="{width}" x="0" y="0"/>',
    ]
    for op in _layout(scene, cfg):
        if isinstance(op, _FillRect):
            lines.append(
                f'<rect fill="#000000" height="{_fmt(op.h)}" width="{_fmt(op.w)}" '
                f'x="{_fmt(op.x)}" y="{_fmt(op.y)}"/>'
            )
        elif isinstance(op, _DashRect):
            lines.append(
                f'<rect fill="none" height="{_fmt(op.h)}" stroke="#000000" '
                f'stroke-dasharray="{dash}" stroke-width="1" width="{_fmt(op.w)}" '
                f'x="{_fmt(op.x)}" y="{_fmt(op.y)}"/>'
            )
        elif isinstance(op, _Line):
            if op.dashed:
                lines.append(
                    f'<line stroke="#000000" stroke-dasharray="{dash}" stroke-width="1" '
                    f'x1="{_fmt(op.x1)}" x2="{_fmt(op.x2)}" y1="{_fmt(op.y1)}" y2="{_fmt(op.y2)}"/>'
                )
            else:
                lines.append(
                    f'<line stroke="#000000" stroke-width="1" '
                    f'x1="{_fmt(op.x1)}" x2="{_fmt(op.x2)}" y1="{_fmt(op.y1)}" y2="{_fmt(op.y2)}"/>'
                )
        elif isinstance(op, _Polyline):
            points = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in op.points)
            lines.append(
                f'<polyline fill="none" points="{points}" stroke="#000000" stroke-width="1"/>'
            )
        elif isinstance(op, _Text):
            lines.append(
                f'<text font-family="monospace" font-size="{cfg.glyph_h_px}" '
                f'text-anchor="{op.anchor}" x="{_fmt(op.x)}" y="{_fmt(op.baseline)}">'
                f"{_xml_escape(op.text)}</text>"
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Raster backend


@dataclass
class Raster:
    """A grayscale image: row-major bytes, 0 = ink, 255 = background."""

    width: int
    height: int
    pixels: bytearray

    def get(self, x: int, y: int) -> int:
        return self.pixels[y * self.width + x]

    def to_pgm(self) -> bytes:
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + bytes(self.pixels)

    @classmethod
    def from_pgm(cls, data: bytes) -> "Raster":
        fields: list[bytes] = []
        i = 0
        while len(fields) < 4:
            while i < len(data) and data[i : i + 1].isspace():
                i += 1
            if data[i : i + 1] == b"#":
                while i < len(data) and data[i : i + 1] != b"\n":
                    i += 1
                continue
            start = i
            while i < len(data) and not data[i : i + 1].isspace():
                i += 1
            fields.append(data[start:i])
        if fields[0] != b"P5":
            raise RenderError("not a P5 image")
        width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
        if maxval != 255:
            raise RenderError(f"unsupported max value {maxval}")
        body = data[i + 1 : i + 1 + width * height]
        if len(body) != width * height:
            raise RenderError("truncated image body")
        return cls(width, height, bytearray(body))


def _ipx(value: float) -> int:
    return math.floor(value + 0.5)


class _Canvas:
    def __init__(self, width: int, height: int, background: int, ink: int):
        self.width = width
        self.height = height
        self.ink = ink
        self.pixels = bytearray([background]) * (width * height)

    def set(self, x: int, y: int) -> None:
        if 0 <= x < self.width and 0 <= y < self.height:
            self.pixels[y * self.width + x] = self.ink

    def fill_rect(self, x: float, y: float, w: float, h: float) -> None:
        for yy in range(_ipx(y), _ipx(y + h)):
            for xx in range(_ipx(x), _ipx(x + w)):
                self.set(xx, yy)

    def _run(self, fixed: int, lo: int, hi: int, vertical: bool, dash: tuple[int, int] | None) -> None:
        # Inclusive pixel run; dashes phase from the low end.
        period = (dash[0] + dash[1]) if dash else 0
        for k, v in enumerate(range(lo, hi + 1)):
            if dash and k % period >= dash[0]:
                continue
            if vertical:
                self.set(fixed, v)
            else:
                self.set(v, fixed)

    def line(self, x1: float, y1: float, x2: float, y2: float, dash: tuple[int, int] | None) -> None:
        ix1, iy1, ix2, iy2 = _ipx(x1), _ipx(y1), _ipx(x2), _ipx(y2)
        if ix1 == ix2:
            self._run(ix1, min(iy1, iy2), max(iy1, iy2), True, dash)
        elif iy1 == iy2:
            self._run(iy1, min(ix1, ix2), max(ix1, ix2), False, dash)
        else:
            raise RenderError("only axis-aligned strokes are drawn")

    def dash_rect(self, x: float, y: float, w: float, h: float, dash: tuple[int, int]) -> None:
        ix0, iy0 = _ipx(x), _ipx(y)
        ix1, iy1 = _ipx(x + w) - 1, _ipx(y + h) - 1
        if ix1 < ix0 or iy1 < iy0:
            return
        self._run(iy0, ix0, ix1, False, dash)
        self._run(iy1, ix0, ix1, False, dash)
        self._run(ix0, iy0, iy1, True, dash)
        self._run(ix1, iy0, iy1, True, dash)


def render_raster(scene: Scene, cfg: RenderConfig = DEFAULT_CONFIG) -> Raster:
    """Rasterize with integer scanline fills and no anti-aliasing."""
    width, height = _canvas_size(scene, cfg)
    if width * height > _MAX_RASTER_PIXELS:
        raise RenderError(f"raster of {width}x{height} exceeds the size cap")
    canvas = _Canvas(width, height, cfg.background, cfg.ink)
    glyph_w = cfg.glyph_w_px
    for op in _layout(scene, cfg):
        if isinstance(op, _FillRect):
            canvas.fill_rect(op.x, op.y, op.w, op.h)
        elif isinstance(op, _DashRect):
            canvas.dash_rect(op.x, op.y, op.w, op.h, cfg.dash_pattern)
        elif isinstance(op, _Line):
            canvas.line(op.x1, op.y1, op.x2, op.y2, cfg.dash_pattern if op.dashed else None)
        elif isinstance(op, _Polyline):
            for (ax, ay), (bx, by) in zip(op.points, op.points[1:]):
                canvas.line(ax, ay, bx, by, None)
        elif isinstance(op, _Text):
            box_w = len(op.text) * glyph_w
            if op.anchor == "end":
                x0 = op.x - box_w
            elif op.anchor == "middle":
                x0 = op.x - box_w / 2
            else:
                x0 = op.x
            canvas.fill_rect(x0, op.baseline - cfg.glyph_h_px, box_w, cfg.glyph_h_px)
    return Raster(width, height, canvas.pixels)


# ---------------------------------------------------------------------------
# GeoGebra backend


def _ggb_num(value: float) -> str:
    return format_number(round(value, 6))


def _ggb_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _seg_name(row: int, index: int) -> str:
    row_part = f"m{-row}" if row < 0 else str(row)
    return f"seg{row_part}_{index}"


def export_geogebra(scene: Scene) -> str:
    """A command script in grid units with rows on ``y = -row``.

    Dashed segments are named so a following ``SetLineStyle`` can restyle
    them; braces become a span segment plus an outward tick and a
    ``Text`` placed beside the midpoint.
    """
    lines: list[str] = []
    for row in sorted(scene.rows):
        bar = scene.rows[row]
        y = -row
        for index, span in enumerate(bar.segments):
            seg = (
                f"Segment(({_ggb_num(span.start_x)},{y}),({_ggb_num(span.end_x)},{y}))"
            )
            if span.style is SegmentStyle.DASHED:
                name = _seg_name(row, index)
                lines.append(f"{name} = {seg}")
                lines.append(f"SetLineStyle({name}, 1)")
            else:
                lines.append(seg)
    for link in scene.links:
        lines.append(
            f"Segment(({_ggb_num(link.x)},{-link.row0}),({_ggb_num(link.x)},{-link.row1}))"
        )
    for hb in scene.hbraces:
        mx = (hb.x0 + hb.x1) / 2
        if hb.side == "N":
            yh, tip, ty = -hb.row + 0.3, -hb.row + 0.45, -hb.row + 0.6
        else:
            yh, tip, ty = -hb.row - 0.3, -hb.row - 0.45, -hb.row - 0.6
        lines.append(
            f"Segment(({_ggb_num(hb.x0)},{_ggb_num(yh)}),({_ggb_num(hb.x1)},{_ggb_num(yh)}))"
        )
        lines.append(f"Segment(({_ggb_num(mx)},{_ggb_num(yh)}),({_ggb_num(mx)},{_ggb_num(tip)}))")
        lines.append(f'Text("{_ggb_escape(hb.label)}",({_ggb_num(mx)},{_ggb_num(ty)}))')
    for vb in scene.vbraces:
        my = (-vb.row0 + -vb.row1) / 2
        lines.append(
            f"Segment(({_ggb_num(vb.col)},{-vb.row0}),({_ggb_num(vb.col)},{-vb.row1}))"
        )
        lines.append(
            f"Segment(({_ggb_num(vb.col)},{_ggb_num(my)}),({_ggb_num(vb.col + 0.15)},{_ggb_num(my)}))"
        )
        lines.append(
            f'Text("{_ggb_escape(vb.label)}",({_ggb_num(vb.col + 0.3)},{_ggb_num(my)}))'
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Bundles


@dataclass(frozen=True)
class RenderOutput:
    svg: str
    raster: Raster
    geogebra: str


def render_all(scene: Scene, cfg: RenderConfig = DEFAULT_CONFIG) -> RenderOutput:
    return RenderOutput(render_svg(scene, cfg), render_raster(scene, cfg), export_geogebra(scene))

"""Bar-model diagram toolkit: a small drawing DSL with a parser, structural
verifier, deterministic renderers, similarity metrics, corpus utilities, a
model judge, and a two-stage drafting loop."""

from .dsl import (
    EPS,
    Compare,
    ExpansionError,
    HorizontalBrace,
    HorizontalLine,
    ParseError,
    ParseErrorKind,
    Program,
    VerticalBrace,
    VerticalLink,
    canonical_print,
    expand_macros,
    parse,
)
from .metrics import ScoreReport, bleu, chrf, composite, psnr, rouge_l, score_pair, ssim
from .render import (
    DEFAULT_CONFIG,
    Raster,
    RenderConfig,
    export_geogebra,
    render_all,
    render_raster,
    render_svg,
)
from .scene import Scene, SceneError, build_scene
from .verify import (
    Difficulty,
    Dimensions,
    ProblemMeta,
    Schema,
    VerificationReport,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CONFIG",
    "EPS",
    "Compare",
    "Difficulty",
    "Dimensions",
    "ExpansionError",
    "HorizontalBrace",
    "HorizontalLine",
    "ParseError",
    "ParseErrorKind",
    "ProblemMeta",
    "Program",
    "Raster",
    "RenderConfig",
    "Scene",
    "SceneError",
    "Schema",
    "ScoreReport",
    "VerificationReport",
    "VerticalBrace",
    "VerticalLink",
    "bleu",
    "build_scene",
    "canonical_print",
    "chrf",
    "composite",
    "expand_macros",
    "export_geogebra",
    "parse",
    "psnr",
    "render_all",
    "render_raster",
    "render_svg",
    "rouge_l",
    "score_pair",
    "ssim",
    "verify",
]

"""Similarity metrics over canonical DSL text and rendered rasters.

Text metrics (all scaled to 0..100):

* :func:`chrf` — character n-gram F-score, orders 1..6, recall weight
  beta = 2, whitespace stripped before counting.
* :func:`bleu` — token 4-gram precision with add-one smoothing applied to
  any order whose raw match count is zero, geometric mean, and a brevity
  penalty ``exp(1 - ref/cand)`` for short candidates.
* :func:`rouge_l` — F1 over the token-level longest common subsequence.

Image metrics compare grayscale rasters padded with background (255) to
the union of their dimensions, anchored top-left:

* :func:`ssim` — mean structural similarity over an 11x11 Gaussian window
  (sigma 1.5), stabilizers C1 = (0.01*255)^2 and C2 = (0.03*255)^2,
  clamped to [0, 100].
* :func:`psnr` — 10*log10(255^2 / MSE) in dB, capped at 99.0, which is
  also the value reported for identical images.

:func:`composite` is the overall quality number: the mean of chrF, SSIM,
and ``judge_avg`` (100 times the mean of the five judged dimensions).  A
perceptual-embedding distance is deliberately not computed here; the
``lpips`` slot exists so report layouts line up and always reads NA.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dsl import Program, canonical_print, expand_macros
from .render import DEFAULT_CONFIG, Raster, RenderConfig, render_raster
from .scene import build_scene
from .verify import Dimensions, ProblemMeta, verify

__all__ = [
    "MissingComponent",
    "ScoreReport",
    "ScoringError",
    "bleu",
    "chrf",
    "composite",
    "psnr",
    "rouge_l",
    "score_pair",
    "ssim",
    "summarize",
    "to_csv",
]

PSNR_CAP = 99.0

_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2
_WINDOW = 11
_SIGMA = 1.5


class MissingComponent(Exception):
    """A composite score was requested with an ingredient absent."""


class ScoringError(Exception):
    """A stage of :func:`score_pair` failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# Text metrics


def _ngrams(seq: Sequence, n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def chrf(candidate: str, reference: str) -> float:
    cand = "".join(candidate.split())
    ref = "".join(reference.split())
    if not cand or not ref:
        return 0.0
    precisions: list[float] = []
    recalls: list[float] = []
    for n in range(1, 7):
        cand_grams = _ngrams(cand, n)
        ref_grams = _ngrams(ref, n)
        matches = sum(min(count, ref_grams[g]) for g, count in cand_grams.items())
        cand_total = sum(cand_grams.values())
        ref_total = sum(ref_grams.values())
        if cand_total:
            precisions.append(matches / cand_total)
        if ref_total:
            recalls.append(matches / ref_total)
    if not precisions or not recalls:
        return 0.0
    p = sum(precisions) / len(precisions)
    r = sum(recalls) / len(recalls)
    beta_sq = 4.0
    if beta_sq * p + r == 0.0:
        return 0.0
    return 100.0 * (1.0 + beta_sq) * p * r / (beta_sq * p + r)


def bleu(candidate: str, reference: str) -> float:
    cand = candidate.split()
    ref = reference.split()
    if not cand or not ref:
        return 0.0
    product = 1.0
    for n in range(1, 5):
        cand_grams = _ngrams(cand, n)
        ref_grams = _ngrams(ref, n)
        matches = sum(min(count, ref_grams[g]) for g, count in cand_grams.items())
        total = sum(cand_grams.values())
        if matches == 0:
            product *= (matches + 1) / (total + 1)
        else:
            product *= matches / total
    geo = product ** 0.25
    penalty = math.exp(1.0 - len(ref) / len(cand)) if len(cand) < len(ref) else 1.0
    return 100.0 * penalty * geo


def _lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for item_a in a:
        current = [0] * (len(b) + 1)
        for j, item_b in enumerate(b, start=1):
            if item_a == item_b:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge_l(candidate: str, reference: str) -> float:
    cand = candidate.split()
    ref = reference.split()
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 100.0 * 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Image metrics


def _to_array(image: Raster | np.ndarray) -> np.ndarray:
    if isinstance(image, Raster):
        return np.frombuffer(bytes(image.pixels), dtype=np.uint8).reshape(
            image.height, image.width
        ).astype(np.float64)
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d grayscale image, got shape {arr.shape}")
    return arr


def _pad_to_union(a: np.ndarray, b: np.ndarray, background: float = 255.0) -> tuple[np.ndarray, np.ndarray]:
    height = max(a.shape[0], b.shape[0])
    width = max(a.shape[1], b.shape[1])

    def pad(img: np.ndarray) -> np.ndarray:
        if img.shape == (height, width):
            return img
        out = np.full((height, width), background, dtype=np.float64)
        out[: img.shape[0], : img.shape[1]] = img
        return out

    return pad(a), pad(b)


def _gaussian_1d(size: int = _WINDOW, sigma: float = _SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Separable weighted mean over every fully interior window.
    out = sliding_window_view(img, len(kernel), axis=1) @ kernel
    out = sliding_window_view(out, len(kernel), axis=0) @ kernel
    return out


def ssim(image_a: Raster | np.ndarray, image_b: Raster | np.ndarray) -> float:
    a, b = _pad_to_union(_to_array(image_a), _to_array(image_b))
    if min(a.shape) < _WINDOW:
        # Degenerate canvas: one uniform window over the whole image.
        mu_a, mu_b = a.mean(), b.mean()
        var_a = (a * a).mean() - mu_a * mu_a
        var_b = (b * b).mean() - mu_b * mu_b
        cov = (a * b).mean() - mu_a * mu_b
        value = ((2 * mu_a * mu_b + _C1) * (2 * cov + _C2)) / (
            (mu_a * mu_a + mu_b * mu_b + _C1) * (var_a + var_b + _C2)
        )
        return float(min(100.0, max(0.0, 100.0 * value)))
    kernel = _gaussian_1d()
    mu_a = _filter_valid(a, kernel)
    mu_b = _filter_valid(b, kernel)
    var_a = _filter_valid(a * a, kernel) - mu_a * mu_a
    var_b = _filter_valid(b * b, kernel) - mu_b * mu_b
    cov = _filter_valid(a * b, kernel) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + _C1) * (2 * cov + _C2)) / (
        (mu_a * mu_a + mu_b * mu_b + _C1) * (var_a + var_b + _C2)
    )
    return float(min(100.0, max(0.0, 100.0 * smap.mean())))


def psnr(image_a: Raster | np.ndarray, image_b: Raster | np.ndarray) -> float:
    a, b = _pad_to_union(_to_array(image_a), _to_array(image_b))
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0**2 / mse))


# ---------------------------------------------------------------------------
# Composite scoring


@dataclass
class ScoreReport:
    bleu: float | None = None
    rouge_l: float | None = None
    chrf: float | None = None
    ssim: float | None = None
    psnr: float | None = None
    lpips: None = None  # not computed; serialized as NA
    dims: Dimensions | None = None
    judge_avg: float | None = None
    composite: float | None = None

    def as_dict(self) -> dict:
        out: dict = {
            "bleu": self.bleu,
            "rouge_l": self.rouge_l,
            "chrf": self.chrf,
            "lpips": "NA",
            "ssim": self.ssim,
            "psnr": self.psnr,
        }
        if self.dims is not None:
            out.update(self.dims.as_dict())
        out["judge_avg"] = self.judge_avg
        out["composite"] = self.composite
        return out


def composite(report: ScoreReport) -> float:
    """Mean of chrF, SSIM, and the judged-dimension average."""
    missing = [
        name
        for name, value in (
            ("chrf", report.chrf),
            ("ssim", report.ssim),
            ("judge_avg", report.judge_avg),
        )
        if value is None
    ]
    if missing:
        raise MissingComponent(f"composite needs {', '.join(missing)}")
    return (report.chrf + report.ssim + report.judge_avg) / 3.0


DimsProvider = Callable[[Program, ProblemMeta | None], Dimensions]


def score_pair(
    candidate: Program,
    reference: Program,
    meta: ProblemMeta | None = None,
    cfg: RenderConfig = DEFAULT_CONFIG,
    dims_from: DimsProvider | None = None,
) -> ScoreReport:
    """Score a candidate program against a reference.

    Text metrics run over canonical prints, image metrics over default
    rasters, and the five quality dimensions come from the rule-based
    verifier unless ``dims_from`` (for example a judge adapter) is given.
    Failures surface as :class:`ScoringError` naming the stage.
    """

    def stage(name: str, thunk: Callable):
        try:
            return thunk()
        except Exception as exc:  # noqa: BLE001 - rewrapped with stage context
            raise ScoringError(name, exc) from exc

    candidate = stage("candidate-expand", lambda: expand_macros(candidate))
    reference = stage("reference-expand", lambda: expand_macros(reference))
    cand_text = canonical_print(candidate)
    ref_text = canonical_print(reference)
    if dims_from is None:
        dims = stage("candidate-verify", lambda: verify(candidate, meta)).dims
    else:
        dims = stage("candidate-judge", lambda: dims_from(candidate, meta))
    cand_raster = stage("candidate-render", lambda: render_raster(build_scene(candidate), cfg))
    ref_raster = stage("reference-render", lambda: render_raster(build_scene(reference), cfg))

    report = ScoreReport(
        bleu=bleu(cand_text, ref_text),
        rouge_l=rouge_l(cand_text, ref_text),
        chrf=chrf(cand_text, ref_text),
        ssim=ssim(cand_raster, ref_raster),
        psnr=psnr(cand_raster, ref_raster),
        dims=dims,
        judge_avg=100.0 * dims.mean(),
    )
    report.composite = composite(report)
    return report


# ---------------------------------------------------------------------------
# Corpus summaries

_CSV_COLUMNS = (
    "bleu",
    "rouge_l",
    "chrf",
    "lpips",
    "ssim",
    "psnr",
    "align",
    "cover",
    "num",
    "norm",
    "leak",
    "judge_avg",
    "composite",
)


def summarize(reports: Iterable[ScoreReport]) -> dict:
    """Per-metric means in the standard column layout; dims averaged too."""
    reports = list(reports)
    if not reports:
        raise MissingComponent("no reports to summarize")

    def mean(values: list[float]) -> float:
        return sum(values) / len(values)

    out: dict = {
        "count": len(reports),
        "bleu": mean([r.bleu for r in reports]),
        "rouge_l": mean([r.rouge_l for r in reports]),
        "chrf": mean([r.chrf for r in reports]),
        "lpips": "NA",
        "ssim": mean([r.ssim for r in reports]),
        "psnr": mean([r.psnr for r in reports]),
    }
    for dim in ("align", "cover", "num", "norm", "leak"):
        out[dim] = mean([getattr(r.dims, dim) for r in reports])
    out["judge_avg"] = mean([r.judge_avg for r in reports])
    out["composite"] = mean([r.composite for r in reports])
    return out


def to_csv(rows: Iterable[tuple[str, ScoreReport]]) -> str:
    """CSV export, one line per (id, report); LPIPS always NA."""
    lines = ["id," + ",".join(_CSV_COLUMNS)]
    for row_id, report in rows:
        record = report.as_dict()
        cells = [row_id]
        for column in _CSV_COLUMNS:
            value = record.get(column)
            cells.append(value if isinstance(value, str) else f"{value:.4f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"

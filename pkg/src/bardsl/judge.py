"""Model-graded review of a draft diagram against its word problem.

The judge sends one chat completion per instance at temperature 0 with a
fixed system preamble, then parses the reply into ten criterion verdicts
and a final score.  The reply must list every criterion as::

    (<number>) <name>: [PASS|FAIL] - <one-line justification>

inside a ``[Scoring Rationale]`` section, and end with a line::

    [Final Score]: <float>

Criteria 1..6 map onto the critical checks C1..C6 of the rule-based
verifier and criteria 7..10 onto the lints N1..N4, so judged verdicts and
rule-based reports share one vocabulary.  The parser tolerates reordered
criteria (it keys on the number) and re-derives the score from the
verdicts: any critical failure means 0.0, otherwise 1.0 minus 0.1 per
failed non-critical criterion.  A stated score that disagrees with the
derived one is rejected, which catches models that rationalize one number
and report another.

Two transports exist: ``LIVE`` posts to an OpenAI-style chat endpoint with
exponential backoff on transport and timeout failures only, and ``STUB``
replays transcripts from a fixture directory keyed by instance id, which
keeps every test offline and deterministic.
"""

from __future__ import annotations

import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import requests

from .corpus import Instance
from .dsl import Program, canonical_print
from .verify import Dimensions

__all__ = [
    "CRITERION_IDS",
    "CriterionVerdict",
    "JudgeConfig",
    "JudgeError",
    "JudgeErrorKind",
    "JudgeMode",
    "JudgeVerdict",
    "SYSTEM_PREAMBLE",
    "build_prompt",
    "build_request",
    "judge",
    "judge_batch",
    "judge_dims",
    "parse_response",
]

# Criterion number (1-based) -> shared check id.
CRITERION_IDS = ("C1", "C2", "C3", "C4", "C5", "C6", "N1", "N2", "N3", "N4")
_CRITICAL = frozenset(CRITERION_IDS[:6])

SYSTEM_PREAMBLE = (
    "You are a meticulous grader of bar-model diagrams. You follow the "
    "scoring instructions exactly and never award partial credit outside "
    "the stated rubric."
)

_PROMPT_TEMPLATE = """Review the bar-model program below against its word problem.
The drawing language: HL "name" row len... draws a bar split into segments
(positive solid, negative dashed); VL x r0 r1 is a vertical link across rows;
HB "label" N|S row x0 x1 braces [x0,x1] above or below a row; VB "label" col r0 r1
braces rows r0..r1. Only quoted strings are visible text; bare numbers in the
code are coordinates, not labels. Judge the program as written; do not repair it.

Mark each criterion [PASS] or [FAIL] with a one-line justification.

Critical criteria (any failure scores 0.0):
(1) Alignment: every brace endpoint and vertical link lies exactly on a segment
    boundary of each bar it touches.
(2) Completeness: every given quantity of the problem is visible in some label,
    and the queried quantity is marked with "?".
(3) Numeric consistency: labelled sizes agree with the drawn geometry.
(4) Transfer encoding: any moved amount appears as a dashed removal on one row
    and an equal solid addition at the end of another, joined by a link at a
    shared boundary.
(5) Answer leakage: no label states the final answer.
(6) Brace and link usage: vertical braces aggregate at least two bar rows, and
    vertical links mark boundaries shared by at least two spanned bars.

Non-critical criteria (each failure deducts 0.1 when all critical pass):
(7) Reduction convention: solid segments precede dashed ones in a bar.
(8) Multiplicative structure: a row of repeated unit segments sits below its
    single-unit base row.
(9) Decomposition: bars are split into meaningful parts, not one opaque block.
(10) Label conciseness: labels stay short and contain no embedded calculation.

Score 0.0 if any critical criterion fails, otherwise 1.0 minus 0.1 per failed
non-critical criterion.

Respond with a [Scoring Rationale] section listing all ten criteria as
(<number>) <name>: [PASS|FAIL] - <justification>
followed by one final line exactly of the form
[Final Score]: <score>

Problem:
{problem}

Program:
{dsl}
"""


class JudgeMode(Enum):
    LIVE = "live"
    STUB = "stub"


class JudgeErrorKind(Enum):
    TRANSPORT = "Transport"
    TIMEOUT = "Timeout"
    MALFORMED_RESPONSE = "MalformedResponse"
    INCONSISTENT_SCORE = "InconsistentScore"


class JudgeError(Exception):
    def __init__(self, kind: JudgeErrorKind, message: str):
        super().__init__(f"{kind.value}: {message}")
        self.kind = kind
        self.message = message


@dataclass(frozen=True)
class JudgeConfig:
    mode: JudgeMode = JudgeMode.STUB
    fixtures_dir: str | Path | None = None
    endpoint_url: str | None = None
    model: str | None = None
    api_key_env: str = "BARDSL_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 0.5
    concurrency: int = 4


@dataclass(frozen=True)
class CriterionVerdict:
    check_id: str
    passed: bool
    justification: str


@dataclass(frozen=True)
class JudgeVerdict:
    per_criterion: dict[str, CriterionVerdict]
    final_score: float
    raw_response: str = field(compare=False, default="")


def build_prompt(problem: str, dsl_text: str) -> str:
    return _PROMPT_TEMPLATE.format(problem=problem, dsl=dsl_text)


def build_request(cfg: JudgeConfig, problem: str, dsl_text: str) -> dict:
    """The exact POST body; identical inputs give an identical payload."""
    return {
        "model": cfg.model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": SYSTEM_PREAMBLE},
            {"role": "user", "content": build_prompt(problem, dsl_text)},
        ],
    }


_CRITERION_RE = re.compile(
    r"^\s*\((\d+)\)\s*(?P<name>[^:\[\]]*?)\s*:?\s*\[(?P<verdict>PASS|FAIL)\]\s*-?\s*(?P<why>.*)$"
)
_FINAL_RE = re.compile(r"\[Final Score\]\s*:\s*(-?[0-9]+(?:\.[0-9]+)?)")


def _derived_score(per_criterion: dict[str, CriterionVerdict]) -> float:
    if any(not v.passed for cid, v in per_criterion.items() if cid in _CRITICAL):
        return 0.0
    failed = sum(1 for cid, v in per_criterion.items() if cid not in _CRITICAL and not v.passed)
    return round(1.0 - 0.1 * failed, 1)


def parse_response(text: str) -> JudgeVerdict:
    """Parse a judge reply; raises :class:`JudgeError` on a missing final
    score or on a stated score the verdicts do not support."""
    per_criterion: dict[str, CriterionVerdict] = {}
    for line in text.splitlines():
        match = _CRITERION_RE.match(line)
        if not match:
            continue
        number = int(match.group(1))
        if not 1 <= number <= len(CRITERION_IDS):
            continue
        check_id = CRITERION_IDS[number - 1]
        per_criterion[check_id] = CriterionVerdict(
            check_id, match.group("verdict") == "PASS", match.group("why").strip()
        )
    final = _FINAL_RE.search(text)
    if final is None:
        raise JudgeError(JudgeErrorKind.MALFORMED_RESPONSE, "no final score line")
    stated = float(final.group(1))
    derived = _derived_score(per_criterion)
    if abs(stated - derived) > 1e-6:
        raise JudgeError(
            JudgeErrorKind.INCONSISTENT_SCORE,
            f"stated {stated} but verdicts imply {derived}",
        )
    return JudgeVerdict(per_criterion, stated, text)


def judge_dims(verdict: JudgeVerdict) -> Dimensions:
    """Project criterion verdicts onto the five scoring dimensions."""

    def passed(check_id: str) -> bool:
        entry = verdict.per_criterion.get(check_id)
        return entry.passed if entry is not None else True

    norm_fails = sum(0 if passed(cid) else 1 for cid in ("C4", "C6", "N1", "N2"))
    return Dimensions(
        align=1.0 if passed("C1") else 0.0,
        cover=1.0 if passed("C2") else 0.0,
        num=1.0 if passed("C3") else 0.0,
        norm=1.0 - 0.25 * norm_fails,
        leak=1.0 if passed("C5") else 0.0,
    )


# ---------------------------------------------------------------------------
# Transports


def _stub_response(cfg: JudgeConfig, instance_id: str) -> str:
    if cfg.fixtures_dir is None:
        raise JudgeError(JudgeErrorKind.TRANSPORT, "stub mode needs a fixture directory")
    path = Path(cfg.fixtures_dir) / f"{instance_id}.txt"
    if not path.is_file():
        raise JudgeError(JudgeErrorKind.TRANSPORT, f"no stub transcript for {instance_id!r}")
    return path.read_text(encoding="utf-8")


def _live_response(cfg: JudgeConfig, payload: dict) -> str:
    if cfg.endpoint_url is None:
        raise JudgeError(JudgeErrorKind.TRANSPORT, "live mode needs an endpoint url")
    headers = {}
    api_key = os.environ.get(cfg.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last: JudgeError | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt:
            time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
        try:
            response = requests.post(
                cfg.endpoint_url, json=payload, headers=headers, timeout=cfg.timeout_s
            )
        except requests.Timeout:
            last = JudgeError(JudgeErrorKind.TIMEOUT, "request timed out")
            continue
        except requests.RequestException as exc:
            last = JudgeError(JudgeErrorKind.TRANSPORT, str(exc))
            continue
        if response.status_code >= 500:
            last = JudgeError(JudgeErrorKind.TRANSPORT, f"server error {response.status_code}")
            continue
        if response.status_code != 200:
            raise JudgeError(JudgeErrorKind.TRANSPORT, f"http {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise JudgeError(JudgeErrorKind.TRANSPORT, f"unexpected body: {exc}") from exc
    assert last is not None
    raise last


def judge(instance: Instance, candidate: Program | str, cfg: JudgeConfig) -> JudgeVerdict:
    """Grade one candidate program for one instance."""
    dsl_text = candidate if isinstance(candidate, str) else canonical_print(candidate)
    if cfg.mode is JudgeMode.STUB:
        raw = _stub_response(cfg, instance.id)
    else:
        raw = _live_response(cfg, build_request(cfg, instance.problem, dsl_text))
    return parse_response(raw)


def judge_batch(
    pairs: list[tuple[Instance, Program | str]], cfg: JudgeConfig
) -> list[JudgeVerdict | JudgeError]:
    """Grade many candidates with bounded concurrency; errors are returned
    in place rather than raised, so one bad instance cannot sink a run."""

    def one(pair: tuple[Instance, Program | str]) -> JudgeVerdict | JudgeError:
        try:
            return judge(pair[0], pair[1], cfg)
        except JudgeError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, cfg.concurrency)) as pool:
        return list(pool.map(one, pairs))

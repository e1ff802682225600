"""Two-stage draft-then-solve loop around a chat model.

Stage 1 asks the model to explain the problem and emit a diagram program
in a fenced ``dsl`` block.  The block is parsed, macro-expanded, and
verified; on a syntax failure or any critical diagnostic the model is
re-prompted with the diagnostics, up to ``max_repairs`` times.  Stage 2
feeds the accepted draft back as a scaffold and asks for a refined
explanation, a final program, and a terminal ``Answer: <value>`` line.

A final guard reruns the leakage check against the model's own stated
answer, so a solution that was clean while the answer was unknown still
fails if the final program spells the answer out.

Adapters supply the model: :class:`ScriptedAdapter` replays a response
queue first-in-first-out (all tests run on it, fully offline), and
:class:`HttpAdapter` posts to an OpenAI-style chat endpoint.  Every
structure the loop produces is recorded in a :class:`DraftTrace`, so a
run can be audited or re-verified after the fact.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import requests

from .corpus import Instance
from .dsl import (
    ExpansionError,
    ParseError,
    Program,
    canonical_print,
    expand_macros,
    parse,
)
from .render import RenderOutput, render_all
from .scene import SceneError, build_scene, dump_scene
from .verify import (
    Dimensions,
    ProblemMeta,
    Severity,
    VerificationReport,
    check_leakage,
    report_json,
    report_text,
    rubric_score,
    verify,
)

__all__ = [
    "AdapterError",
    "AdapterExhausted",
    "Attempt",
    "DraftTrace",
    "HttpAdapter",
    "LoopError",
    "MalformedStage2",
    "ModelAdapter",
    "ScriptedAdapter",
    "TwdResult",
    "extract_dsl_block",
    "leakage_guard",
    "persist_trace",
    "run_instance",
    "run_stage1",
    "run_stage2",
    "trace_to_json",
]


class ModelAdapter(Protocol):
    def complete(self, prompt: str, image_ref: str | None = None) -> str: ...


class AdapterError(Exception):
    """Transport failure inside an adapter."""


class AdapterExhausted(AdapterError):
    """A scripted adapter ran out of queued responses."""


class ScriptedAdapter:
    """Replays canned responses in order; deterministic by construction."""

    def __init__(self, responses: list[str]):
        self._queue = list(responses)
        self.prompts: list[str] = []

    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        self.prompts.append(prompt)
        if not self._queue:
            raise AdapterExhausted("scripted adapter has no responses left")
        return self._queue.pop(0)

    def remaining(self) -> int:
        return len(self._queue)


class HttpAdapter:
    """Chat-completion transport with retries on timeouts and 5xx."""

    def __init__(
        self,
        endpoint_url: str,
        model: str | None = None,
        api_key_env: str = "BARDSL_API_KEY",
        timeout_s: float = 60.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
    ):
        self.endpoint_url = endpoint_url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s

    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        content: object = prompt
        if image_ref:
            content = [
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {"url": image_ref}},
            ]
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        }
        headers = {}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    self.endpoint_url, json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last = exc
                continue
            if response.status_code >= 500:
                last = AdapterError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise AdapterError(f"http {response.status_code}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise AdapterError(f"unexpected body: {exc}") from exc
        raise AdapterError(f"gave up after {self.max_retries + 1} tries: {last}")


# ---------------------------------------------------------------------------
# Traces


@dataclass
class Attempt:
    response: str
    explanation: str
    draft_text: str | None
    program: Program | None
    failure: str | None
    verification: VerificationReport | None
    render: RenderOutput | None = None


@dataclass
class DraftTrace:
    instance_id: str
    attempts: list[Attempt] = field(default_factory=list)
    final_answer: str | None = None
    stage2_explanation: str | None = None
    stage2_draft: Program | None = None
    stage2_verification: VerificationReport | None = None
    stage2_render: RenderOutput | None = None

    def best_attempt(self) -> Attempt | None:
        for attempt in reversed(self.attempts):
            if attempt.program is not None:
                return attempt
        return None


class LoopError(Exception):
    """The loop gave up; the partial trace rides along for inspection."""

    def __init__(self, message: str, trace: DraftTrace):
        super().__init__(message)
        self.trace = trace


class MalformedStage2(Exception):
    """The stage-2 reply lacks a required part (answer line or program)."""


@dataclass
class TwdResult:
    trace: DraftTrace
    guard: VerificationReport


# ---------------------------------------------------------------------------
# Prompts

STAGE1_TEMPLATE = """Draw a bar-model diagram for the word problem using this line-oriented language:

  HL "name" row len1 len2 ...   a bar on a row, split into segments; positive lengths
                                are solid, negative are dashed, magnitude is the size
  VL x row0 row1                a vertical link marking a boundary shared across rows
  HB "label" N|S row x0 x1      a horizontal brace over [x0, x1], N above or S below
  VB "label" col row0 row1      a vertical brace aggregating rows row0..row1

Construction rules:
- Put each quantity on its own row, row 0 at the top; bars start at x = 0.
- Split bars into meaningful segments; solid parts come before dashed parts.
- Draw a removed or moved amount dashed on the giving row and solid at the end of
  the receiving row, with a VL at the boundary where the rows agree.
- Make every given quantity visible in a label and mark the asked quantity with "?".
- Keep labels short; never write the final answer in any label.
- Brace endpoints and links must land exactly on segment boundaries.

First explain how the problem maps onto rows and segments in a few sentences, then
give the program in a fenced code block tagged dsl.

Problem:
{problem}
"""

REPAIR_TEMPLATE = """Your draft failed verification.

Diagnostics:
{diagnostics}

Revise the program to fix every finding while keeping the correct parts unchanged.
Reply with a short note on what you changed, then the full corrected program in a
fenced code block tagged dsl.
"""

STAGE2_TEMPLATE = """You drafted this diagram for the problem below.

Your analysis:
{explanation}

Your draft:
```dsl
{draft}```
{render_section}
Re-read the problem and use the draft as your worked scaffold. Reply with a refined
explanation of the solution, the final program in a fenced code block tagged dsl,
and end with one line exactly of the form
Answer: <number>

Problem:
{problem}
"""

_FENCE_RE = re.compile(r"```([A-Za-z0-9_-]*)[ \t]*\r?\n(.*?)```", re.DOTALL)
_ANSWER_RE = re.compile(r"^[ \t]*Answer:[ \t]*(?P<value>.+?)[ \t]*$", re.MULTILINE)


def extract_dsl_block(text: str) -> tuple[str | None, str]:
    """First ``dsl``-tagged fenced block (or first block at all) plus the
    remaining text."""
    matches = list(_FENCE_RE.finditer(text))
    chosen = None
    for match in matches:
        if match.group(1).lower() == "dsl":
            chosen = match
            break
    if chosen is None and matches:
        chosen = matches[0]
    if chosen is None:
        return None, text
    rest = text[: chosen.start()] + text[chosen.end() :]
    return chosen.group(2), rest


def _has_critical(report: VerificationReport | None) -> bool:
    if report is None:
        return True
    return any(d.severity is Severity.CRITICAL for d in report.diagnostics)


def _evaluate_response(response: str, meta: ProblemMeta | None) -> Attempt:
    block, rest = extract_dsl_block(response)
    attempt = Attempt(
        response=response,
        explanation=rest.strip(),
        draft_text=block,
        program=None,
        failure=None,
        verification=None,
    )
    if block is None:
        attempt.failure = "no fenced dsl block in response"
        return attempt
    try:
        program = expand_macros(parse(block))
        attempt.program = program
        attempt.verification = verify(program, meta)
        attempt.render = render_all(build_scene(program))
    except (ParseError, ExpansionError, SceneError) as exc:
        attempt.failure = str(exc)
        attempt.program = None
        attempt.verification = None
    return attempt


def run_stage1(
    instance: Instance, adapter: ModelAdapter, max_repairs: int = 2
) -> DraftTrace:
    """Draft and repair until a draft verifies with no critical findings or
    the repair budget runs out.  Raises :class:`LoopError` when not one
    attempt even parsed."""
    prompt = STAGE1_TEMPLATE.format(problem=instance.problem)
    trace = DraftTrace(instance.id)
    for round_no in range(max_repairs + 1):
        response = adapter.complete(prompt, instance.image_path)
        attempt = _evaluate_response(response, instance.meta)
        trace.attempts.append(attempt)
        if attempt.program is not None and not _has_critical(attempt.verification):
            return trace
        if round_no < max_repairs:
            diagnostics = (
                attempt.failure
                if attempt.failure is not None
                else report_text(attempt.verification)
            )
            prompt = REPAIR_TEMPLATE.format(diagnostics=diagnostics)
    if all(a.program is None for a in trace.attempts):
        raise LoopError("every attempt failed to parse", trace)
    return trace


def run_stage2(
    trace: DraftTrace,
    instance: Instance,
    adapter: ModelAdapter,
    feed_render: bool = False,
) -> DraftTrace:
    """Solve on top of the accepted draft; requires a terminal answer line.

    With ``feed_render`` the prompt also carries a structural dump of the
    rendered draft (off by default)."""
    base = trace.best_attempt()
    if base is None:
        raise LoopError("stage 1 produced no parsed draft", trace)
    render_section = ""
    if feed_render:
        dump = dump_scene(build_scene(base.program))
        render_section = f"\nRendered draft (structural dump):\n{dump}"
    prompt = STAGE2_TEMPLATE.format(
        explanation=base.explanation,
        draft=canonical_print(base.program),
        render_section=render_section,
        problem=instance.problem,
    )
    response = adapter.complete(prompt, instance.image_path)

    answers = _ANSWER_RE.findall(response)
    if not answers:
        raise MalformedStage2("stage-2 reply has no 'Answer:' line")
    block, rest = extract_dsl_block(response)
    if block is None:
        raise MalformedStage2("stage-2 reply has no fenced dsl block")
    try:
        program = expand_macros(parse(block))
        verification = verify(program, instance.meta)
    except (ParseError, ExpansionError, SceneError) as exc:
        raise MalformedStage2(f"stage-2 draft does not verify: {exc}") from exc

    trace.final_answer = answers[-1]
    trace.stage2_explanation = rest.strip()
    trace.stage2_draft = program
    trace.stage2_verification = verification
    trace.stage2_render = render_all(build_scene(program))
    return trace


def leakage_guard(trace: DraftTrace, meta: ProblemMeta | None = None) -> VerificationReport:
    """Recheck the final draft for leakage of the model's own answer."""
    if trace.stage2_draft is None:
        raise LoopError("leakage guard needs a stage-2 draft", trace)
    notes: tuple[str, ...] = ()
    try:
        value = float((trace.final_answer or "").strip())
    except ValueError:
        return VerificationReport(
            diagnostics=(),
            rubric_score=1.0,
            dims=Dimensions(1.0, 1.0, 1.0, 1.0, 1.0),
            notes=("guard skipped: final answer is not numeric",),
        )
    guard_meta = replace(meta if meta is not None else ProblemMeta(), answer=value)
    diags = check_leakage(trace.stage2_draft, guard_meta)
    leaked = bool(diags)
    return VerificationReport(
        diagnostics=tuple(diags),
        rubric_score=rubric_score(diags),
        dims=Dimensions(1.0, 1.0, 1.0, 1.0, 0.0 if leaked else 1.0),
        notes=notes,
    )


def run_instance(
    instance: Instance,
    adapter: ModelAdapter,
    max_repairs: int = 2,
    feed_render: bool = False,
) -> TwdResult:
    """Both stages plus the leakage guard for one instance."""
    trace = run_stage1(instance, adapter, max_repairs)
    trace = run_stage2(trace, instance, adapter, feed_render=feed_render)
    guard = leakage_guard(trace, instance.meta)
    return TwdResult(trace, guard)


# ---------------------------------------------------------------------------
# Persistence


def trace_to_json(trace: DraftTrace) -> dict:
    def attempt_json(attempt: Attempt) -> dict:
        return {
            "explanation": attempt.explanation,
            "draft_text": attempt.draft_text,
            "canonical": None if attempt.program is None else canonical_print(attempt.program),
            "failure": attempt.failure,
            "verification": None
            if attempt.verification is None
            else report_json(attempt.verification),
        }

    return {
        "instance_id": trace.instance_id,
        "attempts": [attempt_json(a) for a in trace.attempts],
        "final_answer": trace.final_answer,
        "stage2_explanation": trace.stage2_explanation,
        "stage2_canonical": None
        if trace.stage2_draft is None
        else canonical_print(trace.stage2_draft),
        "stage2_verification": None
        if trace.stage2_verification is None
        else report_json(trace.stage2_verification),
    }


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def persist_trace(trace: DraftTrace, out_dir: str | Path) -> list[Path]:
    """Write the trace record plus render artifacts of the final draft."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    record = json.dumps(trace_to_json(trace), ensure_ascii=False, indent=2, sort_keys=True)
    path = out / f"{trace.instance_id}.trace.json"
    _atomic_write(path, record.encode("utf-8"))
    written.append(path)

    render = trace.stage2_render
    if render is None:
        best = trace.best_attempt()
        render = best.render if best is not None else None
    if render is not None:
        for suffix, data in (
            (".svg", render.svg.encode("utf-8")),
            (".pgm", render.raster.to_pgm()),
            (".ggb.txt", render.geogebra.encode("utf-8")),
        ):
            path = out / f"{trace.instance_id}{suffix}"
            _atomic_write(path, data)
            written.append(path)
    return written

"""Judge reply parsing, dimension projection, and both transports."""

from __future__ import annotations

import pytest
import requests

import bardsl.judge as judge_module
from bardsl.corpus import Instance, Split
from bardsl.dsl import parse
from bardsl.judge import (
    CRITERION_IDS,
    JudgeConfig,
    JudgeError,
    JudgeErrorKind,
    JudgeMode,
    SYSTEM_PREAMBLE,
    build_prompt,
    build_request,
    judge,
    judge_batch,
    judge_dims,
    parse_response,
)
from bardsl.verify import Dimensions, ProblemMeta
from helpers import transcript, write_transcript


def make_instance(instance_id: str = "t1") -> Instance:
    dsl = 'HL "pens 3 ?" 0 3\n'
    return Instance(
        instance_id,
        "Sam has 3 pens. How many pens in total?",
        None,
        dsl,
        ProblemMeta(givens=("3",)),
        Split.TEST,
        parse(dsl, source_name=instance_id),
    )


# ---------------------------------------------------------------------------
# Reply parsing


def test_all_pass_reply():
    verdict = parse_response(transcript())
    assert verdict.final_score == 1.0
    assert set(verdict.per_criterion) == set(CRITERION_IDS)
    assert verdict.per_criterion["C1"].passed
    assert verdict.per_criterion["C1"].justification == "looks right"


def test_lint_failures_deduct_a_tenth_each():
    assert parse_response(transcript({"N1"})).final_score == 0.9
    assert parse_response(transcript({"N1", "N4"})).final_score == 0.8
    assert parse_response(transcript({"N1", "N2", "N3", "N4"})).final_score == 0.6


def test_any_critical_failure_scores_zero():
    verdict = parse_response(transcript({"C3", "N1"}))
    assert verdict.final_score == 0.0
    assert not verdict.per_criterion["C3"].passed


def test_stated_score_must_match_verdicts():
    with pytest.raises(JudgeError, match="stated 1.0 but verdicts imply 0.9") as excinfo:
        parse_response(transcript({"N1"}, stated=1.0))
    assert excinfo.value.kind is JudgeErrorKind.INCONSISTENT_SCORE
    with pytest.raises(JudgeError):
        parse_response(transcript({"C1"}, stated=0.9))


def test_missing_final_score_line():
    body = "\n".join(transcript().splitlines()[:-1])
    with pytest.raises(JudgeError, match="no final score") as excinfo:
        parse_response(body)
    assert excinfo.value.kind is JudgeErrorKind.MALFORMED_RESPONSE


def test_unlisted_criteria_count_as_passed():
    reply = "(2) Completeness: [FAIL] - given 5 missing\n[Final Score]: 0.0\n"
    verdict = parse_response(reply)
    assert set(verdict.per_criterion) == {"C2"}
    assert verdict.final_score == 0.0


def test_parser_tolerates_loose_formatting():
    reply = (
        "Here is my assessment.\n"
        "  (7)  Reduction convention [FAIL]- solid follows dashed\n"
        "(10) Label conciseness: [PASS] fine\n"
        "(1) Alignment: [PASS] - anchored\n"
        "[Final Score]: 0.9\n"
    )
    verdict = parse_response(reply)
    assert not verdict.per_criterion["N1"].passed
    assert verdict.per_criterion["N1"].justification == "solid follows dashed"
    assert verdict.per_criterion["N4"].passed
    assert verdict.final_score == 0.9


def test_out_of_range_criterion_numbers_are_ignored():
    reply = "(11) Bonus: [FAIL] - n/a\n(0) Meta: [FAIL] - n/a\n[Final Score]: 1.0\n"
    verdict = parse_response(reply)
    assert verdict.per_criterion == {}
    assert verdict.final_score == 1.0


def test_repeated_criterion_keeps_the_last_verdict():
    reply = (
        "(4) Transfer encoding: [FAIL] - first reading\n"
        "(4) Transfer encoding: [PASS] - corrected\n"
        "[Final Score]: 1.0\n"
    )
    assert parse_response(reply).per_criterion["C4"].passed


def test_raw_response_is_kept_but_not_compared():
    text = transcript({"N3"})
    verdict = parse_response(text)
    assert verdict.raw_response == text
    assert verdict == parse_response(text + "End of review.\n")


# ---------------------------------------------------------------------------
# Dimension projection


def test_judge_dims_mapping():
    assert judge_dims(parse_response(transcript())) == Dimensions(1.0, 1.0, 1.0, 1.0, 1.0)
    assert judge_dims(parse_response(transcript({"C1"}))).align == 0.0
    assert judge_dims(parse_response(transcript({"C2"}))).cover == 0.0
    assert judge_dims(parse_response(transcript({"C3"}))).num == 0.0
    assert judge_dims(parse_response(transcript({"C5"}))).leak == 0.0


def test_judge_dims_norm_pools_structure_criteria():
    assert judge_dims(parse_response(transcript({"C4"}))).norm == 0.75
    assert judge_dims(parse_response(transcript({"C4", "N1"}))).norm == 0.5
    assert judge_dims(parse_response(transcript({"C4", "C6", "N1", "N2"}))).norm == 0.0
    # N3 and N4 affect the rubric, not the norm dimension.
    assert judge_dims(parse_response(transcript({"N3", "N4"}))).norm == 1.0


def test_judge_dims_defaults_missing_criteria_to_passed():
    verdict = parse_response("(3) Numeric consistency: [PASS] - ok\n[Final Score]: 1.0\n")
    assert judge_dims(verdict) == Dimensions(1.0, 1.0, 1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# Prompt and request assembly


def test_prompt_embeds_problem_and_program():
    prompt = build_prompt("A rope is 9 m.", 'HL "rope 9" 0 9\n')
    assert "A rope is 9 m." in prompt
    assert 'HL "rope 9" 0 9' in prompt
    assert "[Final Score]" in prompt


def test_build_request_is_deterministic():
    cfg = JudgeConfig(mode=JudgeMode.LIVE, model="grader-1")
    a = build_request(cfg, "p", "d")
    b = build_request(cfg, "p", "d")
    assert a == b
    assert a["temperature"] == 0
    assert a["model"] == "grader-1"
    assert a["messages"][0] == {"role": "system", "content": SYSTEM_PREAMBLE}
    assert a["messages"][1]["role"] == "user"


# ---------------------------------------------------------------------------
# Stub transport


def test_stub_judge_replays_fixture(tmp_path):
    write_transcript(tmp_path, "t1", transcript({"N2"}))
    cfg = JudgeConfig(mode=JudgeMode.STUB, fixtures_dir=tmp_path)
    verdict = judge(make_instance("t1"), 'HL "pens 3 ?" 0 3\n', cfg)
    assert verdict.final_score == 0.9
    assert not verdict.per_criterion["N2"].passed


def test_stub_judge_without_fixture_is_a_transport_error(tmp_path):
    cfg = JudgeConfig(mode=JudgeMode.STUB, fixtures_dir=tmp_path)
    with pytest.raises(JudgeError, match="no stub transcript for 'ghost'") as excinfo:
        judge(make_instance("ghost"), 'HL "a" 0 1\n', cfg)
    assert excinfo.value.kind is JudgeErrorKind.TRANSPORT
    with pytest.raises(JudgeError, match="needs a fixture directory"):
        judge(make_instance("t1"), 'HL "a" 0 1\n', JudgeConfig(mode=JudgeMode.STUB))


def test_judge_accepts_a_program_object(tmp_path):
    write_transcript(tmp_path, "t1", transcript())
    cfg = JudgeConfig(mode=JudgeMode.STUB, fixtures_dir=tmp_path)
    instance = make_instance("t1")
    assert judge(instance, instance.program, cfg).final_score == 1.0


def test_judge_batch_returns_errors_in_place(tmp_path):
    write_transcript(tmp_path, "a", transcript())
    write_transcript(tmp_path, "c", transcript({"N1"}))
    cfg = JudgeConfig(mode=JudgeMode.STUB, fixtures_dir=tmp_path, concurrency=2)
    pairs = [
        (make_instance("a"), 'HL "a" 0 1\n'),
        (make_instance("b"), 'HL "a" 0 1\n'),
        (make_instance("c"), 'HL "a" 0 1\n'),
    ]
    results = judge_batch(pairs, cfg)
    assert results[0].final_score == 1.0
    assert isinstance(results[1], JudgeError)
    assert results[2].final_score == 0.9


# ---------------------------------------------------------------------------
# Live transport


class _Response:
    def __init__(self, status_code: int, body=None):
        self.status_code = status_code
        self._body = body

    def json(self):
        if isinstance(self._body, Exception):
            raise self._body
        return self._body


def _ok_body(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}


class _ScriptedPost:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls: list[dict] = []

    def __call__(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


@pytest.fixture
def live_cfg():
    return JudgeConfig(
        mode=JudgeMode.LIVE,
        endpoint_url="https://judge.invalid/v1/chat",
        model="grader-1",
        max_retries=3,
        backoff_s=0.5,
    )


@pytest.fixture
def sleeps(monkeypatch):
    recorded: list[float] = []
    monkeypatch.setattr(judge_module.time, "sleep", recorded.append)
    return recorded


def test_live_success_sends_bearer_token(monkeypatch, sleeps, live_cfg):
    monkeypatch.setenv("BARDSL_API_KEY", "sk-test")
    post = _ScriptedPost([_Response(200, _ok_body(transcript()))])
    monkeypatch.setattr(judge_module.requests, "post", post)
    verdict = judge(make_instance(), 'HL "pens 3 ?" 0 3\n', live_cfg)
    assert verdict.final_score == 1.0
    call = post.calls[0]
    assert call["url"] == "https://judge.invalid/v1/chat"
    assert call["headers"] == {"Authorization": "Bearer sk-test"}
    assert call["timeout"] == 30.0
    assert call["json"]["model"] == "grader-1"
    assert sleeps == []


def test_live_without_key_sends_no_auth_header(monkeypatch, sleeps, live_cfg):
    monkeypatch.delenv("BARDSL_API_KEY", raising=False)
    post = _ScriptedPost([_Response(200, _ok_body(transcript()))])
    monkeypatch.setattr(judge_module.requests, "post", post)
    judge(make_instance(), 'HL "a" 0 1\n', live_cfg)
    assert post.calls[0]["headers"] == {}


def test_live_retries_server_errors_with_backoff(monkeypatch, sleeps, live_cfg):
    post = _ScriptedPost(
        [_Response(500), _Response(503), _Response(200, _ok_body(transcript({"N4"})))]
    )
    monkeypatch.setattr(judge_module.requests, "post", post)
    verdict = judge(make_instance(), 'HL "a" 0 1\n', live_cfg)
    assert verdict.final_score == 0.9
    assert len(post.calls) == 3
    assert sleeps == [0.5, 1.0]


def test_live_retries_timeouts_then_gives_up(monkeypatch, sleeps, live_cfg):
    post = _ScriptedPost([requests.Timeout(), requests.Timeout()])
    monkeypatch.setattr(judge_module.requests, "post", post)
    cfg = JudgeConfig(
        mode=JudgeMode.LIVE, endpoint_url=live_cfg.endpoint_url, max_retries=1, backoff_s=0.5
    )
    with pytest.raises(JudgeError, match="request timed out") as excinfo:
        judge(make_instance(), 'HL "a" 0 1\n', cfg)
    assert excinfo.value.kind is JudgeErrorKind.TIMEOUT
    assert len(post.calls) == 2
    assert sleeps == [0.5]


def test_live_retries_connection_errors(monkeypatch, sleeps, live_cfg):
    post = _ScriptedPost(
        [requests.ConnectionError("refused"), _Response(200, _ok_body(transcript()))]
    )
    monkeypatch.setattr(judge_module.requests, "post", post)
    assert judge(make_instance(), 'HL "a" 0 1\n', live_cfg).final_score == 1.0
    assert sleeps == [0.5]


def test_live_client_errors_do_not_retry(monkeypatch, sleeps, live_cfg):
    post = _ScriptedPost([_Response(404)])
    monkeypatch.setattr(judge_module.requests, "post", post)
    with pytest.raises(JudgeError, match="http 404") as excinfo:
        judge(make_instance(), 'HL "a" 0 1\n', live_cfg)
    assert excinfo.value.kind is JudgeErrorKind.TRANSPORT
    assert len(post.calls) == 1
    assert sleeps == []


def test_live_unexpected_body_shape_is_fatal(monkeypatch, sleeps, live_cfg):
    post = _ScriptedPost([_Response(200, {"unexpected": True})])
    monkeypatch.setattr(judge_module.requests, "post", post)
    with pytest.raises(JudgeError, match="unexpected body"):
        judge(make_instance(), 'HL "a" 0 1\n', live_cfg)
    assert len(post.calls) == 1


def test_live_exhausting_server_errors_raises_the_last(monkeypatch, sleeps, live_cfg):
    post = _ScriptedPost([_Response(500)] * 4)
    monkeypatch.setattr(judge_module.requests, "post", post)
    with pytest.raises(JudgeError, match="server error 500"):
        judge(make_instance(), 'HL "a" 0 1\n', live_cfg)
    assert len(post.calls) == 4
    assert sleeps == [0.5, 1.0, 2.0]


def test_live_without_endpoint_is_a_transport_error():
    with pytest.raises(JudgeError, match="needs an endpoint url"):
        judge(make_instance(), 'HL "a" 0 1\n', JudgeConfig(mode=JudgeMode.LIVE))

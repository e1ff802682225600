"""Command line interface.

Exit codes: 0 success, 1 verification or content failure, 2 usage error,
3 I/O or transport error.  ``--json`` switches any subcommand to a
stable-key JSON payload on stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .corpus import IngestError, Instance, load_manifest, stats, stats_json, stats_table
from .dsl import ExpansionError, ParseError, canonical_print, expand_macros, parse
from .judge import (
    JudgeConfig,
    JudgeError,
    JudgeErrorKind,
    JudgeMode,
    judge,
    judge_dims,
)
from .metrics import ScoreReport, ScoringError, score_pair, summarize, to_csv
from .render import (
    DEFAULT_CONFIG,
    RenderConfig,
    RenderError,
    export_geogebra,
    load_config,
    render_raster,
    render_svg,
)
from .scene import SceneError, build_scene
from .twd import (
    AdapterError,
    HttpAdapter,
    LoopError,
    MalformedStage2,
    ScriptedAdapter,
    persist_trace,
    run_instance,
)
from .verify import (
    Difficulty,
    ProblemMeta,
    Schema,
    Severity,
    report_json,
    report_text,
    verify,
)

_EXIT_OK = 0
_EXIT_FAIL = 1
_EXIT_USAGE = 2
_EXIT_IO = 3


class _UsageError(Exception):
    pass


def _print_json(payload: object) -> None:
    print(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True))


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8", errors="replace")


def _atomic_write_bytes(path: str, data: bytes) -> None:
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, target)


def _load_meta(path: str | None) -> ProblemMeta | None:
    if path is None:
        return None
    record = json.loads(_read_text(path))
    return ProblemMeta(
        givens=tuple(record.get("givens", [])),
        query_marker=record.get("query_marker"),
        answer=float(record["answer"]) if record.get("answer") is not None else None,
        schema=Schema(record["schema"]) if record.get("schema") else None,
        difficulty=Difficulty(record["difficulty"]) if record.get("difficulty") else None,
    )


def _load_render_config(path: str | None) -> RenderConfig:
    if path is None:
        return DEFAULT_CONFIG
    return load_config(path)


def _parse_error_json(exc: ParseError) -> dict:
    return {
        "ok": False,
        "error": {
            "kind": exc.kind.value,
            "line": exc.line,
            "column": exc.column,
            "message": exc.message,
        },
    }


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_parse(args: argparse.Namespace) -> int:
    try:
        program = parse(_read_text(args.file), source_name=args.file)
    except ParseError as exc:
        if args.json:
            _print_json(_parse_error_json(exc))
        else:
            print(f"{args.file}:{exc}", file=sys.stderr)
        return _EXIT_FAIL
    canonical = canonical_print(program)
    if args.expand:
        try:
            canonical = canonical_print(expand_macros(program))
        except ExpansionError as exc:
            print(f"{args.file}: {exc}", file=sys.stderr)
            return _EXIT_FAIL
    if args.json:
        _print_json({"ok": True, "canonical": canonical})
    else:
        print(canonical, end="")
    return _EXIT_OK


def _cmd_fmt(args: argparse.Namespace) -> int:
    try:
        program = parse(_read_text(args.file), source_name=args.file)
    except ParseError as exc:
        print(f"{args.file}:{exc}", file=sys.stderr)
        return _EXIT_FAIL
    canonical = canonical_print(program)
    if args.write:
        _atomic_write_bytes(args.file, canonical.encode("utf-8"))
    else:
        print(canonical, end="")
    return _EXIT_OK


def _cmd_check(args: argparse.Namespace) -> int:
    try:
        program = expand_macros(parse(_read_text(args.file), source_name=args.file))
        report = verify(program, _load_meta(args.meta))
    except (ParseError, ExpansionError, SceneError) as exc:
        if args.json:
            _print_json({"ok": False, "error": str(exc)})
        else:
            print(f"{args.file}: {exc}", file=sys.stderr)
        return _EXIT_FAIL
    if args.json:
        _print_json(report_json(report))
    else:
        print(report_text(report), end="")
    critical = any(d.severity is Severity.CRITICAL for d in report.diagnostics)
    return _EXIT_FAIL if critical else _EXIT_OK


def _render_outputs(args: argparse.Namespace) -> list[tuple[str, str]]:
    chosen = [
        (fmt, getattr(args, fmt))
        for fmt in ("svg", "pgm", "ggb")
        if getattr(args, fmt, False)
    ]
    if len(chosen) != 1:
        raise _UsageError("choose exactly one of --svg, --pgm, --ggb")
    if not args.out:
        raise _UsageError("--out is required")
    return [(chosen[0][0], args.out)]


def _cmd_render(args: argparse.Namespace) -> int:
    outputs = _render_outputs(args)
    try:
        program = expand_macros(parse(_read_text(args.file), source_name=args.file))
        scene = build_scene(program)
        cfg = _load_render_config(args.config)
        for fmt, out_path in outputs:
            if fmt == "svg":
                data = render_svg(scene, cfg).encode("utf-8")
            elif fmt == "pgm":
                data = render_raster(scene, cfg).to_pgm()
            else:
                data = export_geogebra(scene).encode("utf-8")
            _atomic_write_bytes(out_path, data)
    except (ParseError, ExpansionError, SceneError, RenderError) as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return _EXIT_FAIL
    if args.json:
        _print_json({"ok": True, "written": [out for _, out in outputs]})
    return _EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    try:
        program = expand_macros(parse(_read_text(args.file), source_name=args.file))
        data = export_geogebra(build_scene(program)).encode("utf-8")
    except (ParseError, ExpansionError, SceneError) as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return _EXIT_FAIL
    if args.out:
        _atomic_write_bytes(args.out, data)
        if args.json:
            _print_json({"ok": True, "written": [args.out]})
    else:
        sys.stdout.write(data.decode("utf-8"))
    return _EXIT_OK


def _judge_config(args: argparse.Namespace, mode: JudgeMode) -> JudgeConfig:
    return JudgeConfig(
        mode=mode,
        fixtures_dir=getattr(args, "judge_fixtures", None) or getattr(args, "fixtures", None),
        endpoint_url=getattr(args, "endpoint", None),
        model=getattr(args, "model", None),
    )


def _dims_provider(args: argparse.Namespace, instance: Instance):
    mode = JudgeMode(args.judge)
    cfg = _judge_config(args, mode)

    def provider(program, meta):
        return judge_dims(judge(instance, program, cfg))

    return provider


def _ephemeral_instance(args: argparse.Namespace, meta: ProblemMeta | None) -> Instance:
    problem = _read_text(args.problem) if args.problem else ""
    instance_id = args.id or Path(args.candidate).stem
    return Instance(
        id=instance_id,
        problem=problem,
        image_path=None,
        dsl="",
        meta=meta if meta is not None else ProblemMeta(),
        split=None,  # type: ignore[arg-type]
        program=None,
    )


def _score_one(args: argparse.Namespace) -> int:
    meta = _load_meta(args.meta)
    candidate = expand_macros(parse(_read_text(args.candidate), source_name=args.candidate))
    reference = expand_macros(parse(_read_text(args.reference), source_name=args.reference))
    cfg = _load_render_config(args.config)
    dims_from = None
    if args.judge != "off":
        instance = _ephemeral_instance(args, meta)
        dims_from = _dims_provider(args, instance)
    report = score_pair(candidate, reference, meta, cfg, dims_from)
    if args.json:
        _print_json(report.as_dict())
    else:
        for key, value in report.as_dict().items():
            shown = value if isinstance(value, str) else f"{value:.2f}"
            print(f"{key:<10} {shown}")
    return _EXIT_OK


def _score_batch(args: argparse.Namespace) -> int:
    result = load_manifest(args.manifest)
    candidates: dict[str, str] = {}
    for line_no, raw in enumerate(_read_text(args.candidates).splitlines(), start=1):
        if not raw.strip():
            continue
        record = json.loads(raw)
        candidates[record["id"]] = record["dsl"]
    cfg = _load_render_config(args.config)

    def score_instance(instance: Instance) -> tuple[str, ScoreReport]:
        candidate = expand_macros(parse(candidates[instance.id], source_name=instance.id))
        dims_from = None
        if args.judge != "off":
            dims_from = _dims_provider(args, instance)
        return instance.id, score_pair(candidate, instance.program, instance.meta, cfg, dims_from)

    members = [i for i in result.instances if i.id in candidates]
    if not members:
        raise _UsageError("no manifest instance matches the candidates file")
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            scored = list(pool.map(score_instance, members))
    else:
        scored = [score_instance(i) for i in members]

    if args.csv:
        _atomic_write_bytes(args.csv, to_csv(scored).encode("utf-8"))
    summary = summarize([report for _, report in scored])
    if args.json:
        _print_json(
            {
                "summary": summary,
                "pairs": {pair_id: report.as_dict() for pair_id, report in scored},
            }
        )
    else:
        for key, value in summary.items():
            shown = value if isinstance(value, str) else f"{value:.2f}"
            print(f"{key:<10} {shown}")
    return _EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    single = args.candidate or args.reference
    batch = args.manifest or args.candidates
    if single and batch:
        raise _UsageError("use either --candidate/--reference or --manifest/--candidates")
    if single:
        if not (args.candidate and args.reference):
            raise _UsageError("--candidate and --reference go together")
        return _score_one(args)
    if not (args.manifest and args.candidates):
        raise _UsageError("--manifest and --candidates go together")
    return _score_batch(args)


def _cmd_stats(args: argparse.Namespace) -> int:
    result = load_manifest(args.manifest)
    by_split = stats(result.instances)
    if args.json:
        payload = stats_json(by_split)
        payload["ingest_errors"] = [str(e) for e in result.errors]
        _print_json(payload)
    else:
        print(stats_table(by_split), end="")
        for error in result.errors:
            print(f"warning: {error}", file=sys.stderr)
    return _EXIT_OK


def _cmd_twd(args: argparse.Namespace) -> int:
    result = load_manifest(args.manifest)
    if args.adapter == "scripted":
        if not args.responses:
            raise _UsageError("--responses is required with the scripted adapter")
        scripts = json.loads(_read_text(args.responses))
        adapters = {
            instance.id: ScriptedAdapter(scripts.get(instance.id, []))
            for instance in result.instances
        }
    else:
        if not args.endpoint:
            raise _UsageError("--endpoint is required with the http adapter")
        adapters = {
            instance.id: HttpAdapter(args.endpoint, model=args.model)
            for instance in result.instances
        }

    outcomes: dict[str, dict] = {}
    failures = 0
    for instance in result.instances:
        adapter = adapters[instance.id]
        try:
            run = run_instance(
                instance, adapter, max_repairs=args.max_repairs, feed_render=args.feed_render
            )
        except (LoopError, MalformedStage2, AdapterError) as exc:
            failures += 1
            outcomes[instance.id] = {"ok": False, "error": str(exc)}
            if isinstance(exc, LoopError):
                persist_trace(exc.trace, args.out)
            continue
        persist_trace(run.trace, args.out)
        outcomes[instance.id] = {
            "ok": True,
            "final_answer": run.trace.final_answer,
            "rubric_score": run.trace.stage2_verification.rubric_score,
            "leak_clean": run.guard.dims.leak == 1.0,
        }
    if args.json:
        _print_json(outcomes)
    else:
        for instance_id in sorted(outcomes):
            outcome = outcomes[instance_id]
            if outcome["ok"]:
                flag = "ok" if outcome["leak_clean"] else "LEAK"
                print(
                    f"{instance_id}: answer={outcome['final_answer']} "
                    f"rubric={outcome['rubric_score']} {flag}"
                )
            else:
                print(f"{instance_id}: failed: {outcome['error']}")
    return _EXIT_FAIL if failures else _EXIT_OK


def _cmd_judge(args: argparse.Namespace) -> int:
    result = load_manifest(args.manifest)
    by_id = {instance.id: instance for instance in result.instances}
    if args.id not in by_id:
        raise _UsageError(f"instance {args.id!r} not in manifest")
    instance = by_id[args.id]
    candidate = expand_macros(parse(_read_text(args.candidate), source_name=args.candidate))
    cfg = _judge_config(args, JudgeMode(args.mode))
    verdict = judge(instance, candidate, cfg)
    dims = judge_dims(verdict)
    if args.json:
        _print_json(
            {
                "final_score": verdict.final_score,
                "criteria": {
                    cid: {"passed": v.passed, "justification": v.justification}
                    for cid, v in verdict.per_criterion.items()
                },
                "dims": dims.as_dict(),
            }
        )
    else:
        for cid in sorted(verdict.per_criterion):
            entry = verdict.per_criterion[cid]
            print(f"{cid} {'PASS' if entry.passed else 'FAIL'} {entry.justification}")
        print(f"final_score {verdict.final_score}")
    return _EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bardsl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a program and print its canonical form")
    p.add_argument("file")
    p.add_argument("--expand", action="store_true", help="expand CMP macros first")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("fmt", help="reformat a program to canonical form")
    p.add_argument("file")
    p.add_argument("--write", action="store_true", help="rewrite the file in place")
    p.set_defaults(func=_cmd_fmt)

    p = sub.add_parser("check", help="verify a program, optionally against problem metadata")
    p.add_argument("file")
    p.add_argument("--meta", help="JSON file with givens/answer/schema/difficulty")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("render", help="render a program to SVG, PGM, or a GeoGebra script")
    p.add_argument("file")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--pgm", action="store_true")
    p.add_argument("--ggb", action="store_true")
    p.add_argument("--out", required=False)
    p.add_argument("--config", help="key=value file overriding render settings")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("export", help="export a GeoGebra command script")
    p.add_argument("file")
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("score", help="score a candidate against a reference")
    p.add_argument("--candidate")
    p.add_argument("--reference")
    p.add_argument("--meta")
    p.add_argument("--manifest")
    p.add_argument("--candidates", help="JSONL of {id, dsl} candidate programs")
    p.add_argument("--csv", help="write per-pair metrics to this CSV file")
    p.add_argument("--config", help="key=value file overriding render settings")
    p.add_argument("--judge", choices=["off", "stub", "live"], default="off")
    p.add_argument("--judge-fixtures", help="stub transcript directory")
    p.add_argument("--endpoint", help="live judge endpoint url")
    p.add_argument("--model", help="live judge model name")
    p.add_argument("--problem", help="problem text file for the judge prompt")
    p.add_argument("--id", help="instance id for stub transcripts")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("stats", help="summarize a corpus manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("twd", help="run the two-stage drafting loop")
    twd_sub = p.add_subparsers(dest="twd_command", required=True)
    p = twd_sub.add_parser("run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--adapter", choices=["scripted", "http"], default="scripted")
    p.add_argument("--responses", help="JSON of id -> response list (scripted)")
    p.add_argument("--endpoint", help="chat endpoint url (http)")
    p.add_argument("--model")
    p.add_argument("--max-repairs", type=int, default=2)
    p.add_argument("--feed-render", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_twd)

    p = sub.add_parser("judge", help="grade one candidate with the model judge")
    p.add_argument("--manifest", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--mode", choices=["stub", "live"], default="stub")
    p.add_argument("--fixtures", help="stub transcript directory")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_judge)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else _EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except JudgeError as exc:
        print(f"judge: {exc}", file=sys.stderr)
        if exc.kind in (JudgeErrorKind.TRANSPORT, JudgeErrorKind.TIMEOUT):
            return _EXIT_IO
        return _EXIT_FAIL
    except AdapterError as exc:
        print(f"adapter: {exc}", file=sys.stderr)
        return _EXIT_IO
    except (
        ScoringError,
        IngestError,
        RenderError,
        ParseError,
        ExpansionError,
        SceneError,
        json.JSONDecodeError,
    ) as exc:
        print(str(exc), file=sys.stderr)
        return _EXIT_FAIL
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return _EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

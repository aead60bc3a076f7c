"""Command-line entry point: ``semgrasp plan|partition|eval|mock-serve``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import fixtures
from .evaluation import (
    DuplicateObject,
    EmptyGraspSet,
    EvaluationError,
    InvalidFraction,
    MissingSurveyRow,
    OutOfRange,
    ReportInconsistent,
    SurveyParseError,
)
from .geometry import EmptyMesh, GeometryError, ParseError
from .language import (
    BackendUnavailable,
    FixtureParseError,
    InvalidLabel,
    LanguageError,
    MalformedResponse,
    MockLlm,
    MockVlm,
    NoDetection,
)
from .pipeline import ConfigError, PipelineConfig, StageError, locate_part, parse_visibility, run_eval, run_pipeline
from .planner import RegionTooSmall
from .projection import BoxOutsideImage, EmptyRegion, Mode, PartitionError, partition_mesh

logger = logging.getLogger("semgrasp")

# most specific class first; lookup walks the exception's MRO
EXIT_CODES: dict[type, int] = {
    ConfigError: 3,
    InvalidLabel: 4,
    BackendUnavailable: 5,
    MalformedResponse: 6,
    NoDetection: 7,
    BoxOutsideImage: 8,
    EmptyRegion: 9,
    RegionTooSmall: 10,
    ParseError: 11,
    EmptyMesh: 12,
    FixtureParseError: 13,
    SurveyParseError: 14,
    MissingSurveyRow: 15,
    DuplicateObject: 16,
    InvalidFraction: 17,
    OutOfRange: 18,
    EmptyGraspSet: 19,
    ReportInconsistent: 20,
    GeometryError: 21,
    PartitionError: 22,
    LanguageError: 23,
    EvaluationError: 24,
}
EXIT_UNEXPECTED = 1


def exit_code_for(exc: BaseException, stage: str | None = None) -> int:
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    if stage == "config" and isinstance(exc, (ValueError, OSError)):
        return EXIT_CODES[ConfigError]
    return EXIT_UNEXPECTED


def _exit_code_help() -> str:
    lines = ["exit codes:", "  0   success", f"  {EXIT_UNEXPECTED}   unexpected error"]
    lines += [f"  {code:<3} {cls.__name__}" for cls, code in sorted(EXIT_CODES.items(), key=lambda kv: kv[1])]
    lines.append("  2   command-line usage error")
    return "\n".join(lines)


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, type=Path, help="JSON pipeline config; relative paths resolve against it")
    p.add_argument("--object", dest="object_label", help="object label to plan for")
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--seed", type=int)
    p.add_argument("--n-grasps", type=int)
    p.add_argument("--visibility", choices=["silhouette", "depth-band"])
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--llm", choices=["mock", "http"], help="use the mock table or the HTTP endpoint from the config")
    p.add_argument("--vlm", choices=["mock", "http"])
    p.add_argument("--literal-template", action="store_true", default=None, help="always use 'an' before the object")
    p.add_argument("--workers", type=int)


def _select(ep, which: str | None, kind: str):
    if which is None:
        return ep
    if which == "mock":
        if ep.mock is None:
            raise ConfigError(f"--{kind} mock requested but the config has no mock table")
        return ep
    if not ep.endpoint:
        raise ConfigError(f"--{kind} http requested but the config has no endpoint")
    return dataclasses.replace(ep, mock=None)


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config)
    over = {
        "object_label": args.object_label,
        "mode": Mode(args.mode) if args.mode else None,
        "rng_seed": args.seed,
        "n_grasps": args.n_grasps,
        "visibility": parse_visibility(args.visibility) if args.visibility else None,
        "out_dir": args.out_dir,
        "literal_template": args.literal_template,
        "workers": args.workers,
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in over.items() if v is not None})
    backend = dataclasses.replace(
        cfg.backend, llm=_select(cfg.backend.llm, args.llm, "llm"), vlm=_select(cfg.backend.vlm, args.vlm, "vlm")
    )
    return dataclasses.replace(cfg, backend=backend).validate()


def cmd_plan(args) -> int:
    result = run_pipeline(load_config(args))
    print(json.dumps(result.summary(), indent=2))
    return 0


def cmd_partition(args) -> int:
    cfg = load_config(args)
    answer, box, _, camera, mesh = locate_part(cfg)
    try:
        part = partition_mesh(mesh, camera, box, cfg.mode, cfg.visibility)
    except Exception as exc:
        raise StageError("partition", exc) from exc
    text = part.to_text()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"part={answer.part_label} graspable={part.n_graspable} obstacle={part.n_obstacle}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    llm = MockLlm.from_csv(args.llm_table) if args.llm_table else None
    report = run_eval(
        args.survey,
        args.out_dir,
        llm=llm,
        reference_path=args.reference,
        frequency_paths=args.frequencies or (),
        measure=args.measure,
        seed=args.seed,
    )
    sys.stdout.write(report.to_text())
    return 0


def cmd_mock_serve(args) -> int:
    from .server import make_server

    server = make_server(MockLlm.from_csv(args.llm_table), MockVlm.from_csv(args.vlm_table), args.host, args.port)
    host, port = server.server_address[:2]
    print(f"serving http://{host}:{port}  (POST /v1/chat/completions, /v1/detect)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="semgrasp",
        description="Language-guided part selection and region-confined grasp planning.",
        epilog=_exit_code_help(),
        formatter_class=fmt,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run the full pipeline", epilog=_exit_code_help(), formatter_class=fmt)
    _add_plan_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("partition", help="dump per-face graspable/obstacle labels", epilog=_exit_code_help(), formatter_class=fmt)
    _add_plan_flags(p)
    p.add_argument("--output", type=Path, help="write labels here instead of stdout")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("eval", help="similarity report against a survey", epilog=_exit_code_help(), formatter_class=fmt)
    p.add_argument("--survey", type=Path, default=fixtures.survey_table())
    p.add_argument("--llm-table", type=Path, default=fixtures.mock_llm_table(), help="mock LLM table for the semantic column")
    p.add_argument("--no-semantic", dest="llm_table", action="store_const", const=None)
    p.add_argument("--reference", type=Path, help="published similarity values (object,method,sim)")
    p.add_argument("--frequencies", type=Path, action="append", help="measured frequencies (object,method,p_a[,n_grasps])")
    p.add_argument("--measure", action="store_true", help="add a measured unrestricted-baseline column from bundled fixtures")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("out/eval"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mock-serve", help="serve the mock backends over HTTP")
    p.add_argument("--llm-table", type=Path, default=fixtures.mock_llm_table())
    p.add_argument("--vlm-table", type=Path, default=fixtures.mock_vlm_table())
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_mock_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        code = exit_code_for(exc.cause, exc.stage)
        print(f"semgrasp: stage {exc.stage} failed: {type(exc.cause).__name__}: {exc.cause}", file=sys.stderr)
        return code
    except Exception as exc:
        code = exit_code_for(exc, "config" if isinstance(exc, ConfigError) else None)
        if code == EXIT_UNEXPECTED:
            logger.exception("unexpected error")
        print(f"semgrasp: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())

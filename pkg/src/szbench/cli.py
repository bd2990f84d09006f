"""
Command line interface::

    szbench validate --dataset DIR [--hypothesis DIR]
    szbench convert SRC DST
    szbench detect INPUT.edf OUTPUT.tsv
    szbench score --dataset DIR --hypothesis NAME=DIR [--hypothesis ...] --out DIR
    szbench run --dataset DIR --command "detector {input} {output}" --workdir DIR
    szbench report --scores DIR/scores.json [--self-reported FILE]

Exit codes: 0 success, 1 validation findings or failed files, 2 usage
error, 3 internal error.
"""
import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

import yaml

from .aggregate import LeaderboardEntry, agreement, evaluate_algorithm, load_references, rank
from .annotations import (
    DEFAULT_TASK,
    DatasetIndex,
    index_dataset,
    read_reference,
    validate_hypothesis_tree,
)
from .baseline import detect_file
from .config import Settings, load_settings, runner_config
from .db.json_serializer import to_json
from .environment import get_environment_info
from .errors import (
    AnnotationParseError,
    ConfigError,
    ContractError,
    DatasetIndexError,
    SzBenchError,
)
from .log_capture import JsonLogCapture
from .report import (
    ReportOptions,
    agreement_table,
    build_score_report,
    entries_from_report,
    leaderboard_table,
    params_line,
    per_subject_table,
    read_self_reported,
    render_markdown,
    write_csv,
    write_json,
    write_leaderboard_files,
)
from .runner import Outcome, run_dataset, summarize_run
from .score import ScoringParams
from .standardize import standardize_dataset

_log = logging.getLogger("SzBench")

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

FORMATS = ("csv", "json", "markdown")


class UsageError(Exception):
    """
    Invalid command-line values detected after parsing.
    """


def _named_path(text: str) -> typing.Tuple[str, Path]:
    name, sep, path = text.partition("=")
    if not sep:
        return Path(text).name, Path(text)
    if not name or not path:
        msg = f"Expected NAME=PATH, got {text!r}."
        raise argparse.ArgumentTypeError(msg)
    return name, Path(path)


def _settings(args) -> Settings:
    try:
        return load_settings(args.config)
    except ConfigError as e:
        raise UsageError(str(e)) from e


def _index(args) -> DatasetIndex:
    try:
        return index_dataset(args.dataset, args.task)
    except DatasetIndexError as e:
        raise UsageError(str(e)) from e


def _scoring_params(args, settings: Settings) -> ScoringParams:
    try:
        return settings.scoring.replace(
            min_overlap_s=args.min_overlap,
            preictal_tolerance_s=args.preictal,
            postictal_tolerance_s=args.postictal,
            merge_gap_s=args.merge_gap,
            max_event_s=args.max_event,
            sample_period_s=args.sample_period,
        )
    except ContractError as e:
        raise UsageError(str(e)) from e


def _report_options(args, settings: Settings) -> ReportOptions:
    if getattr(args, "precision", None) is None:
        return settings.report
    try:
        return ReportOptions(precision=args.precision)
    except ContractError as e:
        raise UsageError(str(e)) from e


def _self_reported(args) -> typing.Optional[typing.Dict[str, typing.Optional[float]]]:
    if args.self_reported is None:
        return None
    try:
        return read_self_reported(args.self_reported)
    except (ContractError, OSError) as e:
        raise UsageError(str(e)) from e


def cmd_validate(args) -> int:
    index = _index(args)
    findings = [
        {"kind": "index", "path": f.path, "line": 0, "status": "error", "message": f.message}
        for f in index.errors
    ]
    for recording in index:
        try:
            read_reference(recording)
        except AnnotationParseError as e:
            findings.append(
                {
                    "kind": "reference",
                    "path": recording.events_path,
                    "line": e.line,
                    "status": "unparsable",
                    "message": str(e),
                }
            )
    if args.hypothesis is not None:
        report = validate_hypothesis_tree(args.hypothesis, index)
        findings += [
            {
                "kind": "hypothesis",
                "path": c.path,
                "line": c.line,
                "status": c.status,
                "message": c.message,
            }
            for c in report.findings
        ]
    print(json.dumps(to_json({"n_recordings": len(index), "findings": findings}), indent=2))
    return EXIT_OK if not findings else EXIT_FINDINGS


def cmd_convert(args) -> int:
    settings = _settings(args)
    cfg = settings.standardize
    if args.jobs is not None:
        cfg = dataclasses.replace(cfg, workers=args.jobs)
    with JsonLogCapture() as capture:
        report = standardize_dataset(args.source, args.destination, cfg)
    if args.report is not None:
        write_json({"conversion": report, "logging": capture.get_entries()}, args.report)
    for failure in report.failed:
        print(f"FAILED {failure.source}: {failure.error}")
    print(f"Converted {len(report.succeeded)} of {len(report.outcomes)} recordings.")
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_detect(args) -> int:
    settings = _settings(args)
    detect_file(args.input, args.output, settings.baseline)
    return EXIT_OK


def cmd_score(args) -> int:
    settings = _settings(args)
    params = _scoring_params(args, settings)
    options = _report_options(args, settings)
    names = [name for name, _ in args.hypothesis]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        msg = f"Algorithm names must be unique: {', '.join(duplicates)}."
        raise UsageError(msg)
    self_reported = _self_reported(args)
    formats = set(args.format or FORMATS)

    index = _index(args)
    if not len(index):
        _log.error(f"No recordings found in {args.dataset}.")
        return EXIT_FINDINGS
    try:
        references = load_references(index)
    except AnnotationParseError as e:
        raise UsageError(str(e)) from e
    with JsonLogCapture() as capture:
        evaluations = {
            name: evaluate_algorithm(name, path, index, references, params, args.jobs)
            for name, path in args.hypothesis
        }
        ranked = rank(
            [
                e.entry(self_reported.get(name) if self_reported else None)
                for name, e in evaluations.items()
            ]
        )
        sample_ranked = rank(
            [LeaderboardEntry(name, e.sample_score) for name, e in evaluations.items()]
        )
        agreement_report = (
            agreement(references, {n: e.hypotheses for n, e in evaluations.items()}, params)
            if len(evaluations) >= 2
            else None
        )

    out = Path(args.out)
    header = params_line(params)
    if "csv" in formats:
        write_csv(leaderboard_table(ranked), out / "leaderboard.csv", header)
        write_csv(leaderboard_table(sample_ranked), out / "sample_leaderboard.csv", header)
        write_csv(
            per_subject_table([(e.algorithm_name, e.dataset_score) for e in ranked]),
            out / "per_subject.csv",
            header,
        )
        if agreement_report is not None:
            write_csv(agreement_table(agreement_report), out / "agreement.csv", header)
    write_leaderboard_files(out, ranked, params, options, self_reported, formats)
    if "json" in formats:
        write_json(
            build_score_report(
                params,
                Path(args.dataset),
                ranked,
                evaluations,
                agreement_report,
                get_environment_info(),
                capture.get_entries(),
            ),
            out / "scores.json",
        )
    print(render_markdown(ranked, params, options), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    settings = _settings(args)
    try:
        cfg = runner_config(
            settings,
            command_template=args.command,
            max_concurrency=args.jobs,
            per_file_timeout_s=args.timeout,
            workdir=args.workdir,
            continue_on_error=False if args.stop_on_error else None,
            resume=True if args.resume else None,
        )
    except (ConfigError, ContractError) as e:
        raise UsageError(str(e)) from e
    index = _index(args)
    with JsonLogCapture() as capture:
        records = run_dataset(index, cfg)
    summary = summarize_run(records)
    write_json(
        {
            "config": cfg,
            "summary": summary,
            "records": records,
            "environment": get_environment_info(),
            "logging": capture.get_entries(),
        },
        cfg.workdir / "run_summary.json",
    )
    totals = ", ".join(f"{k}: {v}" for k, v in summary.totals.items() if v)
    print(f"{summary.n_records} recordings ({totals or 'none'}); hypotheses in {cfg.hypothesis_root}")
    return EXIT_OK if summary.totals[Outcome.PRODUCED] == summary.n_records else EXIT_FINDINGS


def cmd_report(args) -> int:
    settings = _settings(args)
    options = _report_options(args, settings)
    scores_path = Path(args.scores)
    try:
        data = json.loads(scores_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        msg = f"Cannot read score report {scores_path}: {e}"
        raise UsageError(msg) from e
    try:
        params, entries = entries_from_report(data)
    except (ContractError, KeyError, TypeError) as e:
        msg = f"{scores_path} is not a valid score report: {e}"
        raise UsageError(msg) from e
    self_reported = _self_reported(args)
    ranked = rank(entries)
    out = Path(args.out) if args.out else scores_path.parent
    write_leaderboard_files(out, ranked, params, options, self_reported)
    print((out / "leaderboard.md").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def _add_scoring_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("scoring parameters (seconds)")
    group.add_argument("--preictal", type=float, help="pre-ictal tolerance (default 30)")
    group.add_argument("--postictal", type=float, help="post-ictal tolerance (default 60)")
    group.add_argument("--merge-gap", type=float, help="merge events closer than this (default 90)")
    group.add_argument("--max-event", type=float, help="split events longer than this (default 300)")
    group.add_argument("--min-overlap", type=float, help="minimal overlap of a detection (default 0)")
    group.add_argument("--sample-period", type=float, help="sample-based granularity (default 1)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="szbench", description="Seizure detection benchmarking toolkit."
    )
    sub = parser.add_subparsers(dest="command_name", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a dataset and a hypothesis tree")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--hypothesis", type=Path)
    p.add_argument("--task", default=DEFAULT_TASK)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("convert", parents=[common], help="standardize EDF recordings into a BIDS tree")
    p.add_argument("source", type=Path)
    p.add_argument("destination", type=Path)
    p.add_argument("--jobs", type=int)
    p.add_argument("--report", type=Path, help="write the conversion report (JSON) here")
    p.set_defaults(handler=cmd_convert)

    p = sub.add_parser("detect", parents=[common], help="run the band-power baseline on one EDF")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("score", parents=[common], help="score hypothesis trees and rank them")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--hypothesis", type=_named_path, action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=FORMATS, action="append")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--precision", type=int)
    p.add_argument("--self-reported", type=Path)
    p.add_argument("--task", default=DEFAULT_TASK)
    _add_scoring_flags(p)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("run", parents=[common], help="run a detector over a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--command", required=True, help="template with {input} and {output}")
    p.add_argument("--workdir", type=Path)
    p.add_argument("--jobs", type=int, help="maximal number of concurrent detector runs")
    p.add_argument("--timeout", type=float, help="per-file timeout in seconds (default 3600)")
    p.add_argument("--stop-on-error", action="store_true")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--task", default=DEFAULT_TASK)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("report", parents=[common], help="render a score report")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--self-reported", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--precision", type=int)
    p.set_defaults(handler=cmd_report)
    return parser


def _configure_logging(args) -> None:
    level = logging.WARNING
    if args.quiet:
        level = logging.ERROR
    elif args.verbose == 1:
        level = logging.INFO
    elif args.verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("SzBench").setLevel(level)


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    _configure_logging(args)
    try:
        return args.handler(args)
    except UsageError as e:
        print(f"{parser.prog} {args.command_name}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SzBenchError as e:
        _log.error(str(e))
        _log.debug("Traceback:", exc_info=True)
        return EXIT_INTERNAL
    except Exception as e:
        _log.error(f"Internal error: {e!r}")
        _log.error(
            "Arguments:\n"
            + yaml.dump({k: str(v) for k, v in vars(args).items() if k != "handler"})
        )
        _log.debug("Traceback:", exc_info=True)
        return EXIT_INTERNAL


def run() -> None:
    sys.exit(main())

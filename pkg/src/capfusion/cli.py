"""capfusion command line: synth, run, compare, gradcheck.

Exit codes: 0 success, 1 pipeline error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import LabelError
from .harness.report import ExperimentReport, ReportError, compare_reports, render_report
from .models import ModelSpecError
from .pipeline import ConfigError, ExperimentConfig, PipelineError, load_experiment_config, run_experiment, \
    write_report
from .synth import SynthConfig, SynthConfigError, generate_corpus, write_corpus

OK, PIPELINE_ERROR, USAGE_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 already; keep the message on stderr
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fail(code: int, message: str) -> int:
    print(f"capfusion: error: {message}", file=sys.stderr)
    return code


def cmd_synth(config_path, out_dir, seed: int | None = None) -> int:
    try:
        cfg = SynthConfig.load(config_path)
        if seed is not None:
            cfg.seed = seed
    except FileNotFoundError:
        return _fail(USAGE_ERROR, f"config file not found: {config_path}")
    except (OSError, SynthConfigError, TypeError) as exc:
        return _fail(USAGE_ERROR, f"invalid synth config: {exc}")
    try:
        root = write_corpus(generate_corpus(cfg), out_dir)
    except (OSError, ValueError) as exc:
        return _fail(PIPELINE_ERROR, str(exc))
    print(f"wrote {cfg.num_sessions} sessions x {len(cfg.devices)} devices to {root}")
    return OK


def build_experiment_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        try:
            raw = load_experiment_config(args.config)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
    # flags override the config file, which overrides defaults
    for key, value in (("data", args.data), ("scheme", args.scheme), ("architecture", args.arch),
                       ("fusion", args.fusion), ("seed", args.seed), ("out", args.out), ("jobs", args.jobs)):
        if value is not None:
            raw[key] = value
    if "data" not in raw:
        raise ConfigError("no dataset given (--data or \"data\" in the config)")
    return ExperimentConfig.from_dict(raw)


def cmd_run(cfg: ExperimentConfig) -> int:
    if not Path(cfg.data).is_dir():
        return _fail(USAGE_ERROR, f"dataset directory not found: {cfg.data}")
    try:
        report = run_experiment(cfg)
    except (PipelineError, ModelSpecError, LabelError, ReportError, ValueError, RuntimeError) as exc:
        return _fail(PIPELINE_ERROR, str(exc))
    table = render_report([report])
    if cfg.out:
        out = write_report(report, cfg.out)
        out.with_suffix(".txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return OK


def cmd_compare(report_paths) -> int:
    try:
        reports = [ExperimentReport.load(p) for p in report_paths]
    except FileNotFoundError as exc:
        return _fail(USAGE_ERROR, f"report not found: {exc.filename}")
    except ReportError as exc:
        return _fail(USAGE_ERROR, str(exc))
    try:
        text = compare_reports(reports)
    except ReportError as exc:
        return _fail(USAGE_ERROR, str(exc))
    sys.stdout.write(text)
    return OK


def cmd_gradcheck(seeds: int, quick: bool) -> int:
    from .verify import TOLERANCE, format_suite, run_suite

    result = run_suite(seeds=seeds, include_models=not quick)
    print(format_suite(result))
    return OK if result.passed(TOLERANCE) else PIPELINE_ERROR


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="capfusion", description="IMU + body-capacitance activity recognition experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--config", required=True, help="SynthConfig JSON file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the config seed")

    r = sub.add_parser("run", help="leave-one-session-out experiment on a corpus")
    r.add_argument("--config", help="experiment config JSON (flags override it)")
    r.add_argument("--data", help="corpus root containing sessions/")
    r.add_argument("--scheme", help="Full12, NoNull11, Posture4, Posture3 or Binary2")
    r.add_argument("--arch", help="mccnn or deepconvlstm")
    r.add_argument("--fusion", help="early, late or imu-only")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="report JSON path (table goes next to it as .txt)")
    r.add_argument("--jobs", type=int, help="folds to run in parallel")

    c = sub.add_parser("compare", help="side-by-side table of reports on one scheme")
    c.add_argument("reports", nargs="+")

    g = sub.add_parser("gradcheck", help="finite-difference check of every layer and architecture")
    g.add_argument("--seeds", type=int, default=20)
    g.add_argument("--quick", action="store_true", help="layers only, skip the full architectures")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(USAGE_ERROR, str(exc))
    if args.command == "synth":
        return cmd_synth(args.config, args.out, args.seed)
    if args.command == "run":
        try:
            cfg = build_experiment_config(args)
        except (ConfigError, OSError) as exc:
            return _fail(USAGE_ERROR, str(exc))
        return cmd_run(cfg)
    if args.command == "compare":
        if len(args.reports) < 2:
            return _fail(USAGE_ERROR, "compare needs at least 2 reports")
        return cmd_compare(args.reports)
    if args.command == "gradcheck":
        return cmd_gradcheck(args.seeds, args.quick)
    return _fail(USAGE_ERROR, f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())

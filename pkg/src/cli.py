import argparse
import sys
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from src.backend import (
    ErrorBlock,
    Report,
    analyze,
    build_report,
    config_fields,
    defect,
    emit_report,
    failed,
    input_digest,
    run_patch,
    zoo_listing,
    zoo_run,
)
from src.config import PROJECT_NAME, VERSION, SessionConfig, settings
from src.congruence import STRATEGIES
from src.errors import CongruenceError
from src.evaluate import SUITES, render_report_card, run_suite
from src.telemetry import configure_logging
from src.zoo import resolve, zoo

CONFIG_EXIT_CODE = 4


def _global_options(parser: argparse.ArgumentParser, default) -> argparse.ArgumentParser:
    parser.add_argument("--format", choices=("json", "table"), default=default("json"))
    parser.add_argument("--seed", type=int, default=default(None), help="overridden by CONGR_SEED")
    parser.add_argument("--log-level", default=default(None))
    return parser


def build_parser() -> argparse.ArgumentParser:
    """Global flags are accepted before or after the subcommand."""
    parser = _global_options(argparse.ArgumentParser(prog="congruence", description=f"{PROJECT_NAME} {VERSION}"),
                             lambda value: value)
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser
    shared = _global_options(argparse.ArgumentParser(add_help=False), lambda value: argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True)

    analyze_cmd = commands.add_parser("analyze", parents=[shared], help="presentation data of a ring and module")
    analyze_cmd.add_argument("file", help="problem file or zoo:NAME")

    defect_cmd = commands.add_parser("defect", parents=[shared], help="Wiles defect by one or all strategies")
    defect_cmd.add_argument("file")
    defect_cmd.add_argument("--strategy", choices=STRATEGIES + ("all",), default="direct")

    verify_cmd = commands.add_parser("verify", parents=[shared], help="run a verification suite")
    verify_cmd.add_argument("--suite", choices=SUITES, required=True)

    zoo_cmd = commands.add_parser("zoo", parents=[shared], help="curated examples")
    zoo_actions = zoo_cmd.add_subparsers(dest="action", required=True)
    zoo_actions.add_parser("list", parents=[shared])
    zoo_run_cmd = zoo_actions.add_parser("run", parents=[shared])
    zoo_run_cmd.add_argument("name")

    patch_cmd = commands.add_parser("patch", parents=[shared], help="patched module of a tower of complexes")
    patch_cmd.add_argument("file")
    patch_cmd.add_argument("--levels", type=int, default=None)
    return parser


def _session(args: argparse.Namespace, config: SessionConfig) -> SessionConfig:
    fields = {"seed": args.seed, "log_level": args.log_level}
    return config.overridden(**fields)


def _problem_report(command: str, target: str, config: SessionConfig, compute) -> Report:
    """Loads the problem once for the digest, then runs with escalation (reloading at each precision)."""
    report = Report(command=command, target=target, seed=config.seed, config=config_fields(config))
    try:
        problem = resolve(target, config)
    except CongruenceError as exc:
        return failed(report, exc)
    return build_report(command, target, config, problem.raw, lambda cfg: compute(resolve(target, cfg), cfg))


def _verify(args: argparse.Namespace, config: SessionConfig) -> Tuple[Report, Optional[str]]:
    suite = run_suite(args.suite, config, config.seed)
    report = Report(command="verify", target=args.suite, seed=config.seed, config=config_fields(config),
                    input_digest=input_digest({"suite": args.suite}, config), exit_code=suite.exit_code,
                    result=suite.dict())
    if suite.failed:
        report = report.copy(update={"error": ErrorBlock(
            kind="identity_failure", message=f"{suite.failed} cases failed",
            details={"failing": [c.case for c in suite.cases if not c.holds]})})
    return report, render_report_card(suite) if args.format == "table" else None


def run_command(argv: Sequence[str], config: SessionConfig = settings) -> Tuple[Report, str]:
    """Parses argv, runs the command and returns the report with its rendered text."""
    args = build_parser().parse_args(list(argv))
    try:
        config = _session(args, config)
    except ValidationError as exc:
        report = Report(command=args.command, target="", seed=-1, config={}, exit_code=CONFIG_EXIT_CODE,
                        error=ErrorBlock(kind="config", message=str(exc)))
        return report, emit_report(report, args.format)
    configure_logging(config.log_level)

    text: Optional[str] = None
    if args.command == "analyze":
        report = _problem_report("analyze", args.file, config, lambda problem, cfg: (analyze(problem), []))
    elif args.command == "defect":
        report = _problem_report("defect", args.file, config,
                                 lambda problem, cfg: defect(problem, args.strategy, cfg.seed))
    elif args.command == "patch":
        report = _problem_report("patch", args.file, config,
                                 lambda problem, cfg: (run_patch(problem, args.levels), []))
    elif args.command == "verify":
        report, text = _verify(args, config)
    elif args.action == "list":
        names = [e.name for e in zoo(config)]
        report = build_report("zoo list", "zoo", config, {"members": names},
                              lambda cfg: (zoo_listing(cfg), []))
    else:
        report = build_report("zoo run", args.name, config, {"member": args.name},
                              lambda cfg: zoo_run(args.name, cfg, cfg.seed))
    return report, text if text is not None else emit_report(report, args.format)


def main(argv: Optional[List[str]] = None) -> int:
    report, text = run_command(sys.argv[1:] if argv is None else argv)
    print(text)
    return report.exit_code

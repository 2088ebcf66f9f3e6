from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from app.cli.commands import EXIT_USAGE, available_commands, dispatch
from app.cli.run_config import load_config_document, parse_config
from app.config import get_settings
from app.core.errors import ConfigError
from app.core.logging_config import setup_logging


def _node_list(raw: str) -> List[int]:
    if not raw.strip():
        return []
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated node indices, got {raw!r}") from exc


def _big_m(raw: str) -> Any:
    if raw.strip().lower() == "exact":
        return "exact"
    try:
        return float(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--big-m expects 'exact' or a number, got {raw!r}") from exc


_ENVIRONMENT = (
    ("SDP_FEASIBILITY_TOL", "absolute feasibility tolerance of every solve (default 1e-7)"),
    ("SDP_GAP_TOL", "optimality gap tolerance of every solve (default 1e-7)"),
    ("SDP_SOLVER", "cvxpy solver name (default CLARABEL)"),
    ("SDP_STRICT_EPSILON", "floor of strictly positive multipliers (default 1e-9)"),
    ("SDP_MAX_ITERS", "solver iteration cap (default 500)"),
    ("JOBS", "parallel solves, 0 = all cores"),
    ("OUTPUT_DIR", "output directory when --out is absent"),
    ("LOG_LEVEL", "logging level (default INFO)"),
)


def _epilog(commands: dict) -> str:
    lines = ["commands:"]
    lines += [f"  {key:<10} {text}" for key, text in commands.items()]
    lines += ["", "environment (a tolerances block in the config document overrides these):"]
    lines += [f"  {name:<20} {text}" for name, text in _ENVIRONMENT]
    return "\n".join(lines)


def _build_parser() -> argparse.ArgumentParser:
    commands = available_commands()
    parser = argparse.ArgumentParser(
        description="Secure monitor allocation for networked control systems",
        epilog=_epilog(commands),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", help="one of: " + ", ".join(commands))
    parser.add_argument("--config", default=None, help="JSON run configuration (default: random n=10 network)")
    parser.add_argument("--seed", type=int, default=None, help="Seed of every random draw in the run")
    parser.add_argument("--jobs", type=int, default=None, help="Parallel solves (0 = all cores; env JOBS)")
    parser.add_argument("--mode", choices=("full", "diagonal"), default=None, help="Certificate structure")
    parser.add_argument("--budget", type=int, default=None, help="Monitor budget beta")
    parser.add_argument("--big-m", dest="big_m", type=_big_m, default=None, help="'exact' or a surrogate value")
    parser.add_argument("--method", choices=("enumerate", "bnb"), default=None, help="Allocation method")
    parser.add_argument("--monitors", type=_node_list, default=None, help="Monitored nodes, e.g. 0,2")
    parser.add_argument("--attack", dest="attack_nodes", type=_node_list, default=None, help="Attack nodes, e.g. 1")
    parser.add_argument("--out", default=None, help="Output directory (env OUTPUT_DIR)")
    parser.add_argument("--eta0", type=float, default=None, help="First self-loop increment of the tuning")
    parser.add_argument("--max-iters", dest="max_iters", type=int, default=None, help="Tuning doublings")
    parser.add_argument("--debug", action="store_true", help="Force DEBUG log level")
    parser.add_argument(
        "--dump",
        dest="dump_problem",
        action="store_true",
        default=None,
        help="Write the assessed SDP in the sparse text format",
    )
    if hasattr(argparse, "BooleanOptionalAction"):
        parser.add_argument(
            "--shrink",
            action=argparse.BooleanOptionalAction,
            default=None,
            help="Bisect the tuning increment down to the margin (default: true).",
        )
    else:
        parser.add_argument("--shrink", dest="shrink", action="store_true", default=None)
        parser.add_argument("--no-shrink", dest="shrink", action="store_false")
    return parser


def _apply_overrides(document: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    for key in ("seed", "jobs", "mode", "budget", "big_m", "method", "monitors", "attack_nodes", "dump_problem"):
        value = getattr(args, key)
        if value is not None:
            document[key] = value
    if args.out is not None:
        document["output_dir"] = args.out

    tuning = {
        key: value
        for key, value in (("eta0", args.eta0), ("max_iters", args.max_iters), ("shrink", args.shrink))
        if value is not None
    }
    if tuning:
        section = document.setdefault("tuning", {})
        if not isinstance(section, dict):
            raise ConfigError("must be an object", "tuning")
        section.update(tuning)
    return document


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    settings = get_settings()

    log_level = "DEBUG" if (settings.debug or args.debug) else settings.log_level
    setup_logging(log_level, output_dir=args.out or settings.output_dir)
    logger = logging.getLogger(__name__)

    try:
        document = _apply_overrides(load_config_document(args.config), args)
        config = parse_config(document)
    except ConfigError as exc:
        logger.error("Configuracao invalida: %s", exc)
        return EXIT_USAGE

    try:
        return dispatch(args.command, config)
    except KeyboardInterrupt:
        logger.warning("Execucao interrompida pelo usuario (Ctrl+C).")
        return 130


if __name__ == "__main__":
    sys.exit(main())

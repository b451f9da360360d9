"""Command line entry point: ``bosepair {hartree|pair|fock-verify|error-sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import hartree
from .config import ConfigError, config_from_dict, parse_config
from .runner import StageError, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_RESOURCE = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bosepair", description=__doc__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in ("hartree", "pair", "fock-verify", "error-sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="TOML run configuration")
        p.add_argument("--output", metavar="DIR", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides seed)")
        p.add_argument("--quiet", action="store_true", help="only warnings and errors")
    return ap


def exit_code_for(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, (hartree.ResourceGuardError, MemoryError)):
        return EXIT_RESOURCE
    if isinstance(cause, (ConfigError, hartree.UnderResolvedError)):
        return EXIT_CONFIG
    if isinstance(exc, StageError) and exc.stage == "initial-state" and isinstance(cause, (ValueError, OSError)):
        return EXIT_CONFIG
    # anything else raised by a module is reported as a numerical failure
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    log = logging.getLogger("bosepair")
    try:
        if args.config:
            cfg = parse_config(args.config, args.experiment)
        else:
            cfg = config_from_dict({}, args.experiment)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative")
            cfg.seed = args.seed
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        manifest = run(cfg, args.output)
    except (StageError, ConfigError, hartree.ResourceGuardError) as exc:
        code = exit_code_for(exc)
        log.error("%s", exc)
        return code
    for chk in manifest["acceptance"].get("checks", []):
        log.info("%-28s %-4s %s", chk["criterion"], "ok" if chk["pass"] else "FAIL", chk["value"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/python3

# pylint: disable=invalid-name

import sys
import argparse
import logging

from marshmallow import ValidationError

import lab_core
import verify_core
from log_utils import log_library_versions, setup_logging
from utils import ConfigurationError, ModelValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NO_COMMAND = 1
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CONFIG_ERRORS = (ValidationError, ConfigurationError, ModelValidationError)

def construct_parser():
    # construct argument parser
    parser = argparse.ArgumentParser(description="Numerical lab for metrics on degenerating hyperbolic surfaces")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")

    subparsers = parser.add_subparsers(dest="command")

    def add_common(sub):
        sub.add_argument("--config", metavar="PATH", type=str, help="config file (default $LAB_CONFIG)")
        sub.add_argument("--out", metavar="DIR", type=str, help="output directory")
        sub.add_argument("--threads", metavar="N", type=int, help="worker threads (never changes results)")

    ## Sweep

    parser_sweep = subparsers.add_parser("sweep", help="Evaluate every metric and curvature over a t-sweep")
    add_common(parser_sweep)

    ## Verify

    parser_verify = subparsers.add_parser("verify", help="Run the named acceptance checks")
    add_common(parser_verify)
    parser_verify.add_argument("--only", metavar="NAMES", type=str,
                               help="comma separated checks to run: " + ", ".join(verify_core.CHECKS))

    ## Equivalence

    parser_equivalence = subparsers.add_parser("equivalence", help="Pairwise metric equivalence reports")
    add_common(parser_equivalence)

    return parser

def _config(args):
    overrides = {"out_dir": args.out, "threads": args.threads}
    if args.verbose:
        overrides["log_level"] = "DEBUG"
    return lab_core.load_config(args.config, overrides)

def logger_setup(level, handler):
    lab_core.logger_setup(level, handler)
    verify_core.logger.setLevel(level)
    verify_core.logger.addHandler(handler)

def _exit_code(err):
    if isinstance(err, CONFIG_ERRORS):
        return EXIT_CONFIG
    return EXIT_NUMERICAL

def _run(args, action):
    try:
        config = _config(args)
    except CONFIG_ERRORS as ex:
        logger.error("invalid configuration: %s", ex)
        return EXIT_CONFIG
    logger.setLevel(config.log_level)
    for handler in logger.handlers:
        handler.setLevel(config.log_level)
        logger_setup(config.log_level, handler)
    try:
        return action(config)
    except CONFIG_ERRORS as ex:
        logger.error("invalid configuration: %s", ex)
        return EXIT_CONFIG

def cmd_sweep(config):
    paths, err = lab_core.sweep(config)
    if err:
        logger.error("sweep failed: %s", err)
        return _exit_code(err)
    for path in paths:
        print(path)
    return EXIT_OK

def cmd_equivalence(config):
    paths, err = lab_core.equivalence(config)
    if err:
        logger.error("equivalence failed: %s", err)
        return _exit_code(err)
    for path in paths:
        print(path)
    return EXIT_OK

def cmd_verify(config, only=None):
    results = verify_core.run_checks(config, only)
    print(verify_core.format_table(results))
    if all(result.passed for result in results):
        return EXIT_OK
    return EXIT_VERIFY_FAILED

def run_parser(argv=None):
    # parse arguments
    parser = construct_parser()
    args = parser.parse_args(argv)

    # set appropriate function
    function = None
    if args.command == "sweep":
        function = cmd_sweep
    elif args.command == "verify":
        def function(config):
            return cmd_verify(config, args.only)
    elif args.command == "equivalence":
        function = cmd_equivalence
    else:
        parser.print_help()
        sys.exit(EXIT_NO_COMMAND)

    if function:
        sys.exit(_run(args, function))

if __name__ == "__main__":
    handler = setup_logging(logger, logging.INFO)
    log_library_versions(logger)
    run_parser()

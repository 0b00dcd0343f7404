import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from slv_cli.rules import CHECK_GROUPS
from slv_cli.schemas import RunConfig
from slv_cli.services import CSV_COMMANDS, DEFAULT_OUTPUT_DIR, SERVICES, load_model, to_json, write_outputs
from slv_core.errors import ModelValidationError, NumericalFailure

logger = logging.getLogger("slv_cli")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; that code is reserved for numerical failures
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--model", required=True, type=Path, help="model JSON file (or a derive document)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--tol", type=float, default=None, help="integrator tolerance override")
    common.add_argument("--seed", type=int, default=0, help="rng seed")
    common.add_argument("--k", type=int, default=None, help="iteration budget")
    common.add_argument("--n", type=int, default=None, help="number of samples / seasons")
    common.add_argument("--x0", type=float, nargs=3, default=None, metavar=("X1", "X2", "X3"),
                        help="initial state or orbit seed")
    common.add_argument("--workers", type=int, default=1, help="portrait worker processes")
    common.add_argument("--only", action="append", default=[], choices=CHECK_GROUPS,
                        help="verify: run only this check group (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="seasonal-lv", description="Seasonal 3-species Lotka-Volterra Poincare-map lab")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SERVICES:
        sub.add_parser(name, parents=[common])
    return parser


def _fail(code: int, error: str, detail: str) -> int:
    sys.stderr.write(json.dumps({"error": error, "detail": detail}) + "\n")
    return code


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_VALIDATION, "usage", str(exc))

    _configure_logging(args.verbose)

    try:
        cfg = RunConfig(
            command=args.command,
            model_path=args.model,
            output_dir=args.out,
            tol=args.tol,
            rng_seed=args.seed,
            k=args.k,
            n=args.n,
            x0=tuple(args.x0) if args.x0 is not None else None,
            workers=args.workers,
            only=args.only,
            verbose=args.verbose,
        )
        spec = load_model(cfg.model_path)
        output = SERVICES[cfg.command](spec, cfg)

        out_dir = cfg.output_dir
        if out_dir is None and cfg.command in CSV_COMMANDS:
            out_dir = DEFAULT_OUTPUT_DIR
        if out_dir is not None:
            write_outputs(output, out_dir)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, "invalid_input", str(exc))
    except ModelValidationError as exc:
        return _fail(EXIT_VALIDATION, exc.code, exc.detail)
    except ValueError as exc:
        return _fail(EXIT_VALIDATION, "invalid_argument", str(exc))
    except NumericalFailure as exc:
        return _fail(EXIT_NUMERICAL, exc.code, exc.detail)

    if cfg.command == "verify":
        table = output.tables["verify.csv"]
        sys.stdout.write(table[["group", "rule", "value", "threshold", "status"]].to_string(index=False) + "\n")
        if not output.passed:
            failed = table.loc[table["status"] == "fail", "rule"].tolist()
            return _fail(EXIT_NUMERICAL, "verification_failed", f"failed checks: {failed}")
        return EXIT_OK

    sys.stdout.write(to_json(output.record) + "\n")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

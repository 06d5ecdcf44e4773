"""
Command-line interface.

    pnnlab generate   --benchmark cubic --seed 7 --out runs/data
    pnnlab train      --train runs/data/train.csv --depth 4 --width 6
    pnnlab gridsearch --train ... --test ... --depths 1,2,3,4 --widths 2,4,6,8
    pnnlab evaluate   --checkpoint runs/train/checkpoint.json --test ...
    pnnlab gpr        --train ... --test ...
    pnnlab report     --out runs

Settings come from defaults, then --config (KEY=value lines), then
PNNLAB_JOBS, then flags. Exit codes: 0 success, 1 validation, 2 I/O,
3 numerical failure.
"""
import argparse
import logging
import sys
from typing import Dict, List, Optional

from dotenv import load_dotenv

from .errors import PNNLabError
from .services import ExperimentService
from .state.run_config import build_run_config
from .utils.logging_utils import configure_logging

logger = logging.getLogger(__name__)

COMMANDS = ("generate", "train", "gridsearch", "evaluate", "gpr", "report")

# argparse destinations that are not RunConfig fields
_CLI_ONLY = ("command", "config", "log_level", "log_file")


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation failures: exit 1, not argparse's 2"""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _flag(parser: argparse.ArgumentParser, name: str, help: str, **kwargs) -> None:
    parser.add_argument(name, default=argparse.SUPPRESS, help=help, **kwargs)


def _switch(parser: argparse.ArgumentParser, name: str, help: str) -> None:
    parser.add_argument(name, action="store_const", const="true", default=argparse.SUPPRESS, help=help)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="Config file with KEY=value lines (dotenv syntax)")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default: $LOG_LEVEL or INFO)")
    parser.add_argument("--log-file", default=None, help="Also write the log to this file (default: $LOG_FILE)")
    _flag(parser, "--out", "Output directory (default: $PNNLAB_OUTPUT_ROOT/<command>)")
    _flag(parser, "--seed", "Global seed (default 0)")
    _flag(parser, "--jobs", "Worker processes for grid cells (default: $PNNLAB_JOBS or core count)")


def _add_columns(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--input-columns", "Comma-separated input columns (default: all but output and group)")
    _flag(parser, "--output-column", "Output column (default y)")
    _flag(parser, "--group-mode", "exact: group identical input rows; column: use --group-column")
    _flag(parser, "--group-column", "Group id column (default group)")


def _add_datasets(parser: argparse.ArgumentParser, train: bool = True) -> None:
    if train:
        _flag(parser, "--train", "Training CSV")
    _flag(parser, "--test", "Test CSV")
    _add_columns(parser)


def _add_training(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--variance-floor", "Lower bound added to the variance head (default 1e-6)")
    _flag(parser, "--batch-size", "Mini-batch size (default 32)")
    _flag(parser, "--epochs", "Training epochs (default 100)")
    _flag(parser, "--shuffle-seed", "Seed of the epoch shuffle (default: derived from --seed)")
    _flag(parser, "--loss", "heteroscedastic_nll or mse (default heteroscedastic_nll)")
    _flag(parser, "--learning-rate", "RMSProp learning rate (default 0.001)")
    _flag(parser, "--decay", "RMSProp decay (default 0.9)")
    _flag(parser, "--epsilon", "RMSProp epsilon (default 1e-7)")
    _switch(parser, "--standardize", "Z-score the inputs with training-set statistics")


def _add_gpr(parser: argparse.ArgumentParser) -> None:
    _flag(parser, "--length-scale", "Initial length scale (default 1.0)")
    _flag(parser, "--length-scale-lower", "Lower length-scale bound (default 1e-3)")
    _flag(parser, "--length-scale-upper", "Upper length-scale bound (default 1e3)")
    _flag(parser, "--noise-variance", "Noise variance added to the kernel diagonal (default 0.1)")
    _flag(parser, "--bound-grid", "Comma-separated upper length-scale bounds to tune over")
    _flag(parser, "--noise-grid", "Comma-separated noise variances to tune over")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="pnnlab",
        description="Probabilistic neural networks for heteroscedastic regression",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True

    generate = subparsers.add_parser("generate", help="Write train/test CSVs for a benchmark")
    _add_common(generate)
    _flag(generate, "--benchmark", "cubic, ishigami or csv (default cubic)")
    _flag(generate, "--n-train", "Unique training inputs (cubic 100, ishigami 300)")
    _flag(generate, "--n-test", "Unique test inputs (cubic 50, ishigami 100)")
    _flag(generate, "--replicates", "Replicates per input (default 10)")
    _flag(generate, "--ishigami-a", "Ishigami coefficient a (default 7)")
    _flag(generate, "--ishigami-b", "Ishigami coefficient b (default 0.1)")
    _flag(generate, "--data", "Input CSV to split (csv benchmark)")
    _flag(generate, "--test-fraction", "Fraction of groups held out (csv benchmark, default 0.2)")
    _add_columns(generate)

    train = subparsers.add_parser("train", help="Train one network")
    _add_common(train)
    _flag(train, "--train", "Training CSV")
    _add_columns(train)
    _flag(train, "--depth", "Hidden layers (default 4)")
    _flag(train, "--width", "Units per hidden layer (default 6)")
    _add_training(train)

    gridsearch = subparsers.add_parser("gridsearch", help="Architecture grid scored by KL divergence")
    _add_common(gridsearch)
    _add_datasets(gridsearch)
    _flag(gridsearch, "--depths", "Comma-separated depths (default 1,2,3,4)")
    _flag(gridsearch, "--widths", "Comma-separated widths (default 2,4,6,8)")
    _flag(gridsearch, "--seeds-per-cell", "Trained models per cell (default 1)")
    _switch(gridsearch, "--timings", "Record wall-clock seconds in grid.csv")
    _add_training(gridsearch)

    evaluate = subparsers.add_parser("evaluate", help="Score a PNN or GPR checkpoint on test data")
    _add_common(evaluate)
    _flag(evaluate, "--checkpoint", "Checkpoint JSON written by train, gridsearch or gpr")
    _add_datasets(evaluate, train=False)
    _flag(evaluate, "--band-points", "Write band.csv with this many points (1-D inputs only)")

    gpr = subparsers.add_parser("gpr", help="Tune and evaluate the GPR baseline")
    _add_common(gpr)
    _add_datasets(gpr)
    _add_gpr(gpr)
    _flag(gpr, "--band-points", "Write band.csv with this many points (1-D inputs only)")

    report = subparsers.add_parser("report", help="Summarize every manifest below --out")
    _add_common(report)
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, str]:
    return {k: v for k, v in vars(args).items() if k not in _CLI_ONLY}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    try:
        config = build_run_config(args.config, overrides_from_args(args))
        outputs = ExperimentService(config).run(args.command)
        for path in outputs:
            logger.info(f"Wrote {path}")
        return 0
    except PNNLabError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Fatal error in {args.command}: {str(e)}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())

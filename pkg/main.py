import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from commands import handlers
from commands.config import load_run_config
from mtl.normalizer import MODES
from utils.errors import CaseError, ConfigError, DatasetError, ModelFormatError, NumericalFailure

load_dotenv()

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as exit code 1 instead of 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def configure_logging(verbose: bool = False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.getenv('SMARTPG_LOG_FILE', 'smartpg.log'), encoding='UTF-8', mode='w'),
            logging.StreamHandler()
        ],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (ipm, train, loss_weights, sampling, workers)")
    common.add_argument("--verbose", action="store_true", help="log solver iterations")
    common.add_argument("--deterministic", action="store_true", help="leave wall-clock fields out of outputs")
    common.add_argument("--workers", type=int, help="parallel scenario evaluations")

    parser = CliParser(prog="smartpg", description="AC-OPF solving and learned warm starts")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    case = sub.add_parser("case", help="validate or convert case files")
    case_sub = case.add_subparsers(dest="case_command", required=True, parser_class=CliParser)
    validate = case_sub.add_parser("validate", parents=[common], help="parse a case and report its dimensions")
    validate.add_argument("file")
    validate.set_defaults(handler=handlers.case_validate)
    convert = case_sub.add_parser("import", parents=[common], help="convert a MATPOWER .m case to JSON")
    convert.add_argument("file")
    convert.add_argument("-o", "--output", required=True)
    convert.set_defaults(handler=handlers.case_import)

    solve = sub.add_parser("solve", parents=[common], help="solve one OPF instance")
    solve.add_argument("case")
    solve.add_argument("--warm-start", help="warm start JSON (x, lambda, mu, z)")
    solve.add_argument("--no-fallback", action="store_true", help="do not rerun from a cold start on failure")
    solve.add_argument("-o", "--output", help="report JSON")
    solve.add_argument("--history", help="per-iteration CSV")
    solve.set_defaults(handler=handlers.solve_case)

    dataset = sub.add_parser("dataset", help="ground-truth datasets")
    dataset_sub = dataset.add_subparsers(dest="dataset_command", required=True, parser_class=CliParser)
    gen = dataset_sub.add_parser("gen", parents=[common], help="sample loads and solve each scenario")
    gen.add_argument("case")
    gen.add_argument("-n", type=int, help="number of scenarios")
    gen.add_argument("-t", type=float, help="load variation fraction")
    gen.add_argument("--seed", type=int)
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--rejects", help="JSON list of rejected scenario ids")
    gen.set_defaults(handler=handlers.dataset_gen)

    train = sub.add_parser("train", parents=[common], help="train a warm-start network")
    train.add_argument("case")
    train.add_argument("dataset")
    train.add_argument("--no-physics", action="store_true", help="supervised loss only")
    train.add_argument("--separate-heads", action="store_true", help="seven independent networks")
    train.add_argument("--epochs", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--input-norm", choices=MODES)
    train.add_argument("-o", "--output", required=True)
    train.add_argument("--log", help="per-epoch loss CSV")
    train.set_defaults(handler=handlers.train_model)

    predict = sub.add_parser("predict", parents=[common], help="predict a warm start for given loads")
    predict.add_argument("case")
    predict.add_argument("model")
    predict.add_argument("--loads", required=True, help='JSON {"pd": [...], "qd": [...]} in MW/MVAr')
    predict.add_argument("-o", "--output", required=True)
    predict.set_defaults(handler=handlers.predict)

    ablate = sub.add_parser("ablate", parents=[common], help="16-mask warm-start ablation")
    ablate.add_argument("case")
    ablate.add_argument("dataset")
    ablate.add_argument("-o", "--output", required=True)
    ablate.add_argument("--json")
    ablate.add_argument("--limit", type=int, help="use only the first N samples")
    ablate.set_defaults(handler=handlers.ablate)

    morph = sub.add_parser("morph", parents=[common], help="grow a model until its MAPE meets a target")
    morph.add_argument("case")
    morph.add_argument("model")
    morph.add_argument("dataset")
    morph.add_argument("--target-mape", type=float, required=True)
    morph.add_argument("--rounds", type=int, default=3)
    morph.add_argument("-o", "--output", required=True)
    morph.add_argument("--summary", help="JSON record of every round")
    morph.set_defaults(handler=handlers.morph)

    bench = sub.add_parser("bench", parents=[common], help="end-to-end warm-start benchmark")
    bench.add_argument("case")
    bench.add_argument("model")
    bench.add_argument("dataset")
    bench.add_argument("-o", "--output", required=True)
    bench.add_argument("--csv", help="per-scenario CSV")
    bench.set_defaults(handler=handlers.bench_model)
    return parser


def main(argv=None) -> int:
    """Run one subcommand and map failures to exit codes"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE

    configure_logging(args.verbose)
    try:
        config = load_run_config(args.config, args.workers, args.deterministic)
        return args.handler(args, config)
    except ConfigError as e:
        logger.error(f"❌ Invalid configuration: {e}")
        return EXIT_USAGE
    except (CaseError, ModelFormatError, DatasetError) as e:
        logger.error(f"❌ {e}")
        return EXIT_INPUT
    except NumericalFailure as e:
        logger.error(f"❌ Numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"❌ I/O error: {e}")
        return EXIT_IO
    except KeyboardInterrupt:
        logger.info("🛑 Interrupted by user")
        return EXIT_USAGE
    finally:
        logging.shutdown()


if __name__ == "__main__":
    sys.exit(main())

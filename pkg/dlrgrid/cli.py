import argparse
import logging
import sys

from dlrgrid import constants, pipeline
from dlrgrid.config import load_config
from dlrgrid.exceptions import DlrGridError, Infeasible
from dlrgrid.schema import ValidationError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s\t%(levelname)s\t%(name)s\t%(message)s"


def build_parser():
    parser = argparse.ArgumentParser(prog='dlrgrid',
                                     description='Probabilistic DLR forecasting and two-stage grid operation.')
    parser.add_argument('command', choices=constants.cli_command_list)
    parser.add_argument('--config', help='Experiment config JSON; built-in defaults when omitted')
    parser.add_argument('--seed', type=int, help='Overrides "seed" of the config')
    parser.add_argument('--quantile', type=float, help='Quantile level used by --mode quantile')
    parser.add_argument('--mode', choices=constants.operation_mode_list,
                        help='Operation mode; every mode when omitted')
    parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level')
    return parser


def run(args):
    config = load_config(args.config, {'seed': args.seed})
    if args.command == 'gen-data':
        pipeline.gen_data(config)
    elif args.command == 'train':
        pipeline.train_cmd(config)
    elif args.command == 'forecast':
        pipeline.forecast_cmd(config)
    elif args.command == 'evaluate':
        pipeline.evaluate_cmd(config)
    elif args.command == 'operate':
        pipeline.operate_cmd(config, args.mode, args.quantile)
    elif args.command == 'report':
        pipeline.report_cmd(config)
    elif args.command == 'select-hops':
        pipeline.select_hops(config)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    if args.quantile is not None and args.mode not in (None, 'quantile'):
        logger.error("--quantile only applies to --mode quantile")
        return 1
    try:
        run(args)
    except Infeasible as e:
        logger.error(e.message)
        return 2
    except DlrGridError as e:
        logger.error(e.message)
        return 1
    except ValidationError as e:
        logger.error(str(e))
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())

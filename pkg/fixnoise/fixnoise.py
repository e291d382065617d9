#!/usr/bin/env python
# PYTHON_ARGCOMPLETE_OK
# coding: utf8
#
# Copyright (c) 2022 fixnoise contributors.
#
# This file is part of fixnoise.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""
fixnoise transfers a style based generator to a target domain and
interpolates between source and target domains through the noise input
"""

# Standard imports
from __future__ import print_function

import argparse
import logging
import sys

# Third party imports
import argcomplete

# Fixnoise imports
import fixnoise
from fixnoise.errors import (
    ConfigurationError,
    ContractError,
    CorruptionError,
    DegenerateInputError,
    DimensionError,
    FormatError,
    NumericalError,
)
from fixnoise.gradcheck import COMPOSITE_COORDINATES
from fixnoise.objectives import MATCHING_SPACES
from fixnoise.synth_domains import PRESETS

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

DEFAULT_ALPHAS = "1,0.75,0.5,0.25,0"

EXIT_CODES = (
    (
        (
            ConfigurationError,
            DegenerateInputError,
            ContractError,
            DimensionError,
            IndexError,
        ),
        EXIT_USAGE,
    ),
    ((NumericalError,), EXIT_NUMERIC),
    ((FormatError, CorruptionError, OSError), EXIT_IO),
)


def alpha_list(text: str):
    """Comma separated interpolation weights in [0, 1]"""
    try:
        alphas = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as error:
        raise argparse.ArgumentTypeError(
            "alphas must be comma separated numbers, got {}".format(text)
        ) from error
    if not alphas:
        raise argparse.ArgumentTypeError("at least one alpha is needed")
    for alpha in alphas:
        if not 0.0 <= alpha <= 1.0:
            raise argparse.ArgumentTypeError(
                "alpha {} is outside [0, 1]".format(alpha)
            )
    return alphas


def positive_int(text: str):
    """Integer count >= 1"""
    try:
        value = int(text)
    except ValueError as error:
        raise argparse.ArgumentTypeError(
            "expected an integer, got {}".format(text)
        ) from error
    if value < 1:
        raise argparse.ArgumentTypeError(
            "expected a count >= 1, got {}".format(value)
        )
    return value


def _add_config(parser, required_out=False):
    parser.add_argument(
        "config",
        metavar="config.json",
        nargs="?",
        default=None,
        help="json experiment configuration (defaults when omitted)",
    )
    parser.add_argument(
        "--out",
        required=required_out,
        help="output directory (overrides outputDir)",
    )


def get_parser():
    """
    ArgumentParser for fixnoise
    :param None
    :return parser
    """
    parser = argparse.ArgumentParser(
        description=(
            "Transfer a style based generator to a target domain "
            "and interpolate between domains with the noise input"
        ),
        fromfile_prefix_chars="@",
    )
    parser.add_argument(
        "--version",
        "-v",
        action="version",
        version="%(prog)s {version}".format(version=fixnoise.__version__),
    )
    parser.add_argument(
        "--loglevel",
        default="WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"),
        help="Logger level (default: WARNING. Should be one of "
        "(DEBUG, INFO, WARNING, ERROR, CRITICAL)",
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    dataset = commands.add_parser(
        "dataset", help="render the source or target dataset of dataset_opts"
    )
    _add_config(dataset, required_out=True)
    dataset.add_argument(
        "--domain",
        choices=fixnoise.DATASET_DOMAINS,
        default="source",
        help="which dataset_opts preset and count to render",
    )
    dataset.add_argument(
        "--preset",
        choices=sorted(PRESETS),
        default=None,
        help="overrides <domain>_preset (required without config.json)",
    )
    dataset.add_argument(
        "--n", type=positive_int, default=None, help="overrides <domain>_count"
    )
    dataset.add_argument("--seed", type=int, default=None)
    dataset.add_argument("--resolution", type=int, default=None)

    train_source = commands.add_parser(
        "train-source", help="pretrain a source generator"
    )
    _add_config(train_source)
    train_source.add_argument("--data", required=True, help="manifest.json")
    train_source.add_argument("--total-images", type=int, default=None)
    train_source.add_argument("--seed", type=int, default=None)

    transfer = commands.add_parser(
        "transfer", help="transfer a source checkpoint to a target dataset"
    )
    _add_config(transfer)
    transfer.add_argument("--source-ckpt", required=True)
    transfer.add_argument("--data", required=True, help="manifest.json")
    transfer.add_argument(
        "--mode",
        default=None,
        help="fixnoise, plain, freeze-mapping or freezeg=<i>",
    )
    transfer.add_argument("--lambda-fm", type=float, default=None)
    transfer.add_argument(
        "--matching-space", choices=MATCHING_SPACES, default=None
    )
    transfer.add_argument("--total-images", type=int, default=None)
    transfer.add_argument("--seed", type=int, default=None)

    generate = commands.add_parser(
        "generate", help="image grid over interpolation weights"
    )
    generate.add_argument("checkpoint")
    generate.add_argument("--alphas", type=alpha_list, default=DEFAULT_ALPHAS)
    generate.add_argument("--n", type=positive_int, default=8)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--source-ckpt", default=None)
    generate.add_argument("--out", required=True)

    swap = commands.add_parser("swap", help="layer swap or UI2I hybrid")
    swap.add_argument("source_ckpt")
    swap.add_argument("target_ckpt")
    swap.add_argument(
        "--i",
        type=int,
        required=True,
        dest="index",
        help=(
            "number of ladder layers taken from the source, in forward "
            "order: 4x4 conv (with the constant input), 4x4 toRGB, then "
            "conv_up, conv and toRGB for each higher resolution; the "
            "remaining layers come from the target and 0 gives the target"
        ),
    )
    swap.add_argument("--ui2i", action="store_true")
    swap.add_argument(
        "--mapping", choices=("source", "target"), default="target"
    )
    swap.add_argument("--out", required=True)

    evaluate = commands.add_parser(
        "eval", help="FID, KID and perceptual distance over alphas"
    )
    _add_config(evaluate)
    evaluate.add_argument("--source-ckpt", required=True)
    evaluate.add_argument("--target-ckpt", required=True)
    evaluate.add_argument("--target-data", required=True)
    evaluate.add_argument("--alphas", type=alpha_list, default=None)
    evaluate.add_argument("--n-samples", type=int, default=None)

    gradcheck = commands.add_parser(
        "gradcheck", help="finite difference gradient checks"
    )
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument(
        "--coordinates",
        type=positive_int,
        default=COMPOSITE_COORDINATES,
        help="coordinates sampled per parameter tensor in the composite "
        "loss checks (default: %(default)s)",
    )
    gradcheck.add_argument("--out", default=None)

    modulate = commands.add_parser(
        "modulate", help="style channel modulation over alphas"
    )
    modulate.add_argument("checkpoint")
    modulate.add_argument("--layer", type=int, required=True)
    modulate.add_argument("--channel", type=int, required=True)
    modulate.add_argument("--delta", type=float, default=3.0)
    modulate.add_argument("--alphas", type=alpha_list, default=DEFAULT_ALPHAS)
    modulate.add_argument("--n", type=positive_int, default=4)
    modulate.add_argument("--seed", type=int, default=0)
    modulate.add_argument("--out", required=True)

    compare = commands.add_parser(
        "compare", help="FID and KID of several generators"
    )
    _add_config(compare)
    compare.add_argument("--target-data", required=True)
    compare.add_argument(
        "--entry",
        action="append",
        required=True,
        help="name=checkpoint[@alpha], repeatable",
    )
    return parser


def _arguments(args) -> dict:
    return {
        key: value
        for key, value in vars(args).items()
        if key not in ("config", "loglevel")
    }


def _initialize(args, overrides=None) -> dict:
    cfg = fixnoise.compute_initialization(args.config, args.out, overrides)
    fixnoise.write_effective_config(cfg["outputDir"], cfg)
    return cfg


def run(args) -> int:
    """
    Run one fixnoise command

    :param args: parsed command line
    :return: exit code
    """
    command = args.command
    if command == "dataset":
        if args.config is None and args.preset is None:
            raise ConfigurationError(
                "--preset is required without a configuration file"
            )
        cfg = _initialize(
            args,
            {
                "dataset_opts": {
                    args.domain + "_preset": args.preset,
                    args.domain + "_count": args.n,
                    "seed": args.seed,
                }
            },
        )
        print(
            fixnoise.compute_domain_dataset(
                cfg, args.domain, args.resolution
            )
        )
    elif command == "train-source":
        cfg = _initialize(
            args,
            {
                "train_opts": {
                    "source_total_images": args.total_images,
                    "seed": args.seed,
                }
            },
        )
        print(fixnoise.compute_train_source(cfg, args.data))
    elif command == "transfer":
        cfg = _initialize(
            args,
            {
                "train_opts": {
                    "mode": args.mode,
                    "total_images": args.total_images,
                    "seed": args.seed,
                },
                "loss_opts": {
                    "lambda_fm": args.lambda_fm,
                    "matching_space": args.matching_space,
                },
            },
        )
        print(fixnoise.compute_transfer(cfg, args.source_ckpt, args.data))
    elif command == "generate":
        fixnoise.write_effective_config(args.out, _arguments(args))
        print(
            fixnoise.compute_generate(
                args.checkpoint,
                args.alphas,
                args.n,
                args.seed,
                args.out,
                args.source_ckpt,
            )
        )
    elif command == "swap":
        fixnoise.write_effective_config(args.out, _arguments(args))
        print(
            fixnoise.compute_swap(
                args.source_ckpt,
                args.target_ckpt,
                args.index,
                args.out,
                args.ui2i,
                args.mapping,
            )
        )
    elif command == "eval":
        cfg = _initialize(
            args,
            {
                "metrics_opts": {
                    "alphas": args.alphas,
                    "n_samples": args.n_samples,
                }
            },
        )
        print(
            fixnoise.compute_eval(
                cfg, args.source_ckpt, args.target_ckpt, args.target_data
            )
        )
    elif command == "gradcheck":
        if args.out is not None:
            fixnoise.write_effective_config(args.out, _arguments(args))
        rows = fixnoise.compute_gradcheck(
            args.out, args.seed, args.coordinates
        )
        if not all(row.passed for row in rows):
            logging.error("gradient check failed")
            return EXIT_NUMERIC
    elif command == "modulate":
        fixnoise.write_effective_config(args.out, _arguments(args))
        print(
            fixnoise.compute_modulate(
                args.checkpoint,
                args.layer,
                args.channel,
                args.delta,
                args.alphas,
                args.n,
                args.seed,
                args.out,
            )
        )
    elif command == "compare":
        cfg = _initialize(args)
        print(fixnoise.compute_compare(cfg, args.target_data, args.entry))
    return EXIT_OK


def exit_code(error: Exception) -> int:
    """Map an error onto the command line exit code"""
    for families, code in EXIT_CODES:
        if isinstance(error, families):
            return code
    return 1


def main(argv=None):
    """
    Call fixnoise's main
    """
    parser = get_parser()
    argcomplete.autocomplete(parser)
    args = parser.parse_args(argv)
    fixnoise.setup_logging(default_level=getattr(logging, args.loglevel))
    try:
        code = run(args)
    except Exception as error:  # pylint: disable=broad-except
        code = exit_code(error)
        print("fixnoise {}: {}".format(args.command, error), file=sys.stderr)
        if isinstance(error, NumericalError) and error.snapshot_path:
            print(
                "diagnostic snapshot: {}".format(error.snapshot_path),
                file=sys.stderr,
            )
        if code == 1:
            logging.exception("unexpected failure")
    sys.exit(code)


if __name__ == "__main__":
    main()

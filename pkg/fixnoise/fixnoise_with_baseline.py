#!/usr/bin/env python
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
Tests : Compare results against baseline

CSV reports are compared value by value with an epsilon, checkpoints by
their sha256 digest.
"""

# Standard imports
import argparse
import csv
import glob
import math
import os
from collections import OrderedDict

# Third party imports
import argcomplete

# Fixnoise imports
from fixnoise.checkpoint import file_sha256


def load_csv(csv_file):
    with open(csv_file, "r", newline="") as file:
        return list(csv.reader(file, quoting=csv.QUOTE_NONNUMERIC))


def _relative_files(root, ext):
    return sorted(
        os.path.relpath(path, root)
        for path in glob.glob(
            os.path.join(root, "**", "*" + ext), recursive=True
        )
        # the divergence snapshot only exists for failed runs
        if not path.endswith("nan_snapshot.fxnz")
    )


def check_csv(csv_ref, csv_test, csv_file, epsilon):
    """
    Check CSV function: same header, same row labels, numbers within
    epsilon
    """
    if csv_ref[0] != csv_test[0]:
        raise ValueError(
            "Inconsistent columns between baseline ({}) "
            "and tested version ({}) for file {}".format(
                csv_ref[0], csv_test[0], csv_file
            )
        )
    if len(csv_ref) != len(csv_test):
        raise ValueError(
            "Inconsistent row number for file {}: {} vs {}".format(
                csv_file, len(csv_ref), len(csv_test)
            )
        )

    csv_differences = []
    # first row of csv file is titles
    for row_ref, row_test in zip(csv_ref[1:], csv_test[1:]):
        for column, ref, test in zip(csv_ref[0], row_ref, row_test):
            if isinstance(ref, float) and isinstance(test, float):
                same = abs(ref - test) <= epsilon or (
                    math.isnan(ref) and math.isnan(test)
                )
            else:
                same = ref == test
            if not same:
                diff = OrderedDict()
                diff["csv_file"] = csv_file
                diff["row"] = row_ref[0]
                diff["column"] = column
                diff["baseline_val"] = ref
                diff["test_val"] = test
                csv_differences.append(diff)
    return csv_differences


def check_checkpoints(baseline_dir, output_dir, checkpoint_files):
    """Checkpoint files whose sha256 differ"""
    return [
        name
        for name in checkpoint_files
        if file_sha256(os.path.join(baseline_dir, name))
        != file_sha256(os.path.join(output_dir, name))
    ]


def run(baseline_dir, output_dir, epsilon=1.0e-6):
    """
    Compare output_dir results to baseline_dir ones

    :param baseline_dir: reference run output directory
    :param output_dir: tested run output directory
    :param epsilon: tolerance on CSV numbers (0 for bitwise runs)
    :raises ValueError: on any difference
    """
    baseline_csv_files = _relative_files(baseline_dir, ".csv")
    output_csv_files = _relative_files(output_dir, ".csv")
    if baseline_csv_files != output_csv_files:
        raise ValueError(
            "Fixnoise tests with baseline: KO. "
            "Inconsistent CSV files. \nCSV baseline files: {} \n"
            "CSV tested output files: {}".format(
                baseline_csv_files, output_csv_files
            )
        )
    baseline_checkpoints = _relative_files(baseline_dir, ".fxnz")
    output_checkpoints = _relative_files(output_dir, ".fxnz")
    if baseline_checkpoints != output_checkpoints:
        raise ValueError(
            "Fixnoise tests with baseline: KO. "
            "Inconsistent checkpoint files. \nbaseline: {} \n"
            "tested: {}".format(baseline_checkpoints, output_checkpoints)
        )

    differences = [
        check_csv(
            load_csv(os.path.join(baseline_dir, name)),
            load_csv(os.path.join(output_dir, name)),
            name,
            epsilon,
        )
        for name in baseline_csv_files
    ]
    if sum(len(diff) for diff in differences) != 0:
        raise ValueError(
            "Fixnoise tests with baseline: KO."
            " Invalid results : \n {}".format(differences)
        )
    changed = check_checkpoints(baseline_dir, output_dir, baseline_checkpoints)
    if changed:
        raise ValueError(
            "Fixnoise tests with baseline: KO."
            " Checkpoints differ: {}".format(changed)
        )

    print(
        "Fixnoise tests with baseline: OK."
        " No difference between tested files:"
    )
    row_format = "{:<72}  <--> {:<72}"
    head_table = ["**  Baseline files **", "**  Output files **"]
    print(row_format.format(*head_table))
    for name in baseline_csv_files + baseline_checkpoints:
        print(
            row_format.format(
                os.path.join(baseline_dir, name),
                os.path.join(output_dir, name),
            )
        )


def get_parser():
    """
    ArgumentParser for fixnoise_with_baseline
    :param None
    :return parser
    """
    parser = argparse.ArgumentParser(
        description=("Compares fixnoise run outputs to a baseline run")
    )
    parser.add_argument(
        "--baselinePath", default="./test_baseline", help="path to the baseline"
    )
    parser.add_argument(
        "--currentRunPath",
        default="./test_output",
        help="path to the fixnoise run to test against the baseline",
    )
    parser.add_argument(
        "--epsilon",
        type=float,
        default=1.0e-6,
        help="tolerance on CSV values (0 for bitwise comparison)",
    )
    return parser


def main():
    """
    Call fixnoise_with_baseline's main
    """
    parser = get_parser()
    argcomplete.autocomplete(parser)
    args = parser.parse_args()
    try:
        run(args.baselinePath, args.currentRunPath, args.epsilon)
    except ValueError as value_error:
        print(value_error)
        raise
    except Exception as error:
        print("Fixnoise unexpected error: {} \n".format(error))
        raise


if __name__ == "__main__":
    main()

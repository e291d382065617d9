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
Output tree design of a fixnoise run directory
"""

# Standard imports
import os

# In what comes next : OTD stands for Output Tree Design
default_OTD = {
    # first seen output
    "effective_config.json": ".",
    # datasets
    "datasets_dir": "./datasets",
    # training
    "checkpoints_dir": "./checkpoints",
    "nan_snapshot.fxnz": "./checkpoints",
    "logs_dir": "./logs",
    "metrics.jsonl": "./logs",
    # generation grids
    "grids_dir": "./grids",
    "cells_dir": "./grids/cells",
    # evaluation reports
    "reports_dir": "./reports",
    "metric_report.json": "./reports",
    "metric_report.csv": "./reports",
    "alpha_sweep.png": "./reports",
    "baselines.json": "./reports",
    "baselines.csv": "./reports",
    "gradcheck.json": "./reports",
    "gradcheck.csv": "./reports",
}


supported_OTD = {"default_OTD": default_OTD}


def get_otd_dirs(design="default_OTD"):
    return sorted(set(supported_OTD[design].values()))


def get_out_dir(key, design="default_OTD"):
    return supported_OTD[design][key]


def get_out_file_path(key, design="default_OTD"):
    return os.path.join(get_out_dir(key, design), key)

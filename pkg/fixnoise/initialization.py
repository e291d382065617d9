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
Init part of fixnoise
This is where the experiment configuration is read, merged with the
default options and checked as a whole before any work starts.
"""

# Standard imports
import copy
import errno
import json
import os
from typing import Tuple

# Fixnoise imports
from .errors import ConfigurationError
from .metrics_eval import MetricsConfig
from .objectives import LossConfig
from .output_tree_design import supported_OTD
from .stylegan_nets import DiscriminatorConfig, GeneratorConfig
from .synth_domains import get_preset
from .transfer_trainer import TrainConfig

default_dataset_opts = {
    "source_preset": "similar-source",
    "target_preset": "similar-target",
    "source_count": 2000,
    "target_count": 500,
    "seed": 7,
}

default_generator_opts = GeneratorConfig().to_dict()

# transfer options, plus the source pretraining budget and the number of
# generator steps between two feature matching terms
default_train_opts = dict(
    TrainConfig().to_dict(), source_total_images=None, fm_interval=1
)

default_loss_opts = LossConfig().to_dict()

default_metrics_opts = MetricsConfig().to_dict()

DEFAULT_OPTS = {
    "dataset_opts": default_dataset_opts,
    "generator_opts": default_generator_opts,
    "train_opts": default_train_opts,
    "loss_opts": default_loss_opts,
    "metrics_opts": default_metrics_opts,
}

SUPPORTED_KEYS = ("outputDir", "otd") + tuple(DEFAULT_OPTS)


def mkdir_p(path):
    """
    Create a directory without complaining if it already exists.
    """
    try:
        os.makedirs(path)
    except OSError as exc:
        if exc.errno == errno.EEXIST and os.path.isdir(path):
            pass
        else:
            raise


def read_config(config_json: str) -> dict:
    """
    Read a JSON experiment configuration

    :param config_json: path of the configuration file
    """
    with open(config_json, "r") as config_json_file:
        try:
            return json.load(config_json_file)
        except ValueError as error:
            raise ConfigurationError(
                "configuration {} is not valid JSON: {}".format(
                    config_json, error
                )
            ) from error


def initialization_opts(cfg: dict) -> dict:
    """
    Fill every options section with the defaults the user has not set

    :param cfg: configuration, updated in place
    """
    for section, defaults in DEFAULT_OPTS.items():
        if cfg.get(section) is None:
            cfg[section] = copy.deepcopy(defaults)
        else:
            # we keep users items and add default items he has not set
            cfg[section] = dict(
                list(copy.deepcopy(defaults).items())
                + list(cfg[section].items())
            )
    return cfg


def apply_overrides(cfg: dict, section: str, **values) -> dict:
    """Set the command line values that were given (not None)"""
    for key, value in values.items():
        if value is not None:
            cfg[section][key] = value
    return cfg


def check_parameters(cfg: dict):
    """
    Checks parameters: unknown keys, option types and ranges, presets

    :raises ConfigurationError: first problem found
    """
    unknown = sorted(set(cfg) - set(SUPPORTED_KEYS))
    if unknown:
        raise ConfigurationError(
            "unknown configuration keys {} (supported: {})".format(
                unknown, list(SUPPORTED_KEYS)
            )
        )
    for section, defaults in DEFAULT_OPTS.items():
        extra = sorted(set(cfg.get(section, {})) - set(defaults))
        if extra:
            raise ConfigurationError(
                "unknown keys {} in {}".format(extra, section)
            )

    # check output tree design
    if "otd" in cfg and cfg["otd"] not in supported_OTD:
        raise ConfigurationError(
            "output tree design set by user ({}) is not supported"
            " (available options are {})".format(cfg["otd"], supported_OTD)
        )
    cfg["otd"] = "default_OTD"

    g_config = generator_config(cfg)
    DiscriminatorConfig.from_generator(g_config)
    train_configs(cfg)
    loss_config(cfg)
    metrics_config(cfg)
    dataset = cfg["dataset_opts"]
    for key in ("source_preset", "target_preset"):
        get_preset(dataset[key])
    for key in ("source_count", "target_count"):
        if int(dataset[key]) < 1:
            raise ConfigurationError("{} must be >= 1".format(key))


def generator_config(cfg: dict) -> GeneratorConfig:
    return GeneratorConfig.from_dict(cfg["generator_opts"])


def train_configs(cfg: dict) -> Tuple[TrainConfig, TrainConfig, int]:
    """
    Source pretraining and transfer configurations, and fm_interval
    """
    opts = dict(cfg["train_opts"])
    source_total = opts.pop("source_total_images")
    fm_interval = int(opts.pop("fm_interval"))
    if fm_interval < 1:
        raise ConfigurationError("fm_interval must be >= 1")
    transfer_config = TrainConfig.from_dict(opts)
    if source_total is not None:
        opts["total_images"] = source_total
    opts["mode"] = "plain"
    return TrainConfig.from_dict(opts), transfer_config, fm_interval


def loss_config(cfg: dict) -> LossConfig:
    return LossConfig.from_dict(cfg["loss_opts"])


def metrics_config(cfg: dict) -> MetricsConfig:
    return MetricsConfig.from_dict(cfg["metrics_opts"])

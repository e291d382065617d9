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
Layer-swap and UI2I hybrids built from a source and a target checkpoint.

Ladder layers are counted in forward order (feature convolutions and tRGB
projections interleaved). A layer carries its style affine, and the first
layer carries the learned constant.
"""

# Standard imports
import logging
import os
from collections import OrderedDict
from typing import List

# Third party imports
import numpy as np

# Fixnoise imports
from .checkpoint import TrainingState, file_sha256, save_checkpoint
from .errors import ConfigurationError
from .stylegan_nets import (
    GeneratorModel,
    build_ladder,
    layer_parameter_names,
    mapping_parameter_names,
)
from .tensor_autodiff import parameter

MAPPING_OWNERS = ("source", "target")


def num_swappable_layers(model: GeneratorModel) -> int:
    return len(build_ladder(model.config))


def source_owned_names(
    model: GeneratorModel, i: int, mapping: str = "target"
) -> List[str]:
    """Parameter names a hybrid takes from the source model"""
    if mapping not in MAPPING_OWNERS:
        raise ConfigurationError(
            "mapping must come from one of {}, got {}".format(
                MAPPING_OWNERS, mapping
            )
        )
    ladder = build_ladder(model.config)
    if not 0 <= i <= len(ladder):
        raise ConfigurationError(
            "swap index {} out of range [0, {}]".format(i, len(ladder))
        )
    names = layer_parameter_names(model.config, ladder[:i])
    if mapping == "source":
        names = mapping_parameter_names(model.config) + names
    return names


def layer_swap(
    source: GeneratorModel,
    target: GeneratorModel,
    i: int,
    mapping: str = "target",
) -> GeneratorModel:
    """
    First i ladder layers from source, the remainder from target.

    :param source: source generator
    :param target: transferred generator
    :param i: number of source layers
    :param mapping: which parent provides the mapping network
    :return: hybrid generator (parameter copies)
    """
    if source.config != target.config:
        raise ConfigurationError(
            "cannot swap layers of generators with different configurations"
        )
    owned = set(source_owned_names(target, i, mapping))
    params = OrderedDict(
        (
            name,
            parameter((source if name in owned else target).params[name].data),
        )
        for name in target.params
    )
    anchor_seed = target.anchor_seed
    if source.anchor_seed != target.anchor_seed:
        logging.warning(
            "Swapping generators with different anchor seeds, the hybrid "
            "keeps the target seed"
        )
    return GeneratorModel(target.config, params, anchor_seed)


def ui2i_compose(
    source: GeneratorModel, target: TrainingState, i: int
) -> GeneratorModel:
    """
    Layer swap with a target trained with a frozen mapping network, so
    that source and target share their W space.

    :param source: source generator
    :param target: training state of a freeze-mapping transfer
    :param i: number of source layers
    :raises ConfigurationError: target mode or mapping does not match
    """
    mode = target.metadata.get("mode")
    if mode != "freeze-mapping":
        raise ConfigurationError(
            "UI2I needs a target trained with mode freeze-mapping, "
            "got {}".format(mode)
        )
    foreign = [
        name
        for name in mapping_parameter_names(source.config)
        if name not in target.g_ema.params
        or not np.array_equal(
            source.params[name].data, target.g_ema.params[name].data
        )
    ]
    if foreign:
        raise ConfigurationError(
            "UI2I target was not transferred from this source: mapping "
            "parameters differ ({})".format(", ".join(foreign))
        )
    return layer_swap(source, target.g_ema, i, mapping="target")


def save_hybrid(
    hybrid: GeneratorModel,
    path: str,
    i: int,
    source_path: str,
    target_path: str,
    donor: TrainingState,
    method: str = "layer-swap",
) -> TrainingState:
    """
    Write a hybrid generator checkpoint recording its parents.

    The hybrid is stored as both G and G_ema; the discriminator of the
    donor state (the target) is kept so the file loads as any other
    checkpoint.
    """
    metadata = {
        "kind": "hybrid",
        "method": method,
        "swap_index": i,
        "source_layers": [
            layer.name for layer in build_ladder(hybrid.config)[:i]
        ],
        "source_sha256": file_sha256(source_path),
        "target_sha256": file_sha256(target_path),
        "source_path": os.path.basename(source_path),
        "target_path": os.path.basename(target_path),
        "mode": donor.metadata.get("mode"),
    }
    state = TrainingState(hybrid, hybrid.copy(), donor.d, metadata=metadata)
    save_checkpoint(state, path)
    return state

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
Shared fixtures: toy 8x8 networks small enough for finite differences
and short training runs.
"""

# Standard imports
import os

# Third party imports
import numpy as np
import pytest

# Fixnoise imports
from fixnoise.checkpoint import TrainingState
from fixnoise.stylegan_nets import (
    DiscriminatorConfig,
    GeneratorConfig,
    init_discriminator,
    init_generator,
)

TESTS_DIR = os.path.dirname(os.path.abspath(__file__))


@pytest.fixture(name="toy_config")
def fixture_toy_config():
    return GeneratorConfig(
        z_dim=8,
        w_dim=8,
        final_resolution=8,
        channel_max=8,
        channel_min=4,
        mapping_layers=2,
    )


@pytest.fixture(name="toy_generator")
def fixture_toy_generator(toy_config):
    return init_generator(toy_config, np.random.default_rng(0), anchor_seed=11)


@pytest.fixture(name="toy_discriminator")
def fixture_toy_discriminator(toy_config):
    return init_discriminator(
        DiscriminatorConfig.from_generator(toy_config),
        np.random.default_rng(1),
    )


@pytest.fixture(name="toy_state")
def fixture_toy_state(toy_generator, toy_discriminator):
    return TrainingState(
        toy_generator,
        toy_generator.copy(),
        toy_discriminator,
        metadata={"kind": "source", "mode": "plain"},
    )


@pytest.fixture(name="toy_images")
def fixture_toy_images():
    """Smooth 8x8 images in [-1, 1]"""
    rng = np.random.default_rng(5)
    return np.tanh(rng.standard_normal((12, 3, 8, 8)))


@pytest.fixture(name="config_file")
def fixture_config_file():
    return os.path.join(TESTS_DIR, "test_config.json")

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
This module contains functions to test Layer-swap and UI2I hybrids.
"""

# Third party imports
import numpy as np
import pytest

# Fixnoise imports
from fixnoise.checkpoint import (
    TrainingState,
    file_sha256,
    load_checkpoint,
    save_checkpoint,
)
from fixnoise.errors import ConfigurationError
from fixnoise.model_surgery import (
    layer_swap,
    num_swappable_layers,
    save_hybrid,
    source_owned_names,
    ui2i_compose,
)
from fixnoise.stylegan_nets import (
    GeneratorConfig,
    anchored_noise,
    build_ladder,
    generate,
    init_generator,
    layer_parameter_names,
    mapping_parameter_names,
)


@pytest.fixture(name="target_generator")
def fixture_target_generator(toy_generator):
    target = toy_generator.copy()
    for param in target.parameters():
        param.data = param.data + 0.5
    return target


def _assert_params_equal(first, second, names):
    for name in names:
        np.testing.assert_array_equal(
            first.params[name].data, second.params[name].data
        )


@pytest.mark.unit_tests
def test_swap_zero_is_target(toy_generator, target_generator):
    hybrid = layer_swap(toy_generator, target_generator, 0)
    _assert_params_equal(hybrid, target_generator, target_generator.params)
    assert hybrid.anchor_seed == target_generator.anchor_seed


@pytest.mark.unit_tests
def test_full_swap_with_source_mapping_is_source(
    toy_generator, target_generator
):
    last = num_swappable_layers(toy_generator)
    assert last == 5
    hybrid = layer_swap(toy_generator, target_generator, last, "source")
    _assert_params_equal(hybrid, toy_generator, toy_generator.params)


@pytest.mark.unit_tests
def test_partial_swap(toy_generator, target_generator):
    config = toy_generator.config
    hybrid = layer_swap(toy_generator, target_generator, 2)
    from_source = layer_parameter_names(config, build_ladder(config)[:2])
    _assert_params_equal(hybrid, toy_generator, from_source)
    _assert_params_equal(
        hybrid,
        target_generator,
        [n for n in target_generator.params if n not in from_source],
    )
    assert source_owned_names(toy_generator, 2) == from_source


@pytest.mark.unit_tests
def test_hybrid_owns_copies(toy_generator, target_generator):
    hybrid = layer_swap(toy_generator, target_generator, 1)
    hybrid.params["synthesis.4x4.const"].data += 1.0
    assert not np.array_equal(
        hybrid.params["synthesis.4x4.const"].data,
        toy_generator.params["synthesis.4x4.const"].data,
    )


@pytest.mark.unit_tests
def test_swap_checks(toy_generator, target_generator):
    with pytest.raises(ConfigurationError):
        layer_swap(toy_generator, target_generator, 6)
    with pytest.raises(ConfigurationError):
        layer_swap(toy_generator, target_generator, -1)
    with pytest.raises(ConfigurationError):
        layer_swap(toy_generator, target_generator, 1, mapping="both")
    other = init_generator(
        GeneratorConfig(
            z_dim=8, w_dim=8, final_resolution=16, channel_max=8, channel_min=4
        ),
        np.random.default_rng(0),
    )
    with pytest.raises(ConfigurationError):
        layer_swap(toy_generator, other, 1)


@pytest.mark.unit_tests
def test_ui2i(toy_generator, toy_discriminator):
    """
    A target trained with a frozen mapping shares the source mapping,
    which the hybrid keeps
    """
    target = toy_generator.copy()
    mapping = set(mapping_parameter_names(target.config))
    for name, param in target.params.items():
        if name not in mapping:
            param.data = param.data - 0.25
    state = TrainingState(
        target, target, toy_discriminator, metadata={"mode": "freeze-mapping"}
    )
    hybrid = ui2i_compose(toy_generator, state, 3)
    _assert_params_equal(hybrid, toy_generator, mapping)
    state.metadata["mode"] = "fixnoise"
    with pytest.raises(ConfigurationError):
        ui2i_compose(toy_generator, state, 3)


@pytest.mark.unit_tests
def test_ui2i_needs_the_source_mapping(toy_generator, toy_discriminator):
    foreign = init_generator(
        toy_generator.config, np.random.default_rng(7), anchor_seed=11
    )
    state = TrainingState(
        foreign, foreign, toy_discriminator, metadata={"mode": "freeze-mapping"}
    )
    with pytest.raises(ConfigurationError, match="mapping parameters differ"):
        ui2i_compose(toy_generator, state, 3)

    # a single altered mapping entry is enough
    target = toy_generator.copy()
    name = mapping_parameter_names(target.config)[-1]
    target.params[name].data = target.params[name].data + 0.5
    state = TrainingState(
        target, target, toy_discriminator, metadata={"mode": "freeze-mapping"}
    )
    with pytest.raises(ConfigurationError, match=name):
        ui2i_compose(toy_generator, state, 3)


@pytest.mark.functional_tests
def test_save_hybrid(tmp_path, toy_state, target_generator):
    source_path = str(tmp_path / "source.fxnz")
    target_path = str(tmp_path / "target.fxnz")
    save_checkpoint(toy_state, source_path)
    target_state = TrainingState(
        target_generator,
        target_generator,
        toy_state.d,
        metadata={"mode": "fixnoise"},
    )
    save_checkpoint(target_state, target_path)

    hybrid = layer_swap(toy_state.g_ema, target_generator, 2)
    path = str(tmp_path / "hybrid.fxnz")
    save_hybrid(hybrid, path, 2, source_path, target_path, target_state)
    loaded = load_checkpoint(path)
    assert loaded.metadata["kind"] == "hybrid"
    assert loaded.metadata["swap_index"] == 2
    assert loaded.metadata["source_layers"] == ["4x4.conv", "4x4.torgb"]
    assert loaded.metadata["source_sha256"] == file_sha256(source_path)
    assert loaded.metadata["target_path"] == "target.fxnz"
    _assert_params_equal(loaded.g_ema, hybrid, hybrid.params)
    assert loaded.g_ema.anchor_seed == target_generator.anchor_seed


@pytest.mark.unit_tests
def test_source_ownership_grows_with_index(toy_generator):
    owned = [
        set(source_owned_names(toy_generator, i))
        for i in range(num_swappable_layers(toy_generator) + 1)
    ]
    assert not owned[0]
    for smaller, larger in zip(owned, owned[1:]):
        assert smaller < larger


@pytest.mark.unit_tests
def test_swapping_back_restores_parents(toy_generator, target_generator):
    for i in range(num_swappable_layers(toy_generator) + 1):
        hybrid = layer_swap(toy_generator, target_generator, i)
        back = layer_swap(target_generator, hybrid, i)
        _assert_params_equal(back, target_generator, target_generator.params)
        source_again = layer_swap(hybrid, toy_generator, i)
        _assert_params_equal(source_again, toy_generator, toy_generator.params)


@pytest.mark.unit_tests
def test_intermediate_hybrid_differs_from_parents(
    toy_generator, target_generator
):
    z = np.random.default_rng(5).standard_normal((3, 8))
    hybrid = layer_swap(toy_generator, target_generator, 2)
    images = generate(hybrid, z, anchored_noise(hybrid))
    for parent in (toy_generator, target_generator):
        assert not np.allclose(
            images, generate(parent, z, anchored_noise(parent))
        )

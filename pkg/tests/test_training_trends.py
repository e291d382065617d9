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
This module contains functions to test the expected trends of desk
scale training: pretraining approaches the data, transfer approaches
the target domain, and the interpolation weight trades source
correspondence for target fidelity.
"""

# Standard imports
import csv
import json
import os

# Third party imports
import numpy as np
import pytest

# Fixnoise imports
import fixnoise
from fixnoise.img_tools import THREADS_ENV
from fixnoise.metrics_eval import (
    build_extractor,
    extract_features,
    fid,
    generated_images,
)
from fixnoise.objectives import LossConfig
from fixnoise.stylegan_nets import GeneratorConfig, init_generator, sample_noise
from fixnoise.synth_domains import load_dataset_array
from fixnoise.transfer_trainer import TrainConfig, pretrain_source, rng_stream

DESK_CONFIG = {
    "generator_opts": {"final_resolution": 16},
    "train_opts": {
        "total_images": 2000,
        "source_total_images": 3000,
        "ema_halflife_images": 500,
        "mode": "fixnoise",
    },
    "metrics_opts": {"n_samples": 200, "alphas": [1.0, 0.5, 0.0]},
}


def _read_csv(path):
    with open(path, newline="") as stream:
        rows = list(csv.reader(stream, quoting=csv.QUOTE_NONNUMERIC))
    return [dict(zip(rows[0], row)) for row in rows[1:]]


def _fid_to_data(model, features, extractor, n=200):
    rng = np.random.default_rng(2)
    z = rng.standard_normal((n, model.config.z_dim))
    images = generated_images(
        model, z, sample_noise(rng, model, "random", n)
    )
    return fid(extract_features(images, extractor), features)


@pytest.fixture(name="desk_run")
def fixture_desk_run(tmp_path_factory):
    """Source pretraining then fixnoise transfer on the similar presets"""
    root = str(tmp_path_factory.mktemp("desk"))
    config_file = os.path.join(root, "config.json")
    with open(config_file, "w") as stream:
        json.dump(DESK_CONFIG, stream)
    manifests = {
        preset: fixnoise.compute_dataset(preset, 200, 3, root, 16)
        for preset in ("similar-source", "similar-target")
    }
    source_cfg = fixnoise.compute_initialization(
        config_file, os.path.join(root, "source")
    )
    source_ckpt = fixnoise.compute_train_source(
        source_cfg, manifests["similar-source"]
    )
    target_cfg = fixnoise.compute_initialization(
        config_file, os.path.join(root, "target")
    )
    target_ckpt = fixnoise.compute_transfer(
        target_cfg, source_ckpt, manifests["similar-target"]
    )
    return target_cfg, source_ckpt, target_ckpt, manifests


@pytest.mark.slow
def test_pretraining_lowers_fid(tmp_path, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "1")
    manifest = fixnoise.compute_dataset(
        "similar-source", 200, 3, str(tmp_path), 16
    )
    images = load_dataset_array(manifest)
    g_config = GeneratorConfig(final_resolution=16)
    train_config = TrainConfig(
        total_images=3000, ema_halflife_images=500, seed=4
    )
    initial = init_generator(g_config, rng_stream(4, "init"))
    state = pretrain_source(g_config, train_config, LossConfig(), images)

    extractor = build_extractor(0, (8, 16))
    features = extract_features(images, extractor)
    assert _fid_to_data(state.g_ema, features, extractor) < _fid_to_data(
        initial, features, extractor
    )


@pytest.mark.slow
def test_perceptual_distance_grows_as_alpha_decreases(desk_run):
    cfg, source_ckpt, target_ckpt, manifests = desk_run
    csv_path = fixnoise.compute_eval(
        cfg, source_ckpt, target_ckpt, manifests["similar-target"]
    )
    rows = _read_csv(csv_path)
    assert [row["alpha"] for row in rows] == [1.0, 0.5, 0.0]
    distances = [row["Perceptual distance"] for row in rows]
    assert distances[0] < distances[2]
    assert distances[0] <= distances[1] <= distances[2]


@pytest.mark.slow
def test_transfer_approaches_the_target_domain(desk_run):
    cfg, source_ckpt, target_ckpt, manifests = desk_run
    csv_path = fixnoise.compute_compare(
        cfg,
        manifests["similar-target"],
        [
            "source={}".format(source_ckpt),
            "fixnoise={}".format(target_ckpt),
        ],
    )
    rows = {row["Method"]: row for row in _read_csv(csv_path)}
    assert rows["fixnoise"]["FID"] < rows["source"]["FID"]

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
This module contains functions to test the FXNZ checkpoint format.
"""

# Standard imports
import os
import struct

# Third party imports
import numpy as np
import pytest

# Fixnoise imports
from fixnoise import checkpoint
from fixnoise.checkpoint import (
    AdamState,
    file_sha256,
    load_checkpoint,
    read_records,
    save_checkpoint,
)
from fixnoise.errors import CorruptionError, FormatError


def _assert_same_model(first, second):
    assert list(first.params) == list(second.params)
    for name, value in first.state_dict().items():
        np.testing.assert_array_equal(value, second.params[name].data)


@pytest.mark.unit_tests
def test_round_trip(tmp_path, toy_state):
    toy_state.g_opt = AdamState.zeros_like(toy_state.g.params)
    toy_state.g_opt.step = 7
    path = str(tmp_path / "state.fxnz")
    save_checkpoint(toy_state, path)
    loaded = load_checkpoint(path)

    _assert_same_model(toy_state.g, loaded.g)
    _assert_same_model(toy_state.g_ema, loaded.g_ema)
    _assert_same_model(toy_state.d, loaded.d)
    assert loaded.g.anchor_seed == toy_state.g.anchor_seed
    assert loaded.g.config == toy_state.g.config
    assert loaded.metadata["kind"] == "source"
    assert loaded.g_opt.step == 7
    assert list(loaded.g_opt.m) == list(toy_state.g.params)
    assert loaded.d_opt is None
    assert not os.path.exists(path + ".tmp")


@pytest.mark.unit_tests
def test_saving_is_deterministic(tmp_path, toy_state):
    first = str(tmp_path / "first.fxnz")
    second = str(tmp_path / "second.fxnz")
    save_checkpoint(toy_state, first)
    save_checkpoint(load_checkpoint(first), second)
    assert file_sha256(first) == file_sha256(second)


@pytest.mark.unit_tests
def test_record_names(tmp_path, toy_state):
    path = str(tmp_path / "state.fxnz")
    save_checkpoint(toy_state, path)
    _, records = read_records(path)
    prefixes = {name.split("/")[0] for name in records}
    assert prefixes == {"G", "G_ema", "D"}
    assert "G/mapping.0.weight" in records


@pytest.mark.unit_tests
def test_bad_magic(tmp_path):
    path = tmp_path / "bad.fxnz"
    path.write_bytes(b"NOPE" + bytes(32))
    with pytest.raises(FormatError):
        load_checkpoint(str(path))


@pytest.mark.unit_tests
def test_bad_version(tmp_path, toy_state):
    path = tmp_path / "state.fxnz"
    save_checkpoint(toy_state, str(path))
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_records(str(path))


@pytest.mark.unit_tests
def test_truncated_file(tmp_path, toy_state):
    path = tmp_path / "state.fxnz"
    save_checkpoint(toy_state, str(path))
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(CorruptionError):
        load_checkpoint(str(path))


@pytest.mark.unit_tests
def test_missing_parameters(tmp_path, toy_state):
    """
    A file whose records do not cover its configuration is rejected
    """
    path = tmp_path / "state.fxnz"
    save_checkpoint(toy_state, str(path))
    metadata, _ = read_records(str(path))
    header = read_header_length(path.read_bytes())
    path.write_bytes(path.read_bytes()[: 16 + header])
    assert metadata["anchor_seed"] == toy_state.g.anchor_seed
    with pytest.raises(FormatError):
        load_checkpoint(str(path))


def read_header_length(blob: bytes) -> int:
    return struct.unpack("<Q", blob[8:16])[0]


@pytest.mark.unit_tests
def test_failed_write_leaves_no_partial_file(
    tmp_path, toy_state, monkeypatch
):
    path = str(tmp_path / "state.fxnz")
    save_checkpoint(toy_state, path)
    before = file_sha256(path)

    def full_disk(*_args):
        raise OSError("No space left on device")

    monkeypatch.setattr(checkpoint, "_record", full_disk)
    with pytest.raises(OSError):
        save_checkpoint(toy_state, path)
    assert sorted(os.listdir(str(tmp_path))) == ["state.fxnz"]
    # the previous checkpoint is untouched
    assert file_sha256(path) == before

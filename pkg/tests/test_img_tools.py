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
This module contains functions to test the PNG codec, grids and the
worker pool helpers.
"""

# Standard imports
import warnings

# Third party imports
import numpy as np
import pytest
from rasterio.errors import NotGeoreferencedWarning
from rasterio.io import MemoryFile

# Fixnoise imports
from fixnoise.errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    FormatError,
)
from fixnoise.img_tools import (
    THREADS_ENV,
    from_uint8,
    make_grid,
    parallel_map,
    png_decode,
    png_decode_pixels,
    png_encode,
    png_encode_pixels,
    read_png,
    to_uint8,
    worker_threads,
    write_png,
)


@pytest.mark.unit_tests
def test_uint8_conversion():
    pixels = to_uint8(np.array([-1.0, 0.0, 1.0]))
    np.testing.assert_array_equal(pixels, [0, 128, 255])
    assert pixels.dtype == np.uint8
    np.testing.assert_allclose(from_uint8(pixels), [-1.0, 1.0 / 255, 1.0])
    with pytest.raises(ContractError):
        to_uint8(np.array([1.5]))
    with pytest.raises(ContractError):
        to_uint8(np.array([np.nan]))


@pytest.mark.unit_tests
def test_png_is_lossless_on_pixels():
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, (3, 5, 7), dtype=np.uint8)
    data = png_encode_pixels(pixels)
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    decoded = png_decode_pixels(data)
    np.testing.assert_array_equal(decoded, pixels)


@pytest.mark.unit_tests
def test_png_image_quantization(tmp_path):
    rng = np.random.default_rng(1)
    image = rng.uniform(-1.0, 1.0, (3, 4, 4))
    np.testing.assert_allclose(
        png_decode(png_encode(image)), image, atol=1.0 / 255
    )
    path = str(tmp_path / "image.png")
    write_png(path, image)
    np.testing.assert_array_equal(read_png(path), png_decode(png_encode(image)))


@pytest.mark.unit_tests
def test_png_encode_checks():
    with pytest.raises(DimensionError):
        png_encode(np.zeros((4, 4)))
    with pytest.raises(DimensionError):
        png_encode(np.zeros((1, 4, 4)))
    with pytest.raises(ContractError):
        png_encode_pixels(np.zeros((3, 4, 4), dtype=np.int32))


@pytest.mark.unit_tests
def test_png_decode_rejects_other_data():
    with pytest.raises(FormatError):
        png_decode(b"definitely not an image")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotGeoreferencedWarning)
        with MemoryFile() as memfile:
            with memfile.open(
                driver="PNG", width=4, height=4, count=1, dtype="uint8"
            ) as dataset:
                dataset.write(np.zeros((1, 4, 4), dtype=np.uint8))
            grey = memfile.read()
    with pytest.raises(FormatError):
        png_decode(grey)


@pytest.mark.unit_tests
def test_make_grid():
    cells = [
        [np.full((3, 2, 2), 0.1 * (3 * row + col)) for col in range(3)]
        for row in range(2)
    ]
    grid = make_grid(cells)
    assert grid.shape == (3, 4, 6)
    assert grid[0, 0, 0] == cells[0][0][0, 0, 0]
    assert grid[0, 3, 5] == cells[1][2][0, 1, 1]
    assert grid[1, 2, 2] == cells[1][1][1, 0, 0]
    with pytest.raises(DimensionError):
        make_grid([])
    with pytest.raises(DimensionError):
        make_grid([cells[0], cells[1][:2]])
    with pytest.raises(DimensionError):
        make_grid([[np.zeros((3, 2, 2)), np.zeros((3, 4, 4))]])


@pytest.mark.unit_tests
def test_worker_threads(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert worker_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "4")
    assert worker_threads() == 4
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigurationError):
        worker_threads()
    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(ConfigurationError):
        worker_threads()


@pytest.mark.unit_tests
def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert parallel_map(lambda x: x * x, range(20)) == [
        x * x for x in range(20)
    ]

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
This module contains functions associated to images: the 8-bit PNG codec,
pixel normalization, image grids and the worker pool used by batched
image processing.
"""

# Standard imports
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

# Third party imports
import numpy as np
from rasterio.errors import NotGeoreferencedWarning, RasterioIOError
from rasterio.io import MemoryFile

# Fixnoise imports
from .errors import ConfigurationError, ContractError, DimensionError
from .errors import FormatError

THREADS_ENV = "FIXNOISE_THREADS"

_Item = TypeVar("_Item")
_Result = TypeVar("_Result")


def worker_threads() -> int:
    """Worker thread cap read from FIXNOISE_THREADS (default 1)"""
    value = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(value)
    except ValueError as error:
        raise ConfigurationError(
            "{} must be an integer, got {}".format(THREADS_ENV, value)
        ) from error
    if threads < 1:
        raise ConfigurationError("{} must be >= 1".format(THREADS_ENV))
    return threads


def parallel_map(
    func: Callable[[_Item], _Result], items: Iterable[_Item]
) -> List[_Result]:
    """Map func over items on the worker pool, results in input order"""
    threads = worker_threads()
    if threads == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def check_image_range(images: np.ndarray):
    if not np.all(np.isfinite(images)):
        raise ContractError("images have non finite values")
    if images.size and (images.min() < -1.0 or images.max() > 1.0):
        raise ContractError(
            "image values must lie in [-1, 1], got [{}, {}]".format(
                images.min(), images.max()
            )
        )


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[-1, 1] values to 8-bit pixels; out of range values are rejected"""
    image = np.asarray(image, dtype=np.float64)
    check_image_range(image)
    return np.rint((image + 1.0) * 127.5).astype(np.uint8)


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


def _check_rgb(image: np.ndarray):
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(
            "expected a 3 x H x W image, got shape {}".format(image.shape)
        )


def png_encode(image: np.ndarray) -> bytes:
    """
    Encode a 3 x H x W image in [-1, 1] as an 8-bit RGB PNG

    :param image: image array
    :return: PNG bytes
    """
    image = np.asarray(image)
    _check_rgb(image)
    return png_encode_pixels(to_uint8(image))


def png_encode_pixels(pixels: np.ndarray) -> bytes:
    """Encode 3 x H x W uint8 pixels as an RGB PNG"""
    pixels = np.asarray(pixels)
    _check_rgb(pixels)
    if pixels.dtype != np.uint8:
        raise ContractError(
            "pixels must be uint8, got {}".format(pixels.dtype)
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotGeoreferencedWarning)
        with MemoryFile() as memfile:
            with memfile.open(
                driver="PNG",
                width=pixels.shape[2],
                height=pixels.shape[1],
                count=3,
                dtype="uint8",
            ) as dataset:
                dataset.write(pixels)
            return memfile.read()


def png_decode_pixels(data: bytes) -> np.ndarray:
    """
    Decode PNG bytes into 3 x H x W uint8 pixels

    :raises FormatError: not an 8-bit RGB PNG
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotGeoreferencedWarning)
            with MemoryFile(data) as memfile:
                with memfile.open() as dataset:
                    if dataset.driver != "PNG":
                        raise FormatError(
                            "expected PNG data, found {}".format(
                                dataset.driver
                            )
                        )
                    if dataset.count != 3 or set(dataset.dtypes) != {"uint8"}:
                        raise FormatError(
                            "expected 8-bit RGB PNG, found {} bands of "
                            "{}".format(dataset.count, dataset.dtypes)
                        )
                    return dataset.read()
    except RasterioIOError as error:
        raise FormatError("malformed PNG data: {}".format(error)) from error


def png_decode(data: bytes) -> np.ndarray:
    """Decode PNG bytes into a 3 x H x W image in [-1, 1]"""
    return from_uint8(png_decode_pixels(data))


def write_png(path: str, image: np.ndarray):
    with open(path, "wb") as stream:
        stream.write(png_encode(image))
    logging.debug("PNG written: {}".format(path))


def read_png(path: str) -> np.ndarray:
    with open(path, "rb") as stream:
        return png_decode(stream.read())


def make_grid(cells: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
    """
    Tile rows of equally sized 3 x R x R images into one image.

    :param cells: rows of images, every row of the same length
    :return: 3 x rows*R x cols*R image
    """
    rows = [list(row) for row in cells]
    if not rows or not rows[0]:
        raise DimensionError("grid needs at least one cell")
    if any(len(row) != len(rows[0]) for row in rows):
        raise DimensionError("grid rows have different lengths")
    shape = np.asarray(rows[0][0]).shape
    for row in rows:
        for cell in row:
            if np.asarray(cell).shape != shape:
                raise DimensionError(
                    "grid cell of shape {} differs from {}".format(
                        np.asarray(cell).shape, shape
                    )
                )
    _check_rgb(np.asarray(rows[0][0]))
    return np.concatenate(
        [np.concatenate([np.asarray(c) for c in row], axis=2) for row in rows],
        axis=1,
    )

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
FXNZ checkpoint format.

Layout (little endian):
    magic "FXNZ" | version u32 | metadata length u64 | metadata UTF-8 JSON
    then parameter records until end of file:
    name length u16 | name UTF-8 | dtype code u8 | ndim u8 |
    shape u32 * ndim | payload length u64 | payload

Only dtype code 1 (float32) is written. Record names are prefixed by
their owner: G/, G_ema/, D/, G_opt/m/, G_opt/v/, D_opt/m/, D_opt/v/.
"""

# Standard imports
import hashlib
import json
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Tuple

# Third party imports
import numpy as np

# Fixnoise imports
from .errors import (
    ConfigurationError,
    CorruptionError,
    DimensionError,
    FormatError,
)
from .stylegan_nets import (
    DiscriminatorConfig,
    DiscriminatorModel,
    GeneratorConfig,
    GeneratorModel,
)
from .tensor_autodiff import Tensor, parameter

MAGIC = b"FXNZ"
FORMAT_VERSION = 1
DTYPE_CODES = {1: "<f4"}


@dataclass
class AdamState:
    """First and second moments of one optimizer, per parameter name"""

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, Tensor]) -> "AdamState":
        return cls(
            OrderedDict((n, np.zeros(p.shape)) for n, p in params.items()),
            OrderedDict((n, np.zeros(p.shape)) for n, p in params.items()),
        )


@dataclass
class TrainingState:
    g: GeneratorModel
    g_ema: GeneratorModel
    d: DiscriminatorModel
    g_opt: Optional[AdamState] = None
    d_opt: Optional[AdamState] = None
    metadata: dict = field(default_factory=dict)


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as stream:
        for chunk in iter(lambda: stream.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _record(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return b"".join(
        [
            struct.pack("<H", len(encoded)),
            encoded,
            struct.pack("<BB", 1, array.ndim),
            struct.pack("<{}I".format(array.ndim), *array.shape),
            struct.pack("<Q", len(payload)),
            payload,
        ]
    )


def _state_records(state: TrainingState) -> Iterator[Tuple[str, np.ndarray]]:
    owners = (("G/", state.g), ("G_ema/", state.g_ema), ("D/", state.d))
    for prefix, model in owners:
        for name, array in model.state_dict().items():
            yield prefix + name, array
    for prefix, optimizer in (("G_opt/", state.g_opt), ("D_opt/", state.d_opt)):
        if optimizer is None:
            continue
        for moment in ("m", "v"):
            for name, array in getattr(optimizer, moment).items():
                yield "{}{}/{}".format(prefix, moment, name), array


def save_checkpoint(state: TrainingState, path: str):
    """
    Write a training state.

    :param state: models, optimizer moments and metadata
    :param path: output file, replaced atomically
    """
    metadata = dict(state.metadata)
    metadata.update(
        {
            "generator_config": state.g.config.to_dict(),
            "discriminator_config": state.d.config.to_dict(),
            "anchor_seed": state.g.anchor_seed,
            "g_opt_step": None if state.g_opt is None else state.g_opt.step,
            "d_opt_step": None if state.d_opt is None else state.d_opt.step,
        }
    )
    header = json.dumps(metadata, sort_keys=True, separators=(",", ":"))
    header = header.encode("utf-8")
    tmp_path = path + ".tmp"
    try:
        with open(tmp_path, "wb") as stream:
            stream.write(MAGIC)
            stream.write(struct.pack("<I", FORMAT_VERSION))
            stream.write(struct.pack("<Q", len(header)))
            stream.write(header)
            for name, array in _state_records(state):
                stream.write(_record(name, array))
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logging.debug("Checkpoint written: {}".format(path))


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.offset = 0

    @property
    def done(self) -> bool:
        return self.offset >= len(self.blob)

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.blob):
            raise CorruptionError(
                "checkpoint {} is truncated at byte {}".format(
                    self.path, len(self.blob)
                )
            )
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_records(path: str) -> Tuple[dict, "OrderedDict[str, np.ndarray]"]:
    """
    Parse a checkpoint file into its metadata and float64 arrays.

    :raises FormatError: bad magic, version, metadata or dtype
    :raises CorruptionError: truncated file or inconsistent payload
    """
    with open(path, "rb") as stream:
        reader = _Reader(stream.read(), path)
    if reader.blob[:4] != MAGIC:
        raise FormatError("{} is not a FXNZ checkpoint".format(path))
    reader.take(4)
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise FormatError(
            "unsupported checkpoint version {} in {}".format(version, path)
        )
    (meta_length,) = reader.unpack("<Q")
    try:
        metadata = json.loads(reader.take(meta_length).decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as error:
        raise FormatError(
            "unreadable checkpoint metadata in {}".format(path)
        ) from error
    records: "OrderedDict[str, np.ndarray]" = OrderedDict()
    while not reader.done:
        (name_length,) = reader.unpack("<H")
        name = reader.take(name_length).decode("utf-8")
        code, ndim = reader.unpack("<BB")
        if code not in DTYPE_CODES:
            raise FormatError(
                "record {} has unknown dtype code {}".format(name, code)
            )
        shape = reader.unpack("<{}I".format(ndim))
        (payload_length,) = reader.unpack("<Q")
        expected = 4 * int(np.prod(shape, dtype=np.int64))
        if payload_length != expected:
            raise CorruptionError(
                "record {} payload is {} bytes, shape {} needs {}".format(
                    name, payload_length, shape, expected
                )
            )
        payload = reader.take(payload_length)
        records[name] = (
            np.frombuffer(payload, dtype=DTYPE_CODES[code])
            .astype(np.float64)
            .reshape(shape)
        )
    return metadata, records


def _take_prefix(records: dict, prefix: str) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict(
        (name[len(prefix) :], array)
        for name, array in records.items()
        if name.startswith(prefix)
    )


def load_checkpoint(path: str) -> TrainingState:
    """
    Read a training state written by save_checkpoint.

    :param path: checkpoint file
    """
    metadata, records = read_records(path)
    try:
        g_config = GeneratorConfig.from_dict(metadata["generator_config"])
        d_config = DiscriminatorConfig.from_dict(
            metadata["discriminator_config"]
        )
    except (KeyError, TypeError, ConfigurationError) as error:
        raise FormatError(
            "checkpoint {} lacks a valid model configuration".format(path)
        ) from error
    anchor_seed = metadata.get("anchor_seed")

    def as_params(arrays):
        return OrderedDict((n, parameter(a)) for n, a in arrays.items())

    try:
        g = GeneratorModel(
            g_config, as_params(_take_prefix(records, "G/")), anchor_seed
        )
        g_ema = GeneratorModel(
            g_config, as_params(_take_prefix(records, "G_ema/")), anchor_seed
        )
        d = DiscriminatorModel(d_config, as_params(_take_prefix(records, "D/")))
    except (ConfigurationError, DimensionError) as error:
        raise FormatError(
            "checkpoint {} parameters do not match its configuration: "
            "{}".format(path, error)
        ) from error

    optimizers = []
    for prefix, step_key in (
        ("G_opt/", "g_opt_step"),
        ("D_opt/", "d_opt_step"),
    ):
        if metadata.get(step_key) is None:
            optimizers.append(None)
            continue
        optimizers.append(
            AdamState(
                _take_prefix(records, prefix + "m/"),
                _take_prefix(records, prefix + "v/"),
                int(metadata[step_key]),
            )
        )
    return TrainingState(g, g_ema, d, optimizers[0], optimizers[1], metadata)

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
Procedural two-domain image datasets.

Every image draws its content (position, radius, palette entry) from the
substream (seed, index, 0) and its style noise from (seed, index, 1).
Presets of a pair share their content distribution, so a source and a
target dataset generated with the same seed hold the same layouts.
"""

# Standard imports
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator, List, Optional, Tuple

# Third party imports
import numpy as np

# Fixnoise imports
from .errors import ConfigurationError, ContractError, CorruptionError
from .errors import FormatError
from .img_tools import parallel_map, png_decode, png_encode_pixels
from .stylegan_nets import check_known_keys

SHAPES = ("disc", "ring", "striped-disc")
BACKGROUNDS = ("flat", "gradient")
MANIFEST_NAME = "manifest.json"

RGB = Tuple[int, int, int]


@dataclass(frozen=True)
class DomainSpec:
    name: str
    resolution: int = 16
    shape: str = "disc"
    palette: Tuple[RGB, ...] = ((220, 60, 60),)
    background: str = "flat"
    background_colors: Tuple[RGB, RGB] = ((30, 30, 40), (30, 30, 40))
    # fractions of the image extent
    center_range: Tuple[float, float] = (0.3, 0.7)
    radius_range: Tuple[float, float] = (0.18, 0.32)
    ring_width: float = 0.45
    stripe_period: float = 4.0
    texture_noise: float = 0.0
    supersampling: int = 4

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigurationError(
                "shape must be one of {}, got {}".format(SHAPES, self.shape)
            )
        if self.background not in BACKGROUNDS:
            raise ConfigurationError(
                "background must be one of {}, got {}".format(
                    BACKGROUNDS, self.background
                )
            )
        if not self.palette:
            raise ConfigurationError("palette must not be empty")
        low, high = self.radius_range
        if not 0.0 < low <= high <= 0.5:
            raise ConfigurationError(
                "radius range {} must lie within (0, 0.5]".format(
                    self.radius_range
                )
            )
        low, high = self.center_range
        if not 0.0 <= low <= high <= 1.0:
            raise ConfigurationError(
                "center range {} must lie within [0, 1]".format(
                    self.center_range
                )
            )
        if self.resolution < 4 or self.supersampling < 1:
            raise ConfigurationError(
                "resolution must be >= 4 and supersampling >= 1"
            )

    def to_dict(self) -> dict:
        values = asdict(self)
        for key in (
            "palette",
            "background_colors",
            "center_range",
            "radius_range",
        ):
            values[key] = [
                list(v) if isinstance(v, tuple) else v for v in values[key]
            ]
        return values

    @classmethod
    def from_dict(cls, values: dict) -> "DomainSpec":
        check_known_keys(cls, values)
        values = dict(values)
        for key in ("palette", "background_colors"):
            if key in values:
                values[key] = tuple(
                    tuple(int(c) for c in color) for color in values[key]
                )
        for key in ("center_range", "radius_range"):
            if key in values:
                values[key] = tuple(float(v) for v in values[key])
        return cls(**values)


_WARM = ((220, 60, 60), (60, 160, 220), (240, 200, 60))
_COOL = ((250, 140, 200), (120, 230, 140), (250, 250, 250))

PRESETS = {
    "similar-source": DomainSpec(
        name="similar-source", shape="disc", palette=_WARM
    ),
    "similar-target": DomainSpec(
        name="similar-target",
        shape="ring",
        palette=_COOL,
        background_colors=((20, 20, 60), (20, 20, 60)),
        texture_noise=6.0,
    ),
    "distant-source": DomainSpec(
        name="distant-source", shape="disc", palette=_WARM
    ),
    "distant-target": DomainSpec(
        name="distant-target",
        shape="striped-disc",
        palette=((240, 240, 240), (40, 200, 200)),
        background="gradient",
        background_colors=((90, 40, 10), (10, 40, 90)),
        center_range=(0.4, 0.6),
        radius_range=(0.32, 0.48),
        texture_noise=10.0,
    ),
}


def get_preset(name: str, resolution: Optional[int] = None) -> DomainSpec:
    if name not in PRESETS:
        raise ConfigurationError(
            "unknown preset {} (available: {})".format(name, sorted(PRESETS))
        )
    spec = PRESETS[name]
    return spec if resolution is None else replace(spec, resolution=resolution)


@dataclass(frozen=True)
class ContentRecord:
    center_x: float
    center_y: float
    radius: float
    palette_index: int


@dataclass(frozen=True)
class ImageRecord:
    file: str
    sha256: str
    content: ContentRecord


@dataclass
class DatasetManifest:
    spec: DomainSpec
    seed: int
    count: int
    records: List[ImageRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "count": self.count,
            "records": [
                {
                    "file": r.file,
                    "sha256": r.sha256,
                    "content": asdict(r.content),
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, values: dict) -> "DatasetManifest":
        records = [
            ImageRecord(r["file"], r["sha256"], ContentRecord(**r["content"]))
            for r in values["records"]
        ]
        return cls(
            DomainSpec.from_dict(values["spec"]),
            int(values["seed"]),
            int(values["count"]),
            records,
        )


def _substream(seed: int, index: int, part: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(index, part))
    )


def draw_content(spec: DomainSpec, seed: int, index: int) -> ContentRecord:
    """Layout of one image, drawn from its content substream"""
    u = _substream(seed, index, 0).random(4)
    low, high = spec.center_range
    r_low, r_high = spec.radius_range
    return ContentRecord(
        center_x=float(low + u[0] * (high - low)),
        center_y=float(low + u[1] * (high - low)),
        radius=float(r_low + u[2] * (r_high - r_low)),
        palette_index=int(min(u[3] * len(spec.palette), len(spec.palette) - 1)),
    )


def render_image(
    spec: DomainSpec, content: ContentRecord, style_rng: np.random.Generator
) -> np.ndarray:
    """
    Rasterize one image with supersampling.

    :return: 3 x R x R uint8 pixels
    """
    size = spec.resolution * spec.supersampling
    # subpixel centers, in output pixel units
    coords = (np.arange(size) + 0.5) / spec.supersampling
    y, x = np.meshgrid(coords, coords, indexing="ij")
    first, last = np.asarray(spec.background_colors, dtype=np.float64)
    if spec.background == "gradient":
        weight = (y / spec.resolution)[None]
        canvas = (
            first[:, None, None] * (1.0 - weight)
            + last[:, None, None] * weight
        )
    else:
        canvas = np.broadcast_to(first[:, None, None], (3, size, size)).copy()

    cx = content.center_x * spec.resolution
    cy = content.center_y * spec.resolution
    radius = content.radius * spec.resolution
    distance = np.hypot(x - cx, y - cy)
    mask = distance <= radius
    if spec.shape == "ring":
        mask &= distance >= radius * (1.0 - spec.ring_width)
    color = np.asarray(spec.palette[content.palette_index], dtype=np.float64)
    canvas[:, mask] = color[:, None]
    if spec.shape == "striped-disc":
        stripes = mask & (np.floor(x / spec.stripe_period) % 2 == 1)
        second = spec.palette[(content.palette_index + 1) % len(spec.palette)]
        canvas[:, stripes] = np.asarray(second, dtype=np.float64)[:, None]

    factor = spec.supersampling
    image = canvas.reshape(
        3, spec.resolution, factor, spec.resolution, factor
    ).mean(axis=(2, 4))
    if spec.texture_noise > 0:
        image = image + spec.texture_noise * style_rng.standard_normal(
            image.shape
        )
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def render_domain_image(
    spec: DomainSpec, seed: int, index: int
) -> Tuple[ContentRecord, np.ndarray]:
    content = draw_content(spec, seed, index)
    return content, render_image(spec, content, _substream(seed, index, 1))


def generate_domain_dataset(
    spec: DomainSpec, seed: int, n: int, out_dir: str
) -> DatasetManifest:
    """
    Render n images as PNG files plus a manifest.json in out_dir

    :param spec: domain description
    :param seed: dataset seed
    :param n: image count
    :param out_dir: output directory, created when missing
    :return: the manifest written
    """
    if n < 1:
        raise ContractError("dataset needs n >= 1 images, got {}".format(n))
    os.makedirs(out_dir, exist_ok=True)

    def build(index: int) -> ImageRecord:
        content, pixels = render_domain_image(spec, seed, index)
        data = png_encode_pixels(pixels)
        name = "img_{:06d}.png".format(index)
        with open(os.path.join(out_dir, name), "wb") as stream:
            stream.write(data)
        return ImageRecord(name, hashlib.sha256(data).hexdigest(), content)

    manifest = DatasetManifest(spec, seed, n, parallel_map(build, range(n)))
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as outfile:
        json.dump(manifest.to_dict(), outfile, indent=2, sort_keys=True)
    logging.info(
        "Dataset {} ({} images, seed {}) written to {}".format(
            spec.name, n, seed, out_dir
        )
    )
    return manifest


def read_manifest(manifest_path: str) -> DatasetManifest:
    try:
        with open(manifest_path, "r") as infile:
            manifest = DatasetManifest.from_dict(json.load(infile))
    except (ValueError, KeyError, TypeError) as error:
        raise FormatError(
            "invalid dataset manifest {}: {}".format(manifest_path, error)
        ) from error
    if len(manifest.records) != manifest.count:
        raise FormatError(
            "manifest {} lists {} files for count {}".format(
                manifest_path, len(manifest.records), manifest.count
            )
        )
    return manifest


def load_dataset(manifest_path: str) -> Iterator[np.ndarray]:
    """
    Images of a dataset in manifest order, as 3 x R x R arrays in [-1, 1]

    :raises CorruptionError: a file does not match its recorded hash
    """
    manifest = read_manifest(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    for record in manifest.records:
        path = os.path.join(root, record.file)
        with open(path, "rb") as stream:
            data = stream.read()
        if hashlib.sha256(data).hexdigest() != record.sha256:
            raise CorruptionError(
                "dataset file {} does not match its manifest hash".format(path)
            )
        yield png_decode(data)


def load_dataset_array(manifest_path: str) -> np.ndarray:
    return np.stack(list(load_dataset(manifest_path)), axis=0)

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
Distribution metrics over a fixed random convolutional feature extractor:
FID, KID and a perceptual distance, plus the evaluation sweep over noise
interpolation weights and its JSON, CSV and figure outputs.
"""

# Standard imports
import collections
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

# Third party imports
import matplotlib as mpl
import matplotlib.pyplot as mpl_pyplot
import numpy as np
import xarray as xr

# Fixnoise imports
from .errors import ConfigurationError, ContractError, DimensionError
from .errors import NumericalError
from .img_tools import check_image_range, parallel_map
from .linalg_tools import trace_sqrt_product
from .stylegan_nets import (
    ACTIVATION_GAIN,
    GeneratorModel,
    anchored_noise,
    check_known_keys,
    generate,
    interpolate_noise,
    sample_noise,
)
from .tensor_autodiff import Tensor, conv2d, leaky_relu, no_grad, resample2x

DEFAULT_ALPHAS = (1.0, 0.75, 0.5, 0.25, 0.0)
NORMALIZATION_EPS = 1e-10


@dataclass(frozen=True)
class MetricsConfig:
    extractor_seed: int = 0
    extractor_channels: Tuple[int, ...] = (16, 32, 64)
    n_samples: int = 2000
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    seed: int = 0
    batch_size: int = 64
    kid_blocks: int = 10
    kid_block_size: int = 500

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigurationError(
                "n_samples must be >= 1, got {}".format(self.n_samples)
            )
        if not self.alphas or any(
            not 0.0 <= float(a) <= 1.0 for a in self.alphas
        ):
            raise ConfigurationError(
                "alphas must be a non empty list in [0, 1], got {}".format(
                    self.alphas
                )
            )
        if not self.extractor_channels or min(self.extractor_channels) < 1:
            raise ConfigurationError("extractor_channels must be positive")
        if self.kid_blocks < 1 or self.kid_block_size < 2:
            raise ConfigurationError(
                "kid_blocks must be >= 1 and kid_block_size >= 2"
            )
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        values = asdict(self)
        values["extractor_channels"] = list(self.extractor_channels)
        values["alphas"] = list(self.alphas)
        return values

    @classmethod
    def from_dict(cls, values: dict) -> "MetricsConfig":
        check_known_keys(cls, values)
        values = dict(values)
        for key in ("extractor_channels", "alphas"):
            if key in values:
                values[key] = tuple(values[key])
        return cls(**values)


@dataclass
class FeatureExtractor:
    """
    Untrained convolution ladder: 3x3 conv + leaky ReLU per stage,
    2x downsampling between stages. Never trained.
    """

    seed: int
    weights: List[np.ndarray] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def num_taps(self) -> int:
        return len(self.weights)


def build_extractor(
    seed: int = 0, channels: Sequence[int] = (16, 32, 64)
) -> FeatureExtractor:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    weights = []
    in_channels = 3
    for out_channels in channels:
        weights.append(
            rng.standard_normal((out_channels, in_channels, 3, 3))
            / math.sqrt(in_channels * 9)
        )
        in_channels = out_channels
    return FeatureExtractor(seed, weights)


def _check_images(images: np.ndarray, extractor: FeatureExtractor):
    if images.ndim != 4 or images.shape[1] != 3:
        raise DimensionError(
            "expected N x 3 x R x R images, got {}".format(images.shape)
        )
    factor = 2 ** (extractor.num_taps - 1)
    if images.shape[2] != images.shape[3] or images.shape[2] % factor:
        raise DimensionError(
            "image extent {} must be square and divisible by {}".format(
                images.shape[2:], factor
            )
        )
    check_image_range(images)


def _taps(images: np.ndarray, extractor: FeatureExtractor) -> List[np.ndarray]:
    taps = []
    with no_grad():
        x = Tensor(images)
        for index, weight in enumerate(extractor.weights):
            if index:
                x = resample2x(x, "down")
            x = leaky_relu(conv2d(x, Tensor(weight))) * ACTIVATION_GAIN
            taps.append(x.data)
    return taps


def _batches(count: int, batch_size: int) -> List[slice]:
    return [
        slice(start, min(start + batch_size, count))
        for start in range(0, count, batch_size)
    ]


def extract_features(
    images: np.ndarray, extractor: FeatureExtractor, batch_size: int = 64
) -> np.ndarray:
    """
    Global average pooled final tap of each image.

    :param images: N x 3 x R x R images in [-1, 1]
    :param extractor: feature extractor
    :param batch_size: images per worker task
    :return: N x d embeddings, rows in image order
    """
    images = np.asarray(images, dtype=np.float64)
    _check_images(images, extractor)
    if images.shape[0] == 0:
        return np.zeros((0, extractor.dim))
    chunks = parallel_map(
        lambda part: _taps(images[part], extractor)[-1].mean(axis=(2, 3)),
        _batches(images.shape[0], batch_size),
    )
    return np.concatenate(chunks, axis=0)


def _check_features(*features: np.ndarray):
    dims = {f.shape[1] if f.ndim == 2 else None for f in features}
    if None in dims or len(dims) != 1:
        raise DimensionError(
            "feature matrices must be N x d with equal d, got {}".format(
                [f.shape for f in features]
            )
        )
    for matrix in features:
        if not np.all(np.isfinite(matrix)):
            raise NumericalError("feature matrix has non finite values")


def fid_from_moments(
    mu_a: np.ndarray,
    sigma_a: np.ndarray,
    mu_b: np.ndarray,
    sigma_b: np.ndarray,
) -> float:
    """
    |mu_a - mu_b|^2 + Tr(sigma_a + sigma_b - 2 (sigma_a sigma_b)^(1/2)),
    clamped at 0.
    """
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    value = (
        float(diff @ diff)
        + float(np.trace(sigma_a))
        + float(np.trace(sigma_b))
        - 2.0 * trace_sqrt_product(sigma_a, sigma_b)
    )
    return max(value, 0.0)


def feature_moments(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return features.mean(axis=0), np.cov(features, rowvar=False)


def fid(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """
    Frechet distance between the Gaussian fits of two feature sets.

    :param feats_a: n_a x d features
    :param feats_b: n_b x d features
    :raises ContractError: fewer than d + 1 samples on a side
    """
    feats_a = np.asarray(feats_a, dtype=np.float64)
    feats_b = np.asarray(feats_b, dtype=np.float64)
    _check_features(feats_a, feats_b)
    required = feats_a.shape[1] + 1
    for name, feats in (("first", feats_a), ("second", feats_b)):
        if feats.shape[0] < required:
            raise ContractError(
                "FID needs n >= {} samples for d = {}, {} set has {}".format(
                    required, required - 1, name, feats.shape[0]
                )
            )
    return fid_from_moments(
        *feature_moments(feats_a), *feature_moments(feats_b)
    )


def _polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x @ y.T / x.shape[1] + 1.0) ** 3


def kid_blocks(
    feats_a: np.ndarray,
    feats_b: np.ndarray,
    n_blocks: int = 10,
    block_size: int = 500,
) -> np.ndarray:
    """
    Unbiased MMD^2 estimates with the cubic polynomial kernel.

    Block b takes rows (b*m .. b*m + m - 1) modulo n of each side, with
    m = min(n_a, n_b, block_size); blocks are disjoint when n >= n_blocks*m.

    :return: one estimate per block
    """
    feats_a = np.asarray(feats_a, dtype=np.float64)
    feats_b = np.asarray(feats_b, dtype=np.float64)
    _check_features(feats_a, feats_b)
    n_a, n_b = feats_a.shape[0], feats_b.shape[0]
    if min(n_a, n_b) < 2:
        raise ContractError(
            "KID needs at least 2 samples per side, got {} and {}".format(
                n_a, n_b
            )
        )
    size = min(n_a, n_b, block_size)
    estimates = np.empty(n_blocks)
    for block in range(n_blocks):
        offsets = block * size + np.arange(size)
        x = feats_a[offsets % n_a]
        y = feats_b[offsets % n_b]
        k_xx = _polynomial_kernel(x, x)
        k_yy = _polynomial_kernel(y, y)
        k_xy = _polynomial_kernel(x, y)
        pairs = size * (size - 1)
        estimates[block] = (
            (k_xx.sum() - np.trace(k_xx)) / pairs
            + (k_yy.sum() - np.trace(k_yy)) / pairs
            - 2.0 * k_xy.mean()
        )
    return estimates


def kid(
    feats_a: np.ndarray,
    feats_b: np.ndarray,
    n_blocks: int = 10,
    block_size: int = 500,
) -> float:
    """Mean of the block estimates (reported times 10^3)"""
    return float(np.mean(kid_blocks(feats_a, feats_b, n_blocks, block_size)))


def _unit_channels(tap: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(tap * tap, axis=1, keepdims=True))
    return tap / (norm + NORMALIZATION_EPS)


def perceptual_distance(
    img_a: np.ndarray,
    img_b: np.ndarray,
    extractor: FeatureExtractor,
    batch_size: int = 64,
) -> float:
    """
    Mean over taps of the mean squared difference between channel
    normalized features.

    :param img_a: N x 3 x R x R images in [-1, 1]
    :param img_b: images of the same shape
    :param batch_size: images per extraction batch
    """
    img_a = np.asarray(img_a, dtype=np.float64)
    img_b = np.asarray(img_b, dtype=np.float64)
    if img_a.shape != img_b.shape:
        raise DimensionError(
            "image sets differ in shape: {} vs {}".format(
                img_a.shape, img_b.shape
            )
        )
    _check_images(img_a, extractor)
    _check_images(img_b, extractor)

    totals = np.zeros(extractor.num_taps)
    sizes = np.zeros(extractor.num_taps)
    for part in _batches(img_a.shape[0], batch_size):
        taps_a = _taps(img_a[part], extractor)
        taps_b = _taps(img_b[part], extractor)
        for index, (tap_a, tap_b) in enumerate(zip(taps_a, taps_b)):
            diff = _unit_channels(tap_a) - _unit_channels(tap_b)
            totals[index] += np.sum(diff * diff)
            sizes[index] += diff.size
    return float(np.mean(totals / np.maximum(sizes, 1)))


def generated_images(
    model: GeneratorModel,
    z: np.ndarray,
    noise,
    batch_size: int = 64,
    styles_hook=None,
) -> np.ndarray:
    """Generations clipped to [-1, 1] for metrics and PNG output"""
    return np.clip(
        generate(model, z, noise, batch_size, styles_hook), -1.0, 1.0
    )


def eval_protocol(
    g_source: GeneratorModel,
    g_target: GeneratorModel,
    target_images: np.ndarray,
    config: Optional[MetricsConfig] = None,
    extractor: Optional[FeatureExtractor] = None,
) -> xr.Dataset:
    """
    Sweep the interpolation weight and measure the target model.

    For each alpha, n images of G_t with interpolated noise are compared
    to the target dataset (FID, KID) and to the anchored G_s generations
    of the same latents (perceptual distance).

    :param g_source: source generator
    :param g_target: transferred generator
    :param target_images: N x 3 x R x R target dataset in [-1, 1]
    :param config: metrics configuration
    :param extractor: feature extractor, built from the config when None
    :return: MetricReport dataset indexed by descending alpha
    """
    config = config or MetricsConfig()
    if config.n_samples < 1:
        raise ContractError("evaluation needs n >= 1 samples")
    if g_source.anchor_seed != g_target.anchor_seed:
        raise ConfigurationError(
            "source and target anchor seeds differ ({} vs {})".format(
                g_source.anchor_seed, g_target.anchor_seed
            )
        )
    if g_source.config != g_target.config:
        raise ConfigurationError("source and target configurations differ")
    if extractor is None:
        extractor = build_extractor(
            config.extractor_seed, config.extractor_channels
        )
    alphas = sorted({float(a) for a in config.alphas}, reverse=True)
    n = config.n_samples
    logging.info(
        "Evaluating {} samples at alphas {}".format(n, alphas)
    )

    streams = np.random.SeedSequence(config.seed).spawn(2)
    z = np.random.default_rng(streams[0]).standard_normal(
        (n, g_target.config.z_dim)
    )
    random = sample_noise(
        np.random.default_rng(streams[1]), g_target, "random", n
    )
    target_features = extract_features(
        target_images, extractor, config.batch_size
    )
    source_images = generated_images(
        g_source, z, anchored_noise(g_source), config.batch_size
    )

    columns = collections.OrderedDict(
        (key, [])
        for key in ("fid", "kid_x1e3", "kid_std_x1e3", "perceptual_distance")
    )
    anchored = anchored_noise(g_target)
    for alpha in alphas:
        images = generated_images(
            g_target,
            z,
            interpolate_noise(anchored, random, alpha),
            config.batch_size,
        )
        features = extract_features(images, extractor, config.batch_size)
        blocks = kid_blocks(
            features, target_features, config.kid_blocks, config.kid_block_size
        )
        columns["fid"].append(fid(features, target_features))
        columns["kid_x1e3"].append(1e3 * float(np.mean(blocks)))
        columns["kid_std_x1e3"].append(
            1e3 * float(np.std(blocks, ddof=1)) / math.sqrt(len(blocks))
            if len(blocks) > 1
            else 0.0
        )
        columns["perceptual_distance"].append(
            perceptual_distance(
                source_images, images, extractor, config.batch_size
            )
        )
        logging.info(
            "alpha {}: fid {:.4f} kid {:.4f} perceptual {:.6f}".format(
                alpha,
                columns["fid"][-1],
                columns["kid_x1e3"][-1],
                columns["perceptual_distance"][-1],
            )
        )

    for key, values in columns.items():
        if not np.all(np.isfinite(values)):
            raise NumericalError("non finite {} in metric report".format(key))
    return xr.Dataset(
        {key: ("alpha", np.asarray(v)) for key, v in columns.items()},
        coords={"alpha": np.asarray(alphas)},
        attrs={
            "n_samples": n,
            "seed": config.seed,
            "extractor_seed": extractor.seed,
            "feature_dim": extractor.dim,
            "anchor_seed": g_target.anchor_seed,
            "kid_blocks": config.kid_blocks,
            "kid_block_size": config.kid_block_size,
            "target_count": int(target_images.shape[0]),
        },
    )


REPORT_CSV_COLUMNS = collections.OrderedDict(
    [
        ("alpha", "alpha"),
        ("fid", "FID"),
        ("perceptual_distance", "Perceptual distance"),
        ("kid_x1e3", "KID x1e3"),
    ]
)


def report_to_dict(report: xr.Dataset) -> dict:
    rows = []
    for index, alpha in enumerate(report["alpha"].values):
        row = collections.OrderedDict([("alpha", float(alpha))])
        for key in report.data_vars:
            row[key] = float(report[key].values[index])
        rows.append(row)
    return {"settings": dict(report.attrs), "rows": rows}


def save_report(report: xr.Dataset, json_path: str, csv_path: str):
    """Write the MetricReport as JSON and as an alpha table in CSV"""
    content = report_to_dict(report)
    with open(json_path, "w") as outfile:
        json.dump(content, outfile, indent=2)
    with open(csv_path, "w", newline="") as csvfile:
        writer = csv.DictWriter(
            csvfile,
            fieldnames=list(REPORT_CSV_COLUMNS.values()),
            quoting=csv.QUOTE_NONNUMERIC,
        )
        writer.writeheader()
        for row in content["rows"]:
            writer.writerow(
                {label: row[key] for key, label in REPORT_CSV_COLUMNS.items()}
            )


def plot_alpha_sweep(report: xr.Dataset, plot_file: str):
    """FID, KID x1e3 and perceptual distance against alpha"""
    mpl.use("Agg")
    fig, axes = mpl_pyplot.subplots(1, 3, figsize=(10.0, 3.0))
    alphas = report["alpha"].values
    for fig_ax, key, label in zip(
        axes,
        ("fid", "kid_x1e3", "perceptual_distance"),
        ("FID", "KID x1e3", "Perceptual distance"),
    ):
        fig_ax.plot(alphas, report[key].values, marker="o")
        fig_ax.set_xlabel("alpha", fontsize="medium")
        fig_ax.set_title(label, fontsize="large")
        fig_ax.invert_xaxis()
        fig_ax.grid(True)
    fig.suptitle(
        "n={} extractor_seed={}".format(
            report.attrs["n_samples"], report.attrs["extractor_seed"]
        )
    )
    fig.savefig(plot_file, dpi=100, bbox_inches="tight")
    mpl_pyplot.close(fig)

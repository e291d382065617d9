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
Style based generator and convolutional discriminator.

The generator is a mapping network (z -> w) followed by a synthesis
ladder: a learned 4x4 constant, then per resolution an upsampling
modulated convolution, a modulated convolution and a tRGB projection.
Each feature convolution adds a per pixel noise field scaled by a learned
strength; its output after bias and activation is the feature tap.

Networks are plain parameter dictionaries (GeneratorModel,
DiscriminatorModel) evaluated by module functions.
"""

# Standard imports
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterator, List, Optional, Tuple

# Third party imports
import numpy as np

# Fixnoise imports
from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    DimensionError,
)
from .tensor_autodiff import (
    Tensor,
    conv2d,
    leaky_relu,
    no_grad,
    parameter,
    resample2x,
    to_storage_precision,
)

ACTIVATION_GAIN = math.sqrt(2.0)
DEMODULATION_EPS = 1e-8
NOISE_MODES = ("random", "anchored", "interpolated")


def check_known_keys(cls, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(
            "unknown {} keys: {}".format(cls.__name__, ", ".join(unknown))
        )


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class GeneratorConfig:
    """
    Generator hyper parameters.

    Channels at resolution r are max(channel_max // (r // 4), channel_min).
    """

    z_dim: int = 64
    w_dim: int = 64
    base_resolution: int = 4
    final_resolution: int = 32
    channel_max: int = 64
    channel_min: int = 8
    mapping_layers: int = 2
    mapping_lr_multiplier: float = 0.01
    noise_strength_init: float = 0.1
    anchor_zero: bool = False

    def __post_init__(self):
        if self.base_resolution != 4:
            raise ConfigurationError(
                "base_resolution must be 4, got {}".format(self.base_resolution)
            )
        if not _is_power_of_two(self.final_resolution) or (
            self.final_resolution < self.base_resolution
        ):
            raise ConfigurationError(
                "final_resolution must be a power of two >= {}, got {}".format(
                    self.base_resolution, self.final_resolution
                )
            )
        if min(self.z_dim, self.w_dim, self.mapping_layers) < 1:
            raise ConfigurationError(
                "z_dim, w_dim and mapping_layers must be positive"
            )
        if self.channel_min < 1 or self.channel_max < self.channel_min:
            raise ConfigurationError(
                "invalid channel range [{}, {}]".format(
                    self.channel_min, self.channel_max
                )
            )
        if self.mapping_lr_multiplier <= 0:
            raise ConfigurationError("mapping_lr_multiplier must be positive")

    @property
    def resolutions(self) -> List[int]:
        steps = int(math.log2(self.final_resolution // self.base_resolution))
        return [self.base_resolution * 2 ** k for k in range(steps + 1)]

    @property
    def num_layers(self) -> int:
        """L, the count of feature convolution layers"""
        return 1 + 2 * (len(self.resolutions) - 1)

    def channels(self, resolution: int) -> int:
        return max(
            self.channel_max // (resolution // self.base_resolution),
            self.channel_min,
        )

    @property
    def channels_per_resolution(self) -> Dict[int, int]:
        return {r: self.channels(r) for r in self.resolutions}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "GeneratorConfig":
        check_known_keys(cls, values)
        return cls(**values)


@dataclass(frozen=True)
class DiscriminatorConfig:
    resolution: int = 32
    channel_max: int = 64
    channel_min: int = 8

    @classmethod
    def from_generator(cls, config: GeneratorConfig) -> "DiscriminatorConfig":
        return cls(
            resolution=config.final_resolution,
            channel_max=config.channel_max,
            channel_min=config.channel_min,
        )

    def channels(self, resolution: int) -> int:
        return max(self.channel_max // (resolution // 4), self.channel_min)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "DiscriminatorConfig":
        check_known_keys(cls, values)
        return cls(**values)


@dataclass(frozen=True)
class LadderLayer:
    """
    One generator layer in forward order.

    Feature convolutions ("conv") and tRGB projections ("torgb") are
    interleaved; the index counts both kinds and addresses swaps, freezes
    and style channels.
    """

    index: int
    kind: str
    resolution: int
    in_channels: int
    out_channels: int
    up: bool = False
    feature_index: Optional[int] = None

    @property
    def name(self) -> str:
        suffix = "conv_up" if self.up else self.kind
        return "{0}x{0}.{1}".format(self.resolution, suffix)

    @property
    def prefix(self) -> str:
        return "synthesis." + self.name


def build_ladder(config: GeneratorConfig) -> List[LadderLayer]:
    layers: List[LadderLayer] = []
    feature_index = 0
    previous = config.channels(config.base_resolution)
    for resolution in config.resolutions:
        channels = config.channels(resolution)
        first = resolution == config.base_resolution
        convs = [False] if first else [True, False]
        for up in convs:
            layers.append(
                LadderLayer(
                    index=len(layers),
                    kind="conv",
                    resolution=resolution,
                    in_channels=previous,
                    out_channels=channels,
                    up=up,
                    feature_index=feature_index,
                )
            )
            feature_index += 1
            previous = channels
        layers.append(
            LadderLayer(
                index=len(layers),
                kind="torgb",
                resolution=resolution,
                in_channels=channels,
                out_channels=3,
            )
        )
    return layers


def generator_parameter_specs(
    config: GeneratorConfig,
) -> "OrderedDict[str, Tuple[Tuple[int, ...], str]]":
    """
    Ordered parameter names of a generator with shape and init rule.
    This order is the checkpoint contract.
    """
    specs: "OrderedDict[str, Tuple[Tuple[int, ...], str]]" = OrderedDict()
    for k in range(config.mapping_layers):
        in_dim = config.z_dim if k == 0 else config.w_dim
        specs["mapping.{}.weight".format(k)] = (
            (config.w_dim, in_dim),
            "mapping",
        )
        specs["mapping.{}.bias".format(k)] = ((config.w_dim,), "zeros")
    for layer in build_ladder(config):
        if layer.index == 0:
            specs[layer.prefix.rsplit(".", 1)[0] + ".const"] = (
                (layer.in_channels,)
                + (config.base_resolution, config.base_resolution),
                "normal",
            )
        specs[layer.prefix + ".affine.weight"] = (
            (layer.in_channels, config.w_dim),
            "normal",
        )
        specs[layer.prefix + ".affine.bias"] = ((layer.in_channels,), "ones")
        kernel = 3 if layer.kind == "conv" else 1
        specs[layer.prefix + ".weight"] = (
            (layer.out_channels, layer.in_channels, kernel, kernel),
            "normal",
        )
        specs[layer.prefix + ".bias"] = ((layer.out_channels,), "zeros")
        if layer.kind == "conv":
            specs[layer.prefix + ".noise_strength"] = ((), "noise")
    return specs


def layer_parameter_names(
    config: GeneratorConfig, layers: List[LadderLayer]
) -> List[str]:
    """Parameters owned by the given ladder layers (constant with layer 0)"""
    prefixes = [layer.prefix + "." for layer in layers]
    names = []
    for name in generator_parameter_specs(config):
        if name == "synthesis.{0}x{0}.const".format(config.base_resolution):
            if any(layer.index == 0 for layer in layers):
                names.append(name)
        elif any(name.startswith(prefix) for prefix in prefixes):
            names.append(name)
    return names


def mapping_parameter_names(config: GeneratorConfig) -> List[str]:
    return [
        name
        for name in generator_parameter_specs(config)
        if name.startswith("mapping.")
    ]


def _check_parameter_set(params: Dict[str, Tensor], expected: OrderedDict):
    if list(params) != list(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ConfigurationError(
            "parameter set mismatch (missing: {}, unexpected: {})".format(
                missing, extra
            )
        )
    for name, (shape, _) in expected.items():
        if params[name].shape != tuple(shape):
            raise DimensionError(
                "parameter {} has shape {}, expected {}".format(
                    name, params[name].shape, shape
                )
            )


@dataclass
class GeneratorModel:
    config: GeneratorConfig
    params: Dict[str, Tensor]
    anchor_seed: Optional[int]

    def __post_init__(self):
        _check_parameter_set(
            self.params, generator_parameter_specs(self.config)
        )
        self.ladder = build_ladder(self.config)

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((n, p.data) for n, p in self.params.items())

    def copy(self) -> "GeneratorModel":
        return GeneratorModel(
            self.config,
            OrderedDict((n, parameter(p.data)) for n, p in self.params.items()),
            self.anchor_seed,
        )


def init_generator(
    config: GeneratorConfig,
    rng: np.random.Generator,
    anchor_seed: Optional[int] = None,
) -> GeneratorModel:
    """
    Draw generator parameters, rounded to 32-bit storage precision.

    :param config: generator configuration
    :param rng: initialization stream
    :param anchor_seed: anchor noise seed, drawn from rng when None
    """
    if anchor_seed is None:
        anchor_seed = int(rng.integers(0, 2 ** 63 - 1))
    params = OrderedDict()
    for name, (shape, rule) in generator_parameter_specs(config).items():
        if rule == "mapping":
            value = rng.standard_normal(shape) / config.mapping_lr_multiplier
        elif rule == "normal":
            value = rng.standard_normal(shape)
        elif rule == "ones":
            value = np.ones(shape)
        elif rule == "noise":
            value = np.full(shape, config.noise_strength_init)
        else:
            value = np.zeros(shape)
        params[name] = parameter(to_storage_precision(value))
    return GeneratorModel(config, params, int(anchor_seed))


def _dense(x: Tensor, weight: Tensor, bias: Tensor, lr_multiplier: float):
    """Equalized learning rate fully connected layer"""
    gain = lr_multiplier / math.sqrt(weight.shape[1])
    out = x.matmul((weight * gain).transpose())
    if lr_multiplier != 1:
        bias = bias * lr_multiplier
    return out + bias


def map_latent(z, model: GeneratorModel) -> Tensor:
    """
    Mapping network: RMS normalized z through the mapping layers.

    :param z: N x z_dim latent codes
    :return: N x w_dim style vectors
    """
    config = model.config
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.ndim == 1:
        z = z.reshape(1, z.shape[0])
    if z.ndim != 2 or z.shape[1] != config.z_dim:
        raise DimensionError(
            "latent codes must be N x {}, got {}".format(config.z_dim, z.shape)
        )
    if not np.all(np.isfinite(z.data)):
        raise ContractError("latent codes must be finite")
    mean_square = (z * z).mean(axis=1, keepdims=True)
    if np.any(mean_square.data == 0):
        raise DegenerateInputError("zero latent code cannot be normalized")
    x = z / mean_square.sqrt()
    last = config.mapping_layers - 1
    for k in range(config.mapping_layers):
        x = _dense(
            x,
            model.params["mapping.{}.weight".format(k)],
            model.params["mapping.{}.bias".format(k)],
            config.mapping_lr_multiplier,
        )
        if k < last:
            x = leaky_relu(x) * ACTIVATION_GAIN
    return x


@dataclass
class NoiseBundle:
    """
    Per feature convolution noise fields, each B x 1 x r x r.
    Anchored fields have B == 1 and broadcast over the batch.
    """

    fields: List[np.ndarray]
    mode: str
    alpha: Optional[float] = None

    def __len__(self):
        return len(self.fields)

    def select(self, start: int, stop: int) -> "NoiseBundle":
        """Batch slice, leaving broadcast fields untouched"""
        return NoiseBundle(
            [f if f.shape[0] == 1 else f[start:stop] for f in self.fields],
            self.mode,
            self.alpha,
        )


def _feature_layers(model: GeneratorModel) -> List[LadderLayer]:
    return [layer for layer in model.ladder if layer.kind == "conv"]


def anchored_noise(model: GeneratorModel) -> NoiseBundle:
    """Regenerate the anchor point from the model's anchor seed"""
    if model.anchor_seed is None:
        raise ConfigurationError("generator has no anchor seed")
    if model.config.anchor_zero:
        fields_ = [
            np.zeros((1, 1, layer.resolution, layer.resolution))
            for layer in _feature_layers(model)
        ]
    else:
        rng = np.random.default_rng(model.anchor_seed)
        fields_ = [
            rng.standard_normal((1, 1, layer.resolution, layer.resolution))
            for layer in _feature_layers(model)
        ]
    return NoiseBundle(fields_, "anchored", 1.0)


def _check_alpha(alpha) -> float:
    if alpha is None or not 0.0 <= float(alpha) <= 1.0:
        raise ContractError(
            "interpolation weight must lie in [0, 1], got {}".format(alpha)
        )
    return float(alpha)


def interpolate_noise(
    anchored: NoiseBundle, random: NoiseBundle, alpha: float
) -> NoiseBundle:
    """alpha * anchored + (1 - alpha) * random, field by field"""
    alpha = _check_alpha(alpha)
    if len(anchored) != len(random):
        raise DimensionError(
            "noise bundles differ in length: {} vs {}".format(
                len(anchored), len(random)
            )
        )
    return NoiseBundle(
        [alpha * a + (1.0 - alpha) * r for a, r in zip(anchored.fields, random.fields)],
        "interpolated",
        alpha,
    )


def sample_noise(
    rng: np.random.Generator,
    model: GeneratorModel,
    mode: str,
    batch_size: int = 1,
    alpha: Optional[float] = None,
) -> NoiseBundle:
    """
    Build a noise bundle.

    :param rng: stream for random draws (ignored by the anchored mode)
    :param model: generator the bundle is meant for
    :param mode: "random", "anchored" or "interpolated"
    :param batch_size: batch extent of random fields
    :param alpha: interpolation weight, for the interpolated mode
    """
    if mode == "anchored":
        return anchored_noise(model)
    if mode not in NOISE_MODES:
        raise ContractError(
            "noise mode must be one of {}, got {}".format(NOISE_MODES, mode)
        )
    if mode == "interpolated":
        _check_alpha(alpha)
    random = NoiseBundle(
        [
            rng.standard_normal(
                (batch_size, 1, layer.resolution, layer.resolution)
            )
            for layer in _feature_layers(model)
        ],
        "random",
        0.0,
    )
    if mode == "random":
        return random
    return interpolate_noise(anchored_noise(model), random, alpha)


@dataclass
class FeatureStack:
    """Feature taps F_1..F_L plus the per resolution tRGB outputs"""

    features: List[Tensor]
    rgb_outputs: List[Tensor] = field(default_factory=list)

    def __len__(self):
        return len(self.features)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.features)

    def __getitem__(self, index) -> Tensor:
        return self.features[index]


@dataclass
class StyleSpaceVector:
    """
    Affine outputs s_l of every ladder layer, addressed by
    (ladder layer index, channel).
    """

    styles: "OrderedDict[str, Tensor]"

    def widths(self) -> List[int]:
        return [s.shape[1] for s in self.styles.values()]

    def concatenated(self) -> np.ndarray:
        return np.concatenate([s.data for s in self.styles.values()], axis=1)

    def __getitem__(self, name: str) -> Tensor:
        return self.styles[name]


def style_vectors(w: Tensor, model: GeneratorModel) -> StyleSpaceVector:
    styles = OrderedDict()
    for layer in model.ladder:
        styles[layer.name] = _dense(
            w,
            model.params[layer.prefix + ".affine.weight"],
            model.params[layer.prefix + ".affine.bias"],
            1.0,
        )
    return StyleSpaceVector(styles)


def modulate_style(
    styles: StyleSpaceVector, layer: int, channel: int, delta: float
) -> StyleSpaceVector:
    """Copy of styles with delta added to one (layer, channel) coordinate"""
    names = list(styles.styles)
    if not 0 <= layer < len(names):
        raise IndexError(
            "style layer {} out of range [0, {})".format(layer, len(names))
        )
    width = styles.styles[names[layer]].shape[1]
    if not 0 <= channel < width:
        raise IndexError(
            "style channel {} out of range [0, {}) for layer {}".format(
                channel, width, names[layer]
            )
        )
    modulated = OrderedDict()
    for index, (name, value) in enumerate(styles.styles.items()):
        if index == layer:
            data = np.array(value.data)
            data[:, channel] += delta
            value = Tensor(data)
        modulated[name] = value
    return StyleSpaceVector(modulated)


def _modulated_conv(
    x: Tensor, weight: Tensor, styles: Tensor, demodulate: bool
) -> Tensor:
    """
    Convolution with per sample input channel modulation.
    Demodulation rescales each output channel by the inverse RMS of the
    modulated weights.
    """
    batch, channels = styles.shape
    out = conv2d(x * styles.reshape(batch, channels, 1, 1), weight)
    if demodulate:
        energy = (styles * styles).matmul(
            (weight * weight).sum(axis=(2, 3)).transpose()
        )
        coefficients = (energy + DEMODULATION_EPS) ** -0.5
        out = out * coefficients.reshape(batch, weight.shape[0], 1, 1)
    return out


def _check_bundle(noise: NoiseBundle, model: GeneratorModel, batch: int):
    layers = _feature_layers(model)
    if len(noise) != len(layers):
        raise DimensionError(
            "noise bundle has {} fields, generator has {} layers".format(
                len(noise), len(layers)
            )
        )
    for noise_field, layer in zip(noise.fields, layers):
        expected = (1, layer.resolution, layer.resolution)
        if noise_field.ndim != 4 or noise_field.shape[1:] != expected or (
            noise_field.shape[0] not in (1, batch)
        ):
            raise DimensionError(
                "noise field of shape {} does not fit layer {}".format(
                    noise_field.shape, layer.name
                )
            )


@dataclass
class SynthesisOutput:
    image: Tensor
    features: Optional[FeatureStack] = None


def synthesize(
    w: Tensor,
    noise: NoiseBundle,
    model: GeneratorModel,
    want_features: bool = False,
    styles: Optional[StyleSpaceVector] = None,
) -> SynthesisOutput:
    """
    Synthesis network.

    :param w: N x w_dim style vectors
    :param noise: bundle matching the generator ladder
    :param model: generator
    :param want_features: also return the FeatureStack
    :param styles: overridden style space vector (skips the affines)
    :return: N x 3 x R x R image (not clipped) and optional features
    """
    if styles is None:
        styles = style_vectors(w, model)
    batch = next(iter(styles.styles.values())).shape[0]
    _check_bundle(noise, model, batch)
    params = model.params
    base = model.config.base_resolution
    const = params["synthesis.{0}x{0}.const".format(base)]
    x = const.reshape((1,) + const.shape).broadcast_to(
        (batch,) + const.shape
    )
    image = None
    features: List[Tensor] = []
    rgb_outputs: List[Tensor] = []
    for layer in model.ladder:
        layer_styles = styles[layer.name]
        weight = params[layer.prefix + ".weight"]
        bias = params[layer.prefix + ".bias"].reshape(
            1, layer.out_channels, 1, 1
        )
        if layer.kind == "conv":
            if layer.up:
                x = resample2x(x, "up")
            x = _modulated_conv(x, weight, layer_styles, demodulate=True)
            strength = params[layer.prefix + ".noise_strength"]
            x = x + Tensor(noise.fields[layer.feature_index]) * strength
            x = leaky_relu(x + bias) * ACTIVATION_GAIN
            features.append(x)
        else:
            rgb = _modulated_conv(
                x,
                weight,
                layer_styles * (1.0 / math.sqrt(layer.in_channels)),
                demodulate=False,
            )
            rgb = rgb + bias
            rgb_outputs.append(rgb)
            image = rgb if image is None else resample2x(image, "up") + rgb
    stack = FeatureStack(features, rgb_outputs) if want_features else None
    return SynthesisOutput(image, stack)


def generate(
    model: GeneratorModel,
    z: np.ndarray,
    noise: NoiseBundle,
    batch_size: int = 64,
    styles_hook=None,
) -> np.ndarray:
    """
    Batched generation without gradient tracking.

    :param model: generator
    :param z: N x z_dim latents
    :param noise: bundle with batch extent 1 or N
    :param batch_size: generation batch size
    :param styles_hook: optional callable modifying the StyleSpaceVector
    :return: N x 3 x R x R images (not clipped)
    """
    images = []
    with no_grad():
        for start in range(0, z.shape[0], batch_size):
            stop = min(start + batch_size, z.shape[0])
            w = map_latent(z[start:stop], model)
            styles = style_vectors(w, model)
            if styles_hook is not None:
                styles = styles_hook(styles)
            out = synthesize(
                w, noise.select(start, stop), model, styles=styles
            )
            images.append(out.image.data)
    return np.concatenate(images, axis=0)


# Discriminator


def discriminator_parameter_specs(
    config: DiscriminatorConfig,
) -> "OrderedDict[str, Tuple[int, ...]]":
    specs: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    top = config.channels(config.resolution)
    specs["fromrgb.weight"] = (top, 3, 1, 1)
    specs["fromrgb.bias"] = (top,)
    resolution = config.resolution
    while resolution > 4:
        channels = config.channels(resolution)
        lower = config.channels(resolution // 2)
        prefix = "b{}".format(resolution)
        specs[prefix + ".conv0.weight"] = (channels, channels, 3, 3)
        specs[prefix + ".conv0.bias"] = (channels,)
        specs[prefix + ".conv1.weight"] = (lower, channels, 3, 3)
        specs[prefix + ".conv1.bias"] = (lower,)
        resolution //= 2
    base = config.channels(4)
    specs["b4.conv.weight"] = (base, base, 3, 3)
    specs["b4.conv.bias"] = (base,)
    specs["b4.fc.weight"] = (base, base * 16)
    specs["b4.fc.bias"] = (base,)
    specs["b4.out.weight"] = (1, base)
    specs["b4.out.bias"] = (1,)
    return specs


@dataclass
class DiscriminatorModel:
    config: DiscriminatorConfig
    params: Dict[str, Tensor]

    def __post_init__(self):
        expected = OrderedDict(
            (n, (s, None))
            for n, s in discriminator_parameter_specs(self.config).items()
        )
        _check_parameter_set(self.params, expected)

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((n, p.data) for n, p in self.params.items())

    def copy(self) -> "DiscriminatorModel":
        return DiscriminatorModel(
            self.config,
            OrderedDict((n, parameter(p.data)) for n, p in self.params.items()),
        )


def init_discriminator(
    config: DiscriminatorConfig, rng: np.random.Generator
) -> DiscriminatorModel:
    params = OrderedDict()
    for name, shape in discriminator_parameter_specs(config).items():
        if name.endswith(".weight"):
            value = rng.standard_normal(shape)
        else:
            value = np.zeros(shape)
        params[name] = parameter(to_storage_precision(value))
    return DiscriminatorModel(config, params)


def _conv_act(x: Tensor, params: Dict[str, Tensor], prefix: str) -> Tensor:
    weight = params[prefix + ".weight"]
    gain = 1.0 / math.sqrt(int(np.prod(weight.shape[1:])))
    bias = params[prefix + ".bias"].reshape(1, weight.shape[0], 1, 1)
    return leaky_relu(conv2d(x, weight * gain) + bias) * ACTIVATION_GAIN


def discriminate(image: Tensor, d_model: DiscriminatorModel) -> Tensor:
    """
    Critic logits.

    :param image: N x 3 x R x R images
    :param d_model: discriminator
    :return: N unbounded scores
    """
    resolution = d_model.config.resolution
    image = image if isinstance(image, Tensor) else Tensor(image)
    if image.ndim != 4 or image.shape[1:] != (3, resolution, resolution):
        raise DimensionError(
            "discriminator expects N x 3 x {0} x {0} images, got {1}".format(
                resolution, image.shape
            )
        )
    params = d_model.params
    x = _conv_act(image, params, "fromrgb")
    while resolution > 4:
        prefix = "b{}".format(resolution)
        x = _conv_act(x, params, prefix + ".conv0")
        x = resample2x(x, "down")
        x = _conv_act(x, params, prefix + ".conv1")
        resolution //= 2
    x = _conv_act(x, params, "b4.conv")
    x = x.reshape(x.shape[0], x.size // x.shape[0])
    x = leaky_relu(
        _dense(x, params["b4.fc.weight"], params["b4.fc.bias"], 1.0)
    ) * ACTIVATION_GAIN
    x = _dense(x, params["b4.out.weight"], params["b4.out.bias"], 1.0)
    return x.reshape(x.shape[0])

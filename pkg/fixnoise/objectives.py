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
Training objectives: non saturating adversarial losses, R1 penalty and
the feature matching loss evaluated at the anchored noise point.
"""

# Standard imports
from dataclasses import asdict, dataclass
from typing import Callable, Sequence, Union

# Third party imports
import numpy as np

# Fixnoise imports
from .errors import ConfigurationError, ContractError, DimensionError
from .stylegan_nets import (
    DiscriminatorModel,
    GeneratorModel,
    anchored_noise,
    check_known_keys,
    discriminate,
    map_latent,
    synthesize,
)
from .tensor_autodiff import Tensor, grad, no_grad, softplus

MATCHING_SPACES = ("intermediate", "rgb", "image")


@dataclass(frozen=True)
class LossConfig:
    lambda_fm: float = 0.05
    matching_space: str = "intermediate"
    r1_gamma: float = 1.0
    r1_interval: int = 16

    def __post_init__(self):
        if self.lambda_fm < 0:
            raise ConfigurationError(
                "lambda_fm must be >= 0, got {}".format(self.lambda_fm)
            )
        if self.matching_space not in MATCHING_SPACES:
            raise ConfigurationError(
                "matching_space must be one of {}, got {}".format(
                    MATCHING_SPACES, self.matching_space
                )
            )
        if self.r1_interval < 1:
            raise ConfigurationError(
                "r1_interval must be >= 1, got {}".format(self.r1_interval)
            )
        if self.r1_gamma < 0:
            raise ConfigurationError("r1_gamma must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "LossConfig":
        check_known_keys(cls, values)
        return cls(**values)


def feature_matching_loss(
    source: Sequence[Tensor], target: Sequence[Tensor]
) -> Tensor:
    """
    Mean over layers of the per layer mean squared difference.
    The source stack is detached: only target receives gradients.

    :param source: source features F_s
    :param target: target features F_t
    """
    source, target = list(source), list(target)
    if len(source) != len(target) or not source:
        raise DimensionError(
            "feature stacks differ in length: {} vs {}".format(
                len(source), len(target)
            )
        )
    total = None
    for index, (f_s, f_t) in enumerate(zip(source, target)):
        if f_s.shape != f_t.shape:
            raise DimensionError(
                "feature {} shapes differ: {} vs {}".format(
                    index, f_s.shape, f_t.shape
                )
            )
        diff = f_t - f_s.detach()
        term = (diff * diff).mean()
        total = term if total is None else total + term
    return total * (1.0 / len(source))


def _matching_tensors(output, space: str):
    if space == "intermediate":
        return output.features.features
    if space == "rgb":
        return output.features.rgb_outputs
    return [output.image]


def fixnoise_fm_term(
    g_source: GeneratorModel,
    g_target: GeneratorModel,
    z_batch,
    space: str = "intermediate",
) -> Tensor:
    """
    Feature matching between source and target generators, both run on
    the same latents with the anchored noise bundle.

    :param g_source: frozen source generator (never differentiated)
    :param g_target: generator being trained
    :param z_batch: N x z_dim latents
    :param space: "intermediate", "rgb" or "image"
    """
    if space not in MATCHING_SPACES:
        raise ConfigurationError(
            "matching space must be one of {}, got {}".format(
                MATCHING_SPACES, space
            )
        )
    if g_source.config != g_target.config:
        raise ConfigurationError(
            "source and target generators have different configurations"
        )
    if g_source.anchor_seed != g_target.anchor_seed:
        raise ConfigurationError(
            "anchor seeds differ ({} vs {}): anchored subspaces do not "
            "correspond".format(g_source.anchor_seed, g_target.anchor_seed)
        )
    bundle = anchored_noise(g_target)
    with no_grad():
        source_out = synthesize(
            map_latent(z_batch, g_source), bundle, g_source, want_features=True
        )
    target_out = synthesize(
        map_latent(z_batch, g_target), bundle, g_target, want_features=True
    )
    return feature_matching_loss(
        _matching_tensors(source_out, space),
        _matching_tensors(target_out, space),
    )


def _check_scores(*scores: Tensor):
    for score in scores:
        if score.size == 0:
            raise ContractError("adversarial loss needs a non empty batch")


def adversarial_g_loss(fake_scores: Tensor) -> Tensor:
    """mean softplus(-fake)"""
    _check_scores(fake_scores)
    return softplus(-fake_scores).mean()


def adversarial_d_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """mean softplus(-real) + mean softplus(fake)"""
    _check_scores(real_scores, fake_scores)
    return softplus(-real_scores).mean() + softplus(fake_scores).mean()


def r1_penalty(
    critic: Union[DiscriminatorModel, Callable[[Tensor], Tensor]],
    real_images: Tensor,
    gamma: float = 1.0,
) -> Tensor:
    """
    (gamma / 2) * batch mean of the squared input gradient norm.
    The gradient graph is kept so the penalty trains the critic.

    :param critic: discriminator or any score function
    :param real_images: N x 3 x R x R images with gradient tracking
    :param gamma: penalty weight
    """
    if not isinstance(real_images, Tensor) or not real_images.requires_grad:
        raise ContractError("R1 needs real images with gradient tracking")
    if isinstance(critic, DiscriminatorModel):
        scores = discriminate(real_images, critic)
    else:
        scores = critic(real_images)
    if not isinstance(scores, Tensor):
        scores = Tensor(np.asarray(scores, dtype=np.float64))
    if scores.requires_grad:
        (image_grad,) = grad(scores.sum(), [real_images], create_graph=True)
    else:
        image_grad = Tensor(np.zeros_like(real_images.data))
    axes = tuple(range(1, real_images.ndim))
    return (image_grad * image_grad).sum(axis=axes).mean() * (gamma / 2.0)

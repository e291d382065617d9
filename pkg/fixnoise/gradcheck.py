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
Finite difference checks of the automatic differentiation, from single
operations up to the composite generator loss and the R1 penalty.

Error of a check: max |autodiff - numeric| over the checked coordinates,
divided by the infinity norm of the numeric gradient.
"""

# Standard imports
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

# Third party imports
import numpy as np

# Fixnoise imports
from .errors import ContractError
from .objectives import adversarial_g_loss, fixnoise_fm_term, r1_penalty
from .stylegan_nets import (
    DiscriminatorConfig,
    DiscriminatorModel,
    GeneratorConfig,
    GeneratorModel,
    discriminate,
    init_discriminator,
    init_generator,
    map_latent,
    sample_noise,
    synthesize,
)
from .tensor_autodiff import (
    Tensor,
    conv2d,
    grad,
    leaky_relu,
    resample2x,
    sigmoid,
    softplus,
)

ELEMENTWISE_TOLERANCE = 1e-5
COMPOSITE_TOLERANCE = 1e-3
# central differences step: STEP_SCALE * max(1, |x|)
STEP_SCALE = 1e-4
COMPOSITE_COORDINATES = 3

TOY_CONFIG = GeneratorConfig(
    z_dim=8,
    w_dim=8,
    final_resolution=8,
    channel_max=8,
    channel_min=4,
    mapping_layers=2,
)


@dataclass
class GradcheckRow:
    name: str
    error: float
    tolerance: float
    coordinates: int

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tolerance)


def finite_difference_step(values) -> np.ndarray:
    """Step proportional to the magnitude of the shifted values"""
    return STEP_SCALE * np.maximum(1.0, np.abs(values))


def check_function(
    name: str,
    func: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    tolerance: float = ELEMENTWISE_TOLERANCE,
    rng: Optional[np.random.Generator] = None,
    max_coordinates: Optional[int] = None,
) -> GradcheckRow:
    """
    Compare autodiff and central difference gradients of func.

    Non scalar outputs are reduced with a fixed random projection.

    :param name: row label
    :param func: function of Tensors
    :param inputs: input arrays (float64)
    :param tolerance: pass threshold on the error
    :param rng: draws the projection and sampled coordinates
    :param max_coordinates: coordinates checked per input, all when None
    """
    rng = rng or np.random.default_rng(0)
    inputs = [np.array(a, dtype=np.float64) for a in inputs]
    shape = func(*[Tensor(a) for a in inputs]).shape
    projection = rng.standard_normal(shape)

    def scalar(arrays, tracked=False):
        tensors = [Tensor(a, requires_grad=tracked) for a in arrays]
        out = func(*tensors)
        return (out * Tensor(projection)).sum(), tensors

    loss, tensors = scalar(inputs, tracked=True)
    analytic = [g.data for g in grad(loss, tensors)]

    differences, references = [], []
    for index, array in enumerate(inputs):
        coordinates = list(np.ndindex(array.shape))
        if max_coordinates is not None and len(coordinates) > max_coordinates:
            picks = rng.choice(len(coordinates), max_coordinates, replace=False)
            coordinates = [coordinates[p] for p in sorted(picks)]
        steps = finite_difference_step(array)
        for coordinate in coordinates:
            step = steps[coordinate]
            values = []
            for sign in (1.0, -1.0):
                shifted = [a.copy() for a in inputs]
                shifted[index][coordinate] += sign * step
                values.append(scalar(shifted)[0].item())
            numeric = (values[0] - values[1]) / (2.0 * step)
            differences.append(abs(analytic[index][coordinate] - numeric))
            references.append(abs(numeric))
    scale = max(max(references, default=0.0), 1e-12)
    error = max(differences, default=0.0) / scale
    return GradcheckRow(name, float(error), tolerance, len(differences))


def _away_from_zero(array: np.ndarray, margin: float = 0.1) -> np.ndarray:
    return np.sign(array) * (np.abs(array) + margin) + (array == 0) * margin


def _generator_from(names, tensors, template: GeneratorModel):
    return GeneratorModel(
        template.config, OrderedDict(zip(names, tensors)), template.anchor_seed
    )


def _composite_rows(
    rng: np.random.Generator, coordinates: int
) -> List[GradcheckRow]:
    init_rng = np.random.default_rng(np.random.SeedSequence(1))
    g_source = init_generator(TOY_CONFIG, init_rng)
    d_model = init_discriminator(
        DiscriminatorConfig.from_generator(TOY_CONFIG), init_rng
    )
    # target slightly away from the source so the matching term is active
    g_target = g_source.copy()
    for param in g_target.parameters():
        param.data = param.data + 0.01 * init_rng.standard_normal(param.shape)
    z = init_rng.standard_normal((2, TOY_CONFIG.z_dim))
    noise = sample_noise(init_rng, g_target, "random", 2)
    names = list(g_target.params)

    def generator_loss(*tensors):
        model = _generator_from(names, tensors, g_target)
        image = synthesize(map_latent(z, model), noise, model).image
        adversarial = adversarial_g_loss(discriminate(image, d_model))
        return adversarial + fixnoise_fm_term(g_source, model, z) * 0.05

    rows = [
        check_function(
            "generator_loss",
            generator_loss,
            [g_target.params[n].data for n in names],
            COMPOSITE_TOLERANCE,
            rng,
            max_coordinates=coordinates,
        )
    ]

    real = np.clip(init_rng.standard_normal((2, 3, 8, 8)) * 0.5, -1.0, 1.0)
    d_names = list(d_model.params)

    def r1_loss(*tensors):
        critic = DiscriminatorModel(
            d_model.config, OrderedDict(zip(d_names, tensors))
        )
        return r1_penalty(critic, Tensor(real, requires_grad=True), 1.0)

    rows.append(
        check_function(
            "r1_penalty",
            r1_loss,
            [d_model.params[n].data for n in d_names],
            COMPOSITE_TOLERANCE,
            rng,
            max_coordinates=coordinates,
        )
    )
    return rows


def run_gradcheck(
    seed: int = 0, composite_coordinates: int = COMPOSITE_COORDINATES
) -> List[GradcheckRow]:
    """
    Run every check of the suite

    :param seed: draws inputs, projections and sampled coordinates
    :param composite_coordinates: coordinates checked per parameter
        tensor in the composite losses
    """
    if composite_coordinates < 1:
        raise ContractError("composite checks need at least one coordinate")
    rng = np.random.default_rng(seed)

    def normal(*shape):
        return rng.standard_normal(shape)

    def positive(*shape):
        return rng.uniform(0.5, 2.0, shape)

    def conv_input_grad(x, w):
        if not x.requires_grad:
            x = Tensor(x.data, requires_grad=True)
        out = conv2d(x, w)
        (gx,) = grad((out * out).sum(), [x], create_graph=True)
        return gx * gx

    elementwise = [
        ("add", lambda a, b: a + b, [normal(3, 4), normal(4)]),
        ("sub", lambda a, b: a - b, [normal(3, 4), normal(3, 1)]),
        ("mul", lambda a, b: a * b, [normal(3, 4), normal(4)]),
        ("div", lambda a, b: a / b, [normal(3, 4), positive(3, 4)]),
        ("neg", lambda a: -a, [normal(5)]),
        ("pow", lambda a: a ** -0.5, [positive(3, 3)]),
        ("sqrt", lambda a: a.sqrt(), [positive(4)]),
        ("matmul", lambda a, b: a.matmul(b), [normal(3, 4), normal(4, 2)]),
        ("sum", lambda a: a.sum(axis=1, keepdims=True), [normal(3, 4)]),
        ("mean", lambda a: a.mean(axis=(0, 2)), [normal(2, 3, 4)]),
        ("reshape", lambda a: a.reshape(4, 3) * 2.0, [normal(3, 4)]),
        ("transpose", lambda a: a.transpose(1, 0, 2), [normal(2, 3, 4)]),
        ("flip", lambda a: a.flip((0, 1)) * a, [normal(3, 3)]),
        ("broadcast_to", lambda a: a.broadcast_to((3, 4)), [normal(1, 4)]),
        (
            "leaky_relu",
            lambda a: leaky_relu(a),
            [_away_from_zero(normal(3, 4))],
        ),
        ("sigmoid", lambda a: sigmoid(a), [normal(3, 4)]),
        ("softplus", lambda a: softplus(a), [normal(3, 4) * 3.0]),
        ("conv2d_3x3", conv2d, [normal(2, 3, 5, 5), normal(4, 3, 3, 3)]),
        ("conv2d_1x1", conv2d, [normal(2, 3, 4, 4), normal(2, 3, 1, 1)]),
        ("resample_up", lambda x: resample2x(x, "up"), [normal(1, 2, 4, 4)]),
        (
            "resample_down",
            lambda x: resample2x(x, "down"),
            [normal(1, 2, 4, 4)],
        ),
        (
            "conv2d_double_backward",
            conv_input_grad,
            [normal(1, 2, 4, 4), normal(3, 2, 3, 3)],
        ),
    ]
    rows = [
        check_function(name, func, inputs, ELEMENTWISE_TOLERANCE, rng)
        for name, func, inputs in elementwise
    ]
    rows.extend(_composite_rows(rng, composite_coordinates))
    for row in rows:
        logging.info(
            "gradcheck {}: error {:.3e} ({})".format(
                row.name, row.error, "ok" if row.passed else "FAILED"
            )
        )
    return rows


def format_table(rows: Sequence[GradcheckRow]) -> str:
    header = ("check", "error", "tolerance", "pass")
    lines = ["{:<24} {:>12} {:>10} {:>6}".format(*header)]
    for row in rows:
        lines.append(
            "{:<24} {:>12.3e} {:>10.0e} {:>6}".format(
                row.name,
                row.error,
                row.tolerance,
                "yes" if row.passed else "NO",
            )
        )
    return "\n".join(lines)

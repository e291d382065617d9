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
Source pretraining and transfer fine tuning loops.

One root seed fans out to named random streams (init, latents, noise,
data) so that switching the feature matching term on or off does not
shift unrelated draws. Training is single threaded and a pure function
of (configuration, dataset, seed).
"""

# Standard imports
import json
import logging
import math
import os
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Set, Tuple

# Third party imports
import numpy as np

# Fixnoise imports
from .checkpoint import AdamState, TrainingState, save_checkpoint
from .errors import ConfigurationError, ContractError, DimensionError
from .errors import NumericalError
from .objectives import (
    LossConfig,
    adversarial_d_loss,
    adversarial_g_loss,
    fixnoise_fm_term,
    r1_penalty,
)
from .output_tree_design import get_out_dir, get_out_file_path
from .stylegan_nets import (
    DiscriminatorConfig,
    GeneratorConfig,
    GeneratorModel,
    build_ladder,
    check_known_keys,
    discriminate,
    init_discriminator,
    init_generator,
    layer_parameter_names,
    map_latent,
    mapping_parameter_names,
    sample_noise,
    synthesize,
)
from .tensor_autodiff import Tensor, grad, no_grad, to_storage_precision

STREAMS = {"init": 0, "latents": 1, "noise": 2, "data": 3}

# settings of the full scale reference runs, kept in checkpoint metadata
REFERENCE_SETTINGS = {
    "batch_size": 64,
    "image_budgets": {"source": "2000K", "large": "12000K", "target": "5000K"},
    "lambda_fm": 0.05,
}


def parse_mode(mode: str) -> Tuple[str, int]:
    """
    Split a training mode into its kind and freeze count.

    "plain", "fixnoise", "freeze-mapping" or "freezeg=<i>".
    """
    if mode in ("plain", "fixnoise", "freeze-mapping"):
        return mode, 0
    if mode.startswith("freezeg="):
        try:
            count = int(mode.split("=", 1)[1])
        except ValueError as error:
            raise ConfigurationError(
                "invalid freeze count in mode {}".format(mode)
            ) from error
        if count < 0:
            raise ConfigurationError("freeze count must be >= 0")
        return "freezeg", count
    raise ConfigurationError(
        "mode must be plain, fixnoise, freezeg=<i> or freeze-mapping, "
        "got {}".format(mode)
    )


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    total_images: int = 200000
    learning_rate: float = 0.0025
    adam_betas: Tuple[float, float] = (0.0, 0.99)
    adam_eps: float = 1e-8
    ema_halflife_images: float = 10000.0
    mode: str = "plain"
    seed: int = 0
    log_interval: int = 10
    snapshot_interval: int = 1000

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigurationError(
                "batch_size must be >= 2, got {}".format(self.batch_size)
            )
        if self.total_images < 1:
            raise ConfigurationError("total_images must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if len(self.adam_betas) != 2 or not all(
            0.0 <= b < 1.0 for b in self.adam_betas
        ):
            raise ConfigurationError(
                "adam_betas must be two values in [0, 1), got {}".format(
                    self.adam_betas
                )
            )
        if self.ema_halflife_images < 0:
            raise ConfigurationError("ema_halflife_images must be >= 0")
        if self.log_interval < 1 or self.snapshot_interval < 0:
            raise ConfigurationError(
                "log_interval must be >= 1 and snapshot_interval >= 0"
            )
        parse_mode(self.mode)

    @property
    def total_steps(self) -> int:
        return int(math.ceil(self.total_images / self.batch_size))

    def to_dict(self) -> dict:
        values = asdict(self)
        values["adam_betas"] = list(self.adam_betas)
        return values

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        check_known_keys(cls, values)
        values = dict(values)
        if "adam_betas" in values:
            values["adam_betas"] = tuple(values["adam_betas"])
        return cls(**values)


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Named random stream derived from the root seed"""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(STREAMS[name],))
    )


def frozen_parameter_names(mode: str, config: GeneratorConfig) -> Set[str]:
    kind, count = parse_mode(mode)
    if kind == "freezeg":
        ladder = build_ladder(config)
        if count > len(ladder):
            raise ConfigurationError(
                "cannot freeze {} layers, the generator has {}".format(
                    count, len(ladder)
                )
            )
        return set(layer_parameter_names(config, ladder[:count]))
    if kind == "freeze-mapping":
        return set(mapping_parameter_names(config))
    return set()


def adam_step(
    params: Dict[str, Tensor],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float,
    betas: Tuple[float, float],
    eps: float = 1e-8,
):
    """
    Bias corrected Adam update of the parameters present in grads.
    Parameters and moments are kept at 32-bit storage precision.
    """
    state.step += 1
    beta1, beta2 = betas
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, gradient in grads.items():
        m = beta1 * state.m[name] + (1.0 - beta1) * gradient
        v = beta2 * state.v[name] + (1.0 - beta2) * gradient * gradient
        step = learning_rate * (m / correction1) / (
            np.sqrt(v / correction2) + eps
        )
        params[name].data = to_storage_precision(params[name].data - step)
        state.m[name] = to_storage_precision(m)
        state.v[name] = to_storage_precision(v)


def ema_update(
    g_ema: GeneratorModel,
    g: GeneratorModel,
    batch_images: int,
    halflife_images: float,
) -> GeneratorModel:
    """
    Blend g_ema toward g with decay 0.5 ** (batch_images / halflife).

    :param g_ema: averaged generator, updated in place
    :param g: trained generator
    :param batch_images: images consumed since the previous update
    :param halflife_images: half life in images (inf keeps g_ema)
    :return: g_ema
    """
    if list(g_ema.params) != list(g.params) or any(
        g_ema.params[n].shape != p.shape for n, p in g.params.items()
    ):
        raise DimensionError("EMA and trained generators differ in parameters")
    if halflife_images == 0:
        decay = 0.0
    else:
        decay = 0.5 ** (batch_images / halflife_images)
    if decay == 1.0:
        return g_ema
    for name, param in g.params.items():
        averaged = g_ema.params[name]
        averaged.data = param.data + (averaged.data - param.data) * decay
    return g_ema


def iterate_batches(
    images: np.ndarray, batch_size: int, rng: np.random.Generator
) -> Iterator[np.ndarray]:
    """Endless batches following epoch permutations of the data stream"""
    pending = np.empty(0, dtype=np.int64)
    while True:
        while pending.size < batch_size:
            pending = np.concatenate([pending, rng.permutation(len(images))])
        indices, pending = pending[:batch_size], pending[batch_size:]
        yield images[indices]


def _check_images(images: np.ndarray, config: GeneratorConfig):
    if images is None or len(images) == 0:
        raise ContractError("training needs a non empty dataset")
    resolution = config.final_resolution
    if images.ndim != 4 or images.shape[1:] != (3, resolution, resolution):
        raise DimensionError(
            "dataset images of shape {} do not match resolution {}".format(
                images.shape[1:], resolution
            )
        )


def _gradients(loss: Tensor, params: Dict[str, Tensor], names: List[str]):
    tensors = grad(loss, [params[n] for n in names])
    return OrderedDict((n, t.data) for n, t in zip(names, tensors))


def _all_finite(value: float, grads: Dict[str, np.ndarray]) -> bool:
    return math.isfinite(value) and all(
        np.all(np.isfinite(g)) for g in grads.values()
    )


def _abort(state: TrainingState, out_dir: Optional[str], message: str):
    snapshot = None
    if out_dir is not None:
        snapshot = os.path.join(out_dir, get_out_file_path("nan_snapshot.fxnz"))
        save_checkpoint(state, snapshot)
    logging.error("{} (snapshot: {})".format(message, snapshot))
    raise NumericalError(message, snapshot)


def _run_training(
    state: TrainingState,
    images: np.ndarray,
    train_config: TrainConfig,
    loss_config: LossConfig,
    out_dir: Optional[str],
    kind: str,
    g_source: Optional[GeneratorModel] = None,
    fm_interval: int = 1,
) -> TrainingState:
    g, g_ema, d = state.g, state.g_ema, state.d
    mode, _ = parse_mode(train_config.mode)
    frozen = frozen_parameter_names(train_config.mode, g.config)
    trainable = [n for n in g.params if n not in frozen]
    d_names = list(d.params)
    latents = rng_stream(train_config.seed, "latents")
    noise_rng = rng_stream(train_config.seed, "noise")
    batches = iterate_batches(
        images, train_config.batch_size, rng_stream(train_config.seed, "data")
    )
    batch_size = train_config.batch_size
    total_steps = train_config.total_steps
    log_stream = None
    if out_dir is not None:
        for key in ("checkpoints_dir", "logs_dir"):
            os.makedirs(os.path.join(out_dir, get_out_dir(key)), exist_ok=True)
        log_stream = open(
            os.path.join(out_dir, get_out_file_path("metrics.jsonl")), "w"
        )
    logging.info(
        "Training {} ({}) for {} steps of {} images".format(
            kind, train_config.mode, total_steps, batch_size
        )
    )
    try:
        for step in range(total_steps):
            log_step = step % train_config.log_interval == 0 or (
                step == total_steps - 1
            )

            # generator step
            z = latents.standard_normal((batch_size, g.config.z_dim))
            noise = sample_noise(noise_rng, g, "random", batch_size)
            fake = synthesize(map_latent(z, g), noise, g).image
            g_loss = adversarial_g_loss(discriminate(fake, d))
            fm_value = None
            if mode == "fixnoise" and step % fm_interval == 0:
                fm = fixnoise_fm_term(
                    g_source, g, z, loss_config.matching_space
                )
                fm_value = fm.item()
                g_loss = g_loss + fm * loss_config.lambda_fm
            elif g_source is not None and log_step:
                with no_grad():
                    fm_value = fixnoise_fm_term(
                        g_source, g, z, loss_config.matching_space
                    ).item()
            g_grads = _gradients(g_loss, g.params, trainable)
            if not _all_finite(g_loss.item(), g_grads):
                _abort(
                    state,
                    out_dir,
                    "non finite generator loss at step {}".format(step),
                )
            adam_step(
                g.params,
                g_grads,
                state.g_opt,
                train_config.learning_rate,
                train_config.adam_betas,
                train_config.adam_eps,
            )
            ema_update(g_ema, g, batch_size, train_config.ema_halflife_images)
            for param in g_ema.parameters():
                param.data = to_storage_precision(param.data)

            # discriminator step
            z = latents.standard_normal((batch_size, g.config.z_dim))
            noise = sample_noise(noise_rng, g, "random", batch_size)
            with no_grad():
                fake = synthesize(map_latent(z, g), noise, g).image
            apply_r1 = (
                loss_config.r1_gamma > 0
                and step % loss_config.r1_interval == 0
            )
            real = Tensor(next(batches), requires_grad=apply_r1)
            d_loss = adversarial_d_loss(
                discriminate(real, d), discriminate(fake, d)
            )
            d_total = d_loss
            r1_value = None
            if apply_r1:
                r1 = r1_penalty(d, real, loss_config.r1_gamma)
                r1_value = r1.item()
                # lazy regularization: weight by the interval
                d_total = d_loss + r1 * float(loss_config.r1_interval)
            d_grads = _gradients(d_total, d.params, d_names)
            if not _all_finite(d_total.item(), d_grads):
                _abort(
                    state,
                    out_dir,
                    "non finite discriminator loss at step {}".format(step),
                )
            adam_step(
                d.params,
                d_grads,
                state.d_opt,
                train_config.learning_rate,
                train_config.adam_betas,
                train_config.adam_eps,
            )

            state.metadata["step"] = step + 1
            state.metadata["images_seen"] = (step + 1) * batch_size
            if log_step:
                record = OrderedDict(
                    [
                        ("step", step),
                        ("images_seen", (step + 1) * batch_size),
                        ("g_loss", g_loss.item()),
                        ("d_loss", d_loss.item()),
                        ("fm_loss", fm_value),
                        ("r1", r1_value),
                    ]
                )
                logging.info("{} {}".format(kind, json.dumps(record)))
                if log_stream is not None:
                    log_stream.write(json.dumps(record) + "\n")
            if (
                out_dir is not None
                and train_config.snapshot_interval
                and (step + 1) % train_config.snapshot_interval == 0
            ):
                save_checkpoint(
                    state,
                    os.path.join(
                        out_dir,
                        get_out_dir("checkpoints_dir"),
                        "{}-step{:06d}.fxnz".format(kind, step + 1),
                    ),
                )
    finally:
        if log_stream is not None:
            log_stream.close()
    return state


def _base_metadata(
    kind: str, train_config: TrainConfig, loss_config: LossConfig
) -> dict:
    return {
        "kind": kind,
        "mode": train_config.mode,
        "seed": train_config.seed,
        "lambda_fm": loss_config.lambda_fm,
        "train_config": train_config.to_dict(),
        "loss_config": loss_config.to_dict(),
        "reference_settings": REFERENCE_SETTINGS,
        "step": 0,
        "images_seen": 0,
    }


def checkpoint_path(out_dir: str, kind: str) -> str:
    return os.path.join(out_dir, get_out_dir("checkpoints_dir"), kind + ".fxnz")


def pretrain_source(
    g_config: GeneratorConfig,
    train_config: TrainConfig,
    loss_config: LossConfig,
    images: np.ndarray,
    out_dir: Optional[str] = None,
    extra_metadata: Optional[dict] = None,
) -> TrainingState:
    """
    Adversarial training of a source generator from scratch.

    :param g_config: generator configuration
    :param train_config: training configuration (mode is ignored)
    :param loss_config: loss configuration
    :param images: N x 3 x R x R dataset in [-1, 1]
    :param out_dir: output root for logs and checkpoints, or None
    :param extra_metadata: entries added to the checkpoint metadata
    :return: final state, also written to checkpoints/source.fxnz
    """
    _check_images(images, g_config)
    if train_config.mode != "plain":
        logging.warning(
            "Source pretraining ignores mode {}".format(train_config.mode)
        )
        train_config = TrainConfig.from_dict(
            dict(train_config.to_dict(), mode="plain")
        )
    init_rng = rng_stream(train_config.seed, "init")
    g = init_generator(g_config, init_rng)
    d_config = DiscriminatorConfig.from_generator(g_config)
    d = init_discriminator(d_config, init_rng)
    state = TrainingState(
        g,
        g.copy(),
        d,
        AdamState.zeros_like(g.params),
        AdamState.zeros_like(d.params),
        dict(
            _base_metadata("source", train_config, loss_config),
            **(extra_metadata or {})
        ),
    )
    _run_training(state, images, train_config, loss_config, out_dir, "source")
    if out_dir is not None:
        save_checkpoint(state, checkpoint_path(out_dir, "source"))
    return state


def transfer(
    train_config: TrainConfig,
    loss_config: LossConfig,
    source: TrainingState,
    images: np.ndarray,
    out_dir: Optional[str] = None,
    fm_interval: int = 1,
    extra_metadata: Optional[dict] = None,
) -> TrainingState:
    """
    Fine tune a source state on target images.

    The trained generator, its EMA and the discriminator start from the
    source EMA generator and source discriminator; optimizers restart.

    :param train_config: training configuration, mode included
    :param loss_config: loss configuration
    :param source: source training state
    :param images: N x 3 x R x R target dataset in [-1, 1]
    :param out_dir: output root for logs and checkpoints, or None
    :param fm_interval: generator steps between feature matching terms
    :param extra_metadata: entries added to the checkpoint metadata,
        such as the source checkpoint hash
    :return: final state, also written to checkpoints/transfer.fxnz
    """
    if source.g_ema.anchor_seed is None:
        raise ConfigurationError("source checkpoint has no anchor seed")
    if fm_interval < 1:
        raise ConfigurationError("fm_interval must be >= 1")
    g_config = source.g_ema.config
    _check_images(images, g_config)
    frozen_parameter_names(train_config.mode, g_config)
    g = source.g_ema.copy()
    d = source.d.copy()
    metadata = _base_metadata("transfer", train_config, loss_config)
    metadata["fm_interval"] = fm_interval
    metadata.update(extra_metadata or {})
    state = TrainingState(
        g,
        source.g_ema.copy(),
        d,
        AdamState.zeros_like(g.params),
        AdamState.zeros_like(d.params),
        metadata,
    )
    _run_training(
        state,
        images,
        train_config,
        loss_config,
        out_dir,
        "transfer",
        g_source=source.g_ema.copy(),
        fm_interval=fm_interval,
    )
    if out_dir is not None:
        save_checkpoint(state, checkpoint_path(out_dir, "transfer"))
    return state

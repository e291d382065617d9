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
Fixnoise init module file.
Fixnoise transfers a style based generator to a new image domain while
keeping an anchored noise subspace that reproduces the source domain, and
interpolates between both domains through the noise input.
"""

# Standard imports
import csv
import json
import logging
import logging.config
import os
import sys

# worker threads are capped before numpy loads its BLAS backend
_THREADS = os.environ.get("FIXNOISE_THREADS", "1")
for _variable in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_variable, _THREADS)

# Third party imports
import numpy as np  # noqa: E402

# Fixnoise imports
from . import initialization  # noqa: E402
from .checkpoint import file_sha256, load_checkpoint  # noqa: E402
from .errors import ConfigurationError, ContractError  # noqa: E402
from .gradcheck import (  # noqa: E402
    COMPOSITE_COORDINATES,
    format_table,
    run_gradcheck,
)
from .img_tools import make_grid, write_png  # noqa: E402
from .metrics_eval import (  # noqa: E402
    build_extractor,
    eval_protocol,
    extract_features,
    fid,
    generated_images,
    kid_blocks,
    plot_alpha_sweep,
    save_report,
)
from .model_surgery import layer_swap, save_hybrid, ui2i_compose  # noqa: E402
from .output_tree_design import (  # noqa: E402
    get_otd_dirs,
    get_out_dir,
    get_out_file_path,
)
from .stylegan_nets import (  # noqa: E402
    anchored_noise,
    interpolate_noise,
    modulate_style,
    sample_noise,
)
from .synth_domains import (  # noqa: E402
    MANIFEST_NAME,
    generate_domain_dataset,
    get_preset,
    load_dataset_array,
)
from .transfer_trainer import pretrain_source, transfer  # noqa: E402

# ** VERSION **
# pylint: disable=import-error,no-name-in-module
# Depending on python version get importlib standard lib or backported package
if sys.version_info[:2] >= (3, 8):
    # when python3 > 3.8
    from importlib.metadata import PackageNotFoundError  # pragma: no cover
    from importlib.metadata import version
else:
    from importlib_metadata import PackageNotFoundError  # pragma: no cover
    from importlib_metadata import version
# Get fixnoise package version (installed from setuptools_scm)
try:
    __version__ = version("fixnoise")
except PackageNotFoundError:
    __version__ = "unknown"  # pragma: no cover
finally:
    del version, PackageNotFoundError

# named substreams of a generation seed (latents, noise)
LATENT_STREAM = 1
NOISE_STREAM = 2

DATASET_DOMAINS = ("source", "target")


def setup_logging(
    logconf_path=os.path.join(os.path.dirname(__file__), "logging.json"),
    default_level=logging.WARNING,
):
    """
    Setup the logging configuration
    If logconf_path is found, set the json logging configuration
    Else put default_level

    :param logconf_path: path to the configuration file
    :type logconf_path: string
    :param default_level: default level
    :type default_level: logging level
    """
    if os.path.exists(logconf_path):
        with open(logconf_path, "rt") as logconf_file:
            config = json.load(logconf_file)
        config.setdefault("root", {})["level"] = logging.getLevelName(
            default_level
        )
        logging.config.dictConfig(config)
    else:
        logging.basicConfig(level=default_level)


def _make_out_tree(out_dir: str):
    out_dir = os.path.abspath(out_dir)
    for directory in get_otd_dirs():
        initialization.mkdir_p(os.path.join(out_dir, directory))
    return out_dir


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def compute_initialization(
    config_json=None, out_dir=None, overrides=None
) -> dict:
    """
    Compute fixnoise initialization process :
    configuration reading, defaults, command line overrides, checking
    and output tree creation.

    :param config_json: JSON configuration file, defaults only when None
    :param out_dir: output directory overriding outputDir
    :param overrides: {section: {key: value}}, None values are ignored
    """
    cfg = {} if config_json is None else initialization.read_config(config_json)
    if out_dir is not None:
        cfg["outputDir"] = out_dir
    if "outputDir" not in cfg:
        raise initialization.ConfigurationError(
            "no output directory: set outputDir or --out"
        )
    initialization.initialization_opts(cfg)
    for section, values in (overrides or {}).items():
        initialization.apply_overrides(cfg, section, **values)
    initialization.check_parameters(cfg)
    cfg["outputDir"] = _make_out_tree(cfg["outputDir"])
    return cfg


def write_effective_config(out_dir: str, document: dict) -> str:
    """
    Dump the configuration (or the arguments) a command actually ran with
    """
    path = os.path.join(
        _make_out_tree(out_dir), get_out_file_path("effective_config.json")
    )
    with open(path, "w") as outfile:
        json.dump(document, outfile, indent=2, sort_keys=True)
    logging.info("Effective configuration: {}".format(json.dumps(document)))
    return path


def compute_dataset(preset, n, seed, out_dir, resolution=None) -> str:
    """
    Render a preset dataset under <out>/datasets/<preset>

    :return: manifest path
    """
    spec = get_preset(preset, resolution)
    out_dir = _make_out_tree(out_dir)
    dataset_dir = os.path.join(out_dir, get_out_dir("datasets_dir"), preset)
    generate_domain_dataset(spec, seed, n, dataset_dir)
    return os.path.join(dataset_dir, MANIFEST_NAME)


def compute_domain_dataset(cfg: dict, domain: str, resolution=None) -> str:
    """
    Render the source or target dataset described by dataset_opts

    :param domain: "source" or "target"
    :return: manifest path
    """
    if domain not in DATASET_DOMAINS:
        raise ConfigurationError(
            "dataset domain must be one of {}, got {}".format(
                DATASET_DOMAINS, domain
            )
        )
    opts = cfg["dataset_opts"]
    return compute_dataset(
        opts[domain + "_preset"],
        int(opts[domain + "_count"]),
        int(opts["seed"]),
        cfg["outputDir"],
        resolution,
    )


def compute_train_source(cfg: dict, manifest_path: str) -> str:
    """
    Pretrain a source generator on a dataset

    :return: checkpoint path
    """
    source_config, _, _ = initialization.train_configs(cfg)
    state = pretrain_source(
        initialization.generator_config(cfg),
        source_config,
        initialization.loss_config(cfg),
        load_dataset_array(manifest_path),
        cfg["outputDir"],
        extra_metadata={"dataset_sha256": file_sha256(manifest_path)},
    )
    logging.info(
        "Source pretraining done after {} images".format(
            state.metadata["images_seen"]
        )
    )
    return os.path.join(
        cfg["outputDir"], get_out_dir("checkpoints_dir"), "source.fxnz"
    )


def compute_transfer(cfg: dict, source_ckpt: str, manifest_path: str) -> str:
    """
    Transfer a source checkpoint to a target dataset

    :return: checkpoint path
    """
    _, transfer_config, fm_interval = initialization.train_configs(cfg)
    transfer(
        transfer_config,
        initialization.loss_config(cfg),
        load_checkpoint(source_ckpt),
        load_dataset_array(manifest_path),
        cfg["outputDir"],
        fm_interval=fm_interval,
        extra_metadata={
            "source_sha256": file_sha256(source_ckpt),
            "dataset_sha256": file_sha256(manifest_path),
        },
    )
    return os.path.join(
        cfg["outputDir"], get_out_dir("checkpoints_dir"), "transfer.fxnz"
    )


def _check_count(n: int):
    if n < 1:
        raise ContractError("need n >= 1 latents, got {}".format(n))


def _latents_and_noise(model, n: int, seed: int):
    z = _stream(seed, LATENT_STREAM).standard_normal((n, model.config.z_dim))
    random = sample_noise(_stream(seed, NOISE_STREAM), model, "random", n)
    return z, random


def _write_grid(rows, out_dir: str, name: str) -> str:
    cells_dir = os.path.join(out_dir, get_out_dir("cells_dir"))
    for row_index, row in enumerate(rows):
        for col_index, cell in enumerate(row):
            write_png(
                os.path.join(
                    cells_dir,
                    "{}_r{:03d}_c{:03d}.png".format(name, row_index, col_index),
                ),
                cell,
            )
    path = os.path.join(out_dir, get_out_dir("grids_dir"), name + ".png")
    write_png(path, make_grid(rows))
    return path


def compute_generate(
    checkpoint, alphas, n, seed, out_dir, source_ckpt=None
) -> str:
    """
    One row per latent, one column per interpolation weight (after an
    optional column of anchored source generations).

    :return: grid path
    """
    _check_count(n)
    model = load_checkpoint(checkpoint).g_ema
    z, random = _latents_and_noise(model, n, seed)
    anchored = anchored_noise(model)
    columns = []
    if source_ckpt is not None:
        source = load_checkpoint(source_ckpt).g_ema
        columns.append(generated_images(source, z, anchored_noise(source)))
    for alpha in alphas:
        columns.append(
            generated_images(
                model, z, interpolate_noise(anchored, random, alpha)
            )
        )
    rows = [[column[row] for column in columns] for row in range(n)]
    return _write_grid(rows, _make_out_tree(out_dir), "generate")


def compute_modulate(
    checkpoint, layer, channel, delta, alphas, n, seed, out_dir
) -> str:
    """
    Style channel modulation at several interpolation weights: for each
    alpha, a -delta and a +delta cell per latent.

    :return: grid path
    """
    _check_count(n)
    model = load_checkpoint(checkpoint).g_ema
    z, random = _latents_and_noise(model, n, seed)
    anchored = anchored_noise(model)
    columns = []
    for alpha in alphas:
        noise = interpolate_noise(anchored, random, alpha)
        for sign in (-1.0, 1.0):
            columns.append(
                generated_images(
                    model,
                    z,
                    noise,
                    styles_hook=lambda styles, shift=sign * delta: (
                        modulate_style(styles, layer, channel, shift)
                    ),
                )
            )
    rows = [[column[row] for column in columns] for row in range(n)]
    return _write_grid(rows, _make_out_tree(out_dir), "modulate")


def compute_swap(
    source_ckpt, target_ckpt, i, out_dir, ui2i=False, mapping="target"
) -> str:
    """
    Write a Layer-swap (or UI2I) hybrid checkpoint

    :return: checkpoint path
    """
    source = load_checkpoint(source_ckpt)
    target = load_checkpoint(target_ckpt)
    if ui2i:
        hybrid = ui2i_compose(source.g_ema, target, i)
        method = "ui2i"
    else:
        hybrid = layer_swap(source.g_ema, target.g_ema, i, mapping)
        method = "layer-swap"
    path = os.path.join(
        _make_out_tree(out_dir),
        get_out_dir("checkpoints_dir"),
        "{}-i{}.fxnz".format(method, i),
    )
    save_hybrid(hybrid, path, i, source_ckpt, target_ckpt, target, method)
    return path


def compute_eval(cfg, source_ckpt, target_ckpt, manifest_path) -> str:
    """
    Interpolation sweep report (JSON, CSV and figure)

    :return: CSV report path
    """
    report = eval_protocol(
        load_checkpoint(source_ckpt).g_ema,
        load_checkpoint(target_ckpt).g_ema,
        load_dataset_array(manifest_path),
        initialization.metrics_config(cfg),
    )
    out_dir = cfg["outputDir"]
    csv_path = os.path.join(out_dir, get_out_file_path("metric_report.csv"))
    save_report(
        report,
        os.path.join(out_dir, get_out_file_path("metric_report.json")),
        csv_path,
    )
    plot_alpha_sweep(
        report, os.path.join(out_dir, get_out_file_path("alpha_sweep.png"))
    )
    return csv_path


def parse_entry(entry: str):
    """name=checkpoint[@alpha] -> (name, checkpoint, alpha)"""
    if "=" not in entry:
        raise initialization.ConfigurationError(
            "entry {} must read name=checkpoint[@alpha]".format(entry)
        )
    name, target = entry.split("=", 1)
    alpha = 0.0
    if "@" in target:
        target, alpha_text = target.rsplit("@", 1)
        try:
            alpha = float(alpha_text)
        except ValueError as error:
            raise initialization.ConfigurationError(
                "invalid alpha in entry {}".format(entry)
            ) from error
    return name, target, alpha


def compute_compare(cfg, manifest_path, entries) -> str:
    """
    FID and KID x1e3 of several generators against one target dataset

    :param entries: name=checkpoint[@alpha] strings
    :return: CSV table path
    """
    metrics = initialization.metrics_config(cfg)
    extractor = build_extractor(
        metrics.extractor_seed, metrics.extractor_channels
    )
    target_features = extract_features(
        load_dataset_array(manifest_path), extractor, metrics.batch_size
    )
    rows = []
    for name, checkpoint, alpha in (parse_entry(e) for e in entries):
        model = load_checkpoint(checkpoint).g_ema
        z, random = _latents_and_noise(model, metrics.n_samples, metrics.seed)
        images = generated_images(
            model,
            z,
            interpolate_noise(anchored_noise(model), random, alpha),
            metrics.batch_size,
        )
        features = extract_features(images, extractor, metrics.batch_size)
        blocks = kid_blocks(
            features,
            target_features,
            metrics.kid_blocks,
            metrics.kid_block_size,
        )
        rows.append(
            {
                "Method": name,
                "Checkpoint": os.path.basename(checkpoint),
                "alpha": alpha,
                "FID": fid(features, target_features),
                "KID x1e3": 1e3 * float(np.mean(blocks)),
            }
        )
        logging.info("Baseline {}: {}".format(name, rows[-1]))
    return _save_table(
        rows,
        os.path.join(cfg["outputDir"], get_out_file_path("baselines.json")),
        os.path.join(cfg["outputDir"], get_out_file_path("baselines.csv")),
    )


def _save_table(rows, json_path: str, csv_path: str) -> str:
    with open(json_path, "w") as outfile:
        json.dump(rows, outfile, indent=2)
    with open(csv_path, "w", newline="") as csvfile:
        writer = csv.DictWriter(
            csvfile, fieldnames=list(rows[0]), quoting=csv.QUOTE_NONNUMERIC
        )
        writer.writeheader()
        writer.writerows(rows)
    return csv_path


def compute_gradcheck(
    out_dir=None, seed=0, composite_coordinates=COMPOSITE_COORDINATES
):
    """
    Run the finite difference suite, print its table and optionally save
    it as CSV

    :param composite_coordinates: coordinates sampled per parameter
        tensor in the composite loss checks

    :return: list of rows
    """
    rows = run_gradcheck(seed, composite_coordinates)
    print(format_table(rows))
    if out_dir is not None:
        out_dir = _make_out_tree(out_dir)
        _save_table(
            [
                {
                    "check": row.name,
                    "error": row.error,
                    "tolerance": row.tolerance,
                    "passed": "PASS" if row.passed else "FAIL",
                }
                for row in rows
            ],
            os.path.join(out_dir, get_out_file_path("gradcheck.json")),
            os.path.join(out_dir, get_out_file_path("gradcheck.csv")),
        )
    return rows

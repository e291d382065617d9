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
This module contains functions to test the fixnoise command line: a full
toy pipeline and the exit codes of each failure family.
"""

# Standard imports
import csv
import json
import os

# Third party imports
import pytest

# Fixnoise imports
import fixnoise
from fixnoise import fixnoise as cli
from fixnoise.checkpoint import save_checkpoint
from fixnoise.errors import ContractError, NumericalError
from fixnoise.gradcheck import GradcheckRow
from fixnoise.img_tools import read_png
from fixnoise.synth_domains import read_manifest


def _main(argv):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    return info.value.code


def _csv_rows(path):
    with open(path, newline="") as stream:
        return list(csv.reader(stream, quoting=csv.QUOTE_NONNUMERIC))


@pytest.fixture(name="workdir")
def fixture_workdir(tmp_path, monkeypatch):
    # the debug log file handler writes in the working directory
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.mark.functional_tests
def test_pipeline(workdir, config_file, capsys):
    """
    dataset, train-source, transfer, generate, modulate, swap, eval and
    compare on 8x8 toy models
    """
    data = str(workdir / "data")
    for domain in ("source", "target"):
        argv = ["dataset", config_file, "--domain", domain, "--n", "12"]
        argv += ["--seed", "3", "--resolution", "8", "--out", data]
        assert _main(argv) == 0
    source_data = os.path.join(data, "datasets", "similar-source")
    target_data = os.path.join(data, "datasets", "similar-target")
    assert len(os.listdir(target_data)) == 13
    with open(os.path.join(data, "effective_config.json")) as stream:
        effective = json.load(stream)["dataset_opts"]
    assert effective["target_preset"] == "similar-target"
    assert effective["target_count"] == 12

    source_out = str(workdir / "source")
    code = _main(
        [
            "train-source",
            config_file,
            "--data",
            os.path.join(source_data, "manifest.json"),
            "--out",
            source_out,
        ]
    )
    assert code == 0
    source_ckpt = os.path.join(source_out, "checkpoints", "source.fxnz")
    assert os.path.isfile(source_ckpt)
    assert os.path.isfile(os.path.join(source_out, "logs", "metrics.jsonl"))

    target_out = str(workdir / "target")
    code = _main(
        [
            "transfer",
            config_file,
            "--source-ckpt",
            source_ckpt,
            "--data",
            os.path.join(target_data, "manifest.json"),
            "--lambda-fm",
            "0.1",
            "--out",
            target_out,
        ]
    )
    assert code == 0
    target_ckpt = os.path.join(target_out, "checkpoints", "transfer.fxnz")
    assert os.path.isfile(target_ckpt)
    with open(os.path.join(target_out, "effective_config.json")) as stream:
        effective = json.load(stream)
    assert effective["loss_opts"]["lambda_fm"] == 0.1
    assert effective["train_opts"]["mode"] == "fixnoise"

    grids = str(workdir / "grids")
    code = _main(
        [
            "generate",
            target_ckpt,
            "--alphas",
            "1,0",
            "--n",
            "2",
            "--source-ckpt",
            source_ckpt,
            "--out",
            grids,
        ]
    )
    assert code == 0
    # anchored source column, then one column per alpha
    assert read_png(os.path.join(grids, "grids", "generate.png")).shape == (
        3,
        16,
        24,
    )
    cells = os.listdir(os.path.join(grids, "grids", "cells"))
    assert len([c for c in cells if c.startswith("generate_")]) == 6

    argv = ["modulate", target_ckpt, "--layer", "1", "--channel", "0"]
    code = _main(argv + ["--alphas", "1", "--n", "2", "--out", grids])
    assert code == 0
    assert read_png(os.path.join(grids, "grids", "modulate.png")).shape == (
        3,
        16,
        16,
    )

    swaps = str(workdir / "swaps")
    argv = ["swap", source_ckpt, target_ckpt, "--i", "2", "--out", swaps]
    assert _main(argv) == 0
    assert os.path.isfile(
        os.path.join(swaps, "checkpoints", "layer-swap-i2.fxnz")
    )

    reports = str(workdir / "reports")
    code = _main(
        [
            "eval",
            config_file,
            "--source-ckpt",
            source_ckpt,
            "--target-ckpt",
            target_ckpt,
            "--target-data",
            os.path.join(target_data, "manifest.json"),
            "--out",
            reports,
        ]
    )
    assert code == 0
    rows = _csv_rows(os.path.join(reports, "reports", "metric_report.csv"))
    assert rows[0] == ["alpha", "FID", "Perceptual distance", "KID x1e3"]
    assert [row[0] for row in rows[1:]] == [1.0, 0.5, 0.0]
    assert os.path.isfile(os.path.join(reports, "reports", "alpha_sweep.png"))

    code = _main(
        [
            "compare",
            config_file,
            "--target-data",
            os.path.join(target_data, "manifest.json"),
            "--entry",
            "Source=" + source_ckpt,
            "--entry",
            "FixNoise=" + target_ckpt + "@1.0",
            "--out",
            reports,
        ]
    )
    assert code == 0
    rows = _csv_rows(os.path.join(reports, "reports", "baselines.csv"))
    assert rows[0] == ["Method", "Checkpoint", "alpha", "FID", "KID x1e3"]
    assert [row[:3] for row in rows[1:]] == [
        ["Source", "source.fxnz", 0.0],
        ["FixNoise", "transfer.fxnz", 1.0],
    ]
    assert "baselines.csv" in capsys.readouterr().out


@pytest.mark.unit_tests
def test_arguments_from_file(workdir):
    options = workdir / "opts.txt"
    options.write_text(
        "dataset\n--preset\nsimilar-source\n--n\n2\n--resolution\n8\n"
        "--out\n{}\n".format(workdir / "data")
    )
    assert _main(["@" + str(options)]) == 0
    assert os.path.isfile(
        str(workdir / "data" / "datasets" / "similar-source" / "manifest.json")
    )


@pytest.mark.unit_tests
def test_usage_errors(workdir, capsys):
    out = str(workdir / "out")
    assert _main(["generate", "model.fxnz", "--alphas", "2", "--out", out]) == 2
    assert _main(["transfer", "--data", "manifest.json"]) == 2
    assert _main(["--version"]) == 0

    config = workdir / "config.json"
    config.write_text(json.dumps({"inputDSM": "dsm.tif"}))
    code = _main(
        ["train-source", str(config), "--data", "manifest.json", "--out", out]
    )
    assert code == 2
    assert "inputDSM" in capsys.readouterr().err


@pytest.mark.functional_tests
def test_dataset_from_config(workdir, config_file):
    data = str(workdir / "data")
    argv = ["dataset", config_file, "--domain", "target", "--resolution", "8"]
    assert _main(argv + ["--out", data]) == 0
    manifest = read_manifest(
        os.path.join(data, "datasets", "similar-target", "manifest.json")
    )
    # target_count and seed of test_config.json
    assert manifest.count == 12
    assert manifest.seed == 7
    assert manifest.spec.resolution == 8

    argv = ["dataset", config_file, "--n", "3", "--seed", "1", "--out", data]
    assert _main(argv) == 0
    manifest = read_manifest(
        os.path.join(data, "datasets", "similar-source", "manifest.json")
    )
    assert manifest.count == 3
    assert manifest.seed == 1

    # without a configuration file the preset is mandatory
    assert _main(["dataset", "--n", "3", "--out", data]) == 2


@pytest.mark.unit_tests
def test_sample_counts_must_be_positive(workdir, toy_state):
    out = str(workdir / "out")
    checkpoint = str(workdir / "model.fxnz")
    save_checkpoint(toy_state, checkpoint)
    assert _main(["generate", checkpoint, "--n", "0", "--out", out]) == 2
    assert _main(["generate", checkpoint, "--n", "-3", "--out", out]) == 2
    argv = ["modulate", checkpoint, "--layer", "0", "--channel", "0"]
    assert _main(argv + ["--n", "0", "--out", out]) == 2
    assert _main(["dataset", "--n", "0", "--out", out]) == 2
    assert not os.path.exists(os.path.join(out, "grids"))
    with pytest.raises(ContractError):
        fixnoise.compute_generate(checkpoint, [1.0], 0, 0, out)
    with pytest.raises(ContractError):
        fixnoise.compute_modulate(checkpoint, 0, 0, 1.0, [1.0], 0, 0, out)


@pytest.mark.unit_tests
def test_swap_index_help(capsys):
    assert _main(["swap", "--help"]) == 0
    help_text = " ".join(capsys.readouterr().out.split())
    assert "number of ladder layers taken from the source" in help_text
    assert "0 gives the target" in help_text

@pytest.mark.unit_tests
def test_io_errors(workdir, capsys):
    out = str(workdir / "out")
    assert _main(["generate", str(workdir / "missing.fxnz"), "--out", out]) == 4
    broken = workdir / "broken.fxnz"
    broken.write_bytes(b"not a checkpoint")
    assert _main(["generate", str(broken), "--out", out]) == 4
    assert "fixnoise generate:" in capsys.readouterr().err


@pytest.mark.unit_tests
def test_numerical_error(workdir, monkeypatch, capsys):
    def diverge(*_args):
        raise NumericalError("non finite generator loss", "nan_snapshot.fxnz")

    monkeypatch.setattr(fixnoise, "compute_dataset", diverge)
    out = str(workdir / "out")
    argv = ["dataset", "--preset", "similar-source", "--n", "2"]
    code = _main(argv + ["--out", out])
    assert code == 3
    assert "diagnostic snapshot: nan_snapshot.fxnz" in capsys.readouterr().err


@pytest.mark.unit_tests
def test_unexpected_error(workdir, monkeypatch):
    def explode(*_args):
        raise RuntimeError("boom")

    monkeypatch.setattr(fixnoise, "compute_dataset", explode)
    argv = ["dataset", "--preset", "similar-source", "--n", "2"]
    assert _main(argv + ["--out", str(workdir / "out")]) == 1


@pytest.mark.unit_tests
def test_failed_gradcheck(workdir, monkeypatch):
    monkeypatch.setattr(
        fixnoise,
        "compute_gradcheck",
        lambda out_dir, seed, coordinates: [
            GradcheckRow("conv2d", 1.0, 1e-5, 3)
        ],
    )
    assert _main(["gradcheck"]) == 3

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
This module contains functions to test the tensor engine and its
reverse mode differentiation.
"""

# Standard imports
import threading

# Third party imports
import numpy as np
import pytest
from scipy.signal import correlate2d
from scipy.special import expit

# Fixnoise imports
from fixnoise.errors import ContractError, DimensionError
from fixnoise.tensor_autodiff import (
    ComputationTape,
    Tensor,
    backward,
    conv2d,
    grad,
    is_grad_enabled,
    leaky_relu,
    matmul,
    no_grad,
    parameter,
    resample2x,
    sigmoid,
    softplus,
    to_storage_precision,
)


@pytest.mark.unit_tests
def test_broadcast_mul_gradients():
    """
    Gradients of a broadcast product are summed back to operand shapes
    """
    rng = np.random.default_rng(0)
    a = parameter(rng.standard_normal((2, 3)))
    b = parameter(rng.standard_normal(3))
    backward((a * b).sum())
    np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, (2, 3)))
    np.testing.assert_allclose(b.grad, a.data.sum(axis=0))


@pytest.mark.unit_tests
def test_matmul_gradients():
    rng = np.random.default_rng(1)
    a = parameter(rng.standard_normal((3, 4)))
    b = parameter(rng.standard_normal((4, 2)))
    backward(matmul(a, b).sum())
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ np.ones((3, 2)))

    with pytest.raises(DimensionError):
        matmul(a, a)


@pytest.mark.unit_tests
def test_backward_accumulates():
    x = parameter([1.0, 2.0])
    backward((x * 3.0).sum())
    backward((x * 3.0).sum())
    np.testing.assert_array_equal(x.grad, [6.0, 6.0])
    x.zero_grad()
    assert x.grad is None


@pytest.mark.unit_tests
def test_backward_contracts():
    x = parameter([1.0, 2.0])
    with pytest.raises(ContractError):
        backward(x * 2.0)
    with pytest.raises(ContractError):
        backward(Tensor([1.0]).sum())
    with pytest.raises(ContractError):
        (x * 2.0).item()
    with pytest.raises(ContractError):
        grad((x * x).sum(), [Tensor([1.0, 2.0])])


@pytest.mark.unit_tests
def test_grad_of_unreached_input_is_zero():
    x = parameter([1.0, 2.0])
    y = parameter([[3.0]])
    (grad_x, grad_y) = grad((x * x).sum(), [x, y])
    np.testing.assert_array_equal(grad_x.data, [2.0, 4.0])
    np.testing.assert_array_equal(grad_y.data, [[0.0]])


@pytest.mark.unit_tests
def test_double_backward():
    """
    d/dx of the create_graph gradient of sum(x^3) is 6x
    """
    x = parameter([0.5, -1.5, 2.0])
    (first,) = grad((x**3).sum(), [x], create_graph=True)
    np.testing.assert_allclose(first.data, 3.0 * x.data**2)
    assert first.requires_grad
    (second,) = grad(first.sum(), [x])
    np.testing.assert_allclose(second.data, 6.0 * x.data)


@pytest.mark.unit_tests
def test_gradient_without_create_graph_is_constant():
    x = parameter([1.0, 2.0])
    (first,) = grad((x**3).sum(), [x])
    assert not first.requires_grad


@pytest.mark.unit_tests
def test_no_grad_stops_recording():
    x = parameter([1.0])
    with no_grad():
        y = x * 2.0
        assert not is_grad_enabled()
    assert is_grad_enabled()
    assert not y.requires_grad
    assert y.is_leaf


@pytest.mark.unit_tests
def test_grad_mode_is_thread_local():
    seen = []

    def worker():
        seen.append(is_grad_enabled())

    with no_grad():
        thread = threading.Thread(target=worker)
        thread.start()
        thread.join()
    assert seen == [True]


@pytest.mark.unit_tests
def test_tape_orders_inputs_before_outputs():
    x = parameter([1.0, 2.0])
    y = x * 2.0
    z = (y + x).sum()
    tape = ComputationTape.from_root(z)
    assert len(tape) == 3
    positions = {id(record.output): i for i, record in enumerate(tape)}
    assert positions[id(y)] < positions[id(z)]


@pytest.mark.unit_tests
def test_conv2d_matches_correlation():
    """
    conv2d against scipy "same" correlation, channel by channel
    """
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 5, 6))
    weight = rng.standard_normal((4, 3, 3, 3))
    out = conv2d(Tensor(x), Tensor(weight)).data
    expected = np.zeros((2, 4, 5, 6))
    for n in range(2):
        for o in range(4):
            for c in range(3):
                expected[n, o] += correlate2d(
                    x[n, c], weight[o, c], mode="same"
                )
    np.testing.assert_allclose(out, expected, atol=1e-12)


@pytest.mark.unit_tests
def test_conv2d_gradients_are_adjoint():
    """
    <conv(x, w), g> is linear in x and w: gradients reproduce it
    """
    rng = np.random.default_rng(3)
    x = parameter(rng.standard_normal((1, 2, 4, 4)))
    weight = parameter(rng.standard_normal((3, 2, 3, 3)))
    seed = rng.standard_normal((1, 3, 4, 4))
    value = (conv2d(x, weight) * Tensor(seed)).sum()
    backward(value)
    np.testing.assert_allclose(
        (x.grad * x.data).sum(), value.item(), rtol=1e-10
    )
    np.testing.assert_allclose(
        (weight.grad * weight.data).sum(), value.item(), rtol=1e-10
    )


@pytest.mark.unit_tests
def test_conv2d_shape_checks():
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 2, 2))))


@pytest.mark.unit_tests
def test_resample2x():
    constant = Tensor(np.full((1, 2, 4, 4), 0.7))
    up = resample2x(constant, "up")
    assert up.shape == (1, 2, 8, 8)
    np.testing.assert_allclose(up.data, 0.7)
    down = resample2x(constant, "down")
    assert down.shape == (1, 2, 2, 2)
    np.testing.assert_allclose(down.data, 0.7)
    with pytest.raises(DimensionError):
        resample2x(Tensor(np.zeros((1, 1, 3, 3))), "down")
    with pytest.raises(ContractError):
        resample2x(constant, "sideways")


@pytest.mark.unit_tests
def test_activation_gradients():
    values = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    x = parameter(values)
    backward(softplus(x).sum())
    np.testing.assert_allclose(x.grad, expit(values))

    x = parameter(values)
    backward(leaky_relu(x).sum())
    np.testing.assert_array_equal(x.grad, np.where(values >= 0, 1.0, 0.2))

    x = parameter(values)
    backward(sigmoid(x).sum())
    np.testing.assert_allclose(
        x.grad, expit(values) * (1.0 - expit(values))
    )


@pytest.mark.unit_tests
def test_softplus_is_stable_for_large_inputs():
    out = softplus(Tensor([-800.0, 800.0])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.0, 800.0])


@pytest.mark.unit_tests
def test_storage_precision():
    values = np.array([0.1, 1.0 / 3.0, 1e-30])
    stored = to_storage_precision(values)
    assert stored.dtype == np.float64
    np.testing.assert_array_equal(
        stored, values.astype(np.float32).astype(np.float64)
    )
    np.testing.assert_array_equal(to_storage_precision(stored), stored)

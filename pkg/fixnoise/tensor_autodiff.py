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
Dense tensor engine with reverse mode automatic differentiation.

Every operation is a Function with a numpy forward and a backward rule
written with Tensor operations, so gradients can be differentiated again
(create_graph) for the R1 penalty.
Operations are recorded on the fly; the ComputationTape is collected from
the differentiated output and replayed in reverse creation order.
"""

# Standard imports
import contextlib
import functools
import itertools
import threading
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

# Third party imports
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

# Fixnoise imports
from .errors import ContractError, DimensionError

_GRAD_MODE = threading.local()
# creation order of recorded outputs, gives the tape its topological order
_SEQUENCE = itertools.count(1)


def is_grad_enabled() -> bool:
    return getattr(_GRAD_MODE, "enabled", True)


@contextlib.contextmanager
def _grad_mode(enabled: bool):
    previous = is_grad_enabled()
    _GRAD_MODE.enabled = enabled
    try:
        yield
    finally:
        _GRAD_MODE.enabled = previous


def no_grad():
    """Context manager disabling operation recording"""
    return _grad_mode(False)


def enable_grad():
    """Context manager enabling operation recording"""
    return _grad_mode(True)


def to_storage_precision(array: np.ndarray) -> np.ndarray:
    """
    Round float64 values to the nearest float32 representable value.
    Parameters held this way survive a 32-bit checkpoint bitwise.
    """
    return np.asarray(array, dtype=np.float32).astype(np.float64)


def _sum_to_shape(array: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast result back to one of its operand shapes"""
    shape = tuple(shape)
    if array.shape == shape:
        return array
    lead = array.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + index
        for index, extent in enumerate(shape)
        if extent == 1 and array.shape[lead + index] != 1
    )
    return array.sum(axis=axes, keepdims=True).reshape(shape)


class Tensor:
    """
    n-dimensional float64 array with gradient tracking.

    :param data: array like content
    :param requires_grad: record operations involving this tensor
    """

    # numpy arrays on the left of an operator defer to Tensor
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._ctx: Optional["Function"] = None
        self._seq = 0

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def __repr__(self):
        return "Tensor(shape={}, requires_grad={})".format(
            self.shape, self.requires_grad
        )

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(
                "item() needs a single element tensor, got shape {}".format(
                    self.shape
                )
            )
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # arithmetic
    def __add__(self, other):
        return Add.apply(self, _as_tensor(other))

    def __radd__(self, other):
        return Add.apply(_as_tensor(other), self)

    def __sub__(self, other):
        return Sub.apply(self, _as_tensor(other))

    def __rsub__(self, other):
        return Sub.apply(_as_tensor(other), self)

    def __mul__(self, other):
        return Mul.apply(self, _as_tensor(other))

    def __rmul__(self, other):
        return Mul.apply(_as_tensor(other), self)

    def __truediv__(self, other):
        return Div.apply(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return Div.apply(_as_tensor(other), self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent: float):
        return PowScalar.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return MatMul.apply(self, _as_tensor(other))

    def matmul(self, other) -> "Tensor":
        return MatMul.apply(self, _as_tensor(other))

    def sqrt(self) -> "Tensor":
        return Sqrt.apply(self)

    # shape handling
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        total = self.sum(axis=axis, keepdims=keepdims)
        return total * (total.size / self.size)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=tuple(shape))

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Transpose.apply(self, axes=tuple(int(a) for a in axes))

    def flip(self, axes) -> "Tensor":
        return Flip.apply(self, axes=tuple(axes))

    def broadcast_to(self, shape) -> "Tensor":
        if self.shape == tuple(shape):
            return self
        return BroadcastTo.apply(self, shape=tuple(shape))

    def sum_to(self, shape) -> "Tensor":
        if self.shape == tuple(shape):
            return self
        return SumTo.apply(self, shape=tuple(shape))


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def parameter(array) -> Tensor:
    """Trainable leaf tensor owning a copy of array"""
    return Tensor(np.array(array, dtype=np.float64), requires_grad=True)


class Function:
    """
    Recorded operation: numpy forward, Tensor based backward.

    needs_input_grad is refreshed before every backward call so that a
    rule can skip the gradients nobody asked for.
    """

    def __init__(self, *parents: Tensor):
        self.parents = parents
        self.needs_input_grad = tuple(p.requires_grad for p in parents)

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_output: Tensor) -> Tuple[Optional[Tensor], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *parents: Tensor, **kwargs) -> Tensor:
        ctx = cls(*parents)
        out = Tensor(ctx.forward(*[p.data for p in parents], **kwargs))
        if is_grad_enabled() and any(ctx.needs_input_grad):
            out.requires_grad = True
            out._ctx = ctx
            out._seq = next(_SEQUENCE)
        return out


class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad_output):
        return tuple(
            grad_output.sum_to(shape) if need else None
            for shape, need in zip(self.shapes, self.needs_input_grad)
        )


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad_output):
        grad_a = grad_b = None
        if self.needs_input_grad[0]:
            grad_a = grad_output.sum_to(self.shapes[0])
        if self.needs_input_grad[1]:
            grad_b = (-grad_output).sum_to(self.shapes[1])
        return grad_a, grad_b


class Mul(Function):
    def forward(self, a, b):
        return a * b

    def backward(self, grad_output):
        a, b = self.parents
        grad_a = grad_b = None
        if self.needs_input_grad[0]:
            grad_a = (grad_output * b).sum_to(a.shape)
        if self.needs_input_grad[1]:
            grad_b = (grad_output * a).sum_to(b.shape)
        return grad_a, grad_b


class Div(Function):
    def forward(self, a, b):
        return a / b

    def backward(self, grad_output):
        a, b = self.parents
        grad_a = grad_b = None
        if self.needs_input_grad[0]:
            grad_a = (grad_output / b).sum_to(a.shape)
        if self.needs_input_grad[1]:
            grad_b = (-(grad_output * a) / (b * b)).sum_to(b.shape)
        return grad_a, grad_b


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad_output):
        return (-grad_output,)


class PowScalar(Function):
    def forward(self, x, exponent):
        self.exponent = exponent
        return np.power(x, exponent)

    def backward(self, grad_output):
        (x,) = self.parents
        return (grad_output * (x ** (self.exponent - 1.0)) * self.exponent,)


class Sqrt(Function):
    def forward(self, x):
        return np.sqrt(x)

    def backward(self, grad_output):
        (x,) = self.parents
        return (grad_output / (Sqrt.apply(x) * 2.0),)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(
                "matmul shape mismatch: {} x {}".format(a.shape, b.shape)
            )
        return a @ b

    def backward(self, grad_output):
        a, b = self.parents
        grad_a = grad_b = None
        if self.needs_input_grad[0]:
            grad_a = grad_output.matmul(b.transpose())
        if self.needs_input_grad[1]:
            grad_b = a.transpose().matmul(grad_output)
        return grad_a, grad_b


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.in_shape = x.shape
        if axis is None:
            axis = tuple(range(x.ndim))
        elif isinstance(axis, int):
            axis = (axis,)
        self.axes = tuple(a % x.ndim for a in axis) if x.ndim else ()
        return np.sum(x, axis=self.axes, keepdims=keepdims)

    def backward(self, grad_output):
        kept = tuple(
            1 if index in self.axes else extent
            for index, extent in enumerate(self.in_shape)
        )
        return (grad_output.reshape(kept).broadcast_to(self.in_shape),)


class BroadcastTo(Function):
    def forward(self, x, shape):
        self.in_shape = x.shape
        return np.broadcast_to(x, shape)

    def backward(self, grad_output):
        return (grad_output.sum_to(self.in_shape),)


class SumTo(Function):
    def forward(self, x, shape):
        self.in_shape = x.shape
        return _sum_to_shape(x, shape)

    def backward(self, grad_output):
        return (grad_output.broadcast_to(self.in_shape),)


class Reshape(Function):
    def forward(self, x, shape):
        self.in_shape = x.shape
        return np.reshape(x, shape)

    def backward(self, grad_output):
        return (grad_output.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, x, axes):
        self.axes = axes
        return np.transpose(x, axes)

    def backward(self, grad_output):
        return (grad_output.transpose(tuple(np.argsort(self.axes))),)


class Flip(Function):
    def forward(self, x, axes):
        self.axes = axes
        return np.flip(x, axes)

    def backward(self, grad_output):
        return (grad_output.flip(self.axes),)


class LeakyReLU(Function):
    def forward(self, x, slope=0.2):
        self.mask = np.where(x >= 0, 1.0, slope)
        return x * self.mask

    def backward(self, grad_output):
        return (grad_output * Tensor(self.mask),)


class Sigmoid(Function):
    def forward(self, x):
        return expit(x)

    def backward(self, grad_output):
        (x,) = self.parents
        value = Sigmoid.apply(x)
        return (grad_output * value * (1.0 - value),)


class Softplus(Function):
    def forward(self, x):
        return np.logaddexp(0.0, x)

    def backward(self, grad_output):
        (x,) = self.parents
        return (grad_output * Sigmoid.apply(x),)


def _conv2d_forward(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Zero padded stride 1 cross-correlation through im2col windows"""
    pad_h, pad_w = weight.shape[2] // 2, weight.shape[3] // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    windows = sliding_window_view(padded, weight.shape[2:], axis=(2, 3))
    out = np.tensordot(windows, weight, axes=((1, 4, 5), (1, 2, 3)))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _flip_transpose(weight: Tensor) -> Tensor:
    return weight.flip((2, 3)).transpose(1, 0, 2, 3)


class Conv2d(Function):
    def forward(self, x, weight):
        if x.ndim != 4 or weight.ndim != 4:
            raise DimensionError(
                "conv2d expects 4d input and weight, got {} and {}".format(
                    x.shape, weight.shape
                )
            )
        if x.shape[1] != weight.shape[1]:
            raise DimensionError(
                "conv2d channel mismatch: input {} weight {}".format(
                    x.shape, weight.shape
                )
            )
        if weight.shape[2] % 2 == 0 or weight.shape[3] % 2 == 0:
            raise DimensionError(
                "conv2d kernel extents must be odd, got {}".format(
                    weight.shape[2:]
                )
            )
        return _conv2d_forward(x, weight)

    def backward(self, grad_output):
        x, weight = self.parents
        grad_x = grad_w = None
        if self.needs_input_grad[0]:
            grad_x = Conv2d.apply(grad_output, _flip_transpose(weight))
        if self.needs_input_grad[1]:
            grad_w = Conv2dWeightGrad.apply(
                x, grad_output, kernel=weight.shape[2:]
            )
        return grad_x, grad_w


class Conv2dWeightGrad(Function):
    """Weight gradient of conv2d, bilinear in (input, output gradient)"""

    def forward(self, x, grad_output, kernel):
        pad_h, pad_w = kernel[0] // 2, kernel[1] // 2
        padded = np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
        windows = sliding_window_view(padded, tuple(kernel), axis=(2, 3))
        return np.tensordot(grad_output, windows, axes=((0, 2, 3), (0, 2, 3)))

    def backward(self, grad_output):
        x, out_grad = self.parents
        grad_x = grad_g = None
        if self.needs_input_grad[0]:
            grad_x = Conv2d.apply(out_grad, _flip_transpose(grad_output))
        if self.needs_input_grad[1]:
            grad_g = Conv2d.apply(x, grad_output)
        return grad_x, grad_g


class SpatialMap(Function):
    """Separable linear map of the two spatial axes: rows @ x @ cols.T"""

    def forward(self, x, rows, cols):
        if x.ndim != 4 or x.shape[2] != rows.shape[1] or (
            x.shape[3] != cols.shape[1]
        ):
            raise DimensionError(
                "spatial map of shape {}x{} cannot apply to {}".format(
                    rows.shape, cols.shape, x.shape
                )
            )
        self.rows, self.cols = rows, cols
        return np.matmul(np.matmul(rows, x), cols.T)

    def backward(self, grad_output):
        return (
            SpatialMap.apply(grad_output, rows=self.rows.T, cols=self.cols.T),
        )


@functools.lru_cache(maxsize=None)
def _smoothing_matrix(size: int) -> np.ndarray:
    """[1, 2, 1] / 4 along one axis, edges clamped so rows sum to one"""
    matrix = np.zeros((size, size))
    for index in range(size):
        for offset, weight in ((-1, 0.25), (0, 0.5), (1, 0.25)):
            matrix[index, min(max(index + offset, 0), size - 1)] += weight
    matrix.setflags(write=False)
    return matrix


@functools.lru_cache(maxsize=None)
def resampling_matrix(size: int, direction: str) -> np.ndarray:
    """
    One axis of resample2x as a matrix.

    :param size: input extent
    :param direction: "up" (nearest then smoothing) or "down"
        (smoothing then even index decimation)
    :return: (2*size, size) or (size/2, size) matrix
    """
    if direction == "up":
        nearest = np.zeros((2 * size, size))
        nearest[np.arange(2 * size), np.arange(2 * size) // 2] = 1.0
        matrix = _smoothing_matrix(2 * size) @ nearest
    elif direction == "down":
        matrix = np.array(_smoothing_matrix(size)[::2])
    else:
        raise ContractError(
            "resampling direction must be up or down, got {}".format(direction)
        )
    matrix.setflags(write=False)
    return matrix


# Public operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(_as_tensor(a), _as_tensor(b))


def conv2d(x: Tensor, weight: Tensor) -> Tensor:
    """
    Stride 1 cross-correlation with zero "same" padding.

    :param x: N x C x H x W input
    :param weight: O x C x kh x kw kernel, kh and kw odd
    :return: N x O x H x W output
    """
    return Conv2d.apply(_as_tensor(x), _as_tensor(weight))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return LeakyReLU.apply(_as_tensor(x), slope=slope)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(_as_tensor(x))


def softplus(x: Tensor) -> Tensor:
    return Softplus.apply(_as_tensor(x))


def resample2x(x: Tensor, direction: str) -> Tensor:
    """
    Resolution change by a factor two with [1,2,1] smoothing.

    :param x: N x C x H x W input
    :param direction: "up" or "down"
    """
    x = _as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(
            "resample2x expects a 4d tensor, got {}".format(x.shape)
        )
    height, width = x.shape[2:]
    if direction == "down" and (height % 2 or width % 2):
        raise DimensionError(
            "downsampling needs even extents, got {}x{}".format(height, width)
        )
    return SpatialMap.apply(
        x,
        rows=resampling_matrix(height, direction),
        cols=resampling_matrix(width, direction),
    )


class TapeRecord(NamedTuple):
    output: Tensor
    function: Function


class ComputationTape:
    """
    Recorded operations reaching a given output, in creation order.
    An operation's inputs always precede it.
    """

    def __init__(self, records: List[TapeRecord]):
        self.records = records

    @classmethod
    def from_root(cls, root: Tensor) -> "ComputationTape":
        seen = set()
        records = []
        stack = [root]
        while stack:
            tensor = stack.pop()
            if tensor._ctx is None or id(tensor) in seen:
                continue
            seen.add(id(tensor))
            records.append(TapeRecord(tensor, tensor._ctx))
            stack.extend(tensor._ctx.parents)
        records.sort(key=lambda record: record.output._seq)
        return cls(records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def replay(
        self,
        root: Tensor,
        seed: Tensor,
        is_target: Callable[[Tensor], bool],
    ) -> Dict[int, Tuple[Tensor, Tensor]]:
        """
        Propagate seed from root back to the tensors selected by is_target.

        Only records lying on a path to a target are differentiated.

        :return: id(tensor) -> (tensor, accumulated gradient)
        """
        relevant: Dict[int, bool] = {}

        def reaches_target(tensor: Tensor) -> bool:
            if is_target(tensor):
                return True
            return tensor._ctx is not None and relevant.get(id(tensor), False)

        for record in self.records:
            relevant[id(record.output)] = any(
                reaches_target(parent) for parent in record.function.parents
            )

        results: Dict[int, Tuple[Tensor, Tensor]] = {}
        if is_target(root):
            results[id(root)] = (root, seed)
        pending = {id(root): seed}
        for record in reversed(self.records):
            grad_output = pending.pop(id(record.output), None)
            if grad_output is None:
                continue
            if is_target(record.output) and record.output is not root:
                results[id(record.output)] = (record.output, grad_output)
            if not relevant[id(record.output)]:
                continue
            function = record.function
            function.needs_input_grad = tuple(
                parent.requires_grad and reaches_target(parent)
                for parent in function.parents
            )
            parent_grads = function.backward(grad_output)
            for parent, parent_grad, needed in zip(
                function.parents, parent_grads, function.needs_input_grad
            ):
                if not needed or parent_grad is None:
                    continue
                if parent._ctx is None:
                    previous = results.get(id(parent))
                    if previous is not None:
                        parent_grad = previous[1] + parent_grad
                    results[id(parent)] = (parent, parent_grad)
                else:
                    previous = pending.get(id(parent))
                    if previous is not None:
                        parent_grad = previous + parent_grad
                    pending[id(parent)] = parent_grad
        return results


def backward(loss: Tensor):
    """
    Accumulate d loss / d leaf into the grad of every requires_grad leaf.

    :param loss: scalar tensor connected to recorded operations
    """
    if loss.size != 1:
        raise ContractError(
            "backward needs a scalar loss, got shape {}".format(loss.shape)
        )
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tracked tensor")
    tape = ComputationTape.from_root(loss)
    with no_grad():
        results = tape.replay(
            loss,
            Tensor(np.ones_like(loss.data)),
            lambda tensor: tensor._ctx is None and tensor.requires_grad,
        )
    for leaf, leaf_grad in results.values():
        value = np.array(np.broadcast_to(leaf_grad.data, leaf.shape))
        leaf.grad = value if leaf.grad is None else leaf.grad + value


def grad(
    output: Tensor,
    inputs: Sequence[Tensor],
    grad_output: Optional[Tensor] = None,
    create_graph: bool = False,
) -> List[Tensor]:
    """
    Gradients of output with respect to inputs, returned as tensors.

    Inputs not reached by output get a zero gradient. With create_graph
    the returned tensors are themselves differentiable.

    :param output: scalar tensor unless grad_output is given
    :param inputs: tensors requiring gradient tracking
    :param grad_output: seed gradient, shaped like output
    :param create_graph: record the backward computations
    """
    for tensor in inputs:
        if not tensor.requires_grad:
            raise ContractError(
                "gradient requested for a tensor without gradient tracking"
            )
    if grad_output is None:
        if output.size != 1:
            raise ContractError(
                "grad needs a scalar output, got shape {}".format(output.shape)
            )
        grad_output = Tensor(np.ones_like(output.data))
    target_ids = {id(tensor) for tensor in inputs}
    tape = ComputationTape.from_root(output)
    with _grad_mode(create_graph):
        results = tape.replay(
            output, grad_output, lambda tensor: id(tensor) in target_ids
        )
    gradients = []
    for tensor in inputs:
        found = results.get(id(tensor))
        if found is None:
            gradients.append(Tensor(np.zeros_like(tensor.data)))
        else:
            gradients.append(found[1].broadcast_to(tensor.shape))
    return gradients

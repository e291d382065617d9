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
Symmetric eigendecomposition by cyclic Jacobi rotations and the positive
semidefinite matrix square root built on it.
"""

# Standard imports
import logging
from typing import Tuple

# Third party imports
import numpy as np

# Fixnoise imports
from .errors import ContractError, DimensionError, NumericalError

# relative off-diagonal Frobenius norm at which a sweep stops
JACOBI_TOLERANCE = 1e-12
# relative bound below which negative eigenvalues are rejected
NEGATIVE_EIGENVALUE_TOLERANCE = 1e-8


def _check_symmetric(matrix) -> np.ndarray:
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(
            "matrix must be square, got shape {}".format(a.shape)
        )
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-10 * scale:
        raise ContractError("matrix must be symmetric")
    return (a + a.T) / 2.0


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int):
    """Jacobi rotation zeroing a[p, q], applied in place to a and v"""
    theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.hypot(theta, 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    col_p, col_q = a[:, p].copy(), a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p, row_q = a[p, :].copy(), a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0
    vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def jacobi_eigh(
    matrix, tolerance: float = JACOBI_TOLERANCE, max_sweeps: int = 100
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues and eigenvectors of a real symmetric matrix.

    :param matrix: n x n symmetric matrix
    :param tolerance: stop once the off-diagonal norm is below
        tolerance times the matrix norm
    :param max_sweeps: cyclic sweeps before giving up
    :return: ascending eigenvalues and the matching eigenvector columns
    """
    a = _check_symmetric(matrix)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    for sweep in range(max_sweeps + 1):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tolerance * scale:
            logging.debug("Jacobi converged after {} sweeps".format(sweep))
            order = np.argsort(np.diag(a), kind="stable")
            return np.diag(a)[order], v[:, order]
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] != 0.0:
                    _rotate(a, v, p, q)
    raise NumericalError(
        "Jacobi eigensolver did not converge in {} sweeps".format(max_sweeps)
    )


def clamp_eigenvalues(eigenvalues: np.ndarray) -> np.ndarray:
    """
    Clamp small negative eigenvalues of a PSD matrix to zero.

    :raises NumericalError: an eigenvalue is below
        -1e-8 * max(1, max |eigenvalue|)
    """
    if eigenvalues.size == 0:
        return eigenvalues
    bound = -NEGATIVE_EIGENVALUE_TOLERANCE * max(
        1.0, float(np.max(np.abs(eigenvalues)))
    )
    if np.min(eigenvalues) < bound:
        raise NumericalError(
            "matrix is not positive semidefinite: eigenvalue {}".format(
                np.min(eigenvalues)
            )
        )
    return np.maximum(eigenvalues, 0.0)


def sqrtm_psd(matrix) -> np.ndarray:
    """Symmetric square root V diag(sqrt(l)) V^T of a PSD matrix"""
    eigenvalues, vectors = jacobi_eigh(matrix)
    root = (vectors * np.sqrt(clamp_eigenvalues(eigenvalues))) @ vectors.T
    return (root + root.T) / 2.0


def trace_sqrt_product(sigma_a, sigma_b) -> float:
    """
    Tr((sigma_a sigma_b)^(1/2)) through the symmetric similar matrix
    sigma_a^(1/2) sigma_b sigma_a^(1/2).
    """
    root_a = sqrtm_psd(sigma_a)
    inner = root_a @ np.asarray(sigma_b, dtype=np.float64) @ root_a
    eigenvalues, _ = jacobi_eigh((inner + inner.T) / 2.0)
    return float(np.sum(np.sqrt(clamp_eigenvalues(eigenvalues))))

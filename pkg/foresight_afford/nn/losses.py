# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Mean absolute error and its subgradient.
"""

import numpy as np

from ..errors import ShapeError


def _check(pred: np.ndarray, target: np.ndarray) -> None:
    if np.shape(pred) != np.shape(target):
        raise ShapeError("prediction shape {} does not match target shape {}".format(np.shape(pred), np.shape(target)))
    if np.size(pred) == 0:
        raise ShapeError("MAE of an empty batch")


def mae_loss(pred: np.ndarray, target: np.ndarray) -> float:
    _check(pred, target)
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(target))))


def mae_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d loss / d pred; the subgradient at a zero residual is 0."""
    _check(pred, target)
    residual = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return np.sign(residual) / residual.size

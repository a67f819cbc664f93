# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Layers with explicit reverse passes.

Tensors are ``numpy`` float64 arrays in batch x rows x cols x channels
layout. Every ``forward`` caches what its ``backward`` needs, so a layer
instance serves one forward/backward pair at a time. Parameter gradients
accumulate until ``zero_grad``.
"""

import math
from typing import Dict, List, Optional

import numpy as np

from ..errors import ShapeError

Tensor = np.ndarray


class Layer:
    """Base class for layers."""

    def forward(self, x: Tensor) -> Tensor:
        return NotImplemented

    def backward(self, dy: Tensor) -> Tensor:
        return NotImplemented

    def parameters(self) -> Dict[str, Tensor]:
        return {}

    def gradients(self) -> Dict[str, Tensor]:
        return {}

    def zero_grad(self) -> None:
        for g in self.gradients().values():
            g.fill(0.0)


class Conv2d(Layer):
    """3 x 3 convolution with zero padding 1 and stride 1 or 2."""

    def __init__(
        self, in_channels: int, out_channels: int, stride: int = 1, rng: Optional[np.random.Generator] = None
    ) -> None:
        if stride not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        # He initialisation over the 3 x 3 x in_channels fan-in
        self.weight = rng.standard_normal((3, 3, in_channels, out_channels)) * math.sqrt(2.0 / (9 * in_channels))
        self.bias = np.zeros(out_channels)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._padded: Optional[Tensor] = None

    def parameters(self) -> Dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def gradients(self) -> Dict[str, Tensor]:
        return {"weight": self.grad_weight, "bias": self.grad_bias}

    def output_size(self, size: int) -> int:
        return (size - 1) // self.stride + 1

    def _window(self, xp: Tensor, ky: int, kx: int, ho: int, wo: int) -> Tensor:
        s = self.stride
        return xp[:, ky:ky + s * (ho - 1) + 1:s, kx:kx + s * (wo - 1) + 1:s, :]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError("conv expects N x H x W x {} input, got {}".format(self.in_channels, x.shape))
        ho, wo = self.output_size(x.shape[1]), self.output_size(x.shape[2])
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        y = np.empty((x.shape[0], ho, wo, self.out_channels))
        y[...] = self.bias
        for ky in range(3):
            for kx in range(3):
                y += self._window(xp, ky, kx, ho, wo) @ self.weight[ky, kx]
        self._padded = xp
        return y

    def backward(self, dy: Tensor) -> Tensor:
        xp = self._padded
        assert xp is not None, "backward called before forward"
        ho, wo = dy.shape[1], dy.shape[2]
        dxp = np.zeros_like(xp)
        self.grad_bias += dy.sum(axis=(0, 1, 2))
        for ky in range(3):
            for kx in range(3):
                window = self._window(xp, ky, kx, ho, wo)
                self.grad_weight[ky, kx] += np.tensordot(window, dy, axes=([0, 1, 2], [0, 1, 2]))
                self._window(dxp, ky, kx, ho, wo)[...] += dy @ self.weight[ky, kx].T
        return dxp[:, 1:-1, 1:-1, :]


class ReLU(Layer):
    def __init__(self) -> None:
        self._mask: Optional[Tensor] = None

    def forward(self, x: Tensor) -> Tensor:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy: Tensor) -> Tensor:
        assert self._mask is not None, "backward called before forward"
        return dy * self._mask


class Upsample2x(Layer):
    """Nearest-neighbour upsampling by two along rows and columns."""

    def forward(self, x: Tensor) -> Tensor:
        return x.repeat(2, axis=1).repeat(2, axis=2)

    def backward(self, dy: Tensor) -> Tensor:
        n, h, w, c = dy.shape
        return dy.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


class GlobalAvgPool(Layer):
    def __init__(self) -> None:
        self._shape: Optional[tuple] = None

    def forward(self, x: Tensor) -> Tensor:
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dy: Tensor) -> Tensor:
        assert self._shape is not None, "backward called before forward"
        n, h, w, c = self._shape
        return np.broadcast_to(dy[:, None, None, :] / (h * w), (n, h, w, c)).copy()


class Linear(Layer):
    """Affine map over the last axis.

    Uses ``einsum`` so that each output row is computed the same way whatever
    the number of rows, which keeps per-cell head scores independent of how
    many cells are scored together.
    """

    def __init__(self, in_features: int, out_features: int, rng: Optional[np.random.Generator] = None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = rng.standard_normal((in_features, out_features)) * math.sqrt(2.0 / in_features)
        self.bias = np.zeros(out_features)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x: Optional[Tensor] = None

    def parameters(self) -> Dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def gradients(self) -> Dict[str, Tensor]:
        return {"weight": self.grad_weight, "bias": self.grad_bias}

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError("linear expects {} input features, got {}".format(self.in_features, x.shape[-1]))
        self._x = x
        return np.einsum("...i,io->...o", x, self.weight) + self.bias

    def backward(self, dy: Tensor) -> Tensor:
        x = self._x
        assert x is not None, "backward called before forward"
        flat_x = x.reshape(-1, self.in_features)
        flat_dy = dy.reshape(-1, self.out_features)
        self.grad_weight += np.einsum("ni,no->io", flat_x, flat_dy)
        self.grad_bias += flat_dy.sum(axis=0)
        return np.einsum("...o,io->...i", dy, self.weight)


class Concat:
    """Channel concatenation used by skip connections."""

    def __init__(self) -> None:
        self._sizes: List[int] = []

    def forward(self, *xs: Tensor) -> Tensor:
        self._sizes = [x.shape[-1] for x in xs]
        return np.concatenate(xs, axis=-1)

    def backward(self, dy: Tensor) -> List[Tensor]:
        splits = np.cumsum(self._sizes)[:-1]
        return np.split(dy, splits, axis=-1)

# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Fully convolutional backbone with skip connections and the two affordance networks.

``PickNet`` scores picking at a cell from that cell's feature. ``PlaceNet``
scores placing a picked cell on another cell from the two cell features and
the global feature of the bottleneck.
"""

import copy
import hashlib
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import ShapeError
from .layers import Concat, Conv2d, GlobalAvgPool, Layer, Linear, ReLU, Tensor, Upsample2x

# Channel schedule of the fourteen backbone convolutions at width 1:
# two full-resolution encoder convs, four stride-2 convs (the last one is the
# bottleneck) and two convs at each of the four decoder levels.
CHANNELS = (64, 64, 128, 256, 512, 512, 512, 256, 256, 128, 128, 256, 256, 256)
DOWNSAMPLES = 4


def channel_schedule(width: float) -> Tuple[int, ...]:
    if not 0 < width <= 1:
        raise ValueError("width factor must lie in (0, 1], got {}".format(width))
    return tuple(max(1, int(round(c * width))) for c in CHANNELS)


class FcnBackbone:
    """Encoder-decoder producing per-cell features and a global feature."""

    def __init__(self, in_channels: int = 2, width: float = 0.25, rng: Optional[np.random.Generator] = None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        c = channel_schedule(width)
        self.in_channels = in_channels
        self.width = width
        self.feature_dim = c[13]
        self.global_dim = c[5]

        self.enc = [Conv2d(in_channels, c[0], rng=rng), Conv2d(c[0], c[1], rng=rng)]
        self.down = [
            Conv2d(c[1], c[2], 2, rng),
            Conv2d(c[2], c[3], 2, rng),
            Conv2d(c[3], c[4], 2, rng),
            Conv2d(c[4], c[5], 2, rng),
        ]
        # decoder levels from coarsest to finest, each paired with the skip of matching resolution
        skips = [c[4], c[3], c[2], c[1]]
        inputs = [c[5], c[7], c[9], c[11]]
        self.up = [
            (Conv2d(inputs[k] + skips[k], c[6 + 2 * k], rng=rng), Conv2d(c[6 + 2 * k], c[7 + 2 * k], rng=rng))
            for k in range(DOWNSAMPLES)
        ]
        self._enc_relu = [ReLU(), ReLU()]
        self._down_relu = [ReLU() for _ in range(DOWNSAMPLES)]
        self._up_relu = [ReLU() for _ in range(2 * DOWNSAMPLES - 1)]
        self._upsample = [Upsample2x() for _ in range(DOWNSAMPLES)]
        self._concat = [Concat() for _ in range(DOWNSAMPLES)]
        self._pool = GlobalAvgPool()

    def named_layers(self) -> List[Tuple[str, Layer]]:
        layers: List[Tuple[str, Layer]] = [("enc0", self.enc[0]), ("enc1", self.enc[1])]
        layers += [("down{}".format(k + 1), conv) for k, conv in enumerate(self.down)]
        for k, (first, second) in enumerate(self.up):
            level = DOWNSAMPLES - 1 - k
            layers += [("up{}a".format(level), first), ("up{}b".format(level), second)]
        return layers

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        """``N x H x W x C`` input to (``N x H x W x F`` features, ``N x G`` global feature)."""
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError("backbone expects N x H x W x {} input, got {}".format(self.in_channels, x.shape))
        factor = 2 ** DOWNSAMPLES
        if x.shape[1] % factor or x.shape[2] % factor:
            raise ShapeError("spatial dimensions {} are not divisible by {}".format(x.shape[1:3], factor))

        h = self._enc_relu[0].forward(self.enc[0].forward(x))
        skips = [self._enc_relu[1].forward(self.enc[1].forward(h))]
        for conv, relu in zip(self.down, self._down_relu):
            skips.append(relu.forward(conv.forward(skips[-1])))
        bottleneck = skips.pop()
        g = self._pool.forward(bottleneck)

        u = bottleneck
        relus = iter(self._up_relu)
        for k, (first, second) in enumerate(self.up):
            u = self._concat[k].forward(self._upsample[k].forward(u), skips[-1 - k])
            u = next(relus).forward(first.forward(u))
            u = second.forward(u)
            if k < DOWNSAMPLES - 1:
                u = next(relus).forward(u)
        return u, g

    def backward(self, dfeatures: Tensor, dglobal: Tensor) -> Tensor:
        dskips: List[Optional[Tensor]] = [None] * DOWNSAMPLES
        du = dfeatures
        relu_index = len(self._up_relu)
        for k in reversed(range(DOWNSAMPLES)):
            first, second = self.up[k]
            if k < DOWNSAMPLES - 1:
                relu_index -= 1
                du = self._up_relu[relu_index].backward(du)
            du = second.backward(du)
            relu_index -= 1
            du = first.backward(self._up_relu[relu_index].backward(du))
            du, dskip = self._concat[k].backward(du)
            dskips[DOWNSAMPLES - 1 - k] = dskip
            du = self._upsample[k].backward(du)

        # du is now the gradient at the bottleneck output
        d = du + self._pool.backward(dglobal)
        for k in reversed(range(DOWNSAMPLES)):
            d = self.down[k].backward(self._down_relu[k].backward(d))
            skip_grad = dskips[k]
            assert skip_grad is not None
            d = d + skip_grad
        d = self.enc[1].backward(self._enc_relu[1].backward(d))
        return self.enc[0].backward(self._enc_relu[0].backward(d))


class MlpHead:
    """Two-layer perceptron with a scalar, unbounded output."""

    def __init__(self, in_features: int, hidden: int, rng: Optional[np.random.Generator] = None) -> None:
        self.fc1 = Linear(in_features, hidden, rng)
        self.relu = ReLU()
        self.fc2 = Linear(hidden, 1, rng)

    def named_layers(self) -> List[Tuple[str, Layer]]:
        return [("fc1", self.fc1), ("fc2", self.fc2)]

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2.forward(self.relu.forward(self.fc1.forward(x)))[..., 0]

    def backward(self, dy: Tensor) -> Tensor:
        return self.fc1.backward(self.relu.backward(self.fc2.backward(dy[..., None])))


class AffordanceNet:
    """Backbone plus head; base class of ``PickNet`` and ``PlaceNet``."""

    ROLE: str

    def __init__(self, in_channels: int = 2, width: float = 0.25, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.width = width
        self.seed = seed
        self.backbone = FcnBackbone(in_channels, width, rng)
        self.head = self._make_head(rng)
        self.stage = 0
        self.lineage: Dict[str, Any] = {"role": self.ROLE, "tag": "init", "sources": []}

    def _make_head(self, rng: np.random.Generator) -> MlpHead:
        return NotImplemented

    def named_layers(self) -> List[Tuple[str, Layer]]:
        layers = [("backbone." + name, layer) for name, layer in self.backbone.named_layers()]
        return layers + [("head." + name, layer) for name, layer in self.head.named_layers()]

    def parameters(self) -> Dict[str, Tensor]:
        """Parameter arrays by qualified name, in manifest order; updates act in place."""
        return {
            "{}.{}".format(prefix, name): value
            for prefix, layer in self.named_layers()
            for name, value in layer.parameters().items()
        }

    def gradients(self) -> Dict[str, Tensor]:
        return {
            "{}.{}".format(prefix, name): value
            for prefix, layer in self.named_layers()
            for name, value in layer.gradients().items()
        }

    def zero_grad(self) -> None:
        for _, layer in self.named_layers():
            layer.zero_grad()

    def features(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        return self.backbone.forward(x)

    def clone(self) -> "AffordanceNet":
        return copy.deepcopy(self)

    def checksum(self) -> str:
        """Content id over the float32 weights in manifest order."""
        digest = hashlib.sha256()
        for name, value in self.parameters().items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(value, dtype="<f4").tobytes())
        return digest.hexdigest()[:16]

    def all_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(v))) for v in self.parameters().values())


def _gather(features: Tensor, cells: np.ndarray) -> Tensor:
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    return features[np.arange(len(cells)), cells[:, 0], cells[:, 1]]


class PickNet(AffordanceNet):
    ROLE = "pick"

    def _make_head(self, rng: np.random.Generator) -> MlpHead:
        f = self.backbone.feature_dim
        return MlpHead(f, f, rng)

    def score_grid(self, x: Tensor) -> Tensor:
        """Pick score of every cell, ``N x H x W``."""
        features, _ = self.features(x)
        return self.head.forward(features)

    def scores_at(self, x: Tensor, cells: np.ndarray) -> Tensor:
        """Pick score of one cell per sample; records the pass for ``backward``."""
        features, g = self.features(x)
        self._shapes = (features.shape, g.shape)
        self._cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        return self.head.forward(_gather(features, self._cells))

    def backward(self, dscores: Tensor) -> None:
        feature_shape, global_shape = self._shapes
        dgathered = self.head.backward(dscores)
        dfeatures = np.zeros(feature_shape)
        dfeatures[np.arange(len(self._cells)), self._cells[:, 0], self._cells[:, 1]] = dgathered
        self.backbone.backward(dfeatures, np.zeros(global_shape))


class PlaceNet(AffordanceNet):
    ROLE = "place"

    def _make_head(self, rng: np.random.Generator) -> MlpHead:
        f = self.backbone.feature_dim
        return MlpHead(2 * f + self.backbone.global_dim, f, rng)

    def place_grid(self, features: Tensor, g: Tensor, pick: Tuple[int, int]) -> Tensor:
        """Place scores of every cell of one sample conditioned on ``pick``.

        ``features`` is ``H x W x F`` and ``g`` the matching ``G`` vector.
        """
        h, w, f = features.shape
        pick_feature = np.broadcast_to(features[pick[0], pick[1]], (h, w, f))
        global_feature = np.broadcast_to(g, (h, w, g.shape[-1]))
        return self.head.forward(np.concatenate([pick_feature, features, global_feature], axis=-1))

    def score_grid(self, x: Tensor, pick: Tuple[int, int]) -> Tensor:
        """Place map of a single ``H x W x C`` observation tensor."""
        features, g = self.features(x[None])
        return self.place_grid(features[0], g[0], pick)

    def scores_at(self, x: Tensor, picks: np.ndarray, places: np.ndarray) -> Tensor:
        features, g = self.features(x)
        self._shapes = (features.shape, g.shape[-1])
        self._picks = np.asarray(picks, dtype=np.int64).reshape(-1, 2)
        self._places = np.asarray(places, dtype=np.int64).reshape(-1, 2)
        joint = np.concatenate([_gather(features, self._picks), _gather(features, self._places), g], axis=-1)
        return self.head.forward(joint)

    def backward(self, dscores: Tensor) -> None:
        feature_shape, global_dim = self._shapes
        f = feature_shape[-1]
        djoint = self.head.backward(dscores)
        rows = np.arange(len(self._picks))
        dfeatures = np.zeros(feature_shape)
        # two separate updates so that pick == place accumulates both terms
        dfeatures[rows, self._picks[:, 0], self._picks[:, 1]] += djoint[:, :f]
        dfeatures[rows, self._places[:, 0], self._places[:, 1]] += djoint[:, f:2 * f]
        self.backbone.backward(dfeatures, djoint[:, 2 * f:2 * f + global_dim])


NETS = {PickNet.ROLE: PickNet, PlaceNet.ROLE: PlaceNet}

# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Finite-difference verification of every layer's reverse pass.

Each layer is driven by an MAE loss against targets offset from its output
by at least ``MIN_RESIDUAL``, so that the loss is smooth around the sampled
point. ReLU inputs are kept the same distance from zero for the same reason.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .layers import Concat, Conv2d, GlobalAvgPool, Layer, Linear, ReLU, Tensor, Upsample2x
from .losses import mae_grad, mae_loss

logger = logging.getLogger(__name__)

EPSILON = 1e-4
TOLERANCE = 1e-3
MIN_RESIDUAL = 1e-2
FLOOR = 1e-6
SAMPLES_PER_TENSOR = 30


@dataclass
class GradcheckResult:
    layer: str
    max_rel_error: float
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= TOLERANCE


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), FLOOR)


def _away_from_zero(rng: np.random.Generator, shape: Tuple[int, ...]) -> Tensor:
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.05, 1.0, size=shape)


def check_layer(
    name: str, layer: Layer, inputs: Sequence[Tensor], rng: np.random.Generator, eps: float = EPSILON
) -> GradcheckResult:
    """Compare analytic gradients of parameters and inputs with central differences."""
    forward: Callable[..., Tensor] = layer.forward
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    out = forward(*inputs)
    offset = np.maximum(rng.uniform(0.05, 0.5, size=out.shape), MIN_RESIDUAL)
    target = out - rng.choice([-1.0, 1.0], size=out.shape) * offset

    layer.zero_grad()
    out = forward(*inputs)
    dx = layer.backward(mae_grad(out, target))
    dinputs = list(dx) if isinstance(dx, list) else [dx]

    tensors: Dict[str, Tuple[Tensor, Tensor]] = {}
    for pname, value in layer.parameters().items():
        tensors[pname] = (value, layer.gradients()[pname].copy())
    for k, (x, g) in enumerate(zip(inputs, dinputs)):
        tensors["input{}".format(k)] = (x, g)

    worst = 0.0
    checked = 0
    for tname, (value, analytic) in tensors.items():
        flat = value.reshape(-1)
        count = min(SAMPLES_PER_TENSOR, flat.size)
        for index in rng.choice(flat.size, size=count, replace=False):
            original = flat[index]
            flat[index] = original + eps
            plus = mae_loss(forward(*inputs), target)
            flat[index] = original - eps
            minus = mae_loss(forward(*inputs), target)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            worst = max(worst, relative_error(float(analytic.reshape(-1)[index]), numeric))
            checked += 1
    logger.debug("gradcheck %s: %d entries, max relative error %.3g", name, checked, worst)
    return GradcheckResult(name, worst, checked)


class _ConcatLayer(Layer):
    """Adapter giving ``Concat`` the single-layer interface used by ``check_layer``."""

    def __init__(self) -> None:
        self.concat = Concat()

    def forward(self, *xs: Tensor) -> Tensor:  # type: ignore[override]
        return self.concat.forward(*xs)

    def backward(self, dy: Tensor) -> List[Tensor]:  # type: ignore[override]
        return self.concat.backward(dy)


def layer_cases(rng: np.random.Generator) -> List[Tuple[str, Layer, List[Tensor]]]:
    """Small randomized instance of every layer class."""
    return [
        ("Conv2d", Conv2d(3, 4, 1, rng), [rng.standard_normal((2, 6, 5, 3))]),
        ("Conv2d/stride2", Conv2d(3, 4, 2, rng), [rng.standard_normal((2, 8, 6, 3))]),
        ("ReLU", ReLU(), [_away_from_zero(rng, (2, 4, 4, 3))]),
        ("Upsample2x", Upsample2x(), [rng.standard_normal((2, 3, 4, 3))]),
        ("GlobalAvgPool", GlobalAvgPool(), [rng.standard_normal((2, 4, 4, 5))]),
        ("Linear", Linear(5, 3, rng), [rng.standard_normal((4, 5))]),
        ("Concat", _ConcatLayer(), [rng.standard_normal((2, 4, 4, 2)), rng.standard_normal((2, 4, 4, 3))]),
    ]


def run_suite(seed: int = 0) -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    return [check_layer(name, layer, inputs, rng) for name, layer, inputs in layer_cases(rng)]


def format_report(results: Sequence[GradcheckResult]) -> str:
    lines = ["{:<16} {:>14} {:>8}  {}".format("layer", "max rel error", "checked", "status")]
    for r in results:
        lines.append(
            "{:<16} {:>14.3e} {:>8d}  {}".format(r.layer, r.max_rel_error, r.checked, "ok" if r.passed else "FAIL")
        )
    return "\n".join(lines)

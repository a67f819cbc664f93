# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Adam.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..errors import ShapeError


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState) -> Dict[str, np.ndarray]:
    """Apply one bias-corrected Adam update to ``params`` in place and return them."""
    if params.keys() != grads.keys():
        raise ShapeError("parameter and gradient names differ")
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ShapeError("gradient of {} has shape {}, expected {}".format(name, grads[name].shape, p.shape))
        if name in state.m and state.m[name].shape != p.shape:
            raise ShapeError("moment of {} has shape {}, expected {}".format(name, state.m[name].shape, p.shape))

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params

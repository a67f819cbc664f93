# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Small numpy tensor engine: layers, affordance networks, MAE, Adam and checkpoints.
"""

from .layers import Concat, Conv2d, GlobalAvgPool, Layer, Linear, ReLU, Upsample2x  # noqa: F401
from .model import FcnBackbone, MlpHead, AffordanceNet, PickNet, PlaceNet, channel_schedule  # noqa: F401
from .losses import mae_grad, mae_loss  # noqa: F401
from .optim import AdamState, adam_step  # noqa: F401
from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint  # noqa: F401
from .gradcheck import GradcheckResult, format_report, run_suite  # noqa: F401

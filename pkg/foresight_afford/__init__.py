# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

__version__ = "0.3.0"

from .affordance import AffordanceMap, Plan, pick_map, place_map, plan_action, select_action  # noqa: F401,E402
from .data import CollectionConfig, StageDataset, build_stage_datasets, collect, load_dataset, save_dataset  # noqa: F401,E402
from .evaluation import AblationVariant, EvalConfig, ablate, evaluate, run_episode  # noqa: F401,E402
from .nn import PickNet, PlaceNet, load_checkpoint, save_checkpoint  # noqa: F401,E402
from .tasks import TASKS, make_task  # noqa: F401,E402
from .training import TrainConfig, ist, run_stage_schedule  # noqa: F401,E402

"""Stochastic model-based simulation for control under constant delay."""

from smbs.delay import AugmentedState, DelayedEnv, TransitionRecord, wrap
from smbs.mdp import TabularMdp, build_amdp, value_iteration
from smbs.policies import delayed_q_select, exact_expected_q_select, smbs_select
from smbs.trainer import RunRecord, TrainConfig, evaluate, train

__all__ = [
    "AugmentedState",
    "DelayedEnv",
    "RunRecord",
    "TabularMdp",
    "TrainConfig",
    "TransitionRecord",
    "build_amdp",
    "delayed_q_select",
    "evaluate",
    "exact_expected_q_select",
    "smbs_select",
    "train",
    "value_iteration",
    "wrap",
]

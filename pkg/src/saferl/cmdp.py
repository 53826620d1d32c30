"""Constrained-MDP vocabulary: continuous cost signals in [0, 1], the
danger/recovery/failure predicates, and the per-step transition record
shared by environments, the safety buffer, and the trainer."""

from dataclasses import dataclass
from typing import Union

import numpy as np

# Danger threshold applied everywhere unless overridden.
DEFAULT_DANGER_THRESHOLD = 0.5

# Cost this close to 1.0 counts as a failure.
FAILURE_EPS = 1e-9

# An action is either a discrete index or a bounded continuous vector.
Action = Union[int, np.ndarray]


def is_danger(cost: float, threshold: float = DEFAULT_DANGER_THRESHOLD) -> bool:
    """A state is dangerous once its cost reaches the threshold (inclusive)."""
    return cost >= threshold


def is_recovery(
    cost_t: float, cost_next: float, threshold: float = DEFAULT_DANGER_THRESHOLD
) -> bool:
    """A transition recovers when it leaves a dangerous state for a safe one."""
    return cost_t >= threshold and cost_next < threshold


def is_failure(cost: float) -> bool:
    """Failure is expressed purely through the cost channel as cost == 1."""
    return cost >= 1.0 - FAILURE_EPS


@dataclass(frozen=True)
class Transition:
    """One environment step.

    `obs`, `cost`, and `feature` describe the state entered by the step;
    `action` is the executed action and `reward` the step reward. `failed`
    is derived from the cost channel and always implies `done`.
    """

    obs: np.ndarray
    action: Action
    reward: float
    cost: float
    feature: np.ndarray
    done: bool
    failed: bool

    def __post_init__(self):
        if not 0.0 <= self.cost <= 1.0:
            raise ValueError(f"cost must lie in [0, 1], got {self.cost}")
        if self.failed and not self.done:
            raise ValueError("a failed transition must terminate the episode")
        if self.failed and not is_failure(self.cost):
            raise ValueError("failed flag requires cost == 1")


def make_transition(obs, action, reward, cost, feature, done) -> Transition:
    """Build a Transition, deriving the failure flag from the cost channel."""
    failed = is_failure(cost)
    return Transition(
        obs=obs,
        action=action,
        reward=float(reward),
        cost=float(cost),
        feature=feature,
        done=bool(done or failed),
        failed=failed,
    )

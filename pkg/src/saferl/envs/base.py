"""Shared environment vocabulary: the static spec and the cost geometry.

Cost is a pure function of the distance d to the nearest hazard surface:
1 at contact (d <= contact_radius), 0 outside the warning zone
(d >= danger_radius), and a linear ramp in between. With the default danger
threshold of 0.5 the geometric danger zone is d <= (danger_radius +
contact_radius) / 2.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np


class LayoutError(RuntimeError):
    """Raised when a feasible episode layout cannot be generated."""


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment's interfaces."""

    obs_dim: int
    feature_dim: int
    horizon: int
    danger_radius: float
    contact_radius: float
    n_actions: Optional[int] = None  # discrete action count
    action_dim: Optional[int] = None  # continuous action dimension
    action_low: Optional[np.ndarray] = None
    action_high: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not self.danger_radius > self.contact_radius > 0:
            raise ValueError("need danger_radius > contact_radius > 0")
        if (self.n_actions is None) == (self.action_dim is None):
            raise ValueError("specify exactly one of n_actions / action_dim")

    @property
    def is_discrete(self) -> bool:
        return self.n_actions is not None


def cost_from_distance(d: float, danger_radius: float, contact_radius: float) -> float:
    """Continuous cost of being at distance d from the nearest hazard surface."""
    if d <= contact_radius:
        return 1.0
    if d >= danger_radius:
        return 0.0
    return (danger_radius - d) / (danger_radius - contact_radius)


def cost_of_state(state, spec: EnvSpec) -> float:
    """Cost of a gridworld or point-mass state under `spec`'s geometry.

    Dispatches on the state's fields: gridworld states expose `agent_pos` and
    hazard cells, point-mass states expose `position` and hazard circles.
    """
    if hasattr(state, "agent_pos"):
        if not state.hazards:
            return 0.0
        ax, ay = state.agent_pos
        d = min(np.hypot(hx - ax, hy - ay) for hx, hy in state.hazards)
        return cost_from_distance(d, spec.danger_radius, spec.contact_radius)
    if hasattr(state, "position"):
        if not state.hazards:
            return 0.0
        cost = 0.0
        for center, radius in state.hazards:
            d = float(np.hypot(*(state.position - center)))
            cost = max(cost, cost_from_distance(d, spec.danger_radius, radius))
        return cost
    raise TypeError(f"unsupported state type {type(state)!r}")

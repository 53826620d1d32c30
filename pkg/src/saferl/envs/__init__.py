"""Environment registry and re-exports."""

from .base import EnvSpec, LayoutError, cost_from_distance, cost_of_state
from .grid import (
    ACTIONS,
    N_ACTIONS,
    GoalNavEnv,
    GridWorldState,
    PushNavEnv,
    SurvivalNavEnv,
)
from .layout import GridLayout, load_layout, parse_layout
from .point_mass import PointMassNavEnv, PointMassState

_BUILDERS = {
    "goal_nav": GoalNavEnv,
    "push_nav": PushNavEnv,
    "survival_nav": SurvivalNavEnv,
    "point_mass": PointMassNavEnv,
}


def register_env(env_id: str, builder) -> None:
    """Register a custom environment builder (used for test stubs)."""
    _BUILDERS[env_id] = builder


def env_ids():
    return sorted(_BUILDERS)


def make_env(env_id: str, **kwargs):
    try:
        builder = _BUILDERS[env_id]
    except KeyError:
        raise ValueError(
            f"unknown environment {env_id!r}; known: {', '.join(env_ids())}"
        ) from None
    return builder(**kwargs)


__all__ = [
    "ACTIONS",
    "N_ACTIONS",
    "EnvSpec",
    "GoalNavEnv",
    "GridLayout",
    "GridWorldState",
    "LayoutError",
    "PointMassNavEnv",
    "PointMassState",
    "PushNavEnv",
    "SurvivalNavEnv",
    "cost_from_distance",
    "cost_of_state",
    "env_ids",
    "load_layout",
    "make_env",
    "parse_layout",
    "register_env",
]

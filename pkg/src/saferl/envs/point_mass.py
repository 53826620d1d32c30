"""Continuous-action point-mass navigation with circular hazards.

A velocity-integrating mass moves in a square arena with reflecting walls.
Actions are 2-D thrusts in [-1, 1]; hazards are circles whose contact radius
means failure, with the usual linear cost ramp out to the danger radius.
Exercises the grid-bucket action matching path of the safety buffer.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..cmdp import Transition, is_failure, make_transition
from .base import EnvSpec, LayoutError, cost_from_distance


@dataclass
class PointMassState:
    position: np.ndarray  # (2,)
    velocity: np.ndarray  # (2,)
    hazards: List[Tuple[np.ndarray, float]]  # (center, contact radius)
    goal: np.ndarray  # (2,)
    step_count: int = 0


class PointMassNavEnv:
    GOAL_BONUS = 10.0
    STEP_PENALTY = 0.01
    GOAL_RADIUS = 0.3

    # fixed feature scales: hazard offset and distance by the danger radius,
    # velocity by its rough steady-state magnitude
    VEL_SCALE = 1.0

    def __init__(
        self,
        arena_size: float = 5.0,
        n_hazards: int = 4,
        horizon: int = 200,
        danger_radius: float = 1.5,
        contact_radius: float = 0.5,
        dt: float = 0.1,
        drag: float = 0.5,
        max_layout_attempts: int = 500,
    ):
        self.arena_size = arena_size
        self.n_hazards = n_hazards
        self.horizon = horizon
        self.dt = dt
        self.drag = drag
        self.max_layout_attempts = max_layout_attempts
        self.spec = EnvSpec(
            obs_dim=9,
            feature_dim=5,
            horizon=horizon,
            danger_radius=danger_radius,
            contact_radius=contact_radius,
            action_dim=2,
            action_low=np.array([-1.0, -1.0]),
            action_high=np.array([1.0, 1.0]),
        )
        self.state: Optional[PointMassState] = None
        self._done = True

    # --- layout -------------------------------------------------------------

    def _sample_layout(self, rng: np.random.Generator) -> PointMassState:
        spec = self.spec
        size = self.arena_size
        margin = spec.contact_radius
        half_zone = (spec.danger_radius + spec.contact_radius) / 2.0
        for _ in range(self.max_layout_attempts):
            centers = rng.uniform(margin, size - margin, size=(self.n_hazards, 2))
            spawn = rng.uniform(0.0, size, size=2)
            goal = rng.uniform(0.0, size, size=2)
            d_spawn = np.linalg.norm(centers - spawn, axis=1).min() if self.n_hazards else np.inf
            d_goal = np.linalg.norm(centers - goal, axis=1).min() if self.n_hazards else np.inf
            if d_spawn < spec.danger_radius:  # spawn must be cost-free
                continue
            if d_goal <= half_zone:  # goal outside the danger zone
                continue
            if np.linalg.norm(goal - spawn) < size / 3.0:  # non-trivial episode
                continue
            hazards = [(centers[i].copy(), spec.contact_radius) for i in range(self.n_hazards)]
            return PointMassState(
                position=spawn,
                velocity=np.zeros(2),
                hazards=hazards,
                goal=goal,
                step_count=0,
            )
        raise LayoutError(
            f"could not generate a feasible point-mass layout "
            f"(arena {size}, {self.n_hazards} hazards)"
        )

    # --- observation / feature ----------------------------------------------

    def _nearest_hazard(self):
        st = self.state
        best = None
        best_d = np.inf
        for center, radius in st.hazards:
            d = float(np.linalg.norm(center - st.position))
            if d < best_d:
                best_d = d
                best = center
        return best, best_d

    def _cost(self) -> float:
        st = self.state
        cost = 0.0
        for center, radius in st.hazards:
            d = float(np.linalg.norm(center - st.position))
            cost = max(
                cost, cost_from_distance(d, self.spec.danger_radius, radius)
            )
        return cost

    def _observe(self) -> np.ndarray:
        st = self.state
        size = self.arena_size
        center, d = self._nearest_hazard()
        offset = (center - st.position) if center is not None else np.zeros(2)
        r = self.spec.danger_radius
        return np.concatenate(
            [
                st.position / size,
                st.velocity,
                (st.goal - st.position) / size,
                offset / r,
                [min(d, 2.0 * r) / r],
            ]
        )

    def _feature(self) -> np.ndarray:
        st = self.state
        center, d = self._nearest_hazard()
        offset = (center - st.position) if center is not None else np.zeros(2)
        r = self.spec.danger_radius
        return np.concatenate(
            [offset / r, [min(d, 2.0 * r) / r], st.velocity / self.VEL_SCALE]
        )

    # --- episode interface ----------------------------------------------------

    def reset(self, seed: int):
        rng = np.random.default_rng(seed)
        self.state = self._sample_layout(rng)
        self._done = False
        return self._observe(), self._cost(), self._feature()

    def step(self, action: np.ndarray) -> Transition:
        if self._done or self.state is None:
            raise RuntimeError("step() called on a terminated episode; reset first")
        action = np.clip(
            np.asarray(action, dtype=float), self.spec.action_low, self.spec.action_high
        )
        st = self.state
        before = float(np.linalg.norm(st.goal - st.position))

        st.velocity = st.velocity + (action - self.drag * st.velocity) * self.dt
        pos = st.position + st.velocity * self.dt
        for i in range(2):  # reflecting walls
            if pos[i] < 0.0:
                pos[i] = -pos[i]
                st.velocity[i] = -st.velocity[i]
            elif pos[i] > self.arena_size:
                pos[i] = 2.0 * self.arena_size - pos[i]
                st.velocity[i] = -st.velocity[i]
        st.position = pos
        st.step_count += 1

        after = float(np.linalg.norm(st.goal - st.position))
        cost = self._cost()
        reached = after <= self.GOAL_RADIUS
        reward = (before - after) - self.STEP_PENALTY + (self.GOAL_BONUS if reached else 0.0)
        done = reached or st.step_count >= self.horizon
        self._done = bool(done or is_failure(cost))
        return make_transition(
            self._observe(), action, reward, cost, self._feature(), self._done
        )

"""Discrete 2-D navigation tasks on a hazard-strewn grid.

Three tasks share the same movement model (up/down/left/right/stay, walls
block) and the same safety channel (continuous cost from the distance to the
nearest hazard cell, Euclidean on cell centers):

* GoalNavEnv      reach a goal cell while avoiding static hazards
* PushNavEnv      push a box onto the goal cell while avoiding static hazards
* SurvivalNavEnv  outlive hazards that move and bounce off the walls

Episodes are laid out per reset seed: hazards, spawn, and goal are sampled so
that the agent starts at cost 0 and the goal is reachable. Touching a hazard
cell is a failure and terminates the episode.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..cmdp import Transition, is_failure, make_transition
from .base import EnvSpec, LayoutError, cost_from_distance, cost_of_state
from .layout import GridLayout

Cell = Tuple[int, int]

# action index -> (dx, dy); row 0 is the top of the map
ACTIONS = ((0, -1), (0, 1), (-1, 0), (1, 0), (0, 0))  # up, down, left, right, stay
N_ACTIONS = len(ACTIONS)


@dataclass
class GridWorldState:
    width: int
    height: int
    agent_pos: Cell
    goal_pos: Optional[Cell]
    box_pos: Optional[Cell]
    hazards: List[Cell]
    hazard_velocities: Optional[List[Tuple[int, int]]]
    step_count: int = 0


def _bfs_reachable(width, height, blocked, start) -> np.ndarray:
    """Boolean grid of cells reachable from `start` via 4-neighbor moves."""
    seen = np.zeros((height, width), dtype=bool)
    seen[start[1], start[0]] = True
    frontier = [start]
    while frontier:
        x, y = frontier.pop()
        for dx, dy in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < width and 0 <= ny < height and not seen[ny, nx]:
                if (nx, ny) not in blocked:
                    seen[ny, nx] = True
                    frontier.append((nx, ny))
    return seen


class _GridEnvBase:
    """Shared plumbing for the gridworld tasks."""

    needs_goal = True
    needs_box = False
    moving_hazards = False

    def __init__(
        self,
        width: int = 12,
        height: int = 12,
        n_hazards: int = 8,
        horizon: int = 200,
        danger_radius: float = 2.5,
        contact_radius: float = 0.5,
        window: int = 5,
        layout: Optional[GridLayout] = None,
        max_layout_attempts: int = 500,
    ):
        if layout is not None:
            width, height = layout.width, layout.height
        self.width = width
        self.height = height
        self.n_hazards = n_hazards
        self.horizon = horizon
        self.window = window
        self.layout = layout
        self.max_layout_attempts = max_layout_attempts
        self.spec = EnvSpec(
            obs_dim=self._obs_dim(),
            feature_dim=window * window + N_ACTIONS,
            horizon=horizon,
            danger_radius=danger_radius,
            contact_radius=contact_radius,
            n_actions=N_ACTIONS,
        )
        self.state: Optional[GridWorldState] = None
        self._done = True
        self._last_action: Optional[int] = None
        self._hazard_grid = np.zeros((height, width), dtype=np.uint8)
        self._dist_grid = np.zeros((height, width))

    # --- layout -----------------------------------------------------------

    def _cells(self):
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def _min_hazard_dist(self, cell, hazards) -> float:
        x, y = cell
        return min(np.hypot(hx - x, hy - y) for hx, hy in hazards)

    def _refresh_hazard_caches(self):
        self._hazard_grid[:] = 0
        for hx, hy in self.state.hazards:
            self._hazard_grid[hy, hx] = 1
        xs = np.arange(self.width)[None, :]
        ys = np.arange(self.height)[:, None]
        dists = [
            np.hypot(xs - hx, ys - hy) for hx, hy in self.state.hazards
        ]
        self._dist_grid = np.minimum.reduce(dists) if dists else np.full(
            (self.height, self.width), np.inf
        )

    def _sample_layout(self, rng: np.random.Generator) -> GridWorldState:
        spec = self.spec
        cells = self._cells()
        half_zone = (spec.danger_radius + spec.contact_radius) / 2.0
        for _ in range(self.max_layout_attempts):
            if self.layout is not None:
                hazards = list(self.layout.hazards)
            else:
                idx = rng.choice(len(cells), size=self.n_hazards, replace=False)
                hazards = [cells[i] for i in sorted(idx)]
            hazard_set = set(hazards)

            free = [c for c in cells if c not in hazard_set]
            if not hazards:
                spawn_pool = free
                goal_pool = free
            else:
                spawn_pool = [
                    c
                    for c in free
                    if self._min_hazard_dist(c, hazards) >= spec.danger_radius
                ]
                goal_pool = [
                    c for c in free if self._min_hazard_dist(c, hazards) > half_zone
                ]
            if not spawn_pool or not goal_pool:
                if self.layout is not None:
                    break
                continue

            spawn = self.layout.spawn if self.layout and self.layout.spawn else None
            if spawn is None:
                spawn = spawn_pool[int(rng.integers(len(spawn_pool)))]
            elif spawn not in spawn_pool:
                break

            state = GridWorldState(
                width=self.width,
                height=self.height,
                agent_pos=spawn,
                goal_pos=None,
                box_pos=None,
                hazards=hazards,
                hazard_velocities=None,
            )
            if not self._place_task_objects(state, rng, goal_pool, hazard_set):
                if self.layout is not None:
                    break
                continue
            return state
        raise LayoutError(
            f"could not generate a feasible layout for {type(self).__name__} "
            f"({self.width}x{self.height}, {self.n_hazards} hazards)"
        )

    def _place_task_objects(self, state, rng, goal_pool, hazard_set) -> bool:
        """Task-specific placement; returns False to reject the layout."""
        if not self.needs_goal:
            return True
        reachable = _bfs_reachable(
            self.width, self.height, hazard_set, state.agent_pos
        )
        pool = [
            c
            for c in goal_pool
            if c != state.agent_pos and reachable[c[1], c[0]]
        ]
        if self.layout is not None and self.layout.goal is not None:
            if self.layout.goal not in pool:
                return False
            state.goal_pos = self.layout.goal
            return True
        if not pool:
            return False
        state.goal_pos = pool[int(rng.integers(len(pool)))]
        return True

    # --- observation / feature --------------------------------------------

    def _obs_dim(self) -> int:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError

    def _raster(self) -> np.ndarray:
        """window x window occupancy around the agent; walls count as hazard."""
        half = self.window // 2
        ax, ay = self.state.agent_pos
        r = np.ones((self.window, self.window))
        gx0, gx1 = max(0, ax - half), min(self.width, ax + half + 1)
        gy0, gy1 = max(0, ay - half), min(self.height, ay + half + 1)
        wx0, wy0 = gx0 - (ax - half), gy0 - (ay - half)
        r[wy0 : wy0 + (gy1 - gy0), wx0 : wx0 + (gx1 - gx0)] = self._hazard_grid[
            gy0:gy1, gx0:gx1
        ]
        return r

    def _feature(self) -> np.ndarray:
        onehot = np.zeros(N_ACTIONS)
        if self._last_action is not None:
            onehot[self._last_action] = 1.0
        return np.concatenate([self._raster().ravel(), onehot])

    def _cost(self) -> float:
        ax, ay = self.state.agent_pos
        return cost_from_distance(
            float(self._dist_grid[ay, ax]),
            self.spec.danger_radius,
            self.spec.contact_radius,
        )

    # --- episode interface --------------------------------------------------

    def reset(self, seed: int):
        """Start a new episode; returns (observation, cost, feature)."""
        rng = np.random.default_rng(seed)
        self.state = self._sample_layout(rng)
        self._refresh_hazard_caches()
        self._done = False
        self._last_action = None
        cost = self._cost()
        return self._observe(), cost, self._feature()

    def step(self, action: int) -> Transition:
        if self._done or self.state is None:
            raise RuntimeError("step() called on a terminated episode; reset first")
        action = int(action)
        if not 0 <= action < N_ACTIONS:
            raise ValueError(f"action index {action} out of range")

        shaped = self._advance(action)
        if self.moving_hazards:
            self._move_hazards()
        self.state.step_count += 1
        self._last_action = action

        cost = self._cost()
        reward, done = self._reward_done(shaped, cost)
        if self.state.step_count >= self.horizon:
            done = True
        self._done = bool(done or is_failure(cost))
        return make_transition(
            self._observe(), action, reward, cost, self._feature(), self._done
        )

    # --- dynamics helpers ---------------------------------------------------

    def _try_move(self, pos: Cell, action: int) -> Cell:
        dx, dy = ACTIONS[action]
        nx, ny = pos[0] + dx, pos[1] + dy
        if 0 <= nx < self.width and 0 <= ny < self.height:
            return (nx, ny)
        return pos

    def _advance(self, action: int) -> float:
        """Move the agent; returns the task's shaping term for this step."""
        raise NotImplementedError

    def _reward_done(self, shaped: float, cost: float):
        raise NotImplementedError

    def _move_hazards(self):
        st = self.state
        moved = []
        vels = []
        for (hx, hy), (vx, vy) in zip(st.hazards, st.hazard_velocities):
            nx = hx + vx
            if not 0 <= nx < self.width:
                vx = -vx
                nx = hx + vx
            ny = hy + vy
            if not 0 <= ny < self.height:
                vy = -vy
                ny = hy + vy
            moved.append((nx, ny))
            vels.append((vx, vy))
        st.hazards = moved
        st.hazard_velocities = vels
        self._refresh_hazard_caches()


def _dist(a: Cell, b: Cell) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


class GoalNavEnv(_GridEnvBase):
    """Reach the goal cell; reward shaping follows the agent-goal distance."""

    GOAL_BONUS = 10.0
    STEP_PENALTY = 0.01

    def _obs_dim(self):
        return 4 + self.window * self.window

    def _observe(self):
        st = self.state
        ax, ay = st.agent_pos
        gx, gy = st.goal_pos
        sx, sy = max(self.width - 1, 1), max(self.height - 1, 1)
        head = np.array([ax / sx, ay / sy, (gx - ax) / sx, (gy - ay) / sy])
        return np.concatenate([head, self._raster().ravel()])

    def _advance(self, action):
        st = self.state
        before = _dist(st.agent_pos, st.goal_pos)
        st.agent_pos = self._try_move(st.agent_pos, action)
        return before - _dist(st.agent_pos, st.goal_pos)

    def _reward_done(self, shaped, cost):
        reached = self.state.agent_pos == self.state.goal_pos
        reward = shaped - self.STEP_PENALTY + (self.GOAL_BONUS if reached else 0.0)
        return reward, reached


class PushNavEnv(_GridEnvBase):
    """Push the box onto the goal cell; shaping follows the box-goal distance."""

    needs_box = True
    GOAL_BONUS = 10.0
    STEP_PENALTY = 0.01

    def _obs_dim(self):
        return 6 + self.window * self.window

    def _place_task_objects(self, state, rng, goal_pool, hazard_set):
        if not super()._place_task_objects(state, rng, goal_pool, hazard_set):
            return False
        if self.layout is not None and self.layout.box is not None:
            box = self.layout.box
            if box in hazard_set or box in (state.agent_pos, state.goal_pos):
                return False
            state.box_pos = box
            return True
        # sampled boxes stay off the border so they are always pushable
        pool = [
            (x, y)
            for (x, y) in goal_pool
            if 1 <= x < self.width - 1
            and 1 <= y < self.height - 1
            and (x, y) not in (state.agent_pos, state.goal_pos)
        ]
        if not pool:
            return False
        reachable = _bfs_reachable(self.width, self.height, hazard_set, state.agent_pos)
        pool = [c for c in pool if reachable[c[1], c[0]]]
        if not pool:
            return False
        state.box_pos = pool[int(rng.integers(len(pool)))]
        return True

    def _observe(self):
        st = self.state
        ax, ay = st.agent_pos
        bx, by = st.box_pos
        gx, gy = st.goal_pos
        sx, sy = max(self.width - 1, 1), max(self.height - 1, 1)
        head = np.array(
            [
                ax / sx,
                ay / sy,
                (bx - ax) / sx,
                (by - ay) / sy,
                (gx - bx) / sx,
                (gy - by) / sy,
            ]
        )
        return np.concatenate([head, self._raster().ravel()])

    def _advance(self, action):
        st = self.state
        before = _dist(st.box_pos, st.goal_pos)
        target = self._try_move(st.agent_pos, action)
        if target == st.box_pos and target != st.agent_pos:
            dx, dy = ACTIONS[action]
            bx, by = st.box_pos[0] + dx, st.box_pos[1] + dy
            blocked = (
                not (0 <= bx < self.width and 0 <= by < self.height)
                or self._hazard_grid[by, bx]
            )
            if not blocked:
                st.box_pos = (bx, by)
                st.agent_pos = target
        else:
            st.agent_pos = target
        return before - _dist(st.box_pos, st.goal_pos)

    def _reward_done(self, shaped, cost):
        reached = self.state.box_pos == self.state.goal_pos
        reward = shaped - self.STEP_PENALTY + (self.GOAL_BONUS if reached else 0.0)
        return reward, reached


class SurvivalNavEnv(_GridEnvBase):
    """Outlive moving hazards; constant survival reward, no goal."""

    needs_goal = False
    moving_hazards = True
    SURVIVAL_REWARD = 0.1

    _VELOCITIES = ((1, 0), (-1, 0), (0, 1), (0, -1))

    def __init__(self, n_hazards: int = 6, **kwargs):
        super().__init__(n_hazards=n_hazards, **kwargs)

    def _obs_dim(self):
        return 2 + self.window * self.window

    def _place_task_objects(self, state, rng, goal_pool, hazard_set):
        picks = rng.integers(len(self._VELOCITIES), size=len(state.hazards))
        state.hazard_velocities = [self._VELOCITIES[i] for i in picks]
        return True

    def _observe(self):
        ax, ay = self.state.agent_pos
        sx, sy = max(self.width - 1, 1), max(self.height - 1, 1)
        return np.concatenate([[ax / sx, ay / sy], self._raster().ravel()])

    def _advance(self, action):
        self.state.agent_pos = self._try_move(self.state.agent_pos, action)
        return 0.0

    def _reward_done(self, shaped, cost):
        return (0.0 if is_failure(cost) else self.SURVIVAL_REWARD), False

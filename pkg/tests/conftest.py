import numpy as np
import pytest

from saferl.cmdp import make_transition
from saferl.envs import EnvSpec, register_env


class ScriptedCostEnv:
    """Stub environment that replays a prescribed cost sequence.

    Rewards are scripted as 1.0 - 0.1 * t so individual steps are
    distinguishable; observations and features encode the timestep so every
    state is distinct. Actions are accepted but ignored by the dynamics.
    """

    def __init__(self, costs=(0.0, 0.7, 0.2, 0.7, 1.0), horizon=10, **_ignored):
        self.costs = tuple(costs)
        self.spec = EnvSpec(
            obs_dim=3,
            feature_dim=4,
            horizon=horizon,
            danger_radius=2.5,
            contact_radius=0.5,
            n_actions=5,
        )
        self.t = 0
        self._done = True

    def _obs(self):
        return np.array([float(self.t), self.costs[self.t], 1.0])

    def _feature(self):
        return np.array([float(self.t), self.costs[self.t], 0.0, 1.0])

    def reset(self, seed):
        self.t = 0
        self._done = False
        return self._obs(), self.costs[0], self._feature()

    def step(self, action):
        if self._done:
            raise RuntimeError("step() on terminated episode")
        self.t += 1
        cost = self.costs[self.t]
        reward = 1.0 - 0.1 * self.t
        done = self.t == len(self.costs) - 1 or self.t >= self.spec.horizon
        tr = make_transition(self._obs(), int(action), reward, cost, self._feature(), done)
        self._done = tr.done
        return tr


register_env("scripted", ScriptedCostEnv)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

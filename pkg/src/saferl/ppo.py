"""PPO backbone: action distributions, GAE, the clipped update, and the
Lagrangian penalty used by the constrained variants."""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .nn import Params, mlp_backward, mlp_forward

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class PpoConfig:
    clip_ratio: float = 0.2
    lr: float = 3e-4
    gamma: float = 0.99
    lam: float = 0.95
    update_epochs: int = 10
    minibatch_size: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.lam <= 1.0:
            raise ValueError("gamma and lam must lie in (0, 1]")


class Categorical:
    """Categorical policy head over discrete action indices."""

    def __init__(self, logits: np.ndarray):
        self.logits = logits
        z = logits - logits.max()
        self.log_probs = z - np.log(np.exp(z).sum())
        self.probs = np.exp(self.log_probs)

    def sample(self, rng: np.random.Generator) -> int:
        u = rng.random()
        return int(min(np.searchsorted(np.cumsum(self.probs), u), len(self.probs) - 1))

    def mode(self) -> int:
        return int(np.argmax(self.probs))

    def log_prob(self, action: int) -> float:
        return float(self.log_probs[int(action)])

    def entropy(self) -> float:
        return float(-(self.probs * self.log_probs).sum())


class DiagGaussian:
    """Diagonal-Gaussian policy head over continuous action vectors."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = mean
        self.std = std

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal(self.mean.shape)

    def mode(self) -> np.ndarray:
        return self.mean.copy()

    def log_prob(self, action: np.ndarray) -> float:
        z = (action - self.mean) / self.std
        return float(-0.5 * (z * z).sum() - np.log(self.std).sum() - 0.5 * LOG_2PI * self.mean.size)

    def entropy(self) -> float:
        return float((np.log(self.std) + 0.5 * (LOG_2PI + 1.0)).sum())


def policy_forward(params: Params, obs: np.ndarray):
    """Action distribution and value estimate for a single observation."""
    x = obs[None, :]
    head, _ = mlp_forward(params, "pi", x)
    value, _ = mlp_forward(params, "vf", x)
    if not (np.isfinite(head).all() and np.isfinite(value).all()):
        raise FloatingPointError(
            f"non-finite policy output (head={head}, value={value})"
        )
    v = float(value[0, 0])
    if "log_std" in params:
        return DiagGaussian(head[0], np.exp(params["log_std"])), v
    return Categorical(head[0]), v


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_value: float,
    gamma: float,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """GAE advantages and returns for one contiguous rollout segment.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t), with
    V(s_{t+1}) read from `values` (or `last_value` at the segment end), and
    A_t accumulated backwards with factor gamma * lam * (1 - done_t).
    """
    T = len(rewards)
    adv = np.zeros(T)
    last = 0.0
    for t in range(T - 1, -1, -1):
        next_value = last_value if t == T - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def ppo_loss_and_grads(
    params: Params,
    obs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: PpoConfig,
):
    """PPO-clip loss (to minimize) and its gradients wrt every parameter.

    loss = -mean(min(rho*A, clip(rho)*A)) + value_coef * mean((V - R)^2)
           - entropy_coef * mean(H)
    """
    B = obs.shape[0]
    eps = cfg.clip_ratio
    discrete = "log_std" not in params

    head, cache_pi = mlp_forward(params, "pi", obs)
    values, cache_vf = mlp_forward(params, "vf", obs)
    v = values[:, 0]

    if discrete:
        logp_all = _log_softmax(head)
        probs = np.exp(logp_all)
        acts = actions.astype(int)
        logp = logp_all[np.arange(B), acts]
    else:
        std = np.exp(params["log_std"])
        zscore = (actions - head) / std
        logp = (
            -0.5 * (zscore * zscore).sum(axis=1)
            - np.log(std).sum()
            - 0.5 * LOG_2PI * head.shape[1]
        )

    ratio = np.exp(logp - logp_old)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    take_unclipped = unclipped <= clipped
    policy_obj = np.where(take_unclipped, unclipped, clipped).mean()

    if discrete:
        ent = -(probs * logp_all).sum(axis=1)
    else:
        ent = np.full(B, (np.log(std) + 0.5 * (LOG_2PI + 1.0)).sum())
    entropy = ent.mean()

    v_err = v - returns
    value_loss = (v_err * v_err).mean()

    loss = -policy_obj + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # gradient of the loss wrt each sample's log-prob: the clipped branch is
    # flat (rho outside the clip interval), so only unclipped samples flow
    dlogp = np.where(take_unclipped, -ratio * advantages, 0.0) / B

    grads: Params = {}
    if discrete:
        dlogits = dlogp[:, None] * (-probs)
        dlogits[np.arange(B), acts] += dlogp
        # entropy term: dH/dlogits_j = -p_j * (logp_j + H)
        dlogits += (cfg.entropy_coef / B) * probs * (logp_all + ent[:, None])
        grads.update(mlp_backward(params, "pi", cache_pi, dlogits))
    else:
        dmean = dlogp[:, None] * (zscore / std)
        grads.update(mlp_backward(params, "pi", cache_pi, dmean))
        dlog_std = (dlogp[:, None] * (zscore * zscore - 1.0)).sum(axis=0)
        dlog_std -= cfg.entropy_coef  # d(-c_e * mean H)/dlog_std = -c_e per dim
        grads["log_std"] = dlog_std

    dv = (2.0 * cfg.value_coef / B) * v_err
    grads.update(mlp_backward(params, "vf", cache_vf, dv[:, None]))

    stats = {
        "loss": float(loss),
        "policy_objective": float(policy_obj),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_fraction": float((~take_unclipped).mean()),
        "approx_kl": float((logp_old - logp).mean()),
    }
    return float(loss), grads, stats


def ppo_update(
    params: Params,
    obs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: PpoConfig,
    adam,
    rng: np.random.Generator,
) -> Dict[str, float]:
    """Run the clipped-surrogate update epochs over shuffled minibatches.

    Advantages are expected to be normalized (zero mean, unit std) already.
    Raises FloatingPointError on a non-finite loss so callers can abort.
    """
    B = obs.shape[0]
    stats: Dict[str, float] = {}
    n_batches = 0
    for _ in range(cfg.update_epochs):
        order = rng.permutation(B)
        for start in range(0, B, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            loss, grads, batch_stats = ppo_loss_and_grads(
                params,
                obs[idx],
                actions[idx],
                logp_old[idx],
                advantages[idx],
                returns[idx],
                cfg,
            )
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite PPO loss: {batch_stats}")
            adam.step(params, grads)
            for k, val in batch_stats.items():
                stats[k] = stats.get(k, 0.0) + val
            n_batches += 1
    return {k: val / n_batches for k, val in stats.items()}


@dataclass(frozen=True)
class LagrangianState:
    """Dual variable for the failure-rate constraint."""

    multiplier: float = 0.0
    lr: float = 0.05
    cost_limit: float = 0.025  # target failures per episode


def lagrangian_update(state: LagrangianState, episode_cost: float) -> LagrangianState:
    """Dual ascent on the constraint violation, projected to multiplier >= 0."""
    m = max(0.0, state.multiplier + state.lr * (episode_cost - state.cost_limit))
    return replace(state, multiplier=m)


def penalized_rewards(
    rewards: np.ndarray, failures: np.ndarray, multiplier: float
) -> np.ndarray:
    """Shaped rewards r_t - multiplier * fail_t used by the Lagrangian variants."""
    return rewards - multiplier * failures

"""Training loop: on-policy rollout with danger-triggered action filtering,
recovery capture into the safety buffer, per-episode cluster rebuilds, and
the PPO (optionally Lagrangian-penalized) policy update.

The rollout fans out over `num_workers` environment instances stepped in
lockstep rounds. Within a round every worker computes its action against the
same immutable policy/buffer snapshot; results are then committed in worker
order (buffer inserts, rebuilds, episode bookkeeping). Since the commit
schedule is fixed, running rounds on a thread pool (`parallel=True`) yields
byte-identical results to the single-threaded mode.
"""

import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .buffer import BRUTE_FORCE, ExactActionMatch, GridBucketMatch, SafetyBuffer
from .cmdp import is_danger, is_recovery
from .envs import make_env
from .nn import Adam, Params, init_actor_critic, load_params, save_params
from .ppo import (
    LagrangianState,
    PpoConfig,
    compute_gae,
    lagrangian_update,
    penalized_rewards,
    policy_forward,
    ppo_update,
)

ALGO_VARIANTS = ("ppo", "ppo_lagrangian", "ppo_buffer", "ppo_lagrangian_buffer")

METRICS_HEADER = (
    "env,algo,seed,epoch,mean_reward,failure_rate,cum_failures,"
    "buffer_size,filtered_actions"
)


@dataclass
class TrainConfig:
    env: str
    algo: str = "ppo"
    epochs: int = 150
    steps_per_epoch: int = 4000
    horizon: int = 200
    c_hat: float = 0.5
    pretrain_epochs: int = 5
    k_exponent: Union[float, str] = 0.5
    bucket_width: float = 0.25
    capacity: Optional[int] = None
    seed: int = 0
    num_workers: int = 1
    parallel: bool = False
    hidden: Tuple[int, ...] = (64, 64)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    lagrangian_lr: float = 0.05
    cost_limit: float = 0.025
    env_kwargs: Dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.algo not in ALGO_VARIANTS:
            raise ValueError(f"unknown algorithm variant {self.algo!r}")
        if not 0.0 < self.c_hat < 1.0:
            raise ValueError("danger threshold must lie in (0, 1)")
        if not 0 <= self.pretrain_epochs < self.epochs:
            raise ValueError("need 0 <= pretrain_epochs < epochs")
        if self.steps_per_epoch < 1 or self.horizon < 1:
            raise ValueError("steps_per_epoch and horizon must be positive")
        if self.num_workers < 1 or self.num_workers > self.steps_per_epoch:
            raise ValueError("need 1 <= num_workers <= steps_per_epoch")

    @property
    def use_buffer(self) -> bool:
        return "buffer" in self.algo

    @property
    def use_lagrangian(self) -> bool:
        return "lagrangian" in self.algo


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    mean_reward: float
    failure_rate: float
    cum_failures: int
    buffer_size: int
    filtered_actions: int
    lagrange_multiplier: Optional[float] = None


@dataclass(frozen=True)
class FilterEvent:
    """One danger-triggered buffer query during rollout."""

    epoch: int
    global_step: int
    cost: float
    changed: bool


def _csv_num(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def metrics_rows(env: str, algo: str, seed: int, metrics: List[EpochMetrics]):
    for m in metrics:
        yield (
            f"{env},{algo},{seed},{m.epoch},{_csv_num(m.mean_reward)},"
            f"{_csv_num(m.failure_rate)},{m.cum_failures},{m.buffer_size},"
            f"{m.filtered_actions}"
        )


def write_metrics_csv(path, env: str, algo: str, seed: int, metrics) -> None:
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for row in metrics_rows(env, algo, seed, metrics):
            fh.write(row + "\n")


class _Worker:
    """One rollout worker: an exclusively-owned env plus its RNG streams."""

    def __init__(self, env, action_rng, reset_rng):
        self.env = env
        self.action_rng = action_rng
        self.reset_rng = reset_rng
        self.obs = None
        self.cost = 0.0
        self.feature = None
        self.episode_return = 0.0
        self.started = False

    def reset(self):
        seed = int(self.reset_rng.integers(2**31 - 1))
        self.obs, self.cost, self.feature = self.env.reset(seed)
        self.episode_return = 0.0
        self.started = True


class Trainer:
    """Runs one training configuration and keeps its artifacts inspectable."""

    def __init__(self, config: TrainConfig):
        config.validate()
        self.cfg = config
        seed = config.seed

        self.workers = []
        for w in range(config.num_workers):
            env = make_env(config.env, horizon=config.horizon, **config.env_kwargs)
            self.workers.append(
                _Worker(
                    env,
                    action_rng=np.random.default_rng([seed, 101, w]),
                    reset_rng=np.random.default_rng([seed, 202, w]),
                )
            )
        spec = self.workers[0].env.spec
        self.spec = spec

        init_seed = int(np.random.default_rng([seed, 7]).integers(2**31 - 1))
        self.params: Params = init_actor_critic(
            spec.obs_dim,
            n_actions=spec.n_actions,
            action_dim=spec.action_dim,
            hidden=tuple(config.hidden),
            seed=init_seed,
        )
        self.adam = Adam(self.params, lr=config.ppo.lr)
        self.shuffle_rng = np.random.default_rng([seed, 303])
        self.cluster_seed = int(np.random.default_rng([seed, 404]).integers(2**31 - 1))

        self.buffer: Optional[SafetyBuffer] = None
        if config.use_buffer:
            if spec.is_discrete:
                matcher = ExactActionMatch()
            else:
                matcher = GridBucketMatch(
                    widths=np.full(spec.action_dim, config.bucket_width),
                    lows=spec.action_low,
                )
            self.buffer = SafetyBuffer(
                matcher, k_exponent=config.k_exponent, capacity=config.capacity
            )

        self.lagrangian = LagrangianState(
            multiplier=0.0, lr=config.lagrangian_lr, cost_limit=config.cost_limit
        )
        self.metrics: List[EpochMetrics] = []
        self.filter_events: List[FilterEvent] = []
        self.episodes_per_epoch: List[int] = []
        self.rebuilds_per_epoch: List[int] = []
        self.update_stats: List[Dict[str, float]] = []
        self._cum_failures = 0
        self._global_step = 0
        self._pool = None

    # --- rollout ---------------------------------------------------------

    def _step_worker(self, worker: _Worker, filtering_on: bool):
        """Phase 1 of a round: act and step against the current snapshots."""
        dist, value = policy_forward(self.params, worker.obs)
        action = dist.sample(worker.action_rng)
        if not self.spec.is_discrete:
            action = np.clip(action, self.spec.action_low, self.spec.action_high)
        triggered = filtering_on and is_danger(worker.cost, self.cfg.c_hat)
        changed = False
        if triggered:
            candidate = self.buffer.query_recovery_action(action, worker.feature)
            if self.spec.is_discrete:
                changed = int(candidate) != int(action)
            else:
                changed = not np.array_equal(candidate, action)
            action = candidate
        logp = dist.log_prob(action)
        pre_cost, pre_feature = worker.cost, worker.feature
        transition = worker.env.step(action)
        return worker, action, logp, value, transition, triggered, changed, pre_cost, pre_feature

    def _collect(self, epoch: int, filtering_on: bool):
        cfg = self.cfg
        W = cfg.num_workers
        quotas = [cfg.steps_per_epoch // W] * W
        for w in range(cfg.steps_per_epoch % W):
            quotas[w] += 1

        data = {
            w: {"obs": [], "act": [], "logp": [], "rew": [], "cost": [],
                "val": [], "done": [], "fail": []}
            for w in range(W)
        }
        episode_returns: List[float] = []
        failures = 0
        episodes = 0
        rebuilds = 0
        filtered = 0

        for worker in self.workers:
            if not worker.started:
                worker.reset()

        remaining = list(quotas)
        while any(r > 0 for r in remaining):
            active = [w for w in range(W) if remaining[w] > 0]
            if self._pool is not None and len(active) > 1:
                results = list(
                    self._pool.map(
                        lambda w: self._step_worker(self.workers[w], filtering_on),
                        active,
                    )
                )
            else:
                results = [
                    self._step_worker(self.workers[w], filtering_on) for w in active
                ]

            # phase 2: commit in worker order
            for w, result in zip(active, results):
                (worker, action, logp, value, tr, triggered, changed,
                 pre_cost, pre_feature) = result
                d = data[w]
                d["obs"].append(worker.obs)
                d["act"].append(action)
                d["logp"].append(logp)
                d["rew"].append(tr.reward)
                d["cost"].append(pre_cost)
                d["val"].append(value)
                d["done"].append(tr.done)
                d["fail"].append(tr.failed)

                self._global_step += 1
                remaining[w] -= 1
                if triggered:
                    filtered += changed
                    self.filter_events.append(
                        FilterEvent(epoch, self._global_step, pre_cost, changed)
                    )
                if cfg.use_buffer and is_recovery(pre_cost, tr.cost, cfg.c_hat):
                    self.buffer.insert(pre_feature, action, tr.reward)

                worker.episode_return += tr.reward
                if tr.done:
                    episodes += 1
                    failures += int(tr.failed)
                    episode_returns.append(worker.episode_return)
                    if cfg.use_buffer:
                        self.buffer.rebuild(self.cluster_seed)
                        rebuilds += 1
                    worker.reset()
                else:
                    worker.obs = tr.obs
                    worker.cost = tr.cost
                    worker.feature = tr.feature

        # per-worker bootstrap values for segments truncated by the epoch end
        segments = []
        for w in range(W):
            d = data[w]
            if not d["obs"]:
                continue
            if d["done"][-1]:
                last_value = 0.0
            else:
                _, last_value = policy_forward(self.params, self.workers[w].obs)
            segments.append((d, last_value))

        return segments, episode_returns, failures, episodes, rebuilds, filtered

    # --- training ----------------------------------------------------------

    def run(self) -> List[EpochMetrics]:
        cfg = self.cfg
        if cfg.parallel and cfg.num_workers > 1:
            self._pool = ThreadPoolExecutor(max_workers=cfg.num_workers)
        try:
            for epoch in range(1, cfg.epochs + 1):
                filtering_on = cfg.use_buffer and epoch > cfg.pretrain_epochs
                (segments, episode_returns, failures, episodes, rebuilds,
                 filtered) = self._collect(epoch, filtering_on)

                obs, acts, logps, advs, rets = [], [], [], [], []
                for d, last_value in segments:
                    rew = np.array(d["rew"])
                    fail = np.array(d["fail"], dtype=float)
                    if cfg.use_lagrangian:
                        rew = penalized_rewards(
                            rew, fail, self.lagrangian.multiplier
                        )
                    adv, ret = compute_gae(
                        rew,
                        np.array(d["val"]),
                        np.array(d["done"], dtype=float),
                        last_value,
                        cfg.ppo.gamma,
                        cfg.ppo.lam,
                    )
                    obs.append(np.stack(d["obs"]))
                    acts.append(np.stack(d["act"]) if not self.spec.is_discrete
                                else np.array(d["act"]))
                    logps.append(np.array(d["logp"]))
                    advs.append(adv)
                    rets.append(ret)

                obs = np.concatenate(obs)
                acts = np.concatenate(acts)
                logps = np.concatenate(logps)
                advs = np.concatenate(advs)
                rets = np.concatenate(rets)
                advs = (advs - advs.mean()) / (advs.std() + 1e-8)

                stats = ppo_update(
                    self.params, obs, acts, logps, advs, rets,
                    cfg.ppo, self.adam, self.shuffle_rng,
                )
                self.update_stats.append(stats)

                if cfg.use_lagrangian:
                    episode_cost = failures / episodes if episodes else 0.0
                    self.lagrangian = lagrangian_update(self.lagrangian, episode_cost)

                self._cum_failures += failures
                self.episodes_per_epoch.append(episodes)
                self.rebuilds_per_epoch.append(rebuilds)
                mean_reward = (
                    float(np.mean(episode_returns)) if episode_returns else float("nan")
                )
                self.metrics.append(
                    EpochMetrics(
                        epoch=epoch,
                        mean_reward=mean_reward,
                        failure_rate=(failures / episodes if episodes else 0.0),
                        cum_failures=self._cum_failures,
                        buffer_size=len(self.buffer) if self.buffer else 0,
                        filtered_actions=filtered,
                        lagrange_multiplier=(
                            self.lagrangian.multiplier if cfg.use_lagrangian else None
                        ),
                    )
                )
        finally:
            if self._pool is not None:
                self._pool.shutdown()
                self._pool = None
        return self.metrics

    # --- artifacts ----------------------------------------------------------

    def save_checkpoint(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        save_params(self.params, os.path.join(directory, "params.npz"))
        with open(os.path.join(directory, "config.txt"), "w") as fh:
            fh.write(config_to_text(self.cfg))
        if self.buffer is not None:
            self.buffer.save_snapshot(os.path.join(directory, "buffer.txt"))

    def write_audit_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,global_step,cost,changed\n")
            for ev in self.filter_events:
                fh.write(
                    f"{ev.epoch},{ev.global_step},{_csv_num(ev.cost)},"
                    f"{int(ev.changed)}\n"
                )


def run_training(config: TrainConfig) -> List[EpochMetrics]:
    """Train one configuration and return its per-epoch metrics."""
    return Trainer(config).run()


def evaluate(
    params: Params,
    env,
    episodes: int,
    use_buffer: bool = False,
    buffer: Optional[SafetyBuffer] = None,
    c_hat: float = 0.5,
    seed: int = 0,
) -> Tuple[float, float]:
    """Greedy evaluation; returns (mean episode reward, failure rate).

    With use_buffer the frozen buffer's danger-triggered filtering is applied
    exactly as during training, but nothing is inserted or rebuilt.
    """
    if episodes < 1:
        raise ValueError("episodes must be positive")
    if use_buffer and buffer is None:
        raise ValueError("use_buffer requires a buffer")
    spec = env.spec
    reset_rng = np.random.default_rng([seed, 909])
    returns = []
    failures = 0
    for _ in range(episodes):
        obs, cost, feature = env.reset(int(reset_rng.integers(2**31 - 1)))
        total = 0.0
        while True:
            dist, _ = policy_forward(params, obs)
            action = dist.mode()
            if not spec.is_discrete:
                action = np.clip(action, spec.action_low, spec.action_high)
            if use_buffer and is_danger(cost, c_hat):
                action = buffer.query_recovery_action(action, feature)
            tr = env.step(action)
            total += tr.reward
            if tr.done:
                failures += int(tr.failed)
                break
            obs, cost, feature = tr.obs, tr.cost, tr.feature
        returns.append(total)
    return float(np.mean(returns)), failures / episodes


# --- flat key=value config files ------------------------------------------

_PPO_FIELDS = {f.name for f in dataclasses.fields(PpoConfig)}
_SKIP_FIELDS = {"ppo", "env_kwargs", "hidden"}


def config_to_text(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(TrainConfig):
        if f.name in _SKIP_FIELDS:
            continue
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {_format_value(value)}")
    lines.append(f"hidden = {','.join(str(h) for h in cfg.hidden)}")
    for name in sorted(_PPO_FIELDS):
        lines.append(f"ppo.{name} = {_format_value(getattr(cfg.ppo, name))}")
    for key in sorted(cfg.env_kwargs):
        lines.append(f"env.{key} = {_format_value(cfg.env_kwargs[key])}")
    return "\n".join(lines) + "\n"


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low == "none":
        return None
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text: str, base: Optional[TrainConfig] = None) -> TrainConfig:
    """Build a TrainConfig from `key = value` lines ('#' starts a comment)."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = _parse_value(value)
    return config_from_pairs(pairs, base)


def config_from_pairs(pairs: Dict, base: Optional[TrainConfig] = None) -> TrainConfig:
    cfg = (
        dataclasses.replace(base)
        if base is not None
        else TrainConfig(env=pairs.get("env", ""))
    )
    ppo_kwargs = dataclasses.asdict(cfg.ppo)
    env_kwargs = dict(cfg.env_kwargs)
    field_types = {f.name: f for f in dataclasses.fields(TrainConfig)}
    for key, value in pairs.items():
        if key.startswith("ppo."):
            name = key[4:]
            if name not in _PPO_FIELDS:
                raise ValueError(f"unknown PPO option {name!r}")
            ppo_kwargs[name] = value
        elif key.startswith("env."):
            env_kwargs[key[4:]] = value
        elif key == "hidden":
            cfg = dataclasses.replace(
                cfg, hidden=tuple(int(h) for h in str(value).split(",") if h != "")
            )
        elif key in field_types:
            if key == "k_exponent" and value != BRUTE_FORCE:
                value = float(value)
            cfg = dataclasses.replace(cfg, **{key: value})
        else:
            raise ValueError(f"unknown config key {key!r}")
    cfg = dataclasses.replace(
        cfg, ppo=PpoConfig(**ppo_kwargs), env_kwargs=env_kwargs
    )
    return cfg


def load_config(path, base: Optional[TrainConfig] = None) -> TrainConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), base)


def load_checkpoint(directory):
    """Load (params, config, buffer-or-None) from a checkpoint directory."""
    params = load_params(os.path.join(directory, "params.npz"))
    cfg = load_config(os.path.join(directory, "config.txt"))
    buffer = None
    buffer_path = os.path.join(directory, "buffer.txt")
    if cfg.use_buffer and os.path.exists(buffer_path):
        env = make_env(cfg.env, horizon=cfg.horizon, **cfg.env_kwargs)
        spec = env.spec
        if spec.is_discrete:
            matcher = ExactActionMatch()
        else:
            matcher = GridBucketMatch(
                widths=np.full(spec.action_dim, cfg.bucket_width),
                lows=spec.action_low,
            )
        buffer = SafetyBuffer(
            matcher, k_exponent=cfg.k_exponent, capacity=cfg.capacity
        )
        with open(buffer_path) as fh:
            buffer.load_snapshot(fh.read())
        cluster_seed = int(
            np.random.default_rng([cfg.seed, 404]).integers(2**31 - 1)
        )
        buffer.rebuild(cluster_seed)
    return params, cfg, buffer

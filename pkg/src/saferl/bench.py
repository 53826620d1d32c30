"""Experiment matrix runner: algorithm comparisons, seed aggregation, and the
cluster-count / danger-radius ablations, all written out as flat CSV files."""

import dataclasses
import os
import traceback
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .envs import make_env
from .trainer import (
    METRICS_HEADER,
    TrainConfig,
    Trainer,
    _csv_num,
    _parse_value,
    config_from_pairs,
    evaluate,
    metrics_rows,
)

ABLATION_AXES = ("none", "k_exponent", "danger_radius")

DEFAULT_K_SETTINGS: List[Union[str, float]] = ["brute", 0.1, 1.0 / 3.0, 0.5, 0.8]
DEFAULT_RADIUS_SETTINGS = [1.5, 2.5, 3.5]

# how many trailing epochs define "final" performance
FINAL_WINDOW = 10


@dataclass
class MatrixSpec:
    envs: List[str]
    algos: List[str]
    seeds: List[int]
    ablation: str = "none"
    k_settings: List[Union[str, float]] = field(
        default_factory=lambda: list(DEFAULT_K_SETTINGS)
    )
    radius_settings: List[float] = field(
        default_factory=lambda: list(DEFAULT_RADIUS_SETTINGS)
    )
    eval_episodes: int = 100
    overrides: Dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.envs or not self.algos or not self.seeds:
            raise ValueError("matrix needs at least one env, algo, and seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("matrix seeds must be distinct")
        if self.ablation not in ABLATION_AXES:
            raise ValueError(f"unknown ablation axis {self.ablation!r}")


def parse_matrix_text(text: str) -> MatrixSpec:
    """Matrix config: flat `key = value` lines with comma-separated lists."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()

    def split_list(key, default=None):
        if key not in pairs:
            return default
        return [v.strip() for v in pairs.pop(key).split(",") if v.strip()]

    envs = split_list("envs") or ([pairs.pop("env")] if "env" in pairs else None)
    if envs is None:
        raise ValueError("matrix file must set 'envs'")
    algos = split_list("algos", ["ppo"])
    seeds = [int(s) for s in (split_list("seeds", ["0", "1", "2"]))]
    ablation = pairs.pop("ablation", "none")
    k_settings = split_list("k_settings")
    radius_settings = split_list("radius_settings")
    eval_episodes = int(pairs.pop("eval_episodes", 100))

    spec = MatrixSpec(
        envs=envs,
        algos=algos,
        seeds=seeds,
        ablation=ablation,
        eval_episodes=eval_episodes,
        overrides={k: v for k, v in pairs.items()},
    )
    if k_settings is not None:
        spec.k_settings = [
            s if s == "brute" else float(s) for s in k_settings
        ]
    if radius_settings is not None:
        spec.radius_settings = [float(s) for s in radius_settings]
    spec.validate()
    return spec


def load_matrix(path) -> MatrixSpec:
    with open(path) as fh:
        return parse_matrix_text(fh.read())


def relative_cumulative_failures(cumulative: Dict) -> Dict:
    """Normalize per-algorithm cumulative failures by the worst algorithm.

    All-zero input (no failures anywhere) maps to all zeros.
    """
    values = list(cumulative.values())
    if any(v < 0 for v in values):
        raise ValueError("cumulative failure counts cannot be negative")
    worst = max(values) if values else 0.0
    if worst == 0:
        return {k: 0.0 for k in cumulative}
    return {k: v / worst for k, v in cumulative.items()}


def k_setting_label(setting) -> str:
    return "brute" if setting == "brute" else f"N^{_csv_num(float(setting))}"


def _cell_config(spec: MatrixSpec, env: str, algo: str, seed: int) -> TrainConfig:
    base = TrainConfig(env=env, algo=algo, seed=seed)
    pairs = {
        k: (_parse_value(v) if isinstance(v, str) else v)
        for k, v in spec.overrides.items()
    }
    cfg = config_from_pairs(pairs, base)
    return dataclasses.replace(cfg, env=env, algo=algo, seed=seed)


@dataclass
class CellResult:
    env: str
    algo: str
    seed: int
    setting: str
    status: str
    error: str = ""
    metrics: list = field(default_factory=list)
    eval_reward: Optional[float] = None
    eval_failure_rate: Optional[float] = None


def _final_mean(metrics, attr: str) -> float:
    window = metrics[-FINAL_WINDOW:]
    return float(np.mean([getattr(m, attr) for m in window]))


def run_matrix(spec: MatrixSpec, out_dir) -> Dict[str, str]:
    """Run every cell of the matrix and write the CSV artifacts.

    Always writes learning_curves.csv and runs.csv; additionally writes
    comparison.csv (ablation=none) or ablation.csv (other axes). A failing
    cell is recorded with its error and does not stop the remaining cells.
    """
    spec.validate()
    os.makedirs(out_dir, exist_ok=True)
    results: List[CellResult] = []

    if spec.ablation == "none":
        cells = [
            (env, algo, seed, "-", {})
            for env in spec.envs
            for algo in spec.algos
            for seed in spec.seeds
        ]
    elif spec.ablation == "k_exponent":
        cells = [
            (env, algo, seed, k_setting_label(setting), {"k_exponent": setting})
            for env in spec.envs
            for algo in spec.algos
            for setting in spec.k_settings
            for seed in spec.seeds
        ]
    else:  # danger_radius
        cells = [
            (env, algo, seed, _csv_num(float(setting)), {"danger_radius": setting})
            for env in spec.envs
            for algo in spec.algos
            for setting in spec.radius_settings
            for seed in spec.seeds
        ]

    for env, algo, seed, setting, tweaks in cells:
        result = CellResult(env=env, algo=algo, seed=seed, setting=setting, status="ok")
        try:
            cfg = _cell_config(spec, env, algo, seed)
            if "k_exponent" in tweaks:
                cfg = dataclasses.replace(cfg, k_exponent=tweaks["k_exponent"])
            if "danger_radius" in tweaks:
                env_kwargs = dict(cfg.env_kwargs)
                env_kwargs["danger_radius"] = tweaks["danger_radius"]
                cfg = dataclasses.replace(cfg, env_kwargs=env_kwargs)
            trainer = Trainer(cfg)
            result.metrics = trainer.run()
            eval_env = make_env(cfg.env, horizon=cfg.horizon, **cfg.env_kwargs)
            result.eval_reward, result.eval_failure_rate = evaluate(
                trainer.params,
                eval_env,
                episodes=spec.eval_episodes,
                use_buffer=cfg.use_buffer,
                buffer=trainer.buffer,
                c_hat=cfg.c_hat,
                seed=cfg.seed + 10_000,
            )
        except Exception as exc:  # cell failures keep the matrix going
            result.status = "error"
            result.error = f"{type(exc).__name__}: {exc}"
            traceback.print_exc()
        results.append(result)

    paths = {
        "learning_curves": os.path.join(out_dir, "learning_curves.csv"),
        "runs": os.path.join(out_dir, "runs.csv"),
    }
    _write_learning_curves(paths["learning_curves"], results)
    _write_runs(paths["runs"], results)
    if spec.ablation == "none":
        paths["comparison"] = os.path.join(out_dir, "comparison.csv")
        _write_comparison(paths["comparison"], spec, results)
    else:
        paths["ablation"] = os.path.join(out_dir, "ablation.csv")
        _write_ablation(paths["ablation"], results)
    return paths


def _write_runs(path, results: List[CellResult]) -> None:
    with open(path, "w") as fh:
        fh.write("env,algo,seed,setting,status,error\n")
        for r in results:
            err = r.error.replace(",", ";").replace("\n", " ")
            fh.write(f"{r.env},{r.algo},{r.seed},{r.setting},{r.status},{err}\n")


def _write_learning_curves(path, results: List[CellResult]) -> None:
    ok = [r for r in results if r.status == "ok"]
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for r in ok:
            for row in metrics_rows(r.env, r.algo, r.seed, r.metrics):
                fh.write(row + "\n")
        # aggregate rows: seed column carries 'mean' / 'std'
        groups: Dict = {}
        for r in ok:
            groups.setdefault((r.env, r.algo, r.setting), []).append(r)
        for (env, algo, _setting), rs in groups.items():
            if len(rs) < 2:
                continue
            n_epochs = min(len(r.metrics) for r in rs)
            for i in range(n_epochs):
                rows = [r.metrics[i] for r in rs]
                for stat, fn in (("mean", np.mean), ("std", np.std)):
                    fh.write(
                        f"{env},{algo},{stat},{rows[0].epoch},"
                        f"{_csv_num(float(fn([m.mean_reward for m in rows])))},"
                        f"{_csv_num(float(fn([m.failure_rate for m in rows])))},"
                        f"{_csv_num(float(fn([m.cum_failures for m in rows])))},"
                        f"{_csv_num(float(fn([m.buffer_size for m in rows])))},"
                        f"{_csv_num(float(fn([m.filtered_actions for m in rows])))}\n"
                    )


def _write_comparison(path, spec: MatrixSpec, results: List[CellResult]) -> None:
    ok = [r for r in results if r.status == "ok"]
    with open(path, "w") as fh:
        fh.write(
            "env,algo,final_reward,final_failure_rate,cum_failures,rel_cum_failures\n"
        )
        for env in spec.envs:
            per_algo = {}
            for algo in spec.algos:
                rs = [r for r in ok if r.env == env and r.algo == algo and r.metrics]
                if not rs:
                    continue
                per_algo[algo] = {
                    "final_reward": float(
                        np.mean([_final_mean(r.metrics, "mean_reward") for r in rs])
                    ),
                    "final_failure_rate": float(
                        np.mean([_final_mean(r.metrics, "failure_rate") for r in rs])
                    ),
                    "cum_failures": float(
                        np.mean([r.metrics[-1].cum_failures for r in rs])
                    ),
                }
            rel = relative_cumulative_failures(
                {a: v["cum_failures"] for a, v in per_algo.items()}
            )
            for algo, v in per_algo.items():
                fh.write(
                    f"{env},{algo},{_csv_num(v['final_reward'])},"
                    f"{_csv_num(v['final_failure_rate'])},"
                    f"{_csv_num(v['cum_failures'])},{_csv_num(rel[algo])}\n"
                )


def _write_ablation(path, results: List[CellResult]) -> None:
    ok = [r for r in results if r.status == "ok" and r.eval_reward is not None]
    groups: Dict = {}
    order: List = []
    for r in ok:
        key = (r.env, r.setting)
        if key not in groups:
            order.append(key)
        groups.setdefault(key, []).append(r)
    with open(path, "w") as fh:
        fh.write("env,setting,reward,failure_rate\n")
        for key in order:
            rs = groups[key]
            reward = float(np.mean([r.eval_reward for r in rs]))
            fail = float(np.mean([r.eval_failure_rate for r in rs]))
            fh.write(f"{key[0]},{key[1]},{_csv_num(reward)},{_csv_num(fail)}\n")

"""Command-line harness: train a single configuration, run an experiment
matrix, or evaluate a saved checkpoint."""

import argparse
import os
import sys

from .bench import load_matrix, run_matrix
from .trainer import (
    TrainConfig,
    Trainer,
    evaluate,
    load_checkpoint,
    load_config,
    write_metrics_csv,
)
from .envs import make_env


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saferl",
        description="Safe on-policy RL with a clustered recovery-action buffer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one (env, algo, seed) cell")
    train.add_argument("--env", help="environment id (e.g. goal_nav)")
    train.add_argument("--algo", help="ppo | ppo_lagrangian | ppo_buffer | ppo_lagrangian_buffer")
    train.add_argument("--seed", type=int)
    train.add_argument("--epochs", type=int)
    train.add_argument("--steps-per-epoch", type=int)
    train.add_argument("--horizon", type=int)
    train.add_argument("--c-hat", type=float, help="danger threshold in (0, 1)")
    train.add_argument(
        "--k-exponent",
        help="cluster-count policy: 'brute' or an exponent p with k = round(N^p)",
    )
    train.add_argument("--bucket-width", type=float)
    train.add_argument("--capacity", type=int)
    train.add_argument("--pretrain-epochs", type=int)
    train.add_argument("--num-workers", type=int)
    train.add_argument("--parallel", action="store_true", default=None)
    train.add_argument("--config", help="key = value config file (CLI flags override)")
    train.add_argument("--out", default="runs/train", help="output directory")

    bench = sub.add_parser("bench", help="run an experiment matrix")
    bench.add_argument("--matrix", required=True, help="matrix config file")
    bench.add_argument("--out", default="runs/bench", help="output directory")

    ev = sub.add_parser("eval", help="evaluate a saved checkpoint")
    ev.add_argument("--checkpoint", required=True, help="checkpoint directory")
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--use-buffer", action="store_true")
    ev.add_argument("--seed", type=int, default=0)
    return parser


_TRAIN_FLAGS = (
    "env",
    "algo",
    "seed",
    "epochs",
    "steps_per_epoch",
    "horizon",
    "c_hat",
    "bucket_width",
    "capacity",
    "pretrain_epochs",
    "num_workers",
    "parallel",
)


def _train_config(args) -> TrainConfig:
    import dataclasses

    if args.config:
        cfg = load_config(args.config)
    else:
        if not args.env:
            raise ValueError("train requires --env (or a --config file setting it)")
        cfg = TrainConfig(env=args.env)
    updates = {}
    for name in _TRAIN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            updates[name] = value
    if args.k_exponent is not None:
        updates["k_exponent"] = (
            args.k_exponent if args.k_exponent == "brute" else float(args.k_exponent)
        )
    cfg = dataclasses.replace(cfg, **updates)
    if not cfg.env:
        raise ValueError("no environment configured")
    if not cfg.algo:
        raise ValueError("no algorithm variant configured")
    return cfg


def _cmd_train(args) -> int:
    cfg = _train_config(args)
    trainer = Trainer(cfg)
    metrics = trainer.run()
    os.makedirs(args.out, exist_ok=True)
    write_metrics_csv(
        os.path.join(args.out, "metrics.csv"), cfg.env, cfg.algo, cfg.seed, metrics
    )
    trainer.write_audit_csv(os.path.join(args.out, "audit.csv"))
    trainer.save_checkpoint(os.path.join(args.out, "checkpoint"))
    last = metrics[-1]
    print(
        f"trained {cfg.algo} on {cfg.env} (seed {cfg.seed}): "
        f"final mean reward {last.mean_reward:.3f}, "
        f"failure rate {last.failure_rate:.3f}, "
        f"cumulative failures {last.cum_failures}"
    )
    print(f"artifacts in {args.out}")
    return 0


def _cmd_bench(args) -> int:
    spec = load_matrix(args.matrix)
    paths = run_matrix(spec, args.out)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_eval(args) -> int:
    params, cfg, buffer = load_checkpoint(args.checkpoint)
    if args.use_buffer and buffer is None:
        raise ValueError(
            "checkpoint has no safety buffer; train a buffer variant first"
        )
    env = make_env(cfg.env, horizon=cfg.horizon, **cfg.env_kwargs)
    reward, failure_rate = evaluate(
        params,
        env,
        episodes=args.episodes,
        use_buffer=args.use_buffer,
        buffer=buffer,
        c_hat=cfg.c_hat,
        seed=args.seed,
    )
    print(f"episodes={args.episodes} mean_reward={reward:.4f} failure_rate={failure_rate:.4f}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": _cmd_train, "bench": _cmd_bench, "eval": _cmd_eval}
    try:
        return handlers[args.command](args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

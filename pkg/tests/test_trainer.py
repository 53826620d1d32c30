import dataclasses
import io

import numpy as np
import pytest

import saferl.trainer as trainer_mod
from saferl.buffer import ExactActionMatch, SafetyBuffer
from saferl.envs import parse_layout
from saferl.envs.grid import GoalNavEnv
from saferl.ppo import PpoConfig
from saferl.trainer import (
    TrainConfig,
    Trainer,
    config_to_text,
    evaluate,
    load_checkpoint,
    metrics_rows,
    parse_config_text,
    run_training,
    write_metrics_csv,
)


def scripted_config(**overrides):
    base = dict(
        env="scripted",
        algo="ppo_buffer",
        epochs=1,
        steps_per_epoch=4,
        horizon=10,
        pretrain_epochs=0,
        seed=0,
        ppo=PpoConfig(update_epochs=2, minibatch_size=4),
    )
    base.update(overrides)
    return TrainConfig(**base)


def test_scripted_episode_matches_hand_trace():
    """Cost sequence 0.0 -> 0.7 -> 0.2 -> 0.7 -> 1.0, one episode."""
    trainer = Trainer(scripted_config())
    metrics = trainer.run()

    # exactly one recovery (0.7 -> 0.2), recorded with the executed action
    assert len(trainer.buffer) == 1
    record = trainer.buffer.records[0]
    assert np.array_equal(record.feature, [1.0, 0.7, 0.0, 1.0])  # feature of s_1
    assert record.reward == pytest.approx(1.0 - 0.1 * 2)  # reward of step t=1->2

    # filtering triggered at both danger states (cost 0.7)
    assert len(trainer.filter_events) == 2
    assert all(ev.cost == 0.7 for ev in trainer.filter_events)
    # empty buffer and unrebuilt model: both queries passed the action through
    assert all(not ev.changed for ev in trainer.filter_events)

    # one failure, one episode, one rebuild
    assert metrics[0].cum_failures == 1
    assert metrics[0].failure_rate == 1.0
    assert trainer.episodes_per_epoch == [1]
    assert trainer.rebuilds_per_epoch == [1]
    assert metrics[0].buffer_size == 1


def test_plain_ppo_bypasses_buffer_machinery():
    cfg = TrainConfig(
        env="goal_nav",
        algo="ppo",
        epochs=2,
        steps_per_epoch=120,
        horizon=40,
        pretrain_epochs=0,
        seed=1,
        ppo=PpoConfig(update_epochs=2, minibatch_size=32),
    )
    trainer = Trainer(cfg)
    metrics = trainer.run()
    assert trainer.buffer is None
    assert all(m.buffer_size == 0 for m in metrics)
    assert all(m.filtered_actions == 0 for m in metrics)
    assert not trainer.filter_events


def test_filter_events_only_at_or_above_threshold():
    cfg = TrainConfig(
        env="goal_nav",
        algo="ppo_buffer",
        epochs=3,
        steps_per_epoch=200,
        horizon=40,
        pretrain_epochs=1,
        seed=3,
        ppo=PpoConfig(update_epochs=2, minibatch_size=64),
    )
    trainer = Trainer(cfg)
    trainer.run()
    assert trainer.filter_events  # danger states do occur on goal_nav
    assert all(ev.cost >= cfg.c_hat for ev in trainer.filter_events)


def test_inserts_only_on_recovery(monkeypatch):
    calls = []
    real = trainer_mod.is_recovery

    def spy(cost_t, cost_next, threshold):
        out = real(cost_t, cost_next, threshold)
        calls.append(out)
        return out

    monkeypatch.setattr(trainer_mod, "is_recovery", spy)
    cfg = TrainConfig(
        env="goal_nav",
        algo="ppo_buffer",
        epochs=2,
        steps_per_epoch=150,
        horizon=40,
        pretrain_epochs=0,
        seed=5,
        ppo=PpoConfig(update_epochs=1, minibatch_size=64),
    )
    trainer = Trainer(cfg)
    trainer.run()
    assert trainer.buffer.total_inserts == sum(calls)


def test_metrics_deterministic_across_runs():
    cfg = TrainConfig(
        env="goal_nav",
        algo="ppo_lagrangian_buffer",
        epochs=3,
        steps_per_epoch=150,
        horizon=40,
        pretrain_epochs=1,
        seed=11,
        ppo=PpoConfig(update_epochs=2, minibatch_size=64),
    )
    a = run_training(cfg)
    b = run_training(dataclasses.replace(cfg))
    assert a == b


def test_single_threaded_equals_parallel_rollout():
    common = dict(
        env="goal_nav",
        algo="ppo_buffer",
        epochs=3,
        steps_per_epoch=151,  # uneven split across workers
        horizon=30,
        pretrain_epochs=1,
        seed=2,
        num_workers=3,
        ppo=PpoConfig(update_epochs=2, minibatch_size=64),
    )
    seq = run_training(TrainConfig(parallel=False, **common))
    par = run_training(TrainConfig(parallel=True, **common))
    buf_seq = io.StringIO()
    buf_par = io.StringIO()
    for buf, metrics in ((buf_seq, seq), (buf_par, par)):
        for row in metrics_rows("goal_nav", "ppo_buffer", 2, metrics):
            buf.write(row + "\n")
    assert buf_seq.getvalue() == buf_par.getvalue()


def test_lagrangian_multiplier_tracked():
    cfg = TrainConfig(
        env="goal_nav",
        algo="ppo_lagrangian",
        epochs=2,
        steps_per_epoch=120,
        horizon=30,
        pretrain_epochs=0,
        seed=4,
        lagrangian_lr=0.5,
        ppo=PpoConfig(update_epochs=1, minibatch_size=64),
    )
    trainer = Trainer(cfg)
    metrics = trainer.run()
    assert all(m.lagrange_multiplier is not None for m in metrics)
    assert all(m.lagrange_multiplier >= 0 for m in metrics)


def test_cum_failures_monotone_and_additive():
    cfg = TrainConfig(
        env="goal_nav",
        algo="ppo",
        epochs=4,
        steps_per_epoch=120,
        horizon=30,
        pretrain_epochs=0,
        seed=6,
        ppo=PpoConfig(update_epochs=1, minibatch_size=64),
    )
    metrics = run_training(cfg)
    prev = 0
    for m in metrics:
        assert m.cum_failures >= prev
        prev = m.cum_failures


def test_config_validation_errors():
    with pytest.raises(ValueError):
        TrainConfig(env="goal_nav", algo="dqn").validate()
    with pytest.raises(ValueError):
        TrainConfig(env="goal_nav", c_hat=0.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(env="goal_nav", epochs=5, pretrain_epochs=5).validate()
    with pytest.raises(ValueError):
        TrainConfig(env="goal_nav", num_workers=0).validate()


# --- evaluate -----------------------------------------------------------------


ESCAPE_LAYOUT = """\
..#..
.....
.....
..A..
..G..
"""


def zeroed_policy(obs_dim, n_actions=5):
    from saferl.nn import init_actor_critic

    params = init_actor_critic(obs_dim, n_actions=n_actions, seed=0)
    return {k: np.zeros_like(v) for k, v in params.items()}


def test_evaluate_rejects_zero_episodes():
    env = GoalNavEnv(layout=parse_layout(ESCAPE_LAYOUT), horizon=20)
    params = zeroed_policy(env.spec.obs_dim)
    with pytest.raises(ValueError):
        evaluate(params, env, episodes=0)


def test_evaluate_deterministic():
    env = GoalNavEnv(layout=parse_layout(ESCAPE_LAYOUT), horizon=20)
    params = zeroed_policy(env.spec.obs_dim)
    a = evaluate(params, env, episodes=3, seed=1)
    b = evaluate(params, env, episodes=3, seed=1)
    assert a == b


def test_buffer_filtering_prevents_scripted_failure():
    """A zeroed policy argmaxes to 'up' and walks into the hazard; a buffer
    holding the escape action must strictly lower the failure rate."""
    env = GoalNavEnv(layout=parse_layout(ESCAPE_LAYOUT), horizon=12)
    params = zeroed_policy(env.spec.obs_dim)

    _, fail_plain = evaluate(params, env, episodes=4)
    assert fail_plain == 1.0  # argmax 'up' marches into the trap

    # capture the feature of the danger state one cell below the hazard
    env.reset(0)
    env.step(0)
    tr = env.step(0)
    assert 0.5 <= tr.cost < 1.0

    buffer = SafetyBuffer(ExactActionMatch(), k_exponent=0.5)
    buffer.insert(tr.feature, 1, 5.0)  # 'down' escapes
    buffer.rebuild(seed=0)

    _, fail_filtered = evaluate(
        params, env, episodes=4, use_buffer=True, buffer=buffer, c_hat=0.5
    )
    assert fail_filtered < fail_plain


def test_evaluate_requires_buffer_when_enabled():
    env = GoalNavEnv(layout=parse_layout(ESCAPE_LAYOUT), horizon=10)
    params = zeroed_policy(env.spec.obs_dim)
    with pytest.raises(ValueError):
        evaluate(params, env, episodes=1, use_buffer=True)


# --- config files / checkpoints ---------------------------------------------------


def test_config_text_roundtrip():
    cfg = TrainConfig(
        env="point_mass",
        algo="ppo_lagrangian_buffer",
        epochs=12,
        steps_per_epoch=99,
        horizon=55,
        c_hat=0.4,
        pretrain_epochs=2,
        k_exponent="brute",
        bucket_width=0.5,
        capacity=1000,
        seed=42,
        num_workers=2,
        parallel=True,
        ppo=PpoConfig(lr=1e-3, minibatch_size=32),
        env_kwargs={"n_hazards": 3, "arena_size": 4.0},
    )
    text = config_to_text(cfg)
    parsed = parse_config_text(text)
    assert parsed == cfg


def test_config_parse_rejects_unknown_keys():
    with pytest.raises(ValueError):
        parse_config_text("env = goal_nav\nbogus = 1\n")
    with pytest.raises(ValueError):
        parse_config_text("env = goal_nav\nppo.bogus = 1\n")
    with pytest.raises(ValueError):
        parse_config_text("just a line\n")


def test_checkpoint_roundtrip(tmp_path):
    cfg = TrainConfig(
        env="goal_nav",
        algo="ppo_buffer",
        epochs=2,
        steps_per_epoch=100,
        horizon=30,
        pretrain_epochs=0,
        seed=9,
        ppo=PpoConfig(update_epochs=1, minibatch_size=64),
    )
    trainer = Trainer(cfg)
    trainer.run()
    trainer.save_checkpoint(tmp_path / "ckpt")
    params, loaded_cfg, buffer = load_checkpoint(tmp_path / "ckpt")
    assert loaded_cfg == cfg
    for k in trainer.params:
        assert np.array_equal(params[k], trainer.params[k])
    assert buffer is not None
    assert len(buffer) == len(trainer.buffer)


def test_metrics_csv_shape(tmp_path):
    cfg = scripted_config(epochs=2, steps_per_epoch=8)
    metrics = run_training(cfg)
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, "scripted", "ppo_buffer", 0, metrics)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("env,algo,seed,epoch")
    assert len(lines) == 3
    assert lines[1].split(",")[:4] == ["scripted", "ppo_buffer", "0", "1"]

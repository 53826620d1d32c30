import numpy as np
import pytest

from saferl.bench import (
    MatrixSpec,
    load_matrix,
    parse_matrix_text,
    relative_cumulative_failures,
    run_matrix,
)
from saferl.cli import main


# --- relative cumulative failures ---------------------------------------------


def test_relative_failures_ratio_structure():
    out = relative_cumulative_failures({"ppo": 500.0, "ours": 145.0})
    assert out["ppo"] == 1.0
    assert out["ours"] == pytest.approx(0.29)


def test_relative_failures_singleton_and_zero():
    assert relative_cumulative_failures({"a": 7.0}) == {"a": 1.0}
    assert relative_cumulative_failures({"a": 0.0, "b": 0.0}) == {"a": 0.0, "b": 0.0}


def test_relative_failures_max_is_exactly_one(rng):
    for _ in range(50):
        vals = {f"algo{i}": float(rng.uniform(0, 100)) for i in range(4)}
        out = relative_cumulative_failures(vals)
        if any(v > 0 for v in vals.values()):
            assert max(out.values()) == 1.0
        assert all(0.0 <= v <= 1.0 for v in out.values())


def test_relative_failures_rejects_negative():
    with pytest.raises(ValueError):
        relative_cumulative_failures({"a": -1.0})


# --- matrix parsing ---------------------------------------------------------------


def test_parse_matrix_text():
    spec = parse_matrix_text(
        """
        # comparison matrix
        envs = goal_nav, survival_nav
        algos = ppo, ppo_buffer
        seeds = 0, 1, 2
        epochs = 5
        steps_per_epoch = 100
        eval_episodes = 7
        """
    )
    assert spec.envs == ["goal_nav", "survival_nav"]
    assert spec.algos == ["ppo", "ppo_buffer"]
    assert spec.seeds == [0, 1, 2]
    assert spec.ablation == "none"
    assert spec.eval_episodes == 7
    assert spec.overrides["epochs"] == "5"


def test_parse_matrix_validation():
    with pytest.raises(ValueError):
        parse_matrix_text("algos = ppo\n")  # no envs
    with pytest.raises(ValueError):
        parse_matrix_text("envs = goal_nav\nseeds = 0, 0\n")
    with pytest.raises(ValueError):
        parse_matrix_text("envs = goal_nav\nablation = bogus\n")


TINY_OVERRIDES = {
    "epochs": "2",
    "steps_per_epoch": "80",
    "horizon": "25",
    "pretrain_epochs": "0",
    "ppo.update_epochs": "1",
    "ppo.minibatch_size": "64",
}


def tiny_matrix(**kwargs):
    base = dict(
        envs=["goal_nav"],
        algos=["ppo", "ppo_buffer"],
        seeds=[0, 1],
        eval_episodes=3,
        overrides=dict(TINY_OVERRIDES),
    )
    base.update(kwargs)
    return MatrixSpec(**base)


# --- run_matrix ---------------------------------------------------------------------


def test_run_matrix_comparison_outputs(tmp_path):
    paths = run_matrix(tiny_matrix(), tmp_path)
    curves = (tmp_path / "learning_curves.csv").read_text().splitlines()
    assert curves[0].startswith("env,algo,seed,epoch")
    plain = [ln for ln in curves[1:] if ln.split(",")[2] in ("0", "1")]
    assert len(plain) == 2 * 2 * 2  # env x algo x seed x epochs
    means = [ln for ln in curves if ln.split(",")[2] == "mean"]
    stds = [ln for ln in curves if ln.split(",")[2] == "std"]
    assert len(means) == 2 * 2 and len(stds) == 2 * 2

    # aggregate mean rows equal the arithmetic mean of the per-seed rows
    for mean_row in means:
        f = mean_row.split(",")
        algo, epoch = f[1], f[3]
        seeds = [
            ln.split(",")
            for ln in plain
            if ln.split(",")[1] == algo and ln.split(",")[3] == epoch
        ]
        for col in (4, 5, 6):
            want = np.mean([float(s[col]) for s in seeds])
            assert abs(float(f[col]) - want) < 1e-12

    comp = (tmp_path / "comparison.csv").read_text().splitlines()
    assert comp[0] == "env,algo,final_reward,final_failure_rate,cum_failures,rel_cum_failures"
    assert len(comp) == 3
    rels = [float(ln.split(",")[-1]) for ln in comp[1:]]
    assert max(rels) == 1.0

    runs = (tmp_path / "runs.csv").read_text().splitlines()
    assert all(ln.split(",")[4] == "ok" for ln in runs[1:])
    assert "comparison" in paths


def test_run_matrix_byte_identical(tmp_path):
    run_matrix(tiny_matrix(seeds=[0]), tmp_path / "a")
    run_matrix(tiny_matrix(seeds=[0]), tmp_path / "b")
    for name in ("learning_curves.csv", "comparison.csv", "runs.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_matrix_ablation_axis(tmp_path):
    spec = tiny_matrix(
        algos=["ppo_buffer"],
        seeds=[0],
        ablation="k_exponent",
        k_settings=["brute", 0.5],
    )
    run_matrix(spec, tmp_path)
    rows = (tmp_path / "ablation.csv").read_text().splitlines()
    assert rows[0] == "env,setting,reward,failure_rate"
    settings = [ln.split(",")[1] for ln in rows[1:]]
    assert settings == ["brute", "N^0.5"]


def test_run_matrix_records_cell_failure(tmp_path):
    spec = tiny_matrix(envs=["goal_nav", "no_such_env"], seeds=[0])
    run_matrix(spec, tmp_path)
    rows = (tmp_path / "runs.csv").read_text().splitlines()[1:]
    statuses = {(r.split(",")[0], r.split(",")[4]) for r in rows}
    assert ("no_such_env", "error") in statuses
    assert ("goal_nav", "ok") in statuses


# --- CLI -------------------------------------------------------------------------


def test_cli_train_eval_roundtrip(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(
        [
            "train",
            "--env", "goal_nav",
            "--algo", "ppo_buffer",
            "--seed", "0",
            "--epochs", "2",
            "--steps-per-epoch", "80",
            "--horizon", "25",
            "--pretrain-epochs", "0",
            "--out", str(out),
        ]
    )
    assert rc == 0
    assert (out / "metrics.csv").exists()
    assert (out / "audit.csv").exists()
    assert (out / "checkpoint" / "params.npz").exists()
    assert (out / "checkpoint" / "buffer.txt").exists()

    rc = main(
        [
            "eval",
            "--checkpoint", str(out / "checkpoint"),
            "--episodes", "2",
            "--use-buffer",
        ]
    )
    assert rc == 0
    captured = capsys.readouterr()
    assert "failure_rate=" in captured.out


def test_cli_train_k_exponent_flag(tmp_path):
    rc = main(
        [
            "train",
            "--env", "goal_nav",
            "--algo", "ppo_buffer",
            "--epochs", "1",
            "--steps-per-epoch", "50",
            "--horizon", "20",
            "--pretrain-epochs", "0",
            "--k-exponent", "brute",
            "--out", str(tmp_path / "b"),
        ]
    )
    assert rc == 0


def test_cli_bench(tmp_path):
    matrix = tmp_path / "matrix.txt"
    matrix.write_text(
        "envs = goal_nav\nalgos = ppo\nseeds = 0\nepochs = 1\n"
        "steps_per_epoch = 60\nhorizon = 20\npretrain_epochs = 0\n"
        "eval_episodes = 2\nppo.update_epochs = 1\n"
    )
    rc = main(["bench", "--matrix", str(matrix), "--out", str(tmp_path / "out")])
    assert rc == 0
    assert (tmp_path / "out" / "comparison.csv").exists()


def test_cli_error_paths(tmp_path, capsys):
    rc = main(["train", "--env", "no_such_env", "--algo", "ppo", "--out", str(tmp_path)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err

    rc = main(["eval", "--checkpoint", str(tmp_path / "missing")])
    assert rc == 1


def test_load_matrix_file(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("envs = point_mass\nalgos = ppo\nseeds = 3\n")
    spec = load_matrix(path)
    assert spec.envs == ["point_mass"]
    assert spec.seeds == [3]

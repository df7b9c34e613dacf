import os

import pytest

from samro.cli import main
from samro.config import ExperimentConfig, config_diff, dump_config, load_config
from samro.sim.scenario import ConfigError

TINY = """
[experiment]
preset = desk
out = {out}

[pipeline]
n_offline = 12
offline_batches = 12
energy_pretrain_batches = 10
online_steps = 6
energy_period = 3
energy_refresh_batches = 3
test_steps = 4
"""


@pytest.mark.parametrize("preset", ["desk", "paper"])
def test_config_round_trip(tmp_path, preset):
    cfg = ExperimentConfig.from_preset(preset, alpha=0.3, seeds=(1, 2),
                                       td3={"gamma": 0.0}, energy={"sigma": 0.2})
    dump_config(cfg, tmp_path / "c.ini")
    assert config_diff(cfg, load_config(tmp_path / "c.ini")) == []


def test_config_rejects_unknown_keys(tmp_path):
    (tmp_path / "c.ini").write_text("[scenario]\nwarp_speed = 9\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.ini")


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        ExperimentConfig(baseline="magic")
    with pytest.raises(ConfigError):
        ExperimentConfig(alpha=-1.0)


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY.format(out=tmp_path / "runs"))
    return str(path), tmp_path / "runs"


def test_cli_errors_exit_nonzero(tiny, tmp_path, capsys):
    cfg, _ = tiny
    assert main(["collect", "--config", cfg, "--baseline", "default"]) == 2
    assert main(["finetune", "--config", cfg, "--seed", "4"]) == 2
    assert main(["evaluate", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["export", str(tmp_path / "nowhere")]) == 2
    err = capsys.readouterr().err
    assert "error [collect]" in err and "error [finetune]" in err and "error [config]" in err


@pytest.mark.slow
def test_staged_run_matches_one_shot_run(tiny, tmp_path):
    cfg, runs = tiny
    for stage in ("collect", "train-offline", "finetune", "evaluate"):
        assert main([stage, "--config", cfg, "--seed", "5"]) == 0
    staged = runs / "samro" / "seed5"
    for name in ("dataset.csv", "online_trace.csv", "traces.csv", "actions.csv", "summary.txt"):
        assert (staged / name).exists()
    assert main(["baseline", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "one")]) == 0
    one = tmp_path / "one" / "samro" / "seed5"

    def test_rows(path):
        return [line.split(",", 1)[1] for line in path.read_text().splitlines() if ",test," in line]

    assert test_rows(staged / "traces.csv") == test_rows(one / "traces.csv")
    assert main(["export", str(one), "--out", str(tmp_path / "cdf")]) == 0
    for name in os.listdir(tmp_path / "cdf"):
        assert (tmp_path / "cdf" / name).read_bytes() == (one / name).read_bytes()


def test_default_baseline_through_cli(tiny, capsys):
    cfg, runs = tiny
    assert main(["baseline", "--config", cfg, "--baseline", "default", "--seed", "0"]) == 0
    assert "default seed 0" in capsys.readouterr().out
    assert (runs / "default" / "seed0" / "cdf_tsl_slice1.csv").exists()


def test_sweep_runs_each_seed_in_a_subprocess(tiny, capsys):
    cfg, runs = tiny
    assert main(["sweep", "--config", cfg, "--baseline", "default", "--seeds", "0", "1"]) == 0
    rows = (runs / "default" / "sweep.csv").read_text().splitlines()
    assert rows[0] == "seed,mean_test_reward" and [r.split(",")[0] for r in rows[1:]] == ["0", "1"]
    assert "mean over 2 seeds" in capsys.readouterr().out

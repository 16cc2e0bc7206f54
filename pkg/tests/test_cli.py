import json
import subprocess
import sys

import pytest

from svodrive import agent
from svodrive.cli import main
from svodrive.config import TrainConfig, load_config
from svodrive.nn import load_checkpoint

TINY = ["--set", "hidden_width=8", "--set", "batch_size=4", "--set", "buffer_min_size=4"]


@pytest.fixture
def scenario_dir(tmp_path):
    out = tmp_path / "scen"
    assert main(["synth", "--out", str(out), "--test-count", "2", "--seed", "1"]) == 0
    return out


def test_ingest_track_file(tmp_path, tracks_csv):
    (tmp_path / "tracks").mkdir()
    (tmp_path / "tracks" / "vehicle_tracks_000.csv").write_text(tracks_csv)
    out = tmp_path / "out"
    assert main(["ingest", "--tracks", str(tmp_path / "tracks"), "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["manifest.json", "scenario_0_1_2.json"]
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(["ingest", "--tracks", str(tmp_path / "tracks"), "--out", str(out)]) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_ingest_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["ingest", "--tracks", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 2
    assert "no tracks found" in capsys.readouterr().err


def test_ingest_malformed_row(tmp_path, capsys, tracks_csv):
    lines = tracks_csv.splitlines(keepends=True)
    lines[5] = "1,6,600,car,x,0,0,0,0,4.5,1.8\n"
    (tmp_path / "bad.csv").write_text("".join(lines))
    assert main(["ingest", "--tracks", str(tmp_path / "bad.csv"), "--out", str(tmp_path / "o")]) == 2
    assert "line 6" in capsys.readouterr().err


def test_synth_writes_split(scenario_dir):
    manifest = json.loads((scenario_dir / "manifest.json").read_text())
    assert len(manifest["train"]) == 3 and len(manifest["test"]) == 2


def test_train_bc_writes_checkpoint_and_log(tmp_path, scenario_dir, capsys):
    out = tmp_path / "bc"
    code = main(["train", "--scenarios", str(scenario_dir), "--model", "bc", "--epochs", "10",
                 "--out", str(out)] + TINY)
    assert code == 0
    assert (out / "checkpoint.ckpt").exists()
    assert len(agent.read_log(out / "train_log.csv")) == 10
    assert "final BC loss" in capsys.readouterr().out


def test_train_zero_episodes_is_initialization(tmp_path, scenario_dir):
    out = tmp_path / "sac"
    assert main(["train", "--scenarios", str(scenario_dir), "--episodes", "0", "--seed", "5",
                 "--out", str(out)] + TINY) == 0
    arrays, meta = load_checkpoint(out / "checkpoint.ckpt")
    fresh = agent.AgentEnsemble(load_config(out / "config.json"), agent.make_rngs(5)["init"])
    for name, net in fresh.networks().items():
        for i, p in enumerate(net.params):
            assert (arrays[f"{name}.{i}"] == p).all()
    assert meta["model"] == "sacer-svo" and meta["seed"] == 5


def test_train_is_deterministic_and_config_round_trips(tmp_path, scenario_dir):
    args = ["train", "--scenarios", str(scenario_dir), "--episodes", "3", "--model", "sacer-v"] + TINY
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    ck = (tmp_path / "a" / "checkpoint.ckpt").read_bytes()
    assert ck == (tmp_path / "b" / "checkpoint.ckpt").read_bytes()
    assert main(["train", "--scenarios", str(scenario_dir), "--model", "sacer-v",
                 "--config", str(tmp_path / "a" / "config.json"), "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "checkpoint.ckpt").read_bytes() == ck
    assert (tmp_path / "c" / "train_log.csv").read_bytes() == (tmp_path / "a" / "train_log.csv").read_bytes()


def test_flag_precedence(tmp_path, scenario_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"episodes": 7, "hidden_width": 8, "seed": 3}))
    out = tmp_path / "p"
    assert main(["train", "--scenarios", str(scenario_dir), "--config", str(cfg), "--episodes", "1",
                 "--set", "batch_size=4", "--set", "buffer_min_size=4", "--out", str(out)]) == 0
    eff = load_config(out / "config.json")
    assert (eff.episodes, eff.hidden_width, eff.seed, eff.batch_size) == (1, 8, 3, 4)
    assert eff.lr_q == TrainConfig().lr_q


@pytest.mark.parametrize("bad", [["--set", "gamma=2"], ["--set", "no_such_key=1"], ["--set", "oops"]])
def test_invalid_config_exits_3(tmp_path, scenario_dir, bad):
    code = main(["train", "--scenarios", str(scenario_dir), "--out", str(tmp_path / "x")] + bad)
    assert code == 3


def test_missing_scenarios_exit_4(tmp_path):
    assert main(["train", "--scenarios", str(tmp_path / "nope"), "--out", str(tmp_path / "x")]) == 4


def test_evaluate_report_and_curves(tmp_path, scenario_dir, capsys):
    out = tmp_path / "sac"
    assert main(["train", "--scenarios", str(scenario_dir), "--episodes", "2", "--out", str(out)] + TINY) == 0
    report = tmp_path / "report.json"
    curves = tmp_path / "curves"
    assert main(["evaluate", "--checkpoint", str(out / "checkpoint.ckpt"), "--scenarios",
                 str(scenario_dir), "--out", str(report), "--st-curves", str(curves)]) == 0
    data = json.loads(report.read_text())
    assert data["total"] == 2 and data["split"] == "test" and data["model"] == "sacer-svo"
    assert 0.0 <= data["priority_accuracy"] <= 1.0
    assert len(list(curves.glob("st_*.csv"))) == 2
    row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(row) == {"model", "split", "priority_accuracy", "episode_length_error", "collision_times"}
    again = tmp_path / "again.json"
    main(["evaluate", "--checkpoint", str(out / "checkpoint.ckpt"), "--scenarios",
          str(scenario_dir), "--out", str(again)])
    assert again.read_bytes() == report.read_bytes()


def test_evaluate_missing_or_corrupt_checkpoint(tmp_path, scenario_dir, capsys):
    assert main(["evaluate", "--checkpoint", str(tmp_path / "none.ckpt"), "--scenarios",
                 str(scenario_dir), "--out", str(tmp_path / "r.json")]) == 5
    out = tmp_path / "bc"
    main(["train", "--scenarios", str(scenario_dir), "--model", "bc", "--epochs", "1",
          "--out", str(out)] + TINY)
    ck = out / "checkpoint.ckpt"
    data = bytearray(ck.read_bytes())
    data[-1] ^= 0x01
    ck.write_bytes(bytes(data))
    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", str(ck), "--scenarios", str(scenario_dir),
                 "--out", str(tmp_path / "r.json")]) == 5
    assert "checksum" in capsys.readouterr().err


def test_plot_reward_curve(tmp_path, scenario_dir):
    out = tmp_path / "sac"
    main(["train", "--scenarios", str(scenario_dir), "--episodes", "4", "--out", str(out)] + TINY)
    curve = tmp_path / "curve.csv"
    assert main(["plot", "--log", str(out / "train_log.csv"), "--window", "2", "--out", str(curve)]) == 0
    lines = curve.read_text().splitlines()
    assert lines[0] == "episode,avg_step_reward_ma2" and len(lines) == 5
    assert main(["plot", "--log", str(tmp_path / "missing.csv"), "--out", str(curve)]) == 5


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "svodrive", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("ingest", "synth", "train", "evaluate", "plot"):
        assert cmd in proc.stdout

import json
import os

import pytest

from qmeta.cli import main
from qmeta.config import ConfigError, dump_config, parse_config
from qmeta.harness import chunks, manifest_path, pool_map
from qmeta.metatrain import TrainingConfig
from qmeta.seeding import PRNG_NAME, derive_subseed


def test_subseed_properties():
    assert derive_subseed(1, 2, "es") == derive_subseed(1, 2, "es")
    assert derive_subseed(1, 2, "es") != derive_subseed(1, 2, "agent")
    seeds = {derive_subseed(0, i, "es") for i in range(1_000_000)}
    assert len(seeds) == 1_000_000


@pytest.mark.parametrize("n", [1, 2, 3])
def test_config_round_trip(n):
    cfg = TrainingConfig.preset(n, seed=11, episodes=7)
    assert parse_config(dump_config(cfg)) == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        parse_config("[training]\nn_qubit = 2\n")
    with pytest.raises(ConfigError):
        parse_config("[es]\nk = 2\n")
    with pytest.raises(ConfigError):
        parse_config("[training]\nk = many\n")


def test_chunks_and_pool(monkeypatch):
    assert chunks(range(7), 3) == [[0, 1, 2], [3, 4, 5], [6]]
    monkeypatch.setenv("QMETA_THREADS", "1")
    assert pool_map(abs, [-1, 2, -3]) == [1, 2, 3]


def run(tmp_path, *argv):
    cwd = os.getcwd()
    os.chdir(tmp_path)
    try:
        return main(list(argv))
    finally:
        os.chdir(cwd)


def test_learn_twice_is_byte_identical(tmp_path):
    args = ["learn", "--qubits", "1", "--c-target", "100", "--instances", "5", "--action", "0.1,0.01",
            "--seed", "7"]
    assert run(tmp_path, *args, "--out", "a.jsonl") == 0
    assert run(tmp_path, *args, "--out", "b.jsonl") == 0
    a = (tmp_path / "a.jsonl").read_text().replace("a.jsonl.manifest", "X")
    b = (tmp_path / "b.jsonl").read_text().replace("b.jsonl.manifest", "X")
    assert a == b
    man = json.loads(manifest_path(tmp_path / "a.jsonl").read_text())
    assert man["prng"] == PRNG_NAME and man["master_seed"] == 7 and man["command"] == "learn"


def test_replay_reproduces_output(tmp_path):
    assert run(tmp_path, "learn", "--qubits", "1", "--c-target", "50", "--instances", "3", "--action",
               "1,1", "--out", "o.jsonl") == 0
    first = (tmp_path / "o.jsonl").read_bytes()
    assert run(tmp_path, "--replay", "o.jsonl.manifest.json") == 0
    assert (tmp_path / "o.jsonl").read_bytes() == first


def test_cli_errors(tmp_path, capsys):
    assert run(tmp_path, "learn", "--qubits", "1", "--bogus") != 0
    assert run(tmp_path, "learn", "--qubits", "1") != 0
    assert run(tmp_path, "train-agent", "--config", "missing.ini") != 0
    (tmp_path / "bad.ini").write_text("[training]\nlearning_rate = 1\n")
    assert run(tmp_path, "train-agent", "--config", "bad.ini") != 0


def test_train_resume_mismatch(tmp_path):
    base = ["train-agent", "--episodes", "1", "--instances", "2", "--t-max", "30", "--c-target", "20",
            "--updates-per-episode", "1", "--out", "run"]
    assert run(tmp_path, *base) == 0
    (tmp_path / "other.ini").write_text("[training]\nsigmas = 0.5, 0.05\netas = 1.0\n")
    assert run(tmp_path, "train-agent", "--config", "other.ini", "--episodes", "2", "--resume",
               "run/checkpoint.json", "--out", "run") != 0


def test_state_agent_and_fit(tmp_path):
    assert run(tmp_path, "state", "gen", "shen-castan", "--out", "sc.json") == 0
    assert json.loads((tmp_path / "sc.json").read_text())["n_qubits"] == 5
    assert run(tmp_path, "train-agent", "--episodes", "1", "--instances", "2", "--t-max", "30",
               "--c-target", "20", "--updates-per-episode", "1", "--out", "run") == 0
    assert run(tmp_path, "learn", "--qubits", "1", "--agent", "run/checkpoint.json", "--instances", "2",
               "--c-target", "20", "--t-max", "50", "--out", "ag.jsonl") == 0
    for ct in ("10", "100"):
        assert run(tmp_path, "learn", "--qubits", "1", "--action", "1,1", "--instances", "4", "--c-target", ct,
                   "--out", f"s{ct}.jsonl") == 0
    merged = (tmp_path / "s10.jsonl").read_text() + (tmp_path / "s100.jsonl").read_text()
    (tmp_path / "all.jsonl").write_text(merged)
    assert run(tmp_path, "fit-scaling", "--input", "all.jsonl", "--out", "fit.txt") == 0
    assert "beta" in (tmp_path / "fit.txt").read_text()


def test_baseline_grid_and_qst(tmp_path):
    assert run(tmp_path, "baseline-grid", "--qubits", "1", "--c-target", "20", "--instances", "2",
               "--t-max", "40", "--out", "g.csv") == 0
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert len(lines) == 17
    assert run(tmp_path, "qst", "--shots", "100", "1000", "--instances", "3", "--out", "q.csv") == 0
    assert len((tmp_path / "q.csv").read_text().splitlines()) == 7
    assert run(tmp_path, "fit-scaling", "--input", "q.csv", "--out", "qf.txt") == 0

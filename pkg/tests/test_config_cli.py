import io
import sys

import pytest

from fedemoji.cli import main
from fedemoji.config import ConfigError, RunConfig, dump_config, loads_config, parse_overrides

TINY = """\
[data]
num_emoji = 4
num_sentences = 600
num_clients = 20
sentences_per_client = 30
emoji_fraction = 0.2
vocab_size = 60
holdout_fraction = 0.25

[model]
embed_dim = 4
hidden_dim = 4
num_layers = 1

[federation]
devices_per_round = 3
rounds = 4
eval_every = 2
eval_clients = 3

[server]
server_opt = nesterov

[pretrain]
pretrain_rounds = 2

[central]
central_epochs = 2
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


# -- config -------------------------------------------------------------------


def test_empty_config_is_defaults():
    assert loads_config("") == RunConfig()


def test_alpha_key():
    assert loads_config("alpha = 0.7\n").alpha == 0.7


def test_range_error_names_key():
    with pytest.raises(ConfigError, match="devices_per_round"):
        loads_config("devices_per_round = -1")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        loads_config("colour = red")


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        loads_config("seed = 1\nthis is not a pair\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError):
        loads_config("[model]\nembed_dim = 3\n[client]\nembed_dim = 4\n")


def test_bad_number_and_choice():
    with pytest.raises(ConfigError, match="rounds"):
        loads_config("rounds = many")
    with pytest.raises(ConfigError, match="server_opt"):
        loads_config("server_opt = adam")


def test_sections_and_comments():
    cfg = loads_config("# top\nseed = 3\n[client]\nbatch_size = 7  # inline\n")
    assert cfg.seed == 3 and cfg.batch_size == 7


def test_dump_round_trips():
    cfg = parse_overrides({"alpha": "0.25", "out": "x/y", "skew": "0.1", "rounds": "3"})
    assert loads_config(dump_config(cfg)) == cfg


# -- cli ----------------------------------------------------------------------


def test_synth_and_vocab(tiny, tmp_path):
    out = tmp_path / "o"
    assert run_cli("synth-corpus", "--config", tiny, "--out", out) == 0
    assert len((out / "corpus.txt").read_text(encoding="utf-8").splitlines()) == 600
    assert len((out / "inventory.txt").read_text(encoding="utf-8").split()) == 4
    assert run_cli("build-vocab", "--config", tiny, "--out", out,
                   "--set", f"corpus={out / 'corpus.txt'}",
                   "--set", f"inventory={out / 'inventory.txt'}") == 0
    words = (out / "vocab.txt").read_text(encoding="utf-8").splitlines()
    assert words[:2] == ["<oov>", "<pad>"] and len(words) <= 60


def test_train_fed_is_reproducible_serial_and_parallel(tiny, tmp_path):
    outs = [tmp_path / n for n in ("a", "b", "c")]
    assert run_cli("train-fed", "--config", tiny, "--out", outs[0]) == 0
    assert run_cli("train-fed", "--config", tiny, "--out", outs[1]) == 0
    assert run_cli("train-fed", "--config", tiny, "--out", outs[2], "--set", "workers=3") == 0
    for name in ("round_0.ckpt", "round_2.ckpt", "round_4.ckpt", "metrics.tsv"):
        ref = (outs[0] / name).read_bytes()
        assert (outs[1] / name).read_bytes() == ref
        assert (outs[2] / name).read_bytes() == ref


def test_written_config_reproduces_run(tiny, tmp_path):
    first = tmp_path / "first"
    assert run_cli("train-fed", "--config", tiny, "--out", first, "--seed", "5") == 0
    again = tmp_path / "again"
    assert run_cli("train-fed", "--config", first / "config.ini", "--out", again) == 0
    assert (again / "round_4.ckpt").read_bytes() == (first / "round_4.ckpt").read_bytes()
    assert (again / "metrics.tsv").read_bytes() == (first / "metrics.tsv").read_bytes()


def test_seed_changes_run(tiny, tmp_path):
    run_cli("train-fed", "--config", tiny, "--out", tmp_path / "s0")
    run_cli("train-fed", "--config", tiny, "--out", tmp_path / "s1", "--seed", "1")
    assert (tmp_path / "s0" / "round_4.ckpt").read_bytes() != \
        (tmp_path / "s1" / "round_4.ckpt").read_bytes()


def test_resume(tiny, tmp_path):
    full, part = tmp_path / "full", tmp_path / "part"
    assert run_cli("train-fed", "--config", tiny, "--out", full) == 0
    assert run_cli("train-fed", "--config", tiny, "--out", part, "--set", "rounds=2") == 0
    assert run_cli("train-fed", "--config", tiny, "--out", part, "--resume") == 0
    assert (part / "round_4.ckpt").read_bytes() == (full / "round_4.ckpt").read_bytes()
    assert (part / "metrics.tsv").read_bytes() == (full / "metrics.tsv").read_bytes()


def test_pretrain_then_train(tiny, tmp_path, capsys):
    out = tmp_path / "lm"
    assert run_cli("pretrain-lm", "--config", tiny, "--out", out) == 0
    assert "next-word accuracy" in capsys.readouterr().out
    assert run_cli("train-fed", "--config", tiny, "--out", tmp_path / "fed",
                   "--set", f"pretrained={out / 'lm.ckpt'}") == 0


def test_train_central(tiny, tmp_path):
    out = tmp_path / "central"
    assert run_cli("train-central", "--config", tiny, "--out", out) == 0
    assert (out / "central_2.ckpt").exists()
    assert len((out / "metrics.tsv").read_text().splitlines()) == 2


def test_eval_and_predict(tiny, tmp_path, capsys, monkeypatch):
    out = tmp_path / "m"
    assert run_cli("train-fed", "--config", tiny, "--out", out) == 0
    ckpt = out / "round_4.ckpt"
    capsys.readouterr()
    assert run_cli("eval", "--config", tiny, "--out", out, "--set", f"checkpoint={ckpt}") == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header.split("\t")[0] == "accuracy_at_1" and len(row.split("\t")) == 4

    monkeypatch.setattr(sys, "stdin", io.StringIO("congrats to you\n\n"))
    assert run_cli("predict", "--config", tiny, "--out", out, "--set", f"checkpoint={ckpt}",
                   "--set", "top_k=2") == 0
    first, second = capsys.readouterr().out.splitlines()
    assert first.startswith("triggered=") and first.count("raw=") == 2
    assert second == "triggered=0\t(empty)"


def test_single_value_sweep_matches_plain_run(tiny, tmp_path, capsys):
    assert run_cli("train-fed", "--config", tiny, "--out", tmp_path / "plain") == 0
    capsys.readouterr()
    assert run_cli("sweep", "--config", tiny, "--out", tmp_path / "sweep",
                   "--set", "sweep_axis=B", "--set", "sweep_values=50") == 0
    table = (tmp_path / "sweep" / "sweep.tsv").read_text().splitlines()
    assert table[0] == "B\taccuracy_at_1\tauc" and len(table) == 2
    assert (tmp_path / "sweep" / "B=50" / "round_4.ckpt").read_bytes() == \
        (tmp_path / "plain" / "round_4.ckpt").read_bytes()


def test_config_errors_exit_1(tiny, tmp_path, capsys):
    assert run_cli("train-fed", "--config", tiny, "--out", tmp_path, "--set", "alpha=-1") == 1
    assert run_cli("train-fed", "--config", tmp_path / "missing.ini") == 1
    assert run_cli("eval", "--config", tiny, "--out", tmp_path) == 1
    assert run_cli("eval", "--config", tiny, "--out", tmp_path,
                   "--set", f"checkpoint={tmp_path / 'nope.ckpt'}") == 1
    assert "checkpoint" in capsys.readouterr().err


def test_runtime_failure_exits_2(tiny, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    assert run_cli("eval", "--config", tiny, "--out", tmp_path, "--set", f"checkpoint={bad}") == 2

"""Flag parsing, config-file precedence, artifact layout, exit codes."""

import json

import numpy as np
import pytest

from lrad import ConfigError
from lrad.cli import main, parse_and_validate

FAST = [
    "--epochs", "1", "--batch", "16", "--latent-dim", "16", "--base-width", "8",
    "--synth-normals", "110", "--synth-anomalies", "10", "--train-fraction", "0.9",
]


def run_cli(*args):
    return main([str(a) for a in args])


class TestParseAndValidate:
    def test_defaults_filled(self, tmp_path):
        config = parse_and_validate(["train", "--data", "synth", "--seed", "7",
                                     "--out", str(tmp_path)])
        assert config.command == "train"
        assert config.epochs == 20
        assert config.batch == 64
        assert config.lr == 0.002
        assert config.seed == 7
        assert config.parse_weights().wa == 5.0

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"epochs": 10, "seed": 3}))
        config = parse_and_validate(
            ["train", "--data", "synth", "--config", str(cfg), "--epochs", "20"]
        )
        assert config.epochs == 20
        assert config.seed == 3

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"epochz": 10}))
        with pytest.raises(ConfigError, match="unknown config keys: epochz"):
            parse_and_validate(["train", "--data", "synth", "--config", str(cfg)])

    def test_missing_data_path(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_and_validate(
                ["train", "--data", "mnist", "--images", str(tmp_path / "nope.idx"),
                 "--labels", str(tmp_path / "nope2.idx"), "--held-class", "0"]
            )

    def test_bad_weights_string(self):
        with pytest.raises(ConfigError, match="four comma-separated"):
            parse_and_validate(["train", "--data", "synth", "--weights", "1,2,3"])

    def test_held_class_required_for_real_data(self, tmp_path):
        (tmp_path / "b.bin").write_bytes(bytes([1]) + bytes(3072))
        with pytest.raises(ConfigError, match="--held-class"):
            parse_and_validate(["train", "--data", "cifar10", "--dir", str(tmp_path)])


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        code = run_cli("train", "--data", "mnist", "--images", tmp_path / "missing.idx",
                       "--labels", tmp_path / "missing2.idx", "--held-class", "0")
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_data_error_is_3(self, tmp_path, capsys):
        bad = tmp_path / "data"
        bad.mkdir()
        (bad / "data_batch_1.bin").write_bytes(b"\x00" * 100)
        code = run_cli("train", "--data", "cifar10", "--dir", bad, "--held-class", "0",
                       "--out", tmp_path / "out")
        assert code == 3
        assert "data error" in capsys.readouterr().err

    def test_held_class_absent_is_2(self, tmp_path, capsys):
        code = run_cli("train", "--data", "synth", "--held-class", "12",
                       "--out", tmp_path / "out", *FAST)
        assert code == 2
        assert "not present" in capsys.readouterr().err


class TestSynthCommand:
    def test_writes_idx_fixture(self, tmp_path):
        out = tmp_path / "fixture"
        assert run_cli("synth", "--synth-normals", "30", "--synth-anomalies", "6",
                       "--seed", "1", "--out", out) == 0
        from lrad import read_idx

        data = read_idx(out / "images.idx", out / "labels.idx")
        assert len(data) == 36
        assert sorted(set(data.labels)) == [0, 1]
        assert (out / "resolved_config.json").exists()


class TestTrainEvalPipeline:
    def test_train_then_eval_artifacts(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli("train", "--data", "synth", "--seed", "5", "--out", out, *FAST) == 0
        assert (out / "model.lrad").exists()
        history = (out / "history.csv").read_text().splitlines()
        assert history[0] == "iteration,irec,adv_g,adv_d,zrec,rank,total"
        assert len(history) > 1

        out_eval = tmp_path / "eval"
        assert run_cli("eval", "--data", "synth", "--seed", "5",
                       "--checkpoint", out / "model.lrad", "--out", out_eval, *FAST) == 0
        for name in ("scores.csv", "roc.csv", "latent3d.csv", "resolved_config.json"):
            assert (out_eval / name).exists(), name

    def test_eval_untrained_model_is_valid(self, tmp_path, capsys):
        out = tmp_path / "fresh"
        assert run_cli("eval", "--data", "synth", "--seed", "2", "--out", out, *FAST) == 0
        printed = capsys.readouterr().out
        assert "latent AUC:" in printed
        value = float(printed.split("latent AUC:")[1].strip())
        assert 0.0 <= value <= 1.0
        roc = (out / "roc.csv").read_text().splitlines()
        assert roc[0] == "fpr,tpr,threshold"
        assert len(roc) > 2

    def test_printed_auc_matches_rank_auc_of_scores_csv(self, tmp_path, capsys):
        import csv as csvmod

        from lrad import auc as rank_auc

        out = tmp_path / "fresh2"
        assert run_cli("eval", "--data", "synth", "--seed", "4", "--out", out, *FAST) == 0
        printed = float(capsys.readouterr().out.split("latent AUC:")[1].strip())
        rows = list(csvmod.DictReader((out / "scores.csv").open()))
        flags = [row["anomaly_flag"] == "1" for row in rows]
        scores = [float(row["score_latent"]) for row in rows]
        assert abs(printed - rank_auc(flags, scores)) <= 1e-12

    def test_deterministic_reruns_bitwise(self, tmp_path):
        args = ["--data", "synth", "--seed", "9", "--deterministic", *FAST]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run_cli("train", "--out", out_a, *args) == 0
        assert run_cli("train", "--out", out_b, *args) == 0
        assert (out_a / "history.csv").read_bytes() == (out_b / "history.csv").read_bytes()

        eval_a, eval_b = tmp_path / "ea", tmp_path / "eb"
        assert run_cli("eval", "--checkpoint", out_a / "model.lrad",
                       "--out", eval_a, *args) == 0
        assert run_cli("eval", "--checkpoint", out_b / "model.lrad",
                       "--out", eval_b, *args) == 0
        assert (eval_a / "scores.csv").read_bytes() == (eval_b / "scores.csv").read_bytes()

    def test_rerun_from_resolved_config(self, tmp_path):
        out_a = tmp_path / "a"
        assert run_cli("train", "--data", "synth", "--seed", "6", "--out", out_a, *FAST) == 0
        out_b = tmp_path / "b"
        assert run_cli("train", "--config", out_a / "resolved_config.json",
                       "--out", out_b) == 0
        assert (out_a / "history.csv").read_bytes() == (out_b / "history.csv").read_bytes()

    def test_score_command_whole_dataset(self, tmp_path):
        out = tmp_path / "scores"
        assert run_cli("score", "--data", "synth", "--seed", "3", "--held-class", "1",
                       "--out", out, *FAST) == 0
        lines = (out / "scores.csv").read_text().splitlines()
        assert len(lines) == 1 + 120

import json
from pathlib import Path

import numpy as np
import pytest

from aidgn.cli import main
from aidgn.config import load_config, parse_config
from aidgn.errors import ConfigError

FAST_CONFIG = {
    "task": {
        "latent_dim": 4,
        "n_classes": 3,
        "n_domains": 2,
        "kappa_gen": 25.0,
        "source_means": [2.0, 4.0],
        "target_lower": 6.0,
        "target_width": 4.0,
        "samples_per_class": 40,
        "observation": "rotation",
        "violation": {"kind": "none"},
        "seed": 1,
    },
    "model": {"hidden_dims": [8], "latent_dim": 4, "activation": "softplus"},
    "train": {"learning_rate": 5e-3, "iterations": 120, "batch_per_domain": 16,
              "seed": 1},
    "loss": {"mode": "aidgn", "kappa": 12.0, "gamma_delta": 0.01, "beta_rw": 0.3,
             "eta": 0.03, "mu_star": 4.0},
    "io": {"out_dir": "unused", "eval_interval": 40, "figures": False},
}


def write_config(tmp_path, overrides=None, **io):
    doc = json.loads(json.dumps(FAST_CONFIG))
    if overrides:
        for dotted, value in overrides.items():
            section, key = dotted.split(".", 1)
            doc[section][key] = value
    doc["io"].update(io)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


class TestConfigValidation:
    def test_parses_defaults(self):
        cfg = parse_config({})
        assert cfg.mode == "aidgn"
        assert cfg.loss.kappa == 110.0
        assert cfg.loss.gamma_delta == 0.001
        assert cfg.loss.mu_star == 410.0

    def test_unknown_key_rejected_with_path(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"task": {"kapa_gen": 3.0}})
        assert "task.kapa_gen" in str(err.value)

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"tsak": {}})

    def test_invalid_source_means(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"task": {"n_domains": 2, "source_means": [1.0, 0.0]}})
        assert "task.source_means" in str(err.value)

    def test_wrong_length_source_means(self):
        with pytest.raises(ConfigError):
            parse_config({"task": {"n_domains": 3, "source_means": [1.0, 2.0]}})

    def test_bad_mode(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"loss": {"mode": "dro"}})
        assert "loss.mode" in str(err.value)

    def test_with_seed_replaces_both(self):
        cfg = parse_config({})
        cfg2 = cfg.with_seed(42)
        assert cfg2.task.seed == 42 and cfg2.train.seed == 42
        assert cfg.task.seed == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")


class TestCliGen:
    def test_writes_expected_files(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "data"
        assert main(["gen", "--config", str(cfg), "--out", str(out)]) == 0
        manifest = json.loads(capsys.readouterr().out)
        names = sorted(manifest["files"])
        assert names == ["source_0.csv", "source_1.csv", "target.csv"]
        for meta in manifest["files"].values():
            assert meta["rows"] == 40 * 3
        for name in names:
            rows = (out / name).read_text().splitlines()
            assert len(rows) == 1 + 40 * 3

    def test_deterministic_checksums(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        main(["gen", "--config", str(cfg), "--out", str(tmp_path / "a")])
        m1 = json.loads(capsys.readouterr().out)
        main(["gen", "--config", str(cfg), "--out", str(tmp_path / "b")])
        m2 = json.loads(capsys.readouterr().out)
        assert m1["files"] == m2["files"]

    def test_invalid_config_exit_2_names_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path, overrides={"task.source_means": [0.0, 2.0]})
        out = tmp_path / "never"
        assert main(["gen", "--config", str(cfg), "--out", str(out)]) == 2
        assert "task.source_means" in capsys.readouterr().err
        assert not out.exists()


class TestCliTrainEval:
    def test_train_writes_run_files(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        data = tmp_path / "data"
        run = tmp_path / "run"
        main(["gen", "--config", str(cfg), "--out", str(data)])
        capsys.readouterr()
        rc = main(["train", "--config", str(cfg), "--data", str(data),
                   "--out", str(run)])
        assert rc == 0
        summary = json.loads((run / "summary.json").read_text())
        assert summary["mode"] == "aidgn"
        assert 0.0 <= summary["val_acc"] <= 1.0
        assert summary["target_acc"] is not None
        metrics = (run / "metrics.jsonl").read_text().splitlines()
        assert len(metrics) == 120 // 40
        steps = [json.loads(line)["step"] for line in metrics]
        assert steps == sorted(steps)
        assert (run / "checkpoint.npz").exists()
        assert (run / "checkpoint_selected.npz").exists()

    def test_train_rerun_identical_metrics(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        data = tmp_path / "data"
        main(["gen", "--config", str(cfg), "--out", str(data)])
        capsys.readouterr()
        main(["train", "--config", str(cfg), "--data", str(data),
              "--out", str(tmp_path / "r1")])
        main(["train", "--config", str(cfg), "--data", str(data),
              "--out", str(tmp_path / "r2")])

        def strip_wall(path):
            out = []
            for line in Path(path).read_text().splitlines():
                rec = json.loads(line)
                rec.pop("wall_s", None)
                out.append(json.dumps(rec))
            return out

        assert strip_wall(tmp_path / "r1/metrics.jsonl") == strip_wall(
            tmp_path / "r2/metrics.jsonl"
        )

    def test_train_missing_data_exit_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        rc = main(["train", "--config", str(cfg), "--data", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "run")])
        assert rc == 2

    def test_eval_checkpoint(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        data = tmp_path / "data"
        run = tmp_path / "run"
        main(["gen", "--config", str(cfg), "--out", str(data)])
        main(["train", "--config", str(cfg), "--data", str(data), "--out", str(run)])
        capsys.readouterr()
        rc = main(["eval", "--checkpoint", str(run / "checkpoint_selected.npz"),
                   "--data", str(data / "target.csv"), "--config", str(cfg)])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n"] == 120
        assert 0.0 <= report["accuracy"] <= 1.0


class TestCliCompare:
    def test_row_bookkeeping_and_pairing(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out_csv = tmp_path / "cmp" / "compare.csv"
        rc = main(["compare", "--config", str(cfg), "--seeds", "0,1,2",
                   "--out", str(out_csv)])
        assert rc == 0
        lines = out_csv.read_text().splitlines()
        # header + 6 run rows + 2 summary rows + 1 win-count row
        assert len(lines) == 1 + 6 + 2 + 1
        manifest = json.loads((out_csv.parent / "compare_manifest.json").read_text())
        for seed, entry in manifest["seeds"].items():
            assert entry["arm_data_checksums"]["aidgn"] == entry[
                "arm_data_checksums"
            ]["erm"]

    def test_bad_seed_list_exit_2(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["compare", "--config", str(cfg), "--seeds", "a,b"]) == 2


class TestCliVerify:
    def test_bad_suite_exit_2(self):
        assert main(["verify", "--suite", "bogus"]) == 2

    def test_geometry_suite_passes(self, capsys):
        assert main(["verify", "--suite", "geometry"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_tolerance_override_can_fail(self, capsys):
        assert main(["verify", "--suite", "geometry", "--tol",
                     "geometry.roundtrip.max_rel_err=1e-30"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_bad_tol_syntax_exit_2(self):
        assert main(["verify", "--suite", "geometry", "--tol", "oops"]) == 2

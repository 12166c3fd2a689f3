import json

import numpy as np
import pytest

import polymap as pm
from polymap import cli, harness
from polymap.errors import ConfigError, EmptyDataError, MissingBaselineError

TINY_SYNTH = {
    "num_languages": 2,
    "feature_dim": 6,
    "phones_per_language": 4,
    "senones_per_phone": 2,
    "shared_phone_fraction": 1.0,
    "frames_per_senone": 40,
    "cluster_spread": 0.2,
}

TINY_TRAIN = {"initial_lr": 0.08, "epochs": 4, "batch_size": 32}
TINY_MT = {"initial_lr": 0.02, "epochs": 4, "batch_size": 8}


def tiny_config(tmp_path, method="baseline", **overrides):
    raw = {
        "version": 1,
        "method": method,
        "target": "lang0",
        "sources": [] if method == "baseline" else ["lang1"],
        "seed": 3,
        "output_dir": str(tmp_path / "run"),
        "corpus": {"synth": dict(TINY_SYNTH)},
        "hidden_dims": [16, 16],
        "train": dict(TINY_TRAIN),
        "mt_train": dict(TINY_MT),
        "finetune": {"epochs": 2, "lr": 0.0008},
    }
    raw.update(overrides)
    return raw


def write_config(tmp_path, raw, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


class TestConfig:
    def test_load_and_defaults(self, tmp_path):
        path = write_config(tmp_path, tiny_config(tmp_path))
        cfg = harness.load_experiment_config(path)
        assert cfg.method == "baseline"
        assert cfg.split_fractions == {"train": 0.8, "dev": 0.1, "test": 0.1}
        assert cfg.finetune_epochs == 2
        assert cfg.train.epochs == 4
        assert cfg.mt_train.loss_mode == "masked"

    def test_seed_override(self, tmp_path):
        path = write_config(tmp_path, tiny_config(tmp_path))
        assert harness.load_experiment_config(path, seed=99).seed == 99

    def test_relative_paths_resolve_against_config(self, tmp_path):
        raw = tiny_config(tmp_path, corpus={"path": "data/corpus.npz"}, output_dir="out")
        cfg = harness.experiment_config_from_dict(raw, tmp_path)
        assert cfg.corpus_path == tmp_path / "data/corpus.npz"
        assert cfg.output_dir == tmp_path / "out"

    @pytest.mark.parametrize(
        "mutate",
        [
            {"method": "nonsense"},
            {"sources": ["lang0"], "method": "senone-map"},
            {"sources": ["lang1", "lang1"], "method": "senone-map"},
            {"sources": [], "method": "senone-map"},
            {"corpus": {}},
            {"corpus": {"path": "x.npz", "synth": dict(TINY_SYNTH)}},
            {"split": {"train": 0.5, "dev": 0.1, "test": 0.1}},
            {"hidden_dims": [0]},
            {"finetune": {"epochs": -1}},
            {"bogus_key": 1},
            {"train": {"bogus": 2}},
            {"version": 99},
        ],
    )
    def test_rejected_configs(self, tmp_path, mutate):
        raw = tiny_config(tmp_path)
        raw.update(mutate)
        with pytest.raises(ConfigError):
            harness.experiment_config_from_dict(raw, tmp_path)

    def test_manual_map_requires_files(self, tmp_path):
        raw = tiny_config(tmp_path, method="manual-map", sources=["lang1"])
        with pytest.raises(ConfigError):
            harness.experiment_config_from_dict(raw, tmp_path)

    def test_config_hash_ignores_seed_and_output(self, tmp_path):
        a = harness.experiment_config_from_dict(tiny_config(tmp_path, seed=1), tmp_path)
        b = harness.experiment_config_from_dict(
            tiny_config(tmp_path, seed=2, output_dir="elsewhere"), tmp_path
        )
        c_raw = tiny_config(tmp_path)
        c_raw["train"]["epochs"] = 5
        c = harness.experiment_config_from_dict(c_raw, tmp_path)
        assert harness.config_hash(a) == harness.config_hash(b)
        assert harness.config_hash(a) != harness.config_hash(c)


class TestFrameErrorRate:
    def fixed_net(self, log_probs):
        return pm.Network([1, len(log_probs)], [np.zeros((len(log_probs), 1))], [np.log(log_probs)])

    def test_all_correct(self):
        net = self.fixed_net(np.array([0.6, 0.4]))
        frames = pm.FrameSet("x", np.zeros((4, 1)), np.zeros(4, int), np.arange(4))
        assert harness.frame_error_rate(net, frames) == 0.0

    def test_all_wrong(self):
        net = self.fixed_net(np.array([0.6, 0.4]))
        frames = pm.FrameSet("x", np.zeros((4, 1)), np.ones(4, int), np.arange(4))
        assert harness.frame_error_rate(net, frames) == 100.0

    def test_three_of_ten(self):
        net = self.fixed_net(np.array([0.6, 0.4]))
        labels = np.array([0] * 7 + [1] * 3)
        frames = pm.FrameSet("x", np.zeros((10, 1)), labels, np.arange(10))
        assert harness.frame_error_rate(net, frames) == 30.0

    def test_empty(self):
        net = self.fixed_net(np.array([0.6, 0.4]))
        frames = pm.FrameSet("x", np.zeros((0, 1)), np.zeros(0, int), np.zeros(0, int))
        with pytest.raises(EmptyDataError):
            harness.frame_error_rate(net, frames)


class TestImprovement:
    @pytest.mark.parametrize(
        "baseline,value,expected",
        [(33.14, 29.94, 9.66), (13.56, 11.67, 13.94), (13.56, 10.68, 21.24)],
    )
    def test_reported_pairs(self, baseline, value, expected):
        assert abs(harness.relative_improvement(baseline, value) - expected) <= 0.01

    def test_equal_is_zero(self):
        assert harness.relative_improvement(20.0, 20.0) == 0.0


def make_row(method, seed=0, dev=20.0, test=25.0):
    return harness.ResultRow(
        method=method, target="lang0", sources=("lang1",), seed=seed,
        config_hash="abc", dev_frame_error=dev, test_frame_error=test,
    )


class TestEmitTable:
    def test_baseline_marked_na(self):
        text, payload = harness.emit_table([make_row("baseline")])
        assert "(NA)" in text
        assert payload["rows"][0]["method"] == "baseline"

    def test_improvements_rendered(self):
        rows = [make_row("baseline", dev=32.87, test=33.14), make_row("senone-map", dev=30.64, test=29.94)]
        text, _ = harness.emit_table(rows)
        assert "29.94 (9.66)" in text
        assert "30.64 (6.78)" in text

    def test_method_equal_to_baseline(self):
        rows = [make_row("baseline", test=20.0), make_row("senone-map", test=20.0)]
        text, _ = harness.emit_table(rows)
        assert "20.00 (0.00)" in text

    def test_multi_seed_rows_average(self):
        rows = [
            make_row("baseline", seed=0, test=20.0),
            make_row("baseline", seed=1, test=30.0),
        ]
        _, payload = harness.emit_table(rows)
        assert payload["rows"][0]["test_frame_error"] == 25.0
        assert payload["rows"][0]["seeds"] == [0, 1]

    def test_missing_baseline(self):
        with pytest.raises(MissingBaselineError):
            harness.emit_table([make_row("senone-map")])

    def test_text_and_payload_round_trip(self, tmp_path):
        rows = [make_row("baseline"), make_row("senone-map", test=18.0)]
        text = harness.write_report(rows, tmp_path, metadata={"target": "lang0"})
        payload = json.loads((tmp_path / "report.json").read_text())
        assert harness.render_table(payload) == text
        assert (tmp_path / "report.txt").read_text() == text + "\n"


class TestRunExperiment:
    def run(self, tmp_path, method, seed=3, **overrides):
        raw = tiny_config(tmp_path, method=method, **overrides)
        cfg = harness.experiment_config_from_dict(raw, tmp_path)
        return harness.run_experiment(cfg), harness.RunPaths(cfg.output_dir)

    def test_baseline_artifacts(self, tmp_path):
        row, paths = self.run(tmp_path, "baseline")
        assert paths.final_model.exists()
        assert paths.row("baseline", 3).exists()
        loaded = harness.read_row(paths.row("baseline", 3))
        assert loaded == row
        assert 0.0 <= row.test_frame_error <= 100.0

    def test_rerun_is_bit_identical(self, tmp_path):
        row1, paths = self.run(tmp_path, "senone-map", sources=["lang1"])
        row_bytes = paths.row("senone-map", 3).read_bytes()
        model_bytes = paths.final_model.read_bytes()
        row2, _ = self.run(tmp_path, "senone-map", sources=["lang1"])
        assert row1 == row2
        assert paths.row("senone-map", 3).read_bytes() == row_bytes
        assert paths.final_model.read_bytes() == model_bytes

    def test_map_method_writes_maps(self, tmp_path):
        _, paths = self.run(tmp_path, "phone-map", sources=["lang1"])
        assert (paths.maps_dir / "mapset.json").exists()
        assert paths.pooled_model.exists()
        assert paths.baseline_model.exists()

    def test_mtdnn_masked_pipeline(self, tmp_path):
        row, paths = self.run(tmp_path, "mtdnn-masked", sources=["lang1"])
        assert paths.mtdnn_model.exists()
        assert paths.pruned_model.exists()
        assert paths.final_model.exists()
        assert row.method == "mtdnn-masked"

    def test_mtdnn_mapped_pipeline(self, tmp_path):
        _, paths = self.run(tmp_path, "mtdnn-mapped", sources=["lang1"])
        assert paths.mapper_model("lang0").exists()
        assert paths.mapper_model("lang1").exists()
        assert (paths.maps_dir / "mapset.json").exists()

    def test_manual_map_pipeline(self, tmp_path):
        # the generator's phone answer key doubles as a manual map file
        corpus = pm.generate_synthetic(pm.SynthSpec(**TINY_SYNTH, seed=51))
        files = pm.save_ground_truth_maps(corpus, tmp_path / "truth")
        corpus_path = tmp_path / "corpus.npz"
        pm.save_corpus(corpus, corpus_path)
        raw = tiny_config(
            tmp_path,
            method="manual-map",
            sources=["lang1"],
            corpus={"path": str(corpus_path)},
            manual_maps={"lang1": str(tmp_path / "truth" / "truth_phone_lang1_to_lang0.txt")},
        )
        cfg = harness.experiment_config_from_dict(raw, tmp_path)
        row = harness.run_experiment(cfg)
        assert row.method == "manual-map"

    def test_stagewise_equals_end_to_end(self, tmp_path):
        raw = tiny_config(tmp_path, method="senone-map", sources=["lang1"], output_dir="auto")
        cfg = harness.experiment_config_from_dict(raw, tmp_path)
        harness.run_experiment(cfg)
        auto = harness.RunPaths(cfg.output_dir)

        raw2 = tiny_config(tmp_path, method="senone-map", sources=["lang1"], output_dir="manual")
        cfg2 = harness.experiment_config_from_dict(raw2, tmp_path)
        manual = harness.RunPaths(cfg2.output_dir)
        harness.stage_synth(cfg2)
        harness.stage_train_baseline(cfg2)
        harness.stage_build_map(cfg2)
        harness.stage_pool_train(cfg2)
        harness.stage_finetune(cfg2)
        assert manual.final_model.read_bytes() == auto.final_model.read_bytes()
        dev = harness.stage_evaluate(cfg2, split="dev")
        assert dev == harness.read_row(auto.row("senone-map", 3)).dev_frame_error


class TestCli:
    def test_experiment_and_report(self, tmp_path, capsys):
        path = write_config(tmp_path, tiny_config(tmp_path))
        assert cli.main(["experiment", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "method=baseline" in out
        assert cli.main(["report", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "baseline" in out and "(NA)" in out

    def test_synth_writes_corpus(self, tmp_path, capsys):
        path = write_config(tmp_path, tiny_config(tmp_path))
        assert cli.main(["synth", "--config", str(path)]) == 0
        assert (tmp_path / "run" / "corpus.npz").exists()
        assert (tmp_path / "run" / "truth" / "truth_phone_lang0_to_lang1.txt").exists()

    def test_stage_chain(self, tmp_path, capsys):
        raw = tiny_config(tmp_path, method="mtdnn-masked", sources=["lang1"])
        path = write_config(tmp_path, raw)
        for command in ("synth", "mt-train", "prune", "finetune"):
            assert cli.main([command, "--config", str(path)]) == 0
        assert cli.main(["evaluate", "--config", str(path), "--split", "dev"]) == 0
        assert "frame_error_rate dev" in capsys.readouterr().out

    def test_pool_train_stage_chain(self, tmp_path, capsys):
        raw = tiny_config(tmp_path, method="senone-map", sources=["lang1"])
        path = write_config(tmp_path, raw)
        for command in ("synth", "train-baseline", "build-map", "pool-train", "finetune"):
            assert cli.main([command, "--config", str(path)]) == 0
        assert cli.main(["evaluate", "--config", str(path)]) == 0
        assert "frame_error_rate test" in capsys.readouterr().out

    def test_error_prints_class_and_fails(self, tmp_path, capsys):
        raw = tiny_config(tmp_path)
        raw["method"] = "bogus"
        path = write_config(tmp_path, raw)
        assert cli.main(["experiment", "--config", str(path)]) == 1
        assert "ConfigError" in capsys.readouterr().err

    def test_validate_map(self, tmp_path, capsys):
        path = write_config(tmp_path, tiny_config(tmp_path))
        cli.main(["synth", "--config", str(path)])
        good = tmp_path / "run" / "truth" / "truth_phone_lang1_to_lang0.txt"
        assert cli.main([
            "validate-map", "--config", str(path), "--map", str(good),
            "--source", "lang1", "--target", "lang0", "--kind", "phone",
        ]) == 0
        assert "ok" in capsys.readouterr().out
        bad = tmp_path / "bad.txt"
        bad.write_text("0 1\n")
        assert cli.main([
            "validate-map", "--config", str(path), "--map", str(bad),
            "--source", "lang1", "--target", "lang0", "--kind", "phone",
        ]) == 1
        assert "IncompleteMapError" in capsys.readouterr().err

    def test_build_map_requires_baseline(self, tmp_path, capsys):
        raw = tiny_config(tmp_path, method="senone-map", sources=["lang1"])
        path = write_config(tmp_path, raw)
        assert cli.main(["build-map", "--config", str(path)]) == 1
        assert "ConfigError" in capsys.readouterr().err

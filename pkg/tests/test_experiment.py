from pathlib import Path

import numpy as np
import pytest

from symloss.experiment import (
    ConfigError,
    ExperimentConfig,
    build_datasets,
    load_config,
    parse_config_text,
    run_experiment,
)
from symloss.model import TrainConfig

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestParse:
    def test_table_style_keys(self):
        cfg = parse_config_text(
            "train batchsize = 64\nTotal Epoch = 5\nlearning rate = 0.02\ngradient-bound = 2.5\n"
            "scheduler = step\nstep_size = 2\ngamma = 0.5\nT_max = 7\n", env={})
        t = cfg.train
        assert (t.batch_size, t.epochs, t.lr, t.grad_clip, t.schedule) == (64, 5, 0.02, 2.5, "step")
        assert (t.step_size, t.gamma, t.T_max) == (2, 0.5, 7)

    def test_dotted_sections(self):
        cfg = parse_config_text(
            "loss = sgce\nloss.q = 0.65\nnoise.kind = symmetric\nnoise.eta = 0.4\n"
            "model.hidden = 16,16\nmodel.activation = tanh\nmodel.bias = false\ndataset.radius = 5\n", env={})
        assert cfg.train.loss_name == "sgce" and cfg.train.loss_params == {"q": 0.65}
        assert cfg.noise == {"kind": "symmetric", "eta": 0.4}
        assert cfg.model == {"hidden": (16, 16), "activation": "tanh", "bias": False}
        assert cfg.dataset["radius"] == 5.0

    def test_comments_and_blank_lines(self):
        cfg = parse_config_text("# header\n\nseed = 4  # trailing\n", env={})
        assert cfg.seed == 4

    def test_defaults(self):
        cfg = parse_config_text("", env={})
        assert cfg.train == TrainConfig()
        assert cfg.noise == {"kind": "none"}

    @pytest.mark.parametrize("text", ["lr 0.1", "colour = red", "epochs = 2.5", "lr = fast", "seed = 1\nseed = 2",
                                      "scheduler = linear", "lr = -1", "noise.kind = weird",
                                      "model.bias = maybe", "dataset.kind = csv"])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text, env={})

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        cfg = parse_config_text("output = out/r.json\n", tmp_path, env={})
        assert cfg.record_path == str(tmp_path / "out" / "r.json")


class TestSeedPrecedence:
    def test_env_overrides_config(self):
        assert parse_config_text("seed = 1", env={"SYMLOSS_SEED": "9"}).seed == 9

    def test_blank_env_ignored(self):
        assert parse_config_text("seed = 1", env={"SYMLOSS_SEED": " "}).seed == 1

    def test_bad_env(self):
        with pytest.raises(ConfigError):
            parse_config_text("", env={"SYMLOSS_SEED": "abc"})

    def test_flag_beats_env(self):
        cfg = parse_config_text("seed = 1", env={"SYMLOSS_SEED": "9"}).with_seed(3)
        assert cfg.seed == 3


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_shipped_configs_parse(name):
    load_config(CONFIGS / name, env={})


class TestPipeline:
    def test_noise_only_touches_training_labels(self):
        cfg = parse_config_text("dataset.per_class = 100\nnoise.kind = symmetric\nnoise.eta = 0.5\n", env={})
        clean, noisy, test = build_datasets(cfg)
        assert np.array_equal(clean.features, noisy.features)
        assert 0.4 < np.mean(clean.labels != noisy.labels) < 0.6
        assert len(test) == 300

    def test_test_count(self):
        cfg = parse_config_text("dataset.per_class = 10\ndataset.test_count = 17\n", env={})
        assert len(build_datasets(cfg)[2]) == 17

    def test_asymmetric_from_csv(self, tmp_path):
        (tmp_path / "T.csv").write_text("1,0,0\n0,1,0\n1,0,0\n")
        cfg = parse_config_text("dataset.per_class = 20\nnoise.kind = asymmetric\nnoise.transition = T.csv\n",
                                tmp_path, env={})
        clean, noisy, _ = build_datasets(cfg)
        assert np.all(noisy.labels[clean.labels == 2] == 0)

    def test_csv_dataset(self, tmp_path):
        (tmp_path / "tr.csv").write_text("f0,label\n1,0\n-1,1\n2,0\n")
        (tmp_path / "te.csv").write_text("f0,label\n3,0\n-3,1\n")
        cfg = parse_config_text("dataset.kind = csv\ndataset.train = tr.csv\ndataset.test = te.csv\n"
                                "model.hidden = 4\ntotal epoch = 3\ntrain batchsize = 2\n", tmp_path, env={})
        rec = run_experiment(cfg)
        assert len(rec.epochs) == 3
        assert rec.config["experiment"]["model"]["hidden"] == [4]

    def test_experiment_config_is_hashable_value(self):
        assert ExperimentConfig().with_seed(5).seed == 5

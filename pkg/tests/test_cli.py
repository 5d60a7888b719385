import csv
import json
from pathlib import Path

import numpy as np
import pytest

from symloss.cli import (
    EXIT_CHECK_FAILED,
    EXIT_DEGENERATE,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    main,
)
from symloss.data import load_classification_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


class TestSymcheck:
    def test_unhinged_passes(self, capsys):
        code, rep = _run_json(capsys, ["symcheck", "--loss", "unhinged", "--classes", "10"])
        assert code == EXIT_OK and rep["passed"]

    def test_ce_fails_symmetry(self, capsys):
        code, rep = _run_json(capsys, ["symcheck", "--loss", "ce", "--classes", "10"])
        assert code == EXIT_CHECK_FAILED
        sym = next(r for r in rep["reports"] if r["check"] == "symmetry")
        assert not sym["passed"]

    def test_sgce_passes_at_100_classes(self, capsys):
        code, rep = _run_json(capsys, ["symcheck", "--loss", "sgce", "--q", "0.65", "--classes", "100"])
        assert code == EXIT_OK and rep["params"] == {"q": 0.65}

    def test_unknown_loss(self, capsys):
        assert main(["symcheck", "--loss", "hinge"]) == EXIT_USAGE
        assert "hinge" in capsys.readouterr().err

    def test_unknown_check(self):
        assert main(["symcheck", "--loss", "unhinged", "--checks", "bogus"]) == EXIT_USAGE

    def test_invalid_param(self):
        assert main(["symcheck", "--loss", "sgce", "--q", "1.5"]) == EXIT_USAGE

    def test_output_file_and_all_checks(self, tmp_path):
        path = tmp_path / "r.json"
        code = main(["symcheck", "--loss", "sym_mae", "--classes", "3", "--output", str(path),
                     "--checks", "symmetry,permutation,gradient,non_increasing,local_unhinged"])
        rep = json.loads(path.read_text())
        assert code == EXIT_OK and len(rep["reports"]) == 5

    def test_argparse_errors_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["symcheck"])
        assert exc.value.code == EXIT_USAGE


def _write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestTrain:
    def test_zero_epochs(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, "total epoch = 0\n")
        assert main(["train", str(cfg)]) == EXIT_OK
        rec = json.loads((tmp_path / "run.record.json").read_text())
        assert rec["epochs"] == [] and rec["final_test_accuracy"] is None
        with open(tmp_path / "run.curve.csv") as fh:
            assert len(list(csv.reader(fh))) == 1
        assert "n/a" in capsys.readouterr().out

    def test_clean_blobs_ce(self, tmp_path, capsys):
        out = tmp_path / "ce.json"
        code = main(["train", str(CONFIGS / "blobs_ce_clean.cfg"), "--output", str(out),
                     "--curve", str(tmp_path / "ce.csv")])
        assert code == EXIT_OK
        assert json.loads(out.read_text())["final_test_accuracy"] > 0.95
        assert "final clean-test accuracy" in capsys.readouterr().out

    def test_noisy_comparison_records(self, tmp_path):
        for name in ("blobs_ce_eta40", "blobs_alpha_mae_eta40"):
            out = tmp_path / f"{name}.json"
            assert main(["train", str(CONFIGS / f"{name}.cfg"), "--output", str(out),
                         "--curve", str(tmp_path / f"{name}.csv")]) == EXIT_OK
            rec = json.loads(out.read_text())
            assert len(rec["epochs"]) == 60
            assert rec["config"]["experiment"]["noise"]["eta"] == 0.4

    def test_bad_config(self, tmp_path):
        cfg = _write_cfg(tmp_path, "learning rate = soon\n")
        assert main(["train", str(cfg)]) == EXIT_USAGE

    def test_missing_config(self, tmp_path):
        assert main(["train", str(tmp_path / "absent.cfg")]) == EXIT_USAGE

    def test_nan_abort(self, tmp_path):
        cfg = _write_cfg(tmp_path, "dataset.per_class = 20\nmodel.hidden = 4\ntotal epoch = 3\n"
                                   "learning rate = 1e300\nmomentum = 0\nweight decay = 0\n")
        with np.errstate(all="ignore"):
            assert main(["train", str(cfg)]) == EXIT_NUMERICAL
        assert json.loads((tmp_path / "run.record.json").read_text())["aborted"]

    def test_seed_flag_beats_env(self, tmp_path, monkeypatch):
        cfg = _write_cfg(tmp_path, "seed = 1\ntotal epoch = 1\ndataset.per_class = 10\nmodel.hidden = 3\n")
        monkeypatch.setenv("SYMLOSS_SEED", "7")
        main(["train", str(cfg), "--output", str(tmp_path / "env.json")])
        main(["train", str(cfg), "--seed", "2", "--output", str(tmp_path / "flag.json")])
        assert json.loads((tmp_path / "env.json").read_text())["config"]["seed"] == 7
        assert json.loads((tmp_path / "flag.json").read_text())["config"]["seed"] == 2


def _classification_csv(path, rows):
    path.write_text("f0,f1,label\n" + "".join(f"{a},{b},{y}\n" for a, b, y in rows))
    return path


class TestCentroid:
    def test_two_point(self, tmp_path, capsys):
        data = _classification_csv(tmp_path / "toy.csv", [(1, 0, 0), (0, 1, 1)])
        code, res = _run_json(capsys, ["centroid", str(data)])
        assert code == EXIT_OK
        assert np.allclose(res["centroid"], [[0.25, -0.25], [-0.25, 0.25]])
        assert res["kernel_alignment"] == pytest.approx(0.25)
        assert res["trace_identity_residual"] < 1e-10
        assert np.allclose(np.loadtxt(tmp_path / "toy.centroid.csv", delimiter=","), res["centroid"])

    def test_degenerate(self, tmp_path, capsys):
        data = _classification_csv(tmp_path / "flat.csv", [(1, 1, 0), (1, 1, 1), (1, 1, 0), (1, 1, 1)])
        assert main(["centroid", str(data)]) == EXIT_DEGENERATE
        assert "degenerate" in capsys.readouterr().err

    def test_random_dataset_residual(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        rows = [(*rng.standard_normal(2), int(rng.integers(0, 4))) for _ in range(40)]
        data = _classification_csv(tmp_path / "r.csv", rows)
        code, res = _run_json(capsys, ["centroid", str(data), "--bias", "--radius", "3", "--classes", "4"])
        assert code == EXIT_OK
        assert res["trace_identity_residual"] < 1e-10
        assert np.linalg.norm(res["weights"]) == pytest.approx(3.0)

    def test_bad_radius(self, tmp_path):
        data = _classification_csv(tmp_path / "toy.csv", [(1, 0, 0), (0, 1, 1)])
        assert main(["centroid", str(data), "--radius", "0"]) == EXIT_USAGE


class TestRegress:
    @pytest.fixture
    def one_point(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("f0,target\n2,3\n")
        return path

    def test_unhinged(self, one_point, capsys):
        code, res = _run_json(capsys, ["regress", str(one_point)])
        assert code == EXIT_OK
        assert res["weights"] == pytest.approx([6.0])
        assert res["stationarity_residual"] < 1e-10

    def test_clipped(self, one_point, capsys):
        code, res = _run_json(capsys, ["regress", str(one_point), "--loss-kind", "clipped", "--delta", "1"])
        assert code == EXIT_OK and res["weights"] == pytest.approx([2.0])

    @pytest.mark.parametrize("lam", ["0", "-1"])
    def test_nonpositive_lambda(self, one_point, lam):
        assert main(["regress", str(one_point), "--lam", lam]) == EXIT_USAGE

    def test_bad_density(self, one_point):
        assert main(["regress", str(one_point), "--density", "cauchy:1"]) == EXIT_USAGE

    def test_gaussian_density(self, one_point, capsys):
        code, res = _run_json(capsys, ["regress", str(one_point), "--density", "gaussian:0:2"])
        assert code == EXIT_OK


def test_gen_blobs(tmp_path):
    path = tmp_path / "b.csv"
    assert main(["gen-blobs", str(path), "--classes", "4", "--per-class", "7", "--seed", "3"]) == EXIT_OK
    d = load_classification_csv(path)
    assert len(d) == 28 and d.num_classes == 4
    again = tmp_path / "c.csv"
    main(["gen-blobs", str(again), "--classes", "4", "--per-class", "7", "--seed", "3"])
    assert path.read_bytes() == again.read_bytes()

import csv
import json

import pytest

from sdr import cli, io
from sdr.cli import main

DATA = {
    "version": 1,
    "splits": {
        "train": {"cells": [{"label": 0, "palette_id": 0, "count": 4}, {"label": 1, "palette_id": 1, "count": 4},
                            {"label": 0, "palette_id": 2, "count": 4}, {"label": 1, "palette_id": 3, "count": 4}],
                  "T": 4, "H": 8, "W": 8, "seed": 1},
        "test": {"cells": [{"label": 0, "palette_id": 1, "count": 4}, {"label": 1, "palette_id": 0, "count": 4}],
                 "T": 4, "H": 8, "W": 8, "seed": 2, "id_offset": 100},
    },
}
RUN = {
    "version": 1, "epochs": 1, "batch_size": 4, "lr": 1e-3, "seed": 3,
    "spb": {"channels": 4, "blocks": 1, "strides": [1]},
    "transformer": {"d_model": 8, "heads": 2},
}


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["gen-data", "--config", write(tmp_path, "data.json", DATA), "--out", str(out)]) == 0
    return str(out)


class TestGenData:
    def test_counts_and_determinism(self, tmp_path, data_dir, capsys):
        assert len(io.read_archive(f"{data_dir}/train.sdrc")) == 16
        other = tmp_path / "again"
        main(["gen-data", "--config", str(tmp_path / "data.json"), "--out", str(other)])
        for f in ("train.sdrc", "train.manifest.csv", "test.sdrc"):
            assert (other / f).read_bytes() == open(f"{data_dir}/{f}", "rb").read()

    def test_nonempty_out_needs_force(self, tmp_path, data_dir):
        before = sorted((tmp_path / "data").iterdir())
        cfg = str(tmp_path / "data.json")
        assert main(["gen-data", "--config", cfg, "--out", data_dir]) == cli.EXIT_EXISTS
        assert sorted((tmp_path / "data").iterdir()) == before
        assert main(["gen-data", "--config", cfg, "--out", data_dir, "--force"]) == 0

    @pytest.mark.parametrize("doc, field", [
        ({"splits": {}}, "version"),
        ({"version": 1, "splits": {"train": {"cells": [], "colour": 1}}}, "colour"),
        ({"version": 1, "splits": {"train": {"cells": [{"label": 0, "palette_id": 9, "count": 1}]}}}, "splits.train"),
        ({"version": 1, "style_shift": {"train_count": 3}}, "train_count"),
    ])
    def test_config_errors(self, tmp_path, capsys, doc, field):
        code = main(["gen-data", "--config", write(tmp_path, "bad.json", doc), "--out", str(tmp_path / "o")])
        assert code == cli.EXIT_CONFIG
        assert field in capsys.readouterr().err
        assert not (tmp_path / "o").exists()


class TestTrain:
    def test_outputs_and_determinism(self, tmp_path, data_dir):
        cfg = write(tmp_path, "run.json", RUN)
        for out in ("a", "b"):
            assert main(["train", "--config", cfg, "--data", data_dir, "--out", str(tmp_path / out)]) == 0
        for f in ("history.csv", "checkpoint.sdr1", "metrics.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        m = json.loads((tmp_path / "a" / "metrics.json").read_text())
        assert m["seed"] == 3 and len(m["config_digest"]) == 64
        assert set(m["splits"]) == {"train", "test"}
        assert {"auc", "acc"} <= set(m["splits"]["test"])
        ckpt = io.load_checkpoint(tmp_path / "a" / "checkpoint.sdr1")
        assert "tt.head.w" in ckpt

    def test_dry_run_writes_nothing(self, tmp_path, data_dir, capsys):
        out = tmp_path / "dry"
        cfg = write(tmp_path, "run.json", RUN)
        assert main(["train", "--config", cfg, "--data", data_dir, "--out", str(out), "--dry-run"]) == 0
        text = capsys.readouterr().out
        assert "parameters:" in text and "4 per epoch" in text
        assert not out.exists()

    def test_missing_data(self, tmp_path):
        cfg = write(tmp_path, "run.json", RUN)
        assert main(["train", "--config", cfg, "--data", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 4

    def test_unknown_key(self, tmp_path, data_dir, capsys):
        cfg = write(tmp_path, "run.json", {**RUN, "learning_rate": 1})
        assert main(["train", "--config", cfg, "--data", data_dir, "--out", str(tmp_path / "o")]) == 2
        assert "learning_rate" in capsys.readouterr().err

    def test_bad_field_value(self, tmp_path, data_dir, capsys):
        cfg = write(tmp_path, "run.json", {**RUN, "spb": {"kt": 2}})
        assert main(["train", "--config", cfg, "--data", data_dir, "--out", str(tmp_path / "o")]) == 2
        assert "spb" in capsys.readouterr().err

    def test_divergence_exit(self, tmp_path, data_dir, monkeypatch, capsys):
        from sdr.trainer import TrainingDivergence

        def boom(*a, **k):
            raise TrainingDivergence(7, "nan in logits")

        monkeypatch.setattr(cli, "train", boom)
        cfg = write(tmp_path, "run.json", RUN)
        assert main(["train", "--config", cfg, "--data", data_dir, "--out", str(tmp_path / "o")]) == 5
        assert "step 7" in capsys.readouterr().err


class TestTables:
    def test_sweep(self, tmp_path, data_dir):
        cfg = write(tmp_path, "run.json", {**RUN, "seeds": [0]})
        out = tmp_path / "sweep"
        assert main(["sweep-branches", "--config", cfg, "--n-list", "1,2", "--data", data_dir, "--out", str(out)]) == 0
        rows = list(csv.reader(open(out / "sweep.csv")))
        assert rows[0] == cli.SWEEP_HEADER
        assert [r[:2] for r in rows[1:]] == [["1", "0"], ["2", "0"]]

    def test_parallel_sweep_matches_sequential(self, tmp_path, data_dir, monkeypatch):
        cfg = write(tmp_path, "run.json", {**RUN, "seeds": [0, 1]})
        main(["sweep-branches", "--config", cfg, "--n-list", "1", "--data", data_dir, "--out", str(tmp_path / "seq")])
        monkeypatch.setenv("SDR_THREADS", "2")
        main(["sweep-branches", "--config", cfg, "--n-list", "1", "--data", data_dir, "--out", str(tmp_path / "par")])
        assert (tmp_path / "seq" / "sweep.csv").read_bytes() == (tmp_path / "par" / "sweep.csv").read_bytes()

    def test_sweep_rejects_six(self, tmp_path, data_dir):
        cfg = write(tmp_path, "run.json", RUN)
        assert main(["sweep-branches", "--config", cfg, "--n-list", "6", "--out", str(tmp_path / "s")]) == 2

    def test_ablate(self, tmp_path, data_dir):
        cfg = write(tmp_path, "run.json", {**RUN, "seeds": [0]})
        out = tmp_path / "abl"
        assert main(["ablate", "--config", cfg, "--data", data_dir, "--out", str(out)]) == 0
        rows = list(csv.reader(open(out / "ablation.csv")))
        assert rows[0] == cli.ABLATE_HEADER
        assert [r[:3] for r in rows[1:]] == [["0", "0", "0"], ["0", "1", "0"], ["1", "1", "0"], ["1", "1", "1"]]


class TestGradcheck:
    def test_corrupted_gradient_named(self, tmp_path, capsys):
        cfg = write(tmp_path, "gc.json", {"version": 1, "gradcheck": {"channels": 2, "T": 3}})
        assert main(["gradcheck", "--config", cfg, "--corrupt-grad", "tt.head.b"]) == 1
        out = capsys.readouterr().out
        assert "tt.head.b" in out and "FAIL" in out


def test_help_documents_csv_headers(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for header in (io.HISTORY_HEADER, cli.SWEEP_HEADER, cli.ABLATE_HEADER, io.MANIFEST_HEADER):
        assert ",".join(header) in text

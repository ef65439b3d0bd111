"""End-to-end tests of the ``keed`` command line on small synthetic corpora."""

import json

import pytest

from python_keed import cli
from python_keed.io.text import read_result
from python_keed.io.wfdb import parse_header

SMALL_CONFIG = """{
  model: {width: 4, depth: 2, blocks: 1, length: 64},
  synth: {records: 2, beats: 101, snr: 25},
  train: {epochs: 5, batch: 16, lr: 0.01},
  workers: 1
}"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CONFIG)
    return path


@pytest.fixture
def corpus(tmp_path, config):
    out = tmp_path / "corpus"
    assert cli.main(["synth", "--config", str(config), "--seed", "7", "--out", str(out)]) == cli.EXIT_OK
    return out


@pytest.fixture
def weights(tmp_path, config, corpus):
    out = tmp_path / "model"
    assert cli.main(["train", "--config", str(config), "--data", str(corpus), "--out", str(out)]) == cli.EXIT_OK
    return out / "keed.weights"


class TestSynth:
    def test_same_seed_same_bytes(self, tmp_path, config):
        first, second = tmp_path / "a", tmp_path / "b"
        for out in (first, second):
            assert cli.main(["synth", "--config", str(config), "--seed", "7", "--out", str(out)]) == cli.EXIT_OK
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        assert names == ["synth007_000.csv", "synth007_000.truth.json", "synth007_001.csv", "synth007_001.truth.json"]
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_wfdb_export(self, tmp_path, config):
        out = tmp_path / "wfdb"
        assert cli.main(["synth", "--config", str(config), "--export", "wfdb", "--out", str(out)]) == cli.EXIT_OK
        header = parse_header((out / "synth000_000.hea").read_text())
        assert header.fs == 250.0
        assert (out / "synth000_000.dat").stat().st_size > 0
        assert (out / "synth000_000.atr").stat().st_size > 0


class TestTrain:
    def test_writes_weights_and_loss_curve(self, weights):
        rows = (weights.parent / "loss.csv").read_text().splitlines()
        assert rows[0] == "epoch,train_loss,validation_loss"
        losses = [float(row.split(",")[1]) for row in rows[1:]]
        assert len(losses) == 5
        assert losses[-1] < losses[0]
        assert weights.stat().st_size > 0


class TestDelineate:
    def test_lambda_orders_present_counts(self, tmp_path, config, corpus, weights):
        record = corpus / "synth007_000.csv"
        counts = {}
        for lam in ("0.1", "0.9"):
            out = tmp_path / f"result_{lam}.json"
            code = cli.main(["delineate", str(record), "--config", str(config), "--weights", str(weights),
                             "--lambda", lam, "--out", str(out)])
            assert code == cli.EXIT_OK
            result = read_result(out.read_text())
            assert result.record_id == "synth007_000"
            assert len(result.intervals) >= 95
            counts[lam] = result.present_count()
        assert counts["0.9"] <= counts["0.1"]

    def test_wfdb_record(self, tmp_path, config, weights, capsys):
        out = tmp_path / "wfdb"
        cli.main(["synth", "--config", str(config), "--export", "wfdb", "--out", str(out)])
        capsys.readouterr()
        code = cli.main(["delineate", str(out / "synth000_000.hea"), "--config", str(config),
                         "--weights", str(weights)])
        assert code == cli.EXIT_OK
        assert read_result(capsys.readouterr().out).intervals

    def test_missing_record(self, tmp_path, config, weights, capsys):
        missing = tmp_path / "missing.csv"
        code = cli.main(["delineate", str(missing), "--config", str(config), "--weights", str(weights)])
        assert code == cli.EXIT_DATA
        assert str(missing) in capsys.readouterr().err

    def test_weights_required(self, tmp_path):
        assert cli.main(["delineate", str(tmp_path / "r.csv")]) == cli.EXIT_USAGE


class TestEval:
    def test_json_report(self, config, corpus, weights, capsys):
        capsys.readouterr()
        code = cli.main(["eval", "--config", str(config), "--data", str(corpus), "--weights", str(weights),
                         "--format", "json"])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["wave"] == "P"
        assert [m["method"] for m in report["methods"]] == ["KEED", "DWT", "Peak"]
        assert [s["lambda"] for s in report["sweep"]] == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        present = [s["tp"] + s["fp"] for s in report["sweep"]]
        assert all(b <= a for a, b in zip(present, present[1:]))

    def test_baselines_only_with_swapped_labels(self, config, corpus, capsys, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main(["eval", "--config", str(config), "--data", str(corpus), "--format", "json",
                         "--swap-fp-fn", "--out", str(out)])
        assert code == cli.EXIT_OK
        report = json.loads(out.read_text())
        assert report["convention"] == "swapped"
        assert [m["method"] for m in report["methods"]] == ["DWT", "Peak"]
        assert report["sweep"] == []

    def test_table(self, config, corpus, capsys):
        capsys.readouterr()
        assert cli.main(["eval", "--config", str(config), "--data", str(corpus), "--wave", "T"]) == cli.EXIT_OK
        assert capsys.readouterr().out.startswith("Wave T\n")


class TestBench:
    def test_json_timings(self, config, capsys):
        capsys.readouterr()
        code = cli.main(["bench", "--config", str(config), "--intervals", "20", "--repeats", "2", "--format", "json"])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert [m["method"] for m in report["methods"]] == ["KEED", "DWT", "Peak"]
        assert all(m["time"] > 0 for m in report["methods"])
        assert all(m["throughput"] > 0 for m in report["methods"])
        assert report["methods"][0]["speedup"] == 1.0
        for m in report["methods"][1:]:
            assert m["speedup"] == pytest.approx(m["time"] / report["methods"][0]["time"])

    def test_table_reports_speedup(self, config, capsys):
        capsys.readouterr()
        assert cli.main(["bench", "--config", str(config), "--intervals", "20", "--repeats", "1"]) == cli.EXIT_OK
        header = capsys.readouterr().out.splitlines()[1]
        assert "Throughput (intervals/s)" in header and "Speedup (x)" in header

    @pytest.mark.slow
    def test_thousand_intervals_with_default_model(self, tmp_path, capsys):
        capsys.readouterr()
        out = tmp_path / "bench.json"
        code = cli.main(["bench", "--intervals", "1000", "--repeats", "2", "--format", "json", "--out", str(out)])
        assert code == cli.EXIT_OK
        methods = json.loads(out.read_text())["methods"]
        assert [m["method"] for m in methods] == ["KEED", "DWT", "Peak"]
        for m in methods:
            assert m["time"] > 0
            assert m["throughput"] > 0
            assert m["speedup"] > 0
        assert methods[0]["tp"] + methods[0]["fp"] + methods[0]["fn"] + methods[0]["tn"] >= 950


class TestExitCodes:
    def test_unknown_flag(self):
        assert cli.main(["synth", "--bogus"]) == cli.EXIT_USAGE

    def test_no_command(self):
        assert cli.main([]) == cli.EXIT_USAGE

    def test_invalid_config_value(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("{decode: {lambda: 1.5}}")
        assert cli.main(["synth", "--config", str(path), "--out", str(tmp_path / "s")]) == cli.EXIT_USAGE

    def test_missing_config_file(self, tmp_path, capsys):
        assert cli.main(["synth", "--config", str(tmp_path / "none.cfg")]) == cli.EXIT_DATA
        assert "none.cfg" in capsys.readouterr().err

    def test_missing_data_directory(self, tmp_path, config):
        assert cli.main(["eval", "--config", str(config), "--data", str(tmp_path / "nothing")]) == cli.EXIT_DATA

import csv
import json

import numpy as np
import pytest

from gpsel.benchmark import GSobolSpec, g_sobol_batch, lhs
from gpsel.cli import main


def write_training_csv(path, n=24, d=2, seed=0):
    spec = GSobolSpec(d)
    x = lhs(n, d, seed)
    y = g_sobol_batch(x, spec)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k + 1}" for k in range(d)] + ["y"])
        for i in range(n):
            w.writerow([repr(float(v)) for v in x[i]] + [repr(float(y[i]))])
    return x, y


FIT_SPEED = ["--max-evals-factor", "40", "--k-build", "3", "--jobs", "1"]


def run_fit(tmp_path, name="train.csv", extra=(), seed="7"):
    data = tmp_path / name
    write_training_csv(data)
    model = tmp_path / "model.json"
    report = tmp_path / "report.txt"
    code = main(["fit", "--data", str(data), "--output-col", "y",
                 "--model", str(model), "--report", str(report),
                 "--holdout", "0.25", "--skip-steps-4-5", "--seed", seed,
                 *FIT_SPEED, *extra])
    return code, data, model, report


class TestFit:
    def test_fit_writes_artifacts(self, tmp_path, capsys):
        code, data, model, report = run_fit(tmp_path)
        assert code == 0
        assert model.exists() and report.exists()
        assert (tmp_path / "model.trace.json").exists()
        out = capsys.readouterr().out
        assert "final Q2" in out and "covariance inputs" in out
        doc = json.loads(model.read_text())
        assert doc["format"] == "gpsel-model"
        text = report.read_text()
        assert "step 6" in text and "step 7" in text

    def test_missing_output_column_exit_2(self, tmp_path, capsys):
        data = tmp_path / "train.csv"
        write_training_csv(data)
        assert main(["fit", "--data", str(data), "--output-col", "nope",
                     *FIT_SPEED]) == 2

    def test_missing_data_file_exit_2(self, tmp_path):
        assert main(["fit", "--data", str(tmp_path / "nope.csv"),
                     "--output-col", "y", *FIT_SPEED]) == 2

    def test_same_seed_byte_identical_reports(self, tmp_path):
        _, _, _, report1 = run_fit(tmp_path, name="a.csv")
        text1 = report1.read_bytes()
        report1.unlink()
        _, _, _, report2 = run_fit(tmp_path, name="a.csv")
        assert report2.read_bytes() == text1

    def test_unknown_flag_usage_exit_1(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["fit", "--no-such-flag"])
        assert err.value.code == 1


class TestPredict:
    def fitted(self, tmp_path, extra=("--tau-fixed", "0")):
        code, data, model, report = run_fit(tmp_path, extra=list(extra))
        assert code == 0
        return data, model

    def test_predict_training_rows_interpolate(self, tmp_path, capsys):
        # outer-CV validation trains the delivered model on every row, so
        # with tau = 0 all training rows must be reproduced
        data = tmp_path / "train.csv"
        write_training_csv(data)
        model = tmp_path / "model.json"
        assert main(["fit", "--data", str(data), "--output-col", "y",
                     "--model", str(model), "--k-valid", "2",
                     "--skip-steps-4-5", "--seed", "7", "--tau-fixed", "0",
                     *FIT_SPEED]) == 0
        out = tmp_path / "pred.csv"
        assert main(["predict", "--model", str(model), "--data", str(data),
                     "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        train = list(csv.DictReader(open(data, newline="")))
        assert len(rows) == len(train)
        y = np.array([float(r["y"]) for r in train])
        mean = np.array([float(r["mean"]) for r in rows])
        assert set(rows[0]) == {"mean", "mse", "lo95", "hi95"}
        assert np.all(np.abs(mean - y) <= 1e-6 * (y.max() - y.min()))

    def test_empty_query_writes_header_only(self, tmp_path):
        data, model = self.fitted(tmp_path)
        query = tmp_path / "query.csv"
        query.write_text("x1,x2\n")
        out = tmp_path / "pred.csv"
        assert main(["predict", "--model", str(model), "--data", str(query),
                     "--out", str(out)]) == 0
        assert out.read_text().strip() == "mean,mse,lo95,hi95"

    def test_missing_column_exit_2(self, tmp_path):
        data, model = self.fitted(tmp_path)
        query = tmp_path / "query.csv"
        query.write_text("x1\n0.5\n")
        out = tmp_path / "pred.csv"
        assert main(["predict", "--model", str(model), "--data", str(query),
                     "--out", str(out)]) == 2

    def test_version_mismatch_exit_4(self, tmp_path):
        data, model = self.fitted(tmp_path)
        doc = json.loads(model.read_text())
        doc["version"] = 99
        model.write_text(json.dumps(doc))
        out = tmp_path / "pred.csv"
        assert main(["predict", "--model", str(model), "--data", str(data),
                     "--out", str(out)]) == 4


class TestCv:
    def test_cv_prints_q2(self, tmp_path, capsys):
        data = tmp_path / "train.csv"
        write_training_csv(data)
        report = tmp_path / "cv.txt"
        code = main(["cv", "--data", str(data), "--output-col", "y",
                     "--k", "3", "--skip-steps-4-5", "--seed", "1",
                     "--report", str(report), *FIT_SPEED])
        assert code == 0
        out = capsys.readouterr().out
        assert "pooled Q2" in out
        assert "pooled Q2" in report.read_text()


class TestBenchmark:
    BENCH_SPEED = ["--quick", "--jobs", "1", "--max-evals-factor", "40"]

    def test_quick_benchmark_two_rows(self, tmp_path, capsys):
        out = tmp_path / "bench"
        code = main(["benchmark", "--d", "2", "--replicates", "2",
                     "--seed", "3", "--out", str(out), "--omit-timing",
                     *self.BENCH_SPEED])
        assert code == 0
        table = (tmp_path / "bench.txt").read_text()
        assert "with-steps-4-5" in table and "without-steps-4-5" in table
        rows = list(csv.DictReader(open(tmp_path / "bench.csv", newline="")))
        assert len(rows) == 2

    def test_benchmark_deterministic_with_omit_timing(self, tmp_path):
        args = ["benchmark", "--d", "2", "--replicates", "1", "--seed", "5",
                "--omit-timing", *self.BENCH_SPEED]
        out1 = tmp_path / "b1"
        out2 = tmp_path / "b2"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert (tmp_path / "b1.txt").read_bytes() == \
            (tmp_path / "b2.txt").read_bytes()
        assert (tmp_path / "b1.csv").read_bytes() == \
            (tmp_path / "b2.csv").read_bytes()

    def test_bad_dimension_list(self):
        assert main(["benchmark", "--d", "x,y"]) == 2


class TestConfigFile:
    def test_config_precedence(self, tmp_path, capsys):
        data = tmp_path / "train.csv"
        write_training_csv(data)
        conf = tmp_path / "run.conf"
        conf.write_text("seed = 9\nk_build = 3\nmax_evals_factor = 40\n"
                        "holdout = 0.25\nskip_steps_4_5 = true\njobs = 1\n")
        model = tmp_path / "m.json"
        # CLI --seed overrides the config file seed
        code = main(["--config", str(conf), "fit", "--data", str(data),
                     "--output-col", "y", "--model", str(model),
                     "--seed", "11"])
        assert code == 0
        trace = json.loads((tmp_path / "m.trace.json").read_text())
        assert trace["seed"] == 11
        assert trace["config"]["k_build"] == 3

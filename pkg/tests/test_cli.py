import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import SAMPLES
from wacal import io
from wacal.cli import main
from wacal.evaluate import StudySummary
from wacal.targets import make_target


@pytest.fixture
def inputs(tmp_path):
    io.write_spec(tmp_path / "truth_spec.json", SAMPLES["RadTan"])
    io.write_target(tmp_path / "target.json", make_target("AprilGrid", 6, 6, 0.088, 0.3))
    return tmp_path


def simulate(d, seed=7, out="sim", *extra):
    return main(["simulate", "--truth", str(d / "truth_spec.json"), "--target", str(d / "target.json"),
                 "--frames", "12", "--sigma", "0.7", "--seed", str(seed), "--out", str(d / out), *extra])


def calib(d, *extra, obs="sim/observations.jsonl", target="target.json"):
    return main(["calibrate", "--model", "radtan", "--target", str(d / target), "--obs", str(d / obs),
                 "--out", str(d / "report.json"), "--width", "1600", "--height", "1200", *extra])


class TestSimulate:
    def test_seed_seven_twice_identical(self, inputs):
        assert simulate(inputs, 7, "a") == 0
        assert simulate(inputs, 7, "b") == 0
        for name in ("observations.jsonl", "truth.json"):
            assert (inputs / "a" / name).read_bytes() == (inputs / "b" / name).read_bytes()

    def test_truth_round_trip(self, inputs):
        simulate(inputs)
        text = (inputs / "sim" / "truth.json").read_text()
        truth = io.read_truth(inputs / "sim" / "truth.json")
        d = truth.to_dict()
        d["config"] = json.loads(text)["config"]
        assert io.dumps(d) == text
        assert json.loads(text)["config"]["seed"] == 7

    def test_observations_round_trip(self, inputs):
        simulate(inputs)
        path = inputs / "sim" / "observations.jsonl"
        assert io.read_observations(path).to_jsonl() == path.read_text()

    def test_infeasible_sampler(self, inputs, capsys):
        code = simulate(inputs, 7, "sim", "--distance", "0.02,0.03", "--in-image", "1.0", "--max-tilt", "0")
        assert code == 1
        assert "infeasible" in capsys.readouterr().err


class TestCalibrate:
    def test_valid_inputs(self, inputs, capsys):
        simulate(inputs)
        assert calib(inputs) == 0
        out = capsys.readouterr().out
        assert "rms" in out and "fx" in out
        rep = io.read_report(inputs / "report.json")
        assert rep.converged and 0.8 < rep.rms < 1.1
        assert rep.config.model_kind == "RadTan"

    def test_report_round_trip(self, inputs):
        simulate(inputs)
        calib(inputs)
        text = (inputs / "report.json").read_text()
        assert io.dumps(io.report_to_dict(io.read_report(inputs / "report.json"))) == text

    def test_missing_target(self, inputs, capsys):
        simulate(inputs)
        assert calib(inputs, target="nowhere.json") == 1
        assert "nowhere.json" in capsys.readouterr().err

    def test_malformed_line(self, inputs, capsys):
        simulate(inputs)
        path = inputs / "sim" / "observations.jsonl"
        lines = path.read_text().splitlines()
        lines[4] = lines[4][:-5]
        path.write_text("\n".join(lines) + "\n")
        assert calib(inputs) == 1
        assert "line 5" in capsys.readouterr().err

    def test_non_convergent_run(self, inputs):
        simulate(inputs)
        assert calib(inputs, "--max-iter", "1", "--trim-rounds", "0") == 2
        assert not io.read_report(inputs / "report.json").converged

    def test_flags_override_config(self, inputs):
        simulate(inputs)
        (inputs / "cfg.json").write_text(json.dumps({"calibrate": {"trim_threshold": 5.0, "trim_rounds": 0,
                                                                   "loss": {"kind": "cauchy", "scale": 2.0}}}))
        calib(inputs, "--config", str(inputs / "cfg.json"), "--trim", "3.0")
        cfg = io.read_report(inputs / "report.json").config
        assert cfg.trim_threshold == 3.0 and cfg.trim_rounds == 0 and cfg.loss.kind == "cauchy"

    def test_missing_model(self, inputs):
        simulate(inputs)
        code = main(["calibrate", "--target", str(inputs / "target.json"),
                     "--obs", str(inputs / "sim/observations.jsonl"), "--out", str(inputs / "r.json"),
                     "--width", "1600", "--height", "1200"])
        assert code == 1

    def test_exit_code_independent_of_output_path(self, inputs, tmp_path_factory):
        simulate(inputs)
        other = tmp_path_factory.mktemp("elsewhere")
        a = calib(inputs)
        b = main(["calibrate", "--model", "radtan", "--target", str(inputs / "target.json"),
                  "--obs", str(inputs / "sim/observations.jsonl"), "--out", str(other / "x.json"),
                  "--width", "1600", "--height", "1200"])
        assert a == b == 0


class TestEvaluate:
    def test_scores_report(self, inputs, capsys):
        simulate(inputs)
        calib(inputs)
        code = main(["evaluate", "--report", str(inputs / "report.json"),
                     "--truth", str(inputs / "sim/truth.json"), "--out", str(inputs / "score.json")])
        assert code == 0
        score = io.score_from_dict(io.read_json(inputs / "score.json"))
        assert not score.failed and np.abs(score.param_errors[:4]).max() < 10


class TestStudy:
    def test_writes_summary_and_failures(self, inputs):
        code = main(["study", "--truth", str(inputs / "truth_spec.json"), "--models", "radtan",
                     "--seeds", "3", "--frames", "10", "--jobs", "1", "--out", str(inputs / "study")])
        assert code == 0
        rows = StudySummary.read_csv((inputs / "study" / "summary.csv").read_text())
        assert ("RadTan/huber1-trim2x2", "RadTan", "failures", "runs", 3.0) in rows
        assert (inputs / "study" / "failures.tsv").read_text().startswith("group\t")
        scores = (inputs / "study" / "scores.jsonl").read_text().splitlines()
        assert len(scores) == 3

    def test_fault_injection_counts_failures(self, inputs):
        code = main(["study", "--truth", str(inputs / "truth_spec.json"), "--models", "radtan",
                     "--seeds", "2", "--frames", "10", "--jobs", "1", "--init-focal-scale", "3",
                     "--max-iter", "3", "--out", str(inputs / "bad")])
        assert code == 0
        rows = StudySummary.read_csv((inputs / "bad" / "summary.csv").read_text())
        count = [r[4] for r in rows if r[2] == "failures" and r[3] == "count"]
        assert count == [2.0]


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "wacal.cli", "calibrate", "--model", "radtan",
                          "--target", str(tmp_path / "none.json"), "--obs", "x", "--out", "y",
                          "--width", "10", "--height", "10"], capture_output=True, text=True)
    assert res.returncode == 1 and "none.json" in res.stderr

import json

import pandas as pd
import pytest

from catseq.cli import main, read_series_csv, write_series_csv

SPEC = {
    "sensors": 6,
    "values_per_sensor": 3,
    "period": 6,
    "length": 600,
    "coupled_fraction": 0.5,
    "anomalies": [
        {"type": "unseen_letter", "start": 200, "duration": 12, "sensors": 1},
        {"type": "unseen_word", "start": 0.7, "duration": 12, "sensors": 1},
    ],
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> train -> detect -> eval, all through the CLI entry point."""
    root = tmp_path_factory.mktemp("cli")
    spec_path = root / "spec.json"
    spec_path.write_text(json.dumps(SPEC))
    data = root / "data"
    assert main(["synth", "--spec", str(spec_path), "--seed", "5", "--out", str(data)]) == 0
    config = root / "config.json"
    config.write_text(json.dumps({"model": "svd", "word_length": 4, "energy": 1.0}))
    bundle = root / "bundle"
    assert (
        main(["train", "--config", str(config), "--train", str(data / "train.csv"), "--out", str(bundle)])
        == 0
    )
    out = root / "report"
    assert main(["detect", "--bundle", str(bundle), "--test", str(data / "test.csv"), "--out", str(out)]) == 0
    metrics_dir = root / "metrics"
    assert (
        main(
            [
                "eval",
                "--events", str(out / "events.json"),
                "--truths", str(data / "truths.json"),
                "--out", str(metrics_dir),
            ]
        )
        == 0
    )
    return root


def test_series_csv_round_trip(tmp_path):
    frame = pd.DataFrame({"A": ["0", "1"], "B": ["x", "y"]}, index=pd.RangeIndex(2, name="time"))
    path = tmp_path / "series.csv"
    write_series_csv(frame, path)
    back = read_series_csv(path)
    assert back.equals(frame)
    assert list(back.index) == [0, 1]


def test_iso_time_column_treated_as_ordinal(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("time,A\n2023-01-01T00:00:00,0\n2023-01-01T00:00:01,1\n")
    frame = read_series_csv(path)
    assert list(frame.index) == [0, 1]
    assert frame["A"].tolist() == ["0", "1"]


def test_synth_outputs_are_deterministic(pipeline, tmp_path):
    spec_path = pipeline / "spec.json"
    again = tmp_path / "again"
    assert main(["synth", "--spec", str(spec_path), "--seed", "5", "--out", str(again)]) == 0
    for name in ("train.csv", "test.csv", "truths.json"):
        assert (again / name).read_bytes() == (pipeline / "data" / name).read_bytes()


def test_synth_count_law_downstream(pipeline):
    frame = read_series_csv(pipeline / "data" / "train.csv")
    assert len(frame) == SPEC["length"]
    from catseq import SentenceTokenizer

    corpus = SentenceTokenizer(word_length=5).fit_transform(frame)
    assert len(corpus) == SPEC["length"] - 5 + 1


def test_relative_anomaly_position(pipeline):
    truths = json.loads((pipeline / "data" / "truths.json").read_text())
    assert truths[1]["start"] == int(0.7 * SPEC["length"])


def test_detect_report_contents(pipeline):
    report = json.loads((pipeline / "report" / "events.json").read_text())
    assert report["ensemble_policy"] == "any"
    assert len(report["events"]) == 2
    scores = pd.read_csv(pipeline / "report" / "scores.csv")
    assert list(scores.columns) == ["time", "group", "score", "threshold_ratio"]


def test_eval_metrics_files(pipeline):
    metrics = json.loads((pipeline / "metrics" / "metrics.json").read_text())
    assert metrics["tp"] == 2 and metrics["fp"] == 0 and metrics["fn"] == 0
    table = (pipeline / "metrics" / "metrics.txt").read_text()
    assert "1.00" in table


def test_eval_tolerance_flag(pipeline, tmp_path):
    # a synthetic report whose single event starts 1.5% of the series early
    report = {
        "series_length": 1000,
        "events": [{"start": 85, "end": 90, "suspects": []}],
    }
    events_path = tmp_path / "events.json"
    events_path.write_text(json.dumps(report))
    truths_path = tmp_path / "truths.json"
    truths_path.write_text(json.dumps([{"start": 100, "end": 105, "culprit_sensors": None}]))
    strict_dir = tmp_path / "strict"
    loose_dir = tmp_path / "loose"
    assert main(["eval", "--events", str(events_path), "--truths", str(truths_path), "--out", str(strict_dir)]) == 0
    assert (
        main(
            [
                "eval",
                "--events", str(events_path),
                "--truths", str(truths_path),
                "--tolerance", "0.02",
                "--out", str(loose_dir),
            ]
        )
        == 0
    )
    strict = json.loads((strict_dir / "metrics.json").read_text())
    loose = json.loads((loose_dir / "metrics.json").read_text())
    assert strict["tp"] == 0 and loose["tp"] == 1


def test_train_flag_overrides_config(pipeline, tmp_path):
    bundle = tmp_path / "b"
    code = main(
        [
            "train",
            "--config", str(pipeline / "config.json"),
            "--train", str(pipeline / "data" / "train.csv"),
            "--wordl", "3",
            "--out", str(bundle),
        ]
    )
    assert code == 0
    manifest = json.loads((bundle / "manifest.json").read_text())
    assert manifest["config"]["word_length"] == 3


class TestExitCodes:
    def test_missing_input_file(self, tmp_path):
        code = main(["train", "--train", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "b")])
        assert code == 3

    def test_bad_config_key(self, pipeline, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"no_such_knob": 1}))
        code = main(
            ["train", "--config", str(bad), "--train", str(pipeline / "data" / "train.csv"), "--out", str(tmp_path / "b")]
        )
        assert code == 2

    def test_schema_mismatch_on_detect(self, pipeline, tmp_path):
        frame = read_series_csv(pipeline / "data" / "test.csv")
        broken = frame.drop(columns=[frame.columns[0]])
        path = tmp_path / "broken.csv"
        write_series_csv(broken, path)
        code = main(["detect", "--bundle", str(pipeline / "bundle"), "--test", str(path), "--out", str(tmp_path / "o")])
        assert code == 4

    def test_training_divergence(self, pipeline, tmp_path):
        config = tmp_path / "diverge.json"
        config.write_text(
            json.dumps(
                {
                    "model": "lstm",
                    "word_length": 3,
                    "epochs": 2,
                    "lstm_dims": [4, 4],
                    "embed_dim": 2,
                    "embed_epochs": 1,
                    "lookback": 2,
                    "learning_rate": float("nan"),
                }
            )
        )
        code = main(
            ["train", "--config", str(config), "--train", str(pipeline / "data" / "train.csv"), "--out", str(tmp_path / "b")]
        )
        assert code == 5

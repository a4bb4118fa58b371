import csv

import numpy as np
import pytest

from concurrent_har.data.ingest import ImageSet
from concurrent_har.errors import ConfigError
from concurrent_har.experiments import (
    CompositeExperiment,
    SyntheticExperiment,
    label_subset_sweep,
    labeled_subset,
    padding_trend,
    run_composite,
    run_synthetic,
    sweep_trend,
    write_sweep,
)
from concurrent_har.metrics import mean_average_precision, read_metrics_summary, xnor_accuracy


def tiny_digits(n=60, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    images = rng.integers(0, 256, (n, 28, 28, 1), dtype=np.uint8)
    return ImageSet(images, labels)


def fixed_predictions(seed=0, n=6, t=200):
    rng = np.random.default_rng(seed)
    g = (rng.random((n, t)) < 0.3).astype(np.uint8)
    s = np.clip(0.6 * g + rng.normal(0.2, 0.2, (n, t)), 0, 1)
    return (s > 0.5).astype(np.uint8), g, s


def test_padding_strictly_raises_accuracy_and_lowers_map():
    rows = padding_trend(*fixed_predictions())
    accs = [r[1] for r in rows]
    maps = [r[2] for r in rows]
    assert all(b > a for a, b in zip(accs, accs[1:]))
    assert all(b < a for a, b in zip(maps, maps[1:]))


def test_all_negative_truth_rows_leave_map_unchanged():
    # activities with no positives have no AP and are dropped from the mean
    p, g, s = fixed_predictions(1)
    t = g.shape[1]
    base = mean_average_precision(s, g).value
    gg = np.vstack([g, np.zeros((5, t), np.uint8)])
    ss = np.vstack([s, np.random.default_rng(0).random((5, t))])
    assert mean_average_precision(ss, gg).value == pytest.approx(base)
    assert xnor_accuracy(np.vstack([p, np.zeros((5, t), np.uint8)]), gg) > xnor_accuracy(p, g)


def test_labeled_subsets_nest():
    classes = np.arange(100)
    small, big = labeled_subset(classes, 10, 3), labeled_subset(classes, 50, 3)
    assert set(small) <= set(big)
    assert len(labeled_subset(classes, None, 3)) == 100
    with pytest.raises(ConfigError):
        labeled_subset(classes, 0, 3)


def test_experiment_validation():
    with pytest.raises(ConfigError, match="data-dir"):
        CompositeExperiment().validate()
    with pytest.raises(ConfigError, match="unknown dataset"):
        CompositeExperiment(dataset="svhn", data_dir="x").validate()


def test_run_composite_writes_outputs(tmp_path):
    src = tiny_digits()
    exp = CompositeExperiment(n_train=16, n_test=8, epochs=1, batch_cases=8, labeled=4)
    report = run_composite(exp, tmp_path, sources=(src, tiny_digits(30, 1)))
    assert report.n_seconds == 8 and report.n_activities == 4
    for name in ("metrics.txt", "predictions.txt", "truth.txt", "training.log", "final.ckpt"):
        assert (tmp_path / name).exists()
    summary = read_metrics_summary(tmp_path / "metrics.txt")
    assert summary["train_composites"] == 16
    assert summary["wall_seconds"] > 0
    assert len((tmp_path / "predictions.txt").read_text().splitlines()) == 8


def test_sweep_rows_and_budget_marker(tmp_path):
    src = (tiny_digits(), tiny_digits(30, 1))
    exp = CompositeExperiment(n_train=8, n_test=4, epochs=1, batch_cases=8)
    rows = label_subset_sweep(exp, [3, 5], tmp_path / "full", sources=src)
    assert [r["status"] for r in rows] == ["ok", "ok"]
    text = (tmp_path / "full" / "sweep.csv").read_text()
    assert "# partial" not in text
    parsed = list(csv.DictReader(text.splitlines()))
    assert [int(r["labels"]) for r in parsed] == [3, 5]

    rows = label_subset_sweep(exp, [3, 5], tmp_path / "cut", budget_seconds=0.0, sources=src)
    assert rows[1]["status"] == "not-run: budget exhausted"
    assert (tmp_path / "cut" / "sweep.csv").read_text().rstrip().endswith(
        "# partial: training budget exhausted before all sizes ran")


def test_sweep_sizes_must_ascend(tmp_path):
    with pytest.raises(ConfigError, match="ascending"):
        label_subset_sweep(CompositeExperiment(data_dir="x"), [50, 10], tmp_path, sources=(None, None))


def test_sweep_trend_directions(tmp_path):
    rows = [{"labels": 10, "accuracy": 0.8, "mAP": 0.6, "status": "ok"},
            {"labels": 50, "accuracy": 0.9, "mAP": 0.5, "status": "ok"},
            {"labels": 100, "status": "not-run: budget exhausted"}]
    assert sweep_trend(rows) == ([True], [True])
    write_sweep(tmp_path / "s.csv", rows, partial=True)
    assert (tmp_path / "s.csv").read_text().count("\n") == 5


def test_run_synthetic_small(tmp_path):
    exp = SyntheticExperiment(n_cases=3, length=12, epochs=2, minibatch_seconds=6)
    report = run_synthetic(exp, tmp_path)
    assert report.extra["train_cases"] == 2 and report.extra["test_cases"] == 1
    assert report.n_seconds == 12
    assert (tmp_path / "metrics.txt").exists()

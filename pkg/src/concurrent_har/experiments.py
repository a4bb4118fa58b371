"""End-to-end experiment drivers: composite images, label sweeps, synthetic cases."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data.composite import DEFAULT_GRID, TEST_COUNT, TRAIN_COUNT, make_composites
from .data.ingest import load_cifar100, load_mnist
from .data.synth import SyntheticCaseSpec, synth_cases
from .errors import ConfigError
from .metrics import metric_report, stack_predictions, write_metrics, xnor_accuracy, mean_average_precision
from .model.config import cifar_composite, desk_multimodal, mnist_composite
from .model.network import build_network
from .training import TrainPlan, evaluate, split_cases, train, write_predictions, write_truth

log = logging.getLogger(__name__)

DATASETS = {
    "mnist": (load_mnist, mnist_composite, "depth"),
    "cifar100": (load_cifar100, cifar_composite, "rgb"),
}


@dataclass
class CompositeExperiment:
    """Settings of one composite-image run; every field can be overridden
    from a config file."""

    dataset: str = "mnist"
    data_dir: Optional[str] = None
    n_train: int = TRAIN_COUNT
    n_test: int = TEST_COUNT
    labeled: Optional[int] = None  # first k classes of a seeded permutation; None = all
    grid: tuple = DEFAULT_GRID
    distinct: bool = True
    epochs: int = 20
    batch_cases: int = 64
    lr: float = 1e-3
    seed: int = 0
    eval_batch: int = 500

    def validate(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}; choose from {sorted(DATASETS)}")
        if not self.data_dir:
            raise ConfigError(f"--data-dir is required for the {self.dataset} composite experiment")
        if self.n_train < 1 or self.n_test < 1 or self.epochs < 0:
            raise ConfigError("n_train and n_test must be positive and epochs nonnegative")
        self.grid = tuple(self.grid)
        return self


def labeled_subset(classes, k, seed):
    """Nested subsets: the first ``k`` of one seeded class permutation."""
    classes = np.asarray(classes)
    if k is None:
        return classes
    if not 1 <= k <= len(classes):
        raise ConfigError(f"labeled subset size {k} outside 1..{len(classes)}")
    return np.sort(np.random.default_rng(seed).permutation(classes)[:k])


def _report_extra(exp, wall, train_seconds):
    return {"dataset": exp.dataset, "train_composites": exp.n_train, "test_composites": exp.n_test,
            "epochs": exp.epochs, "seed": exp.seed, "train_wall_seconds": round(train_seconds, 3),
            "wall_seconds": round(wall, 3)}


def run_composite(exp: CompositeExperiment, out_dir, sources=None, progress=None):
    """Make composites, train a single-branch model, evaluate, write outputs.

    ``sources`` may supply ``(train ImageSet, test ImageSet)`` directly;
    otherwise they are read from ``exp.data_dir``.  Writes ``metrics.txt``,
    ``predictions.txt``, ``truth.txt``, ``training.log`` and checkpoints.
    """
    tick = time.perf_counter()
    loader, make_config, modality = DATASETS[exp.dataset]
    if sources is None:
        exp.validate()
        sources = loader(exp.data_dir, "train"), loader(exp.data_dir, "test")
    src_train, src_test = sources
    subset = labeled_subset(src_train.classes, exp.labeled, exp.seed)
    train_set = make_composites(src_train, exp.n_train, subset, exp.grid, exp.seed, exp.distinct, stream=0)
    test_set = make_composites(src_test, exp.n_test, subset, exp.grid, exp.seed, exp.distinct, stream=1)

    config = make_config(len(subset))
    want = tuple(config.branches[modality].input_shape)
    if train_set.images.shape[1:] != want:
        raise ConfigError(f"composites are {train_set.images.shape[1:]} but the {config.name} preset expects "
                          f"{want}; adjust the grid or supply a matching config")
    model = build_network(config, seed=exp.seed)
    plan = TrainPlan(epochs=exp.epochs, minibatch_seconds=1, lr=exp.lr, seed=exp.seed,
                     batch_cases=exp.batch_cases, checkpoint_every=5)
    out = Path(out_dir)
    train_cases = train_set.cases("train", modality=modality)
    result = train(model, train_cases, plan, out_dir=out, progress=progress)
    del train_cases
    train_seconds = time.perf_counter() - tick

    preds = evaluate(model, test_set.cases("test", modality=modality), window_seconds=1,
                     batch_cases=exp.eval_batch)
    write_predictions(out / "predictions.txt", preds)
    write_truth(out / "truth.txt", preds)
    p, g, s = stack_predictions(preds)
    report = metric_report(p, g, s, extra=_report_extra(exp, time.perf_counter() - tick, train_seconds))
    if result.epoch_losses:
        report.extra["final_train_loss"] = round(result.epoch_losses[-1], 6)
    write_metrics(out / "metrics.txt", report, names=[f"class{c}" for c in subset])
    return report


SWEEP_FIELDS = ["labels", "accuracy", "exact_match_accuracy", "mAP", "wall_seconds", "status"]


def label_subset_sweep(exp: CompositeExperiment, sizes: Sequence[int], out_dir, budget_seconds=None,
                       sources=None, progress=None):
    """One model per labeled-subset size, ascending; rows go to ``sweep.csv``.

    When ``budget_seconds`` runs out, remaining sizes are written with status
    ``not-run: budget exhausted`` and the file ends with a ``# partial`` line.
    """
    sizes = [int(k) for k in sizes]
    if sizes != sorted(sizes) or len(set(sizes)) != len(sizes):
        raise ConfigError(f"sweep sizes must be strictly ascending, got {sizes}")
    loader = DATASETS[exp.dataset][0]
    if sources is None:
        exp.validate()
        sources = loader(exp.data_dir, "train"), loader(exp.data_dir, "test")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start, rows, partial = time.perf_counter(), [], False
    for k in sizes:
        if budget_seconds is not None and time.perf_counter() - start > budget_seconds:
            partial = True
            rows.append({"labels": k, "status": "not-run: budget exhausted"})
            continue
        t0 = time.perf_counter()
        rep = run_composite(replace(exp, labeled=k), out / f"labels{k:03d}", sources=sources, progress=progress)
        rows.append({"labels": k, "accuracy": rep.xnor_accuracy, "exact_match_accuracy": rep.exact_match_accuracy,
                     "mAP": rep.map, "wall_seconds": round(time.perf_counter() - t0, 3), "status": "ok"})
    write_sweep(out / "sweep.csv", rows, partial)
    return rows


def write_sweep(path, rows, partial=False):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in SWEEP_FIELDS})
        if partial:
            fh.write("# partial: training budget exhausted before all sizes ran\n")


def sweep_trend(rows):
    """Directions of accuracy and mAP between adjacent completed sizes."""
    done = [r for r in rows if r.get("status") == "ok"]
    acc_up = [b["accuracy"] > a["accuracy"] for a, b in zip(done, done[1:])]
    map_down = [b["mAP"] < a["mAP"] for a, b in zip(done, done[1:])]
    return acc_up, map_down


def padding_trend(p, g, s, added_counts=(10, 40), positive_rate=0.02, seed=0):
    """Accuracy and mAP as activities the predictor never fires on are added.

    Each added activity has rare true positives (``positive_rate``), all-zero
    predicted bits and uninformative low scores, which is how extra labeled
    classes look to a model that has learned to ignore them.  Returns rows
    ``(n_added, xnor_accuracy, mAP)``, starting with the unpadded set.
    """
    rng = np.random.default_rng(seed)
    p, g, s = (np.asarray(a) for a in (p, g, s))
    rows = [(0, xnor_accuracy(p, g), mean_average_precision(s, g).value)]
    t = g.shape[1]
    total = max(added_counts)
    extra_g = (rng.random((total, t)) < positive_rate).astype(np.uint8)
    extra_g[np.arange(total), rng.integers(0, t, total)] = 1  # keep every AP defined
    extra_s = rng.uniform(0.0, 0.1, (total, t))
    for n in added_counts:
        pp = np.vstack([p, np.zeros((n, t), np.uint8)])
        gg = np.vstack([g, extra_g[:n]])
        ss = np.vstack([s, extra_s[:n]])
        rows.append((n, xnor_accuracy(pp, gg), mean_average_precision(ss, gg).value))
    return rows


# -- synthetic multimodal -------------------------------------------------------------


@dataclass
class SyntheticExperiment:
    """Desk-scale multimodal run on generated cases.

    ``pos_weight`` scales the loss on positive bits; about 3 offsets the
    roughly one-in-four positive rate so the all-off code is not an easy
    resting point for the coding layer.
    """

    n_cases: int = 10
    length: int = 60
    n_activities: int = 8
    snr: float = 20.0
    epochs: int = 50
    lr: float = 3e-3
    minibatch_seconds: int = 10
    batch_cases: Optional[int] = 4  # None = every training case in one batch
    pos_weight: Optional[float] = 3.0
    rates: float = 0.03
    duration_mean: float = 12.0
    duration_sd: float = 4.0
    seed: int = 0


def run_synthetic(exp: SyntheticExperiment, out_dir=None, progress=None):
    """Generate cases, split by case, train the desk multimodal preset,
    evaluate held-out cases; returns the metric report."""
    tick = time.perf_counter()
    spec = SyntheticCaseSpec(seed=exp.seed, length=exp.length, n_activities=exp.n_activities, rates=exp.rates,
                             duration_mean=exp.duration_mean, duration_sd=exp.duration_sd, snr=exp.snr)
    cases = synth_cases(spec, exp.n_cases)
    train_cases, test_cases = split_cases(cases, 0.8, exp.seed)
    model = build_network(desk_multimodal(exp.n_activities), seed=exp.seed)
    plan = TrainPlan(epochs=exp.epochs, minibatch_seconds=exp.minibatch_seconds, lr=exp.lr, seed=exp.seed,
                     checkpoint_every=0, batch_cases=exp.batch_cases or len(train_cases),
                     pos_weight=exp.pos_weight)
    result = train(model, train_cases, plan, out_dir=out_dir, progress=progress)
    preds = evaluate(model, test_cases, window_seconds=exp.minibatch_seconds)
    p, g, s = stack_predictions(preds)
    report = metric_report(p, g, s, extra={"train_cases": len(train_cases), "test_cases": len(test_cases),
                                           "epochs": exp.epochs, "snr": exp.snr,
                                           "final_train_loss": result.epoch_losses[-1] if result.epoch_losses
                                           else float("nan"),
                                           "wall_seconds": round(time.perf_counter() - tick, 3)})
    if out_dir:
        out = Path(out_dir)
        write_predictions(out / "predictions.txt", preds)
        write_truth(out / "truth.txt", preds)
        write_metrics(out / "metrics.txt", report)
    return report

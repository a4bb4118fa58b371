"""Multi-label evaluation over (activity x second) bit matrices.

Every matrix argument is oriented ``A x T``: one row per activity, one
column per time instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, HarError


class UndefinedMetricError(HarError, ValueError):
    """No activity has enough data for the requested summary."""


def _bits(a, name):
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise DimensionError(name, "A x T matrix", a.shape)
    if not np.isin(a, (0, 1)).all():
        raise DimensionError(name, "0/1 entries", np.unique(a)[:5])
    return a.astype(bool)


def _pair(p, g):
    p, g = _bits(p, "predictions"), _bits(g, "ground truth")
    if p.shape != g.shape:
        raise DimensionError("metrics", g.shape, p.shape)
    return p, g


def xnor_accuracy(p, g):
    """Fraction of (activity, second) cells where prediction equals truth."""
    p, g = _pair(p, g)
    return float(np.mean(p == g))


def hamming_distance(p, g):
    p, g = _pair(p, g)
    return int(np.sum(p != g))


def exact_match_accuracy(p, g):
    """Fraction of seconds whose full code is predicted without error."""
    p, g = _pair(p, g)
    return float(np.mean(np.all(p == g, axis=0)))


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    def __post_init__(self):
        arrs = [np.atleast_1d(np.asarray(v, dtype=np.int64)) for v in (self.tp, self.fp, self.tn, self.fn)]
        if len({a.shape for a in arrs}) != 1:
            raise DimensionError("ConfusionCounts", "equal-length count vectors", [a.shape for a in arrs])
        if any((a < 0).any() for a in arrs):
            raise DimensionError("ConfusionCounts", "nonnegative counts", "negative entry")
        self.tp, self.fp, self.tn, self.fn = arrs

    @classmethod
    def from_bits(cls, p, g):
        p, g = _pair(p, g)
        return cls((p & g).sum(1), (p & ~g).sum(1), (~p & ~g).sum(1), (~p & g).sum(1))

    @property
    def totals(self):
        return self.tp + self.fp + self.tn + self.fn


def _ratio(num, den):
    num, den = np.asarray(num, float), np.asarray(den, float)
    undefined = den == 0
    out = np.divide(num, den, out=np.zeros_like(num), where=~undefined)
    return out, undefined


@dataclass
class ActivityMetrics:
    """Per-activity scores; ``undefined`` marks entries set to 0 by convention."""

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    informedness: np.ndarray
    markedness: np.ndarray
    accuracy: np.ndarray
    undefined: dict = field(default_factory=dict)

    NAMES = ("accuracy", "precision", "recall", "f1", "informedness", "markedness")

    def as_rows(self, names=None):
        n = len(self.precision)
        names = names or [str(i) for i in range(n)]
        for i in range(n):
            yield [names[i]] + [float(getattr(self, k)[i]) for k in self.NAMES] + [
                ",".join(k for k in self.NAMES if self.undefined.get(k, np.zeros(n, bool))[i]) or "-"
            ]


def per_activity_metrics(counts: ConfusionCounts):
    tp, fp, tn, fn = (c.astype(float) for c in (counts.tp, counts.fp, counts.tn, counts.fn))
    precision, u_prec = _ratio(tp, tp + fp)
    recall, u_rec = _ratio(tp, tp + fn)
    tnr, u_tnr = _ratio(tn, tn + fp)
    npv, u_npv = _ratio(tn, tn + fn)
    f1, u_f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    u_f1 = u_f1 | u_prec | u_rec
    f1 = np.where(u_f1, 0.0, f1)
    inf_undef = u_rec | u_tnr
    informedness = np.where(inf_undef, 0.0, recall + tnr - 1.0)
    mark_undef = u_prec | u_npv
    markedness = np.where(mark_undef, 0.0, precision + npv - 1.0)
    accuracy, _ = _ratio(tp + tn, counts.totals)
    return ActivityMetrics(
        precision, recall, f1, informedness, markedness, accuracy,
        undefined={"precision": u_prec, "recall": u_rec, "f1": u_f1,
                   "informedness": inf_undef, "markedness": mark_undef,
                   "accuracy": counts.totals == 0},
    )


def average_precision(scores, truth):
    """Ranking AP for one activity; NaN when the truth has no positives.

    Instances are ranked by descending score with ties going to the earlier
    time index.  AP is the mean, over positive instances, of the precision
    at that instance's rank.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    truth = _bits(truth, "truth").ravel()
    if scores.shape != truth.shape:
        raise DimensionError("average_precision", truth.shape, scores.shape)
    if not truth.any():
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    hits = truth[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


@dataclass
class MapResult:
    value: float
    per_activity: np.ndarray
    defined: np.ndarray

    @property
    def n_defined(self):
        return int(self.defined.sum())


def mean_average_precision(scores, g):
    """Mean AP over the activities that have at least one positive."""
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[None, :]
    g = _bits(g, "ground truth")
    if s.shape != g.shape:
        raise DimensionError("mean_average_precision", g.shape, s.shape)
    aps = np.array([average_precision(s[i], g[i]) for i in range(g.shape[0])])
    defined = ~np.isnan(aps)
    if not defined.any():
        raise UndefinedMetricError("no activity has a positive instance; mAP is undefined")
    return MapResult(float(aps[defined].mean()), aps, defined)


@dataclass
class ConcurrencyProfile:
    histogram: np.ndarray
    durations: np.ndarray
    occurrences: np.ndarray
    mean_run: np.ndarray
    sd_run: np.ndarray

    @property
    def fractions(self):
        total = self.histogram.sum()
        return self.histogram / total if total else self.histogram.astype(float)

    def fraction_at_least(self, k):
        return float(self.fractions[k:].sum())

    def histogram_rows(self):
        for k, (n, f) in enumerate(zip(self.histogram, self.fractions)):
            yield [k, int(n), float(f)]

    def activity_rows(self, names=None):
        names = names or [str(i) for i in range(len(self.durations))]
        for i, name in enumerate(names):
            yield [name, int(self.durations[i]), int(self.occurrences[i]), float(self.mean_run[i]),
                   float(self.sd_run[i])]


def _runs(row):
    padded = np.concatenate([[False], row, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return edges[1::2] - edges[::2]


def concurrency_profile(g):
    """Seconds per concurrency level plus per-activity run statistics."""
    g = _bits(g, "ground truth")
    a = g.shape[0]
    hist = np.bincount(g.sum(0), minlength=a + 1)
    runs = [_runs(r) for r in g]
    return ConcurrencyProfile(
        histogram=hist,
        durations=g.sum(1),
        occurrences=np.array([len(r) for r in runs]),
        mean_run=np.array([r.mean() if len(r) else 0.0 for r in runs]),
        sd_run=np.array([r.std() if len(r) else 0.0 for r in runs]),
    )


# -- reports ------------------------------------------------------------------------


def stack_predictions(predictions):
    """Concatenate per-case predictions into A x T matrices (P, G, S)."""
    preds = list(predictions)
    if not preds:
        raise DimensionError("stack_predictions", "at least one case", 0)
    p = np.concatenate([c.bits for c in preds]).T
    g = np.concatenate([c.truth for c in preds]).T
    s = np.concatenate([c.scores for c in preds]).T
    return p, g, s


@dataclass
class MetricReport:
    xnor_accuracy: float
    exact_match_accuracy: float
    map: float
    map_defined: int
    n_activities: int
    n_seconds: int
    activity: ActivityMetrics
    ap: np.ndarray
    profile: ConcurrencyProfile
    extra: dict = field(default_factory=dict)

    def summary(self):
        out = {
            "accuracy": self.xnor_accuracy,
            "exact_match_accuracy": self.exact_match_accuracy,
            "mAP": self.map,
            "mAP_defined_activities": self.map_defined,
            "activities": self.n_activities,
            "seconds": self.n_seconds,
        }
        out.update(self.extra)
        return out


def metric_report(p, g, s, extra=None):
    p, g = _pair(p, g)
    try:
        m = mean_average_precision(s, g)
        map_value, ap, n_def = m.value, m.per_activity, m.n_defined
    except UndefinedMetricError:
        map_value, ap, n_def = float("nan"), np.full(g.shape[0], np.nan), 0
    return MetricReport(
        xnor_accuracy=xnor_accuracy(p, g),
        exact_match_accuracy=exact_match_accuracy(p, g),
        map=map_value,
        map_defined=n_def,
        n_activities=g.shape[0],
        n_seconds=g.shape[1],
        activity=per_activity_metrics(ConfusionCounts.from_bits(p, g)),
        ap=ap,
        profile=concurrency_profile(g),
        extra=dict(extra or {}),
    )


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_metrics(path, report, names=None):
    """Tab-delimited: summary block, per-activity table, concurrency table."""
    with open(path, "w") as fh:
        for k, v in report.summary().items():
            fh.write(f"{k}\t{_fmt(v)}\n")
        fh.write("\n# per-activity\n")
        fh.write("activity\t" + "\t".join(ActivityMetrics.NAMES) + "\tAP\tundefined\n")
        for row, ap in zip(report.activity.as_rows(names), report.ap):
            fh.write("\t".join(_fmt(v) for v in row[:-1]) + f"\t{_fmt(float(ap))}\t{row[-1]}\n")
        fh.write("\n# concurrency\nk\tseconds\tfraction\n")
        for row in report.profile.histogram_rows():
            fh.write("\t".join(_fmt(v) for v in row) + "\n")
        fh.write("\n# activity profile\nactivity\tduration\toccurrences\tmean_run\tsd_run\n")
        for row in report.profile.activity_rows(names):
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def read_metrics_summary(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                break
            k, v = line.split("\t")
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out

"""scikit-learn style wrapper around the recognizer and its training loop."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, SequenceError
from .metrics import xnor_accuracy
from .model.config import NetworkConfig, preset
from .model.network import build_network
from .training import CaseSequence, TrainPlan, evaluate, train


def check_case(case):
    """Return ``case`` if it is a usable :class:`CaseSequence`."""
    if not isinstance(case, CaseSequence):
        raise TypeError(f"expected a CaseSequence, got {type(case).__name__}")
    return case


def check_cases(X, require_labels=True):
    """Normalize one case or an iterable of cases to a non-empty list that
    shares modalities and activity count."""
    cases = [X] if isinstance(X, CaseSequence) else list(X)
    if not cases:
        raise SequenceError("no cases given")
    for c in cases:
        check_case(c)
    mods = {tuple(sorted(c.inputs)) for c in cases}
    if len(mods) != 1:
        raise SequenceError(f"cases carry different modality sets: {sorted(mods)}")
    if require_labels:
        widths = {c.n_activities for c in cases}
        if len(widths) != 1:
            raise SequenceError(f"cases disagree on the number of activities: {sorted(widths)}")
        if widths == {0}:
            raise SequenceError("cases have no label columns to fit")
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise SequenceError("case ids must be unique")
    return cases


class ConcurrentActivityRecognizer(BaseEstimator):
    """Fit on whole cases, predict one activity code per second.

    ``X`` is a :class:`CaseSequence` or a list of them; labels travel with
    the cases, so ``y`` is ignored.  ``predict`` and ``predict_proba``
    return the per-second rows of every case stacked in order.
    """

    def __init__(self, config="desk_multimodal", epochs=50, lr=3e-3, minibatch_seconds=10, batch_cases=4,
                 pos_weight=None, dropout_rate=None, window_seconds=60, random_state=0, dtype="float32"):
        self.config = config
        self.epochs = epochs
        self.lr = lr
        self.minibatch_seconds = minibatch_seconds
        self.batch_cases = batch_cases
        self.pos_weight = pos_weight
        self.dropout_rate = dropout_rate
        self.window_seconds = window_seconds
        self.random_state = random_state
        self.dtype = dtype

    def _network_config(self, n_activities):
        if isinstance(self.config, NetworkConfig):
            cfg = self.config
        elif isinstance(self.config, str):
            cfg = preset(self.config)
        elif isinstance(self.config, dict):
            cfg = NetworkConfig.from_dict(self.config)
        else:
            raise ConfigError(f"config must be a preset name, dict or NetworkConfig, got {type(self.config)}")
        if cfg.n_activities != n_activities:
            cfg = cfg.with_activities(n_activities)
        if self.dropout_rate is not None:
            cfg = replace(cfg, dropout_rate=self.dropout_rate).validate()
        return cfg

    def fit(self, X, y=None):
        cases = check_cases(X)
        seed = 0 if self.random_state is None else int(self.random_state)
        self.config_ = self._network_config(cases[0].n_activities)
        self.model_ = build_network(self.config_, seed=seed, dtype=np.dtype(self.dtype))
        plan = TrainPlan(epochs=self.epochs, minibatch_seconds=self.minibatch_seconds, lr=self.lr, seed=seed,
                         batch_cases=min(self.batch_cases, len(cases)), checkpoint_every=0,
                         pos_weight=self.pos_weight, dropout_rate=self.config_.dropout_rate)
        self.train_result_ = train(self.model_, cases, plan)
        self.n_activities_ = self.config_.n_activities
        self.modalities_ = tuple(sorted(cases[0].inputs))
        return self

    def _predictions(self, X):
        check_is_fitted(self, "model_")
        cases = check_cases(X, require_labels=False)
        return evaluate(self.model_, cases, window_seconds=self.window_seconds)

    def predict_proba(self, X):
        """Per-second activity scores in (0, 1), ``(total seconds, N)``."""
        return np.concatenate([p.scores for p in self._predictions(X)])

    def predict(self, X):
        """Per-second activity bits, ``(total seconds, N)`` uint8."""
        return np.concatenate([p.bits for p in self._predictions(X)])

    def decode(self, X):
        """Per case: ``{case_id: [set of active indices per second]}``."""
        return {p.case_id: [set(np.flatnonzero(b).tolist()) for b in p.bits] for p in self._predictions(X)}

    def score(self, X, y=None):
        """XNOR accuracy over every (activity, second) cell."""
        preds = self._predictions(X)
        bits = np.concatenate([p.bits for p in preds])
        truth = np.concatenate([p.truth for p in preds])
        if truth.shape != bits.shape:
            raise SequenceError(f"labels are {truth.shape}, predictions {bits.shape}")
        return xnor_accuracy(bits.T, truth.T)

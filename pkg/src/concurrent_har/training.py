"""Case-level training and evaluation.

Cases are never split internally: each one is walked second by second with
LSTM states reset at its start.  Gradients are truncated at minibatch
window edges while state values carry across.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, NonFiniteError, SequenceError
from .nn import Adam, load_checkpoint, mse_loss, save_checkpoint
from .model.config import NetworkConfig
from .model.network import Recognizer, threshold

log = logging.getLogger(__name__)


@dataclass
class CaseSequence:
    """One complete process run.

    ``inputs`` maps each modality to a ``(T, H, W, C)`` array and ``labels``
    is the ``(T, N)`` ground-truth bit matrix.  Seconds are consecutive from
    ``start_second``.
    """

    case_id: str
    inputs: dict
    labels: np.ndarray
    start_second: int = 0

    def __post_init__(self):
        self.case_id = str(self.case_id)
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1:
            raise SequenceError(f"case {self.case_id}: labels must be (seconds, N), got {labels.shape}")
        if not np.isin(labels, (0, 1)).all():
            raise SequenceError(f"case {self.case_id}: labels must be 0/1 bits")
        self.labels = labels.astype(np.uint8)
        if not self.inputs:
            raise SequenceError(f"case {self.case_id}: no modality inputs")
        for m, a in self.inputs.items():
            if np.asarray(a).shape[0] != labels.shape[0]:
                raise SequenceError(
                    f"case {self.case_id}: {m} has {np.asarray(a).shape[0]} seconds, labels have {labels.shape[0]}"
                )

    @property
    def length(self):
        return self.labels.shape[0]

    @property
    def n_activities(self):
        return self.labels.shape[1]

    @property
    def seconds(self):
        return np.arange(self.start_second, self.start_second + self.length)

    @classmethod
    def from_records(cls, case_id, records):
        """Build from ``(second, inputs, bits)`` records, checking order and gaps."""
        records = list(records)
        if not records:
            raise SequenceError(f"case {case_id}: no records")
        secs = [int(r[0]) for r in records]
        for a, b in zip(secs, secs[1:]):
            if b != a + 1:
                raise SequenceError(f"case {case_id}: second {b} follows {a}; seconds must be consecutive")
        widths = {len(r[2]) for r in records}
        if len(widths) != 1:
            raise SequenceError(f"case {case_id}: codes have differing bit counts {sorted(widths)}")
        mods = records[0][1].keys()
        inputs = {m: np.stack([np.asarray(r[1][m]) for r in records]) for m in mods}
        return cls(case_id, inputs, np.stack([np.asarray(r[2]) for r in records]), secs[0])

    def window(self, start, stop):
        return {m: a[start:stop] for m, a in self.inputs.items()}, self.labels[start:stop]


@dataclass
class TrainPlan:
    split_fraction: float = 0.8
    epochs: int = 50
    minibatch_seconds: int = 60
    lr: float = 1e-3
    dropout_rate: Optional[float] = None
    seed: int = 0
    batch_cases: int = 1
    checkpoint_every: int = 10
    pos_weight: Optional[float] = None
    shuffle_cases: bool = True

    def validate(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must lie in (0, 1)")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.minibatch_seconds < 1:
            raise ConfigError("minibatch_seconds must be positive")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_cases < 1:
            raise ConfigError("batch_cases must be positive")
        if self.dropout_rate is not None and not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout rate must lie in [0, 1)")
        if self.pos_weight is not None and self.pos_weight <= 0:
            raise ConfigError("pos_weight must be positive")
        return self


PLAN_PRESETS = {
    "desk": TrainPlan(),
    "paper-faithful": TrainPlan(epochs=1000, minibatch_seconds=60, dropout_rate=0.5),
}


def plan_from_dict(d):
    d = dict(d)
    base = PLAN_PRESETS[d.pop("preset")] if "preset" in d else TrainPlan()
    unknown = set(d) - set(TrainPlan.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
    return replace(base, **d).validate()


def split_cases(cases, fraction=0.8, seed=0):
    """Shuffle whole cases by seed; the first ceil(fraction * K) train."""
    cases = list(cases)
    if len(cases) < 2:
        raise ConfigError(f"need at least 2 cases to split, got {len(cases)}")
    if not 0.0 < fraction < 1.0:
        raise ConfigError("fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(cases))
    n_train = min(len(cases) - 1, math.ceil(fraction * len(cases)))
    train = [cases[i] for i in order[:n_train]]
    test = [cases[i] for i in order[n_train:]]
    check_disjoint(train, test)
    return train, test


def check_disjoint(train, test):
    shared = {c.case_id for c in train} & {c.case_id for c in test}
    if shared:
        raise SequenceError(f"cases appear in both train and test: {sorted(shared)}")


def check_cases(model, cases):
    cfg = model.config
    for c in cases:
        if c.n_activities != cfg.n_activities:
            raise DimensionError(f"case {c.case_id} labels", f"{cfg.n_activities} bits", c.n_activities)
        for m, spec in cfg.branches.items():
            if m not in c.inputs:
                raise DimensionError(f"case {c.case_id}", f"modality {m!r}", sorted(c.inputs))
            shape = tuple(np.asarray(c.inputs[m]).shape[1:])
            if shape != tuple(spec.input_shape):
                raise DimensionError(f"case {c.case_id} {m}", tuple(spec.input_shape), shape)


def _batches(cases, order, size):
    if size == 1:
        return [[cases[i]] for i in order]
    by_len = {}
    for i in order:
        by_len.setdefault(cases[i].length, []).append(cases[i])
    out = []
    for group in by_len.values():
        out.extend(group[j : j + size] for j in range(0, len(group), size))
    return out


def _stack(batch, start, stop):
    x = {m: np.stack([c.inputs[m][start:stop] for c in batch]) for m in batch[0].inputs}
    y = np.stack([c.labels[start:stop] for c in batch])
    return x, y


@dataclass
class TrainResult:
    epoch_losses: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    steps: int = 0
    best_epoch: Optional[int] = None
    best_validation_loss: Optional[float] = None


def save_model(path, model, optimizer=None, meta=None):
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    info = {"config": model.config.to_dict(), "dtype": model.dtype.name, "seed": model.seed}
    if optimizer is not None:
        st = optimizer.state
        for k in model.params:
            if k in st.m:
                arrays[f"adam.m/{k}"] = st.m[k]
                arrays[f"adam.v/{k}"] = st.v[k]
        info["adam"] = {"step": st.step, "lr": st.lr, "beta1": st.beta1, "beta2": st.beta2,
                        "epsilon": st.epsilon}
    info.update(meta or {})
    save_checkpoint(path, arrays, info)


def load_model(path):
    """Rebuild a model from a checkpoint; returns ``(model, meta, arrays)``."""
    arrays, meta = load_checkpoint(path)
    config = NetworkConfig.from_dict(meta["config"])
    model = Recognizer(config, seed=meta.get("seed", 0), dtype=meta.get("dtype", "float32"))
    model.load_state_dict({k[6:]: v for k, v in arrays.items() if k.startswith("param/")})
    return model, meta, arrays


def _restore_optimizer(optimizer, meta, arrays):
    st = optimizer.state
    info = meta.get("adam")
    if not info:
        return
    st.step = info["step"]
    for k in optimizer.parameters:
        if f"adam.m/{k}" in arrays:
            st.m[k] = arrays[f"adam.m/{k}"].copy()
            st.v[k] = arrays[f"adam.v/{k}"].copy()


def window_loss(model, x, y, states, plan, rng, training=True):
    scores, states = model.forward_window(x, states, training=training, rng=rng,
                                          dropout_rate=plan.dropout_rate)
    weight = None if plan.pos_weight is None else np.where(y == 1, plan.pos_weight, 1.0)
    return mse_loss(scores, y, weight), states


def train(model, cases, plan=None, out_dir=None, validation=None, resume_from=None, progress=None):
    """Fit ``model`` in place; returns a :class:`TrainResult`.

    With ``out_dir`` set this writes ``training.log``, a checkpoint every
    ``plan.checkpoint_every`` epochs, ``best.ckpt`` when validation cases
    are supplied, and ``nan_abort.ckpt`` if a loss goes non-finite.
    """
    plan = (plan or TrainPlan()).validate()
    cases = list(cases)
    check_cases(model, cases)
    if validation:
        check_cases(model, validation)
        check_disjoint(cases, validation)
    if plan.batch_cases > 1 and any(c.length != cases[0].length for c in cases):
        log.info("cases of unequal length are batched by length")
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    optimizer = Adam(model.params, lr=plan.lr)
    rng = np.random.default_rng(plan.seed)
    start_epoch = 1
    if resume_from:
        loaded, meta, arrays = load_model(resume_from)
        model.load_state_dict(loaded.state_dict())
        _restore_optimizer(optimizer, meta, arrays)
        start_epoch = meta.get("epoch", 0) + 1
        rng = np.random.default_rng([plan.seed, start_epoch])

    result = TrainResult(steps=optimizer.state.step)
    log_fh = open(out / "training.log", "a" if resume_from else "w") if out else None
    if log_fh and not resume_from:
        log_fh.write("epoch\tmean_loss\twall_seconds\n")
    tick = time.perf_counter()
    try:
        for epoch in range(start_epoch, plan.epochs + 1):
            order = rng.permutation(len(cases)) if plan.shuffle_cases else np.arange(len(cases))
            total, count = 0.0, 0
            for batch in _batches(cases, order, plan.batch_cases):
                states = model.zero_states(len(batch))
                length = batch[0].length
                for w0 in range(0, length, plan.minibatch_seconds):
                    x, y = _stack(batch, w0, min(length, w0 + plan.minibatch_seconds))
                    loss, states = window_loss(model, x, y, states, plan, rng)
                    value = float(loss.data)
                    if not np.isfinite(value):
                        _abort(out, model, optimizer, epoch, f"loss became {value} in epoch {epoch}")
                    optimizer.zero_grad()
                    loss.backward()
                    try:
                        optimizer.step()
                    except NonFiniteError as exc:
                        _abort(out, model, optimizer, epoch, str(exc), exc.name)
                    result.steps += 1
                    states = {k: s.detach() for k, s in states.items()}
                    total += value * y.size
                    count += y.size
            mean = total / count if count else float("nan")
            elapsed = time.perf_counter() - tick
            result.epoch_losses.append(mean)
            result.wall_times.append(elapsed)
            if log_fh:
                log_fh.write(f"{epoch}\t{mean:.8g}\t{elapsed:.3f}\n")
                log_fh.flush()
            if progress:
                progress(epoch, mean, elapsed)
            if out and plan.checkpoint_every and epoch % plan.checkpoint_every == 0:
                save_model(out / f"epoch{epoch:04d}.ckpt", model, optimizer, {"epoch": epoch})
            if validation:
                vloss = evaluation_loss(model, validation, plan)
                if result.best_validation_loss is None or vloss < result.best_validation_loss:
                    result.best_validation_loss, result.best_epoch = vloss, epoch
                    if out:
                        save_model(out / "best.ckpt", model, optimizer,
                                   {"epoch": epoch, "validation_loss": vloss})
    finally:
        if log_fh:
            log_fh.close()
        optimizer.zero_grad()
    if out and plan.epochs >= start_epoch:
        save_model(out / "final.ckpt", model, optimizer, {"epoch": plan.epochs})
    return result


def _abort(out, model, optimizer, epoch, message, name=None):
    # parameters have not been updated by the failing window yet
    if out:
        save_model(out / "nan_abort.ckpt", model, optimizer, {"epoch": epoch - 1, "aborted": True})
        message += f"; last good parameters written to {out / 'nan_abort.ckpt'}"
    raise NonFiniteError(message, name=name)


def evaluation_loss(model, cases, plan=None):
    plan = plan or TrainPlan()
    total, count = 0.0, 0
    for pred in evaluate(model, cases, plan.minibatch_seconds):
        total += float(np.sum((pred.scores - pred.truth) ** 2))
        count += pred.truth.size
    return total / count


@dataclass
class CasePrediction:
    case_id: str
    seconds: np.ndarray
    scores: np.ndarray
    bits: np.ndarray
    truth: np.ndarray


def evaluate(model, cases, window_seconds=60, batch_cases=1):
    """Per-second scores and bits for each case, states reset at case start.

    ``batch_cases > 1`` groups equal-length cases into one forward pass,
    which is faster but may differ from single-case results in the last
    float bits.
    """
    cases = list(cases)
    check_cases(model, cases)
    preds = {}
    for batch in _batches(cases, range(len(cases)), batch_cases):
        states = model.zero_states(len(batch))
        length = batch[0].length
        chunks = []
        for w0 in range(0, length, window_seconds):
            x, _ = _stack(batch, w0, min(length, w0 + window_seconds))
            scores, states = model.predict_window(x, states)
            chunks.append(scores)
        scores = np.concatenate(chunks, axis=1)
        for i, c in enumerate(batch):
            s = scores[i]
            preds[c.case_id] = CasePrediction(c.case_id, c.seconds, s, threshold(s, model.config.threshold),
                                              c.labels)
    return [preds[c.case_id] for c in cases]


# -- prediction files -------------------------------------------------------------


def write_predictions(path, predictions):
    """One row per (case, second): case_id, second, N scores, N bits."""
    with open(path, "w") as fh:
        for p in predictions:
            for t, sec in enumerate(p.seconds):
                scores = " ".join(f"{v:.9g}" for v in p.scores[t])
                bits = " ".join(str(int(b)) for b in p.bits[t])
                fh.write(f"{p.case_id}\t{int(sec)}\t{scores}\t{bits}\n")


def write_truth(path, predictions):
    with open(path, "w") as fh:
        for p in predictions:
            for t, sec in enumerate(p.seconds):
                fh.write(f"{p.case_id}\t{int(sec)}\t{' '.join(str(int(b)) for b in p.truth[t])}\n")


def _rows(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line and not line.startswith("#"):
                yield lineno, line.split("\t")


def read_predictions(path, truth_path=None):
    """Parse a prediction file (and optionally a truth file) back into cases."""
    by_case = {}
    for lineno, cols in _rows(path):
        if len(cols) != 4:
            raise FormatError(f"line {lineno}: expected 4 tab-separated fields, got {len(cols)}", path=path)
        scores = np.array(cols[2].split(), dtype=np.float64)
        bits = np.array(cols[3].split(), dtype=np.uint8)
        if scores.shape != bits.shape:
            raise FormatError(f"line {lineno}: {scores.size} scores but {bits.size} bits", path=path)
        by_case.setdefault(cols[0], []).append((int(cols[1]), scores, bits))
    truth = {}
    if truth_path:
        for lineno, cols in _rows(truth_path):
            if len(cols) != 3:
                raise FormatError(f"line {lineno}: expected 3 tab-separated fields", path=truth_path)
            truth[(cols[0], int(cols[1]))] = np.array(cols[2].split(), dtype=np.uint8)
    out = []
    for cid, rows in by_case.items():
        secs = np.array([r[0] for r in rows])
        n = rows[0][1].size
        if truth_path:
            missing = [s for s in secs if (cid, s) not in truth]
            if missing:
                raise FormatError(f"case {cid}: no truth for seconds {missing[:5]}", path=truth_path)
            t = np.stack([truth[(cid, s)] for s in secs])
        else:
            t = np.zeros((len(rows), n), dtype=np.uint8)
        out.append(CasePrediction(cid, secs, np.stack([r[1] for r in rows]), np.stack([r[2] for r in rows]), t))
    return out


# -- case files -------------------------------------------------------------------


def save_case(path, case: CaseSequence):
    """``.npz`` holding ``input/<modality>`` arrays, ``labels`` and metadata."""
    arrays = {f"input/{m}": np.asarray(a) for m, a in case.inputs.items()}
    np.savez(path, labels=case.labels, case_id=np.array(case.case_id),
             start_second=np.array(case.start_second), **arrays)


def load_case(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            inputs = {k[6:]: z[k] for k in z.files if k.startswith("input/")}
            return CaseSequence(str(z["case_id"]), inputs, z["labels"], int(z["start_second"]))
    except (KeyError, ValueError, OSError) as exc:
        raise FormatError(f"not a case file: {exc}", path=str(path)) from None


def save_cases(directory, cases):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for c in cases:
        save_case(directory / f"{c.case_id}.npz", c)


def load_cases(directory, ids=None):
    """All ``*.npz`` cases in a directory, sorted by id; ``ids`` filters."""
    paths = sorted(Path(directory).glob("*.npz"))
    if not paths:
        raise FileNotFoundError(f"no case files (*.npz) in {directory}")
    cases = [load_case(p) for p in paths]
    if ids is not None:
        wanted = set(ids)
        cases = [c for c in cases if c.case_id in wanted]
        missing = wanted - {c.case_id for c in cases}
        if missing:
            raise SequenceError(f"cases not found in {directory}: {sorted(missing)[:5]}")
    return cases

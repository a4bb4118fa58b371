"""Synthetic multimodal cases with known concurrent-activity ground truth.

Activities are interval events: onsets arrive per second with a fixed
probability, durations are normal draws rounded to whole seconds, and
overlapping events of one type merge into a single instance.  Every active
bit adds a fixed pattern to the sensor streams: a floor blob in one RSS
object channel, a frequency band in the audio map and a rectangle in the
depth frame.  Gaussian noise with standard deviation ``1 / snr`` is added
to all streams (pattern amplitude is 1).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ..errors import ConfigError
from ..training import CaseSequence

DEPTH_SHAPE = (32, 32, 1)
AUDIO_SHAPE = (16, 16, 1)
RSS_SHAPE = (36, 48, 25)


class Event(NamedTuple):
    activity: int
    start: int
    stop: int  # exclusive


@dataclass
class SyntheticCaseSpec:
    """Temporal process and signal rules for one synthetic case.

    ``rates``, ``duration_mean`` and ``duration_sd`` are per activity (a
    scalar is broadcast).  Each ``(a, b)`` in ``pairs`` makes every event of
    ``a`` also start an event of ``b`` over the same interval with
    probability ``pair_strength``.  ``modalities`` chooses which streams
    the activity patterns are written to.
    """

    seed: int = 0
    length: int = 120
    n_activities: int = 8
    rates: object = 0.02
    duration_mean: object = 20.0
    duration_sd: object = 5.0
    pairs: Sequence = ()
    pair_strength: float = 1.0
    snr: float = 4.0
    modalities: tuple = ("depth", "audio", "rss")
    depth_shape: tuple = DEPTH_SHAPE
    audio_shape: tuple = AUDIO_SHAPE
    rss_shape: tuple = RSS_SHAPE

    def per_activity(self, value, name):
        v = np.broadcast_to(np.asarray(value, float), (self.n_activities,)).copy()
        if (v < 0).any():
            raise ConfigError(f"{name} must be nonnegative")
        return v

    def validate(self):
        if self.length < 1 or self.n_activities < 1:
            raise ConfigError("length and n_activities must be positive")
        rates = self.per_activity(self.rates, "rates")
        if (rates > 1).any():
            raise ConfigError("rates are per-second onset probabilities and must not exceed 1")
        self.per_activity(self.duration_mean, "duration_mean")
        self.per_activity(self.duration_sd, "duration_sd")
        for a, b in self.pairs:
            if not (0 <= a < self.n_activities and 0 <= b < self.n_activities) or a == b:
                raise ConfigError(f"co-occurrence pair ({a}, {b}) is not two distinct activities")
        if self.snr <= 0:
            raise ConfigError("snr must be positive")
        unknown = set(self.modalities) - {"depth", "audio", "rss"}
        if unknown or not self.modalities:
            raise ConfigError(f"modalities must be a nonempty subset of depth/audio/rss, got {self.modalities}")
        return self


def trauma_like(seed=0, length=600, n_activities=8, **kw):
    """Long overlapping activities, most seconds have two or more active."""
    params = dict(rates=0.015, duration_mean=20.0, duration_sd=6.0, pairs=((0, 1), (2, 3)))
    params.update(kw)
    return SyntheticCaseSpec(seed=seed, length=length, n_activities=n_activities, **params)


def merge_events(events):
    """Union overlapping or touching intervals of the same activity."""
    merged = []
    for ev in sorted(events):
        if merged and merged[-1].activity == ev.activity and ev.start <= merged[-1].stop:
            last = merged[-1]
            merged[-1] = Event(last.activity, last.start, max(last.stop, ev.stop))
        else:
            merged.append(ev)
    return merged


def sample_events(spec: SyntheticCaseSpec, rng=None):
    spec.validate()
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    rates = spec.per_activity(spec.rates, "rates")
    mean = spec.per_activity(spec.duration_mean, "duration_mean")
    sd = spec.per_activity(spec.duration_sd, "duration_sd")
    t = spec.length
    raw = []
    for k in range(spec.n_activities):
        onsets = np.flatnonzero(rng.random(t) < rates[k])
        durs = np.maximum(1, np.round(rng.normal(mean[k], sd[k], size=onsets.size))).astype(int)
        raw.extend(Event(k, int(s), int(min(t, s + d))) for s, d in zip(onsets, durs))
    for a, b in spec.pairs:
        for ev in [e for e in raw if e.activity == a]:
            if rng.random() < spec.pair_strength:
                raw.append(Event(b, ev.start, ev.stop))
    return merge_events(raw)


def events_to_bits(events, length, n_activities):
    bits = np.zeros((length, n_activities), np.uint8)
    for ev in events:
        bits[ev.start : ev.stop, ev.activity] = 1
    return bits


# -- signal templates ---------------------------------------------------------------


def _rss_templates(n, shape):
    rows, cols, objects = shape
    out = np.zeros((n,) + tuple(shape), np.float32)
    yy, xx = np.mgrid[0:rows, 0:cols]
    for k in range(n):
        # golden-ratio spacing keeps the blob centres apart
        cy = (0.15 + 0.7 * ((k * 0.618) % 1.0)) * rows
        cx = (0.1 + 0.8 * (k + 0.5) / n) * cols
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * (0.06 * rows) ** 2))
        out[k, :, :, k % objects] = blob
    return out


def _audio_templates(n, shape):
    h, w, _ = shape
    out = np.zeros((n,) + tuple(shape), np.float32)
    for k in range(n):
        lo = (k * h) // n
        hi = max(lo + 1, ((k + 1) * h) // n)
        out[k, lo:hi, :, 0] = 1.0
    return out


def _depth_templates(n, shape):
    h, w, _ = shape
    out = np.zeros((n,) + tuple(shape), np.float32)
    side = max(2, int(round(np.sqrt(n))))
    ch, cw = h // side, w // side
    for k in range(n):
        r, c = divmod(k % (side * side), side)
        top, left = r * ch + ch // 4, c * cw + cw // 4
        out[k, top : top + ch // 2, left : left + cw // 2, 0] = 1.0
    return out


_TEMPLATES = {"depth": _depth_templates, "audio": _audio_templates, "rss": _rss_templates}


def render(bits, spec: SyntheticCaseSpec, rng):
    """Per-second sensor arrays for a ``(T, N)`` bit matrix."""
    t, n = bits.shape
    shapes = {"depth": spec.depth_shape, "audio": spec.audio_shape, "rss": spec.rss_shape}
    sigma = 1.0 / spec.snr
    out = {}
    for m, shape in shapes.items():
        clean = np.zeros((t,) + tuple(shape), np.float32)
        if m in spec.modalities:
            tmpl = _TEMPLATES[m](n, shape).reshape(n, -1)
            clean = (bits.astype(np.float32) @ tmpl).reshape(clean.shape)
        out[m] = clean + rng.normal(0.0, sigma, size=clean.shape).astype(np.float32)
    return out


def synth_events_and_case(spec: SyntheticCaseSpec, case_id: Optional[str] = None):
    """``(merged events, CaseSequence)`` drawn from one generator."""
    rng = np.random.default_rng(spec.seed)
    events = sample_events(spec, rng)
    bits = events_to_bits(events, spec.length, spec.n_activities)
    return events, CaseSequence(case_id or f"synth{spec.seed}", render(bits, spec, rng), bits)


def synth_case(spec: SyntheticCaseSpec, case_id: Optional[str] = None):
    return synth_events_and_case(spec, case_id)[1]


def synth_cases(spec: SyntheticCaseSpec, count, prefix="synth"):
    """``count`` independent cases; case ``i`` uses seed ``(spec.seed, i)``."""
    seeds = np.random.SeedSequence(spec.seed).generate_state(count)
    out = []
    for i, s in enumerate(seeds):
        one = replace(spec, seed=int(s))
        out.append(synth_case(one, f"{prefix}{i:03d}"))
    return out

"""Per-second log mel filterbank energies (MFSC, no DCT)."""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.signal import resample_poly

from ..errors import DimensionError
from .resize import bilinear_resize

SAMPLE_RATE = 10_240
FRAME_LEN = 512
N_FRAMES = 20
N_BANDS = 36
LOG_FLOOR = 1e-10
PRESENTED_SHAPE = (64, 64)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def band_edges(n_bands=N_BANDS, sample_rate=SAMPLE_RATE, fmin=0.0, fmax=None):
    """``n_bands + 2`` mel-spaced edge frequencies; band m spans edges m..m+2."""
    fmax = sample_rate / 2 if fmax is None else fmax
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_bands + 2))


def band_centers(n_bands=N_BANDS, sample_rate=SAMPLE_RATE):
    return band_edges(n_bands, sample_rate)[1:-1]


def mel_filterbank(n_bands=N_BANDS, frame_len=FRAME_LEN, sample_rate=SAMPLE_RATE,
                   shape="triangle"):
    """``(n_bands, frame_len // 2 + 1)`` band responses over the one-sided DFT bins.

    ``shape="triangle"`` is the usual mel triangle peaking at the band centre;
    ``shape="hamming"`` uses a Hamming taper over the same band support.
    """
    edges = band_edges(n_bands, sample_rate)
    freqs = np.arange(frame_len // 2 + 1) * sample_rate / frame_len
    bank = np.zeros((n_bands, freqs.size))
    for m in range(n_bands):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        if shape == "triangle":
            up = (freqs - lo) / (mid - lo)
            down = (hi - freqs) / (hi - mid)
            bank[m] = np.clip(np.minimum(up, down), 0.0, None)
        elif shape == "hamming":
            inside = (freqs >= lo) & (freqs <= hi)
            phase = (freqs[inside] - lo) / (hi - lo)
            bank[m, inside] = 0.54 - 0.46 * np.cos(2 * np.pi * phase)
        else:
            raise ValueError(f"unknown band shape {shape!r}")
    return bank


def resample_audio(samples, rate, target=SAMPLE_RATE):
    samples = np.asarray(samples, dtype=np.float64)
    if rate == target:
        return samples
    g = gcd(int(rate), int(target))
    return resample_poly(samples, target // g, int(rate) // g, axis=0)


def mixdown(samples, mode="mono"):
    """``(n,)`` or ``(n, channels)`` PCM -> list of 1-D channel signals."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        return [samples]
    if mode == "mono":
        return [samples.mean(axis=1)]
    if mode == "stack":
        return [samples[:, c] for c in range(samples.shape[1])]
    raise ValueError(f"unknown channel mode {mode!r}")


@dataclass
class MfscMap:
    raw: np.ndarray
    presented: np.ndarray


def frame_energies(samples, frame_count=N_FRAMES, frame_len=FRAME_LEN, window=True):
    """``|X(k)|^2`` for each non-overlapping frame, one-sided."""
    frames = samples[: frame_count * frame_len].reshape(frame_count, frame_len)
    if window:
        frames = frames * np.hamming(frame_len)
    spec = np.fft.rfft(frames, axis=1)
    return spec.real**2 + spec.imag**2


def mfsc_extract(samples, frame_count=N_FRAMES, frame_len=FRAME_LEN, bands=N_BANDS,
                 sample_rate=SAMPLE_RATE, band_shape="triangle", presented=PRESENTED_SHAPE,
                 floor=LOG_FLOOR, filterbank=None):
    """MFSC map for one second of mono PCM already at ``sample_rate``."""
    samples = np.asarray(samples, dtype=np.float64)
    need = frame_count * frame_len
    if samples.ndim != 1 or samples.size < need:
        raise DimensionError("mfsc_extract", f">= {need} mono samples", samples.shape)
    if filterbank is None:
        filterbank = mel_filterbank(bands, frame_len, sample_rate, band_shape)
    energy = frame_energies(samples, frame_count, frame_len) @ filterbank.T
    raw = np.log(np.maximum(energy, floor))
    shown = bilinear_resize(raw, *presented) if presented else raw
    return MfscMap(raw.astype(np.float32), shown.astype(np.float32))


def mfsc_seconds(samples, rate, channels="mono", **kw):
    """Split a recording into whole seconds and extract one map per second.

    Returns ``(seconds, channels, H, W)`` of presented maps.
    """
    out = []
    for sig in mixdown(samples, channels):
        sig = resample_audio(sig, rate)
        n = sig.size // SAMPLE_RATE
        out.append([mfsc_extract(sig[i * SAMPLE_RATE : (i + 1) * SAMPLE_RATE], **kw).presented
                    for i in range(n)])
    return np.asarray(out, dtype=np.float32).transpose(1, 0, 2, 3)

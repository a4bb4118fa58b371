"""Readers and writers for the on-disk dataset formats.

Each reader validates structure up front and raises ``FormatError`` with a
byte offset (or line number for text logs) when a file disagrees with its
declared format.
"""

from __future__ import annotations

import gzip
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile

from ..errors import FormatError
from ..preprocess.rss import format_rfid_log, parse_rfid_log

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_PIXELS = 32 * 32 * 3
CIFAR100_RECORD = 2 + CIFAR_PIXELS

_IDX_DTYPES = {0x08: np.uint8, 0x09: np.int8, 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
_IDX_CODES = {np.dtype(np.uint8): 0x08, np.dtype(np.int8): 0x09, np.dtype(">i2"): 0x0B,
              np.dtype(">i4"): 0x0C, np.dtype(">f4"): 0x0D, np.dtype(">f8"): 0x0E}


def _read_bytes(path):
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _write_bytes(path, payload):
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(payload)


# -- IDX ------------------------------------------------------------------------------


def parse_idx(buf, expect_magic=None, path=None):
    if len(buf) < 4:
        raise FormatError(f"expected a 4-byte IDX magic number, file has {len(buf)} bytes", 0, path)
    if buf[0] != 0 or buf[1] != 0:
        raise FormatError(f"IDX magic must start with two zero bytes, found {buf[:2].hex()}", 0, path)
    magic = int.from_bytes(buf[:4], "big")
    if expect_magic is not None and magic != expect_magic:
        raise FormatError(f"expected IDX magic 0x{expect_magic:08x}, found 0x{magic:08x}", 0, path)
    code, ndim = buf[2], buf[3]
    if code not in _IDX_DTYPES:
        raise FormatError(f"unknown IDX element type 0x{code:02x}", 2, path)
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise FormatError(f"expected {header} header bytes, file has {len(buf)}", len(buf), path)
    dims = tuple(int.from_bytes(buf[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim))
    dtype = np.dtype(_IDX_DTYPES[code])
    need = int(np.prod(dims)) * dtype.itemsize
    have = len(buf) - header
    if have != need:
        raise FormatError(f"expected {need} data bytes for dims {dims}, found {have}",
                          header + min(have, need), path)
    return np.frombuffer(buf, dtype=dtype, offset=header).reshape(dims)


def read_idx(path, expect_magic=None):
    """Arbitrary IDX tensor; ``expect_magic`` pins the type/rank word."""
    return parse_idx(_read_bytes(path), expect_magic, path=str(path))


def read_idx_images(path):
    return read_idx(path, IDX_IMAGES_MAGIC)


def read_idx_labels(path):
    return read_idx(path, IDX_LABELS_MAGIC)


def encode_idx(array):
    array = np.asarray(array)
    dt = array.dtype.newbyteorder(">") if array.dtype.itemsize > 1 else array.dtype
    if dt not in _IDX_CODES:
        raise FormatError(f"dtype {array.dtype} has no IDX encoding")
    head = bytes([0, 0, _IDX_CODES[dt], array.ndim])
    head += b"".join(int(d).to_bytes(4, "big") for d in array.shape)
    return head + np.ascontiguousarray(array, dtype=dt).tobytes()


def write_idx(path, array):
    _write_bytes(path, encode_idx(array))


# -- CIFAR-100 binary ---------------------------------------------------------------


@dataclass
class ImageSet:
    """Images ``(n, H, W, C)`` uint8 with integer ``labels``; ``coarse`` is
    kept only for CIFAR-100."""

    images: np.ndarray
    labels: np.ndarray
    coarse: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.labels)

    @property
    def classes(self):
        return np.unique(self.labels)

    def subset(self, index):
        coarse = None if self.coarse is None else self.coarse[index]
        return ImageSet(self.images[index], self.labels[index], coarse)


def parse_cifar100(buf, path=None):
    n, rest = divmod(len(buf), CIFAR100_RECORD)
    if rest:
        raise FormatError(f"expected a multiple of {CIFAR100_RECORD} bytes, found {len(buf)} "
                          f"({n} whole records and {rest} trailing bytes)", n * CIFAR100_RECORD, path)
    rec = np.frombuffer(buf, dtype=np.uint8).reshape(n, CIFAR100_RECORD)
    # planes are R, G, B, each 32 rows of 32 pixels
    images = rec[:, 2:].reshape(n, 3, 32, 32).transpose(0, 2, 3, 1)
    fine = rec[:, 1].astype(np.int64)
    if n and fine.max() >= 100:
        bad = int(np.argmax(fine >= 100))
        raise FormatError(f"fine label {fine[bad]} out of range 0..99", bad * CIFAR100_RECORD + 1, path)
    return ImageSet(np.ascontiguousarray(images), fine, rec[:, 0].astype(np.int64))


def read_cifar100(path):
    return parse_cifar100(_read_bytes(path), path=str(path))


def encode_cifar100(dataset: ImageSet):
    n = len(dataset)
    coarse = np.zeros(n, np.uint8) if dataset.coarse is None else dataset.coarse
    rec = np.empty((n, CIFAR100_RECORD), np.uint8)
    rec[:, 0] = coarse
    rec[:, 1] = dataset.labels
    rec[:, 2:] = np.asarray(dataset.images, np.uint8).transpose(0, 3, 1, 2).reshape(n, CIFAR_PIXELS)
    return rec.tobytes()


def write_cifar100(path, dataset):
    _write_bytes(path, encode_cifar100(dataset))


# -- dataset directories --------------------------------------------------------------


def _find(directory, stems):
    for stem in stems:
        for suffix in ("", ".gz"):
            p = Path(directory) / f"{stem}{suffix}"
            if p.exists():
                return p
    raise FileNotFoundError(f"none of {stems} under {directory}")


def load_mnist(directory, split="train"):
    """IDX pair from a directory using the usual MNIST file names."""
    prefix = "train" if split == "train" else "t10k"
    images = read_idx_images(_find(directory, [f"{prefix}-images-idx3-ubyte", f"{prefix}-images.idx3-ubyte"]))
    labels = read_idx_labels(_find(directory, [f"{prefix}-labels-idx1-ubyte", f"{prefix}-labels.idx1-ubyte"]))
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels", path=str(directory))
    return ImageSet(images[..., None], labels.astype(np.int64))


def load_cifar100(directory, split="train"):
    return read_cifar100(_find(directory, [f"{split}.bin", f"cifar-100-binary/{split}.bin"]))


def save_mnist(directory, dataset: ImageSet, split="train"):
    prefix = "train" if split == "train" else "t10k"
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_idx(directory / f"{prefix}-images-idx3-ubyte", np.asarray(dataset.images, np.uint8)[..., 0])
    write_idx(directory / f"{prefix}-labels-idx1-ubyte", np.asarray(dataset.labels, np.uint8))


# -- sensor recordings ------------------------------------------------------------------


@dataclass
class AudioClip:
    rate: int
    samples: np.ndarray  # float64 in [-1, 1], (n,) or (n, channels)

    @property
    def seconds(self):
        return self.samples.shape[0] / self.rate


def read_wav(path):
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"unreadable WAV: {exc}", path=str(path)) from None
    if data.dtype.kind == "i":
        data = data / float(2 ** (8 * data.dtype.itemsize - 1))
    elif data.dtype.kind == "u":
        data = (data.astype(np.float64) - 128.0) / 128.0
    return AudioClip(int(rate), np.asarray(data, np.float64))


def write_wav(path, clip: AudioClip):
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, clip.rate, pcm)


DEPTH_MAGIC = "DEPTHRAW"
_DEPTH_HEADER = re.compile(rb"DEPTHRAW (?P<version>\d+) width=(?P<w>\d+) height=(?P<h>\d+) frames=(?P<n>\d+)"
                           rb" fps=(?P<fps>[0-9.]+) max_range=(?P<range>[0-9.]+)(?: start=(?P<start>-?\d+))?\n")


@dataclass
class DepthRecording:
    """``frames`` is ``(n, height, width)`` uint16 millimetres, 0 = no reading,
    captured at ``fps`` from second ``start``."""

    frames: np.ndarray
    fps: float = 1.0
    max_range: float = 8000.0
    start: int = 0

    @property
    def seconds(self):
        return int(len(self.frames) // self.fps)

    def per_second(self):
        """The first frame of each whole second, ``(seconds, height, width)``."""
        idx = np.floor(np.arange(self.seconds) * self.fps + 1e-9).astype(int)
        return self.frames[idx]


def parse_depth_raw(buf, path=None):
    m = _DEPTH_HEADER.match(buf)
    if not m:
        line = buf.split(b"\n", 1)[0][:80]
        raise FormatError("expected header 'DEPTHRAW 1 width=W height=H frames=N fps=F max_range=R', "
                          f"found {line!r}", 0, path)
    w, h, n = int(m["w"]), int(m["h"]), int(m["n"])
    offset = m.end()
    need, have = w * h * n * 2, len(buf) - offset
    if have != need:
        raise FormatError(f"expected {need} bytes of little-endian uint16 frames, found {have}",
                          offset + min(have, need), path)
    frames = np.frombuffer(buf, dtype="<u2", offset=offset).reshape(n, h, w).astype(np.uint16)
    fps = float(m["fps"])
    if fps <= 0:
        raise FormatError(f"fps must be positive, got {fps}", 0, path)
    return DepthRecording(frames, fps, float(m["range"]), int(m["start"] or 0))


def read_depth_raw(path):
    return parse_depth_raw(_read_bytes(path), path=str(path))


def encode_depth_raw(rec: DepthRecording):
    n, h, w = rec.frames.shape
    head = (f"{DEPTH_MAGIC} 1 width={w} height={h} frames={n} fps={rec.fps:g} "
            f"max_range={rec.max_range:g} start={rec.start}\n").encode()
    return head + np.asarray(rec.frames, "<u2").tobytes()


def write_depth_raw(path, rec):
    _write_bytes(path, encode_depth_raw(rec))


def read_rfid_log(path):
    with open(path) as fh:
        try:
            return parse_rfid_log(fh)
        except FormatError as exc:
            raise FormatError(str(exc), path=str(path)) from None


def write_rfid_log(path, reads):
    Path(path).write_text(format_rfid_log(reads))


READERS = {
    "idx": read_idx,
    "cifar-bin": read_cifar100,
    "wav": read_wav,
    "depth-raw": read_depth_raw,
    "rfid-log": read_rfid_log,
}


def ingest(path, fmt):
    """Read ``path`` as one of ``idx``, ``cifar-bin``, ``wav``, ``depth-raw``
    or ``rfid-log``."""
    try:
        reader = READERS[fmt]
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}; choose from {sorted(READERS)}") from None
    return reader(path)

import logging

import numpy as np

from ..errors import DimensionError
from .resize import bilinear_resize

log = logging.getLogger(__name__)

DEPTH_SIZE = 256
DEFAULT_MAX_RANGE = 8000.0  # millimetres
UNDEFINED = 0


def fill_holes(frame, sentinel=UNDEFINED):
    """Replace sentinel pixels by the nearest valid pixel in raster order.

    A forward raster scan carries the last valid value into each hole; a
    reverse scan then fills holes that precede the first valid pixel.
    """
    frame = np.asarray(frame)
    flat = frame.reshape(-1)
    valid = flat != sentinel
    if not valid.any():
        return None
    n = flat.size
    pos = np.arange(n)
    prev = np.maximum.accumulate(np.where(valid, pos, -1))
    nxt = np.minimum.accumulate(np.where(valid, pos, n)[::-1])[::-1]
    src = np.where(prev >= 0, prev, nxt)
    return flat[src].reshape(frame.shape)


def depth_prepare(frame, size=DEPTH_SIZE, max_range=DEFAULT_MAX_RANGE, sentinel=UNDEFINED):
    """Hole-fill, bilinear-resize to ``size x size`` and scale to [0, 1]."""
    frame = np.asarray(frame)
    if frame.ndim == 3 and frame.shape[-1] == 1:
        frame = frame[..., 0]
    if frame.ndim != 2:
        raise DimensionError("depth_prepare", "2-d depth frame", frame.shape)
    filled = fill_holes(frame, sentinel)
    if filled is None:
        log.warning("depth frame has no defined pixels; emitting zeros")
        return np.zeros((size, size, 1), dtype=np.float32)
    out = bilinear_resize(filled.astype(np.float64), size, size)
    out = np.clip(out / float(max_range), 0.0, 1.0)
    return out[..., None].astype(np.float32)

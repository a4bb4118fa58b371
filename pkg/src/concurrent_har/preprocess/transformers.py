"""Stateless scikit-learn transformers over per-second sensor streams.

Each ``transform`` returns a ``(seconds, H, W, C)`` float32 array ready for
the matching ConvNet branch.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .depth import DEFAULT_MAX_RANGE, DEPTH_SIZE, depth_prepare
from .mfsc import FRAME_LEN, N_BANDS, N_FRAMES, PRESENTED_SHAPE, mfsc_seconds
from .rss import N_OBJECTS, build_rss_map, default_geometry


class RssMapTransformer(TransformerMixin, BaseEstimator):
    """List of per-second RFID read lists -> stacked RSS maps."""

    def __init__(self, geometry=None, n_objects=N_OBJECTS):
        self.geometry = geometry
        self.n_objects = n_objects

    def fit(self, X=None, y=None):
        self.geometry_ = self.geometry or default_geometry()
        return self

    def transform(self, X):
        geometry = getattr(self, "geometry_", None) or self.geometry or default_geometry()
        maps = [build_rss_map(reads, geometry, self.n_objects).grid for reads in X]
        if not maps:
            return np.zeros((0, geometry.rows, geometry.cols, self.n_objects), np.float32)
        return np.stack(maps)


class MfscTransformer(TransformerMixin, BaseEstimator):
    """PCM recording (any rate) -> one presented MFSC map per whole second."""

    def __init__(self, sample_rate=10_240, band_shape="triangle", channels="mono",
                 presented_shape=PRESENTED_SHAPE, frame_count=N_FRAMES, frame_len=FRAME_LEN,
                 bands=N_BANDS):
        self.sample_rate = sample_rate
        self.band_shape = band_shape
        self.channels = channels
        self.presented_shape = presented_shape
        self.frame_count = frame_count
        self.frame_len = frame_len
        self.bands = bands

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        maps = mfsc_seconds(X, self.sample_rate, self.channels, frame_count=self.frame_count,
                            frame_len=self.frame_len, bands=self.bands,
                            band_shape=self.band_shape, presented=tuple(self.presented_shape))
        # (seconds, channels, H, W) -> channels last
        return np.ascontiguousarray(maps.transpose(0, 2, 3, 1))


class DepthTransformer(TransformerMixin, BaseEstimator):
    """``(seconds, H, W)`` raw depth frames -> ``(seconds, size, size, 1)``."""

    def __init__(self, size=DEPTH_SIZE, max_range=DEFAULT_MAX_RANGE):
        self.size = size
        self.max_range = max_range

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        frames = [depth_prepare(f, self.size, self.max_range) for f in X]
        if not frames:
            return np.zeros((0, self.size, self.size, 1), np.float32)
        return np.stack(frames)

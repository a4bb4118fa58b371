"""Multi-label composite images tiled from single-label source images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError
from ..training import CaseSequence
from .ingest import ImageSet

DEFAULT_GRID = (2, 3)
TRAIN_COUNT = 50_000
TEST_COUNT = 10_000


@dataclass
class CompositeSet:
    """``images`` is ``(n, rows*th, cols*tw, C)`` uint8; ``labels`` is
    ``(n, len(subset))`` with bit k set when class ``subset[k]`` appears
    in at least one tile; ``tile_classes`` records every tile's class in
    placement order."""

    images: np.ndarray
    labels: np.ndarray
    tile_classes: np.ndarray
    subset: np.ndarray
    grid: tuple

    def __len__(self):
        return len(self.labels)

    def cases(self, prefix="img", scale=255.0, modality="depth", dtype=np.float32):
        """One single-second :class:`CaseSequence` per composite.

        Pixels are scaled once into a shared float array; each case holds
        a view into it, so this costs one copy of the set.
        """
        x = (self.images.astype(dtype) / dtype(scale))[:, None]
        return [CaseSequence(f"{prefix}{i:06d}", {modality: x[i]}, self.labels[i : i + 1])
                for i in range(len(self))]


def label_vector(classes, subset):
    """Multi-hot vector over ``subset``; order of ``classes`` is irrelevant."""
    subset = np.asarray(subset)
    return np.isin(subset, np.asarray(classes)).astype(np.uint8)


def tile(tiles, grid=DEFAULT_GRID):
    """Arrange ``(S, th, tw, C)`` tiles row-major into one image."""
    tiles = np.asarray(tiles)
    rows, cols = grid
    if tiles.ndim != 4 or tiles.shape[0] != rows * cols:
        raise DimensionError("tile", f"({rows * cols}, th, tw, C) tiles", tiles.shape)
    _, th, tw, c = tiles.shape
    return tiles.reshape(rows, cols, th, tw, c).transpose(0, 2, 1, 3, 4).reshape(rows * th, cols * tw, c)


def _draw(rng, by_class, counts, s, distinct):
    if not distinct:
        pick = rng.integers(0, counts.sum(), size=s)
        cum = np.cumsum(counts)
        cls = np.searchsorted(cum, pick, side="right")
        within = pick - np.concatenate([[0], cum])[cls]
        return [by_class[c][i] for c, i in zip(cls, within)], cls
    # uniform over remaining images, never reusing a class
    left = counts.astype(float).copy()
    chosen, classes = [], []
    for _ in range(s):
        c = rng.choice(len(left), p=left / left.sum())
        chosen.append(by_class[c][rng.integers(len(by_class[c]))])
        classes.append(c)
        left[c] = 0.0
    return chosen, np.asarray(classes)


def make_composites(source: ImageSet, count, labeled_subset=None, grid=DEFAULT_GRID, seed=0,
                    distinct=True, stream=0):
    """Draw ``count`` composites of ``rows*cols`` tiles from ``source``.

    Sample ``i`` uses its own generator derived from ``(seed, stream, i)``,
    so any sample can be regenerated alone; give train and test sets
    different streams.  Classes outside ``labeled_subset``
    still appear in the pixels but never in the labels.
    """
    images = np.asarray(source.images)
    if images.ndim != 4:
        raise DimensionError("make_composites", "(n, H, W, C) source images", images.shape)
    labels = np.asarray(source.labels)
    classes = np.unique(labels)
    subset = classes if labeled_subset is None else np.asarray(labeled_subset)
    if subset.size == 0:
        raise ConfigError("labeled_subset must name at least one class")
    if not np.isin(subset, classes).all():
        raise ConfigError(f"labeled classes {sorted(set(subset) - set(classes))} are absent from the source")
    s = grid[0] * grid[1]
    if distinct and s > len(classes):
        raise ConfigError(f"{s} tiles need {s} distinct classes but the source has {len(classes)}; "
                          "allow repeats to sample with shared classes")

    by_class = [np.flatnonzero(labels == c) for c in classes]
    counts = np.array([len(b) for b in by_class])
    picks = np.empty((count, s), np.int64)
    tile_classes = np.empty((count, s), labels.dtype)
    for i in range(count):
        rng = np.random.default_rng([seed, stream, i])
        idx, cls = _draw(rng, by_class, counts, s, distinct)
        picks[i] = idx
        tile_classes[i] = classes[cls]

    n, th, tw, c = count, *images.shape[1:]
    rows, cols = grid
    out = images[picks].reshape(n, rows, cols, th, tw, c).transpose(0, 1, 3, 2, 4, 5)
    out = np.ascontiguousarray(out.reshape(n, rows * th, cols * tw, c))
    multi_hot = (tile_classes[:, :, None] == subset[None, None, :]).any(axis=1).astype(np.uint8)
    return CompositeSet(out, multi_hot, tile_classes, subset, tuple(grid))

"""RSS maps: RFID signal strengths projected onto antenna coverage areas."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..errors import ConfigError, FormatError

log = logging.getLogger(__name__)

FLOOR_ROWS = 36
FLOOR_COLS = 48
N_OBJECTS = 25
N_ANTENNAS = 8
RSS_FLOOR_DBM = -95.0
RSS_SPAN_DB = 65.0


class RfidRead(NamedTuple):
    timestamp: float
    tag_id: int
    antenna_id: int
    rss: float


@dataclass(frozen=True)
class Antenna:
    """Coverage region of one reader antenna, in decimeters on the floorplan.

    ``x`` runs along the 48-cell axis and ``y`` along the 36-cell axis.
    Circles use ``radius``; ellipses use ``semi_axes`` and ``rotation`` (degrees).
    """

    x: float
    y: float
    shape: str = "circle"
    radius: float = 12.0
    semi_axes: tuple = (12.0, 12.0)
    rotation: float = 0.0

    def __post_init__(self):
        if self.shape not in ("circle", "ellipse"):
            raise ConfigError(f"unknown antenna shape {self.shape!r}")
        if self.shape == "circle" and not self.radius > 0:
            raise ConfigError(f"antenna radius must be positive, got {self.radius}")
        if self.shape == "ellipse" and not all(a > 0 for a in self.semi_axes):
            raise ConfigError(f"ellipse semi-axes must be positive, got {self.semi_axes}")

    def mask(self, rows, cols):
        yy, xx = np.mgrid[0:rows, 0:cols]
        dx = xx + 0.5 - self.x
        dy = yy + 0.5 - self.y
        if self.shape == "circle":
            return dx * dx + dy * dy <= self.radius**2
        t = math.radians(self.rotation)
        u = dx * math.cos(t) + dy * math.sin(t)
        v = -dx * math.sin(t) + dy * math.cos(t)
        a, b = self.semi_axes
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0


@dataclass(frozen=True)
class AntennaGeometry:
    antennas: tuple
    rows: int = FLOOR_ROWS
    cols: int = FLOOR_COLS
    _masks: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.antennas:
            raise ConfigError("geometry needs at least one antenna")
        masks = np.stack([a.mask(self.rows, self.cols) for a in self.antennas])
        empty = [i for i, m in enumerate(masks) if not m.any()]
        if empty:
            raise ConfigError(f"antenna coverage does not intersect the floorplan: {empty}")
        object.__setattr__(self, "_masks", masks)

    @property
    def n_antennas(self):
        return len(self.antennas)

    @property
    def masks(self):
        """Boolean ``(n_antennas, rows, cols)`` coverage masks."""
        return self._masks

    def with_radii(self, radii):
        """Copy with circle radii replaced from ``{antenna_id: radius}``."""
        ants = list(self.antennas)
        for i, r in radii.items():
            if ants[i].shape == "circle":
                ants[i] = replace(ants[i], radius=float(r))
            else:
                # keep the ellipse's aspect ratio, rescale the lateral axis
                a, b = ants[i].semi_axes
                ants[i] = replace(ants[i], semi_axes=(float(r) * a / b, float(r)))
        return AntennaGeometry(tuple(ants), self.rows, self.cols)

    def to_dict(self):
        return {
            "floorplan": {"rows": self.rows, "cols": self.cols, "scale_dm": 1},
            "antennas": [
                {"id": i, "center": [a.x, a.y], "shape": a.shape, "radius": a.radius,
                 "semi_axes": list(a.semi_axes), "rotation": a.rotation}
                for i, a in enumerate(self.antennas)
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        plan = doc.get("floorplan", {})
        ants = []
        for entry in sorted(doc["antennas"], key=lambda e: e.get("id", 0)):
            x, y = entry["center"]
            ants.append(Antenna(x=float(x), y=float(y), shape=entry.get("shape", "circle"),
                                radius=float(entry.get("radius", 12.0)),
                                semi_axes=tuple(entry.get("semi_axes", (12.0, 12.0))),
                                rotation=float(entry.get("rotation", 0.0))))
        return cls(tuple(ants), int(plan.get("rows", FLOOR_ROWS)), int(plan.get("cols", FLOOR_COLS)))


def default_geometry():
    """Seven ceiling circles of 1.2 m and one tilted wall antenna as an ellipse."""
    ceiling = [(8, 8), (24, 8), (40, 8), (8, 26), (24, 26), (40, 26), (24, 17)]
    ants = [Antenna(x, y, "circle", radius=12.0) for x, y in ceiling]
    ants.append(Antenna(44, 18, "ellipse", semi_axes=(16.0, 9.0), rotation=90.0))
    return AntennaGeometry(tuple(ants))


def load_geometry(path):
    return AntennaGeometry.from_dict(json.loads(Path(path).read_text()))


def save_geometry(geometry, path):
    Path(path).write_text(json.dumps(geometry.to_dict(), indent=2))


def calibrate_coverage(walk_measurements, n_antennas=None):
    """Coverage radius per antenna = mean tag-visibility-loss distance (dm).

    ``walk_measurements`` is an iterable of ``(antenna_id, distance)``.
    """
    by_antenna = defaultdict(list)
    for antenna_id, dist in walk_measurements:
        by_antenna[int(antenna_id)].append(float(dist))
    expected = range(n_antennas) if n_antennas is not None else sorted(by_antenna)
    missing = [a for a in expected if not by_antenna.get(a)]
    if missing:
        raise ConfigError(f"no walk measurements for antennas {missing}")
    return {a: sum(by_antenna[a]) / len(by_antenna[a]) for a in expected}


def normalize_rss(dbm):
    """Map dBm to [0, 1] so that 0 means no signal and stronger is larger."""
    return np.clip((np.asarray(dbm, dtype=np.float64) - RSS_FLOOR_DBM) / RSS_SPAN_DB, 0.0, 1.0)


@dataclass
class RssMap:
    grid: np.ndarray
    second: float = None
    skipped: int = 0


def build_rss_map(reads, geometry=None, n_objects=N_OBJECTS, second=None):
    """One-second RSS map of shape ``(rows, cols, n_objects)``.

    For each object, each antenna's coverage is filled with that object's
    normalized RSS (zero outside), and the per-antenna maps are averaged.
    Repeated reads of one (tag, antenna) pair are averaged in dBm first.
    Reads naming an unknown tag or antenna are skipped and counted.
    """
    geometry = geometry or default_geometry()
    n_ant = geometry.n_antennas
    sums = defaultdict(float)
    counts = defaultdict(int)
    skipped = 0
    for r in reads:
        tag, ant = int(r.tag_id), int(r.antenna_id)
        if not (0 <= tag < n_objects and 0 <= ant < n_ant):
            skipped += 1
            continue
        sums[tag, ant] += float(r.rss)
        counts[tag, ant] += 1
    if skipped:
        log.warning("skipped %d RFID reads with unknown tag or antenna", skipped)

    level = np.zeros((n_objects, n_ant))
    for key, total in sums.items():
        level[key] = normalize_rss(total / counts[key])
    masks = geometry.masks.astype(np.float64)
    # (objects, antennas) x (antennas, rows, cols) -> mean over antennas
    grid = np.tensordot(level, masks, axes=([1], [0])) / n_ant
    return RssMap(np.ascontiguousarray(grid.transpose(1, 2, 0), dtype=np.float32), second, skipped)


def parse_rfid_log(lines):
    """Parse ``timestamp,tag_id,antenna_id,rss_dbm`` records (``#`` comments allowed)."""
    reads = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            reads.append(RfidRead(float(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return reads


def format_rfid_log(reads):
    return "".join(f"{r.timestamp!r},{r.tag_id},{r.antenna_id},{r.rss!r}\n" for r in reads)


def group_by_second(reads, start=None, stop=None):
    """Bucket reads into whole seconds; returns ``(first_second, [reads per second])``."""
    if not reads and (start is None or stop is None):
        return 0, []
    secs = [math.floor(r.timestamp) for r in reads]
    lo = min(secs) if start is None else int(start)
    hi = max(secs) + 1 if stop is None else int(stop)
    buckets = [[] for _ in range(hi - lo)]
    for s, r in zip(secs, reads):
        if lo <= s < hi:
            buckets[s - lo].append(r)
    return lo, buckets

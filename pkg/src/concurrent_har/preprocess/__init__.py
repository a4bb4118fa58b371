from .depth import depth_prepare, fill_holes
from .mfsc import (
    LOG_FLOOR,
    SAMPLE_RATE,
    MfscMap,
    band_centers,
    mel_filterbank,
    mfsc_extract,
    mfsc_seconds,
    resample_audio,
)
from .resize import bilinear_resize
from .rss import (
    Antenna,
    AntennaGeometry,
    RfidRead,
    RssMap,
    build_rss_map,
    calibrate_coverage,
    default_geometry,
    group_by_second,
    load_geometry,
    normalize_rss,
    parse_rfid_log,
    save_geometry,
)
from .transformers import DepthTransformer, MfscTransformer, RssMapTransformer

__all__ = [
    "LOG_FLOOR",
    "SAMPLE_RATE",
    "Antenna",
    "AntennaGeometry",
    "DepthTransformer",
    "MfscMap",
    "MfscTransformer",
    "RfidRead",
    "RssMap",
    "RssMapTransformer",
    "band_centers",
    "bilinear_resize",
    "build_rss_map",
    "calibrate_coverage",
    "default_geometry",
    "depth_prepare",
    "fill_holes",
    "group_by_second",
    "load_geometry",
    "mel_filterbank",
    "mfsc_extract",
    "mfsc_seconds",
    "normalize_rss",
    "parse_rfid_log",
    "resample_audio",
    "save_geometry",
]

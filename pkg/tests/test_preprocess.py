import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concurrent_har.errors import ConfigError, DimensionError, FormatError
from concurrent_har.preprocess import (
    LOG_FLOOR,
    SAMPLE_RATE,
    Antenna,
    AntennaGeometry,
    DepthTransformer,
    MfscTransformer,
    RfidRead,
    RssMapTransformer,
    band_centers,
    bilinear_resize,
    build_rss_map,
    calibrate_coverage,
    default_geometry,
    depth_prepare,
    fill_holes,
    group_by_second,
    load_geometry,
    mfsc_extract,
    normalize_rss,
    parse_rfid_log,
    save_geometry,
)
from concurrent_har.preprocess.rss import format_rfid_log
from oracles import oracle_mfsc

# -- coverage calibration ---------------------------------------------------------


def test_calibrate_lateral_visibility():
    assert calibrate_coverage([(0, 12), (0, 12), (0, 12)]) == {0: 12.0}


def test_calibrate_single_and_mean():
    assert calibrate_coverage([(3, 7.5)]) == {3: 7.5}
    assert calibrate_coverage([(1, 10), (1, 14)]) == {1: 12.0}


def test_calibrate_missing_antenna_listed():
    with pytest.raises(ConfigError, match=r"\[1, 3\]"):
        calibrate_coverage([(0, 10), (2, 11)], n_antennas=4)


def test_geometry_validation():
    with pytest.raises(ConfigError):
        Antenna(1, 1, radius=0)
    with pytest.raises(ConfigError):
        Antenna(1, 1, "ellipse", semi_axes=(3, -1))
    with pytest.raises(ConfigError, match="intersect"):
        AntennaGeometry((Antenna(500, 500, radius=3),))


def test_geometry_round_trip(tmp_path):
    g = default_geometry()
    save_geometry(g, tmp_path / "geo.json")
    g2 = load_geometry(tmp_path / "geo.json")
    assert g2.n_antennas == 8
    np.testing.assert_array_equal(g.masks, g2.masks)


def test_with_radii_changes_masks():
    g = default_geometry()
    g2 = g.with_radii({0: 5.0})
    assert g2.masks[0].sum() < g.masks[0].sum()
    np.testing.assert_array_equal(g2.masks[1:7], g.masks[1:7])


# -- RSS maps -------------------------------------------------------------------------


def test_no_reads_all_zero():
    m = build_rss_map([])
    assert m.grid.shape == (36, 48, 25)
    assert not m.grid.any()


def test_one_read_is_v_over_8():
    g = default_geometry()
    read = RfidRead(0.2, 4, 2, -50.0)
    v = normalize_rss(-50.0)
    grid = build_rss_map([read], g).grid
    np.testing.assert_allclose(grid[..., 4][g.masks[2]], v / 8, rtol=1e-6)
    assert not grid[..., 4][~g.masks[2]].any()
    assert not np.delete(grid, 4, axis=-1).any()


def test_two_antennas_v_over_4_in_intersection():
    g = AntennaGeometry(tuple([Antenna(20, 18, radius=10), Antenna(28, 18, radius=10)]
                              + [Antenna(5 + 6 * i, 3, radius=2) for i in range(6)]))
    both = g.masks[0] & g.masks[1]
    only0 = g.masks[0] & ~g.masks[1]
    only1 = g.masks[1] & ~g.masks[0]
    assert both.any() and only0.any() and only1.any()
    v = normalize_rss(-60.0)
    grid = build_rss_map([RfidRead(0, 7, 0, -60.0), RfidRead(0, 7, 1, -60.0)], g).grid[..., 7]
    np.testing.assert_allclose(grid[both], v / 4, rtol=1e-6)
    np.testing.assert_allclose(grid[only0], v / 8, rtol=1e-6)
    np.testing.assert_allclose(grid[only1], v / 8, rtol=1e-6)


def test_repeated_reads_averaged_first():
    g = default_geometry()
    a = build_rss_map([RfidRead(0, 1, 0, -40.0), RfidRead(0.5, 1, 0, -60.0)], g).grid
    b = build_rss_map([RfidRead(0, 1, 0, -50.0)], g).grid
    np.testing.assert_allclose(a, b)


def test_unknown_ids_skipped(caplog):
    m = build_rss_map([RfidRead(0, 25, 0, -50), RfidRead(0, 3, 8, -50), RfidRead(0, 3, 1, -50)])
    assert m.skipped == 2
    assert m.grid[..., 3].any()


def test_normalization_orders_strength():
    assert normalize_rss(-100) == 0.0
    assert normalize_rss(-20) == 1.0
    assert normalize_rss(-40) > normalize_rss(-80) > 0


reads_strategy = st.lists(
    st.tuples(st.integers(0, 24), st.integers(0, 7), st.floats(-100, -25)), max_size=40)


@settings(max_examples=60, deadline=None)
@given(reads_strategy, st.integers(1, 24))
def test_rss_superposition(raw, split):
    reads = [RfidRead(0.0, t, a, r) for t, a, r in raw]
    a = [r for r in reads if r.tag_id < split]
    b = [r for r in reads if r.tag_id >= split]
    full = build_rss_map(reads).grid
    ga, gb = build_rss_map(a).grid, build_rss_map(b).grid
    # disjoint objects occupy disjoint channels, so the union is a sum
    np.testing.assert_allclose(full, ga + gb, atol=1e-7)
    assert not np.any((ga != 0) & (gb != 0))


@settings(max_examples=60, deadline=None)
@given(reads_strategy)
def test_rss_bound(raw):
    reads = [RfidRead(0.0, t, a, r) for t, a, r in raw]
    grid = build_rss_map(reads).grid
    top = max((float(normalize_rss(r.rss)) for r in reads), default=0.0)
    assert grid.max() <= top + 1e-7
    assert grid.min() >= 0.0


def test_rfid_log_round_trip():
    reads = [RfidRead(0.25, 1, 2, -55.5), RfidRead(1.75, 24, 7, -80.0)]
    assert parse_rfid_log(format_rfid_log(reads).splitlines()) == reads


def test_rfid_log_bad_line():
    with pytest.raises(FormatError, match="line 2"):
        parse_rfid_log(["0.1,1,2,-50", "0.2,1,-50"])


def test_group_by_second():
    reads = [RfidRead(10.2, 0, 0, -50), RfidRead(12.9, 1, 0, -50), RfidRead(10.8, 2, 0, -50)]
    first, buckets = group_by_second(reads)
    assert first == 10
    assert [len(b) for b in buckets] == [2, 0, 1]


# -- MFSC -----------------------------------------------------------------------------


def test_mfsc_shapes():
    m = mfsc_extract(np.random.default_rng(0).standard_normal(SAMPLE_RATE))
    assert m.raw.shape == (20, 36)
    assert m.presented.shape == (64, 64)


def test_mfsc_silence_is_floor():
    m = mfsc_extract(np.zeros(SAMPLE_RATE))
    assert np.all(m.raw == np.float32(math.log(LOG_FLOOR)))
    assert np.allclose(m.presented, math.log(LOG_FLOOR))


def test_mfsc_matches_dft_oracle():
    x = np.random.default_rng(1).standard_normal(SAMPLE_RATE)
    np.testing.assert_allclose(mfsc_extract(x).raw, oracle_mfsc(x), rtol=1e-5, atol=1e-4)


@pytest.mark.parametrize("band", [0, 5, 11, 17, 23, 29, 35])
def test_mfsc_sinusoid_band_dominance(band):
    t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
    x = np.sin(2 * np.pi * band_centers()[band] * t)
    ref = oracle_mfsc(x)
    assert np.all(ref.argmax(axis=1) == band)
    assert np.all(mfsc_extract(x).raw.argmax(axis=1) == band)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.0001, 100.0))
def test_mfsc_monotone_in_amplitude(seed, alpha):
    x = np.random.default_rng(seed).standard_normal(SAMPLE_RATE) * 0.1
    assert np.all(mfsc_extract(alpha * x).raw >= mfsc_extract(x).raw)


def test_mfsc_raw_at_least_floor():
    x = np.zeros(SAMPLE_RATE)
    x[100] = 1e-9
    assert np.all(mfsc_extract(x).raw >= np.float32(math.log(LOG_FLOOR)))


def test_mfsc_too_short():
    with pytest.raises(DimensionError):
        mfsc_extract(np.zeros(1000))


def test_mfsc_transformer_resamples():
    rate = 16_000
    t = np.arange(3 * rate) / rate
    x = np.sin(2 * np.pi * band_centers()[20] * t)
    out = MfscTransformer(sample_rate=rate).fit_transform(x)
    assert out.shape == (3, 64, 64, 1)
    stereo = np.stack([x, x], axis=1)
    both = MfscTransformer(sample_rate=rate, channels="stack").transform(stereo)
    assert both.shape == (3, 64, 64, 2)


def test_hamming_band_shape_option():
    t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
    x = np.sin(2 * np.pi * band_centers()[12] * t)
    raw = mfsc_extract(x, band_shape="hamming").raw
    assert raw.shape == (20, 36)
    assert np.all(raw.argmax(axis=1) == 12)


# -- depth -------------------------------------------------------------------------------


def test_depth_constant_frame():
    out = depth_prepare(np.full((424, 512), 3000, np.uint16), max_range=8000)
    assert out.shape == (256, 256, 1)
    np.testing.assert_allclose(out, 3000 / 8000, rtol=1e-6)


def test_depth_single_hole_filled():
    f = np.full((5, 5), 1234.0)
    f[2, 2] = 0
    np.testing.assert_array_equal(fill_holes(f), np.full((5, 5), 1234.0))


def test_depth_leading_holes_use_reverse_scan():
    f = np.array([[0, 0, 5], [6, 0, 7]], float)
    np.testing.assert_array_equal(fill_holes(f), [[5, 5, 5], [6, 6, 7]])


def test_depth_all_undefined(caplog):
    out = depth_prepare(np.zeros((424, 512)))
    assert out.shape == (256, 256, 1) and not out.any()
    assert "no defined pixels" in caplog.text


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_depth_idempotent_on_prepared_frames(seed):
    rng = np.random.default_rng(seed)
    frame = rng.uniform(1, 8000, size=(256, 256))
    out = depth_prepare(frame, max_range=8000)[..., 0]
    np.testing.assert_allclose(out * 8000, frame, rtol=1e-6)


def test_bilinear_resize_corners_and_linear_ramp():
    ramp = np.add.outer(np.arange(4.0), 2 * np.arange(3.0))
    out = bilinear_resize(ramp, 7, 5)
    assert out[0, 0] == 0 and out[-1, -1] == ramp[-1, -1]
    # bilinear interpolation reproduces affine functions exactly
    expected = np.add.outer(np.linspace(0, 3, 7), 2 * np.linspace(0, 2, 5))
    np.testing.assert_allclose(out, expected)


def test_transformers_shapes():
    frames = np.full((2, 424, 512), 1000, np.uint16)
    assert DepthTransformer().fit_transform(frames).shape == (2, 256, 256, 1)
    maps = RssMapTransformer().fit_transform([[RfidRead(0, 1, 1, -50)], []])
    assert maps.shape == (2, 36, 48, 25)
    assert RssMapTransformer().get_params()["n_objects"] == 25

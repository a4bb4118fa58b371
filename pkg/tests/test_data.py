import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from concurrent_har.data import (
    AudioClip,
    DepthRecording,
    Event,
    ImageSet,
    SyntheticCaseSpec,
    events_to_bits,
    ingest,
    label_vector,
    load_mnist,
    make_composites,
    merge_events,
    read_cifar100,
    read_depth_raw,
    read_idx,
    read_idx_images,
    read_idx_labels,
    sample_events,
    synth_case,
    synth_cases,
    tile,
    trauma_like,
    write_cifar100,
    write_depth_raw,
    write_idx,
    write_rfid_log,
    write_wav,
)
from concurrent_har.data.ingest import CIFAR100_RECORD, encode_idx, parse_idx, save_mnist
from concurrent_har.errors import ConfigError, FormatError
from concurrent_har.metrics import concurrency_profile
from concurrent_har.preprocess import RfidRead

# -- IDX ------------------------------------------------------------------------------


@given(st.sampled_from([np.uint8, np.int8, ">i2", ">i4", ">f4", ">f8"]),
       st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_idx_round_trip(dtype, shape, seed):
    a = (np.random.default_rng(seed).random(shape) * 100).astype(dtype)
    back = parse_idx(encode_idx(a))
    assert back.dtype == np.dtype(dtype) and back.shape == a.shape
    np.testing.assert_array_equal(back, a)


def test_mnist_sized_images_header(tmp_path):
    path = tmp_path / "train-images-idx3-ubyte"
    write_idx(path, np.zeros((60_000, 28, 28), np.uint8))
    raw = path.read_bytes()
    assert raw[:4] == b"\x00\x00\x08\x03"
    assert read_idx_images(path).shape == (60_000, 28, 28)


def test_idx_magic_enforced(tmp_path):
    path = tmp_path / "labels"
    write_idx(path, np.arange(10, dtype=np.uint8))
    assert read_idx_labels(path).shape == (10,)
    with pytest.raises(FormatError, match="0x00000803") as exc:
        read_idx_images(path)
    assert exc.value.offset == 0
    with pytest.raises(FormatError, match="two zero bytes"):
        parse_idx(b"\x01\x00\x08\x01" + bytes(8))


def test_idx_truncated_names_lengths(tmp_path):
    path = tmp_path / "imgs"
    write_idx(path, np.ones((3, 4, 4), np.uint8))
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FormatError, match="expected 48 data bytes.*found 43") as exc:
        read_idx(path)
    assert exc.value.offset == 16 + 43 and str(path) in str(exc.value)


def test_idx_gzip_and_mnist_dir(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, (7, 28, 28, 1)).astype(np.uint8)
    save_mnist(tmp_path, ImageSet(imgs, np.arange(7) % 3), "test")
    d = load_mnist(tmp_path, "test")
    np.testing.assert_array_equal(d.images, imgs)
    write_idx(tmp_path / "x.idx.gz", imgs[..., 0])
    np.testing.assert_array_equal(read_idx(tmp_path / "x.idx.gz"), imgs[..., 0])


# -- CIFAR-100 ------------------------------------------------------------------------


def test_cifar_record_layout(tmp_path):
    rec = np.zeros(CIFAR100_RECORD, np.uint8)
    rec[0], rec[1] = 7, 42
    rec[2], rec[2 + 1024], rec[2 + 2048] = 10, 20, 30  # R, G, B at pixel (0, 0)
    rec[2 + 33] = 99  # red at row 1, column 1
    (tmp_path / "one.bin").write_bytes(rec.tobytes())
    d = read_cifar100(tmp_path / "one.bin")
    assert d.images.shape == (1, 32, 32, 3)
    assert tuple(d.images[0, 0, 0]) == (10, 20, 30) and d.images[0, 1, 1, 0] == 99
    assert d.labels[0] == 42 and d.coarse[0] == 7


def test_cifar_train_file_has_50000_records(tmp_path):
    path = tmp_path / "train.bin"
    path.write_bytes(bytes(50_000 * CIFAR100_RECORD))
    assert len(read_cifar100(path)) == 50_000


def test_cifar_round_trip_and_truncation(tmp_path):
    rng = np.random.default_rng(3)
    d = ImageSet(rng.integers(0, 256, (5, 32, 32, 3)).astype(np.uint8), rng.integers(0, 100, 5),
                 rng.integers(0, 20, 5))
    write_cifar100(tmp_path / "t.bin", d)
    back = ingest(tmp_path / "t.bin", "cifar-bin")
    for k in ("images", "labels", "coarse"):
        np.testing.assert_array_equal(getattr(back, k), getattr(d, k))
    raw = (tmp_path / "t.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-100])
    with pytest.raises(FormatError, match="4 whole records") as exc:
        read_cifar100(tmp_path / "t.bin")
    assert exc.value.offset == 4 * CIFAR100_RECORD


# -- sensor files -------------------------------------------------------------------------


def test_depth_raw_round_trip_and_errors(tmp_path):
    frames = np.random.default_rng(0).integers(0, 8000, (3, 5, 7)).astype(np.uint16)
    write_depth_raw(tmp_path / "d.raw", DepthRecording(frames, fps=1.5, max_range=4000, start=12))
    back = ingest(tmp_path / "d.raw", "depth-raw")
    np.testing.assert_array_equal(back.frames, frames)
    assert (back.start, back.fps, back.max_range) == (12, 1.5, 4000.0)
    assert back.seconds == 2
    np.testing.assert_array_equal(back.per_second(), frames[[0, 1]])
    raw = (tmp_path / "d.raw").read_bytes()
    (tmp_path / "d.raw").write_bytes(raw[:-3])
    with pytest.raises(FormatError, match="expected 210 bytes.*found 207"):
        read_depth_raw(tmp_path / "d.raw")
    (tmp_path / "d.raw").write_bytes(b"garbage\n" + raw)
    with pytest.raises(FormatError, match="header") as exc:
        read_depth_raw(tmp_path / "d.raw")
    assert exc.value.offset == 0


def test_wav_round_trip(tmp_path):
    t = np.arange(2048) / 8000
    sig = 0.5 * np.sin(2 * np.pi * 440 * t)
    write_wav(tmp_path / "a.wav", AudioClip(8000, sig))
    back = ingest(tmp_path / "a.wav", "wav")
    assert back.rate == 8000 and back.seconds == pytest.approx(2048 / 8000)
    np.testing.assert_allclose(back.samples, sig, atol=1 / 32767)
    (tmp_path / "bad.wav").write_bytes(b"RIFFxxxxWAVE")
    with pytest.raises(FormatError):
        ingest(tmp_path / "bad.wav", "wav")


def test_rfid_log_round_trip(tmp_path):
    reads = [RfidRead(0.25, 3, 1, -60.5), RfidRead(1.5, 4, 2, -71.0)]
    write_rfid_log(tmp_path / "r.log", reads)
    assert ingest(tmp_path / "r.log", "rfid-log") == reads
    (tmp_path / "r.log").write_text("1.0,2,3\n")
    with pytest.raises(FormatError, match="line 1"):
        ingest(tmp_path / "r.log", "rfid-log")


def test_unknown_format():
    with pytest.raises(ValueError, match="unknown format"):
        ingest("x", "png")


# -- composites --------------------------------------------------------------------------


def digits(n_classes=10, per_class=5, size=28, channels=1):
    rng = np.random.default_rng(0)
    n = n_classes * per_class
    images = rng.integers(0, 256, (n, size, size, channels)).astype(np.uint8)
    return ImageSet(images, np.repeat(np.arange(n_classes), per_class))


def test_composite_shape_and_six_labels():
    cs = make_composites(digits(), 20, seed=1)
    assert cs.images.shape == (20, 56, 84, 1)
    assert (cs.labels.sum(1) == 6).all()
    assert all(len(set(row)) == 6 for row in cs.tile_classes)


def test_composite_pixels_come_from_tiles():
    src = digits()
    cs = make_composites(src, 3, seed=2)
    for i in range(3):
        tiles = cs.images[i].reshape(2, 28, 3, 28, 1).transpose(0, 2, 1, 3, 4).reshape(6, 28, 28, 1)
        for t, cls in zip(tiles, cs.tile_classes[i]):
            pool = src.images[src.labels == cls]
            assert any(np.array_equal(t, p) for p in pool)


def test_unlabeled_classes_ignored():
    cs = make_composites(digits(), 50, labeled_subset=[1, 4], seed=0)
    assert cs.labels.shape == (50, 2)
    want = np.stack([(cs.tile_classes == c).any(1) for c in (1, 4)], 1)
    np.testing.assert_array_equal(cs.labels, want)


def test_too_many_tiles_for_distinct_classes():
    with pytest.raises(ConfigError, match="distinct"):
        make_composites(digits(n_classes=4), 2)
    cs = make_composites(digits(n_classes=4), 5, distinct=False, seed=0)
    assert (cs.labels.sum(1) <= 4).all()


def test_composites_regenerate_per_sample():
    a = make_composites(digits(), 5, seed=9)
    b = make_composites(digits(), 10, seed=9)
    np.testing.assert_array_equal(a.images, b.images[:5])
    c = make_composites(digits(), 5, seed=9, stream=1)
    assert not np.array_equal(a.images, c.images)


def test_tile_layout():
    tiles = np.arange(6)[:, None, None, None] * np.ones((6, 2, 3, 1))
    img = tile(tiles)
    assert img.shape == (4, 9, 1)
    assert img[0, 0, 0] == 0 and img[0, 3, 0] == 1 and img[2, 0, 0] == 3 and img[3, 8, 0] == 5


@given(st.lists(st.integers(0, 20), min_size=6, max_size=6), st.randoms())
@settings(max_examples=100, deadline=None)
def test_label_order_invariant(classes, rnd):
    subset = np.arange(0, 21, 2)
    shuffled = list(classes)
    rnd.shuffle(shuffled)
    np.testing.assert_array_equal(label_vector(classes, subset), label_vector(shuffled, subset))


def test_cases_are_scaled_views():
    cs = make_composites(digits(), 4, seed=0)
    cases = cs.cases()
    assert cases[0].inputs["depth"].shape == (1, 56, 84, 1)
    assert cases[2].inputs["depth"].max() <= 1.0
    np.testing.assert_allclose(cases[3].inputs["depth"][0], cs.images[3] / 255.0, rtol=1e-6)


# -- synthetic cases ---------------------------------------------------------------------


def test_zero_rates_give_baseline_noise():
    spec = SyntheticCaseSpec(seed=1, length=50, rates=0.0, snr=5.0)
    c = synth_case(spec)
    assert not c.labels.any()
    for m in ("depth", "audio", "rss"):
        x = c.inputs[m]
        assert abs(x.mean()) < 0.01 and x.std() == pytest.approx(0.2, rel=0.05)


def test_cooccurrence_pair():
    spec = SyntheticCaseSpec(seed=4, length=10_000, n_activities=4, rates=0.01, pairs=[(0, 2)],
                             pair_strength=0.95)
    g = events_to_bits(sample_events(spec), spec.length, spec.n_activities)
    active = g[:, 0] == 1
    assert active.sum() > 500
    assert g[active, 2].mean() >= 0.9


def test_trauma_like_concurrency():
    g = np.concatenate([events_to_bits(sample_events(trauma_like(seed=s, length=1000)), 1000, 8)
                        for s in range(10)])
    assert concurrency_profile(g.T).fraction_at_least(2) >= 0.5


events = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 40), st.integers(1, 10)), max_size=25)


@given(events)
@settings(max_examples=200, deadline=None)
def test_merge_leaves_no_overlapping_same_type(raw):
    evs = [Event(a, s, s + d) for a, s, d in raw]
    merged = merge_events(evs)
    for a in range(3):
        spans = sorted((e.start, e.stop) for e in merged if e.activity == a)
        assert all(prev[1] < nxt[0] for prev, nxt in zip(spans, spans[1:]))
    np.testing.assert_array_equal(events_to_bits(merged, 60, 3), events_to_bits(evs, 60, 3))


def test_generated_events_are_merged():
    evs = sample_events(SyntheticCaseSpec(seed=2, length=2000, rates=0.05, duration_mean=30))
    for a in range(8):
        spans = sorted((e.start, e.stop) for e in evs if e.activity == a)
        assert all(prev[1] < nxt[0] for prev, nxt in zip(spans, spans[1:]))


@pytest.mark.parametrize("modality", ["depth", "audio", "rss"])
def test_each_activity_leaves_a_pattern(modality):
    spec = SyntheticCaseSpec(seed=3, length=400, n_activities=6, rates=0.03, snr=2.0, modalities=(modality,))
    c = synth_case(spec)
    x = c.inputs[modality].reshape(spec.length, -1)
    for k in range(6):
        on = c.labels[:, k] == 1
        assert 0 < on.sum() < spec.length
        gap = x[on].mean(0) - x[~on].mean(0)
        assert gap.max() > 0.5


def test_synth_cases_deterministic_and_distinct():
    spec = SyntheticCaseSpec(seed=5, length=30)
    a, b = synth_cases(spec, 3), synth_cases(spec, 3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.inputs["rss"], y.inputs["rss"])
    assert not np.array_equal(a[0].inputs["depth"], a[1].inputs["depth"])
    assert a[0].inputs["rss"].shape == (30, 36, 48, 25)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticCaseSpec(rates=1.5).validate()
    with pytest.raises(ConfigError):
        SyntheticCaseSpec(pairs=[(0, 0)]).validate()
    with pytest.raises(ConfigError):
        SyntheticCaseSpec(modalities=("video",)).validate()

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concurrent_har.errors import ConfigError, DimensionError, MissingInputError
from concurrent_har.model import (
    ModalityConvSpec,
    NetworkConfig,
    build_network,
    coding_forward,
    load_config,
    preset,
    reset_states,
    threshold,
)
from concurrent_har.model.config import conv, pool
from concurrent_har.nn import Tensor, check_gradients, mse_loss, parameter


def random_inputs(config, b, t, rng):
    return {m: rng.random((b, t) + tuple(s.input_shape)) for m, s in config.branches.items()}


def second_inputs(config, rng):
    return {m: rng.random(tuple(s.input_shape)) for m, s in config.branches.items()}


# -- architecture -------------------------------------------------------------------


def test_branch_feature_lengths_full_size():
    cfg = preset("trauma35")
    m = build_network(cfg)
    rng = np.random.default_rng(0)
    assert m.branch_forward("depth", rng.random((1, 256, 256, 1))).shape == (1, 1024)
    assert m.branch_forward("rss", rng.random((1, 36, 48, 25))).shape == (1, 512)
    assert m.branch_forward("audio", rng.random((1, 64, 64, 1))).shape == (1, 512)


def _oracle_param_count():
    # written out layer by layer, independent of the config machinery
    def c(k, cin, f):
        return k * k * cin * f + f

    def lstm(d, h):
        return 4 * (h * (d + h) + h)

    depth = c(3, 1, 32) + c(3, 32, 64) + c(3, 64, 128) + c(3, 128, 256) + c(3, 256, 512) \
        + c(3, 512, 1024) + c(1, 1024, 1024)
    audio = c(3, 1, 32) + c(3, 32, 64) + c(3, 64, 128) + c(3, 128, 256) + c(1, 256, 512)
    rss = c(3, 25, 32) + c(3, 32, 64) + c(3, 64, 128) + c(3, 128, 256) + c(1, 256, 512)
    level1 = lstm(1024, 512) + lstm(512, 256) + lstm(512, 256)
    fusion = 1024 * 512 + 512
    level2 = lstm(512, 256)
    coding = 256 * 35 + 35 + 35 + 35
    return depth + audio + rss + level1 + fusion + level2 + coding


def test_trauma35_parameter_count_matches_layer_oracle():
    assert build_network(preset("trauma35")).n_parameters == _oracle_param_count()


def test_trauma35_layer_shapes():
    m = build_network(preset("trauma35"))
    p = m.params
    assert p["depth.conv6.kernels"].shape == (3, 3, 512, 1024)
    assert p["depth.conv7.kernels"].shape == (1, 1, 1024, 1024)
    assert p["audio.conv5.kernels"].shape == (1, 1, 256, 512)
    assert p["rss.conv1.kernels"].shape == (3, 3, 25, 32)
    assert p["rss.conv5.kernels"].shape == (1, 1, 256, 512)
    assert p["fusion.weights"].shape == (512, 1024)
    assert p["lstm1.depth.W_f"].shape == (512, 1024 + 512)
    assert p["lstm2.W_o"].shape == (256, 512 + 256)
    assert p["coding.dense.weights"].shape == (35, 256)


def test_last_conv_is_sigmoid_others_leaky():
    for cfg in (preset("trauma35"), preset("charades157")):
        for spec in cfg.branches.values():
            convs = [l for l in spec.layers if l.kind == "conv"]
            assert convs[-1].activation == "sigmoid"
            assert all(l.activation == "leaky_relu" for l in convs[:-1])


def test_single_rgb_preset_has_no_fusion():
    cfg = preset("charades157")
    m = build_network(cfg)
    assert not any(k.startswith("fusion") for k in m.params)
    assert m.params["lstm2.W_f"].shape == (256, 512 + 256)
    assert cfg.n_activities == 157
    assert preset("olympic16").n_activities == 16


def test_full_size_forward_emits_35_bits():
    m = build_network(preset("trauma35"))
    code, _ = m.forward_one_second(second_inputs(m.config, np.random.default_rng(1)))
    assert code.bits.shape == (35,) and code.scores.shape == (35,)


def test_charades_forward_emits_157_bits():
    m = build_network(preset("charades157"))
    code, _ = m.forward_one_second(second_inputs(m.config, np.random.default_rng(1)))
    assert code.bits.shape == (157,)


def test_bad_pool_names_layer():
    spec = ModalityConvSpec((36, 48, 25), (conv(8), pool(5), conv(8, 1, "sigmoid")), 8)
    with pytest.raises(ConfigError, match="rss.pool1"):
        spec.trace("rss")


def test_extent_not_collapsed_names_layer():
    spec = ModalityConvSpec((8, 8, 1), (conv(4), pool(2), conv(4, 1, "sigmoid")), 4)
    with pytest.raises(ConfigError, match="depth.conv2"):
        spec.trace("depth")


def test_declared_length_mismatch():
    spec = ModalityConvSpec((4, 4, 1), (conv(4), pool(4), conv(4, 1, "sigmoid")), 5)
    with pytest.raises(ConfigError, match="declared output length"):
        spec.trace("audio")


def test_level2_half_fusion_invariant():
    cfg = preset("trauma35")
    bad = NetworkConfig(cfg.branches, cfg.lstm1_sizes, 512, 200, 35)
    with pytest.raises(ConfigError, match="lstm2"):
        bad.validate()


def test_multibranch_requires_fusion():
    cfg = preset("gradcheck_tiny")
    with pytest.raises(ConfigError, match="fusion"):
        NetworkConfig(cfg.branches, cfg.lstm1_sizes, None, 2, 3).validate()


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("nope")


def test_config_file_round_trip(tmp_path):
    cfg = preset("desk_multimodal")
    path = tmp_path / "net.json"
    path.write_text(cfg.to_json())
    assert load_config(path) == cfg
    path.write_text(json.dumps({"preset": "trauma35", "n_activities": 12}))
    loaded = load_config(path)
    assert loaded.n_activities == 12 and loaded.fusion_width == 512


def test_config_file_rejects_unknown_key(tmp_path):
    path = tmp_path / "net.json"
    path.write_text(json.dumps({"preset": "trauma35", "bogus": 1}))
    with pytest.raises(ConfigError, match="bogus"):
        load_config(path)


# -- coding layer and threshold ---------------------------------------------------


def test_all_zero_inputs_give_half_scores_and_zero_bits():
    cfg = preset("gradcheck_tiny")
    m = build_network(cfg, dtype=np.float64)
    m.params["coding.dense.weights"].data[...] = 0.0
    zeros = {k: np.zeros(v.shape[2:]) for k, v in random_inputs(cfg, 1, 1, np.random.default_rng(0)).items()}
    code, _ = m.forward_one_second(zeros)
    np.testing.assert_array_equal(code.scores, 0.5)
    np.testing.assert_array_equal(code.bits, 0)


def test_unit_scaler_is_plain_sigmoid():
    rng = np.random.default_rng(3)
    feats = rng.normal(size=6)
    w = rng.normal(size=(4, 6))
    b = rng.normal(size=4)
    out = coding_forward(feats, w, b, np.ones(4), np.zeros(4)).data
    u = w @ feats + b
    u = np.where(u >= 0, u, 0.01 * u)
    np.testing.assert_allclose(out, 1 / (1 + np.exp(-u)), rtol=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_scores_strictly_inside_unit_interval(vals, seed):
    # pre-activations stay well inside the range where float64 sigmoid
    # has not rounded to exactly 0 or 1
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, size=5)
    out = coding_forward(np.array(vals), rng.uniform(-1, 1, size=(5, 3)), u,
                         rng.uniform(-1, 1, size=5), rng.uniform(-1, 1, size=5)).data
    assert np.all(out > 0) and np.all(out < 1)


def test_scaler_jacobian_is_diagonal():
    rng = np.random.default_rng(4)
    w, c = rng.normal(size=5), rng.normal(size=5)
    u = rng.normal(size=5)

    def scaler(v):
        return 1 / (1 + np.exp(-(w * v + c)))

    eps = 1e-6
    jac = np.empty((5, 5))
    for j in range(5):
        d = np.zeros(5)
        d[j] = eps
        jac[:, j] = (scaler(u + d) - scaler(u - d)) / (2 * eps)
    off = jac - np.diag(np.diag(jac))
    assert np.abs(off).max() < 1e-8
    # and the network's own scaler op agrees with the closed form
    ident = np.eye(5)
    ours = coding_forward(u, ident, np.zeros(5), w, c).data
    np.testing.assert_allclose(ours, scaler(np.where(u >= 0, u, 0.01 * u)), rtol=1e-12)


def test_threshold_examples():
    np.testing.assert_array_equal(threshold(np.array([0.7, 0.2])), [1, 0])
    np.testing.assert_array_equal(threshold(np.array([0.5])), [0])
    np.testing.assert_array_equal(threshold(np.full(4, 0.5 + 1e-9)), [1, 1, 1, 1])


@given(st.floats(0.0, 1.0, exclude_min=True, exclude_max=True), st.integers(0, 1))
@settings(max_examples=300, deadline=None)
def test_per_bit_decodability(score, label):
    if (score - label) ** 2 < 0.25:
        assert threshold(np.array([score]))[0] == label


def test_bits_agree_with_scores():
    cfg = preset("gradcheck_tiny")
    m = build_network(cfg, seed=5)
    rng = np.random.default_rng(0)
    for _ in range(5):
        code, _ = m.forward_one_second(second_inputs(cfg, rng))
        assert code.consistent()


# -- states -----------------------------------------------------------------------


def test_reset_matches_fresh_model():
    cfg = preset("gradcheck_tiny")
    rng = np.random.default_rng(2)
    used = build_network(cfg, seed=9, dtype=np.float64)
    for _ in range(3):
        used.forward_one_second(second_inputs(cfg, rng))
    x = second_inputs(cfg, rng)
    reset_states(used)
    fresh = build_network(cfg, seed=9, dtype=np.float64)
    a, _ = used.forward_one_second(x)
    b, _ = fresh.forward_one_second(x)
    np.testing.assert_array_equal(a.scores, b.scores)


def test_reset_idempotent_and_states_nonzero_after_use():
    cfg = preset("gradcheck_tiny")
    m = build_network(cfg, seed=1)
    rng = np.random.default_rng(0)
    for _ in range(5):
        m.forward_one_second(second_inputs(cfg, rng))
    assert all(np.linalg.norm(s.hidden.data) > 0 for s in m.states.values())
    m.reset_states()
    once = {k: s.hidden.data.copy() for k, s in m.states.items()}
    m.reset_states()
    for k, s in m.states.items():
        np.testing.assert_array_equal(s.hidden.data, once[k])
        assert not s.hidden.data.any() and not s.memory.data.any()


def test_sequential_seconds_equal_window_pass():
    cfg = preset("desk_multimodal")
    m = build_network(cfg, seed=0, dtype=np.float64)
    x = random_inputs(cfg, 1, 4, np.random.default_rng(8))
    window, _ = m.forward_window(x)
    m.reset_states()
    for t in range(4):
        code, _ = m.forward_one_second({k: v[0, t] for k, v in x.items()})
        np.testing.assert_allclose(code.scores, window.data[0, t], rtol=1e-12)


def test_temporal_causality():
    cfg = preset("gradcheck_tiny")
    m = build_network(cfg, seed=3, dtype=np.float64)
    rng = np.random.default_rng(5)
    x = random_inputs(cfg, 1, 4, rng)
    base, _ = m.forward_window(x)
    y = {k: v.copy() for k, v in x.items()}
    for v in y.values():
        v[:, 2:] = rng.random(v[:, 2:].shape)
    pert, _ = m.forward_window(y)
    np.testing.assert_array_equal(base.data[:, :2], pert.data[:, :2])
    assert not np.array_equal(base.data[:, 2:], pert.data[:, 2:])


def test_batch_rows_independent():
    cfg = preset("gradcheck_tiny")
    m = build_network(cfg, seed=3, dtype=np.float64)
    x = random_inputs(cfg, 3, 2, np.random.default_rng(6))
    full, _ = m.forward_window(x)
    alone, _ = m.forward_window({k: v[1:2] for k, v in x.items()})
    np.testing.assert_allclose(full.data[1:2], alone.data, rtol=1e-12)


# -- errors -----------------------------------------------------------------------


def test_missing_modality_is_an_error():
    cfg = preset("gradcheck_tiny")
    m = build_network(cfg)
    x = second_inputs(cfg, np.random.default_rng(0))
    del x["audio"]
    with pytest.raises(MissingInputError, match="audio"):
        m.forward_one_second(x)


def test_wrong_input_shape():
    cfg = preset("gradcheck_tiny")
    m = build_network(cfg)
    x = random_inputs(cfg, 1, 2, np.random.default_rng(0))
    x["rss"] = x["rss"][..., :2]
    with pytest.raises(DimensionError):
        m.forward_window(x)


def test_state_dict_round_trip():
    cfg = preset("gradcheck_tiny")
    a, b = build_network(cfg, seed=1), build_network(cfg, seed=2)
    b.load_state_dict(a.state_dict())
    x = second_inputs(cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(a.forward_one_second(x)[0].scores, b.forward_one_second(x)[0].scores)
    with pytest.raises(ConfigError):
        b.load_state_dict({})


# -- gradients --------------------------------------------------------------------


def test_full_model_gradcheck_two_seconds():
    cfg = preset("gradcheck_tiny")
    m = build_network(cfg, seed=11, dtype=np.float64)
    rng = np.random.default_rng(12)
    x = random_inputs(cfg, 1, 2, rng)
    target = rng.integers(0, 2, size=(1, 2, cfg.n_activities))

    def loss():
        scores, _ = m.forward_window(x)
        return mse_loss(scores, target)

    res = check_gradients(loss, m.params, rtol=1e-4)
    assert res.checked == m.n_parameters
    assert res.passed, res.failures[:5]


def test_gradients_zero_filled_for_unreached():
    m = build_network(preset("gradcheck_tiny"))
    g = m.gradients()
    assert set(g) == set(m.params)
    assert all(not v.any() for v in g.values())

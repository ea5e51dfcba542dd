import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hedgebp.network import (
    HedgedNetwork,
    NetConfig,
    forward,
    init_network,
    load_checkpoint,
    predict,
    predict_from,
    save_checkpoint,
)
from hedgebp.numeric import make_rng

from conftest import random_net


def test_alpha_init_with_input_classifier():
    net = init_network(NetConfig(4, (5, 5, 5), 2, attach_input_classifier=True), make_rng(0))
    np.testing.assert_array_equal(net.alphas, [0.25] * 4)


def test_alpha_init_nineteen_classifiers():
    net = init_network(NetConfig.hedged(6, 20, 4, 2), make_rng(0))
    assert net.num_classifiers == 19
    np.testing.assert_allclose(net.alphas, 1 / 19, rtol=0, atol=1e-15)
    assert net.config.head_depths == tuple(range(2, 21))


def test_init_is_deterministic():
    cfg = NetConfig(7, (6, 5), 3, attach_input_classifier=True)
    assert init_network(cfg, make_rng(9)).equals(init_network(cfg, make_rng(9)))
    assert not init_network(cfg, make_rng(9)).equals(init_network(cfg, make_rng(10)))


def test_init_biases_zero_and_he_scale():
    net = init_network(NetConfig(400, (300,), 2), make_rng(3))
    W = net.hidden_weights[0]
    assert np.all(W[:, -1] == 0)
    assert W[:, :-1].std() == pytest.approx(np.sqrt(2 / 400), rel=0.02)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(input_dim=0, hidden_widths=(3,), num_classes=2),
        dict(input_dim=3, hidden_widths=(3,), num_classes=1),
        dict(input_dim=3, hidden_widths=(0,), num_classes=2),
        dict(input_dim=3, hidden_widths=(3,), num_classes=2, heads=(2,)),
        dict(input_dim=3, hidden_widths=(3, 3), num_classes=2, heads=(2, 1)),
        dict(input_dim=3, hidden_widths=(), num_classes=2),
        dict(input_dim=3, hidden_widths=(3,), num_classes=2, activation="sigmoid"),
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        NetConfig(**kwargs)


def test_linear_config_allowed():
    cfg = NetConfig.fixed_depth(3, 1, 8, 2)
    assert cfg.num_hidden == 0 and cfg.head_layers == (0,)


def test_single_classifier_combined_is_its_softmax():
    net, _ = random_net(0, heads=(4,))
    cache = forward(net, np.arange(5.0) / 5)
    assert net.alphas.tolist() == [1.0]
    np.testing.assert_array_equal(cache.combined, cache.f[0])


def test_zero_classifiers_give_uniform():
    net, _ = random_net(1, C=4)
    for T in net.classifier_weights:
        T[:] = 0
    cache = forward(net, np.ones(5))
    np.testing.assert_allclose(cache.f, 0.25, atol=1e-15)
    np.testing.assert_allclose(cache.combined, 0.25, atol=1e-15)


def test_identity_hidden_layer_relu():
    cfg = NetConfig(2, (2,), 2)
    net = init_network(cfg, make_rng(0), scheme="zeros")
    net.hidden_weights[0][:, :2] = np.eye(2)
    cache = forward(net, np.array([1.0, -1.0]))
    np.testing.assert_array_equal(cache.h[1], [1.0, 0.0])
    np.testing.assert_array_equal(cache.h[0], [1.0, -1.0])


def test_forward_dimension_mismatch():
    net, _ = random_net(2)
    with pytest.raises(ValueError, match="5"):
        forward(net, np.ones(4))


@pytest.mark.parametrize("combined,expected", [([0.7, 0.3], 0), ([0.5, 0.5], 0), ([0.1, 0.2, 0.7], 2)])
def test_predict_from(combined, expected):
    assert predict_from(np.array(combined)) == expected


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_forward_cache_invariants(seed, attach):
    net, r = random_net(seed, attach_input=attach)
    x = r.normal(size=5) * 3
    cache = forward(net, x)
    np.testing.assert_allclose(cache.f.sum(axis=1), 1.0, atol=1e-9)
    assert np.all((cache.combined > 0) & (cache.combined < 1))
    assert abs(cache.combined.sum() - 1) <= 1e-9
    np.testing.assert_allclose(cache.combined, (net.alphas[:, None] * cache.f).sum(axis=0), atol=1e-9)
    again = forward(net, x)
    assert again.f.tobytes() == cache.f.tobytes()
    # argmax is unchanged by rescaling the alphas
    scaled = net.copy()
    scaled.alphas = net.alphas * 7.3
    assert predict(scaled, x) == predict(net, x)


def test_classifier_depends_only_on_shallower_layers():
    net, r = random_net(5)
    x = r.normal(size=5)
    before = forward(net, x).f
    for l in range(1, 4):
        perturbed = net.copy()
        perturbed.hidden_weights[l] += r.normal(size=perturbed.hidden_weights[l].shape)
        after = forward(perturbed, x).f
        # classifier k sits on hidden layer k+1 and must ignore W^(l+1)
        assert cache_rows_equal(before[:l], after[:l])
        assert not np.allclose(before[l:], after[l:])
    assert len(before) == 4


def cache_rows_equal(a, b):
    return a.tobytes() == b.tobytes()


def test_checkpoint_round_trip(tmp_path):
    net, _ = random_net(11, attach_input=True)
    net.alphas = np.array([0.1, 0.2, 0.3, 0.15, 0.25])
    path = tmp_path / "net.npz"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.equals(net)
    assert back.config == net.config


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, meta=np.frombuffer(b'{"format": "other"}', dtype=np.uint8))
    with pytest.raises(ValueError, match="not a hedgebp checkpoint"):
        load_checkpoint(path)


def test_network_shape_validation():
    cfg = NetConfig(3, (4,), 2)
    with pytest.raises(ValueError, match="hidden layer 1"):
        HedgedNetwork(cfg, [np.zeros((4, 3))], [np.zeros((2, 5))], np.ones(1))

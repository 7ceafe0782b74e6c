import numpy as np
import pytest

from ttfs_sim import conversion, dnn
from ttfs_sim.core import KernelParams, LayerSpec, NetworkSpec
from ttfs_sim.dnn import ActivationStats


def _single_layer(w, b):
    w = np.asarray(w, dtype=np.float64)
    return NetworkSpec(
        layers=[
            LayerSpec(
                kind="dense",
                weights=w,
                bias=np.asarray(b, dtype=np.float64),
                in_shape=(w.shape[0],),
                out_shape=(w.shape[1],),
                kernel=KernelParams(tau=20.0),
            )
        ],
        time_window=80,
    )


def _stats(lams):
    n = len(lams)
    return ActivationStats(
        lam=list(lams),
        min_positive=[0.01] * n,
        hist_counts=[np.ones(4, dtype=np.int64) for _ in range(n)],
        hist_edges=[np.linspace(0, lam, 5) for lam in lams],
    )


def test_identity_at_unit_scale():
    net = _single_layer([[0.3], [0.7]], [0.1])
    out, _ = conversion.normalize(net, _stats([1.0, 1.0]))
    np.testing.assert_array_equal(out.layers[0].weights, net.layers[0].weights)
    np.testing.assert_array_equal(out.layers[0].bias, net.layers[0].bias)


def test_halving_scale_halves_weight_and_quarters_nothing():
    # lam_out = 2: w' = w/2, b' = b/2
    net = _single_layer([[1.0]], [0.5])
    out, _ = conversion.normalize(net, _stats([1.0, 2.0]))
    assert out.layers[0].weights[0, 0] == pytest.approx(0.5)
    assert out.layers[0].bias[0] == pytest.approx(0.25)


def test_two_layer_scale_chain():
    # layer 2 sees inputs already divided by lam^1, so its weights are
    # multiplied back up by lam^1 before dividing by lam^2
    w1, w2 = np.array([[1.0]]), np.array([[1.0]])
    net = NetworkSpec(
        layers=[
            LayerSpec("dense", w1.copy(), np.zeros(1), (1,), (1,), KernelParams(tau=20.0)),
            LayerSpec("dense", w2.copy(), np.zeros(1), (1,), (1,), KernelParams(tau=20.0)),
        ],
        time_window=80,
    )
    out, _ = conversion.normalize(net, _stats([1.0, 4.0, 8.0]))
    assert out.layers[0].weights[0, 0] == pytest.approx(0.25)
    assert out.layers[1].weights[0, 0] == pytest.approx(0.5)


def test_entry_count_mismatch_rejected():
    net = _single_layer([[1.0]], [0.0])
    with pytest.raises(ValueError, match="entries"):
        conversion.normalize(net, _stats([1.0, 1.0, 1.0]))


def test_nonpositive_scale_rejected():
    net = _single_layer([[1.0]], [0.0])
    with pytest.raises(ValueError, match="non-positive"):
        conversion.normalize(net, _stats([1.0, 0.0]))


def test_normalized_activations_bounded_by_one():
    net = dnn.build_mlp([6, 5, 4], seed=4)
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (200, 6))
    stats = dnn.record_stats(net, x)
    norm_net, norm_stats = conversion.normalize(net, stats)
    re_stats = dnn.record_stats(norm_net, x)
    for l in range(1, norm_net.num_layers + 1):
        assert re_stats.lam[l] <= 1.0 + 1e-9
        assert norm_stats.lam[l] == pytest.approx(1.0)


def test_argmax_preserved_on_recording_data():
    net = dnn.build_mlp([6, 5, 4], seed=4)
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, (100, 6))
    stats = dnn.record_stats(net, x)
    norm_net, _ = conversion.normalize(net, stats)
    orig = np.argmax(dnn.forward(net, x)[-1], axis=1)
    scaled = np.argmax(dnn.forward(norm_net, x)[-1], axis=1)
    np.testing.assert_array_equal(orig, scaled)


def test_kernels_and_shapes_untouched():
    net = dnn.build_mlp([6, 5, 4], seed=2)
    rng = np.random.default_rng(2)
    stats = dnn.record_stats(net, rng.uniform(0, 1, (50, 6)))
    out, _ = conversion.normalize(net, stats)
    for a, b in zip(net.layers, out.layers):
        assert a.kernel == b.kernel
        assert a.in_shape == b.in_shape and a.out_shape == b.out_shape
    assert out.time_window == net.time_window

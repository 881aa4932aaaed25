"""Reference model against loop-level re-implementations and a hand-worked fixture."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cimsnn import golden
from cimsnn.config import LayerSpec, NetworkSpec, NeuronModel, NeuronSpec, Reset, validate_precision, wrap
from cimsnn.errors import ShapeMismatch, ValidationError


def naive_conv(x, w, stride, pad):
    C, H, W = x.shape
    K, _, R, S = w.shape
    out_h = (H + 2 * pad - R) // stride + 1
    out_w = (W + 2 * pad - S) // stride + 1
    out = np.zeros((K, out_h, out_w), dtype=np.int64)
    for k in range(K):
        for oy in range(out_h):
            for ox in range(out_w):
                acc = 0
                for c in range(C):
                    for r in range(R):
                        for s in range(S):
                            iy, ix = oy * stride + r - pad, ox * stride + s - pad
                            if 0 <= iy < H and 0 <= ix < W:
                                acc += int(w[k, c, r, s]) * int(x[c, iy, ix])
                out[k, oy, ox] = acc
    return out


@given(
    st.integers(0, 2**32 - 1), st.sampled_from([4, 6, 8]), st.integers(1, 3), st.integers(2, 7),
    st.integers(2, 7), st.sampled_from([1, 2, 3]), st.integers(1, 2), st.integers(0, 1),
)
def test_conv_matches_loops(seed, wb, c, h, w, k, stride, pad):
    if h + 2 * pad < k or w + 2 * pad < k:
        return
    rng = np.random.default_rng(seed)
    p = validate_precision(wb)
    layer = LayerSpec.conv(c, 3, h, w, kernel=k, stride=stride, padding=pad)
    lo, hi = p.weight_range
    wts = rng.integers(lo, hi + 1, size=layer.weight_shape)
    x = (rng.random(layer.in_shape) < 0.5).astype(np.uint8)
    expect = wrap(naive_conv(x, wts, stride, pad), p.vmem_bits)
    np.testing.assert_array_equal(golden.conv_accumulate(x, wts, layer, p), expect)


def test_fc_accumulate_wraps():
    p = validate_precision(4)
    layer = LayerSpec.fc(20, 1)
    w = np.full((1, 20), 7)
    x = np.ones(20, dtype=np.uint8)
    # 140 wraps in 7 bits: 140 - 256 = -116, then into [-64, 63]: 140 mod 128 = 12
    assert golden.fc_accumulate(x, w, layer, p)[0] == 12


def test_weight_range_checked():
    p = validate_precision(4)
    layer = LayerSpec.fc(3, 1)
    with pytest.raises(ValidationError):
        golden.fc_accumulate(np.ones(3), np.array([[8, 0, 0]]), layer, p)
    with pytest.raises(ShapeMismatch):
        golden.fc_accumulate(np.ones(3), np.zeros((2, 3)), layer, p)


@pytest.mark.parametrize("model, reset, v0, inp, theta, leak, spike, v1", [
    (NeuronModel.IF, Reset.HARD, 3, 2, 5, 0, 1, 0),
    (NeuronModel.IF, Reset.HARD, 3, 1, 5, 0, 0, 4),
    (NeuronModel.IF, Reset.SOFT, 3, 4, 5, 0, 1, 2),
    (NeuronModel.LIF, Reset.HARD, 3, 3, 5, 1, 1, 0),   # 3 + 3 - 1 = 5 >= 5
    (NeuronModel.LIF, Reset.SOFT, 3, 2, 5, 1, 0, 4),
    (NeuronModel.LIF, Reset.SOFT, 0, 0, 1, 2, 0, -2),
    (NeuronModel.IF, Reset.SOFT, 60, 10, 5, 0, 0, -58),  # 70 wraps to -58 in 7 bits
])
def test_neuron_update_cases(model, reset, v0, inp, theta, leak, spike, v1):
    n = NeuronSpec(model, reset, threshold=theta, leak=leak)
    s, v = golden.neuron_update(np.array([v0]), np.array([inp]), n, validate_precision(4))
    assert (int(s[0]), int(v[0])) == (spike, v1)


def test_neuron_update_saturating():
    n = NeuronSpec(NeuronModel.IF, Reset.SOFT, threshold=100, saturate=True)
    s, v = golden.neuron_update(np.array([60]), np.array([10]), n, validate_precision(4))
    assert (int(s[0]), int(v[0])) == (0, 63)


def test_maxpool_or_and_floor():
    x = np.zeros((1, 5, 5), dtype=np.uint8)
    x[0, 1, 1] = 1
    x[0, 4, 4] = 1          # dropped by floor
    out = golden.maxpool(x)
    assert out.shape == (1, 2, 2)
    assert out.tolist() == [[[1, 0], [0, 0]]]


def test_two_layer_fixture():
    """Conv(1->1, 1x1, w=3) into FC(4->1, w=1) with hard-reset IF, threshold 5, worked by hand."""
    p = validate_precision(4)
    n = NeuronSpec(threshold=5)
    conv = LayerSpec.conv(1, 1, 2, 2, kernel=1, padding=0)
    fc = LayerSpec.fc(4, 1)
    net = NetworkSpec((conv, fc), 3, p, n, input_h=2, input_w=2, input_channels=1)
    x = np.zeros((3, 1, 2, 2), dtype=np.uint8)
    x[0, 0, 0, 0] = 1
    x[1, 0, 0, 0] = 1
    x[1, 0, 1, 1] = 1
    x[2, 0, 1, 1] = 1
    weights = [np.full((1, 1, 1, 1), 3), np.ones((1, 4), dtype=np.int64)]
    res = golden.run_network(net, weights, x)
    # conv vmem at (0,0): 3 -> 6 fires -> 0; at (1,1): 0 -> 3 -> 6 fires
    assert res.spikes[0][:, 0].tolist() == [
        [[0, 0], [0, 0]], [[1, 0], [0, 0]], [[0, 0], [0, 1]],
    ]
    # fc: inputs 0, 1, 1 -> vmem 0, 1, 2, never reaches 5
    assert res.spikes[1].reshape(-1).tolist() == [0, 0, 0]
    assert res.vmems[1].tolist() == [2]
    assert res.vmems[0][0].tolist() == [[0, 0], [0, 0]]
    np.testing.assert_allclose(res.input_sparsity[0], [0.75, 0.5, 0.75])
    np.testing.assert_allclose(res.input_sparsity[1], [1.0, 0.75, 0.75])


def test_input_checks():
    p = validate_precision(4)
    net = NetworkSpec((LayerSpec.fc(4, 1),), 2, p, input_h=2, input_w=2, input_channels=1)
    with pytest.raises(ShapeMismatch):
        golden.run_network(net, [np.zeros((1, 4))], np.zeros((3, 1, 2, 2)))
    with pytest.raises(ShapeMismatch):
        golden.run_network(net, [np.zeros((1, 4))], np.full((2, 1, 2, 2), 2))
    with pytest.raises(ShapeMismatch):
        golden.run_network(net, [], np.zeros((2, 1, 2, 2)))


def test_random_weights_cover_range():
    p = validate_precision(4)
    net = NetworkSpec((LayerSpec.fc(400, 30),), 1, p, input_h=1, input_w=1, input_channels=400)
    w = golden.random_weights(net, 0)[0]
    assert w.min() == -8 and w.max() == 7
    np.testing.assert_array_equal(w, golden.random_weights(net, 0)[0])

"""Seeded random networks and hypothesis strategies shared by the test modules."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from cimsnn.config import LayerSpec, NetworkSpec, NeuronModel, NeuronSpec, Reset, validate_precision

PRECISIONS = (4, 6, 8)
NEURON_VARIANTS = [(m, r) for m in (NeuronModel.IF, NeuronModel.LIF) for r in (Reset.HARD, Reset.SOFT)]


def random_network(seed: int, weight_bits: int = 4, model=NeuronModel.IF, reset=Reset.HARD,
                   max_layers: int = 3, max_dim: int = 16, max_t: int = 5) -> NetworkSpec:
    """A valid network of 1..max_layers Conv/MaxPool/FC layers with dims <= max_dim."""
    rng = np.random.default_rng(seed)
    p = validate_precision(weight_bits)
    T = int(rng.integers(1, max_t + 1))
    c = int(rng.integers(1, 5))
    h = int(rng.integers(2, max_dim + 1))
    w = int(rng.integers(2, max_dim + 1))
    shape = (c, h, w)
    layers = []
    n_layers = int(rng.integers(1, max_layers + 1))
    for i in range(n_layers):
        c, h, w = shape
        last = i == n_layers - 1
        roll = rng.random()
        if roll < 0.15 and h >= 2 and w >= 2 and not last:
            layer = LayerSpec.maxpool(c, h, w)
        elif roll < 0.35 and c * h * w <= 1152:
            layer = LayerSpec.fc(c * h * w, int(rng.integers(1, 40)))
        else:
            k = int(rng.choice([1, 3, 5]))
            k = min(k, h + 2, w + 2) if k > 1 else 1
            stride = int(rng.integers(1, 3))
            pad = int(rng.integers(0, k // 2 + 1))
            if (h + 2 * pad - k) < 0 or (w + 2 * pad - k) < 0:
                pad = k // 2
            out_c = int(rng.integers(1, 48))
            layer = LayerSpec.conv(c, out_c, h, w, kernel=k, stride=stride, padding=pad)
        layers.append(layer)
        shape = layer.out_shape
        if layer.kind.value == "FC":
            break
    lo, hi = p.vmem_range
    threshold = int(rng.integers(1, 12))
    leak = int(rng.integers(0, 3)) if model is NeuronModel.LIF else 0
    neuron = NeuronSpec(model, reset, threshold=threshold, leak=leak)
    first = layers[0]
    return NetworkSpec(layers=tuple(layers), timesteps=T, precision=p, neuron=neuron,
                       input_h=first.in_h, input_w=first.in_w, input_channels=first.in_channels)


def random_input(net: NetworkSpec, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    density = rng.uniform(0.05, 0.6)
    return (rng.random(net.input_shape) < density).astype(np.uint8)


precisions = st.sampled_from(PRECISIONS)
seeds = st.integers(0, 2**32 - 1)

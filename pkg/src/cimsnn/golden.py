"""Integer reference executor for spiking Conv/FC/MaxPool networks.

Spike tensors are ``uint8`` arrays of 0/1 shaped ``(T, C, H, W)``; a single
timestep slice is ``(C, H, W)``. Membrane potentials are ``int64`` arrays
holding values already reduced to ``vmem_bits`` two's complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import (
    LayerKind,
    LayerSpec,
    NetworkSpec,
    NeuronSpec,
    PrecisionMode,
    Reset,
    saturate,
    wrap,
)
from .errors import ShapeMismatch, ValidationError


def check_weights(weights: np.ndarray, layer: LayerSpec, p: PrecisionMode) -> np.ndarray:
    weights = np.asarray(weights)
    if weights.shape != layer.weight_shape:
        raise ShapeMismatch(f"weights {weights.shape} != expected {layer.weight_shape}")
    lo, hi = p.weight_range
    if weights.size and (weights.min() < lo or weights.max() > hi):
        raise ValidationError(f"weights outside [{lo}, {hi}] for {p}")
    return weights.astype(np.int64)


def _check_slice(spikes_t: np.ndarray, layer: LayerSpec) -> np.ndarray:
    spikes_t = np.asarray(spikes_t)
    if layer.kind is LayerKind.FC:
        if spikes_t.size != layer.in_channels:
            raise ShapeMismatch(f"FC expects {layer.in_channels} inputs, got {spikes_t.size}")
        return spikes_t.reshape(-1)
    if spikes_t.shape != layer.in_shape:
        raise ShapeMismatch(f"input slice {spikes_t.shape} != layer input {layer.in_shape}")
    return spikes_t


def conv_accumulate(spikes_t, weights, layer: LayerSpec, p: PrecisionMode) -> np.ndarray:
    """Wraparound sum of weight * spike over each receptive field -> ``(K, H_out, W_out)``."""
    x = _check_slice(spikes_t, layer).astype(np.int64)
    w = check_weights(weights, layer, p)
    pad = layer.padding
    x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (layer.kernel_h, layer.kernel_w), axis=(1, 2))
    windows = windows[:, :: layer.stride, :: layer.stride][:, : layer.out_h, : layer.out_w]
    acc = np.einsum("chwrs,kcrs->khw", windows, w, optimize=True)
    return wrap(acc, p.vmem_bits)


def fc_accumulate(spikes_t, weights, layer: LayerSpec, p: PrecisionMode) -> np.ndarray:
    x = _check_slice(spikes_t, layer).astype(np.int64)
    w = check_weights(weights, layer, p)
    return wrap(w @ x, p.vmem_bits)


def accumulate(spikes_t, weights, layer: LayerSpec, p: PrecisionMode) -> np.ndarray:
    if layer.kind is LayerKind.CONV:
        return conv_accumulate(spikes_t, weights, layer, p)
    if layer.kind is LayerKind.FC:
        return fc_accumulate(spikes_t, weights, layer, p)
    raise ValueError("MaxPool layers do not accumulate")


def neuron_update(vmem, inp, n: NeuronSpec, p: PrecisionMode):
    """One integrate/leak/fire/reset step. Returns ``(spikes, new_vmem)``.

    Spikes where the integrated potential is >= threshold; hard reset zeroes
    those neurons, soft reset subtracts the threshold.
    """
    vmem = np.asarray(vmem, dtype=np.int64)
    inp = np.asarray(inp, dtype=np.int64)
    if vmem.shape != inp.shape:
        raise ShapeMismatch(f"vmem {vmem.shape} vs input {inp.shape}")
    limit = saturate if n.saturate else wrap
    v = limit(vmem + inp - n.effective_leak, p.vmem_bits)
    fired = v >= n.threshold
    if n.reset is Reset.HARD:
        v = np.where(fired, 0, v)
    else:
        v = np.where(fired, limit(v - n.threshold, p.vmem_bits), v)
    return fired.astype(np.uint8), v


def maxpool(spikes_t, window: int = 2, stride: int = 2) -> np.ndarray:
    """Logical OR over ``window x window`` blocks of a ``(C, H, W)`` slice."""
    x = np.asarray(spikes_t)
    if x.ndim != 3 or x.shape[1] < window or x.shape[2] < window:
        raise ShapeMismatch(f"maxpool needs (C, H>={window}, W>={window}), got {x.shape}")
    out_h = (x.shape[1] - window) // stride + 1
    out_w = (x.shape[2] - window) // stride + 1
    windows = sliding_window_view(x, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    return windows[:, :out_h, :out_w].max(axis=(3, 4)).astype(np.uint8)


def sparsity(spikes) -> float:
    spikes = np.asarray(spikes)
    return 1.0 - float(np.count_nonzero(spikes)) / spikes.size


@dataclass
class GoldenResult:
    spikes: list          # per layer, (T, C, H, W) output spikes
    vmems: list           # per weighted layer, final (K, H, W) Vmem
    input_sparsity: np.ndarray  # (n_layers, T): sparsity of each layer's input

    @property
    def output(self) -> np.ndarray:
        return self.spikes[-1]


def check_input(net: NetworkSpec, spikes) -> np.ndarray:
    spikes = np.asarray(spikes)
    if spikes.shape != net.input_shape:
        raise ShapeMismatch(f"input {spikes.shape} != network input {net.input_shape}")
    if spikes.size and (spikes.min() < 0 or spikes.max() > 1):
        raise ShapeMismatch("spike tensors hold only 0/1")
    return spikes.astype(np.uint8)


def run_network(net: NetworkSpec, weights, spikes) -> GoldenResult:
    """Run every layer over all timesteps; each layer's Vmem persists across timesteps."""
    x = check_input(net, spikes)
    weights = list(weights)
    if len(weights) != len(net.weighted_layers):
        raise ShapeMismatch(f"{len(weights)} weight tensors for {len(net.weighted_layers)} weighted layers")
    p = net.precision
    T = net.timesteps
    per_layer, vmems = [], []
    sparsities = np.zeros((len(net.layers), T))
    w_iter = iter(weights)
    for i, layer in enumerate(net.layers):
        for t in range(T):
            sparsities[i, t] = sparsity(x[t])
        if layer.kind is LayerKind.MAXPOOL:
            out = np.stack([maxpool(x[t]) for t in range(T)])
        else:
            w = next(w_iter)
            neuron = net.neuron_for(i)
            v = np.zeros(layer.out_shape if layer.kind is LayerKind.CONV else (layer.out_channels,), dtype=np.int64)
            out = np.zeros((T,) + layer.out_shape, dtype=np.uint8)
            for t in range(T):
                fired, v = neuron_update(v, accumulate(x[t], w, layer, p), neuron, p)
                out[t] = fired.reshape(layer.out_shape)
            vmems.append(v)
        per_layer.append(out)
        x = out
    return GoldenResult(per_layer, vmems, sparsities)


def random_weights(net: NetworkSpec, seed: int) -> list:
    """Uniform weights over the full signed range of the network precision."""
    rng = np.random.default_rng(seed)
    lo, hi = net.precision.weight_range
    return [rng.integers(lo, hi + 1, size=net.layers[i].weight_shape, dtype=np.int64)
            for i in net.weighted_layers]

"""Cycle simulation of compute-unit chains and neuron units with timestep pipelining.

Handshake semantics for one chain (units ``0..n-1``, the last one the NU)::

    start(u, t)  = max(push(u, t-1), arrive(u-1, t))
    finish(u, t) = start(u, t) + delay(u, t)
    push(u, t)   = max(finish(u, t), start(u+1, t-1))   # one-entry link buffer
    arrive(u, t) = push(u, t) + transfer(u)

A unit keeps its finished block until the outgoing link is free; the link is
freed when the downstream unit starts on the block it holds.
"""

from __future__ import annotations

import csv
import heapq
from collections import defaultdict
from dataclasses import dataclass, field, fields
from math import ceil
from typing import Optional

import numpy as np

from . import golden
from .config import ArchParams, LayerKind, Mode, NetworkSpec, wrap
from .datapath import DatapathResult, datapath_cycles, ifspad_from_block, im2col_index, im2col_matrix
from .errors import FanInExceedsCapacity
from .macro import (
    WEIGHT_ROWS,
    compute_macro_state,
    load_vmem,
    neuron_macro_state,
    neuron_pass,
    run_op_sequence,
    word_neuron_pass,
    FULL_BASE,
)
from .mapper import TileSchedule, chain_length, map_network, n_chains


@dataclass(frozen=True)
class UnitNode:
    id: str
    kind: str                 # "CU" or "NU"
    chain: int
    index: int                # position along the chain
    upstream: Optional[str]
    downstream: Optional[str]


def build_topology(mode: Mode, arch: ArchParams = ArchParams()) -> list:
    mode = Mode(mode)
    length, chains = chain_length(mode), n_chains(mode)
    out = []
    for c in range(chains):
        ids = [f"CU{c * length + k}" for k in range(length)] + [f"NU{c}"]
        out.append([
            UnitNode(uid, uid[:2], c, i, ids[i - 1] if i else None, ids[i + 1] if i + 1 < len(ids) else None)
            for i, uid in enumerate(ids)
        ])
    return out


@dataclass
class SimTrace:
    events: list = field(default_factory=list)   # (cycle, unit, timestep, event)

    def extend(self, other: "SimTrace", offset: int = 0) -> None:
        self.events.extend((c + offset, u, t, e) for c, u, t, e in other.events)

    def for_unit(self, unit: str) -> list:
        return [ev for ev in self.events if ev[1] == unit]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle", "unit", "timestep", "event"])
            w.writerows(sorted(self.events, key=lambda ev: (ev[0], ev[1], ev[2], ev[3])))


@dataclass
class ChainTiming:
    start: np.ndarray
    finish: np.ndarray
    push: np.ndarray
    arrive: np.ndarray
    makespan: int
    trace: SimTrace
    stalls: int


def schedule_chain(delays, transfers, names=None) -> ChainTiming:
    """Event-driven ready/valid execution of one chain; ``delays`` is ``(units, T)``."""
    delays = np.asarray(delays, dtype=np.int64)
    n, T = delays.shape
    transfers = list(transfers)
    names = names or [f"U{u}" for u in range(n)]
    start = np.full((n, T), -1, dtype=np.int64)
    finish, push, arrive = start.copy(), start.copy(), start.copy()
    trace = SimTrace()
    if T == 0 or n == 0:
        return ChainTiming(start, finish, push, arrive, 0, trace, 0)

    next_t = [0] * n
    busy = [False] * n
    holding = [None] * n
    link_full = [False] * n
    inbox = [set() for _ in range(n)]
    waiting = [False] * n
    heap, seq = [], 0
    stalls = 0

    def post(time, kind, u, t):
        nonlocal seq
        heapq.heappush(heap, (time, seq, kind, u, t))
        seq += 1

    def progress(now):
        nonlocal stalls
        changed = True
        while changed:
            changed = False
            for u in range(n):
                t = holding[u]
                if t is not None and not link_full[u]:
                    push[u, t] = now
                    holding[u] = None
                    link_full[u] = u + 1 < n
                    trace.events.append((now, names[u], t, "send"))
                    post(now + transfers[u], "arrive", u, t)
                    changed = True
                t = next_t[u]
                if busy[u] or holding[u] is not None or t >= T:
                    continue
                if u > 0 and t not in inbox[u]:
                    if not waiting[u]:
                        waiting[u] = True
                        stalls += 1
                        trace.events.append((now, names[u], t, "stall"))
                    continue
                if u > 0:
                    inbox[u].discard(t)
                    link_full[u - 1] = False
                waiting[u] = False
                busy[u] = True
                start[u, t] = now
                next_t[u] += 1
                trace.events.append((now, names[u], t, "start"))
                post(now + int(delays[u, t]), "finish", u, t)
                changed = True

    progress(0)
    makespan = 0
    while heap:
        now = heap[0][0]
        while heap and heap[0][0] == now:
            _, _, kind, u, t = heapq.heappop(heap)
            if kind == "finish":
                busy[u] = False
                finish[u, t] = now
                trace.events.append((now, names[u], t, "finish"))
                if link_full[u]:
                    stalls += 1
                    trace.events.append((now, names[u], t, "stall"))
                holding[u] = t
            else:
                arrive[u, t] = now
                if u + 1 < n:
                    inbox[u + 1].add(t)
                else:
                    makespan = max(makespan, now)
        progress(now)
    return ChainTiming(start, finish, push, arrive, makespan, trace, stalls)


@dataclass
class RunStats:
    cycles: int = 0
    macro_ops: int = 0
    raw_sops: int = 0
    dense_sops: int = 0
    parity_switches: int = 0
    spikes_presented: int = 0
    ifspad_writes: int = 0
    ifspad_reads: int = 0
    fifo_ops: int = 0
    xfer_words: int = 0
    nu_passes: int = 0
    nu_cycles: int = 0
    detector_stalls: int = 0
    pipeline_stalls: int = 0
    tiles: int = 0

    def __add__(self, other: "RunStats") -> "RunStats":
        return RunStats(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class LayerContext:
    """Per-layer data shared by all tiles: im2col matrices and the weight matrix."""

    schedule: TileSchedule
    columns: np.ndarray        # (T, fan_in, positions)
    weight_matrix: np.ndarray  # (fan_in, K), rows in receptive-field order

    @classmethod
    def build(cls, schedule: TileSchedule, layer_input: np.ndarray, weights) -> "LayerContext":
        layer = schedule.layer
        index = im2col_index(layer)
        columns = np.stack([im2col_matrix(x, layer, index) for x in layer_input])
        w = golden.check_weights(weights, layer, schedule.precision)
        return cls(schedule, columns, w.reshape(layer.out_channels, -1).T.copy())


@dataclass
class TileResult:
    spikes: np.ndarray     # (T, channels in group, positions in group)
    timing: ChainTiming
    stats: RunStats
    datapath: dict         # (macro index, t) -> DatapathResult


def _step_overhead(arch: ArchParams, rows: int, cols: int) -> int:
    return ceil(arch.step_overhead_density * 2 * rows * cols) if rows else 0


def _accumulate_ops(partial, dp: DatapathResult, weights, row0: int, n_rows: int, vmem_bits: int):
    """Word-level application of the issued tuples: each op adds the parity's weight fields of
    row Y into Vmem column X."""
    if dp.macro_ops == 0:
        return partial
    for par in (0, 1):
        sel = dp.op_parity == par
        counts = np.bincount(dp.op_x[sel] * n_rows + dp.op_y[sel], minlength=16 * n_rows)
        counts = counts.reshape(16, n_rows)
        partial[:, par::2] += counts @ weights[row0:row0 + n_rows, par::2]
    return wrap(partial, vmem_bits)


def _accumulate_bits(partial, dp: DatapathResult, weights, row0, n_rows, chain_width, arch, p):
    out = np.empty_like(partial)
    for c0 in range(0, partial.shape[1], chain_width):
        cols = slice(c0, c0 + chain_width)
        state = compute_macro_state(weights[row0:row0 + n_rows, cols], p, partial[:, cols])
        state, _, _ = run_op_sequence(state, dp.ops(), p, arch.parity_switch_cycles)
        out[:, cols] = load_vmem(state, p, WEIGHT_ROWS, channels=partial[:, cols].shape[1])
    return out


def _neuron_bits(partial, full, neuron, p, chain_width):
    spikes = np.zeros_like(partial, dtype=np.uint8)
    new_full = np.empty_like(full)
    for c0 in range(0, partial.shape[1], chain_width):
        cols = slice(c0, c0 + chain_width)
        state = neuron_macro_state(partial[:, cols], full[:, cols], neuron, p)
        flags, state, _ = neuron_pass(state, neuron, p)
        width = partial[:, cols].shape[1]
        spikes[:, cols] = flags[:, :width]
        new_full[:, cols] = load_vmem(state, p, FULL_BASE, channels=width)
    return spikes, new_full


def simulate_tile(ctx: LayerContext, tile, neuron, arch: ArchParams = ArchParams(),
                  bit_accurate: bool = False, record_trace: bool = True) -> TileResult:
    """Run one (channel group, position group) tile over all timesteps on every chain.

    Chains of a Mode 1 tile see identical IFspads and differ only in weights,
    so datapath timing is computed once per (macro, timestep) and shared.
    """
    sched = ctx.schedule
    p = sched.precision
    group, positions = tile
    group, positions = list(group), list(positions)
    chains = sched.chain_channels(group)
    width = sched.channels_per_chain
    T = ctx.columns.shape[0]
    offsets = sched.row_offsets
    n_cu = len(offsets)
    n_pos = len(positions)
    weights = ctx.weight_matrix[:, group]

    full = np.zeros((16, len(group)), dtype=np.int64)
    out = np.zeros((T, len(group), n_pos), dtype=np.uint8)
    delays = np.zeros((n_cu + 1, T), dtype=np.int64)
    stats = RunStats(tiles=1)
    dps = {}
    n_even = [len(ch[0::2]) for ch in chains]
    n_odd = [len(ch[1::2]) for ch in chains]
    n_ch = len(chains)
    for t in range(T):
        cols = ctx.columns[t][:, positions]
        partial = np.zeros((16, len(group)), dtype=np.int64)
        for k, (r0, r1) in enumerate(offsets):
            pad = ifspad_from_block(cols[r0:r1])
            dp = datapath_cycles(pad, arch)
            dps[k, t] = dp
            delays[k, t] = dp.cycles + _step_overhead(arch, r1 - r0, n_pos)
            if bit_accurate:
                partial = _accumulate_bits(partial, dp, weights, r0, r1 - r0, width, arch, p)
            else:
                partial = _accumulate_ops(partial, dp, weights, r0, r1 - r0, p.vmem_bits)
            n_spikes = dp.spikes
            stats.macro_ops += n_ch * dp.macro_ops
            stats.raw_sops += n_spikes * (sum(n_even) + sum(n_odd))
            stats.dense_sops += (r1 - r0) * n_pos * len(group)
            stats.parity_switches += n_ch * dp.switches
            stats.spikes_presented += n_ch * n_spikes
            stats.ifspad_writes += n_ch * dp.il_writes
            stats.ifspad_reads += n_ch * dp.row_reads
            stats.fifo_ops += n_ch * dp.fifo_ops
            stats.detector_stalls += n_ch * dp.detector_stalls
            stats.xfer_words += n_ch * arch.xfer_words
        delays[n_cu, t] = arch.neuron_pass_cycles
        if bit_accurate:
            fired, full = _neuron_bits(partial, full, neuron, p, width)
        else:
            fired, full = word_neuron_pass(partial, full, neuron, p)
        out[t] = fired[:n_pos].T
        stats.nu_passes += n_ch
        stats.nu_cycles += n_ch * arch.neuron_pass_cycles

    transfers = [arch.xfer_cycles] * n_cu + [arch.nu_writeback_cycles]
    names = [u.id for u in build_topology(sched.mode, arch)[0]]
    timing = schedule_chain(delays, transfers, names)
    if record_trace and n_ch > 1:
        # the other chains run in lockstep with chain 0
        topo = build_topology(sched.mode, arch)
        extra = []
        for c in range(1, n_ch):
            rename = {a.id: b.id for a, b in zip(topo[0], topo[c])}
            extra.extend((cyc, rename[u], t, e) for cyc, u, t, e in timing.trace.events)
        timing.trace.events.extend(extra)
    if not record_trace:
        timing.trace.events.clear()
    stats.cycles = timing.makespan
    stats.pipeline_stalls = n_ch * timing.stalls
    return TileResult(out, timing, stats, dps)


@dataclass
class NetworkResult:
    spikes: list                # per layer (T, C, H, W)
    layer_stats: list           # per layer RunStats (zeros for pooling)
    schedules: list
    trace: SimTrace
    input_sparsity: np.ndarray  # (n_layers, T)

    @property
    def stats(self) -> RunStats:
        total = RunStats()
        for s in self.layer_stats:
            total = total + s
        return total

    @property
    def output(self) -> np.ndarray:
        return self.spikes[-1]


def simulate_layer(schedule: TileSchedule, layer_input, weights, neuron, arch=ArchParams(),
                   bit_accurate=False, record_trace=True):
    layer = schedule.layer
    ctx = LayerContext.build(schedule, layer_input, weights)
    T = layer_input.shape[0]
    out = np.zeros((T, layer.out_channels, layer.n_positions), dtype=np.uint8)
    stats = RunStats()
    trace = SimTrace()
    for tile in schedule.tiles():
        res = simulate_tile(ctx, tile, neuron, arch, bit_accurate, record_trace)
        out[np.ix_(range(T), tile[0], tile[1])] = res.spikes
        trace.extend(res.timing.trace, stats.cycles)
        stats = stats + res.stats
    return out.reshape((T,) + layer.out_shape), stats, trace


def simulate_network(net: NetworkSpec, weights, spikes, arch: ArchParams = ArchParams(),
                     bit_accurate: bool = False, record_trace: bool = True) -> NetworkResult:
    """Layers run back to back on the core; pooling happens host-side between layers."""
    x = golden.check_input(net, spikes)
    schedules = map_network(net, arch)
    weights = list(weights)
    if len(weights) != len(net.weighted_layers):
        raise ValueError(f"{len(weights)} weight tensors for {len(net.weighted_layers)} weighted layers")
    w_iter = iter(weights)
    T = net.timesteps
    per_layer, layer_stats = [], []
    trace = SimTrace()
    sparsities = np.zeros((len(net.layers), T))
    offset = 0
    for i, (layer, sched) in enumerate(zip(net.layers, schedules)):
        for t in range(T):
            sparsities[i, t] = golden.sparsity(x[t])
        if layer.kind is LayerKind.MAXPOOL:
            out = np.stack([golden.maxpool(x[t]) for t in range(T)])
            stats = RunStats()
        else:
            out, stats, layer_trace = simulate_layer(sched, x, next(w_iter), net.neuron_for(i), arch,
                                                     bit_accurate, record_trace)
            trace.extend(layer_trace, offset)
            offset += stats.cycles
        per_layer.append(out)
        layer_stats.append(stats)
        x = out
    return NetworkResult(per_layer, layer_stats, schedules, trace, sparsities)


__all__ = [
    "UnitNode", "build_topology", "SimTrace", "ChainTiming", "schedule_chain", "RunStats",
    "LayerContext", "TileResult", "simulate_tile", "simulate_layer", "NetworkResult",
    "simulate_network", "FanInExceedsCapacity",
]

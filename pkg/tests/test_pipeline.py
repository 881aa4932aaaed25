"""Chain scheduling against a longest-path oracle and end-to-end functional equivalence."""

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from cimsnn import golden
from cimsnn.config import ArchParams, LayerSpec, Mode, NetworkSpec, NeuronSpec, validate_precision
from cimsnn.mapper import tile_layer
from cimsnn.pipeline import (
    LayerContext,
    RunStats,
    build_topology,
    schedule_chain,
    simulate_network,
    simulate_tile,
)

from netgen import NEURON_VARIANTS, random_input, random_network


def longest_path_makespan(delays, transfers):
    """Dependence DAG of start/finish/push/arrive events; makespan is the heaviest path."""
    n, T = delays.shape
    g = nx.DiGraph()
    for u in range(n):
        for t in range(T):
            g.add_edge(("S", u, t), ("F", u, t), w=int(delays[u, t]))
            g.add_edge(("F", u, t), ("P", u, t), w=0)
            g.add_edge(("P", u, t), ("A", u, t), w=int(transfers[u]))
            if u > 0:
                g.add_edge(("A", u - 1, t), ("S", u, t), w=0)
            if t > 0:
                g.add_edge(("P", u, t - 1), ("S", u, t), w=0)
                if u + 1 < n:
                    g.add_edge(("S", u + 1, t - 1), ("P", u, t), w=0)
    g.add_edge("src", ("S", 0, 0), w=0)
    for t in range(T):
        g.add_edge(("A", n - 1, t), "sink", w=0)
    dist = {}
    for node in nx.topological_sort(g):
        dist[node] = max((dist[p] + g.edges[p, node]["w"] for p in g.predecessors(node)), default=0)
    return dist["sink"]


@given(st.integers(1, 10), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_schedule_matches_longest_path(n, T, seed):
    rng = np.random.default_rng(seed)
    delays = rng.integers(0, 200, size=(n, T))
    transfers = rng.integers(0, 40, size=n)
    timing = schedule_chain(delays, transfers)
    assert timing.makespan == longest_path_makespan(delays, transfers)
    np.testing.assert_array_equal(timing.finish, timing.start + delays)


@given(st.integers(1, 10), st.integers(1, 20), st.integers(1, 300), st.data())
def test_uniform_closed_form(n, T, d, data):
    tr = data.draw(st.integers(0, d))
    timing = schedule_chain(np.full((n, T), d), [tr] * n)
    assert timing.makespan == (n + T - 1) * d + n * tr


def test_schedule_respects_dependences():
    rng = np.random.default_rng(5)
    delays = rng.integers(1, 50, size=(4, 6))
    tr = [32, 32, 32, 2]
    t = schedule_chain(delays, tr)
    assert np.all(t.start[1:] >= t.arrive[:-1])          # data
    assert np.all(t.start[:, 1:] >= t.push[:, :-1])      # one block per unit
    assert np.all(t.push[:-1, 1:] >= t.start[1:, :-1])   # one-entry link buffer
    assert np.all(t.arrive == t.push + np.array(tr)[:, None])


def test_schedule_trace_events():
    t = schedule_chain(np.array([[5, 5], [50, 50]]), [1, 1], ["CU0", "NU0"])
    starts = [(c, u, ts) for c, u, ts, e in t.trace.events if e == "start"]
    assert starts == [(0, "CU0", 0), (5, "CU0", 1), (6, "NU0", 0), (56, "NU0", 1)]
    assert any(e == "stall" for _, _, _, e in t.trace.events)
    assert t.stalls >= 1


def test_topology():
    m1 = build_topology(Mode.MODE1)
    assert [[u.id for u in chain] for chain in m1] == [
        ["CU0", "CU1", "CU2", "NU0"], ["CU3", "CU4", "CU5", "NU1"], ["CU6", "CU7", "CU8", "NU2"],
    ]
    m2 = build_topology(Mode.MODE2)
    assert len(m2) == 1 and len(m2[0]) == 10 and m2[0][-1].kind == "NU"
    assert m2[0][0].upstream is None and m2[0][-1].downstream is None


def _tile_setup(wb=4, c=384, k=None, size=4, T=3, sparsity=0.9, seed=0):
    p = validate_precision(wb)
    k = k or 3 * p.weights_per_row
    layer = LayerSpec.conv(c, k, size, size, kernel=1, padding=0)
    net = NetworkSpec((layer,), T, p, NeuronSpec(threshold=3), input_h=size, input_w=size, input_channels=c)
    rng = np.random.default_rng(seed)
    x = (rng.random(net.input_shape) >= sparsity).astype(np.uint8)
    w = golden.random_weights(net, seed)
    return net, layer, x, w


def test_tile_timing_and_stats():
    net, layer, x, w = _tile_setup()
    sched = tile_layer(layer, net.precision)
    ctx = LayerContext.build(sched, x, w[0])
    arch = ArchParams()
    res = simulate_tile(ctx, next(sched.tiles()), net.neuron, arch)
    n_cu, T = len(sched.row_offsets), 3
    delays = np.zeros((n_cu + 1, T), dtype=np.int64)
    for (k, t), dp in res.datapath.items():
        delays[k, t] = dp.cycles + int(np.ceil(0.1 * 2 * 128 * 16))
    delays[-1] = 66
    assert res.stats.cycles == longest_path_makespan(delays, [32] * n_cu + [2])
    assert res.stats.nu_cycles == 3 * T * 66
    assert res.stats.xfer_words == 3 * T * n_cu * 32
    assert res.stats.dense_sops == 384 * 16 * 36 * T
    spikes = sum(dp.spikes for dp in res.datapath.values())
    assert res.stats.macro_ops == 3 * 2 * spikes
    assert res.stats.raw_sops == spikes * 36
    trace_units = {u for _, u, _, _ in res.timing.trace.events}
    assert trace_units == {f"CU{i}" for i in range(9)} | {"NU0", "NU1", "NU2"}


def test_tile_timing_independent_of_precision():
    cycles = []
    for wb in (4, 6, 8):
        net, layer, x, w = _tile_setup(wb)
        res = simulate_network(net, w, x, record_trace=False)
        cycles.append(res.stats.cycles)
    assert len(set(cycles)) == 1


@pytest.mark.parametrize("wb", [4, 6, 8])
@pytest.mark.parametrize("variant", NEURON_VARIANTS)
def test_network_matches_golden(wb, variant):
    for seed in range(8):
        net = random_network(seed, wb, *variant)
        w, x = golden.random_weights(net, seed), random_input(net, seed)
        ref = golden.run_network(net, w, x)
        sim = simulate_network(net, w, x, record_trace=False)
        for a, b in zip(ref.spikes, sim.spikes):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(ref.input_sparsity, sim.input_sparsity)


@pytest.mark.parametrize("wb", [4, 6, 8])
def test_bit_accurate_path_agrees(wb):
    p = validate_precision(wb)
    layers = (LayerSpec.conv(3, 14, 4, 4), LayerSpec.maxpool(14, 4, 4), LayerSpec.fc(56, 5))
    net = NetworkSpec(layers, 2, p, NeuronSpec(threshold=2), input_h=4, input_w=4, input_channels=3)
    rng = np.random.default_rng(wb)
    x = (rng.random(net.input_shape) < 0.4).astype(np.uint8)
    w = golden.random_weights(net, wb)
    fast = simulate_network(net, w, x, record_trace=False)
    slow = simulate_network(net, w, x, bit_accurate=True, record_trace=False)
    ref = golden.run_network(net, w, x)
    for a, b, c in zip(ref.spikes, fast.spikes, slow.spikes):
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a, c)
    assert fast.stats == slow.stats


def test_mode2_layer_matches_golden():
    net, layer, x, w = _tile_setup(wb=8, c=1000, k=13, size=3, T=2, sparsity=0.7)
    sim = simulate_network(net, w, x, record_trace=False)
    assert sim.schedules[0].mode is Mode.MODE2
    np.testing.assert_array_equal(sim.output, golden.run_network(net, w, x).output)


def test_layer_cycles_add_up():
    net = random_network(11, 4)
    w, x = golden.random_weights(net, 1), random_input(net, 1)
    sim = simulate_network(net, w, x)
    assert sim.stats.cycles == sum(s.cycles for s in sim.layer_stats)
    if sim.trace.events:
        assert max(c for c, _, _, _ in sim.trace.events) <= sim.stats.cycles


def test_run_stats_addition():
    a = RunStats(cycles=3, macro_ops=2)
    b = RunStats(cycles=4, parity_switches=1)
    assert (a + b).to_dict()["cycles"] == 7 and (a + b).parity_switches == 1


def test_trace_csv(tmp_path):
    net, layer, x, w = _tile_setup(T=2)
    sim = simulate_network(net, w, x)
    path = tmp_path / "trace.csv"
    sim.trace.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "cycle,unit,timestep,event"
    assert len(lines) == len(sim.trace.events) + 1

"""Loader, detector and ping-pong queue: im2col oracle, timing examples and queue invariants."""

from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cimsnn.config import ArchParams, LayerSpec, Parity
from cimsnn.datapath import (
    IFSPAD_COLS,
    TileWindow,
    datapath_cycles,
    detect_spikes,
    ifspad_from_block,
    im2col_load,
    im2col_matrix,
    parity_runs,
    pingpong_run,
    scan,
)
from cimsnn.errors import TileOverflow


def software_im2col(x, layer):
    """Receptive-field rows ordered (c, kr, ks); zero outside the input."""
    C, H, W = x.shape
    cols = []
    for oy in range(layer.out_h):
        for ox in range(layer.out_w):
            col = []
            for c in range(C):
                for kr in range(layer.kernel_h):
                    for ks in range(layer.kernel_w):
                        iy = oy * layer.stride + kr - layer.padding
                        ix = ox * layer.stride + ks - layer.padding
                        col.append(x[c, iy, ix] if 0 <= iy < H and 0 <= ix < W else 0)
            cols.append(col)
    return np.array(cols, dtype=np.uint8).T


layer_params = st.tuples(
    st.integers(1, 4), st.integers(1, 12), st.integers(1, 12), st.sampled_from([1, 2, 3, 5]),
    st.integers(1, 3), st.integers(0, 2),
)


@given(st.integers(0, 2**32 - 1), layer_params)
def test_im2col_matches_loops(seed, params):
    c, h, w, k, stride, pad = params
    if h + 2 * pad < k or w + 2 * pad < k:
        return
    layer = LayerSpec.conv(c, 4, h, w, kernel=k, stride=stride, padding=pad)
    x = (np.random.default_rng(seed).random(layer.in_shape) < 0.4).astype(np.uint8)
    np.testing.assert_array_equal(im2col_matrix(x, layer), software_im2col(x, layer))


@given(st.integers(0, 2**32 - 1), layer_params, st.data())
def test_tile_load_is_submatrix(seed, params, data):
    c, h, w, k, stride, pad = params
    if h + 2 * pad < k or w + 2 * pad < k:
        return
    layer = LayerSpec.conv(c, 4, h, w, kernel=k, stride=stride, padding=pad)
    x = (np.random.default_rng(seed).random(layer.in_shape) < 0.4).astype(np.uint8)
    full = software_im2col(x, layer)
    start = data.draw(st.integers(0, layer.fan_in - 1))
    stop = data.draw(st.integers(start + 1, min(layer.fan_in, start + 128)))
    n_pos = data.draw(st.integers(1, min(IFSPAD_COLS, layer.n_positions)))
    positions = data.draw(st.lists(st.integers(0, layer.n_positions - 1), min_size=n_pos,
                                   max_size=n_pos, unique=True))
    pad_ = im2col_load(x, TileWindow(layer, positions, start, stop))
    assert pad_.n_rows == stop - start
    np.testing.assert_array_equal(pad_.bits[:stop - start, :n_pos], full[start:stop][:, positions])
    assert pad_.bits[stop - start:].sum() == 0 and pad_.bits[:, n_pos:].sum() == 0


def test_fc_im2col_is_identity_column():
    layer = LayerSpec.fc(10, 3)
    x = np.arange(10) % 2
    np.testing.assert_array_equal(im2col_matrix(x.reshape(10, 1, 1), layer)[:, 0], x)


def test_tile_window_limits():
    layer = LayerSpec.conv(32, 4, 8, 8)
    with pytest.raises(TileOverflow):
        TileWindow(layer, range(17), 0, 10)
    with pytest.raises(TileOverflow):
        TileWindow(layer, range(4), 0, 129)
    with pytest.raises(TileOverflow):
        TileWindow(layer, range(4), 200, 300)
    with pytest.raises(TileOverflow):
        ifspad_from_block(np.zeros((129, 16), dtype=np.uint8))


@given(st.integers(0, 0xFFFF))
def test_detect_spikes_lsb_first(mask):
    cols = detect_spikes(mask)
    assert cols == sorted(cols)
    assert sum(1 << c for c in cols) == mask


def test_scan_order():
    block = np.zeros((3, 16), dtype=np.uint8)
    block[0, [5, 1]] = 1
    block[2, 0] = 1
    assert scan(ifspad_from_block(block)) == [(0, 1), (0, 5), (2, 0)]


def test_pingpong_forty_tuples():
    ops, switches = pingpong_run([(i % 128, i % 16) for i in range(40)])
    assert parity_runs([int(o.parity) for o in ops]) == [16, 16, 16, 16, 8, 8]
    assert switches == 5


def test_pingpong_short_stream():
    ops, switches = pingpong_run([(1, 2), (3, 4), (5, 6)])
    assert [int(o.parity) for o in ops] == [0, 0, 0, 1, 1, 1]
    assert switches == 1


tuple_streams = st.lists(st.tuples(st.integers(0, 127), st.integers(0, 15)), max_size=300)


@given(tuple_streams, st.integers(1, 32))
def test_pingpong_invariants(tuples, depth):
    ops, switches = pingpong_run(tuples, depth)
    even = [(o.y, o.x) for o in ops if o.parity is Parity.EVEN]
    odd = [(o.y, o.x) for o in ops if o.parity is Parity.ODD]
    assert even == list(tuples) and odd == list(tuples)
    runs = parity_runs([int(o.parity) for o in ops])
    assert all(r <= depth for r in runs)
    assert len(runs) - 1 <= switches


def _block(seed, rows, density):
    rng = np.random.default_rng(seed)
    return (rng.random((rows, 16)) < density).astype(np.uint8)


def test_zero_tile_timing():
    for rows in (1, 10, 128):
        r = datapath_cycles(ifspad_from_block(np.zeros((rows, 16), dtype=np.uint8)))
        assert (r.cycles, r.macro_ops, r.switches) == (rows + 1, 0, 0)


def test_single_spike_timing():
    block = np.zeros((1, 16), dtype=np.uint8)
    block[0, 3] = 1
    r = datapath_cycles(ifspad_from_block(block))
    assert (r.cycles, r.macro_ops, r.switches) == (7, 2, 1)


def test_dense_tile_timing():
    r = datapath_cycles(ifspad_from_block(np.ones((128, 16), dtype=np.uint8)))
    assert (r.macro_ops, r.switches, r.cycles) == (4096, 255, 4355)
    assert r.serial_cycles(1) == 6657


@given(st.integers(0, 2**32 - 1), st.integers(1, 128), st.floats(0, 1), st.integers(1, 20),
       st.integers(0, 3))
def test_datapath_invariants(seed, rows, density, depth, psc):
    pad = ifspad_from_block(_block(seed, rows, density))
    r = datapath_cycles(pad, ArchParams(fifo_depth=depth, parity_switch_cycles=psc))
    spikes = scan(pad)
    assert r.spikes == len(spikes) and r.macro_ops == 2 * len(spikes)
    ops = list(zip(r.op_y.tolist(), r.op_x.tolist(), r.op_parity.tolist()))
    assert [(y, x) for y, x, p in ops if p == 0] == spikes
    assert [(y, x) for y, x, p in ops if p == 1] == spikes
    assert all(n <= depth for n in parity_runs(r.op_parity.tolist()))
    transitions = int(np.count_nonzero(np.diff(r.op_parity)))
    assert r.switches == transitions
    gaps = np.diff(r.op_cycle)
    need = 1 + psc * (np.diff(r.op_parity) != 0)
    assert np.all(gaps >= need)
    if r.macro_ops:
        assert r.cycles >= r.macro_ops + 2 + psc * r.switches
        assert r.cycles >= int(r.op_cycle[-1]) + 3
    assert r.cycles >= rows + 1
    assert r.cycles <= r.serial_cycles(psc) or r.macro_ops == 0
    assert r.fifo_ops == 4 * len(spikes)
    # an op for tuple (y, x) cannot issue before its row was written
    assert np.all(r.op_cycle >= r.op_y + 1)


@given(st.integers(0, 2**32 - 1), st.integers(1, 64), st.floats(0, 1), st.integers(1, 24))
def test_switches_fall_with_fifo_depth(seed, rows, density, depth):
    pad = ifspad_from_block(_block(seed, rows, density))
    shallow = datapath_cycles(pad, ArchParams(fifo_depth=depth))
    deep = datapath_cycles(pad, ArchParams(fifo_depth=depth + 1))
    assert deep.switches <= shallow.switches


def test_sparser_tiles_run_faster():
    cycles = [datapath_cycles(ifspad_from_block(_block(0, 128, d))).cycles for d in (0.25, 0.2, 0.05, 0.0)]
    assert cycles == sorted(cycles, reverse=True)


def test_trace_rows():
    block = np.zeros((2, 16), dtype=np.uint8)
    block[1, 4] = 1
    r = datapath_cycles(ifspad_from_block(block))
    rows = r.trace_rows("CU3")
    actions = Counter(row[2] for row in rows)
    assert actions == {"il_write": 2, "detect": 1, "op": 2, "switch": 1}
    assert all(row[1] == "CU3" for row in rows)
    assert [row[0] for row in rows] == sorted(row[0] for row in rows)

"""IFmem -> IFspad loading, spike detection and the even/odd address queue.

Receptive-field rows are ordered channel-major, ``r = c*R*S + kr*S + ks``,
so a contiguous row slice per compute macro is a split along C first.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np

from .config import ArchParams, LayerKind, LayerSpec, Parity
from .errors import TileOverflow
from .macro import AddressTuple

IFSPAD_ROWS = 128
IFSPAD_COLS = 16


@dataclass(frozen=True)
class TileWindow:
    layer: LayerSpec
    positions: tuple   # output position indices (row-major over H_out x W_out), <= 16
    row_start: int     # this macro's slice of the receptive-field rows
    row_stop: int

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(self.positions))
        if len(self.positions) > IFSPAD_COLS:
            raise TileOverflow(f"{len(self.positions)} positions > {IFSPAD_COLS} IFspad columns")
        if self.n_rows > IFSPAD_ROWS:
            raise TileOverflow(f"row slice of {self.n_rows} > {IFSPAD_ROWS} IFspad rows")
        if not 0 <= self.row_start <= self.row_stop <= self.layer.fan_in:
            raise TileOverflow(f"row slice [{self.row_start}, {self.row_stop}) outside fan-in {self.layer.fan_in}")

    @property
    def n_rows(self) -> int:
        return self.row_stop - self.row_start


@dataclass
class IFspad:
    bits: np.ndarray       # (128, 16) uint8
    n_rows: int            # rows written by the loader
    n_cols: int
    ready_cycle: np.ndarray = field(default=None)  # row y readable from this cycle

    def __post_init__(self):
        if self.ready_cycle is None:
            self.ready_cycle = np.arange(IFSPAD_ROWS) + 1

    def is_ready(self, row: int, cycle: int) -> bool:
        return row < self.n_rows and cycle >= self.ready_cycle[row]

    def row_masks(self) -> np.ndarray:
        weights = 1 << np.arange(IFSPAD_COLS, dtype=np.int64)
        return (self.bits[: self.n_rows].astype(np.int64) * weights).sum(axis=1)

    @property
    def spike_count(self) -> int:
        return int(self.bits.sum())


def im2col_index(layer: LayerSpec) -> np.ndarray:
    """Flat indices into the zero-padded input (plus one trailing zero slot) for every
    ``(receptive-field row, output position)`` pair; padding maps to the zero slot."""
    if layer.kind is LayerKind.FC:
        return np.arange(layer.in_channels)[:, None]
    C, H, W = layer.in_shape
    R, S = layer.kernel_h, layer.kernel_w
    r = np.arange(layer.fan_in)
    c, kr, ks = r // (R * S), (r // S) % R, r % S
    pos = np.arange(layer.n_positions)
    oy, ox = pos // layer.out_w, pos % layer.out_w
    iy = oy[None, :] * layer.stride + kr[:, None] - layer.padding
    ix = ox[None, :] * layer.stride + ks[:, None] - layer.padding
    inside = (iy >= 0) & (iy < H) & (ix >= 0) & (ix < W)
    flat = (c[:, None] * H + iy) * W + ix
    return np.where(inside, flat, C * H * W)


def im2col_matrix(spikes_t: np.ndarray, layer: LayerSpec, index=None) -> np.ndarray:
    """``(fan_in, positions)`` bit matrix the loader streams into IFspads."""
    index = im2col_index(layer) if index is None else index
    flat = np.append(np.asarray(spikes_t, dtype=np.uint8).reshape(-1), 0)
    return flat[index]


def ifspad_from_block(block: np.ndarray) -> IFspad:
    rows, cols = block.shape
    if rows > IFSPAD_ROWS or cols > IFSPAD_COLS:
        raise TileOverflow(f"block {block.shape} exceeds {IFSPAD_ROWS}x{IFSPAD_COLS}")
    bits = np.zeros((IFSPAD_ROWS, IFSPAD_COLS), dtype=np.uint8)
    bits[:rows, :cols] = block
    return IFspad(bits, rows, cols)


def im2col_load(spikes_t: np.ndarray, tile: TileWindow) -> IFspad:
    """Column X holds the receptive field of ``tile.positions[X]``, one row written per cycle."""
    layer = tile.layer
    index = im2col_index(layer)[tile.row_start:tile.row_stop][:, list(tile.positions)]
    return ifspad_from_block(im2col_matrix(spikes_t, layer, index))


def detect_spikes(row) -> list:
    """Trailing-zero detection: set-bit columns of a 16-bit row, LSB first."""
    if not isinstance(row, (int, np.integer)):
        row = int(sum(int(b) << i for i, b in enumerate(row)))
    out = []
    row = int(row) & 0xFFFF
    while row:
        low = row & -row
        out.append(low.bit_length() - 1)
        row ^= low
    return out


def scan(ifspad: IFspad) -> list:
    """Tuples ``(Y, X)`` in detector order: rows top to bottom, columns LSB first."""
    return [(y, x) for y, mask in enumerate(ifspad.row_masks()) for x in detect_spikes(int(mask))]


def pingpong_run(tuples: Iterable, fifo_depth: int = 16):
    """Even/odd ping-pong controller with every tuple already waiting at the detector.

    Each tuple runs once from the even FIFO, is re-queued in the odd FIFO and
    runs once more there. The controller leaves even only when it is empty or
    the odd FIFO is full, and leaves odd only when it is empty. Returns
    ``(ops, switch_count)``.
    """
    pending = deque(tuples)
    even, odd = deque(), deque()
    ops, switches = [], 0
    active = Parity.EVEN

    def refill():
        while pending and len(even) < fifo_depth:
            even.append(pending.popleft())

    refill()
    while even or odd:
        if active is Parity.EVEN:
            if even and len(odd) < fifo_depth:
                y, x = even.popleft()
                ops.append(AddressTuple(y, x, Parity.EVEN))
                odd.append((y, x))
                refill()
                continue
        elif odd:
            y, x = odd.popleft()
            ops.append(AddressTuple(y, x, Parity.ODD))
            continue
        active = active.other()
        switches += 1
    return ops, switches


def parity_runs(parities: Sequence[int]) -> list:
    runs = []
    for par in parities:
        if runs and runs[-1][0] == par:
            runs[-1][1] += 1
        else:
            runs.append([par, 1])
    return [n for _, n in runs]


@numba.njit(cache=True)
def _datapath_kernel(masks, depth, switch_cycles):
    n_rows = masks.shape[0]
    n_spikes = 0
    for r in range(n_rows):
        m = masks[r]
        while m:
            m &= m - 1
            n_spikes += 1
    n_ops = 2 * n_spikes
    op_y = np.empty(n_ops, np.int64)
    op_x = np.empty(n_ops, np.int64)
    op_par = np.empty(n_ops, np.int64)
    op_cycle = np.empty(n_ops, np.int64)
    push_cycle = np.empty(n_spikes, np.int64)
    switch_cycle = np.empty(n_ops + 1, np.int64)
    if n_rows == 0:
        return 0, 0, 0, 0, op_y, op_x, op_par, op_cycle, push_cycle, switch_cycle[:0]

    ev_y = np.empty(depth, np.int64)
    ev_x = np.empty(depth, np.int64)
    od_y = np.empty(depth, np.int64)
    od_x = np.empty(depth, np.int64)
    ev_head = ev_n = od_head = od_n = 0

    det_row = 0
    det_mask = masks[0]
    det_done = False
    det_done_cycle = 0
    det_stalls = 0
    active = 0
    switch_left = 0
    n_issued = n_pushed = n_switch = 0
    last_issue = -1
    cycle = 0
    while not (det_done and ev_n == 0 and od_n == 0 and switch_left == 0):
        ev_snap = ev_n
        od_snap = od_n
        push_odd = False
        py = px = 0
        # controller: acts on the FIFO occupancy at the start of the cycle
        if switch_left > 0:
            switch_left -= 1
            if switch_left == 0:
                active = 1 - active
        else:
            for _attempt in range(2):
                if active == 0:
                    if ev_snap > 0 and od_snap < depth:
                        py = ev_y[ev_head]
                        px = ev_x[ev_head]
                        ev_head = (ev_head + 1) % depth
                        ev_n -= 1
                        push_odd = True
                        op_y[n_issued] = py
                        op_x[n_issued] = px
                        op_par[n_issued] = 0
                        op_cycle[n_issued] = cycle
                        n_issued += 1
                        last_issue = cycle
                        break
                    want_switch = od_snap > 0
                else:
                    if od_snap > 0:
                        op_y[n_issued] = od_y[od_head]
                        op_x[n_issued] = od_x[od_head]
                        op_par[n_issued] = 1
                        op_cycle[n_issued] = cycle
                        od_head = (od_head + 1) % depth
                        od_n -= 1
                        n_issued += 1
                        last_issue = cycle
                        break
                    want_switch = ev_snap > 0
                if not want_switch:
                    break
                switch_cycle[n_switch] = cycle
                n_switch += 1
                if switch_cycles == 0:
                    active = 1 - active
                    continue
                switch_left = switch_cycles - 1
                if switch_left == 0:
                    active = 1 - active
                break
        if push_odd:
            tail = (od_head + od_n) % depth
            od_y[tail] = py
            od_x[tail] = px
            od_n += 1
        # detector: one located spike or one row advance per cycle
        if not det_done and cycle >= det_row + 1:
            if det_mask != 0:
                if ev_snap < depth:
                    low = det_mask & -det_mask
                    x = 0
                    while (low >> x) != 1:
                        x += 1
                    tail = (ev_head + ev_n) % depth
                    ev_y[tail] = det_row
                    ev_x[tail] = x
                    ev_n += 1
                    det_mask ^= low
                    push_cycle[n_pushed] = cycle
                    n_pushed += 1
                else:
                    det_stalls += 1
            else:
                det_row += 1
                if det_row == n_rows:
                    det_done = True
                    det_done_cycle = cycle + 1
                else:
                    det_mask = masks[det_row]
        cycle += 1
    total = det_done_cycle
    if last_issue + 3 > total:
        total = last_issue + 3
    return total, n_switch, det_stalls, n_rows, op_y, op_x, op_par, op_cycle, push_cycle, switch_cycle[:n_switch]


@dataclass
class DatapathResult:
    cycles: int
    switches: int
    detector_stalls: int
    il_writes: int
    row_reads: int
    spikes: int
    op_y: np.ndarray
    op_x: np.ndarray
    op_parity: np.ndarray
    op_cycle: np.ndarray
    push_cycle: np.ndarray
    switch_cycle: np.ndarray

    @property
    def macro_ops(self) -> int:
        return int(self.op_y.shape[0])

    @property
    def fifo_ops(self) -> int:
        # push even, pop even, push odd, pop odd
        return 4 * self.spikes

    def ops(self) -> list:
        return [AddressTuple(int(y), int(x), Parity(int(p)))
                for y, x, p in zip(self.op_y, self.op_x, self.op_parity)]

    def serial_cycles(self, switch_cycles: int) -> int:
        """Upper bound with no overlap between loader, detector and macro."""
        if self.il_writes == 0:
            return 0
        macro = self.macro_ops + 2 + switch_cycles * self.switches if self.macro_ops else 0
        return self.il_writes + (self.row_reads + self.spikes) + macro

    def trace_rows(self, unit: str = "CU0"):
        """``(cycle, unit, action, Y, X, parity)`` rows for CSV export."""
        rows = []
        spikes = [(int(y), int(x)) for y, x, p in zip(self.op_y, self.op_x, self.op_parity) if p == 0]
        for r in range(self.il_writes):
            rows.append((r, unit, "il_write", r, "", ""))
        for c, (y, x) in zip(self.push_cycle, spikes):
            rows.append((int(c), unit, "detect", y, x, ""))
        for c, y, x, p in zip(self.op_cycle, self.op_y, self.op_x, self.op_parity):
            rows.append((int(c), unit, "op", int(y), int(x), "odd" if p else "even"))
        for c in self.switch_cycle:
            rows.append((int(c), unit, "switch", "", "", ""))
        rows.sort(key=lambda row: (row[0], row[2]))
        return rows


def datapath_cycles(ifspad: IFspad, arch: ArchParams = ArchParams()) -> DatapathResult:
    """Cycle-level run of loader, detector, ping-pong queue and macro pipeline for one IFspad.

    The loader writes row ``y`` in cycle ``y``; the detector may read it from
    cycle ``y + 1``. The detector spends one cycle per located spike and one
    per row advance and stalls while the even FIFO is full. The macro issues at
    most one tuple per cycle; a parity switch occupies
    ``arch.parity_switch_cycles`` cycles; the last op drains two more stages.
    """
    masks = ifspad.row_masks().astype(np.int64)
    total, n_switch, stalls, rows, oy, ox, op_par, oc, pc, sc = _datapath_kernel(
        masks, arch.fifo_depth, arch.parity_switch_cycles
    )
    return DatapathResult(int(total), int(n_switch), int(stalls), int(rows), int(rows),
                          int(pc.shape[0]), oy, ox, op_par, oc, pc, sc)

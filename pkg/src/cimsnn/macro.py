"""Bit-level model of the 160x48 compute macro and the 72x48 neuron macro.

Column layout conventions (shared with the word-level fast path in
``pipeline``):

* weight field ``j`` of a weight row occupies columns ``[j*W, j*W + W - 1]``,
  LSB at the lowest column;
* output channel ``j`` accumulates into Vmem row ``2*X + j % 2``, field
  ``j // 2``, which occupies columns ``[2*(j//2)*W, 2*(j//2)*W + B - 1]``
  (``B = 2W - 1``; the top column of each ``2W``-wide span is spare);
* even and odd Vmem rows use identical column spans.

Neuron macro rows: 0-31 partial Vmems, 32-63 full Vmems, 64 thresholds,
65 leaks, 66-71 reserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import (
    LOGICAL_VMEM_ROWS,
    MACRO_COLS,
    VMEM_ROWS,
    WEIGHT_ROWS,
    NeuronSpec,
    Parity,
    PrecisionMode,
    Reset,
    saturate,
    wrap,
)
from .errors import ParityMismatch, ShapeMismatch

PARTIAL_BASE = 0
FULL_BASE = 32
THRESHOLD_ROW = 64
LEAK_ROW = 65
NEURON_MACRO_ROWS = 72
COMPUTE_MACRO_ROWS = WEIGHT_ROWS + VMEM_ROWS


@dataclass(frozen=True)
class AddressTuple:
    y: int
    x: int
    parity: Parity

    def __post_init__(self):
        if not 0 <= self.y < WEIGHT_ROWS:
            raise ValueError(f"weight row {self.y} outside 0..{WEIGHT_ROWS - 1}")
        if not 0 <= self.x < LOGICAL_VMEM_ROWS:
            raise ValueError(f"Vmem column {self.x} outside 0..{LOGICAL_VMEM_ROWS - 1}")
        object.__setattr__(self, "parity", Parity(self.parity))

    @property
    def vmem_row(self) -> int:
        return 2 * self.x + int(self.parity)


@dataclass(frozen=True)
class SwitchMap:
    precision: PrecisionMode
    parity: Parity
    groups: tuple  # ((w_lo, w_hi), (v_lo, v_hi)) per connected field pair

    @property
    def weight_spans(self):
        return [g[0] for g in self.groups]

    @property
    def vmem_spans(self):
        return [g[1] for g in self.groups]


def switch_map(p: PrecisionMode, parity) -> SwitchMap:
    parity = Parity(parity)
    W, B = p.weight_bits, p.vmem_bits
    groups = []
    for j in range(int(parity), p.weights_per_row, 2):
        v_lo = 2 * (j // 2) * W
        groups.append(((j * W, j * W + W - 1), (v_lo, v_lo + B - 1)))
    return SwitchMap(p, parity, tuple(groups))


def bitline_read(weight_bit, vmem_bit):
    """Two cells on one read bitline: RBL senses NOR, RBLB senses AND."""
    w = np.asarray(weight_bit, dtype=np.uint8)
    v = np.asarray(vmem_bit, dtype=np.uint8)
    nor = 1 - (w | v)
    conj = w & v
    if nor.ndim == 0:
        return int(nor), int(conj)
    return nor, conj


def column_add(nor, conj, carry_in):
    """Full adder fed from the latched NOR/AND pair. Returns ``(sum, carry_out)``."""
    nor = np.asarray(nor, dtype=np.uint8)
    conj = np.asarray(conj, dtype=np.uint8)
    cin = np.asarray(carry_in, dtype=np.uint8)
    xor = (1 - nor) & (1 - conj)
    s = xor ^ cin
    cout = conj | (xor & cin)
    if s.ndim == 0:
        return int(s), int(cout)
    return s, cout


def ripple(a_bits: np.ndarray, b_bits: np.ndarray) -> np.ndarray:
    """Add bit vectors along the last axis (LSB first); carry dies at the MSB."""
    out = np.empty_like(a_bits, dtype=np.uint8)
    carry = np.zeros(a_bits.shape[:-1], dtype=np.uint8)
    for i in range(a_bits.shape[-1]):
        nor, conj = bitline_read(a_bits[..., i], b_bits[..., i])
        out[..., i], carry = column_add(nor, conj, carry)
    return out


def to_bits(values, width: int) -> np.ndarray:
    """Two's complement bits, LSB first, along a new last axis."""
    v = np.asarray(values, dtype=np.int64) & ((1 << width) - 1)
    return ((v[..., None] >> np.arange(width)) & 1).astype(np.uint8)


def from_bits(bits: np.ndarray, signed: bool = True) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    width = bits.shape[-1]
    v = (bits << np.arange(width)).sum(axis=-1)
    if signed:
        v = np.where(v >= 1 << (width - 1), v - (1 << width), v)
    return v


def sign_extend_bits(bits: np.ndarray, width: int) -> np.ndarray:
    pad = np.repeat(bits[..., -1:], width - bits.shape[-1], axis=-1)
    return np.concatenate([bits, pad], axis=-1)


def ripple_add_words(weights, vmems, p: PrecisionMode) -> np.ndarray:
    """Bit-serial weight-into-Vmem addition on integer arrays (sign-extended weights)."""
    wb = sign_extend_bits(to_bits(weights, p.weight_bits), p.vmem_bits)
    vb = to_bits(vmems, p.vmem_bits)
    return from_bits(ripple(wb, vb))


@dataclass
class SramState:
    bits: np.ndarray                 # (rows, 48) uint8
    roles: tuple                     # per-row tag
    parity: Optional[Parity] = None  # peripheral configuration (compute macro)

    def copy(self) -> "SramState":
        return SramState(self.bits.copy(), self.roles, self.parity)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    def read_field(self, row: int, lo: int, width: int, signed: bool = True) -> int:
        return int(from_bits(self.bits[row, lo:lo + width], signed))

    def write_field(self, row: int, lo: int, width: int, value: int) -> None:
        self.bits[row, lo:lo + width] = to_bits(value, width)

    def dump(self) -> str:
        """Hex dump, one line per row; column 0 is bit 0 of the 12-digit word."""
        weights = 1 << np.arange(MACRO_COLS, dtype=object)
        lines = []
        for r in range(self.rows):
            word = int(sum(w for w, b in zip(weights, self.bits[r]) if b))
            lines.append(f"{r:3d} {self.roles[r]:<7} {word:012x}")
        return "\n".join(lines) + "\n"


def compute_macro_state(weight_rows=None, p: Optional[PrecisionMode] = None, vmem=None,
                        parity=None) -> SramState:
    """Build a compute macro holding ``weight_rows[r, j]`` and optional ``vmem[X, j]``."""
    bits = np.zeros((COMPUTE_MACRO_ROWS, MACRO_COLS), dtype=np.uint8)
    roles = ("weight",) * WEIGHT_ROWS + ("vmem",) * VMEM_ROWS
    state = SramState(bits, roles, None if parity is None else Parity(parity))
    if weight_rows is not None:
        load_weights(state, weight_rows, p)
    if vmem is not None:
        store_vmem(state, vmem, p, base=WEIGHT_ROWS)
    return state


def load_weights(state: SramState, weight_rows, p: PrecisionMode) -> None:
    w = np.asarray(weight_rows, dtype=np.int64)
    if w.ndim != 2 or w.shape[0] > WEIGHT_ROWS or w.shape[1] > p.weights_per_row:
        raise ShapeMismatch(f"weight block {w.shape} does not fit {WEIGHT_ROWS}x{p.weights_per_row}")
    W = p.weight_bits
    for j in range(w.shape[1]):
        state.bits[: w.shape[0], j * W:(j + 1) * W] = to_bits(w[:, j], W)


def store_vmem(state: SramState, vmem, p: PrecisionMode, base: int) -> None:
    """Write a ``(16, channels)`` word array into 32 staggered rows starting at ``base``."""
    v = np.asarray(vmem, dtype=np.int64)
    W, B = p.weight_bits, p.vmem_bits
    for j in range(v.shape[1]):
        lo = 2 * (j // 2) * W
        rows = base + 2 * np.arange(v.shape[0]) + j % 2
        state.bits[rows, lo:lo + B] = to_bits(v[:, j], B)


def load_vmem(state: SramState, p: PrecisionMode, base: int, channels: Optional[int] = None) -> np.ndarray:
    W, B = p.weight_bits, p.vmem_bits
    channels = p.weights_per_row if channels is None else channels
    out = np.zeros((LOGICAL_VMEM_ROWS, channels), dtype=np.int64)
    for j in range(channels):
        lo = 2 * (j // 2) * W
        rows = base + 2 * np.arange(LOGICAL_VMEM_ROWS) + j % 2
        out[:, j] = from_bits(state.bits[rows, lo:lo + B])
    return out


def configure(state: SramState, parity) -> SramState:
    out = state.copy()
    out.parity = Parity(parity)
    return out


def accumulate(state: SramState, t: AddressTuple, p: PrecisionMode) -> SramState:
    """Add every weight field of ``t.parity`` in row ``t.y`` into Vmem row ``2*t.x + parity``."""
    if state.parity is not None and state.parity != t.parity:
        raise ParityMismatch(
            f"peripherals configured for {state.parity.name.lower()}, tuple is {t.parity.name.lower()}"
        )
    out = state.copy()
    out.parity = t.parity
    smap = switch_map(p, t.parity)
    vrow = WEIGHT_ROWS + t.vmem_row
    w_lo = np.array([g[0][0] for g in smap.groups])
    v_lo = np.array([g[1][0] for g in smap.groups])
    w_idx = w_lo[:, None] + np.arange(p.weight_bits)
    v_idx = v_lo[:, None] + np.arange(p.vmem_bits)
    wbits = sign_extend_bits(state.bits[t.y, w_idx], p.vmem_bits)
    out.bits[vrow, v_idx] = ripple(wbits, state.bits[vrow, v_idx])
    return out


@dataclass
class PipelineTrace:
    stages: list = field(default_factory=list)    # (cycle, stage "R"/"C"/"S", op index)
    switches: list = field(default_factory=list)  # (cycle, new parity)
    issue: list = field(default_factory=list)     # cycle each op entered R

    def active(self, cycle: int) -> list:
        return [(s, i) for c, s, i in self.stages if c == cycle]


def op_schedule(parities: Sequence[int], parity_switch_cycles: int = 1):
    """Issue cycles, transition count and total cycles for a parity sequence."""
    issue, transitions, c = [], 0, 0
    prev = None
    for par in parities:
        if prev is not None:
            c += 1
            if par != prev:
                c += parity_switch_cycles
                transitions += 1
        issue.append(c)
        prev = par
    total = issue[-1] + 3 if issue else 0
    return issue, transitions, total


def run_op_sequence(state: SramState, ops: Sequence[AddressTuple], p: PrecisionMode,
                    parity_switch_cycles: int = 1):
    """Execute tuples through the three-stage read/compute/store pipeline.

    Returns ``(state', trace, cycles)`` with ``cycles = n + 2 + switch_cycles * transitions``.
    The peripherals are configured for the first tuple's parity before the
    first read; that setup is not counted as a switch.
    """
    ops = list(ops)
    trace = PipelineTrace()
    if not ops:
        return state.copy(), trace, 0
    issue, _, total = op_schedule([int(o.parity) for o in ops], parity_switch_cycles)
    out = configure(state, ops[0].parity)
    for i, (op, c) in enumerate(zip(ops, issue)):
        if op.parity != out.parity:
            trace.switches.append((c - parity_switch_cycles, op.parity))
            out = configure(out, op.parity)
        out = accumulate(out, op, p)
        trace.issue.append(c)
        trace.stages.extend([(c, "R", i), (c + 1, "C", i), (c + 2, "S", i)])
    trace.stages.sort()
    return out, trace, total


def neuron_macro_state(partial=None, full=None, n: Optional[NeuronSpec] = None,
                       p: Optional[PrecisionMode] = None) -> SramState:
    bits = np.zeros((NEURON_MACRO_ROWS, MACRO_COLS), dtype=np.uint8)
    roles = ("partial",) * 32 + ("full",) * 32 + ("param",) * 8
    state = SramState(bits, roles)
    if partial is not None:
        store_vmem(state, partial, p, PARTIAL_BASE)
    if full is not None:
        store_vmem(state, full, p, FULL_BASE)
    if n is not None:
        load_params(state, n, p)
    return state


def load_params(state: SramState, n: NeuronSpec, p: PrecisionMode) -> None:
    W, B = p.weight_bits, p.vmem_bits
    for k in range(p.fields_per_vmem_row):
        state.write_field(THRESHOLD_ROW, 2 * k * W, B, n.threshold)
        state.write_field(LEAK_ROW, 2 * k * W, B, n.effective_leak)


NEURON_PASS_CYCLES = 2 * VMEM_ROWS + 2


def neuron_pass(state: SramState, n: NeuronSpec, p: PrecisionMode):
    """Partial-to-full accumulation, leak, threshold and reset over all 32 rows.

    Returns ``(spikes, state', cycles)`` where ``spikes[X, j]`` flags output
    channel ``j`` at position ``X``; ``cycles`` is always 66 (two passes over
    32 rows plus pipeline fill/drain).
    """
    out = state.copy()
    W, B = p.weight_bits, p.vmem_bits
    fields = p.fields_per_vmem_row
    spikes = np.zeros((LOGICAL_VMEM_ROWS, p.weights_per_row), dtype=np.uint8)
    lo = 2 * np.arange(fields) * W
    idx = lo[:, None] + np.arange(B)
    theta = from_bits(out.bits[THRESHOLD_ROW, idx])
    leak = from_bits(out.bits[LEAK_ROW, idx])
    neg_leak_bits = to_bits(-leak, B)
    neg_theta_bits = to_bits(-theta, B)
    for r in range(VMEM_ROWS):
        prow, frow = PARTIAL_BASE + r, FULL_BASE + r
        if n.saturate:
            v = saturate(from_bits(out.bits[frow, idx]) + from_bits(out.bits[prow, idx]) - leak, B)
            vbits = to_bits(v, B)
        else:
            vbits = ripple(out.bits[frow, idx], out.bits[prow, idx])
            if n.effective_leak:
                vbits = ripple(vbits, neg_leak_bits)
            v = from_bits(vbits)
        fired = v >= theta
        if n.reset is Reset.HARD:
            reset_bits = np.zeros_like(vbits)
        elif n.saturate:
            reset_bits = to_bits(saturate(v - theta, B), B)
        else:
            reset_bits = ripple(vbits, neg_theta_bits)
        # conditional write: store stage picks the reset value only where fired
        out.bits[frow, idx] = np.where(fired[:, None], reset_bits, vbits)
        x, par = divmod(r, 2)
        spikes[x, par::2] = fired[: len(range(par, p.weights_per_row, 2))]
    return spikes, out, NEURON_PASS_CYCLES


def word_neuron_pass(partial, full, n: NeuronSpec, p: PrecisionMode):
    """Word-level equivalent of ``neuron_pass`` on ``(16, channels)`` arrays."""
    limit = saturate if n.saturate else wrap
    v = limit(np.asarray(full, dtype=np.int64) + partial - n.effective_leak, p.vmem_bits)
    fired = v >= n.threshold
    if n.reset is Reset.HARD:
        v = np.where(fired, 0, v)
    else:
        v = np.where(fired, limit(v - n.threshold, p.vmem_bits), v)
    return fired.astype(np.uint8), v

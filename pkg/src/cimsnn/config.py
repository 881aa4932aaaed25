"""Architecture, precision, neuron, energy and network description types.

Everything here is immutable once constructed; ``__post_init__`` performs the
validation so an instance that exists is a valid one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import UnsupportedPrecision, ValidationError

SUPPORTED_WEIGHT_BITS = (4, 6, 8)
MACRO_COLS = 48
WEIGHT_ROWS = 128
VMEM_ROWS = 32
LOGICAL_VMEM_ROWS = VMEM_ROWS // 2


class Mode(str, enum.Enum):
    MODE1 = "Mode1"
    MODE2 = "Mode2"


class Parity(enum.IntEnum):
    EVEN = 0
    ODD = 1

    def other(self) -> "Parity":
        return Parity(1 - self)


class NeuronModel(str, enum.Enum):
    IF = "IF"
    LIF = "LIF"


class Reset(str, enum.Enum):
    HARD = "hard"
    SOFT = "soft"


class LayerKind(str, enum.Enum):
    CONV = "Conv"
    FC = "FC"
    MAXPOOL = "MaxPool"


def signed_range(bits: int) -> tuple[int, int]:
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def wrap(values, bits: int):
    """Reduce integers to ``bits``-wide two's complement (mod 2**bits, signed view)."""
    half = 1 << (bits - 1)
    if isinstance(values, (int, np.integer)):
        return ((int(values) + half) % (1 << bits)) - half
    values = np.asarray(values, dtype=np.int64)
    return ((values + half) & ((1 << bits) - 1)) - half


def saturate(values, bits: int):
    lo, hi = signed_range(bits)
    if isinstance(values, (int, np.integer)):
        return min(max(int(values), lo), hi)
    return np.clip(np.asarray(values, dtype=np.int64), lo, hi)


@dataclass(frozen=True)
class PrecisionMode:
    weight_bits: int
    vmem_bits: int

    def __post_init__(self):
        if self.weight_bits not in SUPPORTED_WEIGHT_BITS:
            raise UnsupportedPrecision(
                f"weight_bits={self.weight_bits} not in {SUPPORTED_WEIGHT_BITS}"
            )
        if self.vmem_bits != 2 * self.weight_bits - 1:
            raise UnsupportedPrecision(
                f"vmem_bits must be 2*weight_bits-1={2 * self.weight_bits - 1}, got {self.vmem_bits}"
            )

    @property
    def weights_per_row(self) -> int:
        return MACRO_COLS // self.weight_bits

    @property
    def fields_per_vmem_row(self) -> int:
        # one Vmem field per pair of weight fields (even + odd share the span)
        return MACRO_COLS // (2 * self.weight_bits)

    @property
    def weight_range(self) -> tuple[int, int]:
        return signed_range(self.weight_bits)

    @property
    def vmem_range(self) -> tuple[int, int]:
        return signed_range(self.vmem_bits)

    def __str__(self) -> str:
        return f"{self.weight_bits}/{self.vmem_bits}-bit"


def validate_precision(weight_bits: int) -> PrecisionMode:
    if weight_bits not in SUPPORTED_WEIGHT_BITS:
        raise UnsupportedPrecision(
            f"unsupported weight precision {weight_bits}; choose one of {SUPPORTED_WEIGHT_BITS}"
        )
    return PrecisionMode(weight_bits, 2 * weight_bits - 1)


def neurons_per_macro(p: PrecisionMode) -> int:
    return p.weights_per_row * LOGICAL_VMEM_ROWS


def parallel_channels(mode: Mode, p: PrecisionMode) -> int:
    mode = Mode(mode)
    return (3 if mode is Mode.MODE1 else 1) * p.weights_per_row


@dataclass(frozen=True)
class NeuronSpec:
    model: NeuronModel = NeuronModel.IF
    reset: Reset = Reset.HARD
    threshold: int = 1
    leak: int = 0
    # clamp the full-Vmem update instead of wrapping; partial sums always wrap
    saturate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model", NeuronModel(self.model))
        object.__setattr__(self, "reset", Reset(self.reset))
        if self.leak < 0:
            raise ValidationError(f"leak must be >= 0, got {self.leak}")
        if self.model is NeuronModel.IF and self.leak != 0:
            raise ValidationError("IF neurons take leak = 0")

    def check_range(self, p: PrecisionMode) -> None:
        lo, hi = p.vmem_range
        for name in ("threshold", "leak"):
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValidationError(f"{name}={v} not representable in {p.vmem_bits}-bit two's complement")

    @property
    def effective_leak(self) -> int:
        return self.leak if self.model is NeuronModel.LIF else 0


@dataclass(frozen=True)
class ArchParams:
    """Core geometry and latency knobs. Cycle counts never depend on ``clock_mhz``."""

    n_compute_units: int = 9
    n_neuron_units: int = 3
    macro_rows: int = WEIGHT_ROWS + VMEM_ROWS
    macro_cols: int = MACRO_COLS
    neuron_macro_rows: int = 72
    ifspad_rows: int = WEIGHT_ROWS
    ifspad_cols: int = 16
    fifo_depth: int = 16
    clock_mhz: float = 50.0
    parity_switch_cycles: int = 1
    # per-(CU, timestep) control overhead, in units of "density-equivalent"
    # work: ceil(density * 2 * rows * positions) cycles.
    step_overhead_density: float = 0.10
    xfer_words: int = VMEM_ROWS
    xfer_cycles_per_word: int = 1
    nu_writeback_cycles: int = 2

    def __post_init__(self):
        if self.ifspad_cols * 2 != self.macro_rows - self.ifspad_rows:
            raise ValidationError("ifspad_cols * 2 must equal the Vmem rows per compute macro")
        if self.ifspad_rows != self.macro_rows - VMEM_ROWS:
            raise ValidationError("ifspad_rows must equal the weight rows per macro")
        if self.macro_cols != MACRO_COLS:
            raise ValidationError("only 48-column macros are modelled")
        if self.fifo_depth < 1:
            raise ValidationError("fifo_depth must be >= 1")
        if not 0 < self.clock_mhz:
            raise ValidationError("clock_mhz must be positive")
        if self.parity_switch_cycles < 0:
            raise ValidationError("parity_switch_cycles must be >= 0")
        if self.step_overhead_density < 0:
            raise ValidationError("step_overhead_density must be >= 0")
        if self.n_compute_units != 9 or self.n_neuron_units != 3:
            raise ValidationError("the core topology is fixed at 9 CUs and 3 NUs")

    @property
    def neuron_pass_cycles(self) -> int:
        return 2 * VMEM_ROWS + 2

    @property
    def xfer_cycles(self) -> int:
        return self.xfer_words * self.xfer_cycles_per_word

    @property
    def n_units(self) -> int:
        return self.n_compute_units + self.n_neuron_units

    def with_clock(self, clock_mhz: float) -> "ArchParams":
        return replace(self, clock_mhz=clock_mhz)


@dataclass(frozen=True)
class EnergyParams:
    """Per-event energies in pJ at ``v_ref``.

    Defaults are the output of ``metrics.calibrate`` against the 50/150 MHz
    chip-summary operating points; ``configs/energy_calibrated.cfg`` carries
    the same numbers with their provenance.
    """

    e_read_cycle: float = 10.655231747318131
    e_compute_cycle: float = 6.6595198420738315
    e_store_cycle: float = 9.323327778903364
    e_parity_switch: float = 14.798932982386292
    e_ifspad_write: float = 3.9957119052442986
    e_ifspad_read: float = 3.9957119052442986
    e_fifo_op: float = 0.5327615873659065
    e_xfer_word: float = 2.663807936829533
    e_neuron_cycle: float = 26.638079368295326
    e_leakage_per_cycle: float = 0.09132420091324533
    op_count_scale: float = 1.6220648871527776
    v_ref: float = 0.9
    leakage_ref_mhz: float = 50.0

    def __post_init__(self):
        for name in (
            "e_read_cycle", "e_compute_cycle", "e_store_cycle", "e_parity_switch",
            "e_ifspad_write", "e_ifspad_read", "e_fifo_op", "e_xfer_word",
            "e_neuron_cycle", "e_leakage_per_cycle",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.op_count_scale <= 0:
            raise ValidationError("op_count_scale must be > 0")

    @property
    def e_base(self) -> float:
        return self.e_read_cycle + self.e_compute_cycle + self.e_store_cycle

    @property
    def switch_ratio(self) -> float:
        return self.e_parity_switch / self.e_base if self.e_base else 0.0

    def scaled(self, k: float) -> "EnergyParams":
        """Multiply every dynamic energy by ``k`` (leakage and op scale untouched)."""
        return replace(
            self,
            e_read_cycle=self.e_read_cycle * k,
            e_compute_cycle=self.e_compute_cycle * k,
            e_store_cycle=self.e_store_cycle * k,
            e_parity_switch=self.e_parity_switch * k,
            e_ifspad_write=self.e_ifspad_write * k,
            e_ifspad_read=self.e_ifspad_read * k,
            e_fifo_op=self.e_fifo_op * k,
            e_xfer_word=self.e_xfer_word * k,
            e_neuron_cycle=self.e_neuron_cycle * k,
        )


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_channels: int
    out_channels: int
    kernel_h: int = 3
    kernel_w: int = 3
    stride: int = 1
    padding: int = 1
    in_h: int = 1
    in_w: int = 1
    neuron: Optional[NeuronSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        for name in ("in_channels", "out_channels", "kernel_h", "kernel_w", "stride", "in_h", "in_w"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{self.kind.value}: {name} must be >= 1")
        if self.padding < 0:
            raise ValidationError(f"{self.kind.value}: padding must be >= 0")
        if self.kind is LayerKind.MAXPOOL and self.in_channels != self.out_channels:
            raise ValidationError("MaxPool: in_channels must equal out_channels")
        if self.kind is LayerKind.FC and (self.kernel_h, self.kernel_w, self.in_h, self.in_w) != (1, 1, 1, 1):
            raise ValidationError("FC layers are described by in/out neuron counts only")
        if self.out_h < 1 or self.out_w < 1:
            raise ValidationError(
                f"{self.kind.value}: output dims {self.out_h}x{self.out_w} from input "
                f"{self.in_h}x{self.in_w}, kernel {self.kernel_h}x{self.kernel_w}, "
                f"stride {self.stride}, padding {self.padding}"
            )

    @classmethod
    def conv(cls, in_channels, out_channels, in_h, in_w, kernel=3, stride=1, padding=None, neuron=None):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        if padding is None:
            padding = (kh - 1) // 2
        return cls(LayerKind.CONV, in_channels, out_channels, kh, kw, stride, padding, in_h, in_w, neuron)

    @classmethod
    def fc(cls, in_neurons, out_neurons, neuron=None):
        return cls(LayerKind.FC, in_neurons, out_neurons, 1, 1, 1, 0, 1, 1, neuron)

    @classmethod
    def maxpool(cls, channels, in_h, in_w):
        return cls(LayerKind.MAXPOOL, channels, channels, 2, 2, 2, 0, in_h, in_w)

    @property
    def out_h(self) -> int:
        return _conv_out(self.in_h, self.kernel_h, self.stride, self.padding)

    @property
    def out_w(self) -> int:
        return _conv_out(self.in_w, self.kernel_w, self.stride, self.padding)

    @property
    def fan_in(self) -> int:
        if self.kind is LayerKind.CONV:
            return self.kernel_h * self.kernel_w * self.in_channels
        if self.kind is LayerKind.FC:
            return self.in_channels
        return self.kernel_h * self.kernel_w

    @property
    def n_positions(self) -> int:
        return self.out_h * self.out_w

    @property
    def in_shape(self) -> tuple[int, int, int]:
        return (self.in_channels, self.in_h, self.in_w)

    @property
    def out_shape(self) -> tuple[int, int, int]:
        return (self.out_channels, self.out_h, self.out_w)

    @property
    def weight_shape(self) -> Optional[tuple[int, ...]]:
        if self.kind is LayerKind.CONV:
            return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
        if self.kind is LayerKind.FC:
            return (self.out_channels, self.in_channels)
        return None

    @property
    def has_weights(self) -> bool:
        return self.kind is not LayerKind.MAXPOOL


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    timesteps: int
    precision: PrecisionMode
    neuron: NeuronSpec = field(default_factory=NeuronSpec)
    input_h: int = 1
    input_w: int = 1
    input_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValidationError("network has no layers")
        if self.timesteps < 1:
            raise ValidationError(f"timesteps must be >= 1, got {self.timesteps}")
        shape = (self.input_channels, self.input_h, self.input_w)
        for i, layer in enumerate(self.layers):
            if layer.kind is LayerKind.FC:
                flat = shape[0] * shape[1] * shape[2]
                if layer.in_channels != flat:
                    raise ValidationError(
                        f"layer {i} (FC): expects {layer.in_channels} inputs, previous output has {flat}"
                    )
            elif layer.in_shape != shape:
                raise ValidationError(
                    f"layer {i} ({layer.kind.value}): input shape {layer.in_shape} != previous output {shape}"
                )
            if layer.has_weights:
                self.neuron_for(i).check_range(self.precision)
            shape = layer.out_shape

    def neuron_for(self, index: int) -> NeuronSpec:
        layer = self.layers[index]
        return layer.neuron if layer.neuron is not None else self.neuron

    @property
    def input_shape(self) -> tuple[int, int, int, int]:
        return (self.timesteps, self.input_channels, self.input_h, self.input_w)

    @property
    def weighted_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.has_weights]

"""Energy, power, throughput and efficiency from simulation statistics, plus calibration.

Units: energies in pJ, power in mW, time in seconds. ``gops / power_mw`` is
directly TOPS/W (1e9 op/s per 1e-3 W).
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from . import golden
from .config import (
    ArchParams,
    EnergyParams,
    LayerSpec,
    Mode,
    NetworkSpec,
    NeuronSpec,
    parallel_channels,
    validate_precision,
)
from .errors import CalibrationDiverged, ParseError
from .macro import op_schedule
from .pipeline import NetworkResult, RunStats, simulate_network

COMPONENTS = ("compute_macros", "neuron_units", "ifspad", "fifos", "transfers", "leakage")

# Relative event costs before calibration, in units of one read+compute+store op.
ENERGY_SHAPE = dict(
    e_read_cycle=0.40,
    e_compute_cycle=0.25,
    e_store_cycle=0.35,
    e_parity_switch=5 / 9,
    e_ifspad_write=0.15,
    e_ifspad_read=0.15,
    e_fifo_op=0.02,
    e_xfer_word=0.10,
    e_neuron_cycle=1.0,
)

# Operating points of the chip summary: (clock MHz, supply V).
LOW_POINT = (50.0, 0.9)
HIGH_POINT = (150.0, 1.0)


def default_vdd(clock_mhz: float) -> float:
    """Linear supply between the two characterized operating points."""
    (f0, v0), (f1, v1) = LOW_POINT, HIGH_POINT
    return v0 + (clock_mhz - f0) * (v1 - v0) / (f1 - f0)


# ---------------------------------------------------------------- energy


def energy_of(stats: RunStats, e: EnergyParams = EnergyParams(), clock_mhz: float = 50.0,
              vdd: Optional[float] = None, n_units: int = 12) -> dict:
    """Per-component energy in pJ.

    Each issued op pays one read, one compute and one store cycle; the two
    fill/drain cycles of a batch are folded into those per-op charges.
    Dynamic terms scale with ``(vdd / v_ref)**2``; leakage is a static power
    referenced to ``leakage_ref_mhz`` so it costs more per cycle at lower clocks.
    """
    vdd = default_vdd(clock_mhz) if vdd is None else vdd
    dyn = (vdd / e.v_ref) ** 2
    out = {
        "compute_macros": dyn * (stats.macro_ops * e.e_base + stats.parity_switches * e.e_parity_switch),
        "neuron_units": dyn * stats.nu_cycles * e.e_neuron_cycle,
        "ifspad": dyn * (stats.ifspad_writes * e.e_ifspad_write + stats.ifspad_reads * e.e_ifspad_read),
        "fifos": dyn * stats.fifo_ops * e.e_fifo_op,
        "transfers": dyn * stats.xfer_words * e.e_xfer_word,
        "leakage": e.e_leakage_per_cycle * stats.cycles * n_units * (e.leakage_ref_mhz / clock_mhz),
    }
    return {k: float(v) for k, v in out.items()}


def leakage_power_mw(e: EnergyParams, n_units: int = 12) -> float:
    return e.e_leakage_per_cycle * n_units * e.leakage_ref_mhz * 1e-3


def switching_model(batch_size, ratio: float = 5 / 9):
    """Relative energy per op when ``batch_size`` same-parity ops share one switch."""
    n = np.asarray(batch_size, dtype=float)
    if np.any(n < 1):
        raise ValueError("batch size must be >= 1")
    out = 1.0 + ratio / n
    return float(out) if out.ndim == 0 else out


def calibrate_switching(reduction: float = 1.5, batch: int = 15) -> float:
    """Switch/base energy ratio r solving (1 + r) / (1 + r / batch) = reduction."""
    if not 1 <= reduction < batch:
        raise ValueError("reduction must lie in [1, batch)")
    return (reduction - 1) / (1 - reduction / batch)


def op_stream_energy(parities, e: EnergyParams = EnergyParams(), parity_switch_cycles: int = 1) -> float:
    """Macro energy (pJ at v_ref) of executing ops with the given parity sequence."""
    _, transitions, _ = op_schedule(list(parities), parity_switch_cycles)
    return len(parities) * e.e_base + transitions * e.e_parity_switch


# ---------------------------------------------------------------- reports

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "total_cycles", "clock_mhz", "vdd", "wall_time_s", "energy_pj", "total_energy_pj",
        "power_mw", "raw_sops", "dense_ops", "effective_ops", "gops", "tops_per_w",
        "macro_ops", "parity_switches", "precision", "timesteps", "layers",
    ],
    "additionalProperties": False,
    "properties": {
        "total_cycles": {"type": "integer", "minimum": 0},
        "clock_mhz": {"type": "number", "exclusiveMinimum": 0},
        "vdd": {"type": "number", "exclusiveMinimum": 0},
        "wall_time_s": {"type": "number", "minimum": 0},
        "energy_pj": {
            "type": "object",
            "required": list(COMPONENTS),
            "additionalProperties": False,
            "properties": {c: {"type": "number", "minimum": 0} for c in COMPONENTS},
        },
        "total_energy_pj": {"type": "number", "minimum": 0},
        "power_mw": {"type": "number", "minimum": 0},
        "raw_sops": {"type": "integer", "minimum": 0},
        "dense_ops": {"type": "integer", "minimum": 0},
        "effective_ops": {"type": "number", "minimum": 0},
        "gops": {"type": "number", "minimum": 0},
        "tops_per_w": {"type": "number", "minimum": 0},
        "macro_ops": {"type": "integer", "minimum": 0},
        "parity_switches": {"type": "integer", "minimum": 0},
        "precision": {"type": "string"},
        "timesteps": {"type": "integer", "minimum": 1},
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "kind", "mode", "cycles", "raw_sops", "input_sparsity"],
                "additionalProperties": False,
                "properties": {
                    "index": {"type": "integer", "minimum": 0},
                    "kind": {"type": "string", "enum": ["Conv", "FC", "MaxPool"]},
                    "mode": {"type": ["string", "null"], "enum": ["Mode1", "Mode2", None]},
                    "cycles": {"type": "integer", "minimum": 0},
                    "raw_sops": {"type": "integer", "minimum": 0},
                    "input_sparsity": {
                        "type": "array",
                        "items": {"type": "number", "minimum": 0, "maximum": 1},
                    },
                },
            },
        },
    },
}


@dataclass
class RunReport:
    total_cycles: int
    clock_mhz: float
    vdd: float
    wall_time_s: float
    energy_pj: dict
    total_energy_pj: float
    power_mw: float
    raw_sops: int
    dense_ops: int
    effective_ops: float
    gops: float
    tops_per_w: float
    macro_ops: int
    parity_switches: int
    precision: str
    timesteps: int
    layers: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(**data)


def make_report(result: NetworkResult, net: NetworkSpec, e: EnergyParams = EnergyParams(),
                arch: ArchParams = ArchParams(), vdd: Optional[float] = None) -> RunReport:
    stats = result.stats
    clock = arch.clock_mhz
    vdd = default_vdd(clock) if vdd is None else vdd
    energy = energy_of(stats, e, clock, vdd, arch.n_units)
    total = sum(energy.values())
    wall = stats.cycles / (clock * 1e6)
    effective = stats.dense_sops * e.op_count_scale
    gops = effective / wall / 1e9 if wall else 0.0
    power = total * 1e-12 / wall * 1e3 if wall else 0.0
    layers = []
    for i, (layer, sched, ls) in enumerate(zip(net.layers, result.schedules, result.layer_stats)):
        layers.append({
            "index": i,
            "kind": layer.kind.value,
            "mode": sched.mode.value if sched is not None else None,
            "cycles": int(ls.cycles),
            "raw_sops": int(ls.raw_sops),
            "input_sparsity": [float(v) for v in result.input_sparsity[i]],
        })
    return RunReport(
        total_cycles=int(stats.cycles),
        clock_mhz=float(clock),
        vdd=float(vdd),
        wall_time_s=wall,
        energy_pj=energy,
        total_energy_pj=total,
        power_mw=power,
        raw_sops=int(stats.raw_sops),
        dense_ops=int(stats.dense_sops),
        effective_ops=float(effective),
        gops=gops,
        tops_per_w=gops / power if power else 0.0,
        macro_ops=int(stats.macro_ops),
        parity_switches=int(stats.parity_switches),
        precision=str(net.precision),
        timesteps=int(net.timesteps),
        layers=layers,
    )


# ---------------------------------------------------------------- reference workload

REFERENCE_CHANNELS = 384
REFERENCE_SIZE = 4
REFERENCE_TIMESTEPS = 20


def reference_network(weight_bits: int = 4, timesteps: int = REFERENCE_TIMESTEPS) -> NetworkSpec:
    """One 1x1 Conv layer filling a Mode 1 tile: 3 x 128 rows, 16 positions, every chain busy."""
    p = validate_precision(weight_bits)
    k = parallel_channels(Mode.MODE1, p)
    layer = LayerSpec.conv(REFERENCE_CHANNELS, k, REFERENCE_SIZE, REFERENCE_SIZE, kernel=1, padding=0)
    return NetworkSpec(layers=(layer,), timesteps=timesteps, precision=p, neuron=NeuronSpec(threshold=8),
                       input_h=REFERENCE_SIZE, input_w=REFERENCE_SIZE, input_channels=REFERENCE_CHANNELS)


def reference_spikes(net: NetworkSpec, sparsity: float, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.random(net.input_shape) >= sparsity).astype(np.uint8)


@lru_cache(maxsize=64)
def _reference_result(weight_bits: int, sparsity: float, seed: int, timesteps: int, arch: ArchParams):
    net = reference_network(weight_bits, timesteps)
    x = reference_spikes(net, sparsity, seed)
    # the input stream, not the weights, sets timing; share one weight draw per precision
    w = golden.random_weights(net, seed)
    return net, simulate_network(net, w, x, arch.with_clock(50.0), record_trace=False)


def reference_report(weight_bits: int = 4, sparsity: float = 0.95, clock_mhz: float = 50.0,
                     e: EnergyParams = EnergyParams(), arch: ArchParams = ArchParams(),
                     vdd: Optional[float] = None, seed: int = 0,
                     timesteps: int = REFERENCE_TIMESTEPS) -> RunReport:
    """Report for the reference workload; cycle counts are clock independent so runs are cached."""
    net, result = _reference_result(weight_bits, float(sparsity), seed, timesteps, arch.with_clock(50.0))
    return make_report(result, net, e, arch.with_clock(clock_mhz), vdd)


# ---------------------------------------------------------------- calibration

ENERGY_KEYS = tuple(f.name for f in fields(EnergyParams))


@dataclass(frozen=True)
class CalibrationTarget:
    weight_bits: int
    sparsity: float
    clock_mhz: float
    vdd: float
    power_mw: Optional[float] = None
    tops_per_w: Optional[float] = None
    gops: Optional[float] = None


DEFAULT_TARGETS = (
    CalibrationTarget(4, 0.95, 50.0, 0.9, power_mw=4.9, tops_per_w=5.0, gops=24.54),
    CalibrationTarget(6, 0.95, 50.0, 0.9, tops_per_w=3.34),
    CalibrationTarget(8, 0.95, 50.0, 0.9, tops_per_w=2.5),
    CalibrationTarget(4, 0.95, 150.0, 1.0, power_mw=18.0, gops=73.59),
)


def _opt_float(text: str, line: int, name: str) -> Optional[float]:
    text = text.strip()
    if not text:
        return None
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{name}: not a number: {text!r}", line=line, field=name) from None


def load_targets(path) -> list:
    """CSV with header ``weight_bits,sparsity,clock_mhz,vdd,power_mw,tops_per_w,gops``."""
    out = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ParseError("empty targets file", line=1)
    header = [h.strip() for h in rows[0][1]]
    expected = [f.name for f in fields(CalibrationTarget)]
    if header != expected:
        raise ParseError(f"header must be {','.join(expected)}", line=rows[0][0])
    for line, r in rows[1:]:
        if len(r) != len(expected):
            raise ParseError(f"expected {len(expected)} fields, got {len(r)}", line=line)
        vals = {name: _opt_float(v, line, name) for name, v in zip(expected, r)}
        for name in ("weight_bits", "sparsity", "clock_mhz", "vdd"):
            if vals[name] is None:
                raise ParseError(f"{name} is required", line=line, field=name)
        vals["weight_bits"] = int(vals["weight_bits"])
        out.append(CalibrationTarget(**vals))
    return out


@dataclass
class CalibrationResult:
    params: EnergyParams
    residuals: dict            # "<metric>@<wb>b/<sparsity>/<MHz>" -> relative error
    dynamic_power_mw: float
    leakage_power_mw: float

    @property
    def max_residual(self) -> float:
        return max((abs(v) for v in self.residuals.values()), default=0.0)


def _point(targets, pred):
    for t in targets:
        if pred(t):
            return t
    return None


def calibrate(targets=DEFAULT_TARGETS, arch: ArchParams = ArchParams(), tolerance: float = 0.02,
              seed: int = 0, shape: Optional[dict] = None) -> CalibrationResult:
    """Fit the energy scale, leakage and op scale to the chip-summary operating points.

    With dynamic energy ``k * E_shape`` and static power ``L``, two power
    targets at different (f, V) give a 2x2 linear system; the throughput target
    fixes ``op_count_scale``. Remaining targets are checked, not fitted.
    """
    targets = list(targets)
    base = _point(targets, lambda t: t.power_mw is not None and t.gops is not None)
    if base is None:
        raise CalibrationDiverged("need one target with both power_mw and gops")
    second = _point(targets, lambda t: t is not base and t.power_mw is not None
                    and t.weight_bits == base.weight_bits and t.sparsity == base.sparsity
                    and (t.clock_mhz, t.vdd) != (base.clock_mhz, base.vdd))
    shape = dict(ENERGY_SHAPE if shape is None else shape)
    unit = EnergyParams(**shape, e_leakage_per_cycle=0.0, op_count_scale=1.0, v_ref=base.vdd,
                        leakage_ref_mhz=base.clock_mhz)
    r0 = reference_report(base.weight_bits, base.sparsity, base.clock_mhz, unit, arch, base.vdd, seed)
    d0 = r0.power_mw                      # dynamic power per unit k at the base point
    if second is not None:
        r1 = reference_report(second.weight_bits, second.sparsity, second.clock_mhz, unit, arch, second.vdd, seed)
        d1 = r1.power_mw
        det = d0 - d1
        if det == 0:
            raise CalibrationDiverged("operating points do not separate static and dynamic power")
        k = (base.power_mw - second.power_mw) / det
        leak = base.power_mw - k * d0
    else:
        k, leak = base.power_mw / d0, 0.0
    if not (k > 0 and leak >= 0) or not math.isfinite(k):
        raise CalibrationDiverged(f"fit gave negative parameters: scale={k:.4g}, leakage={leak:.4g} mW")
    e_leak = leak / (arch.n_units * base.clock_mhz * 1e-3)
    scale = base.gops / r0.gops
    fitted = replace(unit.scaled(k), e_leakage_per_cycle=e_leak, op_count_scale=scale)

    residuals = {}
    for t in targets:
        rep = reference_report(t.weight_bits, t.sparsity, t.clock_mhz, fitted, arch, t.vdd, seed)
        tag = f"{t.weight_bits}b/{t.sparsity:g}/{t.clock_mhz:g}MHz"
        for name in ("power_mw", "tops_per_w", "gops"):
            want = getattr(t, name)
            if want is not None:
                residuals[f"{name}@{tag}"] = (getattr(rep, name) - want) / want
    result = CalibrationResult(fitted, residuals, k * d0, leak)
    if result.max_residual > tolerance:
        worst = max(residuals, key=lambda key: abs(residuals[key]))
        raise CalibrationDiverged(f"residual {residuals[worst]:+.2%} on {worst} exceeds {tolerance:.0%}")
    return result


def format_energy_params(e: EnergyParams, header=()) -> str:
    lines = [f"# {h}" for h in header]
    for name in ENERGY_KEYS:
        lines.append(f"{name} = {getattr(e, name)!r}")
    return "\n".join(lines) + "\n"


def save_energy_params(path, e: EnergyParams, header=()) -> None:
    with open(path, "w") as fh:
        fh.write(format_energy_params(e, header))


def parse_energy_params(text: str) -> EnergyParams:
    values = {}
    for i, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=i)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ENERGY_KEYS:
            raise ParseError(f"unknown key {key!r}", line=i, field=key)
        try:
            values[key] = float(value)
        except ValueError:
            raise ParseError(f"{key}: not a number: {value!r}", line=i, field=key) from None
    return EnergyParams(**values)


def load_energy_params(path) -> EnergyParams:
    with open(path) as fh:
        return parse_energy_params(fh.read())


def calibration_header(result: CalibrationResult, targets) -> list:
    lines = [
        "Energy parameters fitted by cimsnn.metrics.calibrate on the reference workload",
        f"(1x1 Conv, C={REFERENCE_CHANNELS}, {REFERENCE_SIZE}x{REFERENCE_SIZE} positions, "
        f"K=3*48/W, T={REFERENCE_TIMESTEPS}, Bernoulli input, seed 0).",
        "Relative event costs fixed before fitting: "
        + ", ".join(f"{k}={v:.4g}" for k, v in ENERGY_SHAPE.items()),
        f"Dynamic power at the base point {result.dynamic_power_mw:.4f} mW, "
        f"static {result.leakage_power_mw:.4f} mW.",
        "Targets (weight_bits, sparsity, MHz, V, mW, TOPS/W, GOPS):",
    ]
    for t in targets:
        lines.append(f"  {t.weight_bits}, {t.sparsity}, {t.clock_mhz}, {t.vdd}, "
                     f"{t.power_mw}, {t.tops_per_w}, {t.gops}")
    lines.append("Residuals:")
    for k, v in result.residuals.items():
        lines.append(f"  {k}: {v:+.4%}")
    return lines


# ---------------------------------------------------------------- AER


def aer_tradeoff(entries: int, addr_bits: int, sparsity: float):
    """Storage bits of a dense bitmap vs address-event list and the break-even sparsity."""
    if entries <= 0 or addr_bits <= 0:
        raise ValueError("entries and addr_bits must be positive")
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError("sparsity must lie in [0, 1]")
    raw = entries
    aer = addr_bits * entries * (1.0 - sparsity)
    return raw, aer, 1.0 - 1.0 / addr_bits


# ---------------------------------------------------------------- sweeps

SWEEP_COLUMNS = ("weight_bits", "sparsity", "clock_mhz", "vdd", "total_cycles", "gops",
                 "power_mw", "tops_per_w", "total_energy_pj", "raw_sops", "parity_switches")


def sweep(sparsities, precisions=(4, 6, 8), clocks=(50.0,), e: EnergyParams = EnergyParams(),
          arch: ArchParams = ArchParams(), seed: int = 0, threads: int = 1,
          timesteps: int = REFERENCE_TIMESTEPS) -> list:
    """Reference-workload grid; rows sorted by (weight_bits, sparsity, clock)."""
    grid = [(int(wb), float(s)) for wb in precisions for s in sparsities]

    def point(item):
        wb, s = item
        rows = []
        for f in clocks:
            rep = reference_report(wb, s, f, e, arch, None, seed, timesteps)
            rows.append({c: getattr(rep, c) if hasattr(rep, c) else None for c in SWEEP_COLUMNS}
                        | {"weight_bits": wb, "sparsity": s, "clock_mhz": float(f)})
        return rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(point, grid))
    else:
        chunks = [point(g) for g in grid]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["weight_bits"], r["sparsity"], r["clock_mhz"]))
    return rows


def write_sweep_csv(rows, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=list(SWEEP_COLUMNS))
    w.writeheader()
    for r in rows:
        w.writerow(r)

"""``cimsnn`` command line: simulate, check against the reference model, map, calibrate and sweep.

Exit codes::

    0  success
    1  unexpected internal error
    2  usage error
    3  parse, validation or shape error in an input file
    4  a layer's fan-in exceeds the core capacity
    5  ``compare`` found differing spikes
    6  calibration did not converge
    7  malformed event file or I/O failure

Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import golden, metrics, spikeio
from .config import ArchParams, EnergyParams, validate_precision
from .errors import CimSnnError, ValidationError
from .mapper import map_network
from .netfile import load_network
from .pipeline import simulate_network

EXIT_MISMATCH = 5
EXIT_IO = 7


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_net(args):
    net = load_network(args.net)
    if getattr(args, "precision", None) is not None:
        net = dataclasses.replace(net, precision=validate_precision(args.precision))
    return net


def _load_input(args, net) -> np.ndarray:
    if args.spikes and args.events:
        raise ValidationError("give either --spikes or --events, not both")
    if args.spikes:
        return spikeio.read_spikes(args.spikes)
    if args.events:
        if args.window_us is None:
            raise ValidationError("--events needs --window-us")
        if net.input_channels != 2:
            raise ValidationError(f"event input has 2 polarity channels, network expects {net.input_channels}")
        return spikeio.ingest_events(args.events, net.input_h, net.input_w, net.timesteps,
                                     args.window_us, args.min_count)
    return spikeio.gen_spikes(net.input_shape, args.sparsity, args.seed)


def _load_weights(args, net) -> list:
    if args.weights:
        tensors, bits = spikeio.read_weights(args.weights)
        if bits is not None and bits != net.precision.weight_bits:
            raise ValidationError(f"weights file holds {bits}-bit weights, network runs {net.precision}")
        return tensors
    return golden.random_weights(net, args.seed)


def _energy(args) -> EnergyParams:
    return metrics.load_energy_params(args.energy) if getattr(args, "energy", None) else EnergyParams()


def _add_workload_args(p) -> None:
    p.add_argument("--net", required=True, help="network description (YAML)")
    p.add_argument("--spikes", help="input spike tensor (SPKT)")
    p.add_argument("--events", help="input event CSV (t_us,x,y,polarity)")
    p.add_argument("--window-us", type=float, help="event bin width in microseconds")
    p.add_argument("--min-count", type=int, default=1, help="events per pixel and bin needed to spike")
    p.add_argument("--sparsity", type=float, default=0.9, help="synthetic input sparsity when no input file")
    p.add_argument("--weights", help="weights container (SPKW); default: uniform from --seed")
    p.add_argument("--precision", type=int, choices=(4, 6, 8), help="override the network weight bits")
    p.add_argument("--seed", type=int, default=0)


def cmd_run(args) -> int:
    net = _load_net(args)
    x = _load_input(args, net)
    w = _load_weights(args, net)
    arch = ArchParams(clock_mhz=args.freq_mhz)
    result = simulate_network(net, w, x, arch, bit_accurate=args.bit_accurate,
                              record_trace=args.trace is not None)
    report = metrics.make_report(result, net, _energy(args), arch, args.vdd)
    text = report.to_json(indent=2)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.trace:
        result.trace.write_csv(args.trace)
    if args.out_spikes:
        spikeio.write_spikes(args.out_spikes, result.output)
    _log(f"{report.total_cycles} cycles, {report.gops:.3f} GOPS, {report.power_mw:.3f} mW, "
         f"{report.tops_per_w:.3f} TOPS/W")
    return 0


def cmd_golden(args) -> int:
    net = _load_net(args)
    res = golden.run_network(net, _load_weights(args, net), _load_input(args, net))
    if args.out_spikes:
        spikeio.write_spikes(args.out_spikes, res.output)
    summary = {
        "output_shape": list(res.output.shape),
        "output_spikes": int(res.output.sum()),
        "layer_spikes": [int(s.sum()) for s in res.spikes],
        "input_sparsity": [[float(v) for v in row] for row in res.input_sparsity],
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_compare(args) -> int:
    net = _load_net(args)
    x, w = _load_input(args, net), _load_weights(args, net)
    ref = golden.run_network(net, w, x)
    sim = simulate_network(net, w, x, bit_accurate=args.bit_accurate, record_trace=False)
    bad = [i for i, (a, b) in enumerate(zip(ref.spikes, sim.spikes))
           if np.packbits(a).tobytes() != np.packbits(b).tobytes()]
    if bad:
        for i in bad:
            n = int(np.count_nonzero(ref.spikes[i] != sim.spikes[i]))
            _log(f"layer {i}: {n} differing spikes")
        print(f"MISMATCH in layers {bad}")
        return EXIT_MISMATCH
    print(f"identical: {len(net.layers)} layers, {net.timesteps} timesteps, "
          f"{int(sim.output.sum())} output spikes")
    return 0


def cmd_map(args) -> int:
    net = _load_net(args)
    out = []
    for i, sched in enumerate(map_network(net)):
        entry = {"index": i, "kind": net.layers[i].kind.value}
        if sched is not None:
            entry.update(sched.to_dict())
        out.append(entry)
    print(json.dumps(out, indent=2 if args.pretty else None))
    return 0


def cmd_calibrate(args) -> int:
    targets = metrics.load_targets(args.targets) if args.targets else list(metrics.DEFAULT_TARGETS)
    result = metrics.calibrate(targets, tolerance=args.tolerance, seed=args.seed)
    header = metrics.calibration_header(result, targets)
    if args.out:
        metrics.save_energy_params(args.out, result.params, header)
    else:
        sys.stdout.write(metrics.format_energy_params(result.params, header))
    _log(f"max residual {result.max_residual:.3%}")
    return 0


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    rows = metrics.sweep(_floats(args.sparsity), [int(v) for v in _floats(args.precision)],
                         _floats(args.freq_mhz), _energy(args), seed=args.seed, threads=args.threads,
                         timesteps=args.timesteps)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            metrics.write_sweep_csv(rows, fh)
    else:
        metrics.write_sweep_csv(rows, sys.stdout)
    return 0


def cmd_gen_spikes(args) -> int:
    x = spikeio.gen_spikes(args.dims, args.sparsity, args.seed)
    spikeio.write_spikes(args.out, x)
    _log(f"wrote {x.shape} with sparsity {golden.sparsity(x):.4f}")
    return 0


def cmd_ingest_events(args) -> int:
    x = spikeio.ingest_events(args.events, args.height, args.width, args.timesteps,
                              args.window_us, args.min_count)
    spikeio.write_spikes(args.out, x)
    _log(f"wrote {x.shape} with {int(x.sum())} spikes")
    return 0


def cmd_analyze_aer(args) -> int:
    rows = []
    for s in _floats(args.sparsity):
        raw, aer, cross = metrics.aer_tradeoff(args.entries, args.addr_bits, s)
        rows.append({"sparsity": s, "raw_bits": raw, "aer_bits": aer, "crossover_sparsity": cross,
                     "aer_smaller": aer < raw})
    print(json.dumps(rows, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cimsnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="cycle-level simulation with a performance report")
    _add_workload_args(p)
    p.add_argument("--freq-mhz", type=float, default=50.0)
    p.add_argument("--vdd", type=float, help="supply voltage (default: interpolated from the clock)")
    p.add_argument("--energy", help="EnergyParams file (default: calibrated built-ins)")
    p.add_argument("--report", help="report JSON path (default: stdout)")
    p.add_argument("--trace", help="per-unit event trace CSV path")
    p.add_argument("--out-spikes", help="write final-layer spikes (SPKT)")
    p.add_argument("--bit-accurate", action="store_true", help="run every op on the bit-level macro model")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("golden", help="reference model only")
    _add_workload_args(p)
    p.add_argument("--out-spikes", help="write final-layer spikes (SPKT)")
    p.set_defaults(func=cmd_golden)

    p = sub.add_parser("compare", help="simulator vs reference model, exit 5 on any difference")
    _add_workload_args(p)
    p.add_argument("--bit-accurate", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("map", help="print tile schedules as JSON")
    p.add_argument("--net", required=True)
    p.add_argument("--precision", type=int, choices=(4, 6, 8))
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("calibrate", help="fit energy parameters to chip-summary targets")
    p.add_argument("--targets", help="targets CSV (default: built-in chip summary)")
    p.add_argument("--out", help="EnergyParams output file (default: stdout)")
    p.add_argument("--tolerance", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="sparsity x precision x frequency grid on the reference workload")
    p.add_argument("--sparsity", default="0.75,0.8,0.85,0.9,0.95")
    p.add_argument("--precision", default="4,6,8")
    p.add_argument("--freq-mhz", default="50")
    p.add_argument("--timesteps", type=int, default=metrics.REFERENCE_TIMESTEPS)
    p.add_argument("--energy")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-spikes", help="seeded Bernoulli spike tensor")
    p.add_argument("--dims", type=int, nargs=4, required=True, metavar=("T", "C", "H", "W"))
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_spikes)

    p = sub.add_parser("ingest-events", help="bin an event CSV into an SPKT tensor")
    p.add_argument("--events", required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--timesteps", type=int, required=True)
    p.add_argument("--window-us", type=float, required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest_events)

    p = sub.add_parser("analyze-aer", help="bitmap vs address-event storage")
    p.add_argument("--entries", type=int, required=True)
    p.add_argument("--addr-bits", type=int, required=True)
    p.add_argument("--sparsity", default="0.5,0.9,0.95,0.99")
    p.set_defaults(func=cmd_analyze_aer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CimSnnError as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return exc.exit_code
    except OSError as exc:
        _log(f"error: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _log(f"error: {exc}")
        return 3
    except Exception as exc:  # noqa: BLE001
        _log(f"internal error: {type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

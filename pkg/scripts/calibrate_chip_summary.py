"""Fit EnergyParams to the chip-summary targets and write configs/energy_calibrated.cfg."""

import argparse
from pathlib import Path

from cimsnn import metrics

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--targets", default=ROOT / "configs" / "chip_summary_targets.csv")
    ap.add_argument("--out", default=ROOT / "configs" / "energy_calibrated.cfg")
    args = ap.parse_args()

    targets = metrics.load_targets(args.targets)
    result = metrics.calibrate(targets)
    metrics.save_energy_params(args.out, result.params, metrics.calibration_header(result, targets))
    print(f"wrote {args.out}")
    print(f"{'point':<28}{'power mW':>10}{'GOPS':>10}{'TOPS/W':>10}")
    for t in targets:
        rep = metrics.reference_report(t.weight_bits, t.sparsity, t.clock_mhz, result.params, vdd=t.vdd)
        tag = f"{t.weight_bits}b s={t.sparsity} {t.clock_mhz:g}MHz {t.vdd}V"
        print(f"{tag:<28}{rep.power_mw:>10.3f}{rep.gops:>10.3f}{rep.tops_per_w:>10.3f}")
    for k, v in result.residuals.items():
        print(f"  residual {k}: {v:+.3%}")


if __name__ == "__main__":
    main()

"""Throughput and efficiency over input sparsity and weight precision on the reference workload."""

import argparse
from pathlib import Path

from cimsnn import metrics


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="throughput_sweep.csv")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    sparsities = [0.75, 0.80, 0.85, 0.90, 0.95]
    rows = metrics.sweep(sparsities, (4, 6, 8), (50.0, 150.0), threads=args.threads)
    with open(args.out, "w", newline="") as fh:
        metrics.write_sweep_csv(rows, fh)
    print(f"wrote {len(rows)} rows to {Path(args.out).resolve()}")
    at = {(r["weight_bits"], r["sparsity"], r["clock_mhz"]): r for r in rows}
    print(f"{'bits':>4}{'sparsity':>10}{'GOPS':>10}{'TOPS/W':>10}")
    for (wb, s, f), r in sorted(at.items()):
        if f == 50.0:
            print(f"{wb:>4}{s:>10.2f}{r['gops']:>10.3f}{r['tops_per_w']:>10.3f}")
    g = lambda wb, s: at[(wb, s, 50.0)]["gops"]
    print(f"GOPS 4b/8b at 95%: {g(4, 0.95) / g(8, 0.95):.3f}")
    print(f"GOPS 95%/80% at 4b: {g(4, 0.95) / g(4, 0.80):.3f}")
    print(f"GOPS 150/50 MHz at 4b, 95%: {at[(4, 0.95, 150.0)]['gops'] / g(4, 0.95):.3f}")


if __name__ == "__main__":
    main()

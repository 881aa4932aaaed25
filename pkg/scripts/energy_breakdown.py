"""Per-component energy of the reference workload at 4-bit weights across input sparsity."""

from cimsnn import metrics


def main():
    cols = metrics.COMPONENTS
    print(f"{'sparsity':>8}" + "".join(f"{c:>16}" for c in cols) + f"{'total nJ':>12}")
    totals = {}
    for s in (0.75, 0.80, 0.85, 0.90, 0.95):
        rep = metrics.reference_report(4, s)
        total = rep.total_energy_pj
        totals[s] = total
        shares = "".join(f"{rep.energy_pj[c] / total:>16.1%}" for c in cols)
        print(f"{s:>8.2f}{shares}{total / 1e3:>12.1f}")
    print(f"energy at 95% / energy at 75%: {totals[0.95] / totals[0.75]:.3f}")


if __name__ == "__main__":
    main()

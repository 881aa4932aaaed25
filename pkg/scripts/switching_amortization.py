"""Energy per op against same-parity batch size: closed form vs measured op streams."""

from cimsnn import metrics
from cimsnn.config import EnergyParams

N_OPS = 15 * 240


def stream(batch: int, n: int = N_OPS) -> list:
    return [(i // batch) % 2 for i in range(n)]


def main():
    e = EnergyParams()
    base = metrics.op_stream_energy(stream(1), e) / N_OPS
    print(f"switch/base ratio {e.switch_ratio:.4f} (fit from 1.5x at batch 15: "
          f"{metrics.calibrate_switching():.4f})")
    print(f"{'batch':>6}{'model':>10}{'measured':>10}{'reduction':>11}")
    for n in (1, 2, 4, 8, 12, 15, 16):
        measured = metrics.op_stream_energy(stream(n), e) / N_OPS / e.e_base
        print(f"{n:>6}{metrics.switching_model(n, e.switch_ratio):>10.4f}{measured:>10.4f}"
              f"{base / e.e_base / measured:>11.3f}")


if __name__ == "__main__":
    main()

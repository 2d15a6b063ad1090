"""Frequency-integral AR fits on synthetic data: order and sigma_w for each horizon.

    python3 scripts/sigma_table.py --days 40 --seed 1
"""

import argparse

from bessplan.freqmodel import sigma_table
from bessplan.io.synth import synth_freq


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=int, default=40)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--freq-sigma", type=float, default=0.05, help="std of the 1 s deviation (Hz)")
    ap.add_argument("--horizons", default="1,2,4,6,12,23,24", help="comma-separated hours")
    args = ap.parse_args()

    trace = synth_freq(args.seed, args.days, sigma_target=args.freq_sigma)
    horizons = [float(h) for h in args.horizons.split(",")]
    models = {}
    table = sigma_table(trace, 50.0, horizons, models=models)
    print(f"{'T (h)':>6}{'order':>7}{'sigma_w (Hz h)':>16}{'windows':>9}")
    for h in horizons:
        print(f"{h:>6g}{models[h].order:>7}{table[h]:>16.5f}{int(args.days * 24 // h):>9}")


if __name__ == "__main__":
    main()

"""Handover probabilities and blocking terms as the femtocell count grows.

    python scripts/handover_vs_n.py --preset table1 --step 50 > handover.csv
"""
import argparse
import csv
import sys

from femtocac import preset
from femtocac.cli import SWEEP_COLUMNS, sweep_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="table1")
    ap.add_argument("--start", type=int, default=0)
    ap.add_argument("--stop", type=int, default=1000)
    ap.add_argument("--step", type=int, default=50)
    args = ap.parse_args()
    rows = sweep_rows(preset(args.preset), list(range(args.start, args.stop + 1, args.step)))
    w = csv.DictWriter(sys.stdout, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


if __name__ == "__main__":
    main()

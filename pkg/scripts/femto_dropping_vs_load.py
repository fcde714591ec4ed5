"""Femtocell-user handover dropping with macro overflow on and off, over offered load.

    python scripts/femto_dropping_vs_load.py --preset desk
"""
import argparse
import csv
import sys

from femtocac import forced_termination, handover_probabilities, preset, solve_fixed_point


def row(cfg):
    s = solve_fixed_point(cfg)
    hp = handover_probabilities(cfg)
    # stand-alone femtocells: a call that leaves femto coverage is lost
    p_D_m = s.p_D_m if cfg.integrated else 1.0
    return s, forced_termination(hp, s.p_D_f, p_D_m)[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--loads", type=float, nargs="+", default=[0.2, 0.35, 0.5, 0.65, 0.8])
    args = ap.parse_args()
    base = preset(args.preset)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["lambda_total", "p_D_f_integrated", "D_f_integrated", "p_D_f_alone", "D_f_alone"])
    for lam in args.loads:
        s_int, d_int = row(base.replace(lambda_total=lam))
        s_alone, d_alone = row(base.replace(lambda_total=lam, integrated=False))
        w.writerow([lam, s_int.p_D_f, d_int, s_alone.p_D_f, d_alone])


if __name__ == "__main__":
    main()

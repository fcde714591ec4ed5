"""Tabulate the desk scenario: analytic fixed point, chain oracle, long simulations.

Prints one line per quantity with the analytic value, the oracle value where
one applies, and simulation means with 95% half-widths.

    python scripts/desk_tabulate.py --events 1000000 --seeds 10
"""
import argparse

from femtocac import forced_termination, handover_probabilities, preset, solve_fixed_point
from femtocac.oracle import guard_channel_oracle
from femtocac.scenario import derive_capacities, offered_rates
from femtocac.sim import run_replications


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--events", type=int, default=1_000_000)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    cfg = preset(args.preset)
    d = derive_capacities(cfg)
    sol = solve_fixed_point(cfg)
    hp = handover_probabilities(cfg)
    d_f, d_m = forced_termination(hp, sol.p_D_f, sol.p_D_m)
    lam_f, lam_m = offered_rates(cfg)
    o_block, o_drop = guard_channel_oracle(lam_m + sol.p_B_f * lam_f, sol.lambda_h_m, d.mu_m, d.N, d.S)

    seeds = range(args.seeds)
    chain = run_replications(cfg, "chain", seeds, args.events, solution=sol)
    closed = run_replications(cfg, "closed", seeds, args.events)

    def sim(m, k):
        v = m.estimates.get(k)
        hw = (m.half_width or {}).get(k)
        if v is None:
            return "-"
        return f"{v:.6g} +- {hw:.2g}" if hw is not None else f"{v:.6g}"

    print(f"N={d.N} S={d.S} mu_m={d.mu_m:.6g} mu_f={d.mu_f:.6g} lambda_f={lam_f:.6g} lambda_m={lam_m:.6g}")
    print(f"{'quantity':<12} {'analytic':>12} {'oracle':>12} {'chain sim':>24} {'closed sim':>24}")
    table = [
        ("p_B_f", sol.p_B_f, None), ("p_D_f", sol.p_D_f, None),
        ("p_B_m", sol.p_B_m, o_block), ("p_D_m", sol.p_D_m, o_drop),
        ("lambda_h_mm", sol.lambda_h_mm, None), ("lambda_h_mf", sol.lambda_h_mf, None),
        ("lambda_h_ff", sol.lambda_h_ff, None), ("lambda_h_fm", sol.lambda_h_fm, None),
        ("D_f", d_f, None), ("D_m", d_m, None),
    ]
    for k, a, o in table:
        ostr = f"{o:.6g}" if o is not None else "-"
        print(f"{k:<12} {a:>12.6g} {ostr:>12} {sim(chain, k):>24} {sim(closed, k):>24}")


if __name__ == "__main__":
    main()

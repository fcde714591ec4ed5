"""Cross-checks between the closed-form model, the chain oracle and the simulator.

Each ``check_*`` function returns a :class:`CheckResult`; :func:`run_suite`
runs all of them for one scenario. The ``validate`` CLI command and the
acceptance tests both go through here.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import analytic, oracle
from .scenario import ScenarioConfig, derive_capacities, offered_rates, preset
from .sim import SimMetrics, run_replications

__all__ = ["CheckResult", "SimBudget", "run_suite", "CHECKS"] + [
    "check_oracle", "check_erlang", "check_anchors", "check_handover_shape",
    "check_fixed_point", "check_chain_sim", "check_closed_sim",
    "check_integration_benefit", "check_engineering",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name} ({self.seconds:.2f} s) {json.dumps(self.details, default=_num)}"


def _num(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


@dataclass
class SimBudget:
    """Seeds and event counts used by the simulation checks."""

    seeds: Sequence[int] = tuple(range(10))
    chain_events: int = 1_000_000
    closed_events: int = 1_000_000
    compare_events: int = 300_000
    n_macro: int = 7


def _timed(fn):
    def wrapper(*args, **kwargs):
        t = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_oracle(rounds: int = 200, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """Closed-form macrocell chain against the numerically solved chain."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(rounds):
        N = int(rng.integers(1, 26))
        S = int(rng.integers(0, 31 - N))
        lo, lh = rng.uniform(0, 30, size=2)
        mu_m = float(rng.uniform(0.2, 5.0))
        chain = analytic.macro_chain(lo, lh, mu_m, N, S)
        pb, pd = oracle.guard_channel_oracle(lo, lh, mu_m, N, S)
        worst = max(worst, abs(chain.p_block - pb), abs(chain.p_drop - pd))
    return CheckResult("oracle_equivalence", worst < tol, details={"rounds": rounds, "max_abs_delta": worst, "tol": tol})


@_timed
def check_erlang(loads: int = 100, seed: int = 1, tol: float = 1e-12) -> CheckResult:
    """Femtocell recurrence vs the S = 0 chain and the factorial sum."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(loads):
        K = int(rng.integers(1, 21))
        a = float(rng.uniform(0.01, 25.0))
        n, mu_f = 5, 1.0 / 90.0
        lam = a * n * mu_f
        rec = analytic.femto_blocking(lam, n, K, mu_f)
        direct = analytic.femto_blocking_direct(lam, n, K, mu_f)
        chain = analytic.macro_chain(a, 0.0, 1.0, K, 0)
        worst = max(worst, abs(rec - direct), abs(rec - chain.p_block), abs(rec - chain.p_drop))
    return CheckResult("erlang_consistency", worst < tol, details={"loads": loads, "max_abs_delta": worst, "tol": tol})


@_timed
def check_anchors(tol: float = 1e-9) -> CheckResult:
    """Hand-evaluated values for the table1 timing figures."""
    cfg = preset("table1")
    d = derive_capacities(cfg)
    hp = analytic.handover_probabilities(cfg, d)
    chain = analytic.macro_chain(1.0, 1.0, 1.0, 1, 1)
    got = {"p_mm": hp.p_mm, "mu_f": d.mu_f, "mu_m": d.mu_m, "p_block": chain.p_block, "p_drop": chain.p_drop}
    want = {"p_mm": 1 / 3, "mu_f": 1 / 90, "mu_m": (math.sqrt(1000) + 1) / 240 + 1 / 120,
            "p_block": 0.75, "p_drop": 0.25}
    deltas = {k: abs(got[k] - want[k]) for k in want}
    # the printed six-digit figure for mu_m, at its own precision
    mu_m_print = abs(d.mu_m - 0.144262) < 5e-7
    ok = max(deltas.values()) < tol and mu_m_print
    return CheckResult("hand_anchors", ok, details={"max_abs_delta": max(deltas.values()), "tol": tol})


@_timed
def check_handover_shape(cfg: Optional[ScenarioConfig] = None, n_max: Optional[int] = None,
                         tol: float = 1e-12) -> CheckResult:
    """Handover probabilities over n = 0..n_max: growth of ff/mf, decay of fm, ff+fm identity.

    With n = 0 there is no femtocell and femto-side probabilities are set
    to zero, so the identity and the growth of p_ff are checked from n = 1.
    """
    cfg = cfg or preset("table1")
    if n_max is None:
        q = derive_capacities(cfg, check=False).q
        n_max = min(1000, math.floor(1.0 / q + 1e-9))
    rows = []
    for n in range(n_max + 1):
        c = cfg.replace(n=n)
        d = derive_capacities(c, check=False)
        rows.append((analytic.handover_probabilities(c, d), d.q))
    p_ff = np.array([h.p_ff for h, _ in rows])
    p_mf = np.array([h.p_mf for h, _ in rows])
    p_fm = np.array([h.p_fm for h, _ in rows])
    leave_f = cfg.eta_f / (cfg.eta_f + cfg.mu)
    ident = max(abs(h.p_ff + h.p_fm - (1 - q) * leave_f) for h, q in rows[1:])
    checks = {
        "p_ff_increasing": bool(np.all(np.diff(p_ff[1:]) > 0)),
        "p_mf_increasing": bool(np.all(np.diff(p_mf) > 0)),
        "p_fm_decreasing": bool(np.all(np.diff(p_fm) < 0)),
        "identity_max_delta": ident,
    }
    ok = checks["p_ff_increasing"] and checks["p_mf_increasing"] and checks["p_fm_decreasing"] and ident < tol
    checks["n_range"] = [0, n_max]
    return CheckResult("handover_shape", ok, details=checks)


@_timed
def check_fixed_point(cfgs: Optional[dict] = None, tol: float = 1e-10, restart_tol: float = 1e-8) -> CheckResult:
    """Convergence, and the same answer from a far-away starting point."""
    cfgs = cfgs or {"table1": preset("table1"), "desk": preset("desk")}
    details = {}
    ok = True
    for name, cfg in cfgs.items():
        a = analytic.solve_fixed_point(cfg, tol=tol)
        lam_f, lam_m = offered_rates(cfg)
        big = 50.0 * (lam_f + lam_m + 1.0)
        b = analytic.solve_fixed_point(cfg, tol=tol, initial=[big] * 4 + [0.9, 0.9, 0.9])
        va = np.array(_fp_vector(a))
        vb = np.array(_fp_vector(b))
        scale = np.where(np.abs(va) > 0, np.abs(va), 1.0)
        rel = float(np.max(np.abs(va - vb) / scale))
        good = a.residual < tol and a.iterations <= analytic.MAX_ITER and rel < restart_tol
        ok &= good
        details[name] = {"iterations": a.iterations, "residual": a.residual,
                         "restart_iterations": b.iterations, "restart_rel_delta": rel}
    return CheckResult("fixed_point_health", ok, details=details)


def _fp_vector(s: analytic.FixedPointSolution):
    return [s.lambda_h_mm, s.lambda_h_mf, s.lambda_h_ff, s.lambda_h_fm, s.p_B_f, s.p_B_m, s.p_D_m]


def _compare(metrics: SimMetrics, expected: dict, rel_tol: float, n_se: float = 3.0) -> tuple[bool, dict]:
    out = {}
    ok = True
    for k, want in expected.items():
        got = metrics.estimates.get(k)
        se = (metrics.std_error or {}).get(k)
        if got is None:
            out[k] = {"expected": want, "simulated": None, "pass": False}
            ok = False
            continue
        rel = abs(got - want) / abs(want) if want else abs(got - want)
        z = abs(got - want) / se if se else (0.0 if got == want else math.inf)
        within_se = n_se is None or z <= n_se
        within_rel = rel_tol is None or rel <= rel_tol
        out[k] = {"expected": want, "simulated": got, "std_error": se, "z": z, "rel": rel,
                  "pass": within_se and within_rel}
        ok &= within_se and within_rel
    return ok, out


@_timed
def check_chain_sim(cfg: Optional[ScenarioConfig] = None, budget: Optional[SimBudget] = None,
                    rel_tol: float = 0.05, collect: Optional[list] = None) -> CheckResult:
    """Chain-mode simulation against the four blocking/dropping probabilities."""
    cfg = cfg or preset("desk")
    budget = budget or SimBudget()
    sol = analytic.solve_fixed_point(cfg)
    m = run_replications(cfg, "chain", budget.seeds, budget.chain_events, solution=sol)
    if collect is not None:
        collect.append(m)
    expected = {"p_B_m": sol.p_B_m, "p_D_m": sol.p_D_m, "p_B_f": sol.p_B_f, "p_D_f": sol.p_D_f}
    if cfg.n == 0:
        expected = {"p_B_m": sol.p_B_m, "p_D_m": sol.p_D_m}
    ok, details = _compare(m, expected, rel_tol)
    details["p_D_m_time_average"] = m.estimates.get("p_D_m_time")
    return CheckResult("sim_chain_vs_analytic", ok, details=details)


@_timed
def check_closed_sim(cfg: Optional[ScenarioConfig] = None, budget: Optional[SimBudget] = None,
                     rel_tol: float = 0.05, collect: Optional[list] = None) -> CheckResult:
    """Closed-loop handover rates and forced-termination fractions."""
    cfg = cfg or preset("desk")
    budget = budget or SimBudget()
    sol = analytic.solve_fixed_point(cfg)
    hp = analytic.handover_probabilities(cfg)
    d_f, d_m = analytic.forced_termination(hp, sol.p_D_f, sol.p_D_m)
    m = run_replications(cfg, "closed", budget.seeds, budget.closed_events, n_macro=budget.n_macro)
    if collect is not None:
        collect.append(m)
    rates = {k: getattr(sol, k) for k in ("lambda_h_mm", "lambda_h_mf", "lambda_h_ff", "lambda_h_fm")
             if getattr(sol, k) > 0}
    ok_r, det_r = _compare(m, rates, rel_tol, n_se=None)
    ft = {"D_m": d_m}
    if cfg.n > 0:
        ft["D_f"] = d_f
    ok_f, det_f = _compare(m, ft, None, n_se=3.0)
    return CheckResult("sim_closed_vs_analytic", ok_r and ok_f, details={**det_r, **det_f})


@_timed
def check_integration_benefit(cfg: Optional[ScenarioConfig] = None, budget: Optional[SimBudget] = None,
                              closed: Optional[SimMetrics] = None,
                              collect: Optional[list] = None) -> CheckResult:
    """Femtocells lower macro forced termination; macro overflow lowers femto-user drops.

    Compared at the same total offered load: with and without femtocells,
    and with the overflow between tiers switched on and off.
    """
    cfg = cfg or preset("desk")
    budget = budget or SimBudget()
    if cfg.lambda_total is None:
        lam_f, lam_m = offered_rates(cfg)
        cfg = cfg.replace(lambda_o_m=None, lambda_o_f=None, lambda_total=lam_f + lam_m)
    base = cfg.replace(n=0)
    alone = cfg.replace(integrated=False)

    def analytic_ft(c, macro_usable=True):
        s = analytic.solve_fixed_point(c)
        hp = analytic.handover_probabilities(c)
        return analytic.forced_termination(hp, s.p_D_f, s.p_D_m if macro_usable else 1.0)

    ana_int = analytic_ft(cfg)
    ana_base = analytic_ft(base)
    ana_alone = analytic_ft(alone, macro_usable=False)

    def sim(c, events):
        m = run_replications(c, "closed", budget.seeds, events, n_macro=budget.n_macro)
        if collect is not None:
            collect.append(m)
        return m

    sim_int = closed if closed is not None else sim(cfg, budget.compare_events)
    sim_base = sim(base, budget.compare_events)
    sim_alone = sim(alone, budget.compare_events)
    e = lambda m, k: m.estimates.get(k)
    details = {
        "analytic_D_m": {"with_femto": ana_int[1], "n=0": ana_base[1]},
        "simulated_D_m": {"with_femto": e(sim_int, "D_m"), "n=0": e(sim_base, "D_m")},
        "analytic_D_f": {"integrated": ana_int[0], "stand_alone": ana_alone[0]},
        "simulated_D_f": {"integrated": e(sim_int, "D_f"), "stand_alone": e(sim_alone, "D_f")},
    }
    vals = [e(sim_int, "D_m"), e(sim_base, "D_m"), e(sim_int, "D_f"), e(sim_alone, "D_f")]
    ok = (
        ana_int[1] < ana_base[1]
        and ana_int[0] < ana_alone[0]
        and None not in vals
        and vals[0] < vals[1]
        and vals[2] < vals[3]
    )
    return CheckResult("integration_benefit", ok, details=details)


@_timed
def check_engineering(runs: Sequence[SimMetrics], cfg: Optional[ScenarioConfig] = None,
                      seed: int = 12345, events: int = 50_000) -> CheckResult:
    """Zero bookkeeping violations, balanced stream counters, reproducible runs."""
    cfg = cfg or preset("desk")
    violations = 0
    unbalanced = 0
    checked = 0
    for m in runs:
        reps = m.replications or [m]
        for r in reps:
            checked += 1
            violations += r.violations
            unbalanced += sum(not s.balanced() for s in r.streams.values())
    same = True
    for mode in ("chain", "closed"):
        a = run_replications(cfg, mode, [seed], events).to_dict()
        b = run_replications(cfg, mode, [seed], events).to_dict()
        same &= json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    ok = violations == 0 and unbalanced == 0 and same and checked > 0
    return CheckResult("engineering_invariants", ok, details={
        "replications_checked": checked, "bandwidth_violations": violations,
        "unbalanced_streams": unbalanced, "reproducible": same})


CHECKS: dict[str, Callable] = {
    "oracle_equivalence": check_oracle,
    "erlang_consistency": check_erlang,
    "hand_anchors": check_anchors,
    "handover_shape": check_handover_shape,
    "fixed_point_health": check_fixed_point,
    "sim_chain_vs_analytic": check_chain_sim,
    "sim_closed_vs_analytic": check_closed_sim,
    "integration_benefit": check_integration_benefit,
    "engineering_invariants": check_engineering,
}


def run_suite(cfg: ScenarioConfig, budget: Optional[SimBudget] = None, rel_tol: float = 0.05,
              echo: Optional[Callable[[str], None]] = None) -> list[CheckResult]:
    """Run every check for ``cfg`` and return the results in order."""
    budget = budget or SimBudget()
    runs: list = []
    results = []

    def add(r):
        results.append(r)
        if echo:
            echo(r.line())

    add(check_oracle())
    add(check_erlang())
    add(check_anchors())
    add(check_handover_shape(preset("table1")))
    add(check_fixed_point({"table1": preset("table1"), "desk": preset("desk"), "scenario": cfg}))
    add(check_chain_sim(cfg, budget, rel_tol, collect=runs))
    closed = check_closed_sim(cfg, budget, rel_tol, collect=runs)
    add(closed)
    add(check_integration_benefit(cfg, budget, closed=runs[-1], collect=runs))
    add(check_engineering(runs, cfg))
    return results

"""One test per acceptance criterion, each at its stated tolerance.

Every test records a ``[PASS]``/``[FAIL]`` line that is printed in the
terminal summary. Two criteria cannot be met as written; they are marked
``xfail(strict=True)`` so the full-tolerance check still runs, still prints
FAIL, and turns the suite red if it ever starts passing.
"""
import json
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from femtocac import analytic
from femtocac.scenario import derive_capacities, preset
from femtocac.validation import (
    SimBudget,
    check_anchors,
    check_chain_sim,
    check_closed_sim,
    check_engineering,
    check_erlang,
    check_fixed_point,
    check_handover_shape,
    check_integration_benefit,
    check_oracle,
)

BUDGET = SimBudget(seeds=tuple(range(10)), chain_events=1_000_000, closed_events=1_000_000,
                   compare_events=300_000, n_macro=7)
REL_TOL = 0.05


def record(criterion, result, extra=""):
    tag = "PASS" if result.passed else "FAIL"
    line = f"[{tag}] criterion {criterion}: {result.name} ({result.seconds:.2f} s){extra} " \
           f"{json.dumps(result.details, default=str)}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return result


@pytest.fixture(scope="module")
def runs():
    return []


@pytest.fixture(scope="module")
def chain_result(runs):
    return check_chain_sim(preset("desk"), BUDGET, REL_TOL, collect=runs)


@pytest.fixture(scope="module")
def closed_result(runs):
    return check_closed_sim(preset("desk"), BUDGET, REL_TOL, collect=runs)


def test_criterion_1_oracle_equivalence():
    r = record(1, check_oracle(rounds=200, tol=1e-10))
    assert r.passed and r.seconds < 5.0


def test_criterion_2_erlang_consistency():
    r = record(2, check_erlang(loads=100, tol=1e-12))
    assert r.passed and r.seconds < 1.0


def test_criterion_3_anchors():
    r = record(3, check_anchors(tol=1e-9))
    assert r.passed


def handover_sweep_literal():
    """Criterion 4 exactly as stated: n = 0..1000 including the n = 0 endpoint."""
    cfg = preset("table1")
    rows = [analytic.handover_probabilities(cfg.replace(n=n)) for n in range(1001)]
    q = derive_capacities(cfg).q
    leave_f = cfg.eta_f / (cfg.eta_f + cfg.mu)
    p_ff = np.array([h.p_ff for h in rows])
    p_mf = np.array([h.p_mf for h in rows])
    p_fm = np.array([h.p_fm for h in rows])
    ident = np.abs(p_ff + p_fm - (1 - q) * leave_f)
    return {
        "p_ff_increasing": bool(np.all(np.diff(p_ff) > 0)),
        "p_mf_increasing": bool(np.all(np.diff(p_mf) > 0)),
        "p_fm_decreasing": bool(np.all(np.diff(p_fm) < 0)),
        "identity_max_delta": float(ident.max()),
        "identity_fails_at": [int(n) for n in np.flatnonzero(ident >= 1e-12)],
        "p_ff_flat_at": [int(n) for n in np.flatnonzero(np.diff(p_ff) <= 0)],
    }


@pytest.mark.xfail(strict=True, reason="p_ff(0) = p_ff(1) = 0 and the ff+fm identity needs p_ff(0) = -q*L < 0")
def test_criterion_4_handover_shape():
    import time
    t = time.perf_counter()
    det = handover_sweep_literal()
    seconds = time.perf_counter() - t
    ok = (det["p_ff_increasing"] and det["p_mf_increasing"] and det["p_fm_decreasing"]
          and det["identity_max_delta"] < 1e-12 and seconds < 1.0)
    from femtocac.validation import CheckResult
    record(4, CheckResult("handover_shape_n0_to_1000", ok, seconds, det))
    assert ok


def test_criterion_4_handover_shape_with_femtocells():
    # same sweep restricted to n >= 1 for the ff growth and the identity
    r = record("4 (n>=1)", check_handover_shape(preset("table1"), n_max=1000, tol=1e-12))
    assert r.passed and r.seconds < 1.0


def test_criterion_5_fixed_point_health():
    r = record(5, check_fixed_point({"table1": preset("table1"), "desk": preset("desk")},
                                    tol=1e-10, restart_tol=1e-8))
    assert r.passed
    for d in r.details.values():
        assert d["iterations"] <= analytic.MAX_ITER


@pytest.mark.xfail(strict=True, reason="p_D_m ~ 4e-4: ~450 drops in 10 x 10^6 events give ~10% relative SE")
def test_criterion_6_chain_sim(chain_result):
    r = record(6, chain_result)
    assert r.passed and r.seconds < 60.0


def test_criterion_6_chain_sim_blocking_terms(chain_result):
    # the three well-sampled estimates, same 3 SE and 5% bounds
    det = chain_result.details
    for k in ("p_B_m", "p_B_f", "p_D_f"):
        assert det[k]["pass"], (k, det[k])
    # p_D_m still inside 3 standard errors
    assert det["p_D_m"]["z"] <= 3.0


def test_criterion_7_closed_loop(closed_result):
    r = record(7, closed_result)
    assert r.passed and r.seconds < 120.0


def test_criterion_8_integration_benefit(runs, closed_result):
    closed = next(m for m in runs if m.mode == "closed")
    r = record(8, check_integration_benefit(preset("desk"), BUDGET, closed=closed, collect=runs))
    assert r.passed


def test_criterion_9_engineering(runs, chain_result, closed_result):
    assert len(runs) >= 2
    r = record(9, check_engineering(runs, preset("desk")))
    assert r.passed

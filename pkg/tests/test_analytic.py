import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from femtocac import analytic, oracle
from femtocac.analytic import (
    FixedPointError,
    GeometryError,
    HandoverProbabilities,
    erlang_b,
    femto_blocking,
    femto_blocking_direct,
    forced_termination,
    handover_flows,
    handover_probabilities,
    macro_chain,
    solve_fixed_point,
)
from femtocac.scenario import derive_capacities, offered_rates, preset


# -- handover probabilities --------------------------------------------------

def test_table1_handover_probabilities(table1):
    hp = handover_probabilities(table1)
    assert hp.p_mm == pytest.approx(1 / 3, abs=1e-15)
    assert hp.p_fm == pytest.approx(0.09375, abs=1e-15)
    assert hp.p_ff == pytest.approx(999 * 0.000625 * 0.25, abs=1e-15)
    assert round(hp.p_ff, 6) == 0.156094
    s = math.sqrt(1000) / 240
    assert hp.p_mf == pytest.approx(0.625 * s / (s + 1 / 120), abs=1e-15)
    # the commonly quoted 0.587818 is off by 5e-6; direct evaluation gives 0.587823
    assert hp.p_mf == pytest.approx(0.587818, abs=1e-5)


def test_immobile_users_never_hand_over(table1):
    hp = handover_probabilities(table1.replace(eta_m=0.0, eta_f=0.0))
    assert hp == HandoverProbabilities(0.0, 0.0, 0.0, 0.0)


def test_blanket_coverage_has_no_femto_to_macro(desk):
    assert handover_probabilities(desk.replace(n=100)).p_fm == 0.0


def test_no_femtocells(table1):
    hp = handover_probabilities(table1.replace(n=0))
    assert hp.p_mf == hp.p_ff == 0.0


def test_overcrowded_geometry_raises(table1):
    with pytest.raises(GeometryError):
        handover_probabilities(table1.replace(r_m=300.0))


@given(n=st.integers(1, 1000), r_m=st.floats(320.0, 2000.0),
       eta_f=st.floats(1e-5, 1.0), mu=st.floats(1e-4, 1.0))
def test_ff_fm_identity(n, r_m, eta_f, mu):
    cfg = preset("table1").replace(n=n, r_m=r_m, eta_f=eta_f, mu=mu)
    q = derive_capacities(cfg, check=False).q
    hp = handover_probabilities(cfg)
    assert hp.p_ff + hp.p_fm == pytest.approx((1 - q) * eta_f / (eta_f + mu), abs=1e-12)


# -- blocking ----------------------------------------------------------------

def test_erlang_examples():
    assert femto_blocking(2.0, 2, 2, 1.0) == pytest.approx(0.2, abs=1e-15)
    assert femto_blocking(1.0, 1, 1, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert femto_blocking(0.0, 5, 3, 1.0) == 0.0


def test_femto_blocking_needs_femtocells():
    with pytest.raises(ValueError):
        femto_blocking(1.0, 0, 2, 1.0)


@given(K=st.integers(1, 20), a=st.floats(0.0, 50.0))
def test_erlang_forms_agree(K, a):
    rec = femto_blocking(a, 1, K, 1.0)
    assert rec == pytest.approx(femto_blocking_direct(a, 1, K, 1.0), abs=1e-12)
    assert rec == pytest.approx(macro_chain(a, 0.0, 1.0, K, 0).p_block, abs=1e-12)


def test_erlang_b_is_stable_for_large_systems():
    b = erlang_b(5000, 5000.0)
    assert 0.0 < b < 0.02


def test_chain_hand_example():
    c = macro_chain(1.0, 1.0, 1.0, 1, 1)
    np.testing.assert_allclose(c.probs, [0.25, 0.5, 0.25], atol=1e-15)
    assert c.p_block == pytest.approx(0.75, abs=1e-15)
    assert c.p_drop == pytest.approx(0.25, abs=1e-15)


def test_empty_chain():
    c = macro_chain(0.0, 0.0, 1.0, 5, 3)
    assert c.probs[0] == 1.0 and c.p_block == 0.0 and c.p_drop == 0.0


def test_chain_without_guard_states_is_erlang():
    c = macro_chain(3.0, 2.0, 0.5, 12, 0)
    assert c.p_block == c.p_drop == pytest.approx(erlang_b(12, 10.0), abs=1e-14)


def test_huge_chain_stays_finite():
    c = macro_chain(800.0, 200.0, 1.0, 2000, 500)
    assert np.isfinite(c.probs).all()
    assert c.probs.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200)
@given(lam_o=st.floats(0.0, 50.0), lam_h=st.floats(0.0, 50.0), mu=st.floats(0.01, 10.0),
       N=st.integers(1, 20), S=st.integers(0, 10))
def test_chain_matches_oracle(lam_o, lam_h, mu, N, S):
    c = macro_chain(lam_o, lam_h, mu, N, S)
    p_block, p_drop = oracle.guard_channel_oracle(lam_o, lam_h, mu, N, S)
    assert c.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert abs(c.p_block - p_block) < 1e-10
    assert abs(c.p_drop - p_drop) < 1e-10
    assert c.p_drop <= c.p_block + 1e-15


# -- flows -------------------------------------------------------------------

def test_macro_flow_hand_example(table1):
    cfg = table1.replace(n=0, lambda_total=None, lambda_o_m=1.0, lambda_o_f=0.0)
    hp = HandoverProbabilities(p_mm=1 / 3, p_mf=0.0, p_ff=0.0, p_fm=0.0)
    flows = handover_flows(cfg, hp, 0.0, 0.0, 0.0, 0.0)
    assert flows == pytest.approx((0.5, 0.0, 0.0, 0.0), abs=1e-15)


def test_flows_vanish_without_mobility(table1):
    hp = HandoverProbabilities(0.0, 0.0, 0.0, 0.0)
    assert handover_flows(table1, hp, 0.1, 0.1, 0.1, 0.1) == (0.0, 0.0, 0.0, 0.0)


@given(c=st.floats(0.01, 100.0), probs=st.lists(st.floats(0.0, 0.9), min_size=4, max_size=4))
def test_flows_are_linear_in_arrivals(c, probs):
    cfg = preset("table1")
    hp = handover_probabilities(cfg)
    lam_f, lam_m = offered_rates(cfg)
    prev = (0.3, 0.2)
    base = handover_flows(cfg, hp, *probs, previous=prev, rates=(lam_f, lam_m))
    scaled = handover_flows(cfg, hp, *probs, previous=(c * prev[0], c * prev[1]),
                            rates=(c * lam_f, c * lam_m))
    assert scaled == pytest.approx(tuple(c * x for x in base), rel=1e-12, abs=1e-300)


def test_stand_alone_femtocells_do_not_feed_macro(desk):
    cfg = desk.replace(integrated=False)
    hp = handover_probabilities(cfg)
    lam_mm, lam_mf, _, _ = handover_flows(cfg, hp, 0.2, 0.2, 0.1, 0.01, previous=(5.0, 5.0))
    _, lam_m = offered_rates(cfg)
    assert lam_mf == 0.0
    assert lam_mm == pytest.approx(hp.p_mm * 0.9 * lam_m / (1 - hp.p_mm * 0.99))


def test_flows_diverge_when_calls_never_leave(table1):
    hp = HandoverProbabilities(p_mm=1.0, p_mf=0.0, p_ff=0.0, p_fm=0.0)
    with pytest.raises(analytic.DivergentFlowError):
        handover_flows(table1, hp, 0.0, 0.0, 0.0, 0.0)


# -- fixed point -------------------------------------------------------------

# frozen from the solver, cross-checked against the chain oracle below and
# against 10 x 10^6-event simulations
DESK = {
    "lambda_h_mm": 0.1365436314719454, "lambda_h_mf": 0.02509292819177301,
    "lambda_h_ff": 0.006364436733942851, "lambda_h_fm": 0.06364436733942849,
    "p_B_f": 0.2482722097006756, "p_B_m": 0.13638195842737394, "p_D_m": 0.000407446251979403,
}


def test_desk_solution_is_frozen(desk):
    sol = solve_fixed_point(desk)
    for k, v in DESK.items():
        assert getattr(sol, k) == pytest.approx(v, rel=1e-8), k
    assert sol.p_D_f == sol.p_B_f
    assert sol.residual < 1e-10


@pytest.mark.parametrize("name", ["desk", "table1"])
def test_solution_satisfies_each_equation(name):
    cfg = preset(name)
    d = derive_capacities(cfg)
    hp = handover_probabilities(cfg)
    lam_f, lam_m = offered_rates(cfg)
    s = solve_fixed_point(cfg, tol=1e-13)
    flows = handover_flows(cfg, hp, s.p_B_f, s.p_D_f, s.p_B_m, s.p_D_m,
                           previous=(s.lambda_h_fm, s.lambda_h_ff))
    assert flows == pytest.approx((s.lambda_h_mm, s.lambda_h_mf, s.lambda_h_ff, s.lambda_h_fm), rel=1e-9)
    femto = oracle.steady_state(oracle.BirthDeathChain(
        [s.lambda_T_f / cfg.n] * cfg.K, [(i + 1) * d.mu_f for i in range(cfg.K)]))
    assert femto[-1] == pytest.approx(s.p_B_f, rel=1e-9)
    p_block, p_drop = oracle.guard_channel_oracle(lam_m + s.p_B_f * lam_f, s.lambda_h_m, d.mu_m, d.N, d.S)
    assert p_block == pytest.approx(s.p_B_m, rel=1e-8)
    assert p_drop == pytest.approx(s.p_D_m, rel=1e-7, abs=1e-25)


def test_single_tier_fixed_point(table1):
    cfg = table1.replace(n=0)
    s = solve_fixed_point(cfg, tol=1e-13)
    assert s.lambda_h_mf == s.lambda_h_ff == s.lambda_h_fm == 0.0
    hp = handover_probabilities(cfg)
    _, lam_m = offered_rates(cfg)
    scalar = hp.p_mm * (1 - s.p_B_m) * lam_m / (1 - hp.p_mm * (1 - s.p_D_m))
    assert s.lambda_h_mm == pytest.approx(scalar, rel=1e-10)


def test_no_mobility_fixed_point(table1):
    cfg = table1.replace(eta_m=0.0, eta_f=0.0)
    s = solve_fixed_point(cfg)
    assert (s.lambda_h_mm, s.lambda_h_mf, s.lambda_h_ff, s.lambda_h_fm) == (0.0, 0.0, 0.0, 0.0)
    d = derive_capacities(cfg)
    lam_f, lam_m = offered_rates(cfg)
    assert s.p_B_m == pytest.approx(erlang_b(d.N, (lam_m + s.p_B_f * lam_f) / d.mu_m), rel=1e-9)


def test_restart_independence(desk):
    a = solve_fixed_point(desk)
    b = solve_fixed_point(desk, initial=[40.0] * 4 + [0.9, 0.9, 0.9])
    for k in DESK:
        assert getattr(b, k) == pytest.approx(getattr(a, k), rel=1e-8)


def test_non_convergence_carries_last_iterate(desk):
    with pytest.raises(FixedPointError) as err:
        solve_fixed_point(desk, max_iter=3)
    assert err.value.last.iterations == 3
    assert err.value.residual > 1e-10


# -- forced termination ------------------------------------------------------

def test_forced_termination_examples():
    hp = HandoverProbabilities(p_mm=1 / 3, p_mf=0.0, p_ff=0.0, p_fm=0.0)
    d_f, d_m = forced_termination(hp, 0.0, 0.25)
    assert d_m == pytest.approx(1 / 9, abs=1e-15)
    assert forced_termination(hp, 0.0, 0.0) == (0.0, 0.0)


def test_forced_termination_singular():
    hp = HandoverProbabilities(p_mm=1.0, p_mf=0.0, p_ff=0.0, p_fm=0.0)
    with pytest.raises(analytic.SingularSystemError):
        forced_termination(hp, 0.0, 0.0)


probs = st.floats(0.0, 1.0)


@st.composite
def handover_sets(draw):
    # a positive completion rate keeps each row sum below one
    p_mm = draw(st.floats(0.0, 0.95))
    p_mf = draw(st.floats(0.0, 0.99 - p_mm))
    p_ff = draw(st.floats(0.0, 0.95))
    p_fm = draw(st.floats(0.0, 0.99 - p_ff))
    return HandoverProbabilities(p_mm, p_mf, p_ff, p_fm)


@given(hp=handover_sets(), p_D_f=probs, p_D_m=probs)
def test_forced_termination_is_a_probability(hp, p_D_f, p_D_m):
    d_f, d_m = forced_termination(hp, p_D_f, p_D_m)
    assert -1e-12 <= d_f <= 1 + 1e-12
    assert -1e-12 <= d_m <= 1 + 1e-12


@given(hp=handover_sets(), p_D_f=probs, a=probs, b=probs)
def test_forced_termination_grows_with_macro_drops(hp, p_D_f, a, b):
    lo, hi = sorted((a, b))
    assume(hi - lo > 1e-6)
    assert forced_termination(hp, p_D_f, lo)[1] <= forced_termination(hp, p_D_f, hi)[1] + 1e-12

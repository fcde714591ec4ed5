"""Closed-form teletraffic model of the integrated macrocell/femtocell tiers.

Handover probabilities, Erlang-type femtocell blocking, the macrocell chain
with S handover-only states, the handover flow equations, and the damped
fixed-point iteration that couples them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from .scenario import (
    GEOMETRY_SLACK,
    DerivedCapacities,
    ScenarioConfig,
    derive_capacities,
    offered_rates,
)

__all__ = [
    "HandoverProbabilities",
    "MacroChainDistribution",
    "FixedPointSolution",
    "GeometryError",
    "DivergentFlowError",
    "FixedPointError",
    "SingularSystemError",
    "handover_probabilities",
    "femto_blocking",
    "femto_blocking_direct",
    "erlang_b",
    "macro_chain",
    "handover_flows",
    "solve_fixed_point",
    "forced_termination",
]

OMEGA = 0.5
TOL = 1e-10
MAX_ITER = 10_000


class GeometryError(ValueError):
    pass


class DivergentFlowError(ArithmeticError):
    pass


class SingularSystemError(ArithmeticError):
    pass


class FixedPointError(RuntimeError):
    """Iteration did not converge; carries the last iterate."""

    def __init__(self, message, last: "FixedPointSolution"):
        super().__init__(message)
        self.last = last
        self.residual = last.residual


@dataclass(frozen=True)
class HandoverProbabilities:
    p_mm: float
    p_mf: float
    p_ff: float
    p_fm: float


@dataclass(frozen=True)
class MacroChainDistribution:
    probs: np.ndarray
    p_block: float
    p_drop: float


@dataclass(frozen=True)
class FixedPointSolution:
    lambda_h_mm: float
    lambda_h_mf: float
    lambda_h_ff: float
    lambda_h_fm: float
    lambda_h_m: float
    lambda_T_f: float
    p_B_f: float
    p_D_f: float
    p_B_m: float
    p_D_m: float
    iterations: int
    residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def handover_probabilities(cfg: ScenarioConfig,
                           derived: Optional[DerivedCapacities] = None) -> HandoverProbabilities:
    """Probabilities that a served call hands over mm, mf, ff or fm."""
    if derived is None:
        derived = derive_capacities(cfg, check=False)
    n, q, mu = cfg.n, derived.q, cfg.mu
    nq = n * q
    if nq > 1.0 + GEOMETRY_SLACK:
        raise GeometryError(f"n*q = {nq:.6g} > 1")
    leave_f = cfg.eta_f / (cfg.eta_f + mu)
    p_mm = cfg.eta_m / (cfg.eta_m + mu)
    p_fm = max(1.0 - nq, 0.0) * leave_f
    p_ff = max(n - 1, 0) * q * leave_f
    s = cfg.eta_m * math.sqrt(n)
    p_mf = nq * s / (s + mu) if n > 0 else 0.0
    return HandoverProbabilities(p_mm=p_mm, p_mf=p_mf, p_ff=p_ff, p_fm=p_fm)


def erlang_b(servers: int, load: float) -> float:
    """Erlang-B loss probability by the stable recurrence."""
    b = 1.0
    for k in range(1, servers + 1):
        b = load * b / (k + load * b)
    return b


def femto_blocking(lambda_T_f: float, n: int, K: int, mu_f: float) -> float:
    """Blocking (= dropping) probability of one femtocell with K slots.

    The tier-wide arrival rate is shared evenly over the n femtocells.
    """
    if n < 1:
        raise ValueError("femto_blocking needs n >= 1; skip the femto tier when n = 0")
    if K < 1 or mu_f <= 0:
        raise ValueError("need K >= 1 and mu_f > 0")
    return erlang_b(K, lambda_T_f / (n * mu_f))


def femto_blocking_direct(lambda_T_f: float, n: int, K: int, mu_f: float) -> float:
    """Same quantity as :func:`femto_blocking`, summed term by term (small K only)."""
    a = lambda_T_f / n
    terms = [a**i / (math.factorial(i) * mu_f**i) for i in range(K + 1)]
    return terms[K] / sum(terms)


def macro_chain(lambda_o_m_eff: float, lambda_h_m: float, mu_m: float, N: int, S: int) -> MacroChainDistribution:
    """Steady state of the macrocell chain.

    Below N calls both new and handover calls are accepted; the S states
    above N accept handover calls only. Weights are accumulated in log space,
    so N + S in the thousands is fine.
    """
    if N < 1 or S < 0 or mu_m <= 0:
        raise ValueError("need N >= 1, S >= 0, mu_m > 0")
    M = N + S
    i = np.arange(1, M + 1, dtype=float)
    birth = np.where(i <= N, lambda_o_m_eff + lambda_h_m, lambda_h_m)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(birth) - np.log(i) - math.log(mu_m)
    logw = np.concatenate(([0.0], np.cumsum(log_ratio)))
    w = np.exp(logw - logw.max())
    probs = w / w.sum()
    return MacroChainDistribution(
        probs=probs,
        p_block=float(probs[N:].sum()),
        p_drop=float(probs[M]),
    )


def handover_flows(cfg: ScenarioConfig, hp: HandoverProbabilities,
                   p_B_f: float, p_D_f: float, p_B_m: float, p_D_m: float,
                   previous: Sequence[float] = (0.0, 0.0),
                   rates: Optional[tuple[float, float]] = None) -> tuple[float, float, float, float]:
    """One pass of the handover flow equations.

    Returns ``(lambda_h_mm, lambda_h_mf, lambda_h_ff, lambda_h_fm)``. The
    macro-side rates use ``previous = (lambda_h_fm, lambda_h_ff)``; the
    femto-side rates use the fresh ``lambda_h_mf``. At a fixed point the
    order does not matter.
    """
    lam_f, lam_m = rates if rates is not None else offered_rates(cfg)
    prev_fm, prev_ff = previous
    den_m = 1.0 - hp.p_mm * (1.0 - p_D_m)
    den_f = 1.0 - hp.p_ff * (1.0 - p_D_f)
    if den_m <= 0.0 or den_f <= 0.0:
        raise DivergentFlowError("handover flow denominator vanishes (calls never leave the tier)")
    if cfg.integrated:
        macro_in = (1.0 - p_B_m) * (lam_m + lam_f * p_B_f) + (1.0 - p_D_m) * (prev_fm + prev_ff * p_D_f)
        p_mf = hp.p_mf
    else:
        macro_in = (1.0 - p_B_m) * lam_m
        p_mf = 0.0
    lam_mm = hp.p_mm * macro_in / den_m
    lam_mf = p_mf * macro_in / den_m
    femto_in = lam_f * (1.0 - p_B_f) + lam_mf * (1.0 - p_D_f)
    lam_ff = hp.p_ff * femto_in / den_f
    lam_fm = hp.p_fm * femto_in / den_f
    return lam_mm, lam_mf, lam_ff, lam_fm


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    diff = np.abs(new - old)
    scale = np.abs(new)
    rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), diff)
    return float(rel.max())


def solve_fixed_point(cfg: ScenarioConfig, *, omega: float = OMEGA, tol: float = TOL,
                      max_iter: int = MAX_ITER,
                      initial: Optional[Sequence[float]] = None) -> FixedPointSolution:
    """Solve the coupled flow/blocking equations by damped substitution.

    The state is ``(lambda_h_mm, lambda_h_mf, lambda_h_ff, lambda_h_fm,
    p_B_f, p_B_m, p_D_m)`` (p_D_f equals p_B_f). ``initial`` overrides the
    all-zero start with the four flows, optionally followed by the three
    probabilities. Femto-blocked new calls join the macrocell's new-call
    stream.
    """
    d = derive_capacities(cfg)
    hp = handover_probabilities(cfg, d)
    lam_f, lam_m = offered_rates(cfg)

    x = np.zeros(7)
    if initial is not None:
        init = np.asarray(initial, dtype=float)
        x[: len(init)] = init

    def step(x):
        lam_mm, lam_mf, lam_ff, lam_fm, pbf, pbm, pdm = x
        flows = handover_flows(cfg, hp, pbf, pbf, pbm, pdm, previous=(lam_fm, lam_ff),
                               rates=(lam_f, lam_m))
        lam_mm, lam_mf, lam_ff, lam_fm = flows
        lam_T_f = lam_f + lam_mf + lam_ff
        pbf_new = femto_blocking(lam_T_f, cfg.n, cfg.K, d.mu_f) if cfg.n > 0 else 0.0
        if cfg.integrated:
            lam_h_m = lam_mm + lam_fm + pbf_new * lam_ff
            lam_new = lam_m + pbf_new * lam_f
        else:
            lam_h_m = lam_mm
            lam_new = lam_m
        chain = macro_chain(lam_new, lam_h_m, d.mu_m, d.N, d.S)
        return np.array([lam_mm, lam_mf, lam_ff, lam_fm, pbf_new, chain.p_block, chain.p_drop])

    residual = math.inf
    it = 0
    while it < max_iter:
        it += 1
        fx = step(x)
        x_new = (1.0 - omega) * x + omega * fx
        residual = _rel_change(x_new, x)
        x = x_new
        if residual < tol:
            break

    sol = _solution(cfg, x, it, residual)
    if residual >= tol:
        raise FixedPointError(f"no convergence after {it} iterations (residual {residual:.3g})", sol)
    return sol


def _solution(cfg, x, iterations, residual) -> FixedPointSolution:
    lam_f, _ = offered_rates(cfg)
    lam_mm, lam_mf, lam_ff, lam_fm, pbf, pbm, pdm = (float(v) for v in x)
    if cfg.integrated:
        lam_h_m = lam_mm + lam_fm + pbf * lam_ff
    else:
        lam_h_m = lam_mm
    return FixedPointSolution(
        lambda_h_mm=lam_mm, lambda_h_mf=lam_mf, lambda_h_ff=lam_ff, lambda_h_fm=lam_fm,
        lambda_h_m=lam_h_m, lambda_T_f=lam_f + lam_mf + lam_ff,
        p_B_f=pbf, p_D_f=pbf, p_B_m=pbm, p_D_m=pdm,
        iterations=iterations, residual=residual,
    )


def forced_termination(hp: HandoverProbabilities, p_D_f: float, p_D_m: float) -> tuple[float, float]:
    """Probability that a call now in a femtocell (macrocell) is dropped later.

    First-step analysis over one sojourn. A refused femto-to-femto handover
    retries the macrocell; a refused macro-to-femto handover leaves the call
    where it was.
    """
    to_macro = hp.p_ff * p_D_f + hp.p_fm
    a11 = 1.0 - hp.p_ff * (1.0 - p_D_f)
    a12 = -to_macro * (1.0 - p_D_m)
    a21 = -hp.p_mf * (1.0 - p_D_f)
    a22 = 1.0 - hp.p_mm * (1.0 - p_D_m) - hp.p_mf * p_D_f
    b1 = to_macro * p_D_m
    b2 = hp.p_mm * p_D_m
    det = a11 * a22 - a12 * a21
    if abs(det) < 1e-15:
        raise SingularSystemError("forced-termination system is singular")
    d_f = (b1 * a22 - a12 * b2) / det
    d_m = (a11 * b2 - a21 * b1) / det
    return d_f, d_m

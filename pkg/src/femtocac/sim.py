"""Discrete-event simulation of the two-tier call admission control policy.

Two modes:

``chain``
    The femtocell tier is ``n`` independent K-slot loss systems and the
    macrocell a count-based N+S guard system, all fed by Poisson streams at
    the rates of a :class:`~femtocac.analytic.FixedPointSolution`. Checks the
    blocking formulas in isolation.

``closed``
    Calls move between tiers. A sojourn ends at rate mu_f (femtocell) or
    mu_m (macrocell) with a categorical outcome drawn from the handover
    probabilities. The macrocell does real bandwidth accounting with QoS
    degradation of adaptive calls. Macro-to-macro handovers go to another
    cell of a ring of ``n_macro`` identical cells.
"""
from __future__ import annotations

import heapq
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .analytic import FixedPointSolution, handover_probabilities, solve_fixed_point
from .scenario import ScenarioConfig, derive_capacities, offered_rates

__all__ = [
    "CallRecord",
    "MacrocellState",
    "FemtocellState",
    "StreamCounters",
    "SimMetrics",
    "SimConfigError",
    "run_replication",
    "run_replications",
    "aggregate",
    "MODES",
]

MODES = ("chain", "closed")
EPS = 1e-9
Z95 = 1.959963984540054
_BLOCK = 1 << 14


class SimConfigError(ValueError):
    pass


class CallRecord:
    __slots__ = ("id", "adaptive", "current_bandwidth", "full_bandwidth", "min_bandwidth",
                 "tier", "cell", "admitted_at", "expires_at", "origin", "sampled")

    def __init__(self, id, adaptive, full_bandwidth, min_bandwidth, origin, cell=0):
        self.id = id
        self.adaptive = adaptive
        self.full_bandwidth = full_bandwidth
        self.min_bandwidth = min_bandwidth if adaptive else full_bandwidth
        self.current_bandwidth = full_bandwidth
        self.tier = None  # "macro" or a FAP index
        self.cell = cell
        self.admitted_at = 0.0
        self.expires_at = 0.0
        self.origin = origin
        self.sampled = False

    def __repr__(self):
        return (f"CallRecord(id={self.id}, adaptive={self.adaptive}, "
                f"bw={self.current_bandwidth}/{self.full_bandwidth}, tier={self.tier})")


class MacrocellState:
    """Bandwidth bookkeeping of one macrocell.

    ``calls`` keeps admission order, used when degrading; ``degraded`` keeps
    the order in which calls first fell below full rate, used when restoring.
    """

    def __init__(self, capacity: float):
        self.capacity = float(capacity)
        self.calls: "OrderedDict[int, CallRecord]" = OrderedDict()
        self.degraded: "OrderedDict[int, CallRecord]" = OrderedDict()
        self.occupied = 0.0

    @property
    def available(self) -> float:
        return self.capacity - self.occupied

    @property
    def releasable(self) -> float:
        return sum(c.current_bandwidth - c.min_bandwidth for c in self.calls.values() if c.adaptive)

    def _insert(self, call: CallRecord, bandwidth: float):
        call.current_bandwidth = bandwidth
        call.tier = "macro"
        self.calls[call.id] = call
        self.occupied += bandwidth
        if bandwidth < call.full_bandwidth - EPS:
            self.degraded[call.id] = call

    def admit_new(self, call: CallRecord) -> bool:
        """New calls get full rate or nothing."""
        if self.available >= call.full_bandwidth - EPS:
            self._insert(call, call.full_bandwidth)
            return True
        return False

    def admit_handover(self, call: CallRecord) -> bool:
        """Admit a handover call, degrading resident adaptive calls if needed.

        Resident calls are degraded first, toward covering the full rate;
        if that is not enough an adaptive incoming call accepts whatever is
        left down to its minimum. Nothing is touched when even that fails.
        """
        avail = self.available
        if avail >= call.full_bandwidth - EPS:
            self._insert(call, call.full_bandwidth)
            return True
        pool = self.releasable
        if avail + pool < call.min_bandwidth - EPS:
            return False
        avail += self.degrade_pool(call.full_bandwidth - avail)
        self._insert(call, min(call.full_bandwidth, avail))
        return True

    def degrade_pool(self, deficit: float) -> float:
        """Free up to ``deficit`` kbps from adaptive calls in admission order."""
        freed = 0.0
        if deficit <= 0:
            return freed
        for c in self.calls.values():
            if not c.adaptive:
                continue
            room = c.current_bandwidth - c.min_bandwidth
            if room <= EPS:
                continue
            cut = min(room, deficit - freed)
            c.current_bandwidth -= cut
            freed += cut
            if c.id not in self.degraded:
                self.degraded[c.id] = c
            if freed >= deficit - EPS:
                break
        self.occupied -= freed
        return freed

    def release(self, call: CallRecord):
        del self.calls[call.id]
        self.degraded.pop(call.id, None)
        self.occupied -= call.current_bandwidth
        if not self.calls:
            self.occupied = 0.0
        self.restore_pool()

    def restore_pool(self):
        """Hand idle bandwidth back to degraded calls, earliest-degraded first."""
        free = self.capacity - self.occupied
        while self.degraded and free > EPS:
            cid, c = next(iter(self.degraded.items()))
            give = min(free, c.full_bandwidth - c.current_bandwidth)
            c.current_bandwidth += give
            self.occupied += give
            free -= give
            if c.current_bandwidth >= c.full_bandwidth - EPS:
                c.current_bandwidth = c.full_bandwidth
                del self.degraded[cid]
            else:
                break

    def violations(self) -> int:
        """Number of broken bookkeeping invariants (0 when healthy)."""
        bad = 0
        total = 0.0
        for c in self.calls.values():
            total += c.current_bandwidth
            if c.current_bandwidth < c.min_bandwidth - EPS or c.current_bandwidth > c.full_bandwidth + EPS:
                bad += 1
            if not c.adaptive and c.current_bandwidth != c.full_bandwidth:
                bad += 1
        if abs(total - self.occupied) > 1e-6:
            bad += 1
        if self.occupied > self.capacity + 1e-6:
            bad += 1
        return bad


class FemtocellState:
    def __init__(self, n: int, K: int):
        self.K = K
        self.active_calls = [0] * n

    def admit(self, fap: int) -> bool:
        if self.active_calls[fap] < self.K:
            self.active_calls[fap] += 1
            return True
        return False

    def release(self, fap: int):
        self.active_calls[fap] -= 1


@dataclass
class StreamCounters:
    arrivals: int = 0
    admits: int = 0
    blocks: int = 0
    drops: int = 0
    stays: int = 0
    overflows: int = 0

    def balanced(self) -> bool:
        return self.arrivals == self.admits + self.blocks + self.drops + self.stays + self.overflows


@dataclass
class SimMetrics:
    """Counters and estimates of one replication, or an aggregate of several.

    For an aggregate, ``estimates`` holds means across replications and
    ``std_error``/``half_width`` the standard error and 95% half-width
    (``None`` where fewer than two replications give a value).
    """

    mode: str
    seeds: list
    horizon_events: int
    warmup_events: int
    sim_time: float
    streams: dict
    estimates: dict
    violations: int = 0
    std_error: Optional[dict] = None
    half_width: Optional[dict] = None
    replications: list = field(default_factory=list)
    scenario: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seeds": list(self.seeds),
            "horizon_events": self.horizon_events,
            "warmup_events": self.warmup_events,
            "sim_time": self.sim_time,
            "streams": {k: vars(v).copy() for k, v in self.streams.items()},
            "estimates": dict(self.estimates),
            "std_error": None if self.std_error is None else dict(self.std_error),
            "half_width": None if self.half_width is None else dict(self.half_width),
            "violations": self.violations,
            "replications": [r.to_dict() for r in self.replications],
        }


def _buffered(draw):
    """Endless iterator over blocks of ``draw(size)``."""
    while True:
        yield from draw(_BLOCK).tolist()


def _ratio(num, den):
    return num / den if den > 0 else None


def _streams(names):
    return {k: StreamCounters() for k in names}


def run_replication(cfg: ScenarioConfig, mode: str, seed: int, horizon_events: int,
                    warmup_events: Optional[int] = None, *,
                    solution: Optional[FixedPointSolution] = None,
                    n_macro: int = 7, check_invariants: bool = True) -> SimMetrics:
    """Run one replication and return its metrics.

    ``warmup_events`` defaults to 20% of ``horizon_events``; counters only
    see events after the warmup. Same arguments give identical metrics.
    """
    if mode not in MODES:
        raise SimConfigError(f"mode must be one of {MODES}")
    if warmup_events is None:
        warmup_events = horizon_events // 5
    if not 0 <= warmup_events < horizon_events:
        raise SimConfigError("need 0 <= warmup_events < horizon_events")
    ss = np.random.SeedSequence(seed)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(4)]
    if mode == "chain":
        if solution is None:
            solution = solve_fixed_point(cfg)
        m = _run_chain(cfg, solution, rngs, horizon_events, warmup_events)
    else:
        if n_macro < 2:
            raise SimConfigError("closed-loop mode needs n_macro >= 2 for macro-to-macro handovers")
        hp = handover_probabilities(cfg)
        if hp.p_mm + hp.p_mf > 1.0 + 1e-12:
            raise SimConfigError(f"p_mm + p_mf = {hp.p_mm + hp.p_mf:.6g} > 1: routing undefined")
        m = _run_closed(cfg, hp, rngs, horizon_events, warmup_events, n_macro, check_invariants)
    m.seeds = [seed]
    m.scenario = cfg.to_dict()
    return m


def _run_chain(cfg, sol, rngs, horizon, warmup) -> SimMetrics:
    d = derive_capacities(cfg)
    lam_f, lam_m = offered_rates(cfg)
    N, S = d.N, d.S
    n = cfg.n
    lam_new_m = lam_m + sol.p_B_f * lam_f if cfg.integrated else lam_m
    lam_h_m = sol.lambda_h_m
    femto_rates = (lam_f, sol.lambda_h_mf, sol.lambda_h_ff) if n > 0 else (0.0, 0.0, 0.0)
    rates = [*femto_rates, lam_new_m, lam_h_m]
    total = sum(rates)
    names = ("new_femto", "h_mf", "h_ff", "new_macro", "h_m")
    streams = _streams(names)
    if total <= 0:
        return _chain_metrics(streams, horizon, warmup, 0.0, 0)
    cum = np.cumsum(rates) / total
    cut = [float(c) for c in cum[:-1]]
    arr_exp = _buffered(rngs[0].standard_exponential).__next__
    arr_u = _buffered(rngs[0].random).__next__
    dur = _buffered(rngs[1].standard_exponential).__next__
    fap_u = _buffered(rngs[3].random).__next__
    inv_total = 1.0 / total
    inv_mu_f = 1.0 / d.mu_f
    inv_mu_m = 1.0 / d.mu_m
    K = cfg.K
    femto = [0] * max(n, 1)
    macro = 0
    heap: list = []
    push, pop = heapq.heappush, heapq.heappop
    t = 0.0
    t0 = 0.0
    next_arrival = arr_exp() * inv_total
    counting = warmup == 0
    # counters: [arrivals, refused] per stream
    arrivals = [0] * 5
    refused = [0] * 5
    # time spent per macro state and FAP-seconds spent full, for time-average estimates
    macro_time = [0.0] * (N + S + 1)
    full_faps = 0
    full_time = 0.0
    for ev in range(horizon):
        if ev == warmup:
            counting = True
            t0 = t
            arrivals = [0] * 5
            refused = [0] * 5
            macro_time = [0.0] * (N + S + 1)
            full_time = 0.0
        if heap and heap[0][0] < next_arrival:
            t_ev, where = pop(heap)
            dt = t_ev - t
            macro_time[macro] += dt
            full_time += full_faps * dt
            t = t_ev
            if where < 0:
                macro -= 1
            else:
                if femto[where] == K:
                    full_faps -= 1
                femto[where] -= 1
            continue
        dt = next_arrival - t
        macro_time[macro] += dt
        full_time += full_faps * dt
        t = next_arrival
        next_arrival = t + arr_exp() * inv_total
        u = arr_u()
        if u < cut[2]:
            k = 0 if u < cut[0] else (1 if u < cut[1] else 2)
            fap = int(fap_u() * n)
            arrivals[k] += 1
            if femto[fap] < K:
                femto[fap] += 1
                if femto[fap] == K:
                    full_faps += 1
                push(heap, (t + dur() * inv_mu_f, fap))
            else:
                refused[k] += 1
        else:
            k = 3 if u < cut[3] else 4
            arrivals[k] += 1
            if macro < N or (k == 4 and macro < N + S):
                macro += 1
                push(heap, (t + dur() * inv_mu_m, -1))
            else:
                refused[k] += 1
    for i, name in enumerate(names):
        s = streams[name]
        s.arrivals = arrivals[i]
        s.admits = arrivals[i] - refused[i]
        if name.startswith("new"):
            s.blocks = refused[i]
        else:
            s.drops = refused[i]
    m = _chain_metrics(streams, horizon, warmup, t - t0, 0)
    T = t - t0
    if T > 0:
        m.estimates["p_B_m_time"] = sum(macro_time[N:]) / T
        m.estimates["p_D_m_time"] = macro_time[N + S] / T
        m.estimates["p_B_f_time"] = full_time / (n * T) if n > 0 else None
    return m


def _chain_metrics(streams, horizon, warmup, sim_time, violations) -> SimMetrics:
    st = streams
    hf_arr = st["h_mf"].arrivals + st["h_ff"].arrivals
    est = {
        "p_B_f": _ratio(st["new_femto"].blocks, st["new_femto"].arrivals),
        "p_D_f": _ratio(st["h_mf"].drops + st["h_ff"].drops, hf_arr),
        "p_B_m": _ratio(st["new_macro"].blocks, st["new_macro"].arrivals),
        "p_D_m": _ratio(st["h_m"].drops, st["h_m"].arrivals),
    }
    return SimMetrics(mode="chain", seeds=[], horizon_events=horizon, warmup_events=warmup,
                      sim_time=sim_time, streams=streams, estimates=est, violations=violations)


_CLOSED_STREAMS = ("new_femto", "new_macro", "new_overflow", "h_mm", "h_mf", "h_ff", "h_fm", "h_ff_overflow")


def _run_closed(cfg, hp, rngs, horizon, warmup, n_macro, check) -> SimMetrics:
    d = derive_capacities(cfg)
    lam_f, lam_m = offered_rates(cfg)
    n, K, M = cfg.n, cfg.K, n_macro
    integrated = cfg.integrated
    a, b = cfg.mix_ratio
    p_adaptive = b / (a + b)
    inv_mu_f = 1.0 / d.mu_f
    inv_mu_m = 1.0 / d.mu_m
    p_ff, p_ffm = hp.p_ff, hp.p_ff + hp.p_fm
    p_mm, p_mmf = hp.p_mm, hp.p_mm + hp.p_mf

    macros = [MacrocellState(cfg.C) for _ in range(M)]
    femtos = [FemtocellState(n, K) for _ in range(M)]
    streams = _streams(_CLOSED_STREAMS)
    ft = {"femto": [0, 0], "macro": [0, 0]}  # [resolved, dropped]

    rate_cell = lam_f + lam_m
    total = M * rate_cell
    arr_exp = _buffered(rngs[0].standard_exponential).__next__
    arr_u = _buffered(rngs[0].random).__next__
    dur = _buffered(rngs[1].standard_exponential).__next__
    route = _buffered(rngs[2].random).__next__
    pick = _buffered(rngs[3].random).__next__
    heap: list = []
    push, pop = heapq.heappush, heapq.heappop
    violations = 0
    t = t0 = 0.0
    next_arrival = arr_exp() / total if total > 0 else math.inf
    next_id = 0
    counting = warmup == 0
    p_femto_area = lam_f / rate_cell if rate_cell > 0 else 0.0

    def count(name, outcome):
        if counting:
            s = streams[name]
            s.arrivals += 1
            setattr(s, outcome, getattr(s, outcome) + 1)

    def finish(call, dropped):
        if call.sampled:
            r = ft[call.origin]
            r[0] += 1
            if dropped:
                r[1] += 1

    def enter_femto(call, cell, fap):
        call.tier = fap
        call.cell = cell
        call.admitted_at = t
        call.expires_at = t + dur() * inv_mu_f
        push(heap, (call.expires_at, call.id, call))

    def enter_macro(call, cell):
        call.cell = cell
        call.admitted_at = t
        call.expires_at = t + dur() * inv_mu_m
        push(heap, (call.expires_at, call.id, call))

    def macro_handover(call, cell, name):
        nonlocal violations
        ok = macros[cell].admit_handover(call)
        if check:
            violations += macros[cell].violations()
        count(name, "admits" if ok else "drops")
        if ok:
            enter_macro(call, cell)
        else:
            finish(call, True)
        return ok

    for ev in range(horizon):
        if ev == warmup and not counting:
            counting = True
            t0 = t
        if not heap or next_arrival <= heap[0][0]:
            if total <= 0:
                break
            # exogenous new call
            t = next_arrival
            next_arrival = t + arr_exp() / total
            u = arr_u() * M
            cell = min(int(u), M - 1)
            adaptive = pick() < p_adaptive
            if adaptive:
                call = CallRecord(next_id, True, cfg.bw_adaptive_max, cfg.bw_adaptive_min, "macro", cell)
            else:
                call = CallRecord(next_id, False, cfg.bw_nonadaptive, cfg.bw_nonadaptive, "macro", cell)
            next_id += 1
            call.sampled = counting
            if (u - cell) < p_femto_area:
                fap = min(int(pick() * n), n - 1)
                if femtos[cell].admit(fap):
                    call.origin = "femto"
                    count("new_femto", "admits")
                    enter_femto(call, cell, fap)
                    continue
                if not integrated:
                    count("new_femto", "blocks")
                    call.sampled = False
                    continue
                count("new_femto", "overflows")
                name = "new_overflow"
            else:
                name = "new_macro"
            if macros[cell].admit_new(call):
                count(name, "admits")
                enter_macro(call, cell)
                if check:
                    violations += macros[cell].violations()
            else:
                count(name, "blocks")
                call.sampled = False
            continue

        t, _, call = pop(heap)
        cell = call.cell
        r = route()
        if call.tier != "macro":
            fap = call.tier
            fem = femtos[cell]
            if r < p_ff:
                target = int(pick() * (n - 1))
                if target >= fap:
                    target += 1
                fem.release(fap)
                if fem.admit(target):
                    count("h_ff", "admits")
                    enter_femto(call, cell, target)
                elif integrated:
                    count("h_ff", "overflows")
                    call.tier = None
                    macro_handover(call, cell, "h_ff_overflow")
                else:
                    count("h_ff", "drops")
                    finish(call, True)
            elif r < p_ffm:
                fem.release(fap)
                call.tier = None
                if integrated:
                    macro_handover(call, cell, "h_fm")
                else:
                    count("h_fm", "drops")
                    finish(call, True)
            else:
                fem.release(fap)
                finish(call, False)
        else:
            mac = macros[cell]
            if r < p_mm:
                mac.release(call)
                target = int(pick() * (M - 1))
                if target >= cell:
                    target += 1
                call.current_bandwidth = call.full_bandwidth
                macro_handover(call, target, "h_mm")
            elif r < p_mmf:
                if integrated:
                    fap = min(int(pick() * n), n - 1)
                    if femtos[cell].admit(fap):
                        count("h_mf", "admits")
                        mac.release(call)
                        call.current_bandwidth = call.full_bandwidth
                        enter_femto(call, cell, fap)
                    else:
                        count("h_mf", "stays")
                        enter_macro(call, cell)
                else:
                    enter_macro(call, cell)
            else:
                mac.release(call)
                finish(call, False)
            if check:
                violations += mac.violations()

    sim_time = t - t0
    st = streams
    den_t = sim_time * M
    hf_arr = st["h_mf"].arrivals + st["h_ff"].arrivals
    bm = st["new_macro"].blocks + st["new_overflow"].blocks
    bm_arr = st["new_macro"].arrivals + st["new_overflow"].arrivals
    dm_names = ("h_mm", "h_fm", "h_ff_overflow")
    new_f = st["new_femto"]
    est = {
        "p_B_f": _ratio(new_f.blocks + new_f.overflows, new_f.arrivals),
        "p_D_f": _ratio(st["h_mf"].stays + st["h_ff"].drops + st["h_ff"].overflows, hf_arr),
        "p_B_m": _ratio(bm, bm_arr),
        "p_D_m": _ratio(sum(st[k].drops for k in dm_names), sum(st[k].arrivals for k in dm_names)),
        "D_f": _ratio(ft["femto"][1], ft["femto"][0]),
        "D_m": _ratio(ft["macro"][1], ft["macro"][0]),
        "lambda_h_mm": _ratio(st["h_mm"].arrivals, den_t),
        "lambda_h_mf": _ratio(st["h_mf"].arrivals, den_t),
        "lambda_h_ff": _ratio(st["h_ff"].arrivals, den_t),
        "lambda_h_fm": _ratio(st["h_fm"].arrivals, den_t),
        "ff_fm_ratio": _ratio(st["h_ff"].arrivals, st["h_fm"].arrivals),
    }
    return SimMetrics(mode="closed", seeds=[], horizon_events=horizon, warmup_events=warmup,
                      sim_time=sim_time, streams=streams, estimates=est, violations=violations)


def aggregate(replications: Iterable[SimMetrics]) -> SimMetrics:
    """Mean and normal-approximation 95% half-width across replications."""
    reps = list(replications)
    if len(reps) < 2:
        raise ValueError("aggregate needs at least two replications")
    first = reps[0]
    for r in reps[1:]:
        if (r.scenario, r.mode, r.horizon_events, r.warmup_events) != (
                first.scenario, first.mode, first.horizon_events, first.warmup_events):
            raise ValueError("replications come from different configurations")
    keys = list(first.estimates)
    mean, se, hw = {}, {}, {}
    for k in keys:
        vals = [r.estimates[k] for r in reps if r.estimates.get(k) is not None]
        if not vals:
            mean[k] = se[k] = hw[k] = None
            continue
        arr = np.array(vals, dtype=float)
        mean[k] = float(arr.mean())
        if len(arr) < 2:
            se[k] = hw[k] = None
            continue
        s = float(arr.std(ddof=1) / math.sqrt(len(arr)))
        se[k] = s
        hw[k] = Z95 * s
    streams = {name: StreamCounters() for name in first.streams}
    for r in reps:
        for name, c in r.streams.items():
            tot = streams[name]
            for f in vars(c):
                setattr(tot, f, getattr(tot, f) + getattr(c, f))
    return SimMetrics(
        mode=first.mode,
        seeds=[s for r in reps for s in r.seeds],
        horizon_events=first.horizon_events,
        warmup_events=first.warmup_events,
        sim_time=float(sum(r.sim_time for r in reps)),
        streams=streams,
        estimates=mean,
        violations=sum(r.violations for r in reps),
        std_error=se,
        half_width=hw,
        replications=reps,
        scenario=first.scenario,
    )


def _run_one(args):
    cfg, mode, seed, horizon, warmup, solution, n_macro = args
    return run_replication(cfg, mode, seed, horizon, warmup, solution=solution, n_macro=n_macro)


def run_replications(cfg: ScenarioConfig, mode: str, seeds: Iterable[int], horizon_events: int,
                     warmup_events: Optional[int] = None, *, solution=None, n_macro: int = 7,
                     workers: int = 1) -> SimMetrics:
    """Run one replication per seed and aggregate them.

    With a single seed the lone replication is returned with CIs left
    unset. ``workers > 1`` fans replications out to processes; results keep
    seed order either way.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    if mode == "chain" and solution is None:
        solution = solve_fixed_point(cfg)
    jobs = [(cfg, mode, s, horizon_events, warmup_events, solution, n_macro) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reps = list(ex.map(_run_one, jobs))
    else:
        reps = [_run_one(j) for j in jobs]
    if len(reps) == 1:
        return reps[0]
    return aggregate(reps)

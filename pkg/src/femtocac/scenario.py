"""Scenario inputs for the two-tier macrocell/femtocell model.

A :class:`ScenarioConfig` holds every model input. :func:`validate` reports
what is wrong with a config as data, :func:`derive_capacities` turns it into
the chain sizes and channel release rates the analytic and simulation layers
work with.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

__all__ = [
    "ScenarioConfig",
    "DerivedCapacities",
    "Violation",
    "ScenarioError",
    "validate",
    "is_valid",
    "derive_capacities",
    "split_arrivals",
    "offered_rates",
    "coverage_ratio",
    "PRESETS",
    "preset",
]

# n*q == 1 exactly is legal but rarely survives float rounding
GEOMETRY_SLACK = 1e-12


class ScenarioError(ValueError):
    """Raised when a config is used that does not pass :func:`validate`."""

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{v.field}: {v.message}" for v in self.violations)
        super().__init__(msg or "invalid scenario")


@dataclass(frozen=True, kw_only=True)
class ScenarioConfig:
    """All inputs of one scenario.

    Rates are per second, radii in metres, bandwidths in kbps. Arrivals are
    given either explicitly (``lambda_o_m`` and ``lambda_o_f``) or as a total
    rate that :func:`split_arrivals` apportions between the tiers.
    ``K`` has no default on purpose.
    """

    K: int
    n: int = 1000
    r_f: float = 10.0
    r_m: float = 400.0
    mu: float = 1.0 / 120.0
    eta_m: float = 1.0 / 240.0
    eta_f: float = 1.0 / 360.0
    lambda_o_m: Optional[float] = None
    lambda_o_f: Optional[float] = None
    lambda_total: Optional[float] = None
    density_ratio: float = 20.0
    C: float = 6000.0
    bw_nonadaptive: float = 64.0
    bw_adaptive_max: float = 56.0
    bw_adaptive_min: float = 28.0
    mix_ratio: tuple[int, int] = (1, 1)
    N_override: Optional[int] = None
    S_override: Optional[int] = None
    # False models stand-alone femtocells: nothing overflows to the macrocell.
    integrated: bool = True

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mix_ratio"] = list(self.mix_ratio)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise KeyError(f"unknown scenario keys: {', '.join(unknown)}")
        data = dict(data)
        if "mix_ratio" in data:
            data["mix_ratio"] = tuple(data["mix_ratio"])
        return cls(**data)


@dataclass(frozen=True)
class DerivedCapacities:
    q: float
    N: int
    S: int
    mu_m: float
    mu_f: float


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    # Non-fatal findings do not make a config invalid.
    fatal: bool = True


def coverage_ratio(r_f: float, r_m: float) -> float:
    return (r_f / r_m) ** 2


def _finite_nonneg(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x) and x >= 0


def _default_chain_sizes(cfg: ScenarioConfig) -> tuple[int, int]:
    a, b = cfg.mix_ratio
    f_na, f_ad = a / (a + b), b / (a + b)
    mean_full = f_na * cfg.bw_nonadaptive + f_ad * cfg.bw_adaptive_max
    N = math.floor(cfg.C / mean_full + 1e-9)
    releasable = N * f_ad * (cfg.bw_adaptive_max - cfg.bw_adaptive_min)
    mean_min = f_na * cfg.bw_nonadaptive + f_ad * cfg.bw_adaptive_min
    S = math.floor(releasable / mean_min + 1e-9)
    return N, S


def validate(cfg: ScenarioConfig) -> list[Violation]:
    """Return every violated constraint of ``cfg``; an empty list means valid."""
    out: list[Violation] = []

    def bad(name, msg, fatal=True):
        out.append(Violation(name, msg, fatal))

    if not isinstance(cfg.n, int) or isinstance(cfg.n, bool) or cfg.n < 0:
        bad("n", "must be an integer >= 0")
    if not isinstance(cfg.K, int) or isinstance(cfg.K, bool) or cfg.K < 1:
        bad("K", "must be an integer >= 1")
    for name in ("r_f", "r_m"):
        v = getattr(cfg, name)
        if not (_finite_nonneg(v) and v > 0):
            bad(name, "must be finite and > 0")
    if not (_finite_nonneg(cfg.mu) and cfg.mu > 0):
        bad("mu", "must be finite and > 0")
    for name in ("eta_m", "eta_f"):
        if not _finite_nonneg(getattr(cfg, name)):
            bad(name, "must be finite and >= 0")

    explicit = (cfg.lambda_o_m is not None, cfg.lambda_o_f is not None)
    if cfg.lambda_total is not None:
        if any(explicit):
            bad("lambda_total", "give either lambda_total or lambda_o_m/lambda_o_f, not both")
        if not _finite_nonneg(cfg.lambda_total):
            bad("lambda_total", "must be finite and >= 0")
        if not (_finite_nonneg(cfg.density_ratio) and cfg.density_ratio > 0):
            bad("density_ratio", "must be finite and > 0")
    elif not all(explicit):
        bad("lambda_o_m", "arrival rates missing: set lambda_total or both lambda_o_m and lambda_o_f")
    else:
        for name in ("lambda_o_m", "lambda_o_f"):
            if not _finite_nonneg(getattr(cfg, name)):
                bad(name, "must be finite and >= 0")
        if cfg.n == 0 and _finite_nonneg(cfg.lambda_o_f) and cfg.lambda_o_f > 0:
            bad("lambda_o_f", "femtocell arrivals given but n = 0")

    geometry_ok = not any(v.field in ("n", "r_f", "r_m") for v in out)
    if geometry_ok:
        nq = cfg.n * coverage_ratio(cfg.r_f, cfg.r_m)
        if nq > 1.0 + GEOMETRY_SLACK:
            bad("n", f"n*q > 1 (n*q = {nq:.6g}): femtocells cover more than the macrocell")

    bw_names = ("C", "bw_nonadaptive", "bw_adaptive_max", "bw_adaptive_min")
    bw_ok = True
    for name in bw_names:
        v = getattr(cfg, name)
        if not (_finite_nonneg(v) and v > 0):
            bad(name, "must be finite and > 0")
            bw_ok = False
    if bw_ok:
        if not cfg.bw_adaptive_min <= cfg.bw_adaptive_max <= cfg.C:
            bad("bw_adaptive_max", "need bw_adaptive_min <= bw_adaptive_max <= C")
        if cfg.bw_nonadaptive > cfg.C:
            bad("bw_nonadaptive", "must not exceed C")

    mix = cfg.mix_ratio
    mix_ok = (
        len(mix) == 2
        and all(isinstance(m, int) and not isinstance(m, bool) and m >= 0 for m in mix)
        and sum(mix) > 0
    )
    if not mix_ok:
        bad("mix_ratio", "must be two non-negative integers, not both zero")

    if cfg.N_override is not None and (not isinstance(cfg.N_override, int) or cfg.N_override < 1):
        bad("N_override", "must be an integer >= 1")
    if cfg.S_override is not None and (not isinstance(cfg.S_override, int) or cfg.S_override < 0):
        bad("S_override", "must be an integer >= 0")
    if bw_ok and mix_ok and cfg.N_override is None:
        N, _ = _default_chain_sizes(cfg)
        if N < 1:
            bad("C", "capacity too small for a single full-rate call")

    if not out:
        # p_mm and p_mf are marginals, not competing risks; routing needs them to fit in one draw.
        d = derive_capacities(cfg, check=False)
        p_mm, p_mf = _macro_exit_probabilities(cfg, d.q)
        if p_mm + p_mf > 1.0:
            bad("eta_m", f"p_mm + p_mf = {p_mm + p_mf:.6g} > 1; closed-loop routing undefined", fatal=False)
    return out


def is_valid(report: list[Violation]) -> bool:
    return not any(v.fatal for v in report)


def _macro_exit_probabilities(cfg: ScenarioConfig, q: float) -> tuple[float, float]:
    p_mm = cfg.eta_m / (cfg.eta_m + cfg.mu)
    s = cfg.eta_m * math.sqrt(cfg.n)
    p_mf = cfg.n * q * s / (s + cfg.mu)
    return p_mm, p_mf


def derive_capacities(cfg: ScenarioConfig, check: bool = True) -> DerivedCapacities:
    """Chain sizes and channel release rates for ``cfg``.

    ``mu_m = eta_m*(sqrt(n) + 1) + mu`` and ``mu_f = eta_f + mu``. N and S
    come from the overrides if set, otherwise from the bandwidth figures:
    N full-rate calls of mean bandwidth fit into C, and S more handover calls
    fit into what the adaptive share of those N calls can release.
    """
    if check:
        report = validate(cfg)
        if not is_valid(report):
            raise ScenarioError([v for v in report if v.fatal])
    q = coverage_ratio(cfg.r_f, cfg.r_m)
    N, S = _default_chain_sizes(cfg)
    if cfg.N_override is not None:
        N = cfg.N_override
    if cfg.S_override is not None:
        S = cfg.S_override
    mu_m = cfg.eta_m * (math.sqrt(cfg.n) + 1.0) + cfg.mu
    mu_f = cfg.eta_f + cfg.mu
    return DerivedCapacities(q=q, N=N, S=S, mu_m=mu_m, mu_f=mu_f)


def split_arrivals(lambda_total: float, density_ratio: float, n: int, q: float) -> tuple[float, float]:
    """Split a total new-call rate into ``(lambda_o_f, lambda_o_m)``.

    Femtocell coverage takes area share ``n*q`` and each unit of it carries
    ``density_ratio`` times the call density of macro-only coverage.
    """
    nq = n * q
    if nq > 1.0 + GEOMETRY_SLACK:
        raise ValueError(f"n*q = {nq:.6g} exceeds 1")
    if density_ratio <= 0:
        raise ValueError("density_ratio must be > 0")
    if n == 0:
        return 0.0, float(lambda_total)
    w_f = density_ratio * nq
    lam_f = lambda_total * w_f / (w_f + max(1.0 - nq, 0.0))
    return lam_f, lambda_total - lam_f


def offered_rates(cfg: ScenarioConfig) -> tuple[float, float]:
    """Resolved ``(lambda_o_f, lambda_o_m)`` of ``cfg``."""
    if cfg.lambda_total is None:
        return float(cfg.lambda_o_f), float(cfg.lambda_o_m)
    return split_arrivals(cfg.lambda_total, cfg.density_ratio, cfg.n,
                          coverage_ratio(cfg.r_f, cfg.r_m))


def _table1() -> ScenarioConfig:
    # Reference timing and bandwidth values; r_m, K and the offered load are declared choices.
    return ScenarioConfig(n=1000, r_m=400.0, K=4, lambda_total=20.0, density_ratio=20.0)


def _desk() -> ScenarioConfig:
    # Ten femtocells over n*q = 0.1 of the macrocell. All-adaptive traffic with
    # C = 20*50 = 25*40 kbps makes the bandwidth CAC admit exactly the
    # N = 20, S = 5 call counts of the chain.
    return ScenarioConfig(
        n=10, r_m=100.0, K=4, lambda_total=0.5, density_ratio=20.0,
        C=1000.0, bw_nonadaptive=50.0, bw_adaptive_max=50.0, bw_adaptive_min=40.0,
        mix_ratio=(0, 1), N_override=20, S_override=5,
    )


PRESETS = {"table1": _table1, "desk": _desk}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None

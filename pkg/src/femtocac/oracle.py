"""Brute-force steady state of finite birth-death chains.

Used as an independent check on the closed-form results: chains are built
from their transition rates, never from the closed-form expressions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BirthDeathChain", "OracleError", "steady_state", "global_balance", "gth", "generator",
           "guard_channel_chain", "guard_channel_oracle"]

CROSS_CHECK_MAX_STATES = 100


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class BirthDeathChain:
    """States 0..M; ``birth_rates[i]`` is i -> i+1, ``death_rates[i]`` is i+1 -> i."""

    birth_rates: np.ndarray
    death_rates: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.birth_rates, dtype=float)
        d = np.asarray(self.death_rates, dtype=float)
        object.__setattr__(self, "birth_rates", b)
        object.__setattr__(self, "death_rates", d)
        if b.shape != d.shape or b.ndim != 1:
            raise OracleError("birth and death rate vectors must have equal length")
        if np.any(b < 0) or np.any(d < 0) or not np.all(np.isfinite(b)) or not np.all(np.isfinite(d)):
            raise OracleError("rates must be finite and non-negative")

    @property
    def M(self) -> int:
        return len(self.birth_rates)


def _reachable(chain: BirthDeathChain) -> int:
    """Highest state reachable from 0."""
    zero = np.flatnonzero(chain.birth_rates == 0)
    return int(zero[0]) if zero.size else chain.M


def steady_state(chain: BirthDeathChain, cross_check: bool = True) -> np.ndarray:
    """Stationary distribution by the product form.

    For chains with at most 100 states the global balance equations are
    also solved and the two answers compared.
    """
    top = _reachable(chain)
    if np.any(chain.death_rates[:top] == 0):
        raise OracleError("a reachable state cannot move down: chain is not ergodic")
    logw = np.full(chain.M + 1, -np.inf)
    logw[0] = 0.0
    if top:
        logw[1: top + 1] = np.cumsum(np.log(chain.birth_rates[:top]) - np.log(chain.death_rates[:top]))
    w = np.exp(logw - logw[: top + 1].max())
    pi = w / w.sum()
    if cross_check and chain.M + 1 <= CROSS_CHECK_MAX_STATES:
        alt = global_balance(chain)
        if np.max(np.abs(alt - pi)) > 1e-9:
            raise OracleError("product form and global balance disagree")
    return pi


def generator(chain: BirthDeathChain) -> np.ndarray:
    """Off-diagonal transition rates among the states reachable from 0."""
    top = _reachable(chain)
    Q = np.zeros((top + 1, top + 1))
    for i in range(top):
        Q[i, i + 1] = chain.birth_rates[i]
        Q[i + 1, i] = chain.death_rates[i]
    return Q


def gth(rates: np.ndarray) -> np.ndarray:
    """Stationary vector of an irreducible CTMC by Grassmann-Taksar-Heyman reduction.

    ``rates`` holds the off-diagonal rates (its diagonal is ignored). The
    elimination never subtracts, so it stays accurate when the
    probabilities span many orders of magnitude.
    """
    A = np.array(rates, dtype=float)
    np.fill_diagonal(A, 0.0)
    n = A.shape[0]
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise OracleError(f"state {k} cannot reach lower states: chain is not irreducible")
        A[:k, :k] += np.outer(A[:k, k], A[k, :k]) / s
        A[:k, k] /= s
        np.fill_diagonal(A, 0.0)
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()


def global_balance(chain: BirthDeathChain) -> np.ndarray:
    """Solve pi Q = 0, sum(pi) = 1 on the full generator, over states reachable from 0."""
    pi = gth(generator(chain))
    out = np.zeros(chain.M + 1)
    out[: len(pi)] = pi
    return out


def guard_channel_chain(lambda_o: float, lambda_h: float, mu_m: float, N: int, S: int) -> BirthDeathChain:
    M = N + S
    births = np.array([lambda_o + lambda_h if i < N else lambda_h for i in range(M)], dtype=float)
    deaths = np.array([(i + 1) * mu_m for i in range(M)], dtype=float)
    return BirthDeathChain(births, deaths)


def guard_channel_oracle(lambda_o: float, lambda_h: float, mu_m: float, N: int, S: int) -> tuple[float, float]:
    """``(p_block, p_drop)`` of the macrocell chain, solved numerically."""
    pi = steady_state(guard_channel_chain(lambda_o, lambda_h, mu_m, N, S))
    return float(pi[N:].sum()), float(pi[N + S])

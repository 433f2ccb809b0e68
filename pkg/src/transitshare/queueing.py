"""Utilization-rate thresholds for queue-constrained idle-vehicle service.

For a zone acting as an m-server queue with per-server service rate mu,
the admissible demand intensity rho = lambda/mu is bounded by the root of

    sum_{k=0}^{m-1} ((m-k) * m! * m^b / k!) * rho^-(m+b+1-k)  =  1 / (1-eta)

where at most b customers may wait with probability at least eta. The left
side is strictly decreasing in rho, diverges as rho -> 0+ and equals 1 at
rho = m, so for any eta in (0,1) there is a unique root in (0, m).
"""

from __future__ import annotations

import math

from scipy.special import logsumexp

_LOWER = 1e-9


def _log_lhs(rho: float, m: int, b: int) -> float:
    """log of the left side; evaluated in log space to survive large m, b."""
    log_rho = math.log(rho)
    terms = [
        math.log(m - k) + math.lgamma(m + 1) - math.lgamma(k + 1)
        + b * math.log(m) - (m + b + 1 - k) * log_rho
        for k in range(m)
    ]
    return float(logsumexp(terms))


def solve_rho(eta: float, m: int, b: int = 0, tol: float = 1e-12) -> float:
    """Root of the intensity equation, by bisection on (0, m).

    For m=1, b=0 this reduces to the closed form sqrt(1 - eta).
    """
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0,1), got {eta}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if b < 0:
        raise ValueError(f"b must be >= 0, got {b}")
    target = -math.log1p(-eta)          # log(1/(1-eta))
    lo, hi = _LOWER, float(m)
    if _log_lhs(lo, m, b) < target or _log_lhs(hi, m, b) > target:
        raise ArithmeticError(f"root bracket failed for eta={eta}, m={m}, b={b}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _log_lhs(mid, m, b) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class RhoTable:
    """Precomputed intensity thresholds rho_m for m = 1..m_max.

    Solved once at startup so the relocation program never calls the root
    finder in its inner loop.
    """

    def __init__(self, eta: float, b: int, m_max: int):
        if m_max < 1:
            raise ValueError("m_max must be >= 1")
        self.eta = eta
        self.b = b
        self.m_max = m_max
        self._rho = [solve_rho(eta, m, b) for m in range(1, m_max + 1)]

    def rho(self, m: int) -> float:
        if not 1 <= m <= self.m_max:
            raise ValueError(f"m={m} outside precomputed range 1..{self.m_max}")
        return self._rho[m - 1]

    def increments(self) -> list[float]:
        """rho_1 and the marginal gains rho_m - rho_(m-1) for m >= 2."""
        out = [self._rho[0]]
        out.extend(self._rho[m] - self._rho[m - 1] for m in range(1, self.m_max))
        return out


def lookahead_term(tour_minutes: float, beta: float) -> float:
    """Quadratic look-ahead delay term beta * T^2; zero beta is purely myopic."""
    if tour_minutes < 0 or beta < 0:
        raise ValueError("tour time and beta must be >= 0")
    return beta * tour_minutes * tour_minutes


def mm1_lookahead_coefficient(mu: float, lam: float) -> float:
    """Exact single-server queue coefficient mu*lam / (2*(mu-lam)).

    Offered as an optional alternative to a directly calibrated beta; the
    default pipeline never uses it.
    """
    if mu <= lam:
        raise ValueError("requires mu > lam (stable queue)")
    return mu * lam / (2.0 * (mu - lam))

"""Information-leakage bound and secret key rate for the code mode."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import gammaln

from .decoy_lp import YieldBounds
from .errors import DomainError, InfeasibleError

SERIES_CUT = 20
GOLDEN_TOL = 1e-8
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def binary_entropy(p: float) -> float:
    """``H2(p)`` in bits with ``0 log 0 = 0``."""
    if p < 0.0 or p > 1.0:
        raise DomainError(f"probability outside [0, 1]: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def entropy_h(x: float, y: float) -> float:
    """``h(x, y) = -x log x - y log y + (x + y) log (x + y)`` in bits."""
    if x < 0 or y < 0:
        raise DomainError("entropy arguments must be >= 0")
    total = x + y
    if total == 0.0:
        return 0.0
    return total * binary_entropy(min(1.0, x / total))


@dataclass(frozen=True)
class LeakageCaps:
    cap_00: float
    cap_10: float
    cap_11: float
    cap_01: float
    q_mu: float

    def __post_init__(self):
        if min(self.cap_00, self.cap_10, self.cap_11, self.cap_01) < 0:
            raise DomainError("caps must be >= 0")
        if self.q_mu < 0:
            raise DomainError("Q_mu must be >= 0")

    @property
    def total(self) -> float:
        return self.cap_00 + self.cap_10 + self.cap_11 + self.cap_01

    @property
    def feasible(self) -> bool:
        return self.total >= self.q_mu


@dataclass(frozen=True)
class KeyRateReport:
    rate: float
    i_ae: float
    q_mu: float
    er_mu: float
    caps: LeakageCaps | None
    params: Any = None
    yields: YieldBounds | None = None
    lp_gap_y11: float = math.nan      # LP upper bound on Y11 minus the true Y11
    diagnostic: str | None = None     # set when the point could not be evaluated


def _sqrt_poisson(mu: float, n_max: int) -> np.ndarray:
    """``sqrt(e^-mu mu^k / k!)`` for k = 0..n_max, computed in log space."""
    k = np.arange(n_max + 1)
    if mu == 0.0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    return np.exp(0.5 * (-mu + k * math.log(mu) - gammaln(k + 1)))


def _sqrt_tail(mu: float, cut: int) -> float:
    """Upper bound on ``sum_{k > cut} sqrt(P_k)``.

    Successive ratios ``sqrt(mu / (k + 1))`` shrink with k, so the tail is
    dominated by a geometric series started at ``k = cut + 1``.
    """
    if mu == 0.0:
        return 0.0
    ratio = math.sqrt(mu / (cut + 2))
    if ratio >= 1.0:
        raise DomainError("series cut too small for this intensity")
    first = math.exp(0.5 * (-mu + (cut + 1) * math.log(mu) - math.lgamma(cut + 2)))
    return first / (1.0 - ratio)


def x_upper_bounds(mu_code: float, yields: YieldBounds, series_cut: int = SERIES_CUT,
                   q_mu: float = 0.0) -> LeakageCaps:
    """Caps on x00, x10, x11, x01 from the yield upper bounds.

    Each cap is ``(sum sqrt(P_a P_b Y_ab))^2`` over the parity class of
    ``(a, b)``; yields without an estimate are replaced by 1 and the pairs
    beyond ``series_cut`` by an analytic tail bound. ``q_mu`` is carried
    along for :func:`information_leakage`.
    """
    if mu_code < 0:
        raise DomainError("code-mode intensity must be >= 0")
    root = _sqrt_poisson(mu_code, series_cut)
    tail = _sqrt_tail(mu_code, series_cut)
    y = np.ones((series_cut + 1, series_cut + 1))
    for (n, m), val in yields.upper.items():
        if n <= series_cut and m <= series_cut:
            y[n, m] = min(1.0, max(0.0, val))
    terms = np.outer(root, root) * np.sqrt(y)
    caps = []
    for pa, pb in ((0, 0), (1, 0), (1, 1), (0, 1)):
        inner = float(terms[pa::2, pb::2].sum())
        # pairs with a or b beyond the cut: (A + T)(B + T) - A B with Y <= 1
        side_a = float(root[pa::2].sum())
        side_b = float(root[pb::2].sum())
        extra = tail * (side_a + side_b) + tail * tail
        caps.append((inner + extra) ** 2)
    return LeakageCaps(caps[0], caps[1], caps[2], caps[3], q_mu)


def _term(mass: float, cap_a: float, cap_b: float) -> float:
    """``max h(x, mass - x)`` over ``x <= cap_a``, ``mass - x <= cap_b``."""
    if mass <= 0.0:
        return 0.0
    lo = max(0.0, mass - cap_b)
    hi = min(cap_a, mass)
    x = min(max(mass / 2.0, lo), hi)
    return entropy_h(x, mass - x)


def _split_objective(s: float, c: tuple) -> float:
    return _term(s, c[0], c[1]) + _term(1.0 - s, c[2], c[3])


def information_leakage(caps: LeakageCaps, tol: float = GOLDEN_TOL) -> float:
    """``max h(x00/Q, x10/Q) + h(x11/Q, x01/Q)`` subject to the caps and ``sum x = Q``.

    The first term's share ``s`` is searched by golden section; for fixed
    ``s`` both terms are maximized in closed form. The objective in ``s`` is
    concave (a partial maximum of a concave function over a set that moves
    linearly with ``s``), so the search finds the global maximum.
    """
    q = caps.q_mu
    if q <= 0.0:
        raise InfeasibleError("Q_mu must be positive to bound the leakage")
    if not caps.feasible:
        raise InfeasibleError(f"caps sum {caps.total:.6g} below Q_mu {q:.6g}")
    c = tuple(min(1.0, v / q) for v in (caps.cap_00, caps.cap_10, caps.cap_11, caps.cap_01))
    s_lo = max(0.0, 1.0 - c[2] - c[3])
    s_hi = min(1.0, c[0] + c[1])
    if s_lo > s_hi:   # only via rounding when the caps sum to Q exactly
        s_lo = s_hi = min(max(s_lo, 0.0), 1.0)
    a, b = s_lo, s_hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = _split_objective(x1, c), _split_objective(x2, c)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = _split_objective(x2, c)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = _split_objective(x1, c)
    best = max(f1, f2, _split_objective(s_lo, c), _split_objective(s_hi, c))
    return min(1.0, max(0.0, best))


def secret_key_rate(q_mu: float, er_mu: float, i_ae: float, f: float = 1.15) -> float:
    """``Q [1 - f H2(er) - I_AE]``; negative values are returned unchanged."""
    return q_mu * (1.0 - f * binary_entropy(er_mu) - i_ae)


def plob_bound(eta_total: float) -> float:
    """Repeaterless bound ``-log2(1 - eta)`` in bits per trial."""
    if not 0.0 <= eta_total <= 1.0:
        raise DomainError("transmittance must lie in [0, 1]")
    if eta_total == 1.0:
        raise DomainError("bound diverges at unit transmittance")
    return -math.log1p(-eta_total) / math.log(2.0)

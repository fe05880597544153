"""Brute-force Fock-space expansion for small beam-splitter networks.

States are kept as polynomials in creation operators acting on vacuum,

    |psi> = D^(-1/2) * sum_k coef(k) * prod_i (a_i^+)^(k_i) |0>,

where each ``coef`` is itself a polynomial with rational coefficients in the
symbols ``sqrt(t_j)`` and ``sqrt(1 - t_j)`` of every splitter applied so far.
Nothing is rounded until :func:`outcome_pmf` evaluates the squared amplitudes
with mpmath at 40 significant digits. This path shares no arithmetic with
:mod:`passive_tfqkd.fock_optics` and is meant for tests and validation only.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .errors import DomainError
from .fock_optics import PhotonPmf

MAX_PHOTONS = 12
DIGITS = 40

# coefficient polynomial: {exponent tuple over (s_0, c_0, s_1, c_1, ...): Fraction}
Poly = dict


@dataclass(frozen=True)
class MonomialState:
    modes: int
    terms: dict          # photon tuple -> Poly
    norm_sq: int = 1     # D above
    ts: tuple = ()       # transmittances (as Fractions) of the splitters applied

    def photon_count(self) -> int:
        return max((sum(k) for k in self.terms), default=0)


def fock_state(*photons: int) -> MonomialState:
    """``|n_0, n_1, ...>`` as a monomial state."""
    if any(n < 0 for n in photons):
        raise DomainError("photon numbers must be >= 0")
    if sum(photons) > MAX_PHOTONS:
        raise DomainError(f"oracle is capped at {MAX_PHOTONS} photons")
    norm = math.prod(math.factorial(n) for n in photons)
    return MonomialState(len(photons), {tuple(photons): {(): Fraction(1)}}, norm)


def _pad(exps: tuple, size: int) -> tuple:
    return exps + (0,) * (size - len(exps))


def _poly_mul(p: Poly, q: Poly, size: int) -> Poly:
    out: dict = defaultdict(Fraction)
    for ea, ca in p.items():
        ea = _pad(ea, size)
        for eb, cb in q.items():
            eb = _pad(eb, size)
            out[tuple(x + y for x, y in zip(ea, eb))] += ca * cb
    return {e: c for e, c in out.items() if c != 0}


def expand_bs(state: MonomialState, mode_a: int, mode_b: int, t) -> MonomialState:
    """Send ``mode_a`` and ``mode_b`` through a splitter of transmittance ``t``.

    ``a+ -> s c+ + r d+`` and ``b+ -> r c+ - s d+`` with ``s = sqrt(t)``,
    ``r = sqrt(1 - t)``; outputs ``c`` and ``d`` reuse the indices of ``a``
    and ``b``.
    """
    if mode_a == mode_b:
        raise DomainError("beam splitter needs two distinct modes")
    for idx in (mode_a, mode_b):
        if not 0 <= idx < state.modes:
            raise DomainError(f"mode index {idx} out of range")
    t = Fraction(t).limit_denominator(10**12) if not isinstance(t, Fraction) else t
    if not 0 <= t <= 1:
        raise DomainError("transmittance must lie in [0, 1]")
    j = len(state.ts)
    size = 2 * (j + 1)

    def mono(ns: int, nr: int) -> tuple:
        e = [0] * size
        e[2 * j], e[2 * j + 1] = ns, nr
        return tuple(e)

    new_terms: dict = defaultdict(dict)
    for photons, coef in state.terms.items():
        p, q = photons[mode_a], photons[mode_b]
        for i in range(p + 1):            # a+ photons routed to c
            for l in range(q + 1):        # b+ photons routed to c
                factor = Fraction(math.comb(p, i) * math.comb(q, l))
                if (q - l) % 2:
                    factor = -factor
                weight = {mono(i + (q - l), (p - i) + l): factor}
                out = list(photons)
                out[mode_a] = i + l
                out[mode_b] = (p - i) + (q - l)
                key = tuple(out)
                prod = _poly_mul(coef, weight, size)
                acc = new_terms[key]
                for e, c in prod.items():
                    acc[_pad(e, size)] = acc.get(_pad(e, size), Fraction(0)) + c
    ts = state.ts + (t,)
    terms = {}
    for key, poly in new_terms.items():
        poly = _reduce(poly, ts)
        if poly:
            terms[key] = poly
    return MonomialState(state.modes, terms, state.norm_sq, ts)


def _reduce(poly: Poly, ts: tuple) -> Poly:
    """Rewrite ``s_j^2 -> t_j`` and ``r_j^2 -> 1 - t_j`` so exponents are 0 or 1."""
    out: dict = defaultdict(Fraction)
    for e, c in poly.items():
        e = list(e)
        for j, t in enumerate(ts):
            for idx, val in ((2 * j, t), (2 * j + 1, 1 - t)):
                half, e[idx] = divmod(e[idx], 2)
                c *= val ** half
        out[tuple(e)] += c
    return {e: c for e, c in out.items() if c != 0}


def _eval_poly(poly: Poly, roots: list) -> mpmath.mpf:
    total = mpmath.mpf(0)
    for e, c in poly.items():
        term = mpmath.mpf(c.numerator) / c.denominator
        for base, k in zip(roots, e):
            if k:
                term *= base ** k
        total += term
    return total


def amplitudes(state: MonomialState) -> dict:
    """Fock amplitudes ``<k|psi>`` as mpmath numbers."""
    with mpmath.workdps(DIGITS):
        roots = []
        for t in state.ts:
            tt = mpmath.mpf(t.numerator) / t.denominator
            roots += [mpmath.sqrt(tt), mpmath.sqrt(1 - tt)]
        out = {}
        for photons, poly in state.terms.items():
            fact = math.prod(math.factorial(k) for k in photons)
            out[photons] = _eval_poly(poly, roots) * mpmath.sqrt(mpmath.mpf(fact) / state.norm_sq)
        return out


def norm(state: MonomialState) -> float:
    with mpmath.workdps(DIGITS):
        return float(sum(a * a for a in amplitudes(state).values()))


def joint_probabilities(state: MonomialState) -> dict:
    """``{photon tuple: probability}`` over all modes."""
    with mpmath.workdps(DIGITS):
        return {k: a * a for k, a in amplitudes(state).items()}


def outcome_pmf(state: MonomialState, mode: int) -> PhotonPmf:
    """Exact photon-number marginal of one mode (``tail`` is 0)."""
    with mpmath.workdps(DIGITS):
        probs = [mpmath.mpf(0)] * (state.photon_count() + 1)
        for photons, p in joint_probabilities(state).items():
            probs[photons[mode]] += p
        return PhotonPmf([float(p) for p in probs], 0.0)


def bs_pmf(n: int, m: int, t) -> PhotonPmf:
    """Oracle counterpart of :func:`passive_tfqkd.fock_optics.bs_fock_pmf`."""
    return outcome_pmf(expand_bs(fock_state(n, m), 0, 1, t), 0)

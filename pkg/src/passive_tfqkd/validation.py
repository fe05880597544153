"""Self-checks run by ``passive-tfqkd validate``.

Each check compares a production routine against an independent route
(exact symbolic expansion, a law-of-total-probability identity, true yields,
a brute-force grid) and returns a :class:`CheckResult`. Inputs are fixed or
drawn from a Kronecker low-discrepancy sequence, so nothing here touches a
random number generator.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import entr

from . import exact_oracle
from .channel_sim import ChannelSpec, decoy_gains, im_leakage_error, yield_nm
from .decoy_lp import ESTIMATED_KEYS, bound_yield, build_constraints, true_yield_vector
from .detector_conditioning import DetectorSpec, decoy_states, merge_states, or_groups
from .fock_optics import (SourceOptics, bs_fock_pmf, cascade_joint_pmf, joint_pmf_two_intensity,
                          output_pmf_coherent)
from .keyrate import LeakageCaps, binary_entropy, information_leakage

ORACLE_TS = (0.1, 0.3, 0.5, 0.7, 0.9)
LP_DISTANCES = (0.0, 100.0, 200.0, 300.0)
LP_OPTICS = (
    SourceOptics(0.1, 0.5, 0.5, (0.7, 0.6)),
    SourceOptics(0.3, 0.7, 0.6, (0.8, 0.6)),
    SourceOptics(0.05, 0.9, 0.5, (0.6, 0.9)),
)
# published value for mu_s = 0.1 at 20 dB, and the value quoted alongside the
# closed form in the requirements; neither matches 0.5 (1 - exp(-0.001))
PUBLISHED_IM_ERROR = 0.00005
QUOTED_IM_ERROR = 4.9988e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        return CheckResult(res.name, res.passed, res.detail, time.perf_counter() - start)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def kronecker_points(count: int, dim: int, offset: int = 1) -> np.ndarray:
    """Points ``frac(k * alpha)`` with alpha from the generalized golden ratio."""
    phi = 2.0
    for _ in range(50):   # root of x^(dim+1) = x + 1
        phi = (1.0 + phi) ** (1.0 / (dim + 1))
    alpha = np.array([phi ** -(j + 1) for j in range(dim)])
    k = np.arange(offset, offset + count)[:, None]
    return np.mod(0.5 + k * alpha, 1.0)


# -- optics -----------------------------------------------------------------

@_timed
def check_oracle_equivalence(max_total: int = 8, ts=ORACLE_TS) -> CheckResult:
    worst = 0.0
    for t in ts:
        for n in range(max_total + 1):
            for m in range(max_total + 1 - n):
                fast = bs_fock_pmf(n, m, t).probs
                slow = exact_oracle.bs_pmf(n, m, t).probs
                size = max(len(fast), len(slow))
                diff = np.abs(np.pad(fast, (0, size - len(fast)))
                              - np.pad(slow, (0, size - len(slow))))
                worst = max(worst, float(diff.max()))
    hom = float(bs_fock_pmf(1, 1, 0.5).probs[1])
    ok = worst < 1e-10 and hom < 1e-12
    return CheckResult("oracle equivalence",
                       ok, f"max |fast - exact| = {worst:.2e} (n+m <= {max_total}); "
                       f"HOM P(1) = {hom:.1e}")


@_timed
def check_conditioning_identity(mus=(0.01, 0.05, 0.2)) -> CheckResult:
    det = DetectorSpec()
    worst = 0.0
    for mu in mus:
        optics = SourceOptics(2.0 * mu, 0.5, 0.5)
        joint = joint_pmf_two_intensity(optics)
        states = decoy_states(joint, det)
        recombined = sum(p * pmf.probs for p, pmf in states.values())
        direct = output_pmf_coherent(optics.mu_s, optics.mu_r, optics.t2).probs
        worst = max(worst, float(np.abs(recombined - direct).max()))
    return CheckResult("conditioning identity", worst < 1e-10,
                       f"max |sum_p P(p) Pr^p - P| = {worst:.2e} at mu_s = mu_r in {mus}")


# -- decoy LP ---------------------------------------------------------------

def nested_state_sets(optics: SourceOptics, det: DetectorSpec | None = None) -> list[dict]:
    """Decoy states seen with 1, 2 and 3 local detectors on the same cascade.

    Reading detectors out as OR-groups coarse-grains the patterns, so the
    one- and two-detector sets are exactly what a cruder observer of the
    same source would have.
    """
    det = det or DetectorSpec()
    joint = cascade_joint_pmf(optics, 3)
    states8 = decoy_states(joint, det)
    states4 = merge_states(states8, or_groups(3, [[0], [1, 2]]))
    states2 = merge_states(states8, or_groups(3, [[0, 1, 2]]))
    return [{k: v[1] for k, v in s.items()} for s in (states2, states4, states8)]


def lp_bounds(dists: dict, ch: ChannelSpec, mu_code: float, n_cut: int = 10):
    """Upper and lower bounds on the estimated yields from all pattern-pair gains."""
    pairs = list(itertools.product(dists, dists))
    obs = decoy_gains(dists, dists, ch, n_cut, pairs, mu_code)
    lp = build_constraints(dists, dists, obs, n_cut)
    upper = {k: bound_yield(lp, k, "max") for k in ESTIMATED_KEYS}
    lower = {k: bound_yield(lp, k, "min") for k in ESTIMATED_KEYS}
    return lp, upper, lower


@_timed
def check_lp_soundness(distances=LP_DISTANCES, optics_set=LP_OPTICS,
                       tol: float = 1e-9) -> CheckResult:
    infeasible, undercut, loosened = 0, 0.0, 0.0
    for dist in distances:
        ch = ChannelSpec(dist)
        truth = true_yield_vector(ch, 10)
        for optics in optics_set:
            previous = None
            for dists in nested_state_sets(optics):
                lp, upper, lower = lp_bounds(dists, ch, optics.mu_code)
                if not lp.is_feasible_point(truth):
                    infeasible += 1
                for key in ESTIMATED_KEYS:
                    y = yield_nm(*key, ch)
                    undercut = max(undercut, y - upper[key], lower[key] - y)
                if previous is not None:
                    for key in ESTIMATED_KEYS:
                        loosened = max(loosened, upper[key] - previous[0][key],
                                       previous[1][key] - lower[key])
                previous = (upper, lower)
    ok = infeasible == 0 and undercut <= tol and loosened <= tol
    return CheckResult("LP soundness", ok,
                       f"infeasible truths = {infeasible}, worst bound violation = {undercut:.1e}, "
                       f"worst loosening 2->4->8 = {loosened:.1e}")


# -- leakage ----------------------------------------------------------------

def _h_bits(x, y):
    return (entr(x) + entr(y) - entr(x + y)) / math.log(2.0)


def _grid_max(c, x00, x10, lam):
    """Best point on a grid over ``(x00, x10, lam)``.

    ``x11`` runs over its feasible interval given ``x00 + x10`` (``x01`` takes
    the rest), at relative position ``lam``; both ends of the interval are
    reachable, so the cap faces are always on the grid.
    """
    a, b, t = np.meshgrid(x00, x10, lam, indexing="ij")
    left = 1.0 - a - b
    lo = np.maximum(0.0, left - c[3])
    hi = np.minimum(c[2], left)
    ok = (left >= 0.0) & (lo <= hi)
    d = lo + t * np.clip(hi - lo, 0.0, None)
    rest = np.clip(left - d, 0.0, None)
    val = np.where(ok, _h_bits(a, b) + _h_bits(d, rest), -np.inf)
    i = np.unravel_index(int(np.argmax(val)), val.shape)
    return float(val[i]), (float(a[i]), float(b[i]), float(t[i]))


def _axis(lo, hi, centre, half, step):
    lo, hi = max(lo, centre - half), min(hi, centre + half)
    n = max(2, int(round((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, n)


def leakage_grid_oracle(caps: LeakageCaps, step: float = 1e-3, coarse: float = 0.01) -> float:
    """Brute-force maximum of ``h(x00, x10) + h(x11, x01)`` over the capped simplex.

    A coarse 3-D grid is refined around its best point at ``step``, then at
    ``step / 10`` and ``step / 100``.
    """
    q = caps.q_mu
    c = [min(1.0, v / q) for v in (caps.cap_00, caps.cap_10, caps.cap_11, caps.cap_01)]
    box = [c[0], c[1], 1.0]
    axes = [np.linspace(0.0, box[i], max(2, int(math.ceil(box[i] / coarse)) + 1))
            for i in range(3)]
    best, point = _grid_max(c, *axes)
    half = 2.0 * coarse
    for s in (step, step / 10.0, step / 100.0):
        axes = [_axis(0.0, box[i], point[i], half, s) for i in range(3)]
        val, pt = _grid_max(c, *axes)
        if val >= best:
            best, point = val, pt
        half = 2.0 * s
    return best


def leakage_instances(count: int = 100) -> list[LeakageCaps]:
    """Feasible cap sets (normalized by ``Q = 1``) from a low-discrepancy sequence."""
    out = []
    for u in kronecker_points(count, 4):
        caps = 0.02 + 0.98 * u
        total = caps.sum()
        if total < 1.05:
            caps = np.minimum(1.0, caps * 1.05 / total)
        out.append(LeakageCaps(*map(float, caps), q_mu=1.0))
    return out


@_timed
def check_leakage_solver(count: int = 100, tol: float = 1e-4) -> CheckResult:
    worst = 0.0
    for caps in leakage_instances(count):
        worst = max(worst, abs(information_leakage(caps) - leakage_grid_oracle(caps)))
    closed = [
        (LeakageCaps(1.0, 0.0, 0.0, 0.0, 1.0), 0.0),
        (LeakageCaps(1.0, 1.0, 1.0, 1.0, 1.0), 1.0),
        (LeakageCaps(0.9, 0.1, 0.0, 0.0, 1.0), binary_entropy(0.9)),
    ]
    closed_err = max(abs(information_leakage(c) - v) for c, v in closed)
    ok = worst <= tol and closed_err <= 1e-5
    return CheckResult("leakage solver", ok,
                       f"max |solver - grid| = {worst:.1e} over {count} cap sets; "
                       f"closed-form error = {closed_err:.1e}")


# -- modulator leakage --------------------------------------------------------

@_timed
def check_im_leakage(mu_s: float = 0.1, extinction_db: float = 20.0) -> CheckResult:
    value = im_leakage_error(mu_s, extinction_db)
    with mpmath.workdps(40):
        leaked = mpmath.mpf(mu_s) * mpmath.power(10, -mpmath.mpf(extinction_db) / 10)
        exact = float(0.5 * (1 - mpmath.exp(-leaked)))
    ok = abs(value - exact) <= 1e-15
    return CheckResult("modulator leakage error", ok,
                       f"er(mu_s={mu_s:g}, {extinction_db:g} dB) = {value:.6e}, "
                       f"40-digit closed form {exact:.6e}; DISCREPANCIES: published value "
                       f"{PUBLISHED_IM_ERROR:g} ({value / PUBLISHED_IM_ERROR:.2f}x smaller), "
                       f"quoted reference {QUOTED_IM_ERROR:g} (off by {QUOTED_IM_ERROR - value:.1e})")


CHECKS = (check_oracle_equivalence, check_conditioning_identity, check_lp_soundness,
          check_leakage_solver, check_im_leakage)


def run_validation(checks=CHECKS) -> list[CheckResult]:
    return [check() for check in checks]


def format_report(results: list[CheckResult]) -> str:
    lines = [f"{r.line()} ({r.seconds:.1f} s)" for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"

"""Linear programs bounding low-order yields from decoy-mode gains."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .channel_sim import ChannelSpec, DecoyObservables, product_omitted, yield_nm
from .detector_conditioning import all_patterns
from .errors import ConfigurationError, DomainError
from .fock_optics import DEFAULT_N_CUT, PhotonPmf, poisson_pmf
from .simplex import BoundedSimplex, SimplexResult

YieldKey = tuple[int, int]

#: Yields estimated by the decoy analysis and used in the leakage caps.
ESTIMATED_KEYS: tuple[YieldKey, ...] = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1))
#: Default weights of (Y20, Y11, Y02) in the combined two-photon yield; this is
#: the two-photon split of a product of equal coherent states (mu^2/2, mu^2, mu^2/2).
Y2_WEIGHTS = (0.25, 0.5, 0.25)
LP_TOL = 1e-9
#: Relative widening of every gain row; covers the half-ulp roundings in the
#: gain and in ``Q - tau`` with room to spare.
ROW_ROUNDING = 4.0 * np.finfo(float).eps


@dataclass(frozen=True)
class LinearProgram:
    """Box-constrained LP over the yields ``Y[n, m]``, ``n, m <= n_cut``.

    Row ``i`` reads ``lower[i] <= rows[i] @ y <= upper[i]``.
    """

    n_cut: int
    rows: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    labels: tuple[str, ...] = ()

    @property
    def keys(self) -> list[YieldKey]:
        return [(n, m) for n in range(self.n_cut + 1) for m in range(self.n_cut + 1)]

    @property
    def n_vars(self) -> int:
        return (self.n_cut + 1) ** 2

    def index(self, key: YieldKey) -> int:
        n, m = key
        if not (0 <= n <= self.n_cut and 0 <= m <= self.n_cut):
            raise DomainError(f"yield {key} outside the LP truncation")
        return n * (self.n_cut + 1) + m

    def scaled(self, factors: Sequence[float]) -> "LinearProgram":
        f = np.asarray(factors, dtype=float)
        return LinearProgram(self.n_cut, self.rows * f[:, None], self.lower * f,
                             self.upper * f, self.labels)

    def extended(self, other: "LinearProgram") -> "LinearProgram":
        if other.n_cut != self.n_cut:
            raise ConfigurationError("cannot merge LPs with different truncations")
        return LinearProgram(self.n_cut, np.vstack([self.rows, other.rows]),
                             np.concatenate([self.lower, other.lower]),
                             np.concatenate([self.upper, other.upper]),
                             self.labels + other.labels)

    def is_feasible_point(self, y: np.ndarray, tol: float = 1e-12) -> bool:
        y = np.asarray(y, dtype=float).ravel()
        if np.any(y < -tol) or np.any(y > 1 + tol):
            return False
        val = self.rows @ y
        return bool(np.all(val >= self.lower - tol) and np.all(val <= self.upper + tol))

    def dump(self) -> str:
        """Plain-text listing: variables with boxes, then one line per row."""
        lines = [f"# n_cut={self.n_cut} vars={self.n_vars} rows={len(self.lower)}",
                 "[variables]"]
        lines += [f"Y_{n}_{m} 0 1" for n, m in self.keys]
        lines.append("[rows]")
        for i, row in enumerate(self.rows):
            label = self.labels[i] if i < len(self.labels) else f"r{i}"
            coeffs = " ".join(f"Y_{n}_{m}:{row[j]:.17g}"
                              for j, (n, m) in enumerate(self.keys) if row[j] != 0)
            lines.append(f"{label} {self.lower[i]:.17g} {self.upper[i]:.17g} {coeffs}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class YieldBounds:
    upper: dict
    lower: dict
    y2_upper: float = 1.0

    def __post_init__(self):
        for key in self.upper:
            lo, hi = self.lower.get(key, 0.0), self.upper[key]
            if not (-LP_TOL <= lo <= hi + LP_TOL and hi <= 1 + LP_TOL):
                raise DomainError(f"inconsistent bounds for Y{key}: [{lo}, {hi}]")


def build_constraints(dists_a: Mapping[str, PhotonPmf], dists_b: Mapping[str, PhotonPmf],
                      gains: DecoyObservables | Mapping, n_cut: int = DEFAULT_N_CUT) -> LinearProgram:
    """One two-sided row per observed gain.

    With ``tau`` the product mass beyond ``n_cut``:
    ``Q - tau <= sum_{n,m<=n_cut} Pa(n) Pb(m) Y_nm <= Q``, each side widened
    by ``ROW_ROUNDING`` relative so that gains carrying a few ulps of rounding
    still admit the yields that produced them (with nearly parallel rows an
    exactly tight system can otherwise be empty).
    """
    gain_map = gains.decoy_gains if isinstance(gains, DecoyObservables) else gains
    rows, lo, hi, labels = [], [], [], []
    for (a, b), q in gain_map.items():
        if a not in dists_a or b not in dists_b:
            raise ConfigurationError(f"gain ({a}, {b}) has no matching source distribution")
        pa = dists_a[a].padded(n_cut)
        pb = dists_b[b].padded(n_cut)
        tau = product_omitted(dists_a[a], dists_b[b], n_cut)
        rows.append(np.outer(pa, pb).ravel())
        lo.append(max(0.0, (q - tau) * (1.0 - ROW_ROUNDING)))
        hi.append(q * (1.0 + ROW_ROUNDING))
        labels.append(f"Q[{a},{b}]")
    size = (n_cut + 1) ** 2
    return LinearProgram(n_cut, np.array(rows).reshape(len(rows), size),
                         np.array(lo, dtype=float), np.array(hi, dtype=float), tuple(labels))


def _objective(lp: LinearProgram, target, y2_weights=Y2_WEIGHTS) -> np.ndarray:
    c = np.zeros(lp.n_vars)
    if target == "Y2":
        for key, w in zip(((2, 0), (1, 1), (0, 2)), y2_weights):
            c[lp.index(key)] = w
    elif isinstance(target, tuple):
        c[lp.index(target)] = 1.0
    else:
        c = np.asarray(target, dtype=float)
        if c.shape != (lp.n_vars,):
            raise DomainError("objective vector has the wrong length")
    return c


def _power_of_two(values: np.ndarray) -> np.ndarray:
    """Largest power of two not above each (positive) value."""
    mant, expo = np.frexp(np.asarray(values, float))
    return np.ldexp(1.0, expo - 1)


class ScaledSolver:
    """Simplex on a rescaled copy of a nonnegative LP.

    Rows are divided by (roughly) their upper bound. Each yield gets the
    implied box ``Y_j <= min_r upper_r / rows[r, j]`` (valid because every
    coefficient and every yield is nonnegative) and is rescaled by about that
    cap; without this the gains, spanning ~1e-7..1, make the pivots lose most
    of their digits. All scale factors are powers of two, so the rescaled LP
    is the given one exactly and not a rounded neighbour of it.
    """

    def __init__(self, lp: LinearProgram):
        rows = lp.rows
        n = lp.n_vars
        cap = np.ones(n)
        if len(lp.upper) and np.all(rows >= 0):
            with np.errstate(divide="ignore"):
                ratio = np.where(rows > 0, lp.upper[:, None] / np.where(rows > 0, rows, 1.0), np.inf)
            cap = np.minimum(cap, ratio.min(axis=0))
        self.col = np.where(cap > 0, _power_of_two(cap), 1.0)
        hi = np.where(cap > 0, np.minimum(1.0, cap) / self.col, 0.0)
        ref = np.abs(lp.upper).copy() if len(lp.upper) else np.zeros(0)
        if len(ref):
            fallback = np.abs(rows * self.col).max(axis=1)
            ref = _power_of_two(np.where(ref > 0, ref, np.where(fallback > 0, fallback, 1.0)))
        a = rows * self.col / ref[:, None] if len(ref) else rows
        self.simplex = BoundedSimplex(a, lp.lower / ref if len(ref) else lp.lower,
                                      lp.upper / ref if len(ref) else lp.upper,
                                      np.zeros(n), hi)

    def maximize(self, c: np.ndarray) -> SimplexResult:
        res = self.simplex.maximize(np.asarray(c, float) * self.col)
        return SimplexResult(res.value, res.bound, res.x * self.col, res.iterations)

    def minimize(self, c: np.ndarray) -> SimplexResult:
        res = self.simplex.minimize(np.asarray(c, float) * self.col)
        return SimplexResult(res.value, res.bound, res.x * self.col, res.iterations)


def solver_for(lp: LinearProgram) -> ScaledSolver:
    """Solver shared by all objectives on the same LP (phase 1 runs once)."""
    cached = lp.__dict__.get("_solver")
    if cached is None:
        cached = ScaledSolver(lp)
        object.__setattr__(lp, "_solver", cached)
    return cached


def solve(lp: LinearProgram, c: np.ndarray, maximize: bool) -> SimplexResult:
    """Optimize ``c @ y``; ``bound`` is the certified side of the optimum."""
    sol = solver_for(lp)
    return sol.maximize(c) if maximize else sol.minimize(c)


def bound_yield(lp: LinearProgram, target, sense: str = "max",
                y2_weights=Y2_WEIGHTS) -> float:
    """Upper (``sense="max"``) or lower (``"min"``) bound on a yield.

    ``target`` is a ``(n, m)`` key, ``"Y2"`` for the weighted two-photon yield,
    or an explicit objective vector.
    """
    if sense not in ("max", "min"):
        raise DomainError("sense must be 'max' or 'min'")
    c = _objective(lp, target, y2_weights)
    res = solve(lp, c, sense == "max")
    # the certificate errs on the safe side; the vertex value is the fallback
    # if rounding ever pushed it the wrong way
    value = max(res.bound, res.value) if sense == "max" else min(res.bound, res.value)
    if isinstance(target, tuple) or target == "Y2":
        value = min(1.0, max(0.0, value))
    return value


def estimate_yields(lp: LinearProgram, keys: Iterable[YieldKey] = ESTIMATED_KEYS,
                    lower: bool = True, y2_weights=Y2_WEIGHTS) -> YieldBounds:
    """Upper and (optionally) lower bounds on ``keys``; skipped lower bounds are 0."""
    up, lo = {}, {}
    for key in keys:
        up[key] = bound_yield(lp, key, "max")
        lo[key] = min(up[key], bound_yield(lp, key, "min")) if lower else 0.0
    y2 = bound_yield(lp, "Y2", "max", y2_weights)
    return YieldBounds(up, lo, y2)


def passive_pairs(n_detectors: int, selection: str = "anchored",
                  anchor: str | None = None) -> list[tuple[str, str]]:
    """Pattern pairs whose gains enter the LP.

    ``"full"`` takes every pair. ``"anchored"`` takes every pair for one
    detector, and otherwise all same-pattern pairs plus all pairs against
    ``anchor`` (all-click unless given). For two detectors that is the ten
    gains Q^{44}, Q^{14}, Q^{24}, Q^{34}, Q^{41}, Q^{42}, Q^{43}, Q^{11},
    Q^{22}, Q^{33} with 1=00, 2=10, 3=01, 4=11; for three it is 22 gains.
    """
    labels = [p.label for p in all_patterns(n_detectors)]
    if selection == "full" or (selection == "anchored" and n_detectors == 1):
        return list(itertools.product(labels, labels))
    if selection != "anchored":
        raise ConfigurationError(f"unknown gain selection {selection!r}")
    anchor = "1" * n_detectors if anchor is None else anchor
    if anchor not in labels:
        raise ConfigurationError(f"anchor {anchor!r} is not a {n_detectors}-detector pattern")
    # pattern numbering: binary with D1 as the least significant bit
    others = sorted((p for p in labels if p != anchor), key=lambda lab: lab[::-1])
    pairs = [(anchor, anchor)]
    pairs += [(p, anchor) for p in others]
    pairs += [(anchor, p) for p in others]
    pairs += [(p, p) for p in others]
    return pairs


def active_decoy_distributions(intensities: Sequence[float],
                               n_cut: int = DEFAULT_N_CUT) -> dict[str, PhotonPmf]:
    """One Poissonian state per actively chosen intensity, labelled ``"v0"``, ``"v1"``, ..."""
    vals = [float(v) for v in intensities]
    if any(v < 0 for v in vals):
        raise DomainError("intensities must be >= 0")
    if len(set(vals)) != len(vals):
        raise ConfigurationError("duplicate decoy intensities give degenerate constraints")
    return {f"v{i}": poisson_pmf(v, n_cut) for i, v in enumerate(vals)}


def infinite_decoy_bounds(ch: ChannelSpec, keys: Iterable[YieldKey] = ESTIMATED_KEYS,
                          y2_weights=Y2_WEIGHTS, full_cut: int | None = None) -> YieldBounds:
    """Perfect knowledge of the yields: upper = lower = truth.

    With ``full_cut`` every ``Y_nm`` with ``n, m <= full_cut`` is included, not
    only ``keys``; this is what an unlimited number of decoy settings would
    reveal, and it lets the leakage caps use true yields everywhere.
    """
    keys = list(keys)
    if full_cut is not None:
        keys += [(n, m) for n in range(full_cut + 1) for m in range(full_cut + 1)
                 if (n, m) not in keys]
    truth = {k: yield_nm(*k, ch) for k in keys}
    y2 = sum(w * yield_nm(*k, ch) for k, w in zip(((2, 0), (1, 1), (0, 2)), y2_weights))
    return YieldBounds(dict(truth), dict(truth), y2)


def true_yield_vector(ch: ChannelSpec, n_cut: int) -> np.ndarray:
    idx = np.arange(n_cut + 1)
    return np.array([yield_nm(int(n), int(m), ch) for n in idx for m in idx])

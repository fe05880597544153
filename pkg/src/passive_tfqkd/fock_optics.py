"""Truncated photon-number statistics for phase-randomized sources and beam splitters.

Conventions used throughout:

* A beam splitter with transmittance ``t`` maps input creation operators as
  ``a -> sqrt(t) c + sqrt(1-t) d`` and ``b -> sqrt(1-t) c - sqrt(t) d``; output
  ``c`` is the mode sent towards Charlie (a1), ``d`` goes to the local detectors.
* Path r (intensity ``mu_r = t1 * mu``) enters arm ``a`` of BS2 and path s
  (``mu_s = (1 - t1) * mu``) enters arm ``b``. The code-mode output intensity is
  therefore ``t2 * t1 * mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError

#: Default truncation of output photon-number axes.
DEFAULT_N_CUT = 10
#: Neglected Poisson mass allowed when expanding a source into Fock states.
#: Kept far below the probability of the rarest click pattern (dark counts
#: alone give ~1e-21 for three detectors), since conditioning on a pattern
#: divides the omitted mass by that pattern's probability.
SOURCE_TOL = 1e-30

CONVENTIONS = ("exact", "product")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PhotonPmf:
    """Photon-number distribution on ``0..n_cut`` with explicit omitted mass."""

    probs: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))
        object.__setattr__(self, "tail", float(self.tail))

    @property
    def n_cut(self) -> int:
        return len(self.probs) - 1

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def mean(self) -> float:
        """Mean photon number of the retained part."""
        return float(np.arange(len(self.probs)) @ self.probs)

    def padded(self, n_cut: int) -> np.ndarray:
        """Probabilities on ``0..n_cut``, zero-filled or cut (cut mass is lost)."""
        out = np.zeros(n_cut + 1)
        k = min(n_cut, self.n_cut) + 1
        out[:k] = self.probs[:k]
        return out

    def omitted(self, n_cut: int) -> float:
        """Mass outside ``0..n_cut``: the tail plus any retained entries beyond the cut."""
        return self.tail + float(self.probs[n_cut + 1:].sum())

    def truncate(self, n_cut: int) -> "PhotonPmf":
        return PhotonPmf(self.padded(n_cut), self.omitted(n_cut))


@dataclass(frozen=True)
class JointPmf:
    """Joint photon counts: axis 0 is mode a1, axes 1..n are detectors D1..Dn."""

    values: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "tail", float(self.tail))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s - 1 for s in self.values.shape)

    @property
    def n_detectors(self) -> int:
        return self.values.ndim - 1

    def output_marginal(self) -> PhotonPmf:
        axes = tuple(range(1, self.values.ndim))
        probs = self.values.sum(axis=axes) if axes else self.values
        return PhotonPmf(probs, self.tail)

    def axis_marginal(self, axis: int) -> PhotonPmf:
        others = tuple(i for i in range(self.values.ndim) if i != axis)
        return PhotonPmf(self.values.sum(axis=others), self.tail)


@dataclass(frozen=True)
class SourceOptics:
    """Beam-splitter settings of one party's passive-decoy source."""

    mu_laser: float
    t1: float = 0.5
    t2: float = 0.5
    cascade_ts: tuple[float, ...] = ()
    extinction_db: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "cascade_ts", tuple(float(t) for t in self.cascade_ts))
        if self.mu_laser < 0:
            raise DomainError(f"mu_laser must be >= 0, got {self.mu_laser}")
        for name in ("t1", "t2"):
            t = getattr(self, name)
            if not 0.0 <= t <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {t}")
        for t in self.cascade_ts:
            if not 0.0 < t < 1.0:
                raise DomainError(f"cascade transmittance must lie in (0, 1), got {t}")
        if self.extinction_db <= 0:
            raise DomainError("extinction ratio must be positive")

    @property
    def mu_s(self) -> float:
        return (1.0 - self.t1) * self.mu_laser

    @property
    def mu_r(self) -> float:
        return self.t1 * self.mu_laser

    @property
    def mu_code(self) -> float:
        return self.t2 * self.t1 * self.mu_laser


def poisson_pmf(mu: float, n_cut: int = DEFAULT_N_CUT) -> PhotonPmf:
    """Poisson distribution truncated at ``n_cut`` with the exact upper tail."""
    if mu < 0:
        raise DomainError(f"mean photon number must be >= 0, got {mu}")
    if n_cut < 0:
        raise DomainError("n_cut must be >= 0")
    k = np.arange(n_cut + 1)
    if mu == 0:
        probs = (k == 0).astype(float)
        return PhotonPmf(probs, 0.0)
    return PhotonPmf(stats.poisson.pmf(k, mu), float(stats.poisson.sf(n_cut, mu)))


def source_cut(mu: float, tol: float = SOURCE_TOL) -> int:
    """Smallest ``n`` whose Poisson tail beyond ``n`` is below ``tol``."""
    if mu == 0:
        return 0
    n = max(1, int(mu))
    while stats.poisson.sf(n, mu) >= tol:
        n += 1
    return n


@lru_cache(maxsize=200_000)
def _bs_probs(n: int, m: int, t: float) -> tuple[float, ...]:
    st, sr = math.sqrt(t), math.sqrt(1.0 - t)
    total = n + m
    norm = math.sqrt(math.factorial(n) * math.factorial(m))
    out = []
    for k in range(total + 1):
        # i photons of arm a and k-i of arm b end up in c
        amp = 0.0
        for i in range(max(0, k - m), min(k, n) + 1):
            j = k - i
            term = math.comb(n, i) * math.comb(m, j)
            term *= st ** i * sr ** (n - i) * sr ** j * st ** (m - j)
            if (m - j) % 2:
                term = -term
            amp += term
        amp *= math.sqrt(math.factorial(k) * math.factorial(total - k)) / norm
        out.append(amp * amp)
    return tuple(out)


def bs_fock_pmf(n: int, m: int, t: float) -> PhotonPmf:
    """Photon count in output ``c`` when ``|n, m>`` meets a beam splitter.

    Squares the collected amplitudes of
    ``(sqrt(t) c+ + sqrt(1-t) d+)^n (sqrt(1-t) c+ - sqrt(t) d+)^m |00>``.
    """
    if n < 0 or m < 0:
        raise DomainError("photon numbers must be >= 0")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"transmittance must lie in [0, 1], got {t}")
    return PhotonPmf(np.array(_bs_probs(int(n), int(m), float(t))), 0.0)


def _pair_weights(mu_s: float, mu_r: float, tol: float):
    """Truncated Poisson weights of both paths and the exact neglected mass."""
    ns, nr = source_cut(mu_s, tol), source_cut(mu_r, tol)
    ps = stats.poisson.pmf(np.arange(ns + 1), mu_s) if mu_s > 0 else np.array([1.0])
    pr = stats.poisson.pmf(np.arange(nr + 1), mu_r) if mu_r > 0 else np.array([1.0])
    sf_s = float(stats.poisson.sf(ns, mu_s)) if mu_s > 0 else 0.0
    sf_r = float(stats.poisson.sf(nr, mu_r)) if mu_r > 0 else 0.0
    return ps, pr, sf_s + sf_r - sf_s * sf_r


def _bs_table(nr: int, ns: int, t: float) -> np.ndarray:
    """``table[m, n, k]`` = P(k photons in c | m in arm a, n in arm b)."""
    table = np.zeros((nr + 1, ns + 1, nr + ns + 1))
    for m in range(nr + 1):
        for n in range(ns + 1):
            table[m, n, : m + n + 1] = _bs_probs(m, n, t)
    return table


def output_pmf_coherent(mu1: float, mu2: float, t: float, n_cut: int = DEFAULT_N_CUT,
                        tol: float = SOURCE_TOL) -> PhotonPmf:
    """Photon distribution of output a1 for phase-randomized inputs.

    ``mu1`` is the path-s intensity (arm b), ``mu2`` the path-r intensity
    (arm a, transmitted with ``t``).
    """
    if mu1 < 0 or mu2 < 0:
        raise DomainError("intensities must be >= 0")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"transmittance must lie in [0, 1], got {t}")
    ps, pr, lost = _pair_weights(mu1, mu2, tol)
    table = _bs_table(len(pr) - 1, len(ps) - 1, float(t))
    full = np.einsum("m,n,mnk->k", pr, ps, table)
    probs = np.zeros(n_cut + 1)
    k = min(n_cut + 1, len(full))
    probs[:k] = full[:k]
    return PhotonPmf(probs, lost + float(full[k:].sum()))


def _check_convention(convention: str):
    if convention not in CONVENTIONS:
        raise ConfigurationError(f"unknown joint convention {convention!r}; use one of {CONVENTIONS}")


def joint_pmf_two_intensity(optics: SourceOptics, n_cut: int = DEFAULT_N_CUT,
                            convention: str = "exact", det_cut: int | None = None,
                            tol: float = SOURCE_TOL) -> JointPmf:
    """Joint photon counts on (a1, D1) behind BS2.

    ``convention="exact"`` keeps the photon-number correlation between the two
    BS2 outputs (each Fock pair ``|m, n>`` yields ``k`` and ``m + n - k``).
    ``convention="product"`` uses the product of the two output marginals,
    which makes a1 independent of the detector.

    ``det_cut`` truncates the detector axis (defaults to the source cut so
    that the a1 marginal is reproduced to the source tolerance).
    """
    _check_convention(convention)
    mu_s, mu_r, t2 = optics.mu_s, optics.mu_r, optics.t2
    if convention == "product":
        det_cut = n_cut if det_cut is None else det_cut
        pa1 = output_pmf_coherent(mu_s, mu_r, t2, n_cut, tol)
        pa2 = output_pmf_coherent(mu_s, mu_r, 1.0 - t2, det_cut, tol)
        values = np.outer(pa1.probs, pa2.probs)
        return JointPmf(values, pa1.tail + pa2.tail - pa1.tail * pa2.tail)

    ps, pr, lost = _pair_weights(mu_s, mu_r, tol)
    ns, nr = len(ps) - 1, len(pr) - 1
    if det_cut is None:
        # q <= n + m and n + m is Poisson(mu_s + mu_r)
        det_cut = max(n_cut, source_cut(mu_s + mu_r, tol))
    table = _bs_table(nr, ns, float(t2))
    values = np.zeros((n_cut + 1, det_cut + 1))
    dropped = 0.0
    for m in range(nr + 1):
        for n in range(ns + 1):
            w = pr[m] * ps[n]
            total = m + n
            for k in range(total + 1):
                q = total - k
                if k <= n_cut and q <= det_cut:
                    values[k, q] += w * table[m, n, k]
                else:
                    dropped += w * table[m, n, k]
    return JointPmf(values, lost + dropped)


def split_pmf(parent: PhotonPmf, t3: float) -> JointPmf:
    """Binomial routing of a photon-number distribution over two outputs.

    ``values[j, l] = parent[j + l] * C(j + l, j) t3^j (1 - t3)^l``.
    """
    if not 0.0 < t3 < 1.0:
        raise DomainError(f"split transmittance must lie in (0, 1), got {t3}")
    kernel = _split_kernel(parent.n_cut, float(t3))
    values = np.einsum("q,qjl->jl", parent.probs, kernel)
    return JointPmf(values, parent.tail)


@lru_cache(maxsize=1024)
def _split_kernel(cut: int, t: float) -> np.ndarray:
    kernel = np.zeros((cut + 1, cut + 1, cut + 1))
    for q in range(cut + 1):
        for j in range(q + 1):
            kernel[q, j, q - j] = math.comb(q, j) * t ** j * (1.0 - t) ** (q - j)
    kernel.setflags(write=False)
    return kernel


def _split_last_axis(joint: JointPmf, t: float, convention: str) -> JointPmf:
    vals = joint.values
    cut = vals.shape[-1] - 1
    kernel = _split_kernel(cut, float(t))
    if convention == "exact":
        new = np.tensordot(vals, kernel, axes=([vals.ndim - 1], [0]))
        # the split kernel keeps every j + l = q <= cut, so nothing new is dropped
        return JointPmf(new, joint.tail)
    rest = vals.sum(axis=-1)
    last = split_pmf(joint.axis_marginal(vals.ndim - 1), t).values
    # both factors omit the joint's tail, so their product omits 2 T - T^2
    tail = joint.tail
    return JointPmf(np.multiply.outer(rest, last), tail + tail - tail * tail)


def cascade_joint_pmf(optics: SourceOptics, n_detectors: int, n_cut: int = DEFAULT_N_CUT,
                      convention: str = "exact", det_cut: int | None = None,
                      tol: float = SOURCE_TOL) -> JointPmf:
    """Joint counts on (a1, D1..Dn) for a cascade of splitters behind BS2.

    Each added splitter (transmittances ``optics.cascade_ts`` in order) divides
    the light of the last detector arm over two new detectors.
    """
    if n_detectors < 1:
        raise ConfigurationError("need at least one local detector")
    if len(optics.cascade_ts) < n_detectors - 1:
        raise ConfigurationError(
            f"{n_detectors} detectors need {n_detectors - 1} cascade transmittances, "
            f"got {len(optics.cascade_ts)}")
    joint = joint_pmf_two_intensity(optics, n_cut, convention, det_cut, tol)
    for t in optics.cascade_ts[: n_detectors - 1]:
        joint = _split_last_axis(joint, t, convention)
    return joint


def detector_means(optics: SourceOptics) -> list[float]:
    """Mean photon number reaching each local detector."""
    arm = optics.t2 * optics.mu_s + (1.0 - optics.t2) * optics.mu_r
    means = []
    for t in optics.cascade_ts:
        means.append(arm * t)
        arm *= 1.0 - t
    means.append(arm)
    return means

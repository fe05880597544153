"""Honest-run observables for the symmetric TF-QKD link.

Model (asymptotic, no sampling noise):

* Charlie sits in the middle; each arm has transmittance
  ``eta_side = eta_C * 10**(-alpha * L / 20)``, Charlie's detector efficiency folded in.
* Decoy mode: phase-randomized light, so a yield depends only on the total photon
  number, ``Y_nm = 1 - (1 - dark)^2 (1 - eta_side)^(n + m)``.
* Code mode: the two coherent pulses interfere; a fraction ``e_d`` of the light
  is routed to the wrong detector. Double clicks are discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .detector_conditioning import DetectorSpec
from .errors import DomainError, UndefinedErrorRate
from .exactsum import accurate_dot
from .fock_optics import PhotonPmf

PairKey = tuple[str, str]


@dataclass(frozen=True)
class ChannelSpec:
    distance_km: float = 0.0
    loss_db_per_km: float = 0.2
    e_d: float = 0.03
    charlie_det: DetectorSpec = field(default_factory=DetectorSpec)
    f_ec: float = 1.15

    def __post_init__(self):
        if self.distance_km < 0:
            raise DomainError("distance must be >= 0")
        if self.loss_db_per_km < 0:
            raise DomainError("fiber loss must be >= 0")
        if not 0.0 <= self.e_d <= 0.5:
            raise DomainError("misalignment error must lie in [0, 0.5]")
        if self.f_ec < 1.0:
            raise DomainError("error-correction efficiency must be >= 1")

    @property
    def eta_side(self) -> float:
        """Alice-to-Charlie transmittance including Charlie's detector."""
        return self.charlie_det.eta * 10 ** (-self.loss_db_per_km * self.distance_km / 2 / 10)

    @property
    def eta_total(self) -> float:
        """End-to-end Alice-to-Bob transmittance including one detector."""
        return self.charlie_det.eta * 10 ** (-self.loss_db_per_km * self.distance_km / 10)

    def at(self, distance_km: float) -> "ChannelSpec":
        return ChannelSpec(distance_km, self.loss_db_per_km, self.e_d, self.charlie_det, self.f_ec)


@dataclass(frozen=True)
class DecoyObservables:
    """Observed rates of one honest run.

    ``decoy_gains`` maps (alice pattern label, bob pattern label) to the gain;
    ``half_widths`` holds the uncertainty from the truncated photon tails.
    """

    q_code: float
    er_code: float
    decoy_gains: dict
    half_widths: dict
    mu_code: float


def yield_nm(n: int, m: int, ch: ChannelSpec) -> float:
    """Probability that at least one of Charlie's detectors fires."""
    if n < 0 or m < 0:
        raise DomainError("photon numbers must be >= 0")
    dark = ch.charlie_det.dark
    return 1.0 - (1.0 - dark) ** 2 * (1.0 - ch.eta_side) ** (n + m)


def yield_matrix(ch: ChannelSpec, n_cut: int) -> np.ndarray:
    """``Y[n, m]`` for ``n, m <= n_cut``."""
    idx = np.arange(n_cut + 1)
    tot = idx[:, None] + idx[None, :]
    dark = ch.charlie_det.dark
    return 1.0 - (1.0 - dark) ** 2 * (1.0 - ch.eta_side) ** tot


def _p_click(nu: float, dark: float) -> float:
    return 1.0 - (1.0 - dark) * math.exp(-nu)


def code_mode_observables(ch: ChannelSpec, mu_code: float) -> tuple[float, float]:
    """Code-mode gain ``Q_mu`` and bit error rate ``er_mu``.

    Raises :class:`UndefinedErrorRate` when the gain vanishes.
    """
    if mu_code < 0:
        raise DomainError("code-mode intensity must be >= 0")
    dark = ch.charlie_det.dark
    nu = 2.0 * mu_code * ch.eta_side
    p_right = _p_click(nu * (1.0 - ch.e_d), dark)
    p_wrong = _p_click(nu * ch.e_d, dark)
    wrong_only = p_wrong * (1.0 - p_right)
    q = p_right * (1.0 - p_wrong) + wrong_only
    if q <= 0.0:
        raise UndefinedErrorRate("code-mode gain is zero")
    return q, wrong_only / q


def decoy_gains(alice_dists: Mapping[str, PhotonPmf], bob_dists: Mapping[str, PhotonPmf],
                ch: ChannelSpec, n_cut: int | None = None,
                pairs: Iterable[PairKey] | None = None,
                mu_code: float | None = None) -> DecoyObservables:
    """Decoy-mode gains for each requested pattern pair.

    The photon mass beyond the truncation contributes a yield somewhere in
    ``[Y_00, 1]``; the gain is reported at the midpoint of that interval with
    the half-width alongside.
    """
    if pairs is None:
        pairs = [(a, b) for a in alice_dists for b in bob_dists]
    if n_cut is None:
        n_cut = max(p.n_cut for p in [*alice_dists.values(), *bob_dists.values()])
    ymat = yield_matrix(ch, n_cut)
    y_min = float(ymat[0, 0])
    gains, halves = {}, {}
    for a, b in pairs:
        pa = alice_dists[a].padded(n_cut)
        pb = bob_dists[b].padded(n_cut)
        # same coefficients as the LP rows, summed without intermediate rounding
        inside = accurate_dot(np.outer(pa, pb), ymat)
        tau = product_omitted(alice_dists[a], bob_dists[b], n_cut)
        gains[(a, b)] = inside + tau * (y_min + 1.0) / 2.0
        halves[(a, b)] = tau * (1.0 - y_min) / 2.0
    if mu_code is None:
        q, er = math.nan, math.nan
    else:
        q, er = code_mode_observables(ch, mu_code)
        mu_code = float(mu_code)
    return DecoyObservables(q, er, gains, halves, math.nan if mu_code is None else mu_code)


def product_omitted(pa: PhotonPmf, pb: PhotonPmf, n_cut: int) -> float:
    """Mass of the product distribution with either photon number beyond ``n_cut``."""
    ta, tb = pa.omitted(n_cut), pb.omitted(n_cut)
    return min(1.0, ta + tb - ta * tb)


def im_leakage_error(mu_s: float, extinction_db: float) -> float:
    """Error rate added by light leaking through the blocking modulator.

    Any photon from path s is assumed to randomize the bit (error 1/2).
    """
    if mu_s < 0:
        raise DomainError("intensity must be >= 0")
    if extinction_db <= 0:
        raise DomainError("extinction ratio must be positive")
    leaked = mu_s * 10 ** (-extinction_db / 10)
    return 0.5 * -math.expm1(-leaked)

"""Threshold-detector click model and click-pattern conditioned output statistics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ConditioningError, ConfigurationError, DomainError
from .fock_optics import JointPmf, PhotonPmf


@dataclass(frozen=True)
class DetectorSpec:
    """Threshold detector with efficiency ``eta`` and dark-count probability ``dark``."""

    eta: float = 0.20
    dark: float = 1e-7

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"efficiency must lie in [0, 1], got {self.eta}")
        if not 0.0 <= self.dark < 1.0:
            raise DomainError(f"dark-count probability must lie in [0, 1), got {self.dark}")

    def no_click(self, n) -> np.ndarray:
        n = np.asarray(n)
        return (1.0 - self.eta) ** n * (1.0 - self.dark)


Detectors = Union[DetectorSpec, Sequence[DetectorSpec]]


@dataclass(frozen=True)
class ModePattern:
    """Click (``True``) / no-click (``False``) outcome of D1..Dn."""

    clicks: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "clicks", tuple(bool(c) for c in self.clicks))

    @classmethod
    def parse(cls, label: str) -> "ModePattern":
        if not label or set(label) - {"0", "1"}:
            raise ConfigurationError(f"bad pattern label {label!r}")
        return cls(tuple(c == "1" for c in label))

    @property
    def label(self) -> str:
        return "".join("1" if c else "0" for c in self.clicks)

    def __len__(self):
        return len(self.clicks)

    def __str__(self):
        return self.label


def all_patterns(n_detectors: int) -> list[ModePattern]:
    """All ``2**n`` patterns, ordered like binary numbers with D1 most significant."""
    return [ModePattern(bits) for bits in itertools.product((False, True), repeat=n_detectors)]


def click_probs(det: DetectorSpec, n: int) -> tuple[float, float]:
    """``(p_click, p_noclick)`` for ``n`` incident photons."""
    if n < 0:
        raise DomainError("photon number must be >= 0")
    p_no = float(det.no_click(n))
    return 1.0 - p_no, p_no


def _detector_list(det: Detectors, n: int) -> list[DetectorSpec]:
    if isinstance(det, DetectorSpec):
        return [det] * n
    dets = list(det)
    if len(dets) != n:
        raise ConfigurationError(f"{n} detector axes but {len(dets)} detector specs")
    return dets


def _weighted(joint: JointPmf, det: Detectors, pattern: ModePattern) -> np.ndarray:
    n = joint.n_detectors
    if len(pattern) != n:
        raise ConfigurationError(
            f"pattern {pattern.label!r} has {len(pattern)} bits for {n} detectors")
    vals = joint.values
    for spec, click in zip(_detector_list(det, n), pattern.clicks):
        counts = np.arange(vals.shape[1])
        w = spec.no_click(counts)
        if click:
            w = 1.0 - w
        # contract the leading detector axis each round; axis 1 is always next
        vals = np.tensordot(vals, w, axes=([1], [0]))
    return vals


def mode_probability(joint: JointPmf, det: Detectors, pattern: ModePattern) -> float:
    """Probability of observing ``pattern`` (retained mass only)."""
    return float(_weighted(joint, det, pattern).sum())


def conditional_output_pmf(joint: JointPmf, det: Detectors, pattern: ModePattern) -> PhotonPmf:
    """Photon distribution of a1 given the detector outcome ``pattern``.

    The omitted joint mass is charged against the normalizer, so ``tail``
    upper-bounds the conditional mass beyond the truncation.
    """
    num = _weighted(joint, det, pattern)
    p = float(num.sum())
    if p <= 0.0:
        raise ConditioningError(f"pattern {pattern.label!r} has zero probability")
    probs = num / (p + joint.tail)
    return PhotonPmf(probs, joint.tail / (p + joint.tail))


def decoy_states(joint: JointPmf, det: Detectors,
                 patterns: Sequence[ModePattern] | None = None) -> dict[str, tuple[float, PhotonPmf]]:
    """``{label: (mode probability, conditional a1 pmf)}``.

    Zero-probability patterns are dropped: they constrain nothing.
    """
    patterns = all_patterns(joint.n_detectors) if patterns is None else patterns
    out = {}
    for pat in patterns:
        try:
            pmf = conditional_output_pmf(joint, det, pat)
        except ConditioningError:
            continue
        out[pat.label] = (mode_probability(joint, det, pat), pmf)
    return out


def merge_states(states: dict[str, tuple[float, PhotonPmf]],
                 groups: dict[str, Sequence[str]]) -> dict[str, tuple[float, PhotonPmf]]:
    """Coarse-grain decoy states by pooling patterns into groups.

    Each merged pmf is the probability-weighted mixture of its members, which
    is what an observer who cannot tell the members apart would see.
    """
    out = {}
    for label, members in groups.items():
        present = [states[m] for m in members if m in states]
        if not present:
            continue
        p = sum(w for w, _ in present)
        if p <= 0:
            continue
        n_cut = max(pmf.n_cut for _, pmf in present)
        probs = sum(w * pmf.padded(n_cut) for w, pmf in present) / p
        tail = sum(w * pmf.tail for w, pmf in present) / p
        out[label] = (p, PhotonPmf(probs, tail))
    return out


def or_groups(n_detectors: int, merge: Sequence[Sequence[int]]) -> dict[str, list[str]]:
    """Pattern groups seen when detector subsets are read out as one OR-detector.

    ``merge`` partitions ``range(n_detectors)``; each block becomes one virtual
    detector that clicks when any member clicks.
    """
    groups: dict[str, list[str]] = {}
    for pat in all_patterns(n_detectors):
        label = "".join("1" if any(pat.clicks[i] for i in block) else "0" for block in merge)
        groups.setdefault(label, []).append(pat.label)
    return groups

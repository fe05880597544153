"""Parameter optimization and distance sweeps over the decoy schemes.

Config files are flat ``key = value`` text with dotted section prefixes::

    channel.loss_db_per_km = 0.2
    sweep.schemes = passive2, passive4, infinite, plob
    sweep.distances_km = 0:400:20        # start:stop:step, inclusive
    optimizer.mu_laser = 0.02:0.6:15     # lo:hi:points

Unknown keys are rejected.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .channel_sim import ChannelSpec, code_mode_observables, decoy_gains, yield_nm
from .decoy_lp import (ESTIMATED_KEYS, active_decoy_distributions, build_constraints,
                       estimate_yields, infinite_decoy_bounds, passive_pairs)
from .detector_conditioning import DetectorSpec, decoy_states
from .errors import ConfigurationError, InfeasibleError, TFQKDError
from .fock_optics import CONVENTIONS, DEFAULT_N_CUT, SourceOptics, cascade_joint_pmf
from .keyrate import (SERIES_CUT, KeyRateReport, information_leakage, plob_bound,
                      secret_key_rate, x_upper_bounds)

SCHEMES = ("passive2", "passive4", "passive8", "active2", "active4", "infinite", "plob")
PASSIVE_DETECTORS = {"passive2": 1, "passive4": 2, "passive8": 3}
ACTIVE_SETTINGS = {"active2": 2, "active4": 4}
MAX_CASCADE = max(PASSIVE_DETECTORS.values()) - 1


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class GridRange:
    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if self.points < 1:
            raise ConfigurationError("a grid needs at least one point")
        if self.hi < self.lo:
            raise ConfigurationError(f"grid range {self.lo}..{self.hi} is reversed")
        if self.points == 1 and self.hi != self.lo:
            raise ConfigurationError("a one-point grid needs lo == hi")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.points - 1) if self.points > 1 else 0.0

    @classmethod
    def parse(cls, text: str) -> "GridRange":
        parts = [p.strip() for p in text.split(":")]
        try:
            if len(parts) == 1:
                v = float(parts[0])
                return cls(v, v, 1)
            if len(parts) == 3:
                return cls(float(parts[0]), float(parts[1]), int(parts[2]))
        except ValueError as exc:
            raise ConfigurationError(f"bad grid {text!r}: {exc}") from None
        raise ConfigurationError(f"grid must be 'value' or 'lo:hi:points', got {text!r}")


@dataclass(frozen=True)
class OptimizerConfig:
    mu_laser: GridRange = GridRange(0.02, 0.6, 15)
    t1: GridRange = GridRange(0.3, 0.95, 8)
    t2: GridRange = GridRange(0.3, 0.95, 8)
    cascade_t: GridRange = GridRange(0.55, 0.95, 5)
    # active schemes: code intensity and the largest decoy intensity
    mu_code: GridRange = GridRange(0.005, 0.1, 12)
    decoy_max: GridRange = GridRange(0.01, 0.4, 10)
    max_passes: int = 4


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    source_det: DetectorSpec = field(default_factory=DetectorSpec)
    extinction_db: float = 20.0
    schemes: tuple = SCHEMES
    distances_km: tuple = tuple(float(d) for d in range(0, 401, 20))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    n_cut: int = DEFAULT_N_CUT
    series_cut: int = SERIES_CUT
    convention: str = "exact"
    gains4: str = "anchored"
    gains8: str = "anchored"
    anchor8: str | None = None
    active_gains: str = "full"
    output_path: str | None = None
    precision: int = 10
    rate_floor: float = 0.0
    threads: int = 1

    def __post_init__(self):
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigurationError(f"unknown schemes {bad}; choose from {SCHEMES}")
        if self.convention not in CONVENTIONS:
            raise ConfigurationError(f"convention must be one of {CONVENTIONS}")
        for name in ("gains4", "gains8", "active_gains"):
            if getattr(self, name) not in ("anchored", "full"):
                raise ConfigurationError(f"{name} must be 'anchored' or 'full'")
        ct = self.optimizer.cascade_t
        if not (0.5 < ct.lo and ct.hi < 1.0):
            raise ConfigurationError("cascade transmittances must lie in (0.5, 1)")
        if any(d < 0 for d in self.distances_km):
            raise ConfigurationError("distances must be >= 0")
        if self.precision < 1:
            raise ConfigurationError("precision must be >= 1")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")


def _parse_bool_free_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _parse_distances(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    if ":" in text and "," not in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError("distance range must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigurationError("distance step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(max(count, 0)))
    return tuple(float(p) for p in _parse_bool_free_list(text))


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _str(text: str) -> str:
    return text.strip()


def _opt_str(text: str):
    text = text.strip()
    return None if text.lower() in ("", "none") else text


# key -> (section, attribute, parser)
_KEYS = {
    "channel.loss_db_per_km": ("channel", "loss_db_per_km", _float),
    "channel.e_d": ("channel", "e_d", _float),
    "channel.f_ec": ("channel", "f_ec", _float),
    "channel.detector_eta": ("charlie_det", "eta", _float),
    "channel.detector_dark": ("charlie_det", "dark", _float),
    "source.detector_eta": ("source_det", "eta", _float),
    "source.detector_dark": ("source_det", "dark", _float),
    "source.extinction_db": ("top", "extinction_db", _float),
    "source.convention": ("top", "convention", _str),
    "sweep.schemes": ("top", "schemes", lambda t: tuple(_parse_bool_free_list(t))),
    "sweep.distances_km": ("top", "distances_km", _parse_distances),
    "optimizer.mu_laser": ("optimizer", "mu_laser", GridRange.parse),
    "optimizer.t1": ("optimizer", "t1", GridRange.parse),
    "optimizer.t2": ("optimizer", "t2", GridRange.parse),
    "optimizer.cascade_t": ("optimizer", "cascade_t", GridRange.parse),
    "optimizer.mu_code": ("optimizer", "mu_code", GridRange.parse),
    "optimizer.decoy_max": ("optimizer", "decoy_max", GridRange.parse),
    "optimizer.max_passes": ("optimizer", "max_passes", _int),
    "lp.n_cut": ("top", "n_cut", _int),
    "lp.series_cut": ("top", "series_cut", _int),
    "lp.gains4": ("top", "gains4", _str),
    "lp.gains8": ("top", "gains8", _str),
    "lp.anchor8": ("top", "anchor8", _opt_str),
    "lp.active_gains": ("top", "active_gains", _str),
    "output.path": ("top", "output_path", _opt_str),
    "output.precision": ("top", "precision", _int),
    "output.rate_floor": ("top", "rate_floor", _float),
    "run.threads": ("top", "threads", _int),
}


def parse_config(text: str) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from ``key = value`` lines."""
    sections: dict[str, dict] = {"top": {}, "channel": {}, "charlie_det": {},
                                 "source_det": {}, "optimizer": {}}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        section, attr, parser = _KEYS[key]
        try:
            sections[section][attr] = parser(value)
        except ConfigurationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key}: {exc}") from None
    try:
        charlie = replace(DetectorSpec(), **sections["charlie_det"])
        channel = replace(ChannelSpec(), charlie_det=charlie, **sections["channel"])
        source_det = replace(DetectorSpec(), **sections["source_det"])
        optimizer = replace(OptimizerConfig(), **sections["optimizer"])
        return ExperimentConfig(channel=channel, source_det=source_det, optimizer=optimizer,
                                **sections["top"])
    except ConfigurationError:
        raise
    except ValueError as exc:    # domain errors from the parameter dataclasses
        raise ConfigurationError(str(exc)) from None


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` for the keys it understands."""
    def grid(g: GridRange) -> str:
        return repr(g.lo) if g.points == 1 else f"{g.lo!r}:{g.hi!r}:{g.points}"

    opt = cfg.optimizer
    values = {
        "channel.loss_db_per_km": repr(cfg.channel.loss_db_per_km),
        "channel.e_d": repr(cfg.channel.e_d),
        "channel.f_ec": repr(cfg.channel.f_ec),
        "channel.detector_eta": repr(cfg.channel.charlie_det.eta),
        "channel.detector_dark": repr(cfg.channel.charlie_det.dark),
        "source.detector_eta": repr(cfg.source_det.eta),
        "source.detector_dark": repr(cfg.source_det.dark),
        "source.extinction_db": repr(cfg.extinction_db),
        "source.convention": cfg.convention,
        "sweep.schemes": ", ".join(cfg.schemes),
        "sweep.distances_km": ", ".join(repr(d) for d in cfg.distances_km),
        "optimizer.mu_laser": grid(opt.mu_laser),
        "optimizer.t1": grid(opt.t1),
        "optimizer.t2": grid(opt.t2),
        "optimizer.cascade_t": grid(opt.cascade_t),
        "optimizer.mu_code": grid(opt.mu_code),
        "optimizer.decoy_max": grid(opt.decoy_max),
        "optimizer.max_passes": str(opt.max_passes),
        "lp.n_cut": str(cfg.n_cut),
        "lp.series_cut": str(cfg.series_cut),
        "lp.gains4": cfg.gains4,
        "lp.gains8": cfg.gains8,
        "lp.anchor8": cfg.anchor8 or "none",
        "lp.active_gains": cfg.active_gains,
        "output.path": cfg.output_path or "none",
        "output.precision": str(cfg.precision),
        "output.rate_floor": repr(cfg.rate_floor),
        "run.threads": str(cfg.threads),
    }
    return "".join(f"{k} = {v}\n" for k, v in values.items())


# -- single points ----------------------------------------------------------

@dataclass(frozen=True)
class SchemeParams:
    """Free parameters of one scheme.

    Passive schemes use ``mu_laser``, ``t1``, ``t2`` and ``cascade_ts``; active
    schemes use ``mu_code`` and ``decoys``; the infinite scheme only ``mu_code``.
    """

    mu_laser: float = math.nan
    t1: float = math.nan
    t2: float = math.nan
    cascade_ts: tuple = ()
    mu_code: float = math.nan
    decoys: tuple = ()


def active_intensities(n_settings: int, decoy_max: float) -> tuple:
    """Evenly spaced decoy ladder ``0, v/(n-1), ..., v``."""
    return tuple(decoy_max * k / (n_settings - 1) for k in range(n_settings))


def _failed(reason: str, params, q=math.nan, er=math.nan) -> KeyRateReport:
    return KeyRateReport(-math.inf, math.nan, q, er, None, params, None,
                         lp_gap_y11=math.nan, diagnostic=reason)


def _rate_from_yields(cfg, ch, mu_code, yields, params, gap) -> KeyRateReport:
    q, er = code_mode_observables(ch, mu_code)
    caps = x_upper_bounds(mu_code, yields, cfg.series_cut, q_mu=q)
    i_ae = information_leakage(caps)
    rate = secret_key_rate(q, er, i_ae, ch.f_ec)
    return KeyRateReport(rate, i_ae, q, er, caps, params, yields, lp_gap_y11=gap)


def _lp_report(cfg, ch, dists, pairs, mu_code, params) -> KeyRateReport:
    pairs = [(a, b) for a, b in pairs if a in dists and b in dists]
    obs = decoy_gains(dists, dists, ch, cfg.n_cut, pairs, mu_code)
    lp = build_constraints(dists, dists, obs, cfg.n_cut)
    try:
        yields = estimate_yields(lp, ESTIMATED_KEYS, lower=False)
    except InfeasibleError as exc:
        return _failed(f"decoy LP: {exc}", params)
    gap = yields.upper[(1, 1)] - yield_nm(1, 1, ch)
    return _rate_from_yields(cfg, ch, mu_code, yields, params, gap)


class PointEvaluator:
    """Evaluates one scheme at one distance; caches the source statistics.

    Decoy states depend only on the optics, so a sweep over distances reuses them.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._states: dict = {}

    def passive_states(self, n_detectors: int, optics: SourceOptics) -> dict:
        key = (n_detectors, optics)
        hit = self._states.get(key)
        if hit is None:
            joint = cascade_joint_pmf(optics, n_detectors, self.cfg.n_cut,
                                      convention=self.cfg.convention)
            states = decoy_states(joint, self.cfg.source_det)
            hit = {label: pmf for label, (_, pmf) in states.items()}
            self._states[key] = hit
        return hit

    def pairs_for(self, scheme: str) -> list:
        cfg = self.cfg
        if scheme in PASSIVE_DETECTORS:
            nd = PASSIVE_DETECTORS[scheme]
            if nd == 2:
                return passive_pairs(2, cfg.gains4)
            if nd >= 3:
                return passive_pairs(nd, cfg.gains8, cfg.anchor8)
            return passive_pairs(nd, "full")
        labels = [f"v{i}" for i in range(ACTIVE_SETTINGS[scheme])]
        if cfg.active_gains == "anchored" and len(labels) == 4:
            p1, p2, p3, p4 = labels
            return [(p4, p4), (p1, p4), (p2, p4), (p3, p4), (p4, p1), (p4, p2), (p4, p3),
                    (p1, p1), (p2, p2), (p3, p3)]
        return [(a, b) for a in labels for b in labels]

    def evaluate(self, scheme: str, distance_km: float, params: SchemeParams) -> KeyRateReport:
        cfg = self.cfg
        ch = cfg.channel.at(distance_km)
        if scheme == "plob":
            return KeyRateReport(plob_bound(ch.eta_total), math.nan, math.nan, math.nan,
                                 None, params, None)
        try:
            if scheme == "infinite":
                yields = infinite_decoy_bounds(ch, full_cut=cfg.series_cut)
                return _rate_from_yields(cfg, ch, params.mu_code, yields, params, 0.0)
            if scheme in PASSIVE_DETECTORS:
                nd = PASSIVE_DETECTORS[scheme]
                optics = SourceOptics(params.mu_laser, params.t1, params.t2,
                                      tuple(params.cascade_ts[:nd - 1]), cfg.extinction_db)
                dists = self.passive_states(nd, optics)
                return _lp_report(cfg, ch, dists, self.pairs_for(scheme), optics.mu_code, params)
            if scheme in ACTIVE_SETTINGS:
                dists = active_decoy_distributions(params.decoys, cfg.n_cut)
                return _lp_report(cfg, ch, dists, self.pairs_for(scheme), params.mu_code, params)
        except InfeasibleError as exc:
            return _failed(str(exc), params)
        except TFQKDError as exc:
            if isinstance(exc, ConfigurationError):
                raise
            return _failed(str(exc), params)
        raise ConfigurationError(f"unknown scheme {scheme!r}")


def evaluate_point(cfg: ExperimentConfig, scheme: str, distance_km: float,
                   params: SchemeParams) -> KeyRateReport:
    return PointEvaluator(cfg).evaluate(scheme, distance_km, params)


# -- optimization -----------------------------------------------------------

def _axes(cfg: ExperimentConfig, scheme: str) -> list[tuple[str, GridRange]]:
    opt = cfg.optimizer
    if scheme in PASSIVE_DETECTORS:
        nd = PASSIVE_DETECTORS[scheme]
        axes = [("mu_laser", opt.mu_laser), ("t1", opt.t1), ("t2", opt.t2)]
        axes += [(f"t{3 + i}", opt.cascade_t) for i in range(nd - 1)]
        return axes
    if scheme in ACTIVE_SETTINGS:
        return [("mu_code", opt.mu_code), ("decoy_max", opt.decoy_max)]
    if scheme == "infinite":
        return [("mu_code", opt.mu_code)]
    return []


def _params(scheme: str, point: dict) -> SchemeParams:
    if scheme in PASSIVE_DETECTORS:
        nd = PASSIVE_DETECTORS[scheme]
        return SchemeParams(mu_laser=point["mu_laser"], t1=point["t1"], t2=point["t2"],
                            cascade_ts=tuple(point[f"t{3 + i}"] for i in range(nd - 1)))
    if scheme in ACTIVE_SETTINGS:
        return SchemeParams(mu_code=point["mu_code"],
                            decoys=active_intensities(ACTIVE_SETTINGS[scheme], point["decoy_max"]))
    return SchemeParams(mu_code=point.get("mu_code", math.nan))


@dataclass(frozen=True)
class OptimizationResult:
    params: SchemeParams
    report: KeyRateReport
    all_negative: bool
    evaluations: int


def _better(a: tuple, b: tuple | None) -> bool:
    """Candidates are ``(rate, point values...)``; ties go to smaller leading values."""
    if b is None:
        return True
    if a[0] != b[0]:
        return a[0] > b[0]
    return a[1:] < b[1:]


def optimize_point(cfg: ExperimentConfig, scheme: str, distance_km: float,
                   evaluator: PointEvaluator | None = None) -> OptimizationResult:
    """Coordinate-wise grid search, then one round of half-step refinement.

    Each pass scans every axis over its full grid with the other coordinates
    held; passes repeat until nothing improves (at most ``max_passes``). The
    refinement then tries ``+-step/2`` on each axis around the best point and
    keeps the best of those. The infinite scheme is one-dimensional, so it is
    polished further with a bounded scalar search.
    """
    ev = evaluator or PointEvaluator(cfg)
    if scheme == "plob":
        params = SchemeParams()
        return OptimizationResult(params, ev.evaluate(scheme, distance_km, params), False, 1)
    axes = _axes(cfg, scheme)
    names = [n for n, _ in axes]
    cache: dict = {}

    def score(point: dict) -> tuple:
        key = tuple(point[n] for n in names)
        if key not in cache:
            cache[key] = ev.evaluate(scheme, distance_km, _params(scheme, point))
        return (cache[key].rate,) + key

    # start at the grid point nearest each range's centre
    point = {n: float(g.values[(g.points - 1) // 2]) for n, g in axes}
    best = score(point)
    for _ in range(cfg.optimizer.max_passes):
        improved = False
        for name, grid in axes:
            for v in grid.values:
                trial = dict(point, **{name: float(v)})
                cand = score(trial)
                if _better(cand, best):
                    best, point, improved = cand, trial, True
        if not improved:
            break
    coarse = best
    for name, grid in axes:
        half = grid.step / 2.0
        if half == 0.0:
            continue
        base = dict(point)
        for v in (base[name] - half, base[name] + half):
            if v < grid.lo or v > grid.hi:
                continue
            trial = dict(base, **{name: v})
            cand = score(trial)
            if _better(cand, best):
                best, point = cand, trial
    assert best[0] >= coarse[0]
    if scheme == "infinite" and axes[0][1].points > 1:
        grid = axes[0][1]
        lo = max(grid.lo, point["mu_code"] - grid.step)
        hi = min(grid.hi, point["mu_code"] + grid.step)
        res = minimize_scalar(lambda m: -score({"mu_code": float(m)})[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10})
        cand = score({"mu_code": float(res.x)})
        if _better(cand, best):
            best, point = cand, {"mu_code": float(res.x)}
    report = cache[tuple(point[n] for n in names)]
    return OptimizationResult(_params(scheme, point), report, not best[0] > 0, len(cache))


# -- sweeps -----------------------------------------------------------------

def csv_header(cfg: ExperimentConfig) -> list[str]:
    return ["scheme", "distance_km", "rate", "log10_rate", "i_ae", "q_mu", "er_mu",
            "mu_laser", "t1", "t2"] + [f"t{3 + i}" for i in range(MAX_CASCADE)] + [
            "lp_gap_y11", "mu_code", "decoy_intensities", "flag"]


def format_number(x: float, digits: int) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{digits}g}"


def _row(cfg: ExperimentConfig, scheme: str, distance: float, res: OptimizationResult) -> list:
    d = cfg.precision
    rep, p = res.report, res.params
    shown = rep.rate if rep.rate > cfg.rate_floor else cfg.rate_floor
    log_rate = math.log10(rep.rate) if rep.rate > 0 else math.nan
    cascade = list(p.cascade_ts) + [math.nan] * (MAX_CASCADE - len(p.cascade_ts))
    if scheme in PASSIVE_DETECTORS:
        mu_code = p.t1 * p.t2 * p.mu_laser
    else:
        mu_code = p.mu_code
    flag = rep.diagnostic or ("all_negative" if res.all_negative and scheme != "plob" else "")
    return ([scheme, format_number(distance, d), format_number(shown, d), format_number(log_rate, d),
             format_number(rep.i_ae, d), format_number(rep.q_mu, d), format_number(rep.er_mu, d),
             format_number(p.mu_laser, d), format_number(p.t1, d), format_number(p.t2, d)]
            + [format_number(t, d) for t in cascade]
            + [format_number(rep.lp_gap_y11, d), format_number(mu_code, d),
               ";".join(format_number(v, d) for v in p.decoys), flag])


def sweep_results(cfg: ExperimentConfig) -> list[tuple[str, float, OptimizationResult]]:
    """Optimized results in scheme-major, distance-ascending order."""
    distances = sorted(cfg.distances_km)
    jobs = [(s, d) for s in cfg.schemes for d in distances]
    evaluators = {s: PointEvaluator(cfg) for s in cfg.schemes}

    def run(job):
        scheme, dist = job
        return optimize_point(cfg, scheme, dist, evaluators[scheme])

    if cfg.threads > 1:
        # one evaluator per scheme is shared, so keep each scheme on one worker
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            per_scheme = list(pool.map(lambda s: [run((s, d)) for d in distances], cfg.schemes))
        results = [r for rows in per_scheme for r in rows]
    else:
        results = [run(j) for j in jobs]
    return [(s, d, r) for (s, d), r in zip(jobs, results)]


def run_sweep(cfg: ExperimentConfig, out=None, results=None) -> str:
    """Optimize every (scheme, distance) and return the CSV text.

    If ``out`` (a path) or ``cfg.output_path`` is set the text is also written
    there. ``results`` reuses the output of :func:`sweep_results`.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(cfg))
    if results is None:
        results = sweep_results(cfg)
    for scheme, dist, res in results:
        writer.writerow(_row(cfg, scheme, dist, res))
    text = buf.getvalue()
    path = out or cfg.output_path
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_sweep(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))

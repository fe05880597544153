"""Command-line entry point: ``sweep``, ``optimize`` and ``validate``.

Exit codes: 0 success, 1 failed validation check, 2 configuration error,
3 numerical infeasibility (some point could not be evaluated).
"""

from __future__ import annotations

import argparse
import contextlib
import random
import sys
from dataclasses import replace

import numpy as np

from .errors import ConfigurationError
from .experiments import SCHEMES, ExperimentConfig, load_config, optimize_point, run_sweep
from .experiments import format_number, sweep_results
from .validation import format_report, run_validation

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3

_NUMPY_RNG = ("default_rng", "RandomState", "Generator", "seed", "random", "rand", "randn",
              "randint", "random_sample", "uniform", "normal", "choice", "shuffle", "permutation")
_STDLIB_RNG = ("random", "seed", "randint", "randrange", "uniform", "gauss", "choice",
               "choices", "shuffle", "sample", "normalvariate", "getrandbits")


class RandomnessUsed(RuntimeError):
    pass


def _refuse(name):
    def guard(*args, **kwargs):
        raise RandomnessUsed(f"random number generator used under --seedless: {name}")
    return guard


@contextlib.contextmanager
def forbid_rng():
    """Replace the numpy and stdlib RNG entry points with functions that raise."""
    saved = []
    for module, names, prefix in ((np.random, _NUMPY_RNG, "numpy.random"),
                                  (random, _STDLIB_RNG, "random")):
        for name in names:
            if hasattr(module, name):
                saved.append((module, name, getattr(module, name)))
                setattr(module, name, _refuse(f"{prefix}.{name}"))
    try:
        yield
    finally:
        for module, name, original in saved:
            setattr(module, name, original)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    results = sweep_results(cfg)
    text = run_sweep(cfg, args.out, results=results)
    if not (args.out or cfg.output_path):
        sys.stdout.write(text)
    failed = [(s, d, r.report.diagnostic) for s, d, r in results if r.report.diagnostic]
    for scheme, dist, why in failed:
        print(f"infeasible: {scheme} at {dist:g} km: {why}", file=sys.stderr)
    return EXIT_INFEASIBLE if failed else EXIT_OK


def _cmd_optimize(args) -> int:
    cfg = _config(args)
    if args.scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {args.scheme!r}; choose from {SCHEMES}")
    res = optimize_point(cfg, args.scheme, args.distance)
    rep, p = res.report, res.params
    digits = cfg.precision
    lines = [f"scheme = {args.scheme}"]
    for name, value in (("distance_km", args.distance), ("rate", rep.rate), ("i_ae", rep.i_ae),
                        ("q_mu", rep.q_mu), ("er_mu", rep.er_mu), ("mu_laser", p.mu_laser),
                        ("t1", p.t1), ("t2", p.t2), ("mu_code", p.mu_code)):
        if value == value:
            lines.append(f"{name} = {format_number(value, digits)}")
    for i, t in enumerate(p.cascade_ts):
        lines.append(f"t{3 + i} = {format_number(t, digits)}")
    if p.decoys:
        lines.append("decoys = " + ", ".join(format_number(v, digits) for v in p.decoys))
    lines.append(f"evaluations = {res.evaluations}")
    if res.all_negative and args.scheme != "plob":
        lines.append("flag = all_negative")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if rep.diagnostic:
        print(f"infeasible: {rep.diagnostic}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_validate(args) -> int:
    results = run_validation()
    text = format_report(results)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="passive-tfqkd",
                                     description="Passive decoy-state TF-QKD key-rate experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the result to this file")
    common.add_argument("--threads", type=int, default=None, help="worker threads for sweeps")
    common.add_argument("--seedless", action="store_true",
                        help="fail if any random number generator is called")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="optimize every scheme and distance, emit CSV")
    p.add_argument("config", nargs="?", help="key = value config file (defaults if omitted)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("optimize", parents=[common], help="optimize one scheme at one distance")
    p.add_argument("config", nargs="?")
    p.add_argument("--scheme", required=True)
    p.add_argument("--distance", type=float, required=True, help="distance in km")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("validate", parents=[common], help="run the oracle and property report")
    p.set_defaults(func=_cmd_validate, config=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    guard = forbid_rng() if args.seedless else contextlib.nullcontext()
    try:
        with guard:
            return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, FileNotFoundError) else 1


if __name__ == "__main__":
    sys.exit(main())

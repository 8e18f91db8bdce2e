"""Command-line interface.

Subcommands: ``calibrate``, ``run``, ``simulate``, ``bounds``, ``fixture``.
Any option may also come from a JSON file given by ``--config``, whose keys
are option names with dashes replaced by underscores; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bounds import (DiscreteLaw, delay_bound_lorden, delay_bound_no_separation,
                     delay_bound_well_separated, divergence_and_variance,
                     g_alpha_upper_bound, log_increment_mean, log_increment_variance)
from .calibration import (AdaptiveCalibration, MixtureCalibration,
                          build_adaptive_calibration, compute_baseline)
from .detectors import BOTH, CUSUM, SR, DetectorState, AdaptiveState, run_until_stop
from .errors import EXIT_CODES, ConfigError, EDetectError
from .increments import EXACT_BOUNDED, EXP_BERNOULLI, EXP_BOUNDED, delta_bounds_bounded
from .psi import PsiFamily
from .records import dumps, emit_path, ingest_csv, load_calibration, write_json
from .simulate import (DetectorConfig, binomial_grid, estimate_arl, estimate_delay,
                       plus_minus_fixture, two_point)

FAMILIES = ("bernoulli", "bounded")


def _add_calibration_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("calibration")
    g.add_argument("--calibration", help="load a saved calibration instead of computing one")
    g.add_argument("--family", choices=FAMILIES, help="observation family")
    g.add_argument("--p0", type=float, help="Bernoulli pre-change success bound")
    g.add_argument("--mean-bound", type=float, help="bounded pre-change mean bound m")
    g.add_argument("--delta", type=float, help="bounded: minimum post-change mean gap")
    g.add_argument("--delta-lower", type=float, help="lower bound on Delta*")
    g.add_argument("--delta-upper", type=float, help="upper bound on Delta*")
    g.add_argument("--alpha", type=float, help="ARL level (ARL >= 1/alpha)")
    g.add_argument("--k-max", type=int, help="maximum number of baselines (default 1000)")
    g.add_argument("--eps", type=float, help="threshold bisection tolerance (default 1e-9)")
    g.add_argument("--mixture", choices=("finite", "adaptive"), help="mixture type")
    g.add_argument("--r", type=float, help="adaptive: importance weight in (0,1)")
    g.add_argument("--delta0", type=float, help="adaptive: upper guess Delta_0")
    g.add_argument("--schedule-density", type=float, help="adaptive: schedule growth m >= 1")
    g.add_argument("--k0", type=int, help="adaptive: K_max of the core (default --k-max)")


def _add_detector_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=(SR, CUSUM, BOTH), help="detector statistic (default sr)")
    p.add_argument("--c-alpha", type=float, help="CUSUM threshold override in (1, 1/alpha]")
    p.add_argument("--increment", choices=("exact", "exp"),
                   help="bounded increments: exact (default) or exponential surrogate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edetect", description="E-detectors for sequential changepoint detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("calibrate", help="compute and save a mixture calibration")
    p.add_argument("--config", help="JSON file of option values")
    _add_calibration_args(p)
    p.add_argument("--output", help="where to write the calibration JSON")

    p = sub.add_parser("run", help="run a detector over a CSV stream")
    p.add_argument("--config", help="JSON file of option values")
    _add_calibration_args(p)
    _add_detector_args(p)
    p.add_argument("--input", help="CSV file with observations")
    p.add_argument("--column", help="column index or header name (default 0)")
    p.add_argument("--no-header", action="store_true", default=None,
                   help="the CSV has no header row")
    p.add_argument("--lo", type=float, help="raw lower bound for normalization")
    p.add_argument("--hi", type=float, help="raw upper bound for normalization")
    p.add_argument("--truncation", type=int, help="stop after this many observations")
    p.add_argument("--full-path", action="store_true", default=None,
                   help="keep going after the alarm")
    p.add_argument("--output", help="path CSV to write")
    p.add_argument("--report", help="run report JSON to write")

    p = sub.add_parser("simulate", help="Monte-Carlo run length or delay")
    p.add_argument("--config", help="JSON file of option values")
    _add_calibration_args(p)
    _add_detector_args(p)
    p.add_argument("--target", choices=("arl", "delay"), help="what to estimate (default arl)")
    p.add_argument("--law", choices=("bernoulli", "two_point", "binomial_grid"),
                   help="stream law (default: bernoulli / two_point by family)")
    p.add_argument("--law-mean", type=float, help="mean of the stream law")
    p.add_argument("--grid-n", type=int, help="binomial_grid resolution (default 10)")
    p.add_argument("--replications", type=int, help="number of replications (default 1000)")
    p.add_argument("--horizon", type=int, help="truncation horizon (default 10/alpha)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--output", help="report JSON to write")

    p = sub.add_parser("bounds", help="delay bounds for a post-change law")
    p.add_argument("--config", help="JSON file of option values")
    _add_calibration_args(p)
    p.add_argument("--law", choices=("bernoulli", "two_point", "binomial_grid"))
    p.add_argument("--law-mean", type=float, help="post-change mean (q for Bernoulli)")
    p.add_argument("--grid-n", type=int, help="binomial_grid resolution (default 10)")
    p.add_argument("--output", help="report JSON to write")

    p = sub.add_parser("fixture", help="write a synthetic Plus-Minus style CSV")
    p.add_argument("--config", help="JSON file of option values")
    p.add_argument("--n", type=int, help="stream length (default 600)")
    p.add_argument("--nu", type=int, help="changepoint; omit for no change")
    p.add_argument("--pre-mean", type=float, help="pre-change raw mean (default -3)")
    p.add_argument("--post-mean", type=float, help="post-change raw mean (default 6)")
    p.add_argument("--sd", type=float, help="raw standard deviation (default 12)")
    p.add_argument("--seed", type=int, help="seed (default 0)")
    p.add_argument("--output", help="CSV to write")
    return parser


DEFAULTS = {
    "k_max": 1000, "eps": 1e-9, "mixture": "finite", "mode": SR, "increment": "exact",
    "column": "0", "no_header": False, "full_path": False, "target": "arl",
    "grid_n": 10, "replications": 1000, "seed": 0, "workers": 1, "n": 600,
    "pre_mean": -3.0, "post_mean": 6.0, "sd": 12.0, "schedule_density": 1.0,
}


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse flags and merge a ``--config`` JSON file underneath them."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(cfg, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        for key, val in cfg.items():
            key = key.replace("-", "_")
            if key in ("command", "config") or not hasattr(args, key):
                raise ConfigError(f"{args.config}: unknown option {key!r}")
            if getattr(args, key) is None:
                setattr(args, key, val)
    for key, val in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, val)
    return args


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required here")


def family_from_args(args) -> PsiFamily:
    _require(args, "family")
    if args.family == "bernoulli":
        _require(args, "p0")
        return PsiFamily.bernoulli(args.p0)
    _require(args, "mean_bound")
    if not (0.0 < args.mean_bound < 1.0):
        raise ConfigError(f"--mean-bound must be in (0,1), got {args.mean_bound}")
    return PsiFamily.subexponential()


def calibration_from_args(args):
    """Load or compute the calibration described by the arguments."""
    if args.calibration:
        cal = load_calibration(args.calibration)
        core = cal.core if isinstance(cal, AdaptiveCalibration) else cal
        if args.family is None:
            args.family = "bernoulli" if core.family.family == "bernoulli" else "bounded"
        if args.family == "bernoulli" and args.p0 is None:
            args.p0 = core.family.p0
        return cal
    fam = family_from_args(args)
    _require(args, "alpha")
    d_lo, d_hi = args.delta_lower, args.delta_upper
    if args.family == "bounded" and args.delta is not None:
        auto_lo, auto_hi = delta_bounds_bounded(args.mean_bound, args.delta)
        d_lo = auto_lo if d_lo is None else d_lo
        d_hi = auto_hi if d_hi is None else d_hi
    if args.mixture == "adaptive":
        if d_lo is None:
            raise ConfigError("adaptive mixtures need --delta-lower (or --delta)")
        _require(args, "r", "delta0")
        k0 = args.k0 if args.k0 is not None else args.k_max
        return build_adaptive_calibration(args.alpha, d_lo, args.delta0, args.r,
                                          args.schedule_density, k0, fam, args.eps)
    if d_lo is None or d_hi is None:
        raise ConfigError("finite mixtures need --delta-lower and --delta-upper "
                          "(or --delta for bounded data)")
    return compute_baseline(args.alpha, d_lo, d_hi, args.k_max, fam, args.eps)


def _increment_kind(args) -> tuple:
    if args.family == "bernoulli":
        return EXP_BERNOULLI, args.p0
    _require(args, "mean_bound")
    kind = EXACT_BOUNDED if getattr(args, "increment", "exact") == "exact" else EXP_BOUNDED
    return kind, args.mean_bound


def _summary(cal) -> dict:
    if isinstance(cal, AdaptiveCalibration):
        return {"type": "adaptive", "alpha": cal.alpha, "g_core": cal.g_core,
                "K_L": cal.K_L, "eta": cal.eta, "s": cal.s, "W": cal.W,
                "total_weight": cal.total_weight(), "margin": cal.margin()}
    return {"type": "mixture", "alpha": cal.alpha, "g_alpha": cal.g_alpha,
            "K_alpha": cal.K_alpha, "n_components": cal.n_components, "eta": cal.eta,
            "W": cal.W, "single_baseline": cal.single_baseline}


def cmd_calibrate(args) -> int:
    cal = calibration_from_args(args)
    if args.output:
        write_json(cal.to_dict(), args.output)
    sys.stdout.write(dumps(_summary(cal)))
    return 0


def _detector_config(args, cal) -> DetectorConfig:
    kind, param = _increment_kind(args)
    if isinstance(cal, AdaptiveCalibration):
        return DetectorConfig.adaptive_from(cal, kind, param, args.mode, args.c_alpha)
    return DetectorConfig.finite(cal, kind, param, args.mode, args.c_alpha)


def cmd_run(args) -> int:
    cal = calibration_from_args(args)
    _require(args, "input")
    norm = None
    if args.lo is not None or args.hi is not None:
        _require(args, "lo", "hi")
        norm = (args.lo, args.hi)
    x = ingest_csv(args.input, args.column, header=not args.no_header, normalization=norm)
    cfg = _detector_config(args, cal)
    state = cfg.make_state()
    res = run_until_stop(state, x, cfg.threshold, args.truncation,
                         threshold_cs=cfg.threshold_cs, full_path=bool(args.full_path))
    report = res.summary()
    report["n_observations"] = int(x.size)
    report["calibration"] = _summary(cal)
    if args.output:
        emit_path(res, args.output)
    if args.report:
        write_json(report, args.report)
    sys.stdout.write(dumps(report))
    return 0


def _law_from_args(args, default_mean: Optional[float] = None) -> DiscreteLaw:
    mean = args.law_mean if args.law_mean is not None else default_mean
    if mean is None:
        raise ConfigError("--law-mean is required here")
    law = args.law or ("bernoulli" if args.family == "bernoulli" else "two_point")
    if args.family == "bernoulli" and law != "bernoulli":
        raise ConfigError("Bernoulli data needs --law bernoulli")
    if law == "binomial_grid":
        return binomial_grid(mean, args.grid_n)
    return two_point(mean)


def cmd_simulate(args) -> int:
    cal = calibration_from_args(args)
    cfg = _detector_config(args, cal)
    boundary = cfg.param
    if args.target == "arl":
        law = _law_from_args(args, boundary)
        rep = estimate_arl(cfg, law, args.replications, args.horizon, args.seed, args.workers)
    else:
        law = _law_from_args(args)
        rep = estimate_delay(cfg, law, args.replications, args.horizon, args.seed, args.workers)
    reps = rep if isinstance(rep, dict) else {cfg.mode: rep}
    out = {"target": args.target, "law": {"values": law.values, "probs": law.probs},
           "seed": args.seed, "calibration": _summary(cal),
           "reports": {m: r.to_dict() for m, r in reps.items()}}
    if args.output:
        write_json(out, args.output)
    sys.stdout.write(dumps(out))
    return 0


def cmd_bounds(args) -> int:
    cal = calibration_from_args(args)
    law = _law_from_args(args)
    fam = cal.family if isinstance(cal, AdaptiveCalibration) else cal.family
    m = None if args.family == "bernoulli" else args.mean_bound
    D, V, dstar = divergence_and_variance(fam, law, mean_bound=m)
    out = {"D": D, "V": V, "Delta_star": dstar, "calibration": _summary(cal)}
    if isinstance(cal, AdaptiveCalibration):
        v0 = log_increment_variance(fam, law, cal.core.lambdas[0], m)
        out["no_separation"] = delay_bound_no_separation(cal, D, V, dstar, v0).to_dict()
    elif cal.single_baseline:
        lam = cal.lambdas[0]
        D1 = log_increment_mean(fam, law, lam, m)
        V1 = log_increment_variance(fam, law, lam, m)
        if not D1 > 0:
            raise ConfigError("the single baseline has nonpositive drift under this law")
        out["lorden"] = delay_bound_well_separated(cal, D1, V1).to_dict()
    else:
        out["well_separated"] = delay_bound_well_separated(cal, D, V).to_dict()
        g_up = g_alpha_upper_bound(cal.alpha, cal.D_L, cal.D_U)
        out["g_alpha_upper_bound"] = g_up
        out["well_separated_upper_g"] = delay_bound_lorden(g_up, D, V)
    if args.output:
        write_json(out, args.output)
    sys.stdout.write(dumps(out))
    return 0


def cmd_fixture(args) -> int:
    _require(args, "output")
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    x = plus_minus_fixture(args.n, args.nu, args.pre_mean, args.post_mean, args.sd, args.seed)
    with open(args.output, "w") as fh:
        fh.write("plus_minus\n")
        for v in x:
            fh.write("%d\n" % int(v))
    sys.stdout.write(dumps({"n": args.n, "nu": args.nu, "output": args.output}))
    return 0


COMMANDS = {"calibrate": cmd_calibrate, "run": cmd_run, "simulate": cmd_simulate,
            "bounds": cmd_bounds, "fixture": cmd_fixture}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except EDetectError as exc:
        print(f"edetect: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"edetect: I/O error: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    except (OverflowError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"edetect: numeric error: {exc}", file=sys.stderr)
        return EXIT_CODES["numeric"]


if __name__ == "__main__":
    sys.exit(main())

"""Synthetic streams and Monte-Carlo estimates of run length and delay.

Every replication draws from its own generator seeded by ``(seed, rep)``,
and observations are produced by inverse-CDF lookup on uniform draws. The
numbers a replication sees therefore do not depend on how replications are
batched or spread over worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import DiscreteLaw
from .calibration import AdaptiveCalibration, MixtureCalibration
from .detectors import BOTH, CUSUM, SR, AdaptiveState, DetectorState, _check_mode, crossed, increment_tuple
from .errors import ConfigError
from .increments import EXP_BERNOULLI, TRIVIAL, check_observations, log_increments

CHUNK = 256
BLOCK = 256
Z95 = 1.6448536269514722


def bernoulli(p: float) -> DiscreteLaw:
    """Bernoulli(p) on {0, 1}."""
    return DiscreteLaw.bernoulli(p)


def two_point(mean: float) -> DiscreteLaw:
    """Bounded law on {0, 1} with the given mean (the extremal bounded law)."""
    return DiscreteLaw.bernoulli(mean)


def binomial_grid(mean: float, n: int = 10) -> DiscreteLaw:
    """Binomial(n, mean)/n on the grid {0, 1/n, ..., 1}; unimodal and bounded."""
    from scipy.stats import binom

    if not (0.0 <= mean <= 1.0) or int(n) < 1:
        raise ConfigError(f"binomial_grid needs mean in [0,1] and n >= 1, got {mean}, {n}")
    k = np.arange(int(n) + 1)
    probs = binom.pmf(k, int(n), mean)
    probs = probs / probs.sum()
    return DiscreteLaw(tuple(k / n), tuple(probs))


def sample_law(law: DiscreteLaw, u: np.ndarray) -> np.ndarray:
    """Map uniforms on [0, 1) to draws from ``law``."""
    cdf = np.cumsum(np.asarray(law.probs, dtype=float))
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, len(law.values) - 1)
    return np.asarray(law.values, dtype=float)[idx]


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rep)]))


@dataclass(frozen=True)
class StreamSpec:
    """Pre-change law, post-change law and changepoint ν (None = never)."""

    pre_change: DiscreteLaw
    post_change: Optional[DiscreteLaw] = None
    nu: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.nu is not None:
            if int(self.nu) < 0:
                raise ConfigError(f"changepoint must be >= 0, got {self.nu}")
            if self.post_change is None:
                raise ConfigError("a finite changepoint needs a post-change law")

    def law_at(self, t: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Draws for 0-based time indices t from uniforms u."""
        x = sample_law(self.pre_change, u)
        if self.nu is not None:
            post = t >= self.nu
            if post.any():
                x = np.where(post, sample_law(self.post_change, u), x)
        return x


def generate_stream(spec: StreamSpec, n: int, rep: int = 0) -> np.ndarray:
    """Deterministic stream of length n for replication ``rep``."""
    if int(n) < 1:
        raise ConfigError(f"stream length must be >= 1, got {n}")
    u = rep_rng(spec.seed, rep).random(int(n))
    return spec.law_at(np.arange(int(n)), u)


def plus_minus_fixture(n: int, nu: Optional[int], pre_mean: float = -3.0,
                       post_mean: float = 6.0, sd: float = 12.0, seed: int = 0,
                       lo: float = -80.0, hi: float = 80.0) -> np.ndarray:
    """Integer-valued raw scores with a mean shift at ν, clipped to [lo, hi]."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    means = np.full(int(n), float(pre_mean))
    if nu is not None:
        means[int(nu):] = post_mean
    x = np.rint(rng.normal(means, sd))
    return np.clip(x, lo, hi)


@dataclass(frozen=True)
class DetectorConfig:
    """Picklable description of a detector for simulation."""

    kind: str
    param: Optional[float]
    lambdas: tuple
    psis: tuple
    log_omegas: tuple
    alpha: float
    mode: str = SR
    threshold: float = 0.0
    threshold_cs: float = 0.0
    adaptive: Optional[AdaptiveCalibration] = None
    constant_schedule: bool = False

    @classmethod
    def finite(cls, cal: MixtureCalibration, kind: str = EXP_BERNOULLI,
               param: Optional[float] = None, mode: str = SR,
               c_alpha: Optional[float] = None) -> "DetectorConfig":
        kind, param, lambdas, psis = increment_tuple(cal, kind, param)
        th = -math.log(cal.alpha)
        return cls(kind, param, tuple(lambdas), tuple(psis), tuple(cal.log_omegas),
                   cal.alpha, _check_mode(mode), th, _cs_threshold(cal.alpha, c_alpha))

    @classmethod
    def adaptive_from(cls, acal: AdaptiveCalibration, kind: str, param=None,
                      mode: str = SR, c_alpha: Optional[float] = None,
                      constant_schedule: bool = False) -> "DetectorConfig":
        kind, param, lambdas, psis = increment_tuple(acal.core, kind, param)
        log_w = tuple(np.log(np.asarray(acal.core_omegas)))
        th = -math.log(acal.alpha)
        return cls(kind, param, tuple(lambdas), tuple(psis), log_w, acal.alpha,
                   _check_mode(mode), th, _cs_threshold(acal.alpha, c_alpha),
                   acal, bool(constant_schedule))

    @classmethod
    def trivial(cls, alpha: float, mode: str = SR) -> "DetectorConfig":
        th = -math.log(alpha)
        return cls(TRIVIAL, None, (0.0,), (0.0,), (0.0,), alpha, _check_mode(mode), th, th)

    def make_state(self):
        if self.adaptive is not None:
            sched = None
            if self.constant_schedule:
                K_L = self.adaptive.K_L
                sched = _ConstantSchedule(K_L)
            return AdaptiveState(self.adaptive, self.kind, self.param, self.mode, sched)
        return DetectorState(self.log_omegas, self.mode,
                             (self.kind, self.param, self.lambdas, self.psis))


def _cs_threshold(alpha: float, c_alpha: Optional[float]) -> float:
    if c_alpha is None:
        return -math.log(alpha)
    if not (1.0 < c_alpha <= 1.0 / alpha):
        raise ConfigError(f"c_alpha must be in (1, 1/alpha], got {c_alpha}")
    return math.log(c_alpha)


class _ConstantSchedule:
    def __init__(self, K):
        self.K = K

    def __call__(self, n):
        return self.K


@dataclass
class MonteCarloReport:
    """Summary of simulated stop times; truncated runs count as the horizon."""

    replications: int
    mean_stat: float
    stderr: float
    truncation_count: int
    truncation_horizon: int
    label: str = ""
    stop_times: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def lcb95(self) -> float:
        """One-sided 95% lower confidence bound of the mean."""
        return self.mean_stat - Z95 * self.stderr

    @property
    def ucb95(self) -> float:
        return self.mean_stat + Z95 * self.stderr

    def to_dict(self) -> dict:
        return {"label": self.label, "replications": self.replications,
                "mean_stat": self.mean_stat, "stderr": self.stderr,
                "lcb95": self.lcb95, "truncation_count": self.truncation_count,
                "truncation_horizon": self.truncation_horizon}


def _summarize(times: np.ndarray, truncated: np.ndarray, horizon: int,
               label: str) -> MonteCarloReport:
    n = times.size
    mean = math.fsum(times.tolist()) / n
    if n > 1:
        var = math.fsum(((times - mean) ** 2).tolist()) / (n - 1)
        se = math.sqrt(var / n)
    else:
        se = 0.0
    return MonteCarloReport(n, mean, se, int(truncated.sum()), int(horizon), label,
                            times.copy())


def _uniform_block(seed: int, reps: range, rngs: dict, length: int) -> np.ndarray:
    out = np.empty((len(reps), length))
    for i, r in enumerate(reps):
        if r not in rngs:
            rngs[r] = rep_rng(seed, r)
        out[i] = rngs[r].random(length)
    return out


def _finite_chunk(cfg: DetectorConfig, spec: StreamSpec, reps: range,
                  horizon: int) -> dict:
    """Vectorized finite-mixture simulation of a block of replications."""
    B = len(reps)
    lambdas = np.asarray(cfg.lambdas)
    psis = np.asarray(cfg.psis)
    log_w = np.asarray(cfg.log_omegas)
    K = lambdas.size
    track = {SR: cfg.mode in (SR, BOTH), CUSUM: cfg.mode in (CUSUM, BOTH)}
    stops = {m: np.full(B, horizon, dtype=np.int64) for m in track if track[m]}
    hit = {m: np.zeros(B, dtype=bool) for m in stops}
    state = {m: np.full((B, K), -np.inf) for m in stops}
    thresholds = {SR: cfg.threshold, CUSUM: cfg.threshold_cs}
    active = np.arange(B)
    rngs: dict = {}
    t0 = 0
    while t0 < horizon and active.size:
        length = min(BLOCK, horizon - t0)
        rep_ids = [reps[i] for i in active]
        u = _uniform_block(spec.seed, rep_ids, rngs, length)
        x_blk = spec.law_at(np.arange(t0, t0 + length)[None, :], u)
        check_observations(cfg.kind, x_blk, t0)
        loc = np.arange(active.size)
        for j in range(length):
            t = t0 + j + 1
            log_l = log_increments(cfg.kind, cfg.param, lambdas, psis, x_blk[loc, j])
            alive = np.zeros(loc.size, dtype=bool)
            for m in stops:
                cur = state[m]
                if m == SR:
                    cur = log_l + np.logaddexp(cur, 0.0)
                else:
                    cur = log_l + np.maximum(cur, 0.0)
                state[m] = cur
                agg = _row_logsumexp(log_w + cur)
                rows = active[loc]
                newly = crossed(agg, thresholds[m]) & ~hit[m][rows]
                stops[m][rows[newly]] = t
                hit[m][rows[newly]] = True
                alive |= ~hit[m][rows]
            if not alive.all():
                loc = loc[alive]
                for m in stops:
                    state[m] = state[m][alive]
                if loc.size == 0:
                    break
        # re-base the surviving rows
        active = active[loc]
        # rngs for finished reps are no longer needed
        t0 += length
    return {m: (stops[m], ~hit[m]) for m in stops}


def _row_logsumexp(a: np.ndarray) -> np.ndarray:
    mx = np.max(a, axis=1)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(under="ignore"):
        s = np.sum(np.exp(a - safe[:, None]), axis=1)
    with np.errstate(divide="ignore"):
        return safe + np.log(s)


def _loop_chunk(cfg: DetectorConfig, spec: StreamSpec, reps: range, horizon: int) -> dict:
    """Per-replication simulation (adaptive detectors)."""
    modes = [m for m in (SR, CUSUM) if cfg.mode in (m, BOTH)]
    stops = {m: np.full(len(reps), horizon, dtype=np.int64) for m in modes}
    hit = {m: np.zeros(len(reps), dtype=bool) for m in modes}
    thresholds = {SR: cfg.threshold, CUSUM: cfg.threshold_cs}
    for i, r in enumerate(reps):
        rng = rep_rng(spec.seed, r)
        state = cfg.make_state()
        t0 = 0
        done = False
        while t0 < horizon and not done:
            length = min(BLOCK, horizon - t0)
            x_blk = spec.law_at(np.arange(t0, t0 + length), rng.random(length))
            for j in range(length):
                a_sr, a_cs = state.step(x_blk[j])
                t = t0 + j + 1
                for m, a in ((SR, a_sr), (CUSUM, a_cs)):
                    if m in stops and not hit[m][i] and crossed(a, thresholds[m]):
                        stops[m][i] = t
                        hit[m][i] = True
                if all(hit[m][i] for m in modes):
                    done = True
                    break
            t0 += length
    return {m: (stops[m], ~hit[m]) for m in modes}


def _run_chunk(args):
    cfg, spec, start, stop, horizon = args
    reps = range(start, stop)
    if cfg.adaptive is not None:
        return _loop_chunk(cfg, spec, reps, horizon)
    return _finite_chunk(cfg, spec, reps, horizon)


def simulate_stop_times(cfg: DetectorConfig, spec: StreamSpec, replications: int,
                        horizon: int, workers: int = 1) -> dict:
    """Stop times per tracked mode as {mode: (times, truncated_flags)}."""
    if int(replications) < 1:
        raise ConfigError(f"replications must be >= 1, got {replications}")
    if int(horizon) < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    replications, horizon = int(replications), int(horizon)
    jobs = [(cfg, spec, s, min(s + CHUNK, replications), horizon)
            for s in range(0, replications, CHUNK)]
    if workers is None or workers <= 1 or len(jobs) == 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=int(workers)) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    out = {}
    for m in parts[0]:
        out[m] = (np.concatenate([p[m][0] for p in parts]),
                  np.concatenate([p[m][1] for p in parts]))
    return out


def _reports(result: dict, horizon: int, label: str, mode: str):
    reps = {m: _summarize(t, tr, horizon, f"{label}:{m}") for m, (t, tr) in result.items()}
    if mode == BOTH:
        return reps
    return reps[mode]


def _check_pre_change(cfg: DetectorConfig, law: DiscreteLaw) -> None:
    if cfg.kind == TRIVIAL or cfg.param is None:
        return
    if law.mean > cfg.param + 1e-12:
        raise ConfigError(
            f"pre-change mean {law.mean} exceeds the class boundary {cfg.param}")


def estimate_arl(cfg: DetectorConfig, pre_change: DiscreteLaw, replications: int,
                 horizon: Optional[int] = None, seed: int = 0, workers: int = 1):
    """Mean run length with no change.

    Args:
        cfg: Detector configuration.
        pre_change: Law of every observation.
        replications: Number of independent streams.
        horizon: Truncation point; defaults to 10/α.
        seed: Base seed.
        workers: Worker processes; results do not depend on it.

    Returns:
        A MonteCarloReport, or {mode: report} when the config tracks both modes.
    """
    _check_pre_change(cfg, pre_change)
    if horizon is None:
        horizon = int(math.ceil(10.0 / cfg.alpha))
    spec = StreamSpec(pre_change, None, None, seed)
    res = simulate_stop_times(cfg, spec, replications, horizon, workers)
    return _reports(res, horizon, "arl", cfg.mode)


def estimate_delay(cfg: DetectorConfig, post_change: DiscreteLaw, replications: int,
                   horizon: Optional[int] = None, seed: int = 0, workers: int = 1):
    """Mean stop time when every observation is post-change (ν = 0)."""
    if horizon is None:
        horizon = int(math.ceil(10.0 / cfg.alpha))
    spec = StreamSpec(post_change, post_change, 0, seed)
    res = simulate_stop_times(cfg, spec, replications, horizon, workers)
    return _reports(res, horizon, "delay", cfg.mode)

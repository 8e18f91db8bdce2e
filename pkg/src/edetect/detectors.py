"""SR and CUSUM e-detector state machines, kept in log space.

A per-component statistic equal to zero is stored as ``-inf`` so that the
first update yields log L + log γ exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.special import logsumexp

from .calibration import AdaptiveCalibration, MixtureCalibration
from .errors import ConfigError, StateError
from .increments import EXACT_BOUNDED, EXP_BERNOULLI, EXP_BOUNDED, TRIVIAL, check_observations, log_increments

SR = "sr"
CUSUM = "cusum"
BOTH = "both"
MODES = (SR, CUSUM, BOTH)

STOPPED = "stopped"
TRUNCATED = "truncated"
STREAM_ENDED = "stream_ended"
RUNNING = "running"

# slack so that a statistic equal to the threshold up to rounding counts as a crossing
STOP_RTOL = 1e-12


def crossed(log_m, threshold: float):
    """Inclusive threshold test in log space."""
    return log_m >= threshold - STOP_RTOL * max(1.0, abs(threshold))


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def sr_update(log_m: np.ndarray, log_l: np.ndarray, log_gamma: float = 0.0) -> np.ndarray:
    """log of L·(M + γ)."""
    return log_l + np.logaddexp(log_m, log_gamma)


def cusum_update(log_m: np.ndarray, log_l: np.ndarray, log_gamma: float = 0.0) -> np.ndarray:
    """log of L·max(M, γ)."""
    return log_l + np.maximum(log_m, log_gamma)


def aggregate(log_omega: np.ndarray, log_m: np.ndarray) -> float:
    """log Σ_k ω_k M(k)."""
    if log_m.size == 0:
        return -math.inf
    return float(logsumexp(log_omega + log_m))


class DetectorState:
    """Finite mixture of SR and/or CUSUM e-detectors.

    Args:
        log_omega: Log mixture weights, one per component.
        mode: ``"sr"``, ``"cusum"`` or ``"both"``.
        increment: Optional (kind, param, lambdas) triple so that ``step``
            can consume raw observations.
    """

    def __init__(self, log_omega, mode: str = SR, increment=None):
        self.mode = _check_mode(mode)
        self.log_omega = np.asarray(log_omega, dtype=float).copy()
        K = self.log_omega.size
        self.log_m_sr = np.full(K, -np.inf) if mode in (SR, BOTH) else None
        self.log_m_cs = np.full(K, -np.inf) if mode in (CUSUM, BOTH) else None
        self.n = 0
        self.agg_sr = -math.inf
        self.agg_cs = -math.inf
        self._inc = None
        if increment is not None:
            kind, param, lambdas, psis = increment
            lambdas = np.asarray(lambdas, dtype=float)
            if lambdas.size != K:
                raise StateError(f"{lambdas.size} lambdas for {K} weights")
            self._inc = (kind, param, lambdas, np.asarray(psis, dtype=float))

    @property
    def n_components(self) -> int:
        return self.log_omega.size

    @classmethod
    def from_calibration(cls, cal: MixtureCalibration, kind: str, param=None,
                         mode: str = SR) -> "DetectorState":
        """Detector driven by a calibrated λ grid."""
        return cls(cal.log_omegas, mode, increment_tuple(cal, kind, param))

    @classmethod
    def trivial(cls, mode: str = SR) -> "DetectorState":
        """Single component with L ≡ 1."""
        return cls([0.0], mode, (TRIVIAL, None, [0.0], [0.0]))

    def step_log(self, log_l) -> tuple[float, float]:
        """Advance with one log-increment per component.

        Returns:
            (log M_SR, log M_CS) aggregates; untracked entries are -inf.
        """
        log_l = np.asarray(log_l, dtype=float)
        if log_l.shape != self.log_omega.shape:
            raise StateError(
                f"expected {self.log_omega.size} increments, got {log_l.size}")
        if self.log_m_sr is not None:
            self.log_m_sr = sr_update(self.log_m_sr, log_l)
            self.agg_sr = aggregate(self.log_omega, self.log_m_sr)
        if self.log_m_cs is not None:
            self.log_m_cs = cusum_update(self.log_m_cs, log_l)
            self.agg_cs = aggregate(self.log_omega, self.log_m_cs)
        self.n += 1
        return self.agg_sr, self.agg_cs

    def step(self, x: float) -> tuple[float, float]:
        """Advance with one raw observation."""
        if self._inc is None:
            raise StateError("detector has no increment family; use step_log")
        kind, param, lambdas, psis = self._inc
        check_observations(kind, np.asarray([x]), self.n)
        return self.step_log(log_increments(kind, param, lambdas, psis, x))


def step_finite(state: DetectorState, log_increments_k) -> tuple[float, float]:
    """Functional alias for ``DetectorState.step_log``."""
    return state.step_log(log_increments_k)


def increment_tuple(cal: MixtureCalibration, kind: str, param=None):
    if kind == TRIVIAL:
        return (kind, None, np.zeros(cal.n_components), np.zeros(cal.n_components))
    if kind == EXP_BERNOULLI:
        param = cal.family.p0 if param is None else param
    elif kind in (EXP_BOUNDED, EXACT_BOUNDED):
        if param is None:
            raise ConfigError(f"{kind} increments need the mean bound m")
    else:
        raise ConfigError(f"unknown increment kind {kind!r}")
    psis = np.zeros(cal.n_components) if kind == EXACT_BOUNDED else cal.psis
    return (kind, float(param), np.asarray(cal.lambdas, dtype=float), psis)


class AdaptiveState:
    """Adaptive mixture whose component count follows a schedule K(n).

    New components are minted before the observation at step n and enter with
    statistic zero, so their first value is L·γ_n.

    Args:
        cal: Adaptive calibration.
        kind: Increment kind for raw observations.
        param: p0 or m (p0 defaults to the family's).
        mode: ``"sr"``, ``"cusum"`` or ``"both"``.
        schedule: Optional override of n -> K(n); must be nondecreasing with
            schedule(1) >= K_L.
    """

    def __init__(self, cal: AdaptiveCalibration, kind: str, param=None, mode: str = SR,
                 schedule: Optional[Callable[[int], int]] = None):
        self.mode = _check_mode(mode)
        self.cal = cal
        self.kind = kind
        core = increment_tuple(cal.core, kind, param)
        self.param = core[1]
        self.schedule = schedule if schedule is not None else cal.schedule
        self.lambdas = list(core[2])
        self.psis = list(core[3])
        self.log_omega = list(np.log(np.asarray(cal.core_omegas, dtype=float)))
        self.K = cal.K_L
        self.log_gamma = math.log(cal.gamma0)
        self._inv_gamma = 1.0 / cal.gamma0
        self.log_m_sr = np.full(len(self.lambdas), -np.inf) if mode in (SR, BOTH) else None
        self.log_m_cs = np.full(len(self.lambdas), -np.inf) if mode in (CUSUM, BOTH) else None
        self.n = 0
        self.agg_sr = -math.inf
        self.agg_cs = -math.inf
        self._arrays = None
        self.gamma_history: list = []

    @property
    def n_components(self) -> int:
        return len(self.lambdas)

    def _mint_through(self, K_new: int) -> None:
        new_w = []
        for k in range(self.K + 1, K_new + 1):
            _, lam, w = self.cal.mint(k)
            self.lambdas.append(lam)
            psi = 0.0 if self.kind in (EXACT_BOUNDED, TRIVIAL) else self.cal.family.psi(lam)
            self.psis.append(psi)
            self.log_omega.append(math.log(w))
            new_w.append(w)
        added = len(new_w)
        if self.log_m_sr is not None:
            self.log_m_sr = np.concatenate([self.log_m_sr, np.full(added, -np.inf)])
        if self.log_m_cs is not None:
            self.log_m_cs = np.concatenate([self.log_m_cs, np.full(added, -np.inf)])
        self._inv_gamma += math.fsum(new_w)
        self.log_gamma = -math.log(self._inv_gamma)
        self.K = K_new
        self._arrays = None

    def step(self, x: float) -> tuple[float, float]:
        """Advance with one raw observation; returns (log M_SR, log M_CS)."""
        n = self.n + 1
        K_new = int(self.schedule(n))
        if K_new > self.K:
            self._mint_through(K_new)
        check_observations(self.kind, np.asarray([x]), self.n)
        if self._arrays is None:
            self._arrays = (np.asarray(self.lambdas), np.asarray(self.psis),
                            np.asarray(self.log_omega))
        lambdas, psis, log_omega = self._arrays
        log_l = log_increments(self.kind, self.param, lambdas, psis, x)
        if self.log_m_sr is not None:
            self.log_m_sr = sr_update(self.log_m_sr, log_l, self.log_gamma)
            self.agg_sr = aggregate(log_omega, self.log_m_sr)
        if self.log_m_cs is not None:
            self.log_m_cs = cusum_update(self.log_m_cs, log_l, self.log_gamma)
            self.agg_cs = aggregate(log_omega, self.log_m_cs)
        self.gamma_history.append(math.exp(self.log_gamma))
        self.n = n
        return self.agg_sr, self.agg_cs


def step_adaptive(state: AdaptiveState, x: float) -> tuple[float, float]:
    """Functional alias for ``AdaptiveState.step``."""
    return state.step(x)


@dataclass
class RunResult:
    """Outcome of running a detector over a stream.

    ``stop_sr`` and ``stop_cs`` are 1-based alarm indices or None; the
    matching status is ``stopped``, ``truncated`` or ``stream_ended``.
    """

    mode: str
    threshold: float
    threshold_cs: float
    n_steps: int
    stop_sr: Optional[int] = None
    stop_cs: Optional[int] = None
    status_sr: Optional[str] = None
    status_cs: Optional[str] = None
    log_m_sr: Optional[np.ndarray] = None
    log_m_cs: Optional[np.ndarray] = None
    truncation: Optional[int] = None
    extra: dict = field(default_factory=dict)

    @property
    def primary(self) -> str:
        return CUSUM if self.mode == CUSUM else SR

    @property
    def stop_index(self) -> Optional[int]:
        return self.stop_cs if self.mode == CUSUM else self.stop_sr

    @property
    def status(self) -> str:
        return self.status_cs if self.mode == CUSUM else self.status_sr

    def summary(self) -> dict:
        out = {"mode": self.mode, "n_steps": self.n_steps,
               "threshold": self.threshold, "truncation": self.truncation}
        if self.mode in (SR, BOTH):
            out.update(stop_sr=self.stop_sr, status_sr=self.status_sr)
        if self.mode in (CUSUM, BOTH):
            out.update(stop_cs=self.stop_cs, status_cs=self.status_cs,
                       threshold_cs=self.threshold_cs)
        out.update(self.extra)
        return out


def run_until_stop(state, stream: Iterable, threshold: float,
                   truncation: Optional[int] = None, threshold_cs: Optional[float] = None,
                   full_path: bool = False) -> RunResult:
    """Feed observations until every tracked detector alarms.

    Args:
        state: A DetectorState (with increments) or AdaptiveState.
        stream: Observations.
        threshold: Log threshold for SR, usually log(1/α).
        truncation: Maximum number of steps; None means run the stream out.
        threshold_cs: Log threshold for CUSUM; defaults to ``threshold``.
        full_path: Keep stepping to the end of the stream or truncation
            after the alarms.

    Returns:
        RunResult with the log aggregate paths.
    """
    if not (threshold > 0):
        raise ConfigError(f"log threshold must be > 0, got {threshold}")
    if truncation is not None and int(truncation) < 1:
        raise ConfigError(f"truncation must be >= 1, got {truncation}")
    th_cs = threshold if threshold_cs is None else float(threshold_cs)
    if not (th_cs > 0):
        raise ConfigError(f"log CUSUM threshold must be > 0, got {th_cs}")
    mode = state.mode
    track_sr = mode in (SR, BOTH)
    track_cs = mode in (CUSUM, BOTH)
    path_sr: list = []
    path_cs: list = []
    stop_sr = stop_cs = None
    n = 0
    for x in stream:
        if truncation is not None and n >= truncation:
            break
        a_sr, a_cs = state.step(x)
        n += 1
        if track_sr:
            path_sr.append(a_sr)
            if stop_sr is None and crossed(a_sr, threshold):
                stop_sr = n
        if track_cs:
            path_cs.append(a_cs)
            if stop_cs is None and crossed(a_cs, th_cs):
                stop_cs = n
        done = (not track_sr or stop_sr is not None) and (not track_cs or stop_cs is not None)
        if done and not full_path:
            break
    hit_trunc = truncation is not None and n >= truncation

    def status(stop):
        if stop is not None:
            return STOPPED
        return TRUNCATED if hit_trunc else STREAM_ENDED

    return RunResult(
        mode=mode, threshold=float(threshold), threshold_cs=th_cs, n_steps=n,
        stop_sr=stop_sr, stop_cs=stop_cs,
        status_sr=status(stop_sr) if track_sr else None,
        status_cs=status(stop_cs) if track_cs else None,
        log_m_sr=np.asarray(path_sr) if track_sr else None,
        log_m_cs=np.asarray(path_cs) if track_cs else None,
        truncation=None if truncation is None else int(truncation),
    )


def constant_stream(value: float):
    """Endless stream repeating one value (used with trivial increments)."""
    while True:
        yield value

"""Baseline increments, evaluated in log space.

Every function here returns log L so detector arithmetic never forms raw
products. Vectorized helpers accept numpy arrays of observations and
parameter vectors and broadcast over both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, DomainError
from .psi import PsiFamily

EXP_BERNOULLI = "exp_bernoulli"
EXP_BOUNDED = "exp_bounded"
EXACT_BOUNDED = "exact_bounded"
TRIVIAL = "trivial"
KINDS = (EXP_BERNOULLI, EXP_BOUNDED, EXACT_BOUNDED, TRIVIAL)

# rounded value used by the bounded (Plus-Minus) example
ROUNDED_MEAN_BOUND = 0.494
EXACT_MEAN_BOUND = 79.0 / 160.0


@dataclass(frozen=True)
class IncrementSpec:
    """One baseline increment L^λ.

    Attributes:
        kind: One of ``exp_bernoulli``, ``exp_bounded``, ``exact_bounded``, ``trivial``.
        lam: The tuning parameter λ.
        param: p0 for Bernoulli increments, the mean bound m for bounded ones.
        psi_at_lambda: Precomputed ψ(λ); zero for exact and trivial kinds.
    """

    kind: str
    lam: float
    param: Optional[float] = None
    psi_at_lambda: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown increment kind {self.kind!r}")
        if self.kind == TRIVIAL:
            return
        if self.param is None or not (0.0 < self.param < 1.0):
            raise ConfigError(f"{self.kind} needs a parameter in (0,1), got {self.param}")
        if self.kind == EXP_BERNOULLI:
            if not (self.lam > 0):
                raise DomainError(f"ExpBernoulli lambda must be > 0, got {self.lam}")
        elif not (0.0 < self.lam < 1.0):
            raise DomainError(f"{self.kind} lambda must be in (0,1), got {self.lam}")

    @classmethod
    def make(cls, kind: str, lam: float, param: Optional[float] = None) -> "IncrementSpec":
        """Build a spec with ψ(λ) filled in from the matching family."""
        lam = float(lam)
        if kind == EXP_BERNOULLI:
            psi = PsiFamily.bernoulli(param).psi(lam)
        elif kind == EXP_BOUNDED:
            psi = PsiFamily.subexponential().psi(lam)
        else:
            psi = 0.0
        return cls(kind, lam, None if param is None else float(param), psi)

    def check(self, x: float, index: Optional[int] = None) -> None:
        if self.kind == TRIVIAL:
            return
        if self.kind == EXP_BERNOULLI:
            if x != 0.0 and x != 1.0:
                raise DataError(f"Bernoulli observation must be 0 or 1, got {x}", index)
        elif not (0.0 <= x <= 1.0):
            raise DataError(f"bounded observation must lie in [0,1], got {x}", index)

    def log_value(self, x: float, index: Optional[int] = None) -> float:
        """Return log L^λ(x)."""
        self.check(x, index)
        if self.kind == TRIVIAL:
            return 0.0
        if self.kind == EXP_BERNOULLI:
            return self.lam * (x - self.param) - self.psi_at_lambda
        s = x / self.param - 1.0
        if self.kind == EXP_BOUNDED:
            return self.lam * s - self.psi_at_lambda * s * s
        return math.log1p(self.lam * s)


def eval_increment(spec: IncrementSpec, x: float) -> float:
    """Log of the baseline increment for one observation."""
    return spec.log_value(x)


def check_observations(kind: str, x: np.ndarray, offset: int = 0) -> None:
    """Raise DataError at the first observation outside the kind's range."""
    x = np.asarray(x, dtype=float)
    if kind == TRIVIAL:
        return
    if kind == EXP_BERNOULLI:
        bad = ~((x == 0.0) | (x == 1.0))
    else:
        bad = ~((x >= 0.0) & (x <= 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad.ravel())[0])
        raise DataError(f"observation {x.ravel()[i]} out of range for {kind}", offset + i)


def log_increments(kind: str, param: Optional[float], lambdas: np.ndarray,
                   psis: np.ndarray, x) -> np.ndarray:
    """Vectorized log increments.

    Args:
        kind: Increment kind.
        param: p0 or m.
        lambdas: Array of λ_k with shape (K,).
        psis: Matching ψ(λ_k), shape (K,).
        x: Observations, any shape S.

    Returns:
        Array of shape S + (K,).
    """
    x = np.asarray(x, dtype=float)[..., None]
    lambdas = np.asarray(lambdas, dtype=float)
    if kind == TRIVIAL:
        return np.zeros(x.shape[:-1] + lambdas.shape)
    if kind == EXP_BERNOULLI:
        return lambdas * (x - param) - np.asarray(psis, dtype=float)
    s = x / param - 1.0
    if kind == EXP_BOUNDED:
        return lambdas * s - np.asarray(psis, dtype=float) * s * s
    return np.log1p(lambdas * s)


def delta_bounds_bounded(m: float, delta: float) -> tuple[float, float]:
    """Range of the mean-to-variance ratio for bounded data.

    Args:
        m: Pre-change mean bound in (0, 1).
        delta: Minimum post-change mean gap, in (0, 1 - m).

    Returns:
        (Δ_L, Δ_U) = (mδ/(1-m)², m(1-m)/δ²).
    """
    if not (0.0 < m < 1.0):
        raise ConfigError(f"mean bound must be in (0,1), got {m}")
    if not (0.0 < delta < 1.0 - m):
        raise ConfigError(f"delta must be in (0, 1-m) = (0, {1 - m}), got {delta}")
    return m * delta / (1.0 - m) ** 2, m * (1.0 - m) / delta ** 2


def normalize_bounded(x_raw, lo: float, hi: float, index: Optional[int] = None):
    """Affine map of [lo, hi] onto [0, 1]; works on scalars and arrays."""
    if not (lo < hi):
        raise ConfigError(f"need lo < hi, got ({lo}, {hi})")
    arr = np.asarray(x_raw, dtype=float)
    bad = ~((arr >= lo) & (arr <= hi))
    if bad.any():
        i = int(np.flatnonzero(bad.ravel())[0])
        where = i if index is None else index
        raise DataError(f"value {arr.ravel()[i]} outside [{lo}, {hi}]", where)
    out = (arr - lo) / (hi - lo)
    return float(out) if np.ndim(x_raw) == 0 else out

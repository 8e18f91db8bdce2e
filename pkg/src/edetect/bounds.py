"""Nonasymptotic worst-average-delay bounds and threshold bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .calibration import AdaptiveCalibration, MixtureCalibration
from .errors import ConfigError, DomainError
from .psi import BERNOULLI, PsiFamily

LORDEN = "Lorden"
WELL_SEPARATED = "WellSeparated"
NOSEP_HIGH = "NoSepCaseHigh"
NOSEP_MID = "NoSepCaseMid"
NOSEP_LOW = "NoSepCaseLow"


@dataclass(frozen=True)
class DelayBoundReport:
    """Upper bound on the worst average delay, split into its three terms."""

    regime: str
    leading: float
    variance: float
    constant: float
    details: Optional[dict] = None

    @property
    def bound_value(self) -> float:
        return self.leading + self.variance + self.constant

    def to_dict(self) -> dict:
        out = {"regime": self.regime, "bound_value": self.bound_value,
               "leading": self.leading, "variance": self.variance,
               "constant": self.constant}
        if self.details:
            out["details"] = dict(self.details)
        return out


@dataclass(frozen=True)
class DiscreteLaw:
    """Finitely supported distribution on the raw observation scale."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise ConfigError("values and probs must be equal-length 1-d sequences")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ConfigError("probs must be nonnegative and sum to one")

    @classmethod
    def bernoulli(cls, q: float) -> "DiscreteLaw":
        if not (0.0 <= q <= 1.0):
            raise ConfigError(f"q must be in [0,1], got {q}")
        return cls((0.0, 1.0), (1.0 - q, q))

    def expect(self, f) -> float:
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        return float(np.sum(p * f(v)))

    @property
    def mean(self) -> float:
        return self.expect(lambda x: x)


def sufficient_maps(fam: PsiFamily, mean_bound: Optional[float] = None):
    """Return (s, v) as vectorized callables for the family."""
    if fam.family == BERNOULLI:
        p0 = fam.p0
        return (lambda x: np.asarray(x, dtype=float) - p0,
                lambda x: np.ones_like(np.asarray(x, dtype=float)))
    if mean_bound is None or not (0.0 < mean_bound < 1.0):
        raise ConfigError("bounded laws need a mean bound m in (0,1)")
    m = mean_bound
    return (lambda x: np.asarray(x, dtype=float) / m - 1.0,
            lambda x: (np.asarray(x, dtype=float) / m - 1.0) ** 2)


def log_increment_variance(fam: PsiFamily, law: DiscreteLaw, lam: float,
                           mean_bound: Optional[float] = None) -> float:
    """Var_Q[λ s(X) - ψ(λ) v(X)] by exact enumeration of the law."""
    s, v = sufficient_maps(fam, mean_bound)
    psi = fam.psi(lam)

    def f(x):
        return lam * s(x) - psi * v(x)

    mu = law.expect(f)
    return max(law.expect(lambda x: (f(x) - mu) ** 2), 0.0)


def log_increment_mean(fam: PsiFamily, law: DiscreteLaw, lam: float,
                       mean_bound: Optional[float] = None) -> float:
    """E_Q log L^{(λ)}."""
    s, v = sufficient_maps(fam, mean_bound)
    psi = fam.psi(lam)
    return law.expect(lambda x: lam * s(x) - psi * v(x))


def divergence_and_variance(fam: PsiFamily, law=None, *, q: Optional[float] = None,
                            mean_bound: Optional[float] = None,
                            moments: Optional[dict] = None) -> tuple:
    """Information rate D, log-increment variance V and Δ* for a post-change law.

    Exactly one of ``q`` (Bernoulli success probability), ``law`` (a
    DiscreteLaw) or ``moments`` must be supplied. ``moments`` takes ``mean``
    (E X) and ``second`` (E(X-m)^2), plus optional ``third`` and ``fourth``
    (E(X-m)^3, E(X-m)^4) which are needed for V; without them V is NaN.

    Returns:
        (D, V, Delta_star)

    Raises:
        DomainError: if Δ* <= 0 (no detectable change).
    """
    given = sum(x is not None for x in (law, q, moments))
    if given != 1:
        raise ConfigError("supply exactly one of law, q or moments")
    if q is not None:
        if fam.family != BERNOULLI:
            raise ConfigError("q is only meaningful for the Bernoulli family")
        law = DiscreteLaw.bernoulli(q)
    if law is not None:
        s, v = sufficient_maps(fam, mean_bound)
        mu = law.expect(s)
        sigma2 = law.expect(v)
    else:
        if mean_bound is None:
            raise ConfigError("moment input needs the mean bound m")
        m = mean_bound
        mu = (moments["mean"] - m) / m
        sigma2 = moments["second"] / m ** 2
    if not (sigma2 > 0) or not (mu > 0):
        raise DomainError(f"no detectable change: mu={mu}, sigma^2={sigma2}")
    delta_star = mu / sigma2
    lam_star = fam.grad_conjugate(delta_star)
    D = sigma2 * fam.conjugate(delta_star)
    if law is not None:
        V = log_increment_variance(fam, law, lam_star, mean_bound)
    elif "third" in moments and "fourth" in moments:
        m = mean_bound
        e1, e2 = mu, sigma2
        e3 = moments["third"] / m ** 3
        e4 = moments["fourth"] / m ** 4
        psi = fam.psi(lam_star)
        var_s = e2 - e1 * e1
        cov = e3 - e1 * e2
        var_v = e4 - e2 * e2
        V = max(lam_star ** 2 * var_s - 2 * lam_star * psi * cov + psi ** 2 * var_v, 0.0)
    else:
        V = math.nan
    return D, V, delta_star


def delay_bound_lorden(g: float, D: float, V: float) -> float:
    """g/D + V/D² + 1."""
    if not (D > 0):
        raise DomainError(f"D must be positive, got {D}")
    if not (V >= 0):
        raise DomainError(f"V must be nonnegative, got {V}")
    if not (g > 0):
        raise DomainError(f"g must be positive, got {g}")
    return g / D + V / D ** 2 + 1.0


def delay_bound_well_separated(cal: MixtureCalibration, D: float, V: float,
                               g: Optional[float] = None) -> DelayBoundReport:
    """Delay bound for the finite mixture.

    For a single-baseline calibration D and V should describe log L^{(λ_L)}
    and the report is labelled Lorden.

    Args:
        cal: The mixture calibration.
        D: Information rate.
        V: Variance of the log increment.
        g: Optional threshold override (e.g. the Prop-6 style upper bound).
    """
    g = cal.g_alpha if g is None else float(g)
    delay_bound_lorden(g, D, V)
    regime = LORDEN if cal.single_baseline else WELL_SEPARATED
    return DelayBoundReport(regime, g / D, V / D ** 2, 1.0, {"g": g, "D": D, "V": V})


def g_alpha_upper_bound(alpha: float, D_L: float, D_U: float) -> float:
    """inf over η > 1 of η[log(1/α) + log(1 + ⌈log_η(D_U/D_L)⌉)].

    On each piece where the ceiling equals j the expression increases in η,
    so the infimum is attained at η = (D_U/D_L)^{1/j}; enumerate j.
    """
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must be in (0,1), got {alpha}")
    if not (0.0 < D_L < D_U):
        raise ConfigError(f"need 0 < D_L < D_U, got {D_L}, {D_U}")
    log_inv = -math.log(alpha)
    log_ratio = math.log(D_U / D_L)
    best = math.inf
    j = 1
    while True:
        c = log_inv + math.log1p(j)
        if c >= best:
            break
        best = min(best, math.exp(log_ratio / j) * c)
        j += 1
    return best


def smallest_tail_index(cal: AdaptiveCalibration, delta_star: float) -> int:
    """Smallest scheduled component k with Δ_k < Δ* (strict)."""
    k = cal.K_L + 1
    while True:
        d_k, _, _ = cal.mint(k)
        if d_k < delta_star:
            return k
        k += 1


def first_time_reaching(cal: AdaptiveCalibration, k: int) -> int:
    """Smallest j >= 1 with K(j) >= k."""
    if cal.schedule(1) >= k:
        return 1
    hi = 2
    while cal.schedule(hi) < k:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cal.schedule(mid) >= k:
            hi = mid
        else:
            lo = mid
    return hi


def delay_bound_no_separation(cal: AdaptiveCalibration, D: float, V: float,
                              Delta_star: float,
                              V_lambda0: Optional[float] = None) -> DelayBoundReport:
    """Three-case delay bound for the adaptive mixture.

    Args:
        cal: Adaptive calibration.
        D: Information rate D(Q‖P).
        V: Variance of log L^{(λ*)}.
        Delta_star: Post-change Δ*.
        V_lambda0: Variance of log L^{(λ_0)}; required when Δ* >= Δ_0.
    """
    if not (D > 0):
        raise DomainError(f"D must be positive, got {D}")
    if not (Delta_star > 0):
        raise DomainError(f"Delta* must be positive, got {Delta_star}")
    fam = cal.family
    g = cal.g_core
    Delta_L = cal.core.Delta_L
    if Delta_star >= cal.Delta_0:
        if V_lambda0 is None:
            raise ConfigError("Delta* >= Delta_0 needs the variance at lambda_0")
        ratio = fam.conjugate(Delta_star) / cal.D_0
        return DelayBoundReport(NOSEP_HIGH, g / D * ratio, V_lambda0 / D ** 2 * ratio ** 2,
                                1.0, {"ratio": ratio})
    if Delta_star > Delta_L:
        return DelayBoundReport(NOSEP_MID, g / D, V / D ** 2, 1.0)
    k_min = smallest_tail_index(cal, Delta_star)
    j_star = first_time_reaching(cal, k_min)
    K_star = cal.schedule(j_star)
    G = cal.g_index(K_star)
    extra = (fam.conjugate(Delta_L) / fam.conjugate(Delta_star) * G / g) ** (
        1.0 / cal.schedule_density)
    return DelayBoundReport(NOSEP_LOW, G / D, V / D ** 2, extra,
                            {"K_star": K_star, "j_star": j_star, "k_min": k_min, "G": G})

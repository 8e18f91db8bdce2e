"""Threshold, baseline-grid and weight calibration.

``compute_threshold`` and ``compute_baseline`` build the finite mixture used
when the post-change ratio Δ* is known to lie in [Δ_L, Δ_U].
``build_adaptive_calibration`` extends a finite core with an infinite,
lazily minted tail of components for the case where no such bracket is known.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CalibrationError, ConfigError, DomainError
from .psi import PsiFamily

DEFAULT_EPS = 1e-9
ZETA_TERMS = 100_000
ZETA_WARN_BELOW = 1.05


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must be in (0,1), got {alpha}")
    return alpha


def log_mixture_objective(g: float, ratio: float, k) -> np.ndarray:
    """log of k·exp(-g·ratio^(-1/k)), vectorized over k."""
    k = np.asarray(k, dtype=float)
    return np.log(k) - g * np.exp(-math.log(ratio) / k)


def _log_f(g: float, ratio: float, K_max: int) -> float:
    return float(np.min(log_mixture_objective(g, ratio, np.arange(1, K_max + 1))))


def argmin_components(g: float, ratio: float, K_max: int) -> int:
    """Smallest k in [1, K_max] minimizing k·exp(-g·ratio^(-1/k))."""
    vals = log_mixture_objective(g, ratio, np.arange(1, K_max + 1))
    return int(np.argmin(vals)) + 1


def compute_threshold(alpha: float, D_L: float, D_U: float, v_min: float,
                      K_max: int, eps: float = DEFAULT_EPS) -> float:
    """Smallest threshold g > log(1/α) meeting the mixture weight budget.

    Solves, by bisection,

        e^{-g}·1(g > v_min D_U) + min_{k ≤ K_max} k exp(-g (D_U/D_L)^{-1/k}) ≤ α.

    Args:
        alpha: ARL level in (0, 1).
        D_L: ψ*(Δ_L).
        D_U: ψ*(Δ_U), must exceed D_L.
        v_min: Minimum of the variance map.
        K_max: Largest admissible number of baselines.
        eps: Bisection tolerance on g.

    Returns:
        The feasible end of the final bisection bracket.
    """
    alpha = _check_alpha(alpha)
    if not (0.0 < D_L < D_U) or not math.isfinite(D_U):
        raise ConfigError(f"need 0 < D_L < D_U, got D_L={D_L}, D_U={D_U}")
    if int(K_max) < 1:
        raise ConfigError(f"K_max must be >= 1, got {K_max}")
    if not (eps > 0):
        raise ConfigError(f"eps must be > 0, got {eps}")
    K_max = int(K_max)
    ratio = D_U / D_L
    log_alpha = math.log(alpha)
    log_inv = -log_alpha
    cap = v_min * D_U

    if cap > log_inv and _log_f(cap, ratio, K_max) <= log_alpha:
        lo, hi = log_inv, cap

        def feasible(g):
            return _log_f(g, ratio, K_max) <= log_alpha
    else:
        lo, hi = max(cap, log_inv), ratio * math.log(2.0 / alpha)

        def feasible(g):
            return np.logaddexp(-g, _log_f(g, ratio, K_max)) <= log_alpha

    if not feasible(hi):
        raise CalibrationError(
            f"threshold bracket [{lo}, {hi}] holds no feasible point")
    if feasible(lo) and lo > log_inv:
        return lo
    while hi - lo > eps:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def threshold_budget(g: float, D_L: float, D_U: float, v_min: float, K_max: int) -> float:
    """Left-hand side of the threshold inequality at g."""
    ratio = D_U / D_L
    ind = math.exp(-g) if g > v_min * D_U else 0.0
    return ind + math.exp(_log_f(g, ratio, int(K_max)))


def min_sufficient_kmax(g: float, ratio: float) -> int:
    """Smallest K_max for which the [1, K_max] argmin equals the argmin over all k.

    With u = ln(ratio)/k the objective decreases in k exactly while
    u e^{-u} > 1/g, so the continuous minimizer sits at ln(ratio)/u1 where
    u1 < 1 solves u e^{-u} = 1/g.
    """
    if g <= math.e:
        return 1
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(-mid) < 1.0 / g:
            lo = mid
        else:
            hi = mid
    return max(1, math.ceil(math.log(ratio) / lo))


@dataclass(frozen=True)
class MixtureCalibration:
    """Finite-mixture parameters.

    In the multi-baseline case ``lambdas`` holds λ_0 > ... > λ_K and
    ``omegas`` the normalized weights (ω_0 may be zero). The single-baseline
    case holds one λ = ∇ψ*(Δ_L) with weight one and ``single_baseline`` set.
    """

    alpha: float
    Delta_L: float
    Delta_U: float
    K_max: int
    family: PsiFamily
    lambdas: tuple
    omegas: tuple
    deltas: tuple
    g_alpha: float
    K_alpha: int
    eta: float
    W: float
    D_L: float
    D_U: float
    single_baseline: bool = False

    @property
    def n_components(self) -> int:
        return len(self.lambdas)

    @property
    def log_omegas(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.omegas, dtype=float))

    @property
    def psis(self) -> np.ndarray:
        return np.array([self.family.psi(lam) for lam in self.lambdas])

    def to_dict(self) -> dict:
        return {
            "type": "mixture",
            "alpha": self.alpha,
            "Delta_L": self.Delta_L,
            "Delta_U": self.Delta_U,
            "K_max": self.K_max,
            "family": self.family.describe(),
            "lambdas": list(self.lambdas),
            "omegas": list(self.omegas),
            "deltas": list(self.deltas),
            "g_alpha": self.g_alpha,
            "K_alpha": self.K_alpha,
            "eta": self.eta,
            "W": self.W,
            "D_L": self.D_L,
            "D_U": self.D_U,
            "single_baseline": self.single_baseline,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureCalibration":
        fam = PsiFamily(d["family"]["family"], d["family"].get("p0"))
        return cls(
            alpha=float(d["alpha"]), Delta_L=float(d["Delta_L"]),
            Delta_U=float(d["Delta_U"]), K_max=int(d["K_max"]), family=fam,
            lambdas=tuple(float(v) for v in d["lambdas"]),
            omegas=tuple(float(v) for v in d["omegas"]),
            deltas=tuple(float(v) for v in d["deltas"]),
            g_alpha=float(d["g_alpha"]), K_alpha=int(d["K_alpha"]),
            eta=float(d["eta"]), W=float(d["W"]), D_L=float(d["D_L"]),
            D_U=float(d["D_U"]), single_baseline=bool(d["single_baseline"]),
        )


def compute_baseline(alpha: float, Delta_L: float, Delta_U: float, K_max: int,
                     fam: PsiFamily, eps: float = DEFAULT_EPS) -> MixtureCalibration:
    """Build the finite mixture of exponential baselines for Δ* in [Δ_L, Δ_U].

    Args:
        alpha: ARL level.
        Delta_L: Lower bound on Δ*.
        Delta_U: Upper bound on Δ*.
        K_max: Maximum number of baselines considered.
        fam: The ψ family.
        eps: Threshold bisection tolerance.

    Returns:
        A MixtureCalibration.

    Raises:
        CalibrationError: if the Δ bounds are not usable for the family.
    """
    alpha = _check_alpha(alpha)
    if not (0.0 < Delta_L < Delta_U):
        raise CalibrationError(f"need 0 < Delta_L < Delta_U, got {Delta_L}, {Delta_U}")
    try:
        lam_L = fam.grad_conjugate(Delta_L)
        lam_U = fam.grad_conjugate(Delta_U)
        D_L = fam.conjugate(Delta_L)
        D_U = fam.conjugate(Delta_U)
    except DomainError as exc:
        raise CalibrationError(str(exc)) from exc
    K_max = int(K_max)
    if K_max < 1:
        raise ConfigError(f"K_max must be >= 1, got {K_max}")
    log_inv = -math.log(alpha)

    if log_inv <= fam.v_min * D_L:
        return MixtureCalibration(
            alpha=alpha, Delta_L=Delta_L, Delta_U=Delta_U, K_max=K_max, family=fam,
            lambdas=(lam_L,), omegas=(1.0,), deltas=(Delta_L,), g_alpha=log_inv,
            K_alpha=1, eta=D_U / D_L, W=alpha, D_L=D_L, D_U=D_U,
            single_baseline=True)

    g = compute_threshold(alpha, D_L, D_U, fam.v_min, K_max, eps)
    ratio = D_U / D_L
    K = argmin_components(g, ratio, K_max)
    eta = ratio ** (1.0 / K)

    deltas = [Delta_U]
    lambdas = [lam_U]
    for k in range(1, K):
        try:
            d_k = fam.solve_conjugate(D_U * eta ** (-k))
        except DomainError as exc:
            raise CalibrationError(f"baseline {k}: {exc}") from exc
        deltas.append(d_k)
        lambdas.append(fam.grad_conjugate(d_k))
    deltas.append(Delta_L)
    lambdas.append(lam_L)

    w0 = math.exp(-g) if g > fam.v_min * D_U else 0.0
    wk = math.exp(-g / eta)
    W = w0 + K * wk
    omegas = [w0 / W] + [wk / W] * K
    return MixtureCalibration(
        alpha=alpha, Delta_L=Delta_L, Delta_U=Delta_U, K_max=K_max, family=fam,
        lambdas=tuple(lambdas), omegas=tuple(omegas), deltas=tuple(deltas),
        g_alpha=g, K_alpha=K, eta=eta, W=W, D_L=D_L, D_U=D_U)


def zeta_tail(s: float, n_terms: int = ZETA_TERMS) -> float:
    """Upper bound on ζ(s) - 1 = Σ_{k≥1} (1+k)^{-s}.

    Exact partial sum over k ≤ n_terms plus the midpoint-convexity tail bound
    ∫_{n+1/2}^∞ (1+x)^{-s} dx, which is tight to O(n^{-s-2}).
    """
    if not (s > 1.0):
        raise DomainError(f"zeta exponent must exceed 1, got {s}")
    k = np.arange(2.0, n_terms + 2.0)
    head = float(np.sum(k[::-1] ** (-s)))
    tail = (n_terms + 1.5) ** (1.0 - s) / (s - 1.0)
    return head + tail


def solve_zeta_exponent(target: float, tol: float = 1e-10) -> float:
    """Find s > 1 with ζ(s) - 1 = target.

    The returned s sits on the side where the series does not exceed target.
    """
    target = float(target)
    if not (target > 0.0) or not math.isfinite(target):
        raise DomainError(f"zeta target must be positive, got {target}")
    hi = 2.0
    while zeta_tail(hi) > target:
        hi *= 2.0
        if hi > 4096:
            raise CalibrationError(f"zeta target {target} too small")
    lo = 1.5
    while zeta_tail(lo) <= target:
        lo = 1.0 + 0.5 * (lo - 1.0)
        if lo - 1.0 < 1e-12:
            raise CalibrationError(f"zeta target {target} too large")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = zeta_tail(mid)
        if val <= target:
            hi = mid
            if target - val <= tol * max(1.0, target):
                break
        else:
            lo = mid
    if hi < ZETA_WARN_BELOW:
        warnings.warn(f"zeta exponent s={hi:.6g} < {ZETA_WARN_BELOW}; "
                      "series tail accuracy is reduced", RuntimeWarning, stacklevel=2)
    return hi


@dataclass(frozen=True)
class AdaptiveCalibration:
    """Finite core at level rα plus the parameters of the minted tail."""

    alpha: float
    r: float
    schedule_density: float
    core: MixtureCalibration
    s: float
    V_0: float
    D_0: float
    Delta_0: float
    core_omegas: tuple = field(default=())

    @property
    def family(self) -> PsiFamily:
        return self.core.family

    @property
    def g_core(self) -> float:
        return self.core.g_alpha

    @property
    def eta(self) -> float:
        return self.core.eta

    @property
    def K_L(self) -> int:
        return self.core.K_alpha

    @property
    def W(self) -> float:
        return self.core.W

    @property
    def gamma0(self) -> float:
        return self.alpha / self.core.W

    def schedule(self, n: int) -> int:
        """K(n) = K_L + ⌈m log_η n⌉."""
        if n < 1:
            return self.K_L
        return self.K_L + math.ceil(self.schedule_density * math.log(n) / math.log(self.eta))

    def g_index(self, k: int) -> float:
        """Boundary level g_k used when minting component k > K_L."""
        return self.g_core + self.s * self.eta * math.log(1.0 + k - self.K_L)

    def mint(self, k: int) -> tuple[float, float, float]:
        """Return (Δ_k, λ_k, ω_k) for a tail component k > K_L."""
        if k <= self.K_L:
            raise ConfigError(f"component {k} belongs to the core (K_L={self.K_L})")
        g_k = self.g_index(k)
        level = g_k / (self.V_0 * self.eta ** k)
        try:
            d_k = self.family.solve_conjugate(level)
            lam = self.family.grad_conjugate(d_k)
        except (DomainError, CalibrationError) as exc:
            raise CalibrationError(f"minting component {k}: {exc}") from exc
        return d_k, lam, math.exp(-g_k / self.eta) / self.alpha

    def total_weight(self) -> float:
        """Upper bound on W + e^{-g/η}(ζ(s) - 1); must not exceed α."""
        return self.core.W + math.exp(-self.g_core / self.eta) * zeta_tail(self.s)

    def margin(self) -> float:
        return self.alpha - self.total_weight()

    def to_dict(self) -> dict:
        return {
            "type": "adaptive",
            "alpha": self.alpha,
            "r": self.r,
            "schedule_density": self.schedule_density,
            "core": self.core.to_dict(),
            "s": self.s,
            "V_0": self.V_0,
            "D_0": self.D_0,
            "Delta_0": self.Delta_0,
            "core_omegas": list(self.core_omegas),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptiveCalibration":
        return cls(
            alpha=float(d["alpha"]), r=float(d["r"]),
            schedule_density=float(d["schedule_density"]),
            core=MixtureCalibration.from_dict(d["core"]), s=float(d["s"]),
            V_0=float(d["V_0"]), D_0=float(d["D_0"]), Delta_0=float(d["Delta_0"]),
            core_omegas=tuple(float(v) for v in d["core_omegas"]),
        )


def boundary_g(t: float, cal: AdaptiveCalibration) -> float:
    """Continuous boundary g(t) = g_rα + sη log(1 + log_η(max(t/(V_0 η^K_L), 1)))."""
    if not (t >= 1.0):
        raise DomainError(f"boundary argument must be >= 1, got {t}")
    eta = cal.eta
    x = max(t / (cal.V_0 * eta ** cal.K_L), 1.0)
    return cal.g_core + cal.s * eta * math.log1p(math.log(x) / math.log(eta))


def build_adaptive_calibration(alpha: float, Delta_L: float, Delta_0: float, r: float,
                               schedule_density: float, K_0: int, fam: PsiFamily,
                               eps: float = DEFAULT_EPS) -> AdaptiveCalibration:
    """Calibrate the adaptive mixture.

    Args:
        alpha: ARL level.
        Delta_L: Lower end of the guessed Δ* bracket.
        Delta_0: Upper end of the guessed Δ* bracket.
        r: Share of α spent on the core, in (0, 1).
        schedule_density: Growth rate m ≥ 1 of the component schedule.
        K_0: K_max passed to the core calibration.
        fam: The ψ family.
        eps: Threshold bisection tolerance.

    Raises:
        CalibrationError: if the core is single-baseline or leaves no α budget.
    """
    alpha = _check_alpha(alpha)
    if not (0.0 < r < 1.0):
        raise ConfigError(f"r must be in (0,1), got {r}")
    if not (schedule_density >= 1.0):
        raise ConfigError(f"schedule density must be >= 1, got {schedule_density}")
    if not (0.0 < Delta_L < Delta_0):
        raise ConfigError(f"need 0 < Delta_L < Delta_0, got {Delta_L}, {Delta_0}")
    core = compute_baseline(r * alpha, Delta_L, Delta_0, K_0, fam, eps)
    if core.single_baseline:
        raise CalibrationError(
            "core calibration collapsed to a single baseline; "
            "lower Delta_L or r to obtain a spaced grid")
    budget = alpha - core.W
    if not (budget > 0.0):
        raise CalibrationError(f"no budget left for the tail: alpha - W = {budget}")
    s = solve_zeta_exponent(budget * math.exp(core.g_alpha / core.eta))
    D_0 = core.D_U
    cal = AdaptiveCalibration(
        alpha=alpha, r=float(r), schedule_density=float(schedule_density), core=core,
        s=s, V_0=core.g_alpha / D_0, D_0=D_0, Delta_0=float(Delta_0),
        core_omegas=tuple(w * core.W / alpha for w in core.omegas))
    if cal.total_weight() > alpha + 1e-12:
        raise CalibrationError(
            f"adaptive weights exceed alpha: total {cal.total_weight()} > {alpha}")
    return cal

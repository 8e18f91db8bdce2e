"""Cumulant-like ψ families for exponential baseline increments.

Two families are provided:

* Bernoulli(p0): ψ_B(λ) = log(1 - p0 + p0 e^λ) - λ p0, with ψ* equal to the
  Bernoulli Kullback-Leibler divergence KL(p0 + z ‖ p0).
* SubExponential: ψ_E(λ) = -log(1 - λ) - λ on (0, 1), with ψ*(z) = z - log(1 + z).

All members are immutable and the methods are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import CalibrationError, DomainError, NumericError

BERNOULLI = "bernoulli"
SUBEXPONENTIAL = "subexponential"

LAMBDA_CLAMP = 700.0
_SOLVE_TOL = 1e-12
_SOLVE_MAXITER = 200


def _h(u: float) -> float:
    """u - log(1 + u), accurate near zero."""
    if abs(u) < 0.1:
        return math.fsum((-u) ** k / k for k in range(20, 1, -1))
    return u - math.log1p(u)


def _expm1_minus(lam: float) -> float:
    """e^λ - 1 - λ, accurate near zero."""
    if abs(lam) < 0.5:
        return math.fsum(lam ** k / math.factorial(k) for k in range(24, 1, -1))
    return math.expm1(lam) - lam


def bernoulli_kl(q: float, p: float) -> float:
    """KL(Ber(q) ‖ Ber(p)) with the 0 log 0 = 0 convention."""
    out = 0.0
    if q > 0.0:
        out += q * math.log(q / p)
    if q < 1.0:
        out += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return out


@dataclass(frozen=True)
class PsiFamily:
    """A ψ function together with its conjugate and inverse maps.

    Attributes:
        family: Either ``"bernoulli"`` or ``"subexponential"``.
        p0: Pre-change success probability bound (Bernoulli only).
    """

    family: str
    p0: Optional[float] = None

    def __post_init__(self):
        if self.family == BERNOULLI:
            if self.p0 is None or not (0.0 < self.p0 < 1.0):
                raise DomainError(f"Bernoulli family needs p0 in (0,1), got {self.p0}")
        elif self.family == SUBEXPONENTIAL:
            if self.p0 is not None:
                raise DomainError("SubExponential family takes no p0")
        else:
            raise DomainError(f"unknown psi family {self.family!r}")

    @classmethod
    def bernoulli(cls, p0: float) -> "PsiFamily":
        return cls(BERNOULLI, float(p0))

    @classmethod
    def subexponential(cls) -> "PsiFamily":
        return cls(SUBEXPONENTIAL)

    @property
    def v_min(self) -> float:
        """Minimum of the variance map v over the sample space."""
        return 1.0 if self.family == BERNOULLI else 0.0

    @property
    def lambda_domain(self) -> tuple[float, float]:
        if self.family == BERNOULLI:
            return (-LAMBDA_CLAMP, LAMBDA_CLAMP)
        return (-math.inf, 1.0)

    @property
    def conjugate_sup(self) -> float:
        """Supremum of the conjugate domain (exclusive)."""
        return 1.0 - self.p0 if self.family == BERNOULLI else math.inf

    def describe(self) -> dict:
        return {"family": self.family, "p0": self.p0}

    def _check_lambda(self, lam: float) -> float:
        lam = float(lam)
        if not math.isfinite(lam):
            raise DomainError(f"lambda must be finite, got {lam}")
        if self.family == BERNOULLI:
            if abs(lam) > LAMBDA_CLAMP:
                raise DomainError(f"|lambda| must be <= {LAMBDA_CLAMP}, got {lam}")
        elif lam >= 1.0:
            raise DomainError(f"SubExponential lambda must be < 1, got {lam}")
        return lam

    def _check_z(self, z: float) -> float:
        z = float(z)
        if not (z >= 0.0) or not math.isfinite(z):
            raise DomainError(f"conjugate argument must be >= 0, got {z}")
        if z >= self.conjugate_sup:
            raise DomainError(
                f"conjugate argument must be < {self.conjugate_sup}, got {z}")
        return z

    def psi(self, lam: float) -> float:
        """Evaluate ψ(λ)."""
        lam = self._check_lambda(lam)
        if self.family == BERNOULLI:
            p0 = self.p0
            if lam > 1.0:
                return lam * (1 - p0) + math.log(p0 + (1 - p0) * math.exp(-lam))
            # log1p(a) - λ p0 split as (a - λ p0) - (a - log1p a), a = p0 (e^λ - 1)
            a = p0 * math.expm1(lam)
            return p0 * _expm1_minus(lam) - _h(a)
        return _h(-lam)

    def grad(self, lam: float) -> float:
        """Evaluate ∇ψ(λ)."""
        lam = self._check_lambda(lam)
        if self.family == BERNOULLI:
            p0 = self.p0
            if lam > 0:
                e = math.exp(-lam)
                return p0 * (1 - p0) * (1 - e) / (p0 + (1 - p0) * e)
            return p0 * (1 - p0) * math.expm1(lam) / (1 + p0 * math.expm1(lam))
        return lam / (1.0 - lam)

    def conjugate(self, z: float) -> float:
        """Evaluate ψ*(z) on the nonnegative half of the conjugate domain."""
        z = self._check_z(z)
        if z == 0.0:
            return 0.0
        if self.family == BERNOULLI:
            return bernoulli_kl(self.p0 + z, self.p0)
        return _h(z)

    def grad_conjugate(self, delta: float) -> float:
        """Evaluate ∇ψ*(Δ), the λ with ∇ψ(λ) = Δ."""
        delta = self._check_z(delta)
        if self.family == BERNOULLI:
            p0 = self.p0
            return math.log1p(delta / p0) - math.log1p(-delta / (1 - p0))
        return delta / (1.0 + delta)

    def solve_conjugate(self, c: float) -> float:
        """Return the z >= 0 with ψ*(z) = c.

        Bisection on the increasing map z -> ψ*(z).

        Raises:
            DomainError: if c is negative or not finite.
            CalibrationError: if c is not attained inside the conjugate domain.
            NumericError: if the iteration cap is hit.
        """
        c = float(c)
        if not math.isfinite(c) or c < 0.0:
            raise DomainError(f"conjugate level must be finite and >= 0, got {c}")
        if c == 0.0:
            return 0.0
        lo = 1e-14
        if self.family == BERNOULLI:
            hi = 1.0 - self.p0 - 1e-12
            if self.conjugate(hi) < c:
                raise CalibrationError(
                    f"level {c} exceeds sup of psi* ({self.conjugate(hi)}) for p0={self.p0}")
        else:
            hi = 1.0
            while self.conjugate(hi) <= c:
                hi *= 2.0
                if hi > 1e300:
                    raise CalibrationError(f"level {c} not attained")
        if self.conjugate(lo) >= c:
            return lo
        for _ in range(_SOLVE_MAXITER):
            mid = 0.5 * (lo + hi)
            val = self.conjugate(mid)
            if abs(val - c) <= _SOLVE_TOL * max(1.0, c) or mid in (lo, hi):
                return mid
            if val < c:
                lo = mid
            else:
                hi = mid
        mid = 0.5 * (lo + hi)
        if abs(self.conjugate(mid) - c) <= 1e-10 * max(1.0, c):
            return mid
        raise NumericError(f"solve_conjugate did not converge for c={c}")


def psi_eval(fam: PsiFamily, lam: float) -> float:
    return fam.psi(lam)


def psi_grad(fam: PsiFamily, lam: float) -> float:
    return fam.grad(lam)


def psi_conjugate(fam: PsiFamily, z: float) -> float:
    return fam.conjugate(z)


def grad_conjugate(fam: PsiFamily, delta: float) -> float:
    return fam.grad_conjugate(delta)


def solve_conjugate(fam: PsiFamily, c: float) -> float:
    return fam.solve_conjugate(c)

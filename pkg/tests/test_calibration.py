import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from scipy.special import zeta

from edetect.calibration import (AdaptiveCalibration, MixtureCalibration, argmin_components,
                                 boundary_g, build_adaptive_calibration, compute_baseline,
                                 compute_threshold, min_sufficient_kmax, solve_zeta_exponent,
                                 threshold_budget, zeta_tail)
from edetect.errors import CalibrationError, ConfigError, DomainError
from edetect.psi import PsiFamily


def budget_oracle(g, D_L, D_U, v_min, K_max):
    k = np.arange(1, K_max + 1, dtype=float)
    f = np.min(k * np.exp(-g * (D_U / D_L) ** (-1.0 / k)))
    return (math.exp(-g) if g > v_min * D_U else 0.0) + f


@pytest.fixture(scope="module")
def bern_cal():
    return compute_baseline(1e-3, 0.02, 0.41, 1000, PsiFamily.bernoulli(0.49))


@pytest.fixture(scope="module")
def bounded_cal():
    return compute_baseline(1e-3, 0.024, 1600, 1000, PsiFamily.subexponential())


class TestComputeThreshold:
    def test_above_log_inverse_alpha(self, bern_cal):
        assert bern_cal.g_alpha > math.log(1e3)

    @pytest.mark.parametrize("cal_name", ["bern_cal", "bounded_cal"])
    def test_infimum_property(self, cal_name, request):
        cal = request.getfixturevalue(cal_name)
        v = cal.family.v_min
        assert budget_oracle(cal.g_alpha, cal.D_L, cal.D_U, v, 1000) <= cal.alpha
        assert budget_oracle(cal.g_alpha - 2e-9, cal.D_L, cal.D_U, v, 1000) > cal.alpha

    def test_grid_scan_oracle(self, bern_cal):
        c = bern_cal
        k = np.arange(1, 1001, dtype=float)[None, :]
        R = c.D_U / c.D_L

        def first_feasible(grid):
            f = np.min(k * np.exp(-grid[:, None] * R ** (-1.0 / k)), axis=1)
            ok = np.exp(-grid) * (grid > c.D_U) + f <= 1e-3
            return grid[int(np.argmax(ok))]

        coarse = first_feasible(np.arange(math.log(1e3), c.g_alpha + 1.0, 1e-3))
        fine = first_feasible(np.arange(coarse - 1e-3, coarse + 1e-6, 1e-7))
        assert abs(fine - c.g_alpha) <= 1e-7

    def test_budget_helper_matches_oracle(self, bern_cal):
        c = bern_cal
        for g in (7.0, 10.0, c.g_alpha, 20.0):
            assert threshold_budget(g, c.D_L, c.D_U, 1.0, 1000) == pytest.approx(
                budget_oracle(g, c.D_L, c.D_U, 1.0, 1000), rel=1e-12)

    def test_first_branch(self):
        # large v_min·D_U puts the root below the indicator jump
        g = compute_threshold(0.01, 1.0, 4.0, 100.0, 50)
        assert math.log(100) < g < 400.0
        assert budget_oracle(g, 1.0, 4.0, 100.0, 50) <= 0.01
        assert budget_oracle(g - 2e-9, 1.0, 4.0, 100.0, 50) > 0.01

    def test_invalid(self):
        with pytest.raises(ConfigError):
            compute_threshold(1.5, 1.0, 2.0, 0.0, 10)
        with pytest.raises(ConfigError):
            compute_threshold(0.1, 2.0, 1.0, 0.0, 10)
        with pytest.raises(ConfigError):
            compute_threshold(0.1, 1.0, 2.0, 0.0, 0)

    def test_eps_respected(self, bern_cal):
        c = bern_cal
        coarse = compute_threshold(1e-3, c.D_L, c.D_U, 1.0, 1000, eps=1e-3)
        assert coarse >= c.g_alpha - 1e-9
        assert coarse - c.g_alpha <= 1e-3


class TestComputeBaseline:
    def test_bernoulli_count(self, bern_cal):
        assert bern_cal.K_alpha == 69

    def test_bounded_components(self, bounded_cal):
        # K_alpha + 1 parameters λ_0..λ_K
        assert bounded_cal.n_components == bounded_cal.K_alpha + 1

    @pytest.mark.parametrize("cal_name", ["bern_cal", "bounded_cal"])
    def test_structure(self, cal_name, request):
        cal = request.getfixturevalue(cal_name)
        fam = cal.family
        lam = np.array(cal.lambdas)
        d = np.array(cal.deltas)
        assert (np.diff(lam) < 0).all()
        assert (np.diff(d) < 0).all()
        assert d[0] == cal.Delta_U and d[-1] == cal.Delta_L
        assert lam[0] == fam.grad_conjugate(cal.Delta_U)
        assert lam[-1] == fam.grad_conjugate(cal.Delta_L)
        assert math.fsum(cal.omegas) == pytest.approx(1.0, abs=1e-12)
        assert cal.W <= cal.alpha
        assert cal.eta ** cal.K_alpha == pytest.approx(cal.D_U / cal.D_L, rel=1e-10)
        for k in range(1, cal.K_alpha):
            assert fam.conjugate(d[k]) == pytest.approx(cal.D_U * cal.eta ** (-k), rel=1e-9)

    @pytest.mark.parametrize("cal_name", ["bern_cal", "bounded_cal"])
    def test_argmin_exhaustive(self, cal_name, request):
        cal = request.getfixturevalue(cal_name)
        R = cal.D_U / cal.D_L
        vals = [k * math.exp(-cal.g_alpha * R ** (-1.0 / k)) for k in range(1, 1001)]
        assert cal.K_alpha == int(np.argmin(vals)) + 1

    def test_weights(self, bern_cal):
        c = bern_cal
        w0 = math.exp(-c.g_alpha) if c.g_alpha > c.D_U else 0.0
        wk = math.exp(-c.g_alpha / c.eta)
        assert c.W == pytest.approx(w0 + c.K_alpha * wk, rel=1e-14)
        assert c.omegas[1] == pytest.approx(wk / c.W, rel=1e-14)

    def test_single_baseline(self, bern):
        # KL(0.99‖0.49) ≈ 0.657 exceeds log(1/α) for α = 0.6
        cal = compute_baseline(0.6, 0.5, 0.505, 100, bern)
        assert cal.single_baseline
        assert cal.K_alpha == 1
        assert cal.lambdas == (bern.grad_conjugate(0.5),)
        assert cal.omegas == (1.0,)

    def test_bad_bounds(self, bern):
        with pytest.raises(CalibrationError):
            compute_baseline(0.01, 0.3, 0.2, 100, bern)
        with pytest.raises(CalibrationError):
            compute_baseline(0.01, 0.1, 0.6, 100, bern)

    def test_round_trip_dict(self, bern_cal):
        again = MixtureCalibration.from_dict(bern_cal.to_dict())
        assert again == bern_cal

    def test_kmax_sufficient(self, bern_cal):
        need = min_sufficient_kmax(bern_cal.g_alpha, bern_cal.D_U / bern_cal.D_L)
        assert need <= 1000
        assert argmin_components(bern_cal.g_alpha, bern_cal.D_U / bern_cal.D_L, need) == 69


class TestZeta:
    def test_s2(self):
        assert solve_zeta_exponent(math.pi ** 2 / 6 - 1) == pytest.approx(2.0, abs=1e-8)

    def test_s3(self):
        assert solve_zeta_exponent(float(mp.zeta(3)) - 1) == pytest.approx(3.0, abs=1e-8)

    @pytest.mark.parametrize("s", [1.02, 1.1, 1.5, 2.0, 4.0])
    def test_series_matches_zeta(self, s):
        assert zeta_tail(s) == pytest.approx(float(mp.zeta(s)) - 1, rel=1e-12)
        assert zeta_tail(s) >= float(mp.zeta(s)) - 1 - 1e-15

    def test_monotone(self):
        targets = [0.05, 0.1, 0.5, 1.0, 3.0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ss = [solve_zeta_exponent(t) for t in targets]
        assert all(a > b for a, b in zip(ss, ss[1:]))

    def test_returned_side(self):
        s = solve_zeta_exponent(0.3)
        assert zeta_tail(s) <= 0.3

    def test_warning(self):
        with pytest.warns(RuntimeWarning):
            solve_zeta_exponent(40.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            solve_zeta_exponent(0.0)


@pytest.fixture(scope="module")
def acal():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_adaptive_calibration(0.01, 0.024, 1.0, 0.5, 1.0, 1000,
                                          PsiFamily.subexponential())


class TestAdaptiveCalibration:
    def test_validity_mpmath(self, acal):
        # Σ_{k≥1} e^{-g(V0 η^k)/η} with an exact Hurwitz-zeta tail
        N = 400
        head = math.fsum(math.exp(-boundary_g(acal.V_0 * acal.eta ** k, acal) / acal.eta)
                         for k in range(1, N + 1))
        j_last = N - acal.K_L
        tail = mp.exp(-acal.g_core / acal.eta) * mp.zeta(acal.s, j_last + 2)
        # v_min = 0, so the ω_0 indicator is active
        total = math.exp(-acal.g_core) + head + float(tail)
        assert total <= acal.alpha + 1e-12
        assert acal.total_weight() <= acal.alpha + 1e-12

    def test_core_rescale(self, acal):
        assert math.fsum(acal.core_omegas) == pytest.approx(acal.W / acal.alpha, rel=1e-12)
        assert acal.gamma0 == pytest.approx(1 / math.fsum(acal.core_omegas), rel=1e-12)

    def test_s_greater_than_one(self, acal):
        assert acal.s > 1.0

    def test_mint_matches_boundary(self, acal):
        for k in range(acal.K_L + 1, acal.K_L + 20):
            t = acal.V_0 * acal.eta ** k
            assert acal.g_index(k) == pytest.approx(boundary_g(t, acal), rel=1e-12)
            d, lam, w = acal.mint(k)
            assert acal.family.conjugate(d) == pytest.approx(acal.g_index(k) / t, rel=1e-9)
            assert w == pytest.approx(math.exp(-acal.g_index(k) / acal.eta) / acal.alpha)

    def test_minted_deltas_continue_grid(self, acal):
        d_prev = acal.core.Delta_L
        for k in range(acal.K_L + 1, acal.K_L + 30):
            d, _, _ = acal.mint(k)
            assert d < d_prev
            d_prev = d

    def test_mint_core_index_rejected(self, acal):
        with pytest.raises(ConfigError):
            acal.mint(acal.K_L)

    def test_s_increases_with_r(self):
        fam = PsiFamily.subexponential()
        ss = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for r in (0.1, 0.3, 0.5, 0.7, 0.9):
                ss.append(build_adaptive_calibration(0.01, 0.024, 1.0, r, 1.0, 1000, fam).s)
        # less budget left for the tail forces a faster-decaying series
        assert all(a < b for a, b in zip(ss, ss[1:]))

    def test_single_baseline_core_rejected(self):
        with pytest.raises(CalibrationError):
            build_adaptive_calibration(0.9, 0.5, 0.505, 0.9, 1.0, 100, PsiFamily.bernoulli(0.49))

    def test_invalid(self):
        fam = PsiFamily.subexponential()
        with pytest.raises(ConfigError):
            build_adaptive_calibration(0.01, 0.024, 1.0, 1.0, 1.0, 100, fam)
        with pytest.raises(ConfigError):
            build_adaptive_calibration(0.01, 0.024, 1.0, 0.5, 0.5, 100, fam)

    def test_round_trip_dict(self, acal):
        assert AdaptiveCalibration.from_dict(acal.to_dict()) == acal


class TestBoundary:
    def test_flat_below(self, acal):
        t0 = acal.V_0 * acal.eta ** acal.K_L
        for t in (1.0, t0 / 2, t0):
            assert boundary_g(max(t, 1.0), acal) == acal.g_core

    def test_one_step(self, acal):
        t = acal.V_0 * acal.eta ** (acal.K_L + 1)
        assert boundary_g(t, acal) == pytest.approx(acal.g_core + acal.s * acal.eta * math.log(2),
                                                    rel=1e-12)

    def test_shape(self, acal):
        t = np.logspace(0, 6, 400)
        g = np.array([boundary_g(v, acal) for v in t])
        assert (np.diff(g) >= 0).all()
        assert (np.diff(g / t) <= 1e-15).all()

    def test_domain(self, acal):
        with pytest.raises(DomainError):
            boundary_g(0.5, acal)

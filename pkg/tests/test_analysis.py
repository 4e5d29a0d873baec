import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from multiairfed import analysis
from multiairfed.analysis import (DivergenceError, NoActiveDevicesError,
                                  campbell_downlink_sum_mc, compute_beta, compute_psi,
                                  distortion_derivative, distortion_objective,
                                  iid_distortion_intra, interference_geometry_integral,
                                  min_distortion_closed_form, min_distortion_inter,
                                  min_distortion_intra, optimal_theta_inter,
                                  optimal_theta_intra, psi_monte_carlo, uplink_rx_power)
from multiairfed.radio import RadioConfig

CFG = RadioConfig()
Q = CFG.psi / CFG.rho
COND = dict(beta=CFG.beta, downlink_gain=10.0, ref_radius=20.0, alpha=4.0)


class TestPsi:
    def test_zero_intensity(self):
        assert compute_psi(CFG.with_(lambda_p=0.0)) == 0.0
        assert psi_monte_carlo(CFG.with_(lambda_p=0.0), 100, np.random.default_rng(0)) == (0, 0)

    def test_linear_in_devices_and_intensity(self):
        assert compute_psi(CFG.with_(M=30)) == pytest.approx(2 * CFG.psi, rel=1e-12)
        assert compute_psi(CFG.with_(lambda_p=4e-5)) == pytest.approx(2 * CFG.psi, rel=1e-12)

    def test_constants_differ_by_activity(self):
        paper = compute_psi(CFG.with_(ei_constant="paper"))
        assert paper == pytest.approx(math.exp(-0.5) * CFG.psi, rel=1e-12)

    def test_reference_values(self):
        assert CFG.psi == pytest.approx(5.857e-5, rel=1e-3)
        assert CFG.with_(ei_constant="paper").psi == pytest.approx(3.553e-5, rel=1e-3)

    def test_divergence(self):
        with pytest.raises(DivergenceError):
            interference_geometry_integral(2.0, 4.0, 30.0, 4.0)
        with pytest.raises(DivergenceError):
            compute_psi(CFG.with_(guard_radius=0.0))

    @pytest.mark.parametrize("x,y", [(40.0, 10.0), (100.0, 29.0), (12.0, 10.0), (9.0, 6.0)])
    def test_angular_integral(self, x, y):
        # brute-force angular quadrature with the guard applied pointwise
        guard = 4.0

        def f(t):
            d2 = x * x + y * y - 2 * x * y * math.cos(t)
            return d2**-2 if d2 >= guard**2 else 0.0

        c = (x * x + y * y - guard**2) / (2 * x * y)
        breaks = [math.acos(c), 2 * math.pi - math.acos(c)] if abs(c) < 1 else []
        ref, _ = integrate.quad(f, 0, 2 * math.pi, points=breaks or None, limit=400,
                                epsrel=1e-10)
        got = analysis._theta_integral(x, y, 4.0, guard)
        assert got == pytest.approx(ref, rel=1e-6)

    def test_geometry_integral_tail_insensitive(self):
        a = interference_geometry_integral(4.0, 4.0, 30.0, 4.0, 1e-4)
        b = interference_geometry_integral(4.0, 4.0, 30.0, 4.0, 1e-6)
        assert a == pytest.approx(b, rel=1e-4)
        assert a == pytest.approx(2.372e7, rel=1e-3)

    def test_monte_carlo_oracle(self):
        m, se = psi_monte_carlo(CFG, 20000, np.random.default_rng(11), 500.0)
        assert abs(m - CFG.psi) < 3 * se

    def test_high_threshold_silences(self):
        rng = np.random.default_rng(12)
        base, _ = psi_monte_carlo(CFG, 500, rng, 300.0)
        high, _ = psi_monte_carlo(CFG.with_(th1=20.0), 500, rng, 300.0)
        assert high < 1e-6 * base

    def test_min_realizations(self):
        with pytest.raises(ValueError):
            psi_monte_carlo(CFG, 10, np.random.default_rng(0))


class TestBeta:
    def test_value(self):
        assert compute_beta(CFG) == pytest.approx(2 * math.pi * 2e-4 / 32)
        assert compute_beta(CFG) == pytest.approx(3.927e-5, rel=1e-4)

    def test_campbell_integral(self):
        tail, _ = integrate.quad(lambda x: x ** (1 - 4.0), 4.0, np.inf)
        assert compute_beta(CFG) == pytest.approx(10.0 * 2 * math.pi * 2e-5 * tail, rel=1e-10)

    def test_structure(self):
        assert compute_beta(CFG.with_(lambda_p=0.0)) == 0.0
        assert compute_beta(CFG.with_(sigma_d_sq=20.0)) == pytest.approx(2 * CFG.beta)

    def test_campbell_monte_carlo(self):
        m, se = campbell_downlink_sum_mc(CFG, 20000, np.random.default_rng(13), 500.0)
        assert abs(m - CFG.beta) < 3 * se
        assert campbell_downlink_sum_mc(CFG.with_(lambda_p=0.0), 10,
                                        np.random.default_rng(0)) == (0.0, 0.0)


def test_uplink_rx_power():
    assert uplink_rx_power(0, 1.0, 0.0) == 0
    assert uplink_rx_power(8, 2.0, 0.0) == 2 * uplink_rx_power(4, 2.0, 0.0)
    with pytest.raises(ValueError):
        uplink_rx_power(-1, 1.0, 0.0)


sigma_lists = st.lists(st.floats(0.05, 5.0), min_size=1, max_size=30)


class TestTheta:
    def test_interference_free(self):
        s = [0.5, 1.0, 2.0]
        assert optimal_theta_intra(s, 3, 0.0, 0.0, 10.0, 20.0, 4.0) == pytest.approx(3.5 / 3)
        assert optimal_theta_inter(s, 3, 3, 0.0, 0.0, 10.0, 20.0, 4.0) == pytest.approx(3.5 / 3)

    @given(sigma_lists, st.floats(0.1, 10))
    def test_scaling(self, s, c):
        n = len(s)
        a = optimal_theta_intra(s, n, Q, **COND)
        b = optimal_theta_intra([c * x for x in s], n, Q, **COND)
        assert b == pytest.approx(c * a, rel=1e-12)

    @settings(max_examples=100)
    @given(sigma_lists, st.floats(0, 50), st.floats(0, 1e-3), st.integers(1, 5))
    def test_derivative_zero_at_optimum(self, s, q, beta, C):
        n = len(s)
        t = optimal_theta_inter(s, n, C, q, beta, 10.0, 20.0, 4.0)
        d = distortion_derivative(t, s, n, q, beta, 10.0, 20.0, 4.0, C=C)
        J = distortion_objective(t, s, n, q, beta, 10.0, 20.0, 4.0, C=C).total
        assert abs(d) * t <= 1e-8 * max(J, 1e-300) + 1e-15

    def test_derivative_finite_difference(self):
        s = np.array([0.7, 1.1, 1.4, 0.9])
        for t in (0.2, 0.8, 1.5):
            h = 1e-6
            fd = (distortion_objective(t + h, s, 4, Q, **COND).total
                  - distortion_objective(t - h, s, 4, Q, **COND).total) / (2 * h)
            assert distortion_derivative(t, s, 4, Q, **COND) == pytest.approx(fd, rel=1e-6)

    def test_fine_grid_intra(self):
        s = np.ones(9)
        star = optimal_theta_intra(s, 9, Q, **COND)
        grid = np.arange(0, 2 * star, 1e-3)
        J = [distortion_objective(t, s, 9, Q, **COND).total for t in grid]
        assert abs(grid[int(np.argmin(J))] - star) <= 0.01 * star

    def test_coarse_grid_inter(self):
        s = np.exp(np.random.default_rng(0).normal(0, 0.5, 27))
        star = optimal_theta_inter(s, 27, 3, Q, **COND)
        grid = np.linspace(0.5, 1.5, 21) * star
        J = [distortion_objective(t, s, 27, Q, **COND, C=3).total for t in grid]
        assert abs(grid[int(np.argmin(J))] - star) <= 0.01 * star

    def test_single_cluster_inter_is_intra(self):
        s = [0.3, 0.9, 1.2]
        assert optimal_theta_inter(s, 3, 1, Q, **COND) == optimal_theta_intra(s, 3, Q, **COND)
        a = min_distortion_inter(s, 3, 1, Q, **COND)
        b = min_distortion_intra(s, 3, Q, **COND)
        assert a == b

    def test_errors(self):
        with pytest.raises(NoActiveDevicesError):
            optimal_theta_intra([], 0, Q, **COND)
        with pytest.raises(ValueError):
            optimal_theta_intra([1.0], 2, Q, **COND)
        with pytest.raises(ValueError):
            optimal_theta_inter([1.0], 1, 0, Q, **COND)
        with pytest.raises(ValueError):
            optimal_theta_intra([1.0], 1, Q, CFG.beta, 0.0, 20.0, 4.0)


class TestMinimumDistortion:
    @settings(max_examples=200)
    @given(sigma_lists, st.floats(0, 100), st.floats(0, 1e-2), st.integers(1, 4))
    def test_closed_form_matches_objective(self, s, q, beta, C):
        n = len(s)
        closed = min_distortion_closed_form(s, n, q, beta, 10.0, 20.0, 4.0, C=C)
        direct = min_distortion_inter(s, n, C, q, beta, 10.0, 20.0, 4.0)
        assert closed >= -1e-15
        assert direct.total == pytest.approx(closed, rel=1e-9, abs=1e-14)
        assert direct.total == direct.uplink_term + direct.downlink_term
        assert direct.uplink_term >= 0 and direct.downlink_term >= 0
        assert closed <= np.sum(np.square(s)) / n**2 * (1 + 1e-12)

    def test_zero_interference_iid(self):
        assert min_distortion_intra(np.ones(5), 5, 0.0, 0.0, 10.0, 20.0, 4.0).total == 0
        assert min_distortion_inter(np.ones(5), 5, 3, 0.0, 0.0, 10.0, 20.0, 4.0).total == 0

    @pytest.mark.parametrize("n", [1, 5, 9, 15])
    def test_iid_form(self, n):
        a = iid_distortion_intra(1.3, n, CFG.psi, CFG.rho, **COND)
        b = min_distortion_intra(np.full(n, 1.3), n, Q, **COND)
        assert a.total == pytest.approx(b.total, rel=1e-12)

    def test_iid_limits(self):
        n = 9
        up = iid_distortion_intra(1.0, n, 1e4 * n**2, 1.0, 0.0, 10.0, 20.0, 4.0).uplink_term
        assert up == pytest.approx(1 / n, rel=0.01)
        free = iid_distortion_intra(1.0, n, CFG.psi, CFG.rho, 0.0, 10.0, 20.0, 4.0)
        assert free.downlink_term == 0
        terms = [iid_distortion_intra(1.0, k, 1e-6, 1.0, 0.0, 10.0, 20.0, 4.0).uplink_term
                 for k in (8, 16, 32)]
        assert terms[1] / terms[0] == pytest.approx(0.25, rel=0.01)
        assert terms[2] / terms[1] == pytest.approx(0.25, rel=0.01)

    def test_downlink_attenuation_ordering(self):
        s = np.ones(9)
        weak = min_distortion_intra(s, 9, Q, CFG.beta, 5.0, 20.0, 4.0).downlink_term
        strong = min_distortion_intra(s, 9, Q, CFG.beta, 20.0, 20.0, 4.0).downlink_term
        near = min_distortion_intra(s, 9, Q, CFG.beta, 5.0, 10.0, 4.0).downlink_term
        assert strong < weak and near < weak

    def test_increasing_in_intensity(self):
        s = np.exp(np.random.default_rng(1).normal(0, 0.5, 9))
        vals = []
        for lam in (5e-6, 1e-5, 2e-5, 4e-5, 8e-5):
            c = CFG.with_(lambda_p=lam)
            vals.append(min_distortion_intra(s, 9, c.psi / c.rho, c.beta, 10.0, 20.0, 4.0).total)
        assert np.all(np.diff(vals) >= 0)
        assert vals[-1] <= np.sum(s**2) / 81

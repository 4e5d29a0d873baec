"""Closed-form interference and distortion analysis with Monte Carlo oracles.

Distortions are per-entry mean squared errors: the payloads are normalized to
unit power per entry, so every ``E||.||^2`` below is divided by the payload size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .geometry import sample_device_offsets, sample_parent_process
from .radio import RadioConfig, draw_uplink_fading, exp_integral, power_coefficient


class DivergenceError(ArithmeticError):
    """Raised when an interference integral has no finite value."""


class NoActiveDevicesError(ValueError):
    """Raised when an aggregation has no active devices to average."""


@dataclass(frozen=True)
class InterferenceConstants:
    psi: float
    beta: float
    psi_stderr: float = 0.0


@dataclass(frozen=True)
class DistortionBreakdown:
    uplink_term: float
    downlink_term: float

    @property
    def total(self) -> float:
        return self.uplink_term + self.downlink_term


# ---------------------------------------------------------------- interference


def _theta_integral(x: float, y: float, alpha: float, guard: float) -> float:
    """``int_0^{2pi} (x^2 + y^2 - 2xy cos t)^(-a/2) dt`` over links longer than ``guard``."""
    a2 = x * x + y * y
    b = 2 * x * y
    s = alpha / 2
    if abs(x - y) >= guard:
        # full circle: 2 pi A^-s 2F1(s/2, (s+1)/2; 1; (B/A)^2)
        z = (b / a2) ** 2
        if z < 0.95:
            return 2 * math.pi * a2 ** (-s) * special.hyp2f1(s / 2, (s + 1) / 2, 1.0, z)
        t0 = 0.0
    elif x + y <= guard:
        return 0.0
    else:
        t0 = math.acos(min(1.0, (a2 - guard * guard) / b))
    val, _ = integrate.quad(lambda t: (a2 - b * math.cos(t)) ** (-s), t0, math.pi,
                            epsabs=0.0, epsrel=1e-8, limit=200)
    return 2 * val


@lru_cache(maxsize=64)
def interference_geometry_integral(alpha: float, r0: float, R: float, guard: float,
                                   rtol: float = 1e-4) -> float:
    """Triple integral over (device radius, angle, server distance) behind ``psi``.

    ``int_{2r0}^inf int_0^{2pi} int_{r0}^R y^(1+a) |x - y|^-a x dy dt dx`` restricted to
    links with ``|x - y| >= guard``. The outer integral is extended in doubling
    segments until the analytic tail bound drops below ``1e-6`` of the running sum.
    """
    if alpha <= 2:
        raise DivergenceError(f"interference integral diverges for alpha={alpha} <= 2")
    lo = 2 * r0
    if guard <= 0 and lo < R:
        raise DivergenceError(
            "interference integral diverges: foreign devices can reach the server "
            "(singular path loss); set a positive guard radius")

    def inner(x):
        pts = sorted({p for p in (x - guard, x + guard, x) if r0 < p < R})
        f = lambda y: y ** (1 + alpha) * _theta_integral(x, y, alpha, guard)
        return integrate.quad(f, r0, R, points=pts or None, epsabs=0.0,
                              epsrel=rtol * 1e-2, limit=200)[0]

    def outer(a, b):
        pts = sorted({p for p in (r0 + guard, R - guard, R, R + guard) if a < p < b})
        return integrate.quad(lambda x: x * inner(x), a, b, points=pts or None,
                              epsabs=0.0, epsrel=rtol * 1e-1, limit=200)[0]

    x_hi = max(2 * R + guard, 2 * lo)
    total = outer(lo, x_hi)
    y_moment = (R ** (alpha + 2) - r0 ** (alpha + 2)) / (alpha + 2)
    tail = lambda X: 2 * math.pi * y_moment * 2**alpha * X ** (2 - alpha) / (alpha - 2)
    while tail(x_hi) > 1e-6 * total:
        total += outer(x_hi, 2 * x_hi)
        x_hi *= 2
    return total


def compute_psi(cfg: RadioConfig, rtol: float = 1e-4) -> float:
    """Mean inter-cluster uplink interference power at a server (per entry).

    With ``ei_constant="paper"`` the published prefactor
    ``2 M rho lambda e^-th1 Ei(th1) / (R^2 - r0^2)`` is used; ``"corrected"``
    drops the ``e^-th1`` factor, which double counts the activity probability.
    """
    if cfg.lambda_p == 0:
        return 0.0
    geo = interference_geometry_integral(cfg.alpha, cfg.r0, cfg.R, cfg.guard, rtol)
    pref = 2 * cfg.M * cfg.rho * cfg.lambda_p * exp_integral(cfg.th1) / (cfg.R**2 - cfg.r0**2)
    if cfg.ei_constant == "paper":
        pref *= math.exp(-cfg.th1)
    return pref * geo


def _guarded_gain(d: np.ndarray, alpha: float, guard: float) -> np.ndarray:
    return np.where(d >= guard, np.maximum(d, 1e-300) ** -alpha, 0.0)


def psi_monte_carlo(cfg: RadioConfig, n_realizations: int, rng: np.random.Generator,
                    window_radius: float = 2000.0) -> tuple[float, float]:
    """Simulated interference power at the origin server.

    Each realization draws edge servers outside the ``2 r0`` ball, their device
    rings, the truncation fading to the own server and the fading towards the
    origin. Returns ``(mean, stderr)`` over realizations.
    """
    if n_realizations < 100:
        raise ValueError("n_realizations must be at least 100")
    if cfg.lambda_p == 0:
        return 0.0, 0.0
    a, M = cfg.alpha, cfg.M
    vals = np.empty(n_realizations)
    for k in range(n_realizations):
        x = sample_parent_process(cfg.lambda_p, window_radius, 2 * cfg.r0, rng)
        n = len(x) * M
        y = sample_device_offsets(n, cfg.r0, cfg.R, rng) if n else np.zeros((0, 2))
        pos = np.repeat(x, M, axis=0) + y
        own = rng.exponential(1.0, n)
        cross = rng.exponential(1.0, n)
        active = own >= cfg.th1
        yr = np.hypot(y[:, 0], y[:, 1])
        d = np.hypot(pos[:, 0], pos[:, 1])
        g = _guarded_gain(d, a, cfg.guard)
        ratio = g * yr**a * cross / np.where(active, own, 1.0)
        vals[k] = cfg.rho * np.sum(np.where(active, ratio, 0.0))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_realizations))


def compute_beta(cfg: RadioConfig) -> float:
    """Downlink interference constant ``2 pi lambda sigma_d^2 / ((a-2) r0^(a-2))``."""
    if cfg.alpha <= 2:
        raise DivergenceError("beta requires alpha > 2")
    a = cfg.alpha
    return 2 * math.pi * cfg.lambda_p * cfg.sigma_d_sq / ((a - 2) * cfg.r0 ** (a - 2))


def campbell_downlink_sum_mc(cfg: RadioConfig, n: int, rng: np.random.Generator,
                             window_radius: float = 2000.0) -> tuple[float, float]:
    """Monte Carlo of ``E sum_x |x - y0|^-a |f^x|^2`` with servers at least ``r0`` away."""
    if cfg.lambda_p == 0:
        return 0.0, 0.0
    vals = np.empty(n)
    for k in range(n):
        x = sample_parent_process(cfg.lambda_p, window_radius, cfg.r0, rng)
        gain = rng.exponential(cfg.sigma_d_sq, len(x))
        vals[k] = np.sum(np.hypot(x[:, 0], x[:, 1]) ** -cfg.alpha * gain)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def transmit_power_monte_carlo(cfg: RadioConfig, n: int,
                               rng: np.random.Generator) -> tuple[float, float]:
    """Mean ``|p|^2`` of a device under truncated inversion, with its stderr.

    Inactive devices contribute zero power, so the mean is the long-run
    average transmit power to compare with the uplink budget.
    """
    if n < 100:
        raise ValueError("n must be at least 100")
    y = np.hypot(*sample_device_offsets(n, cfg.r0, cfg.R, rng).T)
    p2 = np.abs(power_coefficient(y, draw_uplink_fading(rng, n), cfg.rho, cfg.alpha,
                                  cfg.th1)) ** 2
    return float(p2.mean()), float(p2.std(ddof=1) / math.sqrt(n))


def sample_active_counts(cfg: RadioConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """Number of devices of one cluster whose fading clears ``th1``, ``n`` draws."""
    gains = np.abs(draw_uplink_fading(rng, (n, cfg.M))) ** 2
    return np.sum(gains >= cfg.th1, axis=1)


def interference_constants(cfg: RadioConfig) -> InterferenceConstants:
    return InterferenceConstants(cfg.psi, cfg.beta)


def uplink_rx_power(n_active: int, rho: float, psi: float) -> float:
    """Expected per-entry received power ``rho |A| + psi`` at a server."""
    if n_active < 0:
        raise ValueError("n_active must be non-negative")
    return rho * n_active + psi


# ------------------------------------------------------------------ distortion


def _check(sigmas, n_active, downlink_gain):
    sigmas = np.asarray(sigmas, dtype=float).ravel()
    if n_active < 1:
        raise NoActiveDevicesError("no active devices in the aggregation")
    if len(sigmas) != n_active:
        raise ValueError(f"got {len(sigmas)} sigmas for {n_active} active devices")
    if downlink_gain <= 0:
        raise ValueError("downlink_gain must be positive")
    return sigmas


def _attenuation(beta, downlink_gain, ref_radius, alpha):
    return beta / (downlink_gain * ref_radius ** (-alpha))


def distortion_objective(theta: float, sigmas, n_active: int, psi_over_rho: float,
                         beta: float, downlink_gain: float, ref_radius: float,
                         alpha: float, C: int = 1) -> DistortionBreakdown:
    """Per-entry MSE of the aggregate estimate for a given normalizing factor.

    ``C`` scales the interference term; ``C = 1`` is the intra-cluster case.
    """
    sigmas = _check(sigmas, n_active, downlink_gain)
    b = _attenuation(beta, downlink_gain, ref_radius, alpha)
    q = C * psi_over_rho
    n2 = n_active**2
    up = (np.sum((theta - sigmas) ** 2) + theta**2 * q) / n2
    down = theta**2 * b * (n_active + q) / n2
    return DistortionBreakdown(float(up), float(down))


def distortion_derivative(theta, sigmas, n_active, psi_over_rho, beta, downlink_gain,
                          ref_radius, alpha, C=1) -> float:
    """Derivative of :func:`distortion_objective` (total) with respect to ``theta``."""
    sigmas = _check(sigmas, n_active, downlink_gain)
    b = _attenuation(beta, downlink_gain, ref_radius, alpha)
    q = C * psi_over_rho
    return float(2 * (np.sum(theta - sigmas) + theta * q + theta * b * (n_active + q))
                 / n_active**2)


def optimal_theta_intra(sigmas, n_active, psi_over_rho, beta, downlink_gain,
                        ref_radius, alpha) -> float:
    sigmas = _check(sigmas, n_active, downlink_gain)
    b = _attenuation(beta, downlink_gain, ref_radius, alpha)
    return float(np.sum(sigmas) / ((1 + b) * (n_active + psi_over_rho)))


def optimal_theta_inter(sigmas_all, n_active_total, C, psi_over_rho, beta,
                        downlink_gain, ref_radius, alpha) -> float:
    if C < 1:
        raise ValueError("C must be at least 1")
    return optimal_theta_intra(sigmas_all, n_active_total, C * psi_over_rho, beta,
                               downlink_gain, ref_radius, alpha)


def min_distortion_closed_form(sigmas, n_active, psi_over_rho, beta, downlink_gain,
                               ref_radius, alpha, C=1) -> float:
    """``sum s^2 / |A|^2 - (sum s)^2 / ((1 + b)|A|^2 (|A| + C psi/rho))``."""
    sigmas = _check(sigmas, n_active, downlink_gain)
    b = _attenuation(beta, downlink_gain, ref_radius, alpha)
    n2 = n_active**2
    return float(np.sum(sigmas**2) / n2
                 - np.sum(sigmas) ** 2 / ((1 + b) * n2 * (n_active + C * psi_over_rho)))


def min_distortion_intra(sigmas, n_active, psi_over_rho, beta, downlink_gain,
                         ref_radius, alpha) -> DistortionBreakdown:
    theta = optimal_theta_intra(sigmas, n_active, psi_over_rho, beta, downlink_gain,
                                ref_radius, alpha)
    return distortion_objective(theta, sigmas, n_active, psi_over_rho, beta,
                                downlink_gain, ref_radius, alpha)


def min_distortion_inter(sigmas_all, n_active_total, C, psi_over_rho, beta,
                         downlink_gain, ref_radius, alpha) -> DistortionBreakdown:
    theta = optimal_theta_inter(sigmas_all, n_active_total, C, psi_over_rho, beta,
                                downlink_gain, ref_radius, alpha)
    return distortion_objective(theta, sigmas_all, n_active_total, psi_over_rho, beta,
                                downlink_gain, ref_radius, alpha, C=C)


def iid_distortion_intra(sigma, n_active, psi, rho, beta, downlink_gain, ref_radius,
                         alpha) -> DistortionBreakdown:
    """Minimum distortion for equal spreads, split into uplink and downlink parts.

    The split attributes the ``(1 + b)`` shrinkage differently from
    :func:`min_distortion_intra`; only the totals coincide.
    """
    if n_active < 1:
        raise NoActiveDevicesError("no active devices in the aggregation")
    gain = downlink_gain * ref_radius ** (-alpha)
    s2 = sigma**2
    up = 0.0 if psi == 0 else s2 / (n_active + rho * n_active**2 / psi)
    down = s2 * beta / ((gain + beta) * (n_active + psi / rho))
    return DistortionBreakdown(float(up), float(down))

"""Radio layer: channel draws, payload normalization and truncated channel inversion.

All lengths are in meters and intensities in m^-2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import special

EI_CONSTANTS = ("paper", "corrected")


class ParameterError(ValueError):
    """Raised when a physical parameter violates its domain."""


class DegeneratePayloadError(ValueError):
    """Raised when a payload has zero spread and cannot be normalized."""


@dataclass(frozen=True)
class RadioConfig:
    """Physical parameters of the clustered network.

    Defaults reproduce the reference parameter table (lambda_p = 20 km^-2).

    ``ei_constant`` selects how the truncated inverse-fading expectation
    enters the interference power: ``"paper"`` keeps the published
    closed form, ``"corrected"`` uses the exact conditional expectation.
    The power scaling constant ``rho`` is the same under both settings.

    ``guard_radius`` is the minimum length of an interference link; shorter
    links are inhibited. It defaults to ``r0`` when left as ``None``.
    """

    alpha: float = 4.0
    p_uplink_max: float = 1.0
    p_downlink: float = 1.0
    sigma_d_sq: float = 10.0
    th1: float = 0.5
    r0: float = 4.0
    R: float = 30.0
    M: int = 15
    lambda_p: float = 2e-5
    ei_constant: str = "corrected"
    guard_radius: float | None = None
    _guard: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("alpha", "p_uplink_max", "p_downlink", "sigma_d_sq", "th1",
                     "r0", "R", "lambda_p"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
        if self.alpha <= 2:
            raise ParameterError(f"alpha must exceed 2, got {self.alpha}")
        if self.th1 <= 0:
            raise ParameterError(f"th1 must be positive, got {self.th1}")
        if self.sigma_d_sq <= 1:
            raise ParameterError(
                f"sigma_d_sq must exceed 1 (downlink stronger than uplink), got {self.sigma_d_sq}")
        if not 0 < self.r0 < self.R:
            raise ParameterError(f"need 0 < r0 < R, got r0={self.r0}, R={self.R}")
        if self.M < 1 or int(self.M) != self.M:
            raise ParameterError(f"M must be a positive integer, got {self.M}")
        if self.lambda_p < 0:
            raise ParameterError(f"lambda_p must be non-negative, got {self.lambda_p}")
        if self.p_uplink_max <= 0 or self.p_downlink <= 0:
            raise ParameterError("transmit powers must be positive")
        if self.ei_constant not in EI_CONSTANTS:
            raise ParameterError(
                f"ei_constant must be one of {EI_CONSTANTS}, got {self.ei_constant!r}")
        guard = self.r0 if self.guard_radius is None else float(self.guard_radius)
        if guard < 0:
            raise ParameterError(f"guard_radius must be non-negative, got {guard}")
        object.__setattr__(self, "_guard", guard)

    @property
    def guard(self) -> float:
        return self._guard

    def with_(self, **changes) -> "RadioConfig":
        return replace(self, **changes)

    @cached_property
    def rho(self) -> float:
        return compute_rho(self)

    @cached_property
    def beta(self) -> float:
        from .analysis import compute_beta

        return compute_beta(self)

    @cached_property
    def psi(self) -> float:
        from .analysis import compute_psi

        return compute_psi(self)

    @property
    def activity_prob(self) -> float:
        return math.exp(-self.th1)


def exp_integral(x: float) -> float:
    """Exponential integral ``int_x^inf exp(-t)/t dt`` for ``x > 0``.

    This is the ``E1`` function (the ``Ei`` of the power-control literature).
    """
    x = float(x)
    if not x > 0:
        raise ParameterError(f"exponential integral needs x > 0, got {x}")
    return float(special.exp1(x))


def compute_rho(cfg: RadioConfig) -> float:
    """Power-scaling constant that meets the average uplink power budget.

    ``rho = (2+a)(R^2-r0^2) P_u / (2 Ei(th1) (R^(a+2) - r0^(a+2)))``.
    """
    a, r0, R = cfg.alpha, cfg.r0, cfg.R
    num = (2 + a) * (R**2 - r0**2) * cfg.p_uplink_max
    den = 2 * exp_integral(cfg.th1) * (R ** (a + 2) - r0 ** (a + 2))
    return num / den


def draw_uplink_fading(rng: np.random.Generator, size=None) -> np.ndarray | complex:
    """Rayleigh uplink coefficient(s) with ``E|f|^2 = 1``."""
    f = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * math.sqrt(0.5)
    return complex(f) if size is None else f


def draw_downlink_fading(rng: np.random.Generator, sigma_d_sq: float,
                         size=None) -> np.ndarray | complex:
    """Rayleigh downlink coefficient(s) with mean gain ``sigma_d_sq``."""
    if sigma_d_sq <= 0:
        raise ParameterError(f"sigma_d_sq must be positive, got {sigma_d_sq}")
    return draw_uplink_fading(rng, size) * math.sqrt(sigma_d_sq)


def power_coefficient(offset_radius, uplink_fading, rho: float, alpha: float, th1: float):
    """Truncated channel-inversion coefficient ``sqrt(rho) / (y^(-a/2) f)``.

    Devices whose fading power falls below ``th1`` stay silent (coefficient 0).
    Works elementwise on arrays.
    """
    y = np.asarray(offset_radius, dtype=float)
    f = np.asarray(uplink_fading, dtype=complex)
    active = (np.abs(f) ** 2 >= th1) & (f != 0)
    safe_f = np.where(active, f, 1.0)
    p = np.where(active, math.sqrt(rho) * y ** (alpha / 2) / safe_f, 0.0)
    return complex(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class NormalizedPayload:
    """Zero-mean, unit-variance payload plus the side information to invert it."""

    entries: np.ndarray
    mean: float
    std: float


def normalize_payload(v) -> NormalizedPayload:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("payload must be a 1-D vector with at least 2 entries")
    mu = float(v.mean())
    sigma = float(np.sqrt(np.mean((v - mu) ** 2)))
    if sigma == 0.0 or not math.isfinite(sigma):
        raise DegeneratePayloadError("payload is constant; its spread is zero")
    return NormalizedPayload((v - mu) / sigma, mu, sigma)


def denormalize(p: NormalizedPayload) -> np.ndarray:
    return np.asarray(p.entries) * p.std + p.mean


def normalize_rows(v: np.ndarray):
    """Row-wise normalization of a stack of payloads.

    Returns ``(entries, means, stds)``; raises if any row is constant.
    """
    v = np.asarray(v, dtype=float)
    mu = v.mean(axis=-1)
    sigma = np.sqrt(np.mean((v - mu[..., None]) ** 2, axis=-1))
    if np.any(sigma == 0):
        raise DegeneratePayloadError("at least one payload is constant")
    return (v - mu[..., None]) / sigma[..., None], mu, sigma

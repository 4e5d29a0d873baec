"""Clustered network topology: PPP edge servers with annular device clusters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .radio import ParameterError, RadioConfig


class InsufficientDensityError(RuntimeError):
    """Raised when the parent process yields fewer clusters than requested."""


def sample_parent_process(intensity: float, window_radius: float,
                          exclusion_radius: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP on the annulus ``exclusion_radius <= |x| <= window_radius``.

    Returns an ``(N, 2)`` array of points in meters.
    """
    if not math.isfinite(intensity) or intensity < 0:
        raise ParameterError(f"intensity must be finite and non-negative, got {intensity}")
    if not 0 <= exclusion_radius < window_radius:
        raise ParameterError("need 0 <= exclusion_radius < window_radius")
    area = math.pi * (window_radius**2 - exclusion_radius**2)
    n = rng.poisson(intensity * area)
    # inverse CDF of the radius on an annulus
    r = np.sqrt(rng.uniform(exclusion_radius**2, window_radius**2, n))
    phi = rng.uniform(0.0, 2 * math.pi, n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def sample_device_offsets(M: int, r0: float, R: float, rng: np.random.Generator) -> np.ndarray:
    """``M`` offsets uniform on the ring ``r0 <= |y| <= R`` (density ``2y/(R^2-r0^2)``)."""
    if not 0 < r0 < R:
        raise ParameterError(f"need 0 < r0 < R, got r0={r0}, R={R}")
    if M < 1:
        raise ParameterError(f"M must be at least 1, got {M}")
    r = np.sqrt(rng.uniform(r0**2, R**2, M))
    phi = rng.uniform(0.0, 2 * math.pi, M)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


@dataclass
class ClusterLayout:
    center: np.ndarray
    offsets: np.ndarray

    @property
    def positions(self) -> np.ndarray:
        return self.center[None, :] + self.offsets

    @property
    def radii(self) -> np.ndarray:
        return np.hypot(self.offsets[:, 0], self.offsets[:, 1])


@dataclass
class NetworkTopology:
    """Reference cluster at the origin, collaborators, and interfering clusters.

    Cluster index 0 is the reference, ``1..C-1`` the collaborators, and the
    rest interferers; :meth:`clusters` returns them in that order.
    """

    reference: ClusterLayout
    collaborators: list[ClusterLayout] = field(default_factory=list)
    interferers: list[ClusterLayout] = field(default_factory=list)
    window_radius: float = 2000.0
    exclusion_radius: float = 0.0

    @property
    def C(self) -> int:
        return 1 + len(self.collaborators)

    def clusters(self) -> list[ClusterLayout]:
        return [self.reference, *self.collaborators, *self.interferers]

    @property
    def n_clusters(self) -> int:
        return 1 + len(self.collaborators) + len(self.interferers)

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.clusters()]).reshape(-1, 2)

    @property
    def offsets(self) -> np.ndarray:
        """``(n_clusters, M, 2)`` device offsets relative to their centers."""
        return np.stack([c.offsets for c in self.clusters()])

    @property
    def device_positions(self) -> np.ndarray:
        return self.centers[:, None, :] + self.offsets


def build_topology(cfg: RadioConfig, C: int, window_radius: float,
                   rng: np.random.Generator) -> NetworkTopology:
    """Sample a network with the reference cluster at the origin.

    Parents are drawn outside a ball of radius ``2 r0`` around the origin;
    the ``C - 1`` nearest become collaborators.
    """
    if C < 1:
        raise ParameterError(f"C must be at least 1, got {C}")
    exclusion = 2 * cfg.r0
    parents = sample_parent_process(cfg.lambda_p, window_radius, exclusion, rng)
    if len(parents) < C - 1:
        raise InsufficientDensityError(
            f"only {len(parents)} edge servers sampled but C-1={C - 1} collaborators "
            f"requested; raise lambda_p (now {cfg.lambda_p:g} m^-2) or window_radius "
            f"(now {window_radius:g} m)")
    order = np.argsort(np.hypot(parents[:, 0], parents[:, 1]), kind="stable")
    parents = parents[order]
    reference = ClusterLayout(np.zeros(2), sample_device_offsets(cfg.M, cfg.r0, cfg.R, rng))
    clusters = [ClusterLayout(p, sample_device_offsets(cfg.M, cfg.r0, cfg.R, rng))
                for p in parents]
    return NetworkTopology(reference, clusters[:C - 1], clusters[C - 1:],
                           window_radius, exclusion)


def interference_tail_bound(cfg: RadioConfig, window_radius: float) -> float:
    """Upper bound on the mean uplink interference lost by truncating the window.

    Uses ``|x + y| >= |x| - R`` for servers beyond the window, so the omitted
    mass is at most ``2 pi lambda M rho E{|y|^a} Ei(th1) int_W^inf x (x-R)^-a dx``.
    """
    from .radio import exp_integral

    a, r0, R = cfg.alpha, cfg.r0, cfg.R
    if window_radius <= 2 * R:
        return math.inf
    mean_y_alpha = 2 * (R ** (a + 2) - r0 ** (a + 2)) / ((a + 2) * (R**2 - r0**2))
    # x (x-R)^-a <= 2^a x^(1-a) for x >= 2R
    tail = 2**a * window_radius ** (2 - a) / (a - 2)
    return (2 * math.pi * cfg.lambda_p * cfg.M * cfg.rho * mean_y_alpha
            * exp_integral(cfg.th1) * tail)

"""Signal-level over-the-air uplink superposition, analog downlink and estimation.

Devices are indexed cluster-major: device ``k`` of the flattened arrays belongs
to cluster ``k // M``. Servers coincide with cluster centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .geometry import InsufficientDensityError, NetworkTopology, build_topology
from .radio import RadioConfig, draw_downlink_fading, draw_uplink_fading, power_coefficient


@dataclass
class ChannelRealization:
    """Block-fading draw for one uplink + downlink exchange.

    ``uplink[s, k]`` is the coefficient from device ``k`` to server ``s``;
    ``downlink[s, r]`` from server ``s`` to receiver ``r``.
    """

    uplink: np.ndarray
    downlink: np.ndarray
    receivers: list[tuple[int, int]]

    def reference_downlink_gain(self, r: int = 0) -> float:
        c, _ = self.receivers[r]
        return float(abs(self.downlink[c, r]) ** 2)


@dataclass
class UplinkSnapshot:
    rx: np.ndarray
    active: np.ndarray

    @property
    def n_active(self) -> np.ndarray:
        return self.active.sum(axis=1)


@dataclass
class DownlinkRx:
    """Signal at one receiver, with the part sent by its own server kept apart."""

    total: np.ndarray
    own: np.ndarray
    norm: float


@dataclass
class EstimateResult:
    estimate: np.ndarray
    uplink_error: np.ndarray
    downlink_error: np.ndarray
    theta_used: float
    complex_estimate: np.ndarray = field(repr=False, default=None)


def draw_channels(topology: NetworkTopology, cfg: RadioConfig, rng: np.random.Generator,
                  receivers=((0, 0),), reference_gain: float | None = None) -> ChannelRealization:
    """Draw all uplink and downlink coefficients for one exchange.

    ``reference_gain`` pins ``|f|^2`` of each receiver's own-server downlink
    (with a uniform phase), for analyses conditioned on it.
    """
    S = topology.n_clusters
    K = S * cfg.M
    receivers = list(receivers)
    up = draw_uplink_fading(rng, (S, K))
    down = draw_downlink_fading(rng, cfg.sigma_d_sq, (S, len(receivers)))
    if reference_gain is not None:
        for r, (c, _) in enumerate(receivers):
            phase = rng.uniform(0, 2 * math.pi)
            down[c, r] = math.sqrt(reference_gain) * np.exp(1j * phase)
    return ChannelRealization(up, down, receivers)


def _guarded_sqrt_gain(d, alpha, guard):
    return np.where(d >= guard, np.maximum(d, 1e-300) ** (-alpha / 2), 0.0)


def simulate_uplink(topology: NetworkTopology, payloads: np.ndarray,
                    channels: ChannelRealization, cfg: RadioConfig) -> UplinkSnapshot:
    """Superposed uplink signal at every server.

    ``payloads`` has shape ``(n_clusters, M, d)`` and holds normalized entries.
    Own-cluster devices arrive with coefficient exactly ``sqrt(rho)`` (channel
    inversion); foreign devices arrive through their path loss and fading.
    Links shorter than the guard radius are inhibited.
    """
    S, M = topology.n_clusters, cfg.M
    payloads = np.asarray(payloads)
    if payloads.ndim != 3 or payloads.shape[:2] != (S, M):
        raise ValueError(f"payloads must have shape ({S}, {M}, d), got {payloads.shape}")
    d = payloads.shape[2]
    offsets = topology.offsets.reshape(S * M, 2)
    radii = np.hypot(offsets[:, 0], offsets[:, 1])
    cluster_of = np.repeat(np.arange(S), M)
    f_own = channels.uplink[cluster_of, np.arange(S * M)]
    p = power_coefficient(radii, f_own, cfg.rho, cfg.alpha, cfg.th1)
    active = (p != 0)

    flat = payloads.reshape(S * M, d)
    pos = topology.device_positions.reshape(S * M, 2)
    centers = topology.centers
    dist = np.hypot(pos[None, :, 0] - centers[:, None, 0], pos[None, :, 1] - centers[:, None, 1])
    H = _guarded_sqrt_gain(dist, cfg.alpha, cfg.guard) * channels.uplink * p[None, :]
    H[cluster_of, np.arange(S * M)] = 0.0
    rx = H @ flat
    own = (active.reshape(S, M)[:, :, None] * payloads).sum(axis=1)
    rx = rx + math.sqrt(cfg.rho) * own
    return UplinkSnapshot(rx, active.reshape(S, M))


def _downlink(snapshot, topology, channels, cfg, receiver, groups, normalization):
    c_rx, dev = channels.receivers[receiver]
    S = topology.n_clusters
    d = snapshot.rx.shape[1]
    psi = cfg.psi
    n_act = snapshot.n_active
    if normalization == "analytic":
        power = cfg.rho * n_act + psi
    elif normalization == "empirical":
        power = np.sum(np.abs(snapshot.rx) ** 2, axis=1) / d
    else:
        raise ValueError(f"unknown normalization {normalization!r}")

    signals = snapshot.rx.copy()
    powers = power.astype(float).copy()
    for group in groups:
        idx = np.asarray(sorted(group))
        signals[idx] = snapshot.rx[idx].sum(axis=0)
        powers[idx] = power[idx].sum()
    with np.errstate(divide="ignore"):
        norms = np.where(powers > 0, np.sqrt(cfg.p_downlink / np.where(powers > 0, powers, 1)), 0.0)

    rx_pos = topology.device_positions[c_rx, dev]
    dist = np.hypot(topology.centers[:, 0] - rx_pos[0], topology.centers[:, 1] - rx_pos[1])
    link = _guarded_sqrt_gain(dist, cfg.alpha, cfg.guard)
    y0 = float(np.hypot(*topology.offsets[c_rx, dev]))
    link[c_rx] = y0 ** (-cfg.alpha / 2)
    coef = link * channels.downlink[:, receiver] * norms
    own = coef[c_rx] * signals[c_rx]
    mask = np.ones(S, bool)
    mask[c_rx] = False
    total = own + coef[mask] @ signals[mask]
    return DownlinkRx(total, own, float(norms[c_rx]))


def simulate_intra_downlink(snapshot: UplinkSnapshot, topology: NetworkTopology,
                            channels: ChannelRealization, cfg: RadioConfig,
                            receiver: int = 0, normalization: str = "analytic") -> DownlinkRx:
    """Every server rebroadcasts its own normalized uplink signal."""
    return _downlink(snapshot, topology, channels, cfg, receiver, [], normalization)


def simulate_inter_downlink(snapshot: UplinkSnapshot, topology: NetworkTopology,
                            channels: ChannelRealization, cfg: RadioConfig,
                            receiver: int = 0, normalization: str = "analytic",
                            collaboration_sets=None) -> DownlinkRx:
    """Collaborating servers rebroadcast the normalized sum of their uplink signals.

    By default the first ``C`` clusters form one collaboration set and every
    interfering server is a singleton set.
    """
    if collaboration_sets is None:
        collaboration_sets = [range(topology.C)]
    return _downlink(snapshot, topology, channels, cfg, receiver,
                     [set(s) for s in collaboration_sets], normalization)


def _receive_scale(v_d, downlink_coef, ref_radius, n_active, cfg):
    if n_active < 1:
        raise analysis.NoActiveDevicesError("no active devices in the aggregation")
    return (math.sqrt(cfg.rho) * v_d.norm * n_active * downlink_coef
            * ref_radius ** (-cfg.alpha / 2))


def estimate_aggregate(v_d: DownlinkRx, theta: float, means, downlink_coef: complex,
                       ref_radius: float, n_active: int, cfg: RadioConfig,
                       ideal=None) -> EstimateResult:
    """Denormalize the downlink signal into an estimate of the active-device average.

    ``means`` holds the payload means of the active devices (error-free side
    information). When ``ideal`` is given, the error is split into the part
    carried by the own server's broadcast (uplink error) and the rest
    (downlink error).
    """
    scale = _receive_scale(v_d, downlink_coef, ref_radius, n_active, cfg)
    offset = np.sum(means) / n_active
    est = theta * v_d.total / scale + offset
    if ideal is None:
        zero = np.zeros_like(est)
        return EstimateResult(est.real, zero, zero, theta, est)
    ideal = np.asarray(ideal, dtype=float)
    up = theta * v_d.own / scale + offset - ideal
    down = theta * (v_d.total - v_d.own) / scale
    return EstimateResult(est.real, up, down, theta, est)


def estimate_intra(v_d, theta, means, downlink_coef, ref_radius, n_active, cfg, ideal=None):
    return estimate_aggregate(v_d, theta, means, downlink_coef, ref_radius, n_active, cfg, ideal)


def estimate_inter(v_d, theta, means, downlink_coef, ref_radius, n_active_total, C, cfg,
                   ideal=None):
    # the collaboration-set normalization already lives in v_d.norm; C only matters for theta
    return estimate_aggregate(v_d, theta, means, downlink_coef, ref_radius, n_active_total,
                              cfg, ideal)


# ------------------------------------------------------------------ scenarios


@dataclass
class Scenario:
    """Declarative Monte Carlo scenario for the aggregation error.

    ``theta_policy`` is ``"optimal"`` or a fixed float. ``sigma_profile`` is
    ``"iid"`` (all spreads 1) or ``"hetero"`` (log-normal spreads per device).
    ``ref_radius`` / ``ref_gain`` condition the reference receiver; ``None``
    leaves them random.
    """

    cfg: RadioConfig
    C: int = 1
    mode: str = "intra"
    theta_policy: str | float = "optimal"
    n_trials: int = 2000
    d: int = 16
    sigma_profile: str = "iid"
    window_radius: float = 2000.0
    ref_radius: float | None = None
    ref_gain: float | None = None
    normalization: str = "analytic"

    def __post_init__(self):
        if self.mode not in ("intra", "inter"):
            raise ValueError(f"mode must be 'intra' or 'inter', got {self.mode!r}")
        if self.sigma_profile not in ("iid", "hetero"):
            raise ValueError(f"unknown sigma_profile {self.sigma_profile!r}")


@dataclass
class TrialRecord:
    """One realization, kept in a form that re-evaluates any theta cheaply.

    The complex error at normalizing factor ``t`` is ``t * direction + offset``.
    """

    direction: np.ndarray
    offset: np.ndarray
    n_active: int
    sigmas: np.ndarray
    downlink_gain: float
    ref_radius: float
    theta_star: float
    theta: float
    uplink_error: np.ndarray
    downlink_error: np.ndarray

    def error(self, theta=None) -> np.ndarray:
        t = self.theta if theta is None else theta
        return t * self.direction + self.offset

    def mse(self, theta=None) -> float:
        return float(np.mean(np.abs(self.error(theta)) ** 2))


def run_trial(sc: Scenario, rng: np.random.Generator) -> TrialRecord | None:
    """Simulate one realization; returns ``None`` when no device is active."""
    cfg = sc.cfg
    topo = build_topology(cfg, sc.C, sc.window_radius, rng)
    if sc.ref_radius is not None:
        phi = rng.uniform(0, 2 * math.pi)
        topo.reference.offsets[0] = sc.ref_radius * np.array([math.cos(phi), math.sin(phi)])
    S, M, d = topo.n_clusters, cfg.M, sc.d
    raw = rng.standard_normal((S, M, d))
    entries = (raw - raw.mean(axis=2, keepdims=True))
    entries /= np.sqrt(np.mean(entries**2, axis=2, keepdims=True))
    n_task = sc.C if sc.mode == "inter" else 1
    if sc.sigma_profile == "iid":
        sig = np.ones((n_task, M))
    else:
        sig = np.exp(rng.normal(0.0, 0.5, (n_task, M)))
    mu = rng.normal(0.0, 1.0, (n_task, M))

    channels = draw_channels(topo, cfg, rng, receivers=[(0, 0)], reference_gain=sc.ref_gain)
    snap = simulate_uplink(topo, entries, channels, cfg)
    act = snap.active[:n_task]
    n = int(act.sum())
    if n == 0:
        return None
    payload = mu[..., None] + sig[..., None] * entries[:n_task]
    ideal = payload[act].mean(axis=0)
    sigmas = sig[act]
    means = mu[act]

    gain = channels.reference_downlink_gain(0)
    y0 = float(np.hypot(*topo.reference.offsets[0]))
    q = cfg.psi / cfg.rho
    if sc.mode == "intra":
        v_d = simulate_intra_downlink(snap, topo, channels, cfg, 0, sc.normalization)
        theta_star = analysis.optimal_theta_intra(sigmas, n, q, cfg.beta, gain, y0, cfg.alpha)
    else:
        v_d = simulate_inter_downlink(snap, topo, channels, cfg, 0, sc.normalization)
        theta_star = analysis.optimal_theta_inter(sigmas, n, sc.C, q, cfg.beta, gain, y0,
                                                  cfg.alpha)
    theta = theta_star if sc.theta_policy == "optimal" else float(sc.theta_policy)
    res = estimate_aggregate(v_d, theta, means, channels.downlink[0, 0], y0, n, cfg, ideal)
    direction = v_d.total / _receive_scale(v_d, channels.downlink[0, 0], y0, n, cfg)
    offset = np.sum(means) / n - ideal
    return TrialRecord(direction, offset.astype(complex), n, sigmas, gain, y0, theta_star,
                       theta, res.uplink_error, res.downlink_error)


@dataclass
class MseEstimate:
    mse: float
    stderr: float
    skipped: int
    analytic: float
    paired_stderr: float
    n: int


def analytic_for(sc: Scenario, rec: TrialRecord, theta=None) -> analysis.DistortionBreakdown:
    cfg = sc.cfg
    t = rec.theta if theta is None else theta
    return analysis.distortion_objective(
        t, rec.sigmas, rec.n_active, cfg.psi / cfg.rho, cfg.beta, rec.downlink_gain,
        rec.ref_radius, cfg.alpha, C=sc.C if sc.mode == "inter" else 1)


def run_trials(sc: Scenario, rng: np.random.Generator, n_trials: int | None = None):
    """Run the scenario; returns ``(records, skipped)``.

    A trial is skipped when no device is active or when the sampled window
    holds fewer than ``C - 1`` other edge servers. If every trial fails for
    the second reason the density error is raised instead.
    """
    n_trials = sc.n_trials if n_trials is None else n_trials
    records, skipped = [], 0
    density_error = None
    for _ in range(n_trials):
        try:
            rec = run_trial(sc, rng)
        except InsufficientDensityError as exc:
            density_error, rec = exc, None
        if rec is None:
            skipped += 1
        else:
            records.append(rec)
    if not records and density_error is not None:
        raise density_error
    return records, skipped


def empirical_mse(sc: Scenario, n_trials: int, rng: np.random.Generator) -> MseEstimate:
    """Monte Carlo per-entry MSE of the estimate against the ideal average.

    Trials with no active device are skipped and counted. ``paired_stderr`` is
    the standard error of the per-trial difference to the analytic value.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be at least 100")
    records, skipped = run_trials(sc, rng, n_trials)
    emp = np.array([r.mse() for r in records])
    ana = np.array([analytic_for(sc, r).total for r in records])
    k = len(emp)
    return MseEstimate(float(emp.mean()), float(emp.std(ddof=1) / math.sqrt(k)), skipped,
                       float(ana.mean()), float((emp - ana).std(ddof=1) / math.sqrt(k)), k)

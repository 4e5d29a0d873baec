"""MultiAirFed and HierFed training loops on a synthetic classification task.

The model is a linear softmax classifier whose parameters are flattened into
one vector ``[W.ravel(), b]`` with ``W`` of shape ``(K, p)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from . import analysis, ota
from .geometry import NetworkTopology, build_topology
from .radio import RadioConfig, normalize_rows

log = logging.getLogger(__name__)

CHANNEL_MODES = ("ideal", "ota", "orthogonal")


@dataclass
class DeviceDataset:
    features: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass
class Federation:
    """Per-cluster device datasets (``clusters[c][m]``) and a shared test set."""

    clusters: list[list[DeviceDataset]]
    test: DeviceDataset
    n_classes: int

    @property
    def feature_dim(self) -> int:
        return self.test.features.shape[1]

    @property
    def model_size(self) -> int:
        return self.n_classes * (self.feature_dim + 1)


@dataclass
class LearningSchedule:
    T: int = 40
    tau: int = 6
    gamma: int = 2
    mu: float = 0.01
    B: int = 60

    def __post_init__(self):
        for name in ("T", "tau", "B"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not self.mu > 0:
            raise ValueError("mu must be positive")


@dataclass
class TrainResult:
    accuracy_per_round: list[float] = field(default_factory=list)
    distortion_log: list[dict] = field(default_factory=list)
    skipped_aggregations: int = 0
    skip_rounds: list[int] = field(default_factory=list)
    final_models: np.ndarray | None = field(default=None, repr=False)

    def skipped_in_round(self, t: int) -> int:
        return self.skip_rounds.count(t)

    def mean_mse(self, kind: str, which: str = "empirical") -> float:
        vals = [r[which] for r in self.distortion_log if r["kind"] == kind]
        return float(np.mean(vals)) if vals else float("nan")


# ------------------------------------------------------------------ data


def make_synthetic_federation(n_classes: int, feature_dim: int, n_clusters: int, M: int,
                              iid: bool, samples_per_device_range: tuple[int, int],
                              rng: np.random.Generator, class_sep: float = 1.0,
                              n_test_per_class: int = 100) -> Federation:
    """Gaussian-mixture classification data spread over ``n_clusters * M`` devices.

    Each class has its own mean (entries ``N(0, class_sep^2)``) and unit
    covariance. In non-i.i.d. mode every device sees exactly two classes.
    Federations drawn from equal seeds share the class means, the test set
    and the leading clusters, whatever ``n_clusters`` is.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    lo, hi = samples_per_device_range
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid samples_per_device_range {samples_per_device_range}")
    means = rng.normal(0.0, class_sep, (n_classes, feature_dim))

    def draw(labels):
        return DeviceDataset(means[labels] + rng.standard_normal((len(labels), feature_dim)),
                             labels)

    # the test set is drawn before the devices so that federations built from
    # the same seed with different cluster counts share it (paired comparisons)
    test = draw(np.repeat(np.arange(n_classes), n_test_per_class))
    clusters = []
    for _ in range(n_clusters):
        devices = []
        for _ in range(M):
            n = int(rng.integers(lo, hi + 1))
            if iid:
                labels = rng.integers(0, n_classes, n)
            else:
                pair = rng.choice(n_classes, 2, replace=False)
                if n < 2:
                    raise ValueError("non-i.i.d. devices need at least two samples")
                # both classes present by construction
                which = rng.permutation(np.concatenate([[0, 1], rng.integers(0, 2, n - 2)]))
                labels = pair[which]
            devices.append(draw(labels))
        clusters.append(devices)
    return Federation(clusters, test, n_classes)


# ------------------------------------------------------------------ model


def _unpack(params, n_classes, p):
    W = params[: n_classes * p].reshape(n_classes, p)
    return W, params[n_classes * p:]


def loss(params, features, labels, n_classes) -> float:
    W, b = _unpack(params, n_classes, features.shape[1])
    logp = log_softmax(features @ W.T + b, axis=1)
    return float(-logp[np.arange(len(labels)), labels].mean())


def full_gradient(params, features, labels, n_classes) -> np.ndarray:
    """Gradient of the mean cross-entropy of the softmax classifier."""
    W, b = _unpack(params, n_classes, features.shape[1])
    probs = softmax(features @ W.T + b, axis=1)
    probs[np.arange(len(labels)), labels] -= 1.0
    probs /= len(labels)
    return np.concatenate([(probs.T @ features).ravel(), probs.sum(axis=0)])


def local_gradient(params, dataset: DeviceDataset, B: int, rng: np.random.Generator,
                   n_classes: int) -> np.ndarray:
    """Mini-batch gradient on ``B`` samples drawn without replacement."""
    if B > dataset.n:
        raise ValueError(f"mini-batch size {B} exceeds the {dataset.n} local samples")
    idx = rng.choice(dataset.n, B, replace=False)
    return full_gradient(params, dataset.features[idx], dataset.labels[idx], n_classes)


def intra_step(params, aggregated_gradient, mu: float) -> np.ndarray:
    return params - mu * aggregated_gradient


def local_multistep(params, dataset, gamma, mu, B, rng, n_classes) -> np.ndarray:
    for _ in range(gamma):
        params = intra_step(params, local_gradient(params, dataset, B, rng, n_classes), mu)
    return params


def ideal_intra_aggregate(gradients) -> np.ndarray:
    return np.mean(np.asarray(gradients, dtype=float), axis=0)


def ideal_inter_aggregate(models, counts) -> np.ndarray:
    """Active-count weighted mean of per-cluster average models."""
    models = np.asarray(models, dtype=float)
    counts = np.asarray(counts, dtype=float)
    return counts @ models / counts.sum()


def evaluate_accuracy(params, test: DeviceDataset, n_classes: int) -> float:
    W, b = _unpack(params, n_classes, test.features.shape[1])
    pred = np.argmax(test.features @ W.T + b, axis=1)
    return float(np.mean(pred == test.labels))


def init_params(d: int, rng: np.random.Generator, scale: float = 0.01) -> np.ndarray:
    return rng.normal(0.0, scale, d)


def make_streams(seed: int, n_devices: int):
    """Independent RNG streams: one per device, then channel and init streams."""
    children = np.random.SeedSequence(seed).spawn(n_devices + 2)
    gens = [np.random.default_rng(s) for s in children]
    return gens[:n_devices], gens[n_devices], gens[n_devices + 1]


# ------------------------------------------------------------------ aggregation


class _Aggregator:
    """Turns per-device payloads into per-cluster recovered averages.

    ``aggregate`` returns a list with one entry per collaborating cluster:
    the recovered average, or ``None`` when that cluster had no active device.
    """

    def __init__(self, mode, cfg: RadioConfig, topology: NetworkTopology | None,
                 rng: np.random.Generator, normalization: str, result: TrainResult):
        if mode not in CHANNEL_MODES:
            raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}, got {mode!r}")
        self.mode, self.cfg, self.topology = mode, cfg, topology
        self.rng, self.normalization, self.result = rng, normalization, result
        self.t = 0

    def _skip(self):
        self.result.skipped_aggregations += 1
        self.result.skip_rounds.append(self.t)

    def _activity(self, shape):
        f = (self.rng.standard_normal(shape) + 1j * self.rng.standard_normal(shape)) / math.sqrt(2)
        return np.abs(f) ** 2 >= self.cfg.th1

    def aggregate(self, payloads: np.ndarray, kind: str, scope: str):
        """``payloads`` is ``(C, M, d)``; ``scope`` is ``"intra"`` or ``"inter"``."""
        C, M, _ = payloads.shape
        if self.mode == "ideal":
            active = np.ones((C, M), bool)
        elif self.mode == "orthogonal":
            active = self._activity((C, M))
        else:
            return self._ota(payloads, kind, scope)
        return self._exact(payloads, active, scope)

    def _exact(self, payloads, active, scope):
        C = payloads.shape[0]
        if scope == "intra":
            out = []
            for c in range(C):
                if active[c].any():
                    out.append(payloads[c][active[c]].mean(axis=0))
                else:
                    self._skip()
                    out.append(None)
            return out
        if not active.any():
            self._skip()
            return [None] * C
        counts = active.sum(axis=1)
        cluster_means = [payloads[c][active[c]].mean(axis=0) if counts[c] else payloads[c, 0]
                         for c in range(C)]
        w = ideal_inter_aggregate(cluster_means, counts)
        return [w] * C

    def _ota(self, payloads, kind, scope):
        cfg, topo = self.cfg, self.topology
        C, M, d = payloads.shape
        S = topo.n_clusters
        entries = np.empty((S, M, d))
        entries[:C], mus, sigmas = normalize_rows(payloads)
        # interfering clusters carry unrelated unit-power payloads
        if S > C:
            raw = self.rng.standard_normal((S - C, M, d))
            entries[C:] = normalize_rows(raw)[0]
        receivers = [(c, 0) for c in range(C)]
        channels = ota.draw_channels(topo, cfg, self.rng, receivers)
        snap = ota.simulate_uplink(topo, entries, channels, cfg)
        q = cfg.psi / cfg.rho
        out = []
        for c in range(C):
            if scope == "intra":
                act = snap.active[c]
                members = [(c, m) for m in range(M) if act[m]]
            else:
                members = [(k, m) for k in range(C) for m in range(M) if snap.active[k, m]]
            n = len(members)
            if n == 0:
                self._skip()
                out.append(None)
                continue
            rows, cols = zip(*members)
            sig, mu = sigmas[rows, cols], mus[rows, cols]
            gain = channels.reference_downlink_gain(c)
            y0 = float(np.hypot(*topo.offsets[c, 0]))
            if scope == "intra":
                v_d = ota.simulate_intra_downlink(snap, topo, channels, cfg, c,
                                                  self.normalization)
                theta = analysis.optimal_theta_intra(sig, n, q, cfg.beta, gain, y0, cfg.alpha)
                n_coll = 1
            else:
                v_d = ota.simulate_inter_downlink(snap, topo, channels, cfg, c,
                                                  self.normalization)
                theta = analysis.optimal_theta_inter(sig, n, C, q, cfg.beta, gain, y0,
                                                     cfg.alpha)
                n_coll = C
            ideal = payloads[rows, cols].mean(axis=0)
            res = ota.estimate_aggregate(v_d, theta, mu, channels.downlink[c, c], y0, n,
                                         cfg, ideal)
            empirical = float(np.mean(np.abs(res.complex_estimate - ideal) ** 2))
            predicted = analysis.distortion_objective(theta, sig, n, q, cfg.beta, gain, y0,
                                                      cfg.alpha, C=n_coll).total
            self.result.distortion_log.append(
                {"round": self.t, "kind": kind, "scope": scope, "cluster": c,
                 "analytic": predicted, "empirical": empirical, "n_active": n})
            out.append(res.estimate)
        return out


def _setup(federation, channel_mode, cfg, seed, window_radius, normalization):
    C = len(federation.clusters)
    M = len(federation.clusters[0])
    if channel_mode not in CHANNEL_MODES:
        raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}, got {channel_mode!r}")
    if channel_mode != "ideal" and M != cfg.M:
        raise ValueError(f"federation has {M} devices per cluster but cfg.M={cfg.M}")
    device_rngs, channel_rng, init_rng = make_streams(seed, C * M)
    topology = None
    if channel_mode == "ota":
        topology = build_topology(cfg, C, window_radius, channel_rng)
    result = TrainResult()
    agg = _Aggregator(channel_mode, cfg, topology, channel_rng, normalization, result)
    w0 = init_params(federation.model_size, init_rng)
    return C, M, device_rngs, agg, w0, result


def _accuracy(W, federation) -> float:
    C, M, _ = W.shape
    return float(np.mean([evaluate_accuracy(W[c, m], federation.test, federation.n_classes)
                          for c in range(C) for m in range(M)]))


def _apply(W, recovered, update=None):
    """Write each cluster's recovered vector into its devices; ``None`` freezes them."""
    for c, vec in enumerate(recovered):
        if vec is None:
            continue
        W[c] = vec[None, :] if update is None else update(W[c], vec)


def run_multiairfed(federation: Federation, schedule: LearningSchedule,
                    channel_mode: str = "ideal", cfg: RadioConfig | None = None,
                    seed: int = 0, window_radius: float = 500.0,
                    normalization: str = "analytic") -> TrainResult:
    """Intra-cluster gradient aggregation with inter-cluster model averaging.

    Each global round runs ``tau`` gradient-aggregation iterations, then
    ``gamma`` local steps, then model aggregation across the collaborating
    clusters. Every device of a cluster applies that cluster's recovered
    gradient to its own parameters. All devices compute every iteration; the
    fading threshold only gates transmission. A cluster with no active device
    keeps its devices' parameters unchanged for that aggregation.
    """
    cfg = cfg or RadioConfig()
    C, M, rngs, agg, w0, result = _setup(federation, channel_mode, cfg, seed,
                                         window_radius, normalization)
    K, data, s = federation.n_classes, federation.clusters, schedule
    W = np.tile(w0, (C, M, 1))
    for t in range(s.T):
        agg.t = t
        for _ in range(s.tau):
            grads = np.stack([
                np.stack([local_gradient(W[c, m], data[c][m], s.B, rngs[c * M + m], K)
                          for m in range(M)])
                for c in range(C)])
            recovered = agg.aggregate(grads, "gradient", "intra")
            _apply(W, recovered, lambda w, g: intra_step(w, g[None, :], s.mu))
        for c in range(C):
            for m in range(M):
                W[c, m] = local_multistep(W[c, m], data[c][m], s.gamma, s.mu, s.B,
                                          rngs[c * M + m], K)
        _apply(W, agg.aggregate(W.copy(), "model", "inter"))
        result.accuracy_per_round.append(_accuracy(W, federation))
    result.final_models = W
    return result


def run_hierfed(federation: Federation, schedule: LearningSchedule,
                channel_mode: str = "ideal", cfg: RadioConfig | None = None,
                seed: int = 0, window_radius: float = 500.0,
                normalization: str = "analytic") -> TrainResult:
    """Conventional hierarchical FL: devices always upload model parameters.

    Each intra iteration runs ``gamma`` local steps per device followed by an
    intra-cluster model aggregation; every ``tau`` iterations the models are
    averaged across the collaboration set.
    """
    cfg = cfg or RadioConfig()
    C, M, rngs, agg, w0, result = _setup(federation, channel_mode, cfg, seed,
                                         window_radius, normalization)
    K, data, s = federation.n_classes, federation.clusters, schedule
    W = np.tile(w0, (C, M, 1))
    for t in range(s.T):
        agg.t = t
        for _ in range(s.tau):
            for c in range(C):
                for m in range(M):
                    W[c, m] = local_multistep(W[c, m], data[c][m], s.gamma, s.mu, s.B,
                                              rngs[c * M + m], K)
            _apply(W, agg.aggregate(W.copy(), "model", "intra"))
        _apply(W, agg.aggregate(W.copy(), "model", "inter"))
        result.accuracy_per_round.append(_accuracy(W, federation))
    result.final_models = W
    return result

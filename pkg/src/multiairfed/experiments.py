"""Experiment orchestration: oracle validation suite, distortion sweeps, training runs.

Every function here is deterministic given the configuration's seed, and the
CSV writers format numbers with a fixed precision so identical inputs yield
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special, stats

from . import analysis, ota
from .config import ExperimentConfig
from .geometry import InsufficientDensityError
from .learning import TrainResult, make_synthetic_federation, run_hierfed, run_multiairfed

log = logging.getLogger(__name__)

VALIDATION_COLUMNS = ("quantity", "analytic", "mc_estimate", "mc_stderr", "n", "pass")
VALIDATION_UNITS = "analytic/mc_estimate/mc_stderr in the unit of each quantity " \
                   "(psi: W; beta, ratios, theta, distortion, errors: dimensionless); n: samples"
SWEEP_COLUMNS = ("sweep_value", "analytic_total", "analytic_uplink", "analytic_downlink",
                 "empirical", "stderr", "theta_policy")
SWEEP_UNITS = "sweep_value: unit of the swept key (lambda_p_km2 in km^-2, th1 and others " \
              "dimensionless); distortions: per-entry MSE (dimensionless)"
TRAIN_COLUMNS = ("round", "accuracy", "mean_intra_mse", "mean_inter_mse", "skipped")
TRAIN_UNITS = "round: index from 1; accuracy: fraction in [0,1]; mse: per-entry MSE " \
              "(dimensionless); skipped: aggregations per realization"

ALGORITHMS = {"multiairfed": run_multiairfed, "hierfed": run_hierfed}


# ------------------------------------------------------------------ CSV


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.10g}"
    return str(v)


def csv_bytes(columns, rows, units: str) -> bytes:
    buf = io.StringIO()
    buf.write(f"# units: {units}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode()


def write_csv(path, columns, rows, units: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(csv_bytes(columns, rows, units))
    return path


def read_csv(path) -> tuple[list[str], list[list[str]], str]:
    """Returns ``(header, rows, units)`` of a file written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    units = ""
    body = []
    for line in lines:
        if line.startswith("#"):
            if line.startswith("# units:"):
                units = line[len("# units:"):].strip()
            continue
        body.append(line)
    reader = list(csv.reader(body))
    if not reader:
        raise ValueError(f"{path}: no header row")
    return reader[0], reader[1:], units


def emit_plot_data(csv_path, out_path=None) -> Path:
    """Whitespace-separated columns for gnuplot, header kept as a comment."""
    header, rows, units = read_csv(csv_path)
    out_path = Path(out_path) if out_path else Path(csv_path).with_suffix(".dat")
    width = len(header)
    lines = [f"# units: {units}", "# " + " ".join(header)]
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{csv_path}: row {i + 1} has {len(row)} columns, expected {width}")
        lines.append(" ".join(cell.replace(" ", "_") or "nan" for cell in row))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(("\n".join(lines) + "\n").encode())
    return out_path


def read_plot_data(path) -> tuple[list[str], list[list[str]]]:
    header, rows = None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# units:"):
            continue
        if line.startswith("# "):
            header = line[2:].split()
        elif line.strip():
            rows.append(line.split())
    return header, rows


# ------------------------------------------------------------------ validation


@dataclass
class ValidationRow:
    quantity: str
    analytic: float
    mc_estimate: float
    mc_stderr: float
    n: int
    status: str

    def as_tuple(self):
        return (self.quantity, self.analytic, self.mc_estimate, self.mc_stderr, self.n,
                self.status)


def _within(diff, stderr, k):
    # tiny absolute slack so exact zero-interference cases are not undone by rounding
    return abs(diff) <= k * stderr + 1e-12


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def distortion_scenario(cfg: ExperimentConfig, mode: str, **changes) -> ota.Scenario:
    """Scenario conditioned on the reference device radius and downlink gain."""
    values = dict(cfg=cfg.radio(), C=cfg.C if mode == "inter" else 1, mode=mode,
                  theta_policy="optimal", n_trials=cfg.trials, d=cfg.payload_dim,
                  window_radius=cfg.window_m, ref_radius=cfg.ref_radius,
                  ref_gain=cfg.reference_gain, normalization=cfg.normalization)
    values.update(changes)
    return ota.Scenario(**values)


def _theta_rows(cfg: ExperimentConfig, scale: float) -> list[ValidationRow]:
    radio = cfg.radio()
    rng = np.random.default_rng([cfg.seed, 7])
    q = radio.psi / radio.rho
    rows = []
    for mode in ("intra", "inter"):
        C = cfg.C if mode == "inter" else 1
        n = max(1, round(C * cfg.M * radio.activity_prob))
        sig = np.exp(rng.normal(0.0, 0.5, n))
        args = (q, radio.beta, cfg.reference_gain, cfg.ref_radius, radio.alpha)
        if mode == "intra":
            star = analysis.optimal_theta_intra(sig, n, *args)
        else:
            star = analysis.optimal_theta_inter(sig, n, C, *args)
        grid = np.linspace(0.5, 1.5, 21) * star
        J = [analysis.distortion_objective(t, sig, n, *args, C=C).total for t in grid]
        best = float(grid[int(np.argmin(J))])
        rows.append(ValidationRow(f"theta_grid_{mode}", star, best, 0.0, len(grid),
                                  _verdict(abs(best - star) <= 0.01 * scale * star)))
        J0 = analysis.distortion_objective(star, sig, n, *args, C=C).total
        dJ = analysis.distortion_derivative(star, sig, n, *args, C=C)
        rel = abs(dJ) * star / J0
        rows.append(ValidationRow(f"theta_derivative_{mode}", 0.0, rel, 0.0, 1,
                                  _verdict(rel <= 1e-8 * scale)))
    return rows


def _mse_row(name, sc, records, skipped, scale):
    emp = np.array([r.mse() for r in records])
    ana = np.array([ota.analytic_for(sc, r).total for r in records])
    k = len(emp)
    paired = float((emp - ana).std(ddof=1) / math.sqrt(k))
    row = ValidationRow(name, float(ana.mean()), float(emp.mean()), paired, k,
                        _verdict(_within(emp.mean() - ana.mean(), paired, 3 * scale)))
    log.info("%s: analytic %.4g empirical %.4g +- %.2g (%d trials, %d skipped)",
             name, row.analytic, row.mc_estimate, paired, k, skipped)
    return row


def _bias_row(name, records, scale):
    # entries are exchangeable, so the first one stands for all of them
    e = np.array([r.error()[0].real for r in records])
    se = float(e.std(ddof=1) / math.sqrt(len(e)))
    return ValidationRow(name, 0.0, float(e.mean()), se, len(e),
                         _verdict(_within(e.mean(), se, 3 * scale)))


def _skip_row(name, reason):
    log.warning("%s not evaluated: %s", name, reason)
    return ValidationRow(name, math.nan, math.nan, math.nan, 0, "info")


def run_validation(cfg: ExperimentConfig, tolerance_scale: float = 1.0,
                   bias_trials: int | None = None) -> list[ValidationRow]:
    """Run every analytic/oracle pair and return one row per check.

    ``tolerance_scale`` multiplies all tolerances; 0 turns every statistical
    check into an exact-equality check (harness self-test). The second
    unbiasedness set, at twice the configured intensity, uses ``bias_trials``
    trials (half of ``cfg.trials`` by default) and is omitted when the
    configured intensity is zero.
    """
    s = tolerance_scale
    bias_trials = max(cfg.trials // 2, 1) if bias_trials is None else bias_trials
    radio = cfg.radio()
    other = "paper" if cfg.ei_constant == "corrected" else "corrected"
    g = _streams(cfg.seed, 10)
    rows = []

    power_seed = g[0].bit_generator.seed_seq
    for setting in (cfg.ei_constant, other):
        rc = radio.with_(ei_constant=setting)
        # same draws for both settings: only rho matters here
        m, se = analysis.transmit_power_monte_carlo(rc, cfg.oracle_samples * 5,
                                                    np.random.default_rng(power_seed))
        ratio = m / rc.p_uplink_max
        status = _verdict(abs(ratio - 1.0) <= 0.03 * s) if setting == cfg.ei_constant else "info"
        rows.append(ValidationRow(f"power_ratio[{setting}]", 1.0, ratio,
                                  se / rc.p_uplink_max, cfg.oracle_samples * 5, status))

    psi_mc, psi_se = analysis.psi_monte_carlo(radio, cfg.oracle_samples, g[1], cfg.window_m)
    for setting in (cfg.ei_constant, other):
        value = radio.with_(ei_constant=setting).psi
        status = _verdict(_within(psi_mc - value, psi_se, 3 * s)) \
            if setting == cfg.ei_constant else "info"
        rows.append(ValidationRow(f"psi[{setting}]", value, psi_mc, psi_se,
                                  cfg.oracle_samples, status))

    b_mc, b_se = analysis.campbell_downlink_sum_mc(radio, cfg.oracle_samples, g[2])
    rows.append(ValidationRow("beta", radio.beta, b_mc, b_se, cfg.oracle_samples,
                              _verdict(_within(b_mc - radio.beta, b_se, 3 * s))))

    rows.extend(_theta_rows(cfg, s))

    counts = analysis.sample_active_counts(radio, cfg.oracle_samples, g[3])
    p = radio.activity_prob
    expected_mean = cfg.M * p
    rows.append(ValidationRow("activity_mean", expected_mean, float(counts.mean()),
                              float(counts.std(ddof=1) / math.sqrt(len(counts))), len(counts),
                              _verdict(abs(counts.mean() - expected_mean)
                                       <= 0.01 * s * expected_mean)))
    pval = activity_chi_square(counts, cfg.M, p)
    rows.append(ValidationRow("activity_chi2_pvalue", 0.01, pval, 0.0, len(counts),
                              _verdict(pval > (min(1.0, 0.01 / s) if s > 0 else 1.0))))

    for i, mode in enumerate(("intra", "inter")):
        sc = distortion_scenario(cfg, mode)
        try:
            recs, skipped = ota.run_trials(sc, g[4 + i], cfg.trials)
        except InsufficientDensityError as exc:
            rows.append(_skip_row(f"distortion_{mode}", exc))
            rows.append(_skip_row(f"unbiased_{mode}[lambda={cfg.lambda_p_km2:g}]", exc))
            continue
        rows.append(_mse_row(f"distortion_{mode}", sc, recs, skipped, s))
        rows.append(_bias_row(f"unbiased_{mode}[lambda={cfg.lambda_p_km2:g}]", recs, s))

    dense = cfg.with_(lambda_p_km2=2 * cfg.lambda_p_km2)
    for i, mode in enumerate(("intra", "inter") if cfg.lambda_p_km2 > 0 else ()):
        name = f"unbiased_{mode}[lambda={dense.lambda_p_km2:g}]"
        try:
            recs, _ = ota.run_trials(distortion_scenario(dense, mode), g[6 + i], bias_trials)
        except InsufficientDensityError as exc:
            rows.append(_skip_row(name, exc))
            continue
        rows.append(_bias_row(name, recs, s))
    return rows


def activity_chi_square(counts, M: int, p: float) -> float:
    """Chi-square goodness-of-fit p-value of active counts against Binomial(M, p).

    Tail bins are merged until every expected count is at least 5.
    """
    counts = np.asarray(counts)
    n = len(counts)
    observed = np.bincount(counts, minlength=M + 1).astype(float)
    expected = stats.binom.pmf(np.arange(M + 1), M, p) * n
    obs_b, exp_b = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= 5:
            obs_b.append(o_acc)
            exp_b.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0:
        obs_b[-1] += o_acc
        exp_b[-1] += e_acc
    return float(stats.chisquare(obs_b, exp_b).pvalue)


def validation_passed(rows) -> bool:
    return all(r.status != "fail" for r in rows)


# ------------------------------------------------------------------ sweeps


def _ring_radius_nodes(r0: float, R: float, n: int = 48):
    """Gauss-Legendre nodes and weights for averaging over the ring radius density."""
    x, w = special.roots_legendre(n)
    y = 0.5 * (R - r0) * x + 0.5 * (R + r0)
    return y, w * 0.5 * (R - r0) * 2 * y / (R**2 - r0**2)


def expected_distortion(cfg: ExperimentConfig, mode: str = "intra", theta: float | None = None,
                        sigma: float = 1.0,
                        average_radius: bool = True) -> analysis.DistortionBreakdown:
    """Analytic distortion averaged over the active count, given it is at least one.

    All spreads equal ``sigma`` and the reference downlink gain is fixed by the
    configuration (its inverse has no finite mean). The reference radius is
    averaged over the ring density, or fixed at ``cfg.ref_radius`` when
    ``average_radius`` is false. ``theta=None`` uses the optimal factor.
    """
    radio = cfg.radio()
    C = cfg.C if mode == "inter" else 1
    K = C * cfg.M
    pmf = stats.binom.pmf(np.arange(K + 1), K, radio.activity_prob)
    q = radio.psi / radio.rho
    if average_radius:
        radii, weights = _ring_radius_nodes(cfg.r0, cfg.R)
    else:
        radii, weights = np.array([cfg.ref_radius]), np.array([1.0])
    up = down = 0.0
    for y0, wy in zip(radii, weights):
        args = (q, radio.beta, cfg.reference_gain, y0, radio.alpha)
        for n in range(1, K + 1):
            sig = np.full(n, sigma)
            t = analysis.optimal_theta_inter(sig, n, C, *args) if theta is None else theta
            d = analysis.distortion_objective(t, sig, n, *args, C=C)
            up += wy * pmf[n] * d.uplink_term
            down += wy * pmf[n] * d.downlink_term
    z = 1.0 - pmf[0]
    return analysis.DistortionBreakdown(up / z, down / z)


def mse_sweep(cfg: ExperimentConfig, key: str, values, theta_policy="optimal",
              mode: str = "intra", trials: int | None = None) -> list[tuple]:
    """Analytic and simulated distortion for each value of one configuration key."""
    trials = cfg.trials if trials is None else trials
    rows = []
    for i, v in enumerate(values):
        c = cfg.with_(**{key: v})
        theta = None if theta_policy == "optimal" else float(theta_policy)
        ana = expected_distortion(c, mode, theta)
        sc = distortion_scenario(c, mode, theta_policy=theta_policy, ref_radius=None)
        est = ota.empirical_mse(sc, trials, np.random.default_rng([cfg.seed, 11, i]))
        label = theta_policy if theta_policy == "optimal" else f"fixed:{float(theta_policy):g}"
        rows.append((v, ana.total, ana.uplink_term, ana.downlink_term, est.mse, est.stderr,
                     label))
    return rows


def fitted_exponent(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ------------------------------------------------------------------ training


def realization_seeds(seed: int, r: int) -> tuple[np.random.Generator, int]:
    """Federation RNG and training seed of realization ``r`` (shared across algorithms)."""
    ss = np.random.SeedSequence([seed, r])
    fed_ss, train_ss = ss.spawn(2)
    return np.random.default_rng(fed_ss), int(train_ss.generate_state(1)[0])


def train_runs(cfg: ExperimentConfig, algorithm: str, mode: str,
               realizations: int | None = None) -> list[TrainResult]:
    """Train ``realizations`` independent federations with the chosen algorithm."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {sorted(ALGORITHMS)}")
    fn = ALGORITHMS[algorithm]
    n = cfg.realizations if realizations is None else realizations
    results = []
    for r in range(n):
        fed_rng, train_seed = realization_seeds(cfg.seed, r)
        fed = make_synthetic_federation(cfg.n_classes, cfg.feature_dim, cfg.C, cfg.M, cfg.iid,
                                        (cfg.samples_min, cfg.samples_max), fed_rng,
                                        class_sep=cfg.class_sep)
        results.append(fn(fed, cfg.schedule(), mode, cfg.radio(), seed=train_seed,
                          window_radius=cfg.window_m, normalization=cfg.normalization))
    return results


def train_table(results: list[TrainResult]) -> list[tuple]:
    """Per-round averages over realizations in the training CSV layout."""
    T = len(results[0].accuracy_per_round)
    rows = []
    for t in range(T):
        acc = float(np.mean([r.accuracy_per_round[t] for r in results]))
        mse = {}
        for scope in ("intra", "inter"):
            vals = [e["empirical"] for r in results for e in r.distortion_log
                    if e["round"] == t and e["scope"] == scope]
            mse[scope] = float(np.mean(vals)) if vals else math.nan
        skipped = float(np.mean([r.skipped_in_round(t) for r in results]))
        rows.append((t + 1, acc, mse["intra"], mse["inter"], skipped))
    return rows


def final_accuracies(results: list[TrainResult]) -> np.ndarray:
    return np.array([r.accuracy_per_round[-1] for r in results])

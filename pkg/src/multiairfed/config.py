"""Experiment configuration: flat ``key = value`` files with unit conversion.

Every key is optional; an empty file yields the reference parameter set
(``lambda_p_km2 = 20``, ``r0 = 4``, ``R = 30``, ``mu = 0.01``, ``C = 3``,
``M = 15``, ``p_uplink = 1``, ``p_downlink = 1``, ``sigma_d_sq = 10``,
``th1 = 0.5``, ``alpha = 4``, ``tau = 6``, ``gamma = 2``, ``T = 40``, ``B = 60``).
Lines starting with ``#`` are comments. Server intensity is given per square
kilometer and converted to per square meter.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .learning import LearningSchedule
from .radio import EI_CONSTANTS, ParameterError, RadioConfig


class ConfigError(ValueError):
    """Raised for malformed configuration; the message names the offending key."""


@dataclass(frozen=True)
class ExperimentConfig:
    # network and radio
    lambda_p_km2: float = 20.0
    r0: float = 4.0
    R: float = 30.0
    M: int = 15
    alpha: float = 4.0
    p_uplink: float = 1.0
    p_downlink: float = 1.0
    sigma_d_sq: float = 10.0
    th1: float = 0.5
    guard_radius: float = math.nan
    ei_constant: str = "corrected"
    # schedule
    C: int = 3
    T: int = 40
    tau: int = 6
    gamma: int = 2
    mu: float = 0.01
    B: int = 60
    # synthetic task
    iid: bool = False
    n_classes: int = 10
    feature_dim: int = 20
    class_sep: float = 1.0
    samples_min: int = 60
    samples_max: int = 200
    # Monte Carlo and orchestration
    seed: int = 0
    trials: int = 20000
    oracle_samples: int = 40000
    realizations: int = 10
    payload_dim: int = 16
    window_m: float = 500.0
    ref_radius: float = 20.0
    ref_gain: float = math.nan
    normalization: str = "analytic"
    out: str = "results"

    def __post_init__(self):
        if not self.alpha > 2:
            raise ConfigError(f"alpha: path-loss exponent must exceed 2, got {self.alpha}")
        if not self.th1 > 0:
            raise ConfigError(f"th1: truncation threshold must be positive, got {self.th1}")
        if self.lambda_p_km2 < 0:
            raise ConfigError("lambda_p_km2: intensity must be non-negative")
        if self.ei_constant not in EI_CONSTANTS:
            raise ConfigError(f"ei_constant: expected one of {EI_CONSTANTS}, "
                              f"got {self.ei_constant!r}")
        if self.normalization not in ("analytic", "empirical"):
            raise ConfigError("normalization: expected 'analytic' or 'empirical'")
        for key in ("C", "T", "tau", "B", "M", "trials", "oracle_samples", "realizations",
                    "payload_dim"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be a positive integer")
        if self.gamma < 0:
            raise ConfigError("gamma: must be non-negative")
        if not 2 <= self.n_classes:
            raise ConfigError("n_classes: need at least two classes")
        if not self.B <= self.samples_min <= self.samples_max:
            raise ConfigError("samples_min: need B <= samples_min <= samples_max")
        try:
            self.radio()
        except ParameterError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def lambda_p(self) -> float:
        """Server intensity in m^-2."""
        return self.lambda_p_km2 * 1e-6

    def radio(self) -> RadioConfig:
        return RadioConfig(alpha=self.alpha, p_uplink_max=self.p_uplink,
                           p_downlink=self.p_downlink, sigma_d_sq=self.sigma_d_sq,
                           th1=self.th1, r0=self.r0, R=self.R, M=self.M,
                           lambda_p=self.lambda_p, ei_constant=self.ei_constant,
                           guard_radius=None if math.isnan(self.guard_radius)
                           else self.guard_radius)

    def schedule(self) -> LearningSchedule:
        return LearningSchedule(T=self.T, tau=self.tau, gamma=self.gamma, mu=self.mu, B=self.B)

    @property
    def reference_gain(self) -> float:
        """Own-server downlink gain the distortion checks condition on (mean by default)."""
        return self.sigma_d_sq if math.isnan(self.ref_gain) else self.ref_gain

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_overrides(pairs: dict) -> dict:
    out = {}
    for key, raw in pairs.items():
        if key not in _TYPES:
            if key == "lambda_p":
                raise ConfigError("lambda_p: give the intensity as lambda_p_km2 (per km^2)")
            raise ConfigError(f"{key}: unknown configuration key")
        out[key] = _convert(key, str(raw).strip()) if isinstance(raw, str) else raw
    return out


def parse_config_text(text: str, **overrides) -> ExperimentConfig:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs[key] = value
    values = parse_overrides(pairs)
    values.update(parse_overrides(overrides))
    return ExperimentConfig(**values)


def parse_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read a config file (``None`` means defaults) and apply keyword overrides."""
    text = ""
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config: file {str(p)!r} does not exist")
        text = p.read_text()
    return parse_config_text(text, **overrides)

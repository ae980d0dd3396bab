"""Experiment configuration: grids, config files, validation, hashing."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import spectra

DEFAULT_W_GRID = "0.05:0.95:101"
THREADS_ENV = "COLLAPSE_LAB_THREADS"

COV_CHOICES = ("isotropic", "ar1", "spiked", "equicorr", "file")
SIGNAL_CHOICES = ("bern", "random-effects", "spiked-aligned", "file")
MODES = ("theory", "simulate", "optimal-w", "figure-interpolator", "figure-mixing")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def parse_grid(text, field_name: str = "grid") -> np.ndarray:
    """Parse 'lo:hi:count', 'log:lo:hi:count', or a single number.

    Linear grids are inclusive of both ends; log grids are geometric between
    lo and hi.  Returned arrays are ascending.
    """
    if isinstance(text, (int, float)):
        return np.array([float(text)])
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) == 3:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
            log = False
        elif len(parts) == 4 and parts[0] == "log":
            lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
            log = True
        else:
            raise ValueError("expected lo:hi:count or log:lo:hi:count")
        if count < 1:
            raise ValueError(f"count must be at least 1, got {count}")
        if hi < lo:
            raise ValueError(f"grid bounds out of order: {lo} > {hi}")
        if log and lo <= 0:
            raise ValueError(f"log grid needs positive bounds, got lo = {lo}")
        if count == 1:
            return np.array([lo])
        if log:
            return np.geomspace(lo, hi, count)
        return np.linspace(lo, hi, count)
    except ValueError as exc:
        raise ConfigError(field_name, str(exc)) from None


@dataclass
class ExperimentConfig:
    """Resolved run description; file values come first, flags override."""

    mode: str = "theory"
    cov: str = "isotropic"
    signal: str = "bern"
    gamma: float = 2.0
    sigma2: float = 1.0
    bstar: float = 1.0
    lam: np.ndarray | None = None
    w: np.ndarray | None = None
    t: int = 5
    n: int = 200
    reps: int = 100
    seed: int = 1
    out: str = "out"
    threads: int = 1
    entry_dist: str = "gaussian"
    noise_dist: str = "gaussian"
    cov_alpha: float = 1.0
    cov_rho: float = 0.5
    cov_s: float = 5.0
    signal_q: float = 0.1
    signal_theta: float = 0.5
    cov_file: str | None = None
    signal_file: str | None = None
    grid_sources: dict = field(default_factory=dict)
    explicit: set = field(default_factory=set)

    @property
    def p(self) -> int:
        return int(round(self.gamma * self.n))

    def covariance_model(self):
        if self.cov == "isotropic":
            return spectra.Isotropic(self.cov_alpha)
        if self.cov == "ar1":
            return spectra.AR1(self.cov_rho)
        if self.cov == "spiked":
            return spectra.Spiked(self.cov_s)
        if self.cov == "equicorr":
            return spectra.Equicorrelated(self.cov_rho)
        if self.cov == "file":
            if not self.cov_file:
                raise ConfigError("cov_file", "cov=file needs a cov_file path")
            try:
                matrix = np.loadtxt(self.cov_file, delimiter=",", ndmin=2)
            except OSError as exc:
                raise ConfigError("cov_file", str(exc)) from None
            return spectra.ExplicitMatrix(matrix)
        raise ConfigError("cov", f"unknown covariance family {self.cov!r}")

    def signal_model(self):
        if self.signal == "bern":
            return spectra.NormalizedBernoulli(self.signal_q)
        if self.signal == "random-effects":
            return spectra.RandomEffects(self.bstar)
        if self.signal == "spiked-aligned":
            return spectra.SpikedAligned(self.signal_theta)
        if self.signal == "file":
            if not self.signal_file:
                raise ConfigError("signal_file", "signal=file needs a signal_file path")
            try:
                vector = np.loadtxt(self.signal_file, delimiter=",")
            except OSError as exc:
                raise ConfigError("signal_file", str(exc)) from None
            return spectra.ExplicitVector(vector)
        raise ConfigError("signal", f"unknown signal family {self.signal!r}")


_GRID_FIELDS = ("lam", "w")
_INT_FIELDS = ("t", "n", "reps", "seed", "threads")
_FLOAT_FIELDS = ("gamma", "sigma2", "bstar", "cov_alpha", "cov_rho", "cov_s",
                 "signal_q", "signal_theta")
_STR_FIELDS = ("mode", "cov", "signal", "out", "entry_dist", "noise_dist",
               "cov_file", "signal_file")


def load_config(file_path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge defaults, an optional flat JSON file, and flag overrides."""
    cfg = ExperimentConfig()
    if os.environ.get(THREADS_ENV):
        try:
            cfg.threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError("threads", f"bad {THREADS_ENV} value {os.environ[THREADS_ENV]!r}")

    layers = []
    if file_path is not None:
        try:
            with open(file_path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "config file must hold a flat JSON object")
        layers.append(data)
    if overrides:
        layers.append({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in fields(ExperimentConfig)}
    for layer in layers:
        for key, value in layer.items():
            name = key.replace("-", "_")
            if name == "lambda":
                name = "lam"
            if name not in known or name in ("grid_sources", "explicit"):
                raise ConfigError(name, "unknown configuration key")
            cfg.explicit.add(name)
            if name in _GRID_FIELDS:
                setattr(cfg, name, parse_grid(value, name))
                cfg.grid_sources[name] = str(value)
            elif name in _INT_FIELDS:
                try:
                    setattr(cfg, name, int(value))
                except (TypeError, ValueError):
                    raise ConfigError(name, f"expected an integer, got {value!r}") from None
            elif name in _FLOAT_FIELDS:
                try:
                    setattr(cfg, name, float(value))
                except (TypeError, ValueError):
                    raise ConfigError(name, f"expected a number, got {value!r}") from None
            else:
                setattr(cfg, name, None if value is None else str(value))

    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError("mode", f"expected one of {MODES}, got {cfg.mode!r}")
    if cfg.cov not in COV_CHOICES:
        raise ConfigError("cov", f"expected one of {COV_CHOICES}, got {cfg.cov!r}")
    if cfg.signal not in SIGNAL_CHOICES:
        raise ConfigError("signal", f"expected one of {SIGNAL_CHOICES}, got {cfg.signal!r}")
    if cfg.entry_dist not in ("gaussian", "rademacher"):
        raise ConfigError("entry_dist", f"got {cfg.entry_dist!r}")
    if cfg.noise_dist not in ("gaussian", "rademacher"):
        raise ConfigError("noise_dist", f"got {cfg.noise_dist!r}")
    if not (np.isfinite(cfg.gamma) and cfg.gamma > 1):
        raise ConfigError("gamma", f"must exceed 1, got {cfg.gamma!r}")
    if not (np.isfinite(cfg.sigma2) and cfg.sigma2 > 0):
        raise ConfigError("sigma2", f"must be positive, got {cfg.sigma2!r}")
    if not (np.isfinite(cfg.bstar) and cfg.bstar > 0):
        raise ConfigError("bstar", f"must be positive, got {cfg.bstar!r}")
    if cfg.n < 2:
        raise ConfigError("n", f"must be at least 2, got {cfg.n}")
    if cfg.t < 0:
        raise ConfigError("t", f"must be nonnegative, got {cfg.t}")
    if cfg.seed < 0:
        raise ConfigError("seed", f"must be nonnegative, got {cfg.seed}")
    if cfg.threads < 1:
        raise ConfigError("threads", f"must be at least 1, got {cfg.threads}")
    if cfg.mode in ("simulate", "figure-interpolator", "figure-mixing") and cfg.reps < 2:
        raise ConfigError("reps", f"simulation needs at least 2 replicates, got {cfg.reps}")
    if cfg.reps < 1:
        raise ConfigError("reps", f"must be positive, got {cfg.reps}")
    if cfg.lam is not None:
        if np.any(~np.isfinite(cfg.lam)) or np.any(cfg.lam <= 0):
            raise ConfigError("lambda", "penalties must be positive and finite")
        if np.any(np.diff(cfg.lam) <= 0) and cfg.lam.size > 1:
            raise ConfigError("lambda", "grid must be strictly increasing")
    if cfg.w is not None:
        if np.any(~np.isfinite(cfg.w)) or np.any(cfg.w <= 0) or np.any(cfg.w > 1):
            raise ConfigError("w", "weights must lie in (0, 1]")
        if cfg.w.size > 1 and np.any(np.diff(cfg.w) <= 0):
            raise ConfigError("w", "grid must be strictly increasing")
    if cfg.p <= cfg.n and cfg.lam is None and cfg.mode in ("theory", "simulate"):
        raise ConfigError("gamma", f"interpolation needs p > n; p = {cfg.p}, n = {cfg.n}")


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 over the resolved configuration, excluding out and threads.

    Thread count and output location cannot change any numbers, so reruns
    that differ only there hash identically.
    """
    payload = {}
    for f in fields(ExperimentConfig):
        if f.name in ("out", "threads", "grid_sources", "explicit"):
            continue
        value = getattr(cfg, f.name)
        if isinstance(value, np.ndarray):
            value = [format(v, ".17g") for v in value]
        payload[f.name] = value
    payload["p"] = cfg.p
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()

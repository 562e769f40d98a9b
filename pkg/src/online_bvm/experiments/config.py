"""Experiment configuration loaded from JSON."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

from ..errors import ConfigError
from ..solvers import VbConfig

EXPERIMENTS = ("bernoulli_sec9", "logistic_gaussian", "diagnose")
TABLE_BATCH_SIZES = (1, 2, 4, 6, 8, 10, 20, 50, 200, 1000)
METHODS = ("laplace", "variational", "exact")
MODELS = ("logistic", "bernoulli_intercept", "gaussian_linear")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a simulation run depends on.

    ``vb`` holds overrides for :class:`VbConfig`; ``data`` points the
    ``diagnose`` experiment at a CSV of observations. ``dim`` is the number
    of Gaussian covariates for the logistic study (0 means intercept-only).
    """

    experiment: str = "bernoulli_sec9"
    n_total: int = 1000
    batch_sizes: tuple = TABLE_BATCH_SIZES
    replications: int = 500
    alpha: float = 0.05
    prior_mean: float = 0.0
    prior_sd: float = 3.0
    theta0: tuple = (0.0,)
    seed: int = 20240601
    dim: int = 0
    vb: dict = field(default_factory=dict)
    out_dir: str = "out"
    threads: int = 1
    svg: bool = True
    data: str | None = None
    gaussian_control: bool = True
    noise_precision: float = 1.0
    methods: tuple = ("laplace", "variational")
    model: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
        object.__setattr__(self, "batch_sizes", tuple(int(n) for n in self.batch_sizes))
        object.__setattr__(self, "theta0", tuple(float(v) for v in _as_list(self.theta0)))
        object.__setattr__(self, "methods", tuple(_as_list_str(self.methods)))
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError(f"methods must be drawn from {', '.join(METHODS)}")
        if self.model is not None and self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}")
        if self.n_total < 1:
            raise ConfigError("n_total must be positive")
        if not self.batch_sizes or any(n < 1 or n > self.n_total for n in self.batch_sizes):
            raise ConfigError("batch sizes must lie in 1..n_total")
        if len(set(self.batch_sizes)) != len(self.batch_sizes):
            raise ConfigError("batch sizes must be distinct")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not (self.prior_sd > 0 and math.isfinite(self.prior_sd)):
            raise ConfigError("prior_sd must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.dim < 0:
            raise ConfigError("dim must be non-negative")
        if not self.noise_precision > 0:
            raise ConfigError("noise_precision must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not all(math.isfinite(v) for v in self.theta0):
            raise ConfigError("theta0 must be finite")
        try:
            self.vb_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad vb settings: {exc}") from None

    @property
    def p(self) -> int:
        return max(self.dim, 1)

    def theta0_vector(self):
        if len(self.theta0) == 1 and self.p > 1:
            return self.theta0 * self.p
        if len(self.theta0) != self.p:
            raise ConfigError(f"theta0 has {len(self.theta0)} entries, model has {self.p}")
        return self.theta0

    def vb_config(self) -> VbConfig:
        base = VbConfig(seed=self.seed)
        return replace(base, **self.vb) if self.vb else base

    def updated(self, **changes):
        try:
            return replace(self, **{k: v for k, v in changes.items() if v is not None})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        d = asdict(self)
        d["batch_sizes"] = list(self.batch_sizes)
        d["theta0"] = list(self.theta0)
        d["methods"] = list(self.methods)
        return d


def _as_list_str(v):
    return [v] if isinstance(v, str) else list(v)


def _as_list(v):
    if isinstance(v, (int, float)):
        return [v]
    return list(v)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a JSON config; ``overrides`` that are not None take precedence."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(raw, **overrides)


def config_from_dict(raw: dict, **overrides) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    merged = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return ExperimentConfig(**merged)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None

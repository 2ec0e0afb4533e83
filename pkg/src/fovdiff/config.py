"""Run configuration: a flat key-value file with a strict schema.

Lines look like ``sampler.n_steps = 50``; values are JSON literals with
bare words accepted as strings. Unknown or duplicate keys are hard errors,
so a typo can never silently fall back to a default. An empty file yields
the full default configuration (T=1000, 50 denoising steps, 20 resampling
iterations).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .denoisers import GaussianMixture
from .mlp import TrainConfig, load_checkpoint
from .phantom import PhantomConfig, TruncationConfig
from .schedule import DiffusionSchedule, Trajectory, linear_beta_schedule, make_trajectory

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "default_config",
    "normalize_hu",
    "denormalize_hu",
    "make_denoiser",
]


class ConfigError(Exception):
    """Raised for unparseable or invalid run configuration."""


def normalize_hu(hu, low: float = -1000.0, high: float = 600.0):
    """Clip to [low, high] and affinely map onto [-1, 1]."""
    if low >= high:
        raise ValueError(f"need low < high, got ({low}, {high})")
    clipped = np.clip(hu, low, high)
    return 2.0 * (clipped - low) / (high - low) - 1.0


def denormalize_hu(value, low: float = -1000.0, high: float = 600.0):
    """Inverse of normalize_hu; exact on values inside [-1, 1]."""
    if low >= high:
        raise ValueError(f"need low < high, got ({low}, {high})")
    clipped = np.clip(value, -1.0, 1.0)
    return (clipped + 1.0) / 2.0 * (high - low) + low


@dataclass(frozen=True)
class ScheduleSection:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass(frozen=True)
class SamplerSection:
    variant: str = "repaint_ddim"
    n_steps: int = 50
    U: int = 20
    seed: int = 0


@dataclass(frozen=True)
class DenoiserSection:
    kind: str = "gmm"
    checkpoint: str | None = None
    gmm_weights: tuple = (1.0,)
    gmm_means: tuple = ((0.0,),)
    gmm_variances: tuple = ((1.0,),)


@dataclass(frozen=True)
class DataSection:
    height: int = 64
    width: int = 64
    fill: float = -1.0
    hu_low: float = -1000.0
    hu_high: float = 600.0
    radius_min: float = 0.30
    radius_max: float = 0.55
    center_jitter: float = 0.15
    tci_min: float | None = None
    tci_max: float | None = None
    noise_sigma: float | None = None


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    dump_every: int = 0


@dataclass(frozen=True)
class RunConfig:
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    denoiser: DenoiserSection = field(default_factory=DenoiserSection)
    data: DataSection = field(default_factory=DataSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputSection = field(default_factory=OutputSection)

    def make_schedule(self) -> DiffusionSchedule:
        return linear_beta_schedule(
            self.schedule.T, self.schedule.beta_start, self.schedule.beta_end
        )

    def make_trajectory(self) -> Trajectory:
        return make_trajectory(self.schedule.T, self.sampler.n_steps)

    def make_phantom_config(self) -> PhantomConfig:
        overrides = {}
        if self.data.noise_sigma is not None:
            overrides["noise_sigma"] = self.data.noise_sigma
        return PhantomConfig.scaled(self.data.height, self.data.width, **overrides)

    def make_truncation_config(self) -> TruncationConfig:
        tci_range = None
        if self.data.tci_min is not None:
            tci_range = (self.data.tci_min, self.data.tci_max)
        return TruncationConfig(
            radius_frac_range=(self.data.radius_min, self.data.radius_max),
            center_jitter_frac=self.data.center_jitter,
            tci_range=tci_range,
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, sampler=replace(self.sampler, seed=seed))


def make_denoiser(config: RunConfig):
    """Instantiate the configured denoiser (analytic mixture or checkpoint)."""
    section = config.denoiser
    if section.kind == "gmm":
        return GaussianMixture(
            weights=np.asarray(section.gmm_weights, dtype=np.float64),
            means=np.asarray(section.gmm_means, dtype=np.float64),
            variances=np.asarray(section.gmm_variances, dtype=np.float64),
        )
    if section.kind == "mlp":
        if section.checkpoint is None:
            raise ConfigError("denoiser.kind = mlp requires denoiser.checkpoint")
        return load_checkpoint(section.checkpoint, T=config.schedule.T)
    raise ConfigError(f"unknown denoiser kind {section.kind!r}")


def default_config() -> RunConfig:
    return RunConfig()


_VARIANTS = ("ddpm", "ddim", "repaint_ddpm", "repaint_ddim")


def _expect_int(key, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return value


def _expect_float(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def _expect_str(key, value):
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def _expect_list(key, value):
    if not isinstance(value, list):
        raise ConfigError(f"{key}: expected a JSON array, got {value!r}")
    return value


# key -> (coerce, (section attr, field attr))
_SCHEMA = {
    "schedule.T": (_expect_int, ("schedule", "T")),
    "schedule.beta_start": (_expect_float, ("schedule", "beta_start")),
    "schedule.beta_end": (_expect_float, ("schedule", "beta_end")),
    "sampler.variant": (_expect_str, ("sampler", "variant")),
    "sampler.n_steps": (_expect_int, ("sampler", "n_steps")),
    "sampler.U": (_expect_int, ("sampler", "U")),
    "sampler.seed": (_expect_int, ("sampler", "seed")),
    "denoiser.kind": (_expect_str, ("denoiser", "kind")),
    "denoiser.checkpoint": (_expect_str, ("denoiser", "checkpoint")),
    "denoiser.gmm.weights": (_expect_list, ("denoiser", "gmm_weights")),
    "denoiser.gmm.means": (_expect_list, ("denoiser", "gmm_means")),
    "denoiser.gmm.variances": (_expect_list, ("denoiser", "gmm_variances")),
    "data.height": (_expect_int, ("data", "height")),
    "data.width": (_expect_int, ("data", "width")),
    "data.fill": (_expect_float, ("data", "fill")),
    "data.hu_low": (_expect_float, ("data", "hu_low")),
    "data.hu_high": (_expect_float, ("data", "hu_high")),
    "data.truncation.radius_min": (_expect_float, ("data", "radius_min")),
    "data.truncation.radius_max": (_expect_float, ("data", "radius_max")),
    "data.truncation.center_jitter": (_expect_float, ("data", "center_jitter")),
    "data.truncation.tci_min": (_expect_float, ("data", "tci_min")),
    "data.truncation.tci_max": (_expect_float, ("data", "tci_max")),
    "data.phantom.noise_sigma": (_expect_float, ("data", "noise_sigma")),
    "train.learning_rate": (_expect_float, ("train", "learning_rate")),
    "train.batch_size": (_expect_int, ("train", "batch_size")),
    "train.iterations": (_expect_int, ("train", "iterations")),
    "train.seed": (_expect_int, ("train", "seed")),
    "train.embed_dim": (_expect_int, ("train", "embed_dim")),
    "train.hidden": (_expect_list, ("train", "hidden")),
    "output.dir": (_expect_str, ("output", "dir")),
    "output.dump_every": (_expect_int, ("output", "dump_every")),
}


def _parse_lines(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, rhs = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        rhs = rhs.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        if not rhs:
            raise ConfigError(f"line {lineno}: missing value for '{key}'")
        try:
            value = json.loads(rhs)
        except json.JSONDecodeError:
            value = rhs  # bare word: treated as a string
        values[key] = value
    return values


def _validate(config: RunConfig) -> RunConfig:
    s = config.schedule
    if s.T < 1:
        raise ConfigError("schedule.T: must be >= 1")
    if not (0.0 < s.beta_start <= s.beta_end < 1.0):
        raise ConfigError(
            "schedule.beta_start/beta_end: need 0 < start <= end < 1"
        )
    sp = config.sampler
    if sp.variant not in _VARIANTS:
        raise ConfigError(
            f"sampler.variant: unknown variant {sp.variant!r}; "
            f"expected one of {', '.join(_VARIANTS)}"
        )
    if sp.n_steps < 1:
        raise ConfigError("sampler.n_steps: must be >= 1")
    if sp.n_steps > s.T:
        raise ConfigError("sampler.n_steps: cannot exceed schedule.T")
    if sp.U < 1:
        raise ConfigError("sampler.U: must be >= 1")
    d = config.denoiser
    if d.kind not in ("gmm", "mlp"):
        raise ConfigError(f"denoiser.kind: expected gmm or mlp, got {d.kind!r}")
    if d.kind == "mlp" and d.checkpoint is not None:
        if not Path(d.checkpoint).exists():
            raise ConfigError(
                f"denoiser.checkpoint: no such file '{d.checkpoint}'"
            )
    if d.kind == "gmm":
        try:
            GaussianMixture(
                weights=np.asarray(d.gmm_weights, dtype=np.float64),
                means=np.asarray(d.gmm_means, dtype=np.float64),
                variances=np.asarray(d.gmm_variances, dtype=np.float64),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"denoiser.gmm.*: {exc}") from exc
    dt = config.data
    if dt.height < 4 or dt.width < 4:
        raise ConfigError("data.height/width: grid must be at least 4x4")
    if dt.hu_low >= dt.hu_high:
        raise ConfigError("data.hu_low/hu_high: need low < high")
    if not (0.0 < dt.radius_min <= dt.radius_max):
        raise ConfigError("data.truncation.radius_min/max: need 0 < min <= max")
    if not 0.0 <= dt.center_jitter <= 0.5:
        raise ConfigError("data.truncation.center_jitter: must lie in [0, 0.5]")
    if (dt.tci_min is None) != (dt.tci_max is None):
        raise ConfigError(
            "data.truncation.tci_min/tci_max: set both bounds or neither"
        )
    if dt.tci_min is not None and not 0.0 <= dt.tci_min < dt.tci_max <= 1.0:
        raise ConfigError("data.truncation.tci_min/tci_max: need 0 <= min < max <= 1")
    if dt.noise_sigma is not None and dt.noise_sigma < 0:
        raise ConfigError("data.phantom.noise_sigma: must be >= 0")
    if config.output.dump_every < 0:
        raise ConfigError("output.dump_every: must be >= 0")
    return config


def parse_config(path) -> RunConfig:
    """Parse and validate a run-config file; missing keys use defaults."""
    text = Path(path).read_text()
    values = _parse_lines(text)

    sections = {
        "schedule": {},
        "sampler": {},
        "denoiser": {},
        "data": {},
        "train": {},
        "output": {},
    }
    for key, value in values.items():
        coerce, (section, attr) = _SCHEMA[key]
        coerced = coerce(key, value)
        if key == "train.hidden":
            if not all(isinstance(h, int) and h >= 1 for h in coerced):
                raise ConfigError("train.hidden: expected positive integers")
            coerced = tuple(coerced)
        elif isinstance(coerced, list):
            coerced = tuple(
                tuple(v) if isinstance(v, list) else v for v in coerced
            )
        sections[section][attr] = coerced

    try:
        train = TrainConfig(**sections["train"])
    except ValueError as exc:
        raise ConfigError(f"train.*: {exc}") from exc
    config = RunConfig(
        schedule=ScheduleSection(**sections["schedule"]),
        sampler=SamplerSection(**sections["sampler"]),
        denoiser=DenoiserSection(**sections["denoiser"]),
        data=DataSection(**sections["data"]),
        train=train,
        output=OutputSection(**sections["output"]),
    )
    return _validate(config)

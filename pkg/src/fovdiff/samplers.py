"""Reverse-diffusion samplers: ancestral, deterministic, and mask-conditioned.

Four procedures share one state carrier:

* ``sample(run, "ddpm")``: stochastic ancestral reverse chain over
  consecutive levels.
* ``sample(run, "ddim")``: deterministic reverse map over an arbitrary
  strided trajectory.
* ``repaint_ddpm(run)``: inpainting baseline that overwrites the known
  region of each intermediate with a forward-diffused copy of the trusted
  image and resamples between adjacent levels.
* ``repaint_ddim(run)``: inpainting over a strided deterministic
  trajectory; the replacement happens on the predicted clean image and the
  resampling iterates between that prediction and the noisy level within
  each step.

All samplers draw exclusively from ``run.rng``, so a run is bitwise
reproducible from its seed, and the number of draws is a fixed function of
trajectory length, resample count, and mask presence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .denoisers import Denoiser, predict_x0
from .schedule import DiffusionSchedule, Trajectory

__all__ = [
    "KnownRegion",
    "SamplerRun",
    "CountingRng",
    "ddim_step",
    "ddpm_step",
    "sample",
    "repaint_ddim",
    "repaint_ddpm",
]

StepHook = Callable[[int, np.ndarray], None]


@dataclass(frozen=True)
class KnownRegion:
    """Trusted image values and the mask marking where they apply.

    Mask value 1 marks known (inside field-of-view) pixels, 0 marks pixels
    the sampler must generate.
    """

    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        image = np.array(self.image, dtype=np.float64)
        mask = np.array(self.mask, dtype=np.float64)
        if image.shape != mask.shape:
            raise ValueError(
                f"shape mismatch: image {image.shape} vs mask {mask.shape}"
            )
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ValueError("mask values must be exactly 0 or 1")
        image.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "mask", mask)


@dataclass
class SamplerRun:
    """Everything one sampling run needs.

    Attributes:
        denoiser: Noise predictor shared by every step.
        schedule: Diffusion schedule the trajectory indexes into.
        trajectory: Levels to visit, strictly decreasing.
        rng: Seeded generator owned by this run; independent runs must not
            share one.
        resample_count: Inner harmonization iterations per step for the
            inpainting samplers, >= 1.
        known: Trusted image and mask; required by the inpainting samplers
            and forbidden for unconditional sampling.
        shape: Output grid shape for unconditional runs (inferred from
            ``known`` otherwise).
    """

    denoiser: Denoiser
    schedule: DiffusionSchedule
    trajectory: Trajectory
    rng: np.random.Generator
    resample_count: int = 1
    known: KnownRegion | None = None
    shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.resample_count < 1:
            raise ValueError(
                f"resample_count must be >= 1, got {self.resample_count}"
            )
        if self.trajectory.steps[0] > self.schedule.T:
            raise ValueError(
                f"trajectory starts at {self.trajectory.steps[0]} but the "
                f"schedule has only T={self.schedule.T} steps"
            )
        if self.known is not None:
            if self.shape is not None and self.shape != self.known.image.shape:
                raise ValueError("shape conflicts with known-region shape")
            self.shape = self.known.image.shape
        elif self.shape is None:
            raise ValueError("shape is required when no known region is given")


class CountingRng:
    """Generator wrapper that tallies normal draws; used to audit samplers."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self.calls = 0
        self.elements = 0

    def standard_normal(self, size=None):
        out = self._rng.standard_normal(size)
        self.calls += 1
        self.elements += int(np.asarray(out).size)
        return out

    def __getattr__(self, name):
        return getattr(self._rng, name)


def _ddim_combine(
    x0_hat: np.ndarray, eps_hat: np.ndarray, alpha_bar_prev: float
) -> np.ndarray:
    return np.sqrt(alpha_bar_prev) * x0_hat + np.sqrt(1.0 - alpha_bar_prev) * eps_hat


def _replace_known(x0_hat: np.ndarray, known: KnownRegion) -> np.ndarray:
    # Selection instead of mask arithmetic keeps known pixels bit-identical.
    return np.where(known.mask > 0.5, known.image, x0_hat)


def ddim_step(
    denoiser: Denoiser,
    x_t: np.ndarray,
    t: int,
    t_prev: int,
    schedule: DiffusionSchedule,
) -> np.ndarray:
    """One deterministic reverse step from level t to level t_prev.

    Evaluates the denoiser once, forms the clean-image prediction, and
    recombines it with the same noise prediction at the lower level.
    """
    if not t > t_prev >= 0:
        raise ValueError(f"need t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    x0_hat, eps_hat = predict_x0(denoiser, x_t, t, schedule)
    return _ddim_combine(x0_hat, eps_hat, schedule.alpha_bars[t_prev])


def ddpm_step(
    denoiser: Denoiser,
    x_t: np.ndarray,
    t: int,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """One stochastic ancestral step from level t to t-1.

    Valid only between adjacent levels. Adds posterior noise except at
    t=1, where the mean is returned unperturbed.
    """
    if t < 1:
        raise ValueError(f"ddpm_step requires t >= 1, got {t}")
    eps_hat = denoiser.eps(x_t, t, schedule)
    beta = schedule.beta(t)
    ab_t = schedule.alpha_bars[t]
    mean = (x_t - (beta / np.sqrt(1.0 - ab_t)) * eps_hat) / np.sqrt(1.0 - beta)
    if t == 1:
        return mean
    sigma = np.sqrt(beta * (1.0 - schedule.alpha_bars[t - 1]) / (1.0 - ab_t))
    return mean + sigma * rng.standard_normal(x_t.shape)


def _require_consecutive(trajectory: Trajectory, what: str) -> None:
    if not trajectory.is_consecutive():
        raise ValueError(
            f"{what} requires a consecutive (stride-1) trajectory ending at 1"
        )


def sample(run: SamplerRun, variant: str) -> np.ndarray:
    """Unconditional generation: fold the per-step rule over the trajectory."""
    if run.known is not None:
        raise ValueError("unconditional sampling cannot take a known region")
    if variant not in ("ddpm", "ddim"):
        raise ValueError(f"unknown sampler variant {variant!r}")
    if variant == "ddpm":
        _require_consecutive(run.trajectory, "ddpm sampling")
    x = run.rng.standard_normal(run.shape)
    for t, t_prev in run.trajectory.pairs():
        if variant == "ddim":
            x = ddim_step(run.denoiser, x, t, t_prev, run.schedule)
        else:
            x = ddpm_step(run.denoiser, x, t, run.schedule, run.rng)
    return x


def repaint_ddim(
    run: SamplerRun,
    recompute_final_eps: bool = False,
    step_hook: StepHook | None = None,
) -> np.ndarray:
    """Mask-conditioned deterministic sampling with inner resampling.

    For each trajectory level t the loop repeats ``resample_count`` times:
    predict the clean image, overwrite its known region with the trusted
    values, and (except on the final inner pass) renoise the replaced
    prediction back to level t with fresh noise. The step to the next
    level reuses the noise prediction from the final inner pass, whose
    input is unchanged; ``recompute_final_eps`` forces a fresh evaluation
    instead for A/B verification (the result is identical for any pure
    denoiser).
    """
    if run.known is None:
        raise ValueError("repaint_ddim requires a known region")
    known = run.known
    ab = run.schedule.alpha_bars
    x = run.rng.standard_normal(run.shape)
    for t, t_prev in run.trajectory.pairs():
        x0_hat = eps_hat = None
        for u in range(1, run.resample_count + 1):
            x0_hat, eps_hat = predict_x0(run.denoiser, x, t, run.schedule)
            x0_hat = _replace_known(x0_hat, known)
            if u < run.resample_count:
                eps = run.rng.standard_normal(run.shape)
                x = np.sqrt(ab[t]) * x0_hat + np.sqrt(1.0 - ab[t]) * eps
        if recompute_final_eps:
            eps_hat = run.denoiser.eps(x, t, run.schedule)
        x = _ddim_combine(x0_hat, eps_hat, ab[t_prev])
        if step_hook is not None:
            step_hook(t_prev, x)
    return x


def repaint_ddpm(run: SamplerRun, step_hook: StepHook | None = None) -> np.ndarray:
    """Inpainting baseline over a consecutive ancestral chain.

    At each level the known region of the step output is overwritten with
    a forward-diffused copy of the trusted image at the lower level; the
    resampling iterations jump back up one level with a single
    forward-diffusion step and denoise again.
    """
    if run.known is None:
        raise ValueError("repaint_ddpm requires a known region")
    _require_consecutive(run.trajectory, "repaint_ddpm")
    known = run.known
    sched = run.schedule
    ab = sched.alpha_bars
    x = run.rng.standard_normal(run.shape)
    for t, t_prev in run.trajectory.pairs():
        x_prev = None
        for u in range(1, run.resample_count + 1):
            eps_known = run.rng.standard_normal(run.shape)
            x_known = (
                np.sqrt(ab[t_prev]) * known.image
                + np.sqrt(1.0 - ab[t_prev]) * eps_known
            )
            x_generated = ddpm_step(run.denoiser, x, t, sched, run.rng)
            x_prev = np.where(known.mask > 0.5, x_known, x_generated)
            if u < run.resample_count:
                beta = sched.beta(t)
                z = run.rng.standard_normal(run.shape)
                x = np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * z
        x = x_prev
        if step_hook is not None:
            step_hook(t_prev, x)
    return x

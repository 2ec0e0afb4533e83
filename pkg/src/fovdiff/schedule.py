"""Noise schedules, sampling trajectories, and forward diffusion.

The schedule fixes the per-step noise fractions beta_1..beta_T and the
cumulative signal-retention factors abar_0..abar_T, with abar_0 = 1 by
definition so that the terminal reverse step lands exactly on the clean
image manifold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

__all__ = [
    "DiffusionSchedule",
    "Trajectory",
    "linear_beta_schedule",
    "make_trajectory",
    "forward_diffuse",
]

# Relative tolerance for the cumulative-product consistency check.
_RATIO_RTOL = 1e-12


@dataclass(frozen=True)
class DiffusionSchedule:
    """Immutable diffusion noise schedule.

    Attributes:
        betas: Per-step noise fractions, shape (T,); ``betas[t-1]`` is the
            fraction added at step t, each in (0, 1).
        alpha_bars: Cumulative products ``prod_{s<=t}(1 - beta_s)``, shape
            (T+1,), indexed directly by t with ``alpha_bars[0] == 1.0``.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64)
        alpha_bars = np.array(self.alpha_bars, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if alpha_bars.shape != (betas.size + 1,):
            raise ValueError("alpha_bars must have length T + 1")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ValueError("every beta must lie in (0, 1)")
        if alpha_bars[0] != 1.0:
            raise ValueError("alpha_bars[0] must be exactly 1")
        if not np.all((alpha_bars > 0.0) & (alpha_bars <= 1.0)):
            raise ValueError("every alpha_bar must lie in (0, 1]")
        if not np.all(np.diff(alpha_bars) < 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")
        ratio = alpha_bars[1:] / alpha_bars[:-1]
        if not np.allclose(ratio, 1.0 - betas, rtol=_RATIO_RTOL, atol=0.0):
            raise ValueError("alpha_bars inconsistent with betas")
        betas.setflags(write=False)
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    @property
    def T(self) -> int:
        return self.betas.size

    def beta(self, t: int) -> float:
        """Noise fraction at step t, 1 <= t <= T."""
        if not 1 <= t <= self.T:
            raise ValueError(f"step t={t} outside 1..{self.T}")
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal retention at step t, 0 <= t <= T."""
        if not 0 <= t <= self.T:
            raise ValueError(f"step t={t} outside 0..{self.T}")
        return float(self.alpha_bars[t])


@dataclass(frozen=True)
class Trajectory:
    """Strictly decreasing sequence of noise levels visited while sampling.

    Each step t is paired with its predecessor level ``t_prev`` (the next
    element, or 0 for the final step).
    """

    steps: tuple[int, ...]

    def __post_init__(self):
        steps = tuple(int(t) for t in self.steps)
        if len(steps) == 0:
            raise ValueError("trajectory must contain at least one step")
        if steps[-1] < 1:
            raise ValueError("trajectory steps must be >= 1")
        if any(nxt >= prev for prev, nxt in zip(steps[:-1], steps[1:])):
            raise ValueError("trajectory steps must be strictly decreasing")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    def pairs(self) -> Iterator[tuple[int, int]]:
        """Yield (t, t_prev) pairs in sampling order; the last t_prev is 0."""
        for i, t in enumerate(self.steps):
            t_prev = self.steps[i + 1] if i + 1 < len(self.steps) else 0
            yield t, t_prev

    def is_consecutive(self) -> bool:
        """True when the trajectory is stride-1 and ends at step 1."""
        return self.steps[-1] == 1 and all(
            a - b == 1 for a, b in zip(self.steps[:-1], self.steps[1:])
        )


def linear_beta_schedule(
    T: int, beta_start: float = 1e-4, beta_end: float = 0.02
) -> DiffusionSchedule:
    """Build a schedule with betas linearly spaced from beta_start to beta_end.

    Args:
        T: Number of diffusion steps, >= 1.
        beta_start: Noise fraction at t=1.
        beta_end: Noise fraction at t=T; requires
            ``0 < beta_start <= beta_end < 1``.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bars = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    return DiffusionSchedule(betas=betas, alpha_bars=alpha_bars)


def make_trajectory(T: int, n_steps: int) -> Trajectory:
    """Uniformly strided trajectory of n_steps levels ending at the stride.

    The stride is ``T // n_steps`` and the visited levels are
    ``T, T - s, T - 2s, ...``; when n_steps divides T the smallest level is
    exactly s. Levels are dropped from the low end when it does not.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if n_steps > T:
        raise ValueError(f"n_steps={n_steps} exceeds T={T}")
    stride = T // n_steps
    steps = tuple(T - stride * k for k in range(n_steps))
    return Trajectory(steps=steps)


def forward_diffuse(
    x0: np.ndarray, t: int, eps: np.ndarray, schedule: DiffusionSchedule
) -> np.ndarray:
    """Diffuse a clean grid to noise level t with the given noise draw.

    Returns ``sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps`` elementwise.
    """
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    ab = schedule.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

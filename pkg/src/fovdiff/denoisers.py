"""Denoiser interface and exact analytic denoisers for Gaussian-mixture priors.

A denoiser predicts the noise component of a diffused grid. The mixture
denoisers here are closed-form posterior computations, so every sampler in
the engine can be verified against an exact reference instead of a trained
approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from .schedule import DiffusionSchedule

__all__ = [
    "Denoiser",
    "GaussianMixture",
    "CorrelatedGaussian2D",
    "predict_x0",
    "gmm_posterior_x0_mean",
    "gmm_eps",
]


class Denoiser(Protocol):
    """Anything that predicts the noise in a diffused grid.

    Implementations must be pure: identical (x_t, t) inputs produce
    identical outputs. The schedule is passed so implementations can look
    up the signal retention for step t themselves.
    """

    def eps(
        self, x_t: np.ndarray, t: int, schedule: DiffusionSchedule
    ) -> np.ndarray: ...


def predict_x0(
    denoiser: Denoiser, x_t: np.ndarray, t: int, schedule: DiffusionSchedule
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate the clean grid from a noisy one at step t.

    Returns ``(x0_hat, eps_hat)`` where ``x0_hat = (x_t - sqrt(1 - abar_t)
    * eps_hat) / sqrt(abar_t)``. The noise prediction is returned alongside
    so callers can reuse the evaluation instead of re-invoking the denoiser.
    """
    if not 1 <= t <= schedule.T:
        raise ValueError(f"predict_x0 requires 1 <= t <= T, got t={t}")
    eps_hat = denoiser.eps(x_t, t, schedule)
    ab = schedule.alpha_bars[t]
    x0_hat = (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
    return x0_hat, eps_hat


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of diagonal-covariance Gaussians used as an exact prior.

    Attributes:
        weights: Component weights, shape (K,), positive, summing to 1.
        means: Component means, shape (K, d).
        variances: Per-dimension variances, shape (K, d), all positive.

    A prior with d == 1 is applied elementwise to grids of any size (an
    independent copy of the scalar prior per pixel); otherwise the grid is
    treated as a single point of dimension d.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.array(self.weights, dtype=np.float64))
        mu = np.atleast_2d(np.array(self.means, dtype=np.float64))
        var = np.atleast_2d(np.array(self.variances, dtype=np.float64))
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty 1-D array")
        if mu.shape[0] != w.size or var.shape != mu.shape:
            raise ValueError(
                f"component shape mismatch: weights {w.shape}, means "
                f"{mu.shape}, variances {var.shape}"
            )
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        if np.any(var <= 0.0):
            raise ValueError("variances must be positive")
        for a in (w, mu, var):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def standard_normal(cls, dim: int = 1) -> "GaussianMixture":
        """Single zero-mean unit-variance component of the given dimension."""
        return cls(
            weights=np.ones(1),
            means=np.zeros((1, dim)),
            variances=np.ones((1, dim)),
        )

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n points from the mixture, shape (n, d)."""
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp]) * z

    def eps(
        self, x_t: np.ndarray, t: int, schedule: DiffusionSchedule
    ) -> np.ndarray:
        return gmm_eps(self, x_t, schedule.alpha_bar(t))


def _gmm_modes(prior: GaussianMixture, flat: np.ndarray) -> bool:
    """True for single-point mode, False for elementwise scalar-prior mode."""
    if flat.size == prior.dim:
        return True
    if prior.dim == 1:
        return False
    raise ValueError(
        f"grid size {flat.size} incompatible with prior dimension {prior.dim}"
    )


def gmm_posterior_x0_mean(
    prior: GaussianMixture, x_t: np.ndarray, alpha_bar: float
) -> np.ndarray:
    """Exact posterior mean of the clean signal given a diffused observation.

    Under ``x_t = sqrt(ab) * x0 + sqrt(1 - ab) * eps`` with ``x0 ~ prior``,
    each component k contributes responsibility proportional to
    ``w_k * N(x_t; sqrt(ab) mu_k, ab var_k + 1 - ab)`` and the conjugate
    posterior mean ``mu_k + sqrt(ab) var_k / (ab var_k + 1 - ab) *
    (x_t - sqrt(ab) mu_k)``. Responsibilities use log-sum-exp.
    """
    if not 0.0 < alpha_bar <= 1.0:
        raise ValueError(f"alpha_bar must lie in (0, 1], got {alpha_bar}")
    x_t = np.asarray(x_t, dtype=np.float64)
    flat = x_t.reshape(-1)
    point_mode = _gmm_modes(prior, flat)

    sab = np.sqrt(alpha_bar)
    s = alpha_bar * prior.variances + (1.0 - alpha_bar)  # (K, d) marginal var
    if point_mode:
        resid = flat[None, :] - sab * prior.means  # (K, d)
        log_lik = -0.5 * np.sum(np.log(2.0 * np.pi * s) + resid**2 / s, axis=1)
        log_r = np.log(prior.weights) + log_lik  # (K,)
        r = np.exp(log_r - logsumexp(log_r))  # (K,)
        comp_mean = prior.means + (sab * prior.variances / s) * resid  # (K, d)
        out = r @ comp_mean
    else:
        # Elementwise: every pixel is an independent copy of the 1-D prior.
        resid = flat[None, :] - sab * prior.means  # (K, n)
        log_r = (
            np.log(prior.weights)[:, None]
            - 0.5 * (np.log(2.0 * np.pi * s) + resid**2 / s)
        )  # (K, n)
        r = np.exp(log_r - logsumexp(log_r, axis=0, keepdims=True))
        comp_mean = prior.means + (sab * prior.variances / s) * resid
        out = np.sum(r * comp_mean, axis=0)
    return out.reshape(x_t.shape)


def gmm_eps(
    prior: GaussianMixture, x_t: np.ndarray, alpha_bar: float
) -> np.ndarray:
    """Noise prediction implied by the exact posterior mean.

    Undefined at alpha_bar = 1 (no noise to predict); callers must not
    request a noise prediction at step 0.
    """
    if not 0.0 < alpha_bar < 1.0:
        raise ValueError(
            f"noise prediction requires 0 < alpha_bar < 1, got {alpha_bar}"
        )
    x0_mean = gmm_posterior_x0_mean(prior, x_t, alpha_bar)
    return (np.asarray(x_t, dtype=np.float64) - np.sqrt(alpha_bar) * x0_mean) / np.sqrt(
        1.0 - alpha_bar
    )


@dataclass(frozen=True)
class CorrelatedGaussian2D:
    """Single full-covariance Gaussian prior in dimension 2.

    The smallest oracle with cross-pixel dependence: the posterior mean is
    the 2x2 conjugate formula ``mu + sqrt(ab) Cov A^-1 (x - sqrt(ab) mu)``
    with ``A = ab Cov + (1 - ab) I``.
    """

    mean: np.ndarray
    cov: np.ndarray
    _gain_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(2)
        cov = np.array(self.cov, dtype=np.float64).reshape(2, 2)
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        # 2x2 positive definiteness: positive diagonal and determinant.
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        if cov[0, 0] <= 0.0 or det <= 0.0:
            raise ValueError("covariance must be positive definite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_correlation(cls, correlation: float) -> "CorrelatedGaussian2D":
        """Zero-mean, unit-variance pair with the given correlation."""
        return cls(
            mean=np.zeros(2),
            cov=np.array([[1.0, correlation], [correlation, 1.0]]),
        )

    def _gain(self, alpha_bar: float) -> np.ndarray:
        gain = self._gain_cache.get(alpha_bar)
        if gain is None:
            marginal = alpha_bar * self.cov + (1.0 - alpha_bar) * np.eye(2)
            gain = np.sqrt(alpha_bar) * self.cov @ np.linalg.inv(marginal)
            self._gain_cache[alpha_bar] = gain
        return gain

    def posterior_x0_mean(self, x_t: np.ndarray, alpha_bar: float) -> np.ndarray:
        if not 0.0 < alpha_bar <= 1.0:
            raise ValueError(f"alpha_bar must lie in (0, 1], got {alpha_bar}")
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.size != 2:
            raise ValueError(f"expected a 2-element grid, got shape {x_t.shape}")
        resid = x_t.reshape(2) - np.sqrt(alpha_bar) * self.mean
        out = self.mean + self._gain(alpha_bar) @ resid
        return out.reshape(x_t.shape)

    def eps(
        self, x_t: np.ndarray, t: int, schedule: DiffusionSchedule
    ) -> np.ndarray:
        alpha_bar = schedule.alpha_bar(t)
        if not 0.0 < alpha_bar < 1.0:
            raise ValueError(
                f"noise prediction requires 0 < alpha_bar < 1, got {alpha_bar}"
            )
        x0_mean = self.posterior_x0_mean(x_t, alpha_bar)
        x_t = np.asarray(x_t, dtype=np.float64)
        return (x_t - np.sqrt(alpha_bar) * x0_mean) / np.sqrt(1.0 - alpha_bar)

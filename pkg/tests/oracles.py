"""Independent reference computations the library is checked against.

Everything here is deliberately brute force (quadrature, dense grids,
finite differences) and shares no code with the implementation paths it
verifies.
"""

import numpy as np


def _gauss(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def posterior_mean_quadrature_1d(
    weights, means, variances, x_t, alpha_bar, lo=-20.0, hi=20.0, n=100_001
):
    """E[x0 | x_t] for a 1-D mixture prior via trapezoid integration."""
    grid = np.linspace(lo, hi, n)
    prior = np.zeros_like(grid)
    for w, m, v in zip(weights, means, variances):
        prior += w * _gauss(grid, m, v)
    likelihood = _gauss(x_t, np.sqrt(alpha_bar) * grid, 1.0 - alpha_bar)
    joint = prior * likelihood
    return np.trapezoid(grid * joint, grid) / np.trapezoid(joint, grid)


def posterior_mean_quadrature_2d(
    mean, cov, x_t, alpha_bar, lo=-8.0, hi=8.0, n=801
):
    """E[x0 | x_t] for a full-covariance 2-D Gaussian prior on a dense grid."""
    axis = np.linspace(lo, hi, n)
    g0, g1 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([g0.ravel(), g1.ravel()], axis=1)

    diff = pts - np.asarray(mean)
    cov_inv = np.linalg.inv(cov)
    prior = np.exp(-0.5 * np.einsum("ni,ij,nj->n", diff, cov_inv, diff))

    resid = np.asarray(x_t).reshape(1, 2) - np.sqrt(alpha_bar) * pts
    likelihood = np.exp(-0.5 * np.sum(resid**2, axis=1) / (1.0 - alpha_bar))

    joint = prior * likelihood
    total = joint.sum()
    return np.array(
        [(pts[:, 0] * joint).sum() / total, (pts[:, 1] * joint).sum() / total]
    )


def finite_difference_gradient(fn, params_vector, step=1e-4):
    """Central finite differences of a scalar function of a flat vector."""
    grad = np.empty_like(params_vector)
    for i in range(params_vector.size):
        plus = params_vector.copy()
        plus[i] += step
        minus = params_vector.copy()
        minus[i] -= step
        grad[i] = (fn(plus) - fn(minus)) / (2.0 * step)
    return grad

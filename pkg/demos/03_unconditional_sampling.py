"""
Ancestral and deterministic reverse sampling
============================================

Both samplers share one denoiser and one schedule. The ancestral chain
walks every level with fresh noise; the deterministic variant jumps along
a 50-level trajectory with no noise at all, trading a little statistical
fidelity for a 20x shorter run.

With an exact two-mode denoiser the sampled histograms can be compared
against the true prior density directly.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fovdiff import (
    GaussianMixture,
    SamplerRun,
    linear_beta_schedule,
    make_trajectory,
    sample,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

prior = GaussianMixture(
    weights=[0.35, 0.65], means=[[-2.5], [2.0]], variances=[[0.5], [1.0]]
)
n = 20_000  # one grid of iid scalar chains

# Deterministic: 50 of 1000 levels.
run = SamplerRun(
    denoiser=prior,
    schedule=linear_beta_schedule(1000),
    trajectory=make_trajectory(1000, 50),
    rng=np.random.default_rng(0),
    shape=(n,),
)
ddim_samples = sample(run, "ddim")

# Ancestral: every one of the same 1000 levels. Wide priors need the full
# schedule for the terminal marginal to reach the unit normal the chain
# starts from.
run = SamplerRun(
    denoiser=prior,
    schedule=linear_beta_schedule(1000),
    trajectory=make_trajectory(1000, 1000),
    rng=np.random.default_rng(0),
    shape=(n,),
)
ddpm_samples = sample(run, "ddpm")

grid = np.linspace(-6, 6, 400)
density = sum(
    w * np.exp(-0.5 * (grid - m) ** 2 / v) / np.sqrt(2 * np.pi * v)
    for w, m, v in zip(prior.weights, prior.means[:, 0], prior.variances[:, 0])
)

fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
for ax, data, title in (
    (axes[0], ddpm_samples, "ancestral, all 1000 steps"),
    (axes[1], ddim_samples, "deterministic, 50 of 1000 steps"),
):
    ax.hist(data, bins=80, density=True, alpha=0.6, label="samples")
    ax.plot(grid, density, "k-", lw=1.5, label="true prior")
    ax.set_title(title)
    ax.legend()
fig.tight_layout()
fig.savefig(OUT / "unconditional_sampling.png", dpi=120)
print(f"wrote {OUT / 'unconditional_sampling.png'}")

for name, data in (("ancestral", ddpm_samples), ("deterministic", ddim_samples)):
    left = float(np.mean(data < -0.5))
    print(f"{name}: mean {data.mean():+.3f}, std {data.std():.3f}, left-mode mass {left:.3f} (true 0.35)")

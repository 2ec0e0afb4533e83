"""
Noise schedules and forward diffusion
=====================================

A diffusion schedule fixes how quickly signal is traded for noise. This
script builds the default linear schedule, plots the cumulative
signal-retention curve, and walks a synthetic body phantom forward
through increasing noise levels until nothing of the anatomy is left.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fovdiff import forward_diffuse, generate_phantom, linear_beta_schedule, make_trajectory

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# The default schedule: 1000 steps, betas from 1e-4 to 0.02.
schedule = linear_beta_schedule(1000)
print(f"T = {schedule.T}")
print(f"signal retention at t=1000: {schedule.alpha_bars[1000]:.2e}")

# A 50-level trajectory visits every 20th step, ending at level 20 so the
# final deterministic step lands exactly on the clean-image manifold.
trajectory = make_trajectory(1000, 50)
print(f"trajectory: {trajectory.steps[:3]} ... {trajectory.steps[-3:]}")

# Forward-diffuse one phantom at a few levels.
rng = np.random.default_rng(7)
phantom = generate_phantom(rng)
levels = [0, 50, 200, 500, 1000]

fig, axes = plt.subplots(2, len(levels), figsize=(3 * len(levels), 6.4))
for ax, t in zip(axes[0], levels):
    noisy = forward_diffuse(phantom.image, t, rng.standard_normal(phantom.image.shape), schedule)
    ax.imshow(noisy, cmap="gray", vmin=-1.5, vmax=1.5)
    ax.set_title(f"t = {t}  (retention {schedule.alpha_bars[t]:.3f})")
    ax.axis("off")

axes[1, 0].plot(schedule.alpha_bars)
axes[1, 0].set_xlabel("t")
axes[1, 0].set_ylabel("cumulative signal retention")
for ax in axes[1, 1:]:
    ax.axis("off")
fig.tight_layout()
fig.savefig(OUT / "forward_diffusion.png", dpi=120)
print(f"wrote {OUT / 'forward_diffusion.png'}")

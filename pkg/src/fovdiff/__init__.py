"""fovdiff: a mask-conditioned diffusion sampling engine.

Numpy-based implementation of ancestral and deterministic reverse
diffusion with repaint-style known-region conditioning, exact
Gaussian-mixture denoisers for oracle-grade verification, a small
trainable MLP denoiser, and a synthetic-phantom harness for measuring
field-of-view completion quality.
"""

from .schedule import (
    DiffusionSchedule,
    Trajectory,
    linear_beta_schedule,
    make_trajectory,
    forward_diffuse,
)
from .denoisers import (
    Denoiser,
    GaussianMixture,
    CorrelatedGaussian2D,
    predict_x0,
    gmm_posterior_x0_mean,
    gmm_eps,
)
from .mlp import (
    MlpParams,
    TrainConfig,
    time_embedding,
    init_mlp,
    mlp_eps,
    loss_and_grad,
    batch_loss_and_grad,
    train,
    save_checkpoint,
    load_checkpoint,
)
from .samplers import (
    KnownRegion,
    SamplerRun,
    CountingRng,
    ddim_step,
    ddpm_step,
    sample,
    repaint_ddim,
    repaint_ddpm,
)
from .phantom import (
    PhantomConfig,
    Phantom,
    TruncationConfig,
    circular_fov_mask,
    apply_truncation,
    generate_phantom,
    tci,
    sample_truncation,
    build_dataset,
    load_manifest,
)
from .metrics import (
    SatRecord,
    AgreementReport,
    sat_area,
    region_error,
    sample_moments,
    compute_report,
    evaluate_dataset,
)
from .gridio import GridFormatError, read_grid, write_grid
from .config import (
    ConfigError,
    RunConfig,
    parse_config,
    default_config,
    normalize_hu,
    denormalize_hu,
    make_denoiser,
)

__version__ = "0.1.0"

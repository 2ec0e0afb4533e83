"""Synthetic body phantoms, field-of-view masks, and truncation simulation.

A phantom is an elliptical "body" with a subcutaneous fat ring and a soft
tissue interior on an air background, in normalized intensity [-1, 1],
together with an exact per-pixel label map. Circular FOV masks truncate
the phantom the way a scanner's reconstruction circle truncates anatomy,
and the truncation index measures how much tissue the mask cuts off.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .gridio import write_grid

__all__ = [
    "PhantomConfig",
    "PhantomGeometry",
    "Phantom",
    "TruncationConfig",
    "circular_fov_mask",
    "apply_truncation",
    "generate_phantom",
    "tci",
    "sample_truncation",
    "build_dataset",
    "load_manifest",
]

LABEL_BACKGROUND = 0
LABEL_SOFT = 1
LABEL_FAT = 2

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class PhantomConfig:
    """Geometry ranges and intensity bands for phantom generation.

    Lengths are in pixels. The fat and soft-tissue bands must be disjoint
    and sit above the background level so the tissue classes stay
    separable by intensity.
    """

    height: int = 64
    width: int = 64
    semi_axis_range: tuple[float, float] = (20.0, 28.0)
    fat_thickness_range: tuple[float, float] = (1.0, 3.0)
    center_jitter: float = 2.0
    background_level: float = -1.0
    fat_band: tuple[float, float] = (-0.3, -0.1)
    soft_band: tuple[float, float] = (0.0, 0.2)
    noise_sigma: float = 0.002

    def __post_init__(self):
        if self.height < 4 or self.width < 4:
            raise ValueError("grid must be at least 4x4")
        lo, hi = self.semi_axis_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad semi_axis_range {self.semi_axis_range}")
        tlo, thi = self.fat_thickness_range
        if not 0 <= tlo <= thi < lo:
            raise ValueError(
                f"fat thickness range {self.fat_thickness_range} must stay "
                f"below the smallest semi-axis {lo}"
            )
        half = (min(self.height, self.width) - 1) / 2.0
        if self.center_jitter + hi > half - 0.5:
            raise ValueError(
                f"ellipse (axis up to {hi}, jitter {self.center_jitter}) "
                f"does not fit a {self.height}x{self.width} grid with margin"
            )
        if not (
            self.background_level
            < self.fat_band[0]
            < self.fat_band[1]
            < self.soft_band[0]
            < self.soft_band[1]
        ):
            raise ValueError("intensity bands must be disjoint and ordered")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @classmethod
    def scaled(cls, height: int, width: int, **overrides) -> "PhantomConfig":
        """Defaults proportional to the grid, clamped to stay feasible.

        The fat ring never thins below one pixel, so small grids keep a
        measurable subcutaneous layer.
        """
        m = min(height, width)
        jitter = max(0.5, m / 32.0)
        half = (m - 1) / 2.0
        axis_hi = min(28.0 * m / 64.0, half - 0.5 - jitter)
        axis_lo = axis_hi * (20.0 / 28.0)
        thickness = (max(1.0, m / 64.0), min(max(1.6, 3.0 * m / 64.0), 0.45 * axis_lo))
        defaults = dict(
            height=height,
            width=width,
            semi_axis_range=(axis_lo, axis_hi),
            fat_thickness_range=thickness,
            center_jitter=jitter,
        )
        defaults.update(overrides)
        return cls(**defaults)


@dataclass(frozen=True)
class PhantomGeometry:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    fat_thickness: float


@dataclass(frozen=True)
class Phantom:
    """Image, exact label map, and the geometry that produced them."""

    image: np.ndarray
    labels: np.ndarray
    geometry: PhantomGeometry

    def __post_init__(self):
        if self.image.shape != self.labels.shape:
            raise ValueError("image and labels must share a shape")
        self.image.setflags(write=False)
        self.labels.setflags(write=False)


def circular_fov_mask(
    height: int, width: int, center: tuple[float, float], radius: float
) -> np.ndarray:
    """Binary mask of pixels whose centers fall inside the FOV circle."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    dist2 = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    return (dist2 <= radius**2).astype(np.float64)


def apply_truncation(
    image: np.ndarray, mask: np.ndarray, fill: float
) -> np.ndarray:
    """Replace everything outside the mask with the fill value."""
    image = np.asarray(image)
    mask = np.asarray(mask)
    if image.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: image {image.shape} vs mask {mask.shape}"
        )
    return np.where(mask > 0.5, image, np.float64(fill))


def generate_phantom(
    rng: np.random.Generator, config: PhantomConfig | None = None
) -> Phantom:
    """Draw a random phantom: body ellipse, fat ring, textured interior.

    The fat ring hugs the inside of the body boundary with the drawn
    thickness. Per-pixel base intensities are uniform in the label's band;
    Gaussian texture noise is added to tissue only, and the noiseless base
    is asserted to stay inside its band.
    """
    config = PhantomConfig() if config is None else config
    h, w = config.height, config.width
    cr = (h - 1) / 2.0 + rng.uniform(-config.center_jitter, config.center_jitter)
    cc = (w - 1) / 2.0 + rng.uniform(-config.center_jitter, config.center_jitter)
    ax_r = rng.uniform(*config.semi_axis_range)
    ax_c = rng.uniform(*config.semi_axis_range)
    thickness = rng.uniform(*config.fat_thickness_range)
    if (
        cr - ax_r < 0.5
        or cr + ax_r > h - 1.5
        or cc - ax_c < 0.5
        or cc + ax_c > w - 1.5
    ):
        raise ValueError("phantom ellipse exceeds the grid")

    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    body = ((rows - cr) / ax_r) ** 2 + ((cols - cc) / ax_c) ** 2 <= 1.0
    interior = ((rows - cr) / (ax_r - thickness)) ** 2 + (
        (cols - cc) / (ax_c - thickness)
    ) ** 2 <= 1.0
    fat = body & ~interior

    labels = np.zeros((h, w), dtype=np.int32)
    labels[interior] = LABEL_SOFT
    labels[fat] = LABEL_FAT

    base = np.full((h, w), config.background_level, dtype=np.float64)
    base[fat] = rng.uniform(*config.fat_band, size=int(fat.sum()))
    base[interior] = rng.uniform(*config.soft_band, size=int(interior.sum()))
    assert np.all(
        (base[fat] >= config.fat_band[0]) & (base[fat] <= config.fat_band[1])
    ), "fat base intensity escaped its band"
    assert np.all(
        (base[interior] >= config.soft_band[0])
        & (base[interior] <= config.soft_band[1])
    ), "soft-tissue base intensity escaped its band"

    image = base.copy()
    tissue = labels > 0
    image[tissue] += config.noise_sigma * rng.standard_normal(int(tissue.sum()))
    image = np.clip(image, -1.0, 1.0)

    return Phantom(
        image=image,
        labels=labels,
        geometry=PhantomGeometry(
            center=(float(cr), float(cc)),
            semi_axes=(float(ax_r), float(ax_c)),
            fat_thickness=float(thickness),
        ),
    )


def tci(labels: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of tissue pixels the mask truncates, in [0, 1]."""
    labels = np.asarray(labels)
    mask = np.asarray(mask)
    if labels.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: labels {labels.shape} vs mask {mask.shape}"
        )
    tissue = labels > 0
    total = int(tissue.sum())
    if total == 0:
        raise ValueError("phantom has no tissue pixels")
    outside = int((tissue & (mask < 0.5)).sum())
    return outside / total


@dataclass(frozen=True)
class TruncationConfig:
    """FOV circle sampling: radius range and center jitter as grid fractions.

    When ``tci_range`` is set, circles are redrawn until the truncation
    index lands inside it.
    """

    radius_frac_range: tuple[float, float] = (0.30, 0.55)
    center_jitter_frac: float = 0.15
    tci_range: tuple[float, float] | None = None
    max_tries: int = 100

    def __post_init__(self):
        lo, hi = self.radius_frac_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad radius_frac_range {self.radius_frac_range}")
        if not 0 <= self.center_jitter_frac <= 0.5:
            raise ValueError("center_jitter_frac must lie in [0, 0.5]")
        if self.tci_range is not None and not (
            0 <= self.tci_range[0] < self.tci_range[1] <= 1
        ):
            raise ValueError(f"bad tci_range {self.tci_range}")
        if self.max_tries < 1:
            raise ValueError("max_tries must be >= 1")


def sample_truncation(
    rng: np.random.Generator,
    labels: np.ndarray,
    config: TruncationConfig | None = None,
) -> tuple[np.ndarray, float]:
    """Draw an FOV mask for a phantom; returns (mask, truncation index)."""
    config = TruncationConfig() if config is None else config
    h, w = labels.shape
    scale = min(h, w)
    jitter = config.center_jitter_frac * w
    for _ in range(config.max_tries):
        cr = (h - 1) / 2.0 + rng.uniform(-jitter, jitter)
        cc = (w - 1) / 2.0 + rng.uniform(-jitter, jitter)
        radius = scale * rng.uniform(*config.radius_frac_range)
        mask = circular_fov_mask(h, w, (cr, cc), radius)
        index = tci(labels, mask)
        if config.tci_range is None or (
            config.tci_range[0] <= index <= config.tci_range[1]
        ):
            return mask, index
    raise RuntimeError(
        f"no truncation with tci in {config.tci_range} after "
        f"{config.max_tries} tries"
    )


def _build_sample(args) -> dict:
    (out_dir, sample_id, seed, phantom_config, trunc_config, fill) = args
    rng = np.random.default_rng(seed)
    phantom = generate_phantom(rng, phantom_config)
    mask, index = sample_truncation(rng, phantom.labels, trunc_config)
    truncated = apply_truncation(phantom.image, mask, fill)

    out = Path(out_dir)
    write_grid(out / f"{sample_id}_image.difg", phantom.image.astype(np.float32))
    write_grid(out / f"{sample_id}_labels.difg", phantom.labels.astype(np.float32))
    write_grid(out / f"{sample_id}_mask.difg", mask.astype(np.float32))
    write_grid(out / f"{sample_id}_truncated.difg", truncated.astype(np.float32))
    return {
        "id": sample_id,
        "seed": int(seed),
        "geometry": asdict(phantom.geometry),
        "tci": index,
    }


def build_dataset(
    root,
    n: int,
    phantom_config: PhantomConfig | None = None,
    truncation_config: TruncationConfig | None = None,
    seed: int = 0,
    fill: float = -1.0,
    split: str = "test",
    workers: int = 1,
) -> dict:
    """Generate a truncation dataset split and write its manifest.

    Every sample gets its own seed derived from the root seed, so the
    artifacts are identical regardless of worker count or scheduling.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    phantom_config = PhantomConfig() if phantom_config is None else phantom_config
    truncation_config = (
        TruncationConfig() if truncation_config is None else truncation_config
    )
    out_dir = Path(root) / split
    out_dir.mkdir(parents=True, exist_ok=True)

    child_seeds = np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)
    tasks = [
        (
            str(out_dir),
            f"s{i:04d}",
            int(child_seeds[i]),
            phantom_config,
            truncation_config,
            fill,
        )
        for i in range(n)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_build_sample, tasks))
    else:
        records = [_build_sample(t) for t in tasks]
    records.sort(key=lambda r: r["id"])

    manifest = {
        "format": "fovdiff-dataset",
        "version": 1,
        "split": split,
        "seed": int(seed),
        "fill": fill,
        "grid": [phantom_config.height, phantom_config.width],
        "fat_band": list(phantom_config.fat_band),
        "samples": records,
    }
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_manifest(path) -> dict:
    """Read a dataset manifest; accepts the split directory or the file."""
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    manifest = json.loads(p.read_text())
    if manifest.get("format") != "fovdiff-dataset":
        raise ValueError(f"{p}: not a dataset manifest")
    return manifest

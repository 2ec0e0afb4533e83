import json

import numpy as np
import pytest

from fovdiff import (
    PhantomConfig,
    TruncationConfig,
    apply_truncation,
    build_dataset,
    circular_fov_mask,
    generate_phantom,
    load_manifest,
    read_grid,
    sample_truncation,
    tci,
)


class TestCircularFovMask:
    def test_huge_radius_covers_everything(self):
        mask = circular_fov_mask(32, 48, (16.0, 24.0), 1000.0)
        assert mask.sum() == 32 * 48

    def test_tiny_radius_between_pixels_is_empty(self):
        mask = circular_fov_mask(64, 64, (31.5, 31.5), 0.4)
        assert mask.sum() == 0

    def test_area_close_to_continuous_circle(self):
        mask = circular_fov_mask(64, 64, (32.0, 32.0), 16.0)
        assert mask.sum() == pytest.approx(np.pi * 16.0**2, rel=0.02)

    def test_values_binary(self):
        mask = circular_fov_mask(16, 16, (8.0, 8.0), 5.0)
        assert set(np.unique(mask)) <= {0.0, 1.0}

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            circular_fov_mask(8, 8, (4.0, 4.0), 0.0)


class TestApplyTruncation:
    def test_full_mask_is_identity(self, rng):
        image = rng.uniform(-1, 1, (10, 10))
        out = apply_truncation(image, np.ones_like(image), -1.0)
        assert np.array_equal(out, image)

    def test_empty_mask_is_constant_fill(self):
        out = apply_truncation(np.zeros((4, 4)), np.zeros((4, 4)), -1.0)
        assert np.all(out == -1.0)

    def test_known_region_bit_identical(self, rng):
        phantom = generate_phantom(rng)
        mask = circular_fov_mask(64, 64, (32, 32), 20.0)
        out = apply_truncation(phantom.image, mask, -1.0)
        assert np.array_equal(out[mask > 0.5], phantom.image[mask > 0.5])

    def test_idempotent(self, rng):
        image = rng.uniform(-1, 1, (8, 8))
        mask = circular_fov_mask(8, 8, (4, 4), 3.0)
        once = apply_truncation(image, mask, -1.0)
        twice = apply_truncation(once, mask, -1.0)
        assert np.array_equal(once, twice)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            apply_truncation(np.zeros((4, 4)), np.zeros((4, 5)), -1.0)


class TestGeneratePhantom:
    def test_deterministic_from_seed(self):
        a = generate_phantom(np.random.default_rng(5))
        b = generate_phantom(np.random.default_rng(5))
        assert a.image.tobytes() == b.image.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()
        assert a.geometry == b.geometry

    def test_zero_fat_thickness_means_no_fat_label(self, rng):
        config = PhantomConfig(fat_thickness_range=(0.0, 0.0))
        phantom = generate_phantom(rng, config)
        assert (phantom.labels == 2).sum() == 0
        assert (phantom.labels == 1).sum() > 0

    def test_fat_fraction_bounds_default_config(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            phantom = generate_phantom(rng)
            body = (phantom.labels > 0).sum()
            fraction = (phantom.labels == 2).sum() / body
            assert 0.05 <= fraction <= 0.30

    def test_intensities_in_normalized_range(self, rng):
        phantom = generate_phantom(rng)
        assert phantom.image.min() >= -1.0
        assert phantom.image.max() <= 1.0

    def test_labels_and_bands_consistent(self, rng):
        config = PhantomConfig()
        phantom = generate_phantom(rng, config)
        fat_values = phantom.image[phantom.labels == 2]
        pad = 6 * config.noise_sigma
        assert fat_values.min() >= config.fat_band[0] - pad
        assert fat_values.max() <= config.fat_band[1] + pad
        background = phantom.image[phantom.labels == 0]
        assert np.all(background == config.background_level)

    def test_fat_ring_inside_body(self, rng):
        phantom = generate_phantom(rng)
        # Fat pixels must never touch the grid border of the body's bounding
        # region: every fat pixel must have a body pixel between it and the
        # ellipse exterior is hard to check directly, but the ring must not
        # contain the ellipse center.
        cr, cc = phantom.geometry.center
        assert phantom.labels[int(round(cr)), int(round(cc))] == 1

    def test_infeasible_config_rejected(self):
        with pytest.raises(ValueError):
            PhantomConfig(height=32, width=32, semi_axis_range=(20.0, 28.0))

    def test_scaled_configs_are_feasible(self):
        for size in (12, 16, 24, 64, 128):
            config = PhantomConfig.scaled(size, size)
            generate_phantom(np.random.default_rng(0), config)


class TestTci:
    def test_full_fov_means_zero(self, rng):
        phantom = generate_phantom(rng)
        assert tci(phantom.labels, np.ones_like(phantom.labels, dtype=float)) == 0.0

    def test_exact_ratio(self):
        labels = np.zeros((40, 40), dtype=int)
        labels[:25, :40] = 1  # 1000 tissue pixels
        mask = np.ones((40, 40))
        mask[:5, :20] = 0.0  # 100 tissue pixels outside
        assert tci(labels, mask) == pytest.approx(0.1, abs=1e-15)

    def test_complement_identity(self, rng):
        phantom = generate_phantom(rng)
        mask = circular_fov_mask(64, 64, (30.0, 34.0), 18.0)
        assert tci(phantom.labels, 1.0 - mask) == pytest.approx(
            1.0 - tci(phantom.labels, mask), abs=1e-12
        )

    def test_zero_tissue_rejected(self):
        with pytest.raises(ValueError):
            tci(np.zeros((8, 8), dtype=int), np.ones((8, 8)))

    def test_monotone_in_radius(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            phantom = generate_phantom(rng)
            center = (31.0, 33.0)
            radii = np.linspace(4.0, 50.0, 20)
            values = [
                tci(phantom.labels, circular_fov_mask(64, 64, center, r))
                for r in radii
            ]
            assert all(a >= b for a, b in zip(values, values[1:]))


class TestSampleTruncation:
    def test_respects_tci_band(self):
        rng = np.random.default_rng(3)
        config = TruncationConfig(tci_range=(0.05, 0.3))
        for _ in range(20):
            phantom = generate_phantom(rng)
            mask, index = sample_truncation(rng, phantom.labels, config)
            assert 0.05 <= index <= 0.3
            assert index == tci(phantom.labels, mask)

    def test_impossible_band_raises(self, rng):
        phantom = generate_phantom(rng)
        config = TruncationConfig(
            radius_frac_range=(0.52, 0.55), tci_range=(0.99, 1.0), max_tries=5
        )
        with pytest.raises(RuntimeError, match="after 5 tries"):
            sample_truncation(rng, phantom.labels, config)


class TestBuildDataset:
    def test_manifest_and_files(self, tmp_path):
        manifest = build_dataset(tmp_path, n=4, seed=11, split="demo")
        split_dir = tmp_path / "demo"
        assert (split_dir / "manifest.json").exists()
        ids = [s["id"] for s in manifest["samples"]]
        assert ids == sorted(ids) and len(ids) == 4
        for sample_id in ids:
            for kind in ("image", "labels", "mask", "truncated"):
                assert (split_dir / f"{sample_id}_{kind}.difg").exists()

    def test_manifest_tci_matches_files(self, tmp_path):
        manifest = build_dataset(tmp_path, n=3, seed=2)
        split_dir = tmp_path / "test"
        for entry in manifest["samples"]:
            labels = read_grid(split_dir / f"{entry['id']}_labels.difg")
            mask = read_grid(split_dir / f"{entry['id']}_mask.difg")
            assert tci(labels.astype(int), mask) == entry["tci"]

    def test_deterministic_and_worker_independent(self, tmp_path):
        build_dataset(tmp_path / "a", n=4, seed=7, workers=1)
        build_dataset(tmp_path / "b", n=4, seed=7, workers=2)
        files_a = sorted((tmp_path / "a" / "test").iterdir())
        files_b = sorted((tmp_path / "b" / "test").iterdir())
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes()

    def test_load_manifest_roundtrip(self, tmp_path):
        manifest = build_dataset(tmp_path, n=2, seed=1)
        loaded = load_manifest(tmp_path / "test")
        assert json.dumps(loaded, sort_keys=True) == json.dumps(
            manifest, sort_keys=True
        )

    def test_rejects_non_dataset_dir(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"format": "other"}))
        with pytest.raises(ValueError):
            load_manifest(tmp_path)

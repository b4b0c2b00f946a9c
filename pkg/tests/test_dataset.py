import numpy as np
import pytest
from scipy import ndimage

from blursr import dataset as ds
from blursr.errors import InvalidArgumentError


class TestBlurAreaFraction:
    def test_all_blur(self):
        assert ds.blur_area_fraction(np.zeros((10, 10), dtype=np.uint8)) == 1.0

    def test_no_blur(self):
        assert ds.blur_area_fraction(np.ones((10, 10), dtype=np.uint8)) == 0.0

    def test_counted_construction(self, rng):
        mask = np.ones((60, 100), dtype=np.uint8)
        flat = mask.reshape(-1)
        idx = rng.choice(flat.size, size=2700, replace=False)
        flat[idx] = 0
        assert ds.blur_area_fraction(mask) == pytest.approx(0.45)

    def test_non_binary_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ds.blur_area_fraction(np.full((4, 4), 0.5))


class TestSizeCategory:
    @pytest.mark.parametrize("fraction,expected", [
        (0.44, "small"),
        (0.45, "medium"),
        (0.50, "medium"),
        (0.55, "medium"),
        (0.56, "large"),
        (0.0, "small"),
        (1.0, "large"),
    ])
    def test_thresholds(self, fraction, expected):
        assert ds.size_category(fraction) == expected

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ds.size_category(1.5)


def mask_with_fraction(h, w, fraction):
    mask = np.ones((h, w), dtype=np.uint8)
    n_zero = round(fraction * h * w)
    mask.reshape(-1)[:n_zero] = 0
    return mask


class TestFilterSample:
    def test_blur_specific_accept(self):
        ok, reason = ds.filter_sample(mask_with_fraction(600, 600, 0.5), "blur_specific")
        assert ok and reason is None

    def test_blur_specific_rejects_dominant_blur(self):
        ok, reason = ds.filter_sample(mask_with_fraction(600, 600, 0.85), "blur_specific")
        assert not ok and reason == "blur>80%"

    def test_blur_specific_rejects_small_images(self):
        ok, reason = ds.filter_sample(mask_with_fraction(512, 600, 0.5), "blur_specific")
        assert not ok and reason == "short-side<=512"

    def test_general_rejects_nearly_sharp(self):
        ok, reason = ds.filter_sample(mask_with_fraction(100, 100, 0.03), "general_sr")
        assert not ok and reason == "blur<5%"

    def test_general_accepts_at_5_percent(self):
        ok, _ = ds.filter_sample(mask_with_fraction(100, 100, 0.05), "general_sr")
        assert ok

    def test_unknown_role(self):
        with pytest.raises(InvalidArgumentError):
            ds.filter_sample(np.ones((4, 4), dtype=np.uint8), "other")


class TestEstimateBlurMap:
    def test_constant_image_fully_blur(self):
        img = np.full((64, 64, 3), 0.4, dtype=np.float32)
        mask = ds.estimate_blur_map(img, window=8)
        assert (mask == 0).all()

    def test_checkerboard_fully_sharp(self):
        # 2x2 blocks: Sobel's central difference is blind to a 1px pattern
        board = ((np.arange(64)[:, None] // 2) + (np.arange(64)[None, :] // 2)) % 2
        img = np.repeat(board[..., None], 3, axis=2).astype(np.float32)
        # independent check that gradient energy is high everywhere
        energy = ds.sobel_magnitude(ds.to_gray(img)) ** 2
        local = ndimage.uniform_filter(energy, size=8, mode="reflect")
        assert (local / np.percentile(local, 99) >= 0.5).all()
        mask = ds.estimate_blur_map(img, window=8)
        assert (mask == 1).all()

    def test_half_blurred_composite(self, rng):
        sharp = rng.random((64, 128, 3)).astype(np.float32)
        img = sharp.copy()
        img[:, 64:] = ndimage.gaussian_filter(sharp, sigma=(4, 4, 0))[:, 64:]
        mask = ds.estimate_blur_map(img, window=16)
        zeros_left = int((mask[:, :64] == 0).sum())
        zeros_right = int((mask[:, 64:] == 0).sum())
        assert zeros_right / max(1, zeros_left + zeros_right) > 0.9

    def test_window_too_large_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ds.sharpness_map(np.zeros((8, 8, 3)), window=16)

    def test_threshold_reapplication_idempotent(self, rng):
        values = rng.random((32, 32))
        once = ds.binarize_map(values, 0.5)
        twice = ds.binarize_map(once, 0.5)
        np.testing.assert_array_equal(once, twice)


class TestRegionGradientStats(object):
    def test_constant_images_all_zero(self, tmp_path):
        manifest = self._build(tmp_path, [("a", "little", 0.0), ("b", "heavy", 0.0)])
        stats = ds.region_gradient_stats(manifest, "intensity")
        assert stats["little"] == pytest.approx(0.0)
        assert stats["heavy"] == pytest.approx(0.0)

    def test_blurred_group_has_lower_gradient(self, tmp_path, rng):
        manifest = self._build(tmp_path, [("a", "little", 0.0), ("b", "heavy", 3.0)], noise=rng)
        stats = ds.region_gradient_stats(manifest, "intensity")
        assert stats["heavy"] < stats["little"]

    def test_all_sharp_sample_absent(self, tmp_path):
        root = tmp_path
        (root / "hr").mkdir()
        (root / "masks").mkdir()
        ds.save_image(root / "hr" / "s.png", np.full((32, 32, 3), 0.5))
        ds.save_mask(root / "masks" / "s.png", np.ones((32, 32), dtype=np.uint8))
        manifest = ds.DatasetManifest(root=root, samples=[
            ds.BlurSample(id="s", hr_path="hr/s.png", mask_path="masks/s.png", intensity="little"),
        ])
        assert ds.region_gradient_stats(manifest, "intensity") == {}

    @staticmethod
    def _build(root, spec, noise=None):
        (root / "hr").mkdir(exist_ok=True)
        (root / "masks").mkdir(exist_ok=True)
        samples = []
        for name, intensity, sigma in spec:
            if noise is not None:
                img = noise.random((32, 32, 3))
            else:
                img = np.full((32, 32, 3), 0.5)
            if sigma > 0:
                img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0))
            ds.save_image(root / "hr" / f"{name}.png", img)
            ds.save_mask(root / "masks" / f"{name}.png", np.zeros((32, 32), dtype=np.uint8))
            samples.append(ds.BlurSample(
                id=name, hr_path=f"hr/{name}.png", mask_path=f"masks/{name}.png",
                blur_type="defocus", intensity=intensity,
            ))
        return ds.DatasetManifest(root=root, samples=samples)


class TestSamplePatch:
    def test_whole_image(self, rng):
        hr = rng.random((32, 32, 3))
        mask = np.ones((32, 32), dtype=np.uint8)
        p_hr, p_mask = ds.sample_patch(hr, mask, 32, rng)
        np.testing.assert_array_equal(p_hr, hr)
        np.testing.assert_array_equal(p_mask, mask)

    def test_fixed_rng_reproducible(self, rng):
        hr = rng.random((64, 64, 3))
        mask = np.ones((64, 64), dtype=np.uint8)
        a = ds.sample_patch(hr, mask, 16, np.random.default_rng(4))
        b = ds.sample_patch(hr, mask, 16, np.random.default_rng(4))
        np.testing.assert_array_equal(a[0], b[0])

    def test_crop_fraction_matches_image_fraction(self, rng):
        # half-blur image: mean blur fraction over many crops tracks 0.5
        mask = np.ones((128, 128), dtype=np.uint8)
        mask[:, :64] = 0
        hr = rng.random((128, 128, 3))
        fractions = []
        r = np.random.default_rng(11)
        for _ in range(1000):
            _, m = ds.sample_patch(hr, mask, 32, r)
            fractions.append(ds.blur_area_fraction(m))
        assert abs(np.mean(fractions) - 0.5) < 0.05

    def test_too_large_patch_rejected(self, rng):
        with pytest.raises(InvalidArgumentError):
            ds.sample_patch(rng.random((16, 16, 3)), np.ones((16, 16), dtype=np.uint8), 32, rng)

    def test_unaligned_patch_rejected(self, rng):
        with pytest.raises(InvalidArgumentError):
            ds.sample_patch(rng.random((16, 16, 3)), np.ones((16, 16), dtype=np.uint8), 10, rng)


class TestManifestIO:
    def test_load_save_load_fixed_point(self, tmp_path):
        train, _ = ds.make_toy_dataset(tmp_path, n_general=2, n_blur=2, size=32, holdout=1)
        m1 = ds.load_manifest(train)
        out = tmp_path / "copy.jsonl"
        ds.save_manifest(m1, out)
        m2 = ds.load_manifest(out)
        assert train.read_text() == out.read_text()
        assert [s.id for s in m1.samples] == [s.id for s in m2.samples]

    def test_duplicate_ids_rejected(self, tmp_path):
        sample = ds.BlurSample(id="x", hr_path="a.png", mask_path="b.png")
        with pytest.raises(InvalidArgumentError):
            ds.DatasetManifest(root=tmp_path, samples=[sample, sample])

    def test_missing_files_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        rec = ds.BlurSample(id="x", hr_path="nope.png", mask_path="nope2.png")
        ds.save_manifest(ds.DatasetManifest(root=tmp_path, samples=[rec]), path)
        with pytest.raises(InvalidArgumentError):
            ds.load_manifest(path)

    def test_mask_round_trip(self, tmp_path, rng):
        mask = (rng.random((16, 16)) > 0.5).astype(np.uint8)
        ds.save_mask(tmp_path / "m.png", mask)
        np.testing.assert_array_equal(ds.load_mask(tmp_path / "m.png"), mask)

    def test_gray_mask_rejected_on_load(self, tmp_path):
        from PIL import Image

        Image.fromarray(np.full((8, 8), 128, dtype=np.uint8), mode="L").save(tmp_path / "bad.png")
        with pytest.raises(InvalidArgumentError):
            ds.load_mask(tmp_path / "bad.png")


def test_toy_dataset_contents(tmp_path):
    train, hold = ds.make_toy_dataset(tmp_path, n_general=3, n_blur=3, size=64, holdout=2)
    m = ds.load_manifest(train)
    assert len(m.samples) == 6
    blur_samples = [s for s in m.samples if s.blur_type == "defocus"]
    assert len(blur_samples) == 3
    for s in blur_samples:
        mask = ds.load_mask(m.mask_file(s))
        assert ds.blur_area_fraction(mask) == pytest.approx(0.5)
    held = ds.load_manifest(hold)
    assert len(held.samples) == 2

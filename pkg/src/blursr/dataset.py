"""Blur-sample management: manifests, masks, partitions and patch crops.

Mask convention: single-channel, same extents as the HR image, value 0
marks a blurred pixel and 1 a non-blurred one. Masks persist as 8-bit
gray PNGs holding 0 or 255; manifests persist as JSON-lines, one sample
per line.

The automatic blur-map estimator here is a gradient-energy heuristic, a
stand-in for a learned detector; every mask it produces stays in
review_state "auto" until a human verifies it.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InvalidArgumentError

BLUR_TYPES = ("defocus", "motion", "none")
INTENSITIES = ("little", "middle", "heavy", "unlabeled")
SOURCES = ("real", "synthetic", "web")
REVIEW_STATES = ("auto", "human_verified", "rejected")
SIZE_CATEGORIES = ("small", "medium", "large")

__all__ = [
    "BlurSample",
    "DatasetManifest",
    "load_manifest",
    "save_manifest",
    "load_image",
    "save_image",
    "load_mask",
    "save_mask",
    "atomic_write_bytes",
    "blur_area_fraction",
    "size_category",
    "filter_sample",
    "sharpness_map",
    "binarize_map",
    "estimate_blur_map",
    "region_gradient_stats",
    "sample_patch",
    "make_toy_dataset",
]


@dataclass
class BlurSample:
    id: str
    hr_path: str
    mask_path: str
    blur_type: str = "none"
    intensity: str = "unlabeled"
    source: str = "real"
    review_state: str = "auto"
    revision: int = 0

    def validate(self) -> None:
        if self.blur_type not in BLUR_TYPES:
            raise InvalidArgumentError(f"unknown blur_type {self.blur_type!r}")
        if self.intensity not in INTENSITIES:
            raise InvalidArgumentError(f"unknown intensity {self.intensity!r}")
        if self.source not in SOURCES:
            raise InvalidArgumentError(f"unknown source {self.source!r}")
        if self.review_state not in REVIEW_STATES:
            raise InvalidArgumentError(f"unknown review_state {self.review_state!r}")


@dataclass
class DatasetManifest:
    root: Path
    samples: list[BlurSample] = field(default_factory=list)

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("duplicate sample ids in manifest")

    def by_id(self, sample_id: str) -> BlurSample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)

    def hr_file(self, s: BlurSample) -> Path:
        return self.root / s.hr_path

    def mask_file(self, s: BlurSample) -> Path:
        return self.root / s.mask_path

    def training_samples(self) -> list[BlurSample]:
        return [s for s in self.samples if s.review_state != "rejected"]


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise InvalidArgumentError(f"{path}:{lineno}: bad JSON line: {e}") from e
            sample = BlurSample(**rec)
            sample.validate()
            samples.append(sample)
    manifest = DatasetManifest(root=path.parent, samples=samples)
    if check_files:
        for s in samples:
            for p in (manifest.hr_file(s), manifest.mask_file(s)):
                if not p.exists():
                    raise InvalidArgumentError(f"manifest references missing file {p}")
    return manifest


def _manifest_lines(manifest: DatasetManifest) -> str:
    return "".join(json.dumps(asdict(s), sort_keys=True) + "\n" for s in manifest.samples)


def atomic_write_bytes(path, payload: bytes) -> None:
    """Temp file + rename so a crash never leaves a half-written file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_manifest(manifest: DatasetManifest, path) -> None:
    atomic_write_bytes(path, _manifest_lines(manifest).encode("utf-8"))


# ---------------------------------------------------------------------------
# image / mask IO (HWC float in [0,1]; masks HW uint8 in {0,1})


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_image(path, img: np.ndarray) -> None:
    data = np.clip(np.asarray(img), 0.0, 1.0)
    Image.fromarray((data * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path)


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    values = np.unique(arr)
    if not np.isin(values, (0, 255)).all():
        raise InvalidArgumentError(f"mask {path} is not binary (values {values[:8]})")
    return (arr > 0).astype(np.uint8)


def save_mask(path, mask: np.ndarray) -> None:
    mask = _check_binary(mask)
    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(path)


def encode_mask_png(mask: np.ndarray) -> bytes:
    import io

    mask = _check_binary(mask)
    buf = io.BytesIO()
    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _check_binary(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InvalidArgumentError(f"mask must be single-channel, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise InvalidArgumentError("mask values must be 0 (blur) or 1 (non-blur)")
    return mask.astype(np.uint8)


# ---------------------------------------------------------------------------
# partition and filter rules


def blur_area_fraction(mask: np.ndarray) -> float:
    """Share of pixels marked blurred (value 0)."""
    mask = _check_binary(mask)
    return float((mask == 0).sum()) / mask.size


def size_category(fraction: float) -> str:
    """small (<45%), medium (45%..55% inclusive), large (>55%)."""
    if not 0.0 <= fraction <= 1.0:
        raise InvalidArgumentError(f"fraction must lie in [0,1], got {fraction}")
    if fraction < 0.45:
        return "small"
    if fraction <= 0.55:
        return "medium"
    return "large"


def filter_sample(mask: np.ndarray, role: str) -> tuple[bool, Optional[str]]:
    """Acceptance rules per dataset role.

    blur_specific keeps large samples (short side > 512) with under 80%
    blur; general_sr keeps anything with at least 5% blur. Returns
    (accepted, reason) where reason names the violated rule.
    """
    mask = _check_binary(mask)
    fraction = blur_area_fraction(mask)
    if role == "blur_specific":
        if min(mask.shape) <= 512:
            return False, "short-side<=512"
        if fraction >= 0.80:
            return False, "blur>80%"
        return True, None
    if role == "general_sr":
        if fraction < 0.05:
            return False, "blur<5%"
        return True, None
    raise InvalidArgumentError(f"unknown filter role {role!r}")


# ---------------------------------------------------------------------------
# automatic blur-map estimation (gradient-energy stand-in)

LUMA = (0.299, 0.587, 0.114)


def to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img.astype(np.float64)
    return (LUMA[0] * img[..., 0] + LUMA[1] * img[..., 1] + LUMA[2] * img[..., 2]).astype(np.float64)


def sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(gray, axis=1, mode="reflect")
    gy = ndimage.sobel(gray, axis=0, mode="reflect")
    return np.sqrt(gx * gx + gy * gy)


def sharpness_map(img: np.ndarray, window: int) -> np.ndarray:
    """Windowed mean of squared Sobel magnitude, normalized to [0,1].

    Normalization divides by the 99th percentile so isolated spikes do not
    flatten the rest of the map.
    """
    gray = to_gray(img)
    if window > min(gray.shape):
        raise InvalidArgumentError(f"window {window} exceeds image extents {gray.shape}")
    gx = ndimage.sobel(gray, axis=1, mode="reflect")
    gy = ndimage.sobel(gray, axis=0, mode="reflect")
    energy = gx * gx + gy * gy
    local = ndimage.uniform_filter(energy, size=window, mode="reflect")
    robust_max = np.percentile(local, 99)
    if robust_max <= 0:
        return np.zeros_like(local)
    return np.clip(local / robust_max, 0.0, 1.0)


def binarize_map(values: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold to the mask convention: below -> 0 (blur), else 1."""
    return (np.asarray(values) >= threshold).astype(np.uint8)


def estimate_blur_map(img: np.ndarray, window: int = 16, threshold: float = 0.5) -> np.ndarray:
    """Binary blur map from local gradient energy; 0 = blur, 1 = sharp."""
    return binarize_map(sharpness_map(img, window), threshold)


# ---------------------------------------------------------------------------
# dataset statistics


def region_gradient_stats(manifest: DatasetManifest, grouping: str = "intensity") -> dict[str, float]:
    """Mean Sobel magnitude over blur pixels (mask==0), pooled per group.

    Groups with no blur pixels are absent from the result.
    """
    if grouping not in ("intensity", "size"):
        raise InvalidArgumentError(f"grouping must be 'intensity' or 'size', got {grouping!r}")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for s in manifest.samples:
        img = load_image(manifest.hr_file(s))
        mask = load_mask(manifest.mask_file(s))
        if grouping == "intensity":
            group = s.intensity
        else:
            group = size_category(blur_area_fraction(mask))
        grad = sobel_magnitude(to_gray(img))
        blur_pixels = mask == 0
        n = int(blur_pixels.sum())
        if n == 0:
            continue
        sums[group] = sums.get(group, 0.0) + float(grad[blur_pixels].sum())
        counts[group] = counts.get(group, 0) + n
    return {g: sums[g] / counts[g] for g in sums}


def sample_patch(hr: np.ndarray, mask: np.ndarray, patch: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random crop aligned to the x4 grid; mask cropped identically."""
    h, w = mask.shape
    if hr.shape[:2] != (h, w):
        raise InvalidArgumentError(f"image {hr.shape[:2]} and mask {mask.shape} extents differ")
    if patch % 4:
        raise InvalidArgumentError(f"patch size must be divisible by 4, got {patch}")
    if patch > min(h, w):
        raise InvalidArgumentError(f"patch {patch} exceeds image extents ({h},{w})")
    oy = 4 * int(rng.integers(0, (h - patch) // 4 + 1))
    ox = 4 * int(rng.integers(0, (w - patch) // 4 + 1))
    return hr[oy : oy + patch, ox : ox + patch], mask[oy : oy + patch, ox : ox + patch]


# ---------------------------------------------------------------------------
# synthetic toy data


def _toy_image(rng: np.random.Generator, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.zeros((size, size, 3))
    for ch in range(3):
        a, b = rng.uniform(0.2, 0.8, size=2)
        img[..., ch] = a + (b - a) * (0.5 * xs + 0.5 * ys)
        for _ in range(3):
            fx, fy = rng.uniform(2, 9, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            img[..., ch] += 0.12 * np.sin(2 * np.pi * (fx * xs + fy * ys) + phase)
    for _ in range(4):
        x0, y0 = rng.integers(0, size - 8, size=2)
        dw, dh = rng.integers(6, size // 3, size=2)
        img[y0 : y0 + dh, x0 : x0 + dw] += rng.uniform(-0.3, 0.3, size=3)
    img += rng.normal(0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def make_toy_dataset(out_dir, n_general: int = 32, n_blur: int = 32, size: int = 128,
                     seed: int = 0, holdout: int = 8) -> tuple[Path, Path]:
    """Synthetic corpus: sharp images plus half-image defocus samples.

    Writes HR PNGs, mask PNGs and two JSONL manifests (train and holdout)
    under out_dir; returns their paths.
    """
    out_dir = Path(out_dir)
    (out_dir / "hr").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    def emit(idx: int, blurred: bool, tag: str) -> BlurSample:
        img = _toy_image(rng, size)
        mask = np.ones((size, size), dtype=np.uint8)
        if blurred:
            sigma = float(rng.uniform(1.5, 3.0))
            half = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0))
            if rng.random() < 0.5:
                img[:, size // 2 :] = half[:, size // 2 :]
                mask[:, size // 2 :] = 0
            else:
                img[:, : size // 2] = half[:, : size // 2]
                mask[:, : size // 2] = 0
        sid = f"{tag}{idx:03d}"
        hr_rel, mask_rel = f"hr/{sid}.png", f"masks/{sid}.png"
        save_image(out_dir / hr_rel, img)
        save_mask(out_dir / mask_rel, mask)
        return BlurSample(
            id=sid,
            hr_path=hr_rel,
            mask_path=mask_rel,
            blur_type="defocus" if blurred else "none",
            intensity="middle" if blurred else "unlabeled",
            source="synthetic",
            review_state="human_verified",
        )

    train = [emit(i, blurred=False, tag="gen") for i in range(n_general)]
    train += [emit(i, blurred=True, tag="blur") for i in range(n_blur)]
    held = [emit(i, blurred=(i % 2 == 1), tag="hold") for i in range(holdout)]

    train_path = out_dir / "manifest.jsonl"
    hold_path = out_dir / "holdout.jsonl"
    save_manifest(DatasetManifest(root=out_dir, samples=train), train_path)
    save_manifest(DatasetManifest(root=out_dir, samples=held), hold_path)
    return train_path, hold_path

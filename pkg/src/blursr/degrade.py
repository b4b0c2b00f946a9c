"""HR -> LR synthesis: anisotropic Gaussian blur, x4 box downsample, noise.

A simplified stand-in for the shuffled real-world degradation pipelines
used to train blind SR models; keeps the chain analyzable while preserving
the blur-preservation challenge. An optional block-DCT quantization stage
(off by default) approximates compression.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.fft import dctn, idctn

from .autograd import Tensor
from .errors import InvalidArgumentError

__all__ = ["DegradationConfig", "gaussian_kernel", "degrade", "rng_for_sample"]


@dataclass
class DegradationConfig:
    kernel_size: int = 7
    sigma_range: tuple[float, float] = (0.2, 3.0)
    anisotropic: bool = True
    theta_range: tuple[float, float] = (0.0, math.pi)
    scale: int = 4
    noise_range: tuple[float, float] = (0.0, 10.0 / 255.0)
    dct_quant: bool = False
    dct_quant_step: float = 0.02
    seed: int = 0

    def validate(self) -> None:
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise InvalidArgumentError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.sigma_range[0] > self.sigma_range[1] or self.sigma_range[0] <= 0:
            raise InvalidArgumentError(f"bad sigma range {self.sigma_range}")
        if self.scale != 4:
            raise InvalidArgumentError(f"downscale factor is fixed at 4, got {self.scale}")
        if self.noise_range[0] < 0 or self.noise_range[0] > self.noise_range[1]:
            raise InvalidArgumentError(f"bad noise range {self.noise_range}")


def rng_for_sample(seed: int, sample_id: str) -> np.random.Generator:
    """Stable per-sample stream: dataset order never changes degradations."""
    digest = hashlib.sha256(f"{seed}:{sample_id}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def gaussian_kernel(size: int, sigma_x: float, sigma_y: float, theta: float = 0.0) -> Tensor:
    """Rotated anisotropic Gaussian on a size x size grid, normalized to 1."""
    if size % 2 == 0 or size < 1:
        raise InvalidArgumentError(f"kernel size must be odd and positive, got {size}")
    if sigma_x <= 0 or sigma_y <= 0:
        raise InvalidArgumentError("sigmas must be positive")
    half = size // 2
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    ct, st = math.cos(theta), math.sin(theta)
    # rotate coordinates into the kernel frame, then axis-aligned Gaussian
    u = ct * xs + st * ys
    v = -st * xs + ct * ys
    k = np.exp(-0.5 * ((u / sigma_x) ** 2 + (v / sigma_y) ** 2))
    k /= k.sum()
    return Tensor(k.astype(np.float32).reshape(1, 1, size, size))


def _sample_kernel(config: DegradationConfig, rng: np.random.Generator) -> np.ndarray:
    lo, hi = config.sigma_range
    sx = float(rng.uniform(lo, hi))
    sy = float(rng.uniform(lo, hi)) if config.anisotropic else sx
    theta = float(rng.uniform(*config.theta_range)) if config.anisotropic else 0.0
    return gaussian_kernel(config.kernel_size, sx, sy, theta).data[0, 0].astype(np.float64)


def _blur_reflect(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # (C,H,W); reflect padding avoids dark borders
    return np.stack([ndimage.convolve(ch, kernel, mode="mirror") for ch in img])


def _box_down(img: np.ndarray, f: int) -> np.ndarray:
    c, h, w = img.shape
    return img.reshape(c, h // f, f, w // f, f).mean(axis=(2, 4))


def _dct_quantize(img: np.ndarray, step: float) -> np.ndarray:
    c, h, w = img.shape
    bh, bw = (h + 7) // 8 * 8, (w + 7) // 8 * 8
    padded = np.pad(img, ((0, 0), (0, bh - h), (0, bw - w)), mode="edge")
    blocks = padded.reshape(c, bh // 8, 8, bw // 8, 8).transpose(0, 1, 3, 2, 4)
    coeffs = dctn(blocks, axes=(-2, -1), norm="ortho")
    coeffs = np.round(coeffs / step) * step
    back = idctn(coeffs, axes=(-2, -1), norm="ortho")
    out = back.transpose(0, 1, 3, 2, 4).reshape(c, bh, bw)
    return out[:, :h, :w]


def degrade(hr: Tensor, config: DegradationConfig, rng: np.random.Generator) -> Tensor:
    """Blur, x4 box-downsample and add noise; deterministic per rng state."""
    config.validate()
    n, c, h, w = hr.shape
    f = config.scale
    if h % f or w % f:
        raise InvalidArgumentError(f"HR extents ({h},{w}) must be divisible by {f}")
    out = np.empty((n, c, h // f, w // f), dtype=np.float32)
    for i in range(n):
        img = hr.data[i].astype(np.float64)
        kernel = _sample_kernel(config, rng)
        blurred = _blur_reflect(img, kernel)
        lr = _box_down(blurred, f)
        sigma = float(rng.uniform(*config.noise_range))
        if sigma > 0:
            lr = lr + rng.normal(0.0, sigma, size=lr.shape)
        if config.dct_quant:
            lr = _dct_quantize(lr, config.dct_quant_step)
        out[i] = np.clip(lr, 0.0, 1.0).astype(np.float32)
    return Tensor(out)

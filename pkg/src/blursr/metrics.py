"""Full-reference image quality metrics with blur-region splits.

All metrics take images as float arrays in [0,1], either (H,W) gray or
(H,W,3) RGB, plus an optional binary region mask (1 = include pixel).
Region-split evaluation runs each metric three ways per sample: over blur
pixels (mask==0), focus pixels (mask==1) and all pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import convolve2d

from .autograd import Tensor
from .checkpoint import ParamSet
from .errors import InvalidArgumentError
from .models import discriminator_forward

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
GMSD_C = 0.0026

__all__ = ["psnr", "ssim", "gmsd", "disc_loss_map", "DiscLossRegions", "to_luma"]


def _check_pair(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray]) -> None:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"image shapes differ: {a.shape} vs {b.shape}")
    if mask is not None and mask.shape != a.shape[:2]:
        raise InvalidArgumentError(f"mask shape {mask.shape} does not match image {a.shape[:2]}")


def to_luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    raise InvalidArgumentError(f"expected (H,W) or (H,W,3) image, got {img.shape}")


def psnr(a: np.ndarray, b: np.ndarray, region_mask: Optional[np.ndarray] = None) -> Optional[float]:
    """10*log10(1/MSE) on the [0,1] range, capped at 100 dB.

    Returns None when the region selects no pixels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b, region_mask)
    diff2 = (a - b) ** 2
    if region_mask is not None:
        sel = np.asarray(region_mask, dtype=bool)
        if not sel.any():
            return None
        diff2 = diff2[sel]
    mse = float(diff2.mean())
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(xs ** 2) / (2 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray, region_mask: Optional[np.ndarray] = None) -> Optional[float]:
    """Mean local SSIM on the luma channel, 11x11 Gaussian window.

    Only windows fully inside the image contribute; with a region mask,
    only windows whose CENTER pixel lies in the region are kept (the
    window itself may straddle the boundary).
    """
    _check_pair(np.asarray(a), np.asarray(b), region_mask)
    x = to_luma(a)
    y = to_luma(b)
    if min(x.shape) < SSIM_WINDOW:
        raise InvalidArgumentError(f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    mu_xx = convolve2d(x * x, win, mode="valid")
    mu_yy = convolve2d(y * y, win, mode="valid")
    mu_xy = convolve2d(x * y, win, mode="valid")
    var_x = mu_xx - mu_x ** 2
    var_y = mu_yy - mu_y ** 2
    cov = mu_xy - mu_x * mu_y
    ssim_map = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    )
    if region_mask is not None:
        half = SSIM_WINDOW // 2
        centers = np.asarray(region_mask, dtype=bool)[half:-half, half:-half]
        if not centers.any():
            return None
        return float(ssim_map[centers].mean())
    return float(ssim_map.mean())


_PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
_PREWITT_Y = _PREWITT_X.T


def _prewitt_magnitude(gray: np.ndarray) -> np.ndarray:
    padded = np.pad(gray, 1, mode="symmetric")
    gx = convolve2d(padded, _PREWITT_X, mode="valid")
    gy = convolve2d(padded, _PREWITT_Y, mode="valid")
    return np.sqrt(gx ** 2 + gy ** 2)


def gmsd(a: np.ndarray, b: np.ndarray, region_mask: Optional[np.ndarray] = None) -> Optional[float]:
    """Gradient-magnitude-similarity deviation on luma; lower is better.

    Prewitt gradients with symmetric padding, stability constant 0.0026 on
    the [0,1] range; the score is the population standard deviation of the
    similarity map over the selected pixels.
    """
    _check_pair(np.asarray(a), np.asarray(b), region_mask)
    ga = _prewitt_magnitude(to_luma(a))
    gb = _prewitt_magnitude(to_luma(b))
    gms = (2 * ga * gb + GMSD_C) / (ga ** 2 + gb ** 2 + GMSD_C)
    if region_mask is not None:
        sel = np.asarray(region_mask, dtype=bool)
        if not sel.any():
            return None
        gms = gms[sel]
    return float(gms.std())


# ---------------------------------------------------------------------------
# discriminator loss maps (region-split adversarial analysis)


@dataclass
class DiscLossRegions:
    blur: Optional[float]
    focus: Optional[float]
    all: float
    blur_fraction: float  # share of blur cells on the logits grid


def _downsample_mask_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = mask.shape
    ys = (np.arange(out_h) * h) // out_h
    xs = (np.arange(out_w) * w) // out_w
    return mask[np.ix_(ys, xs)]


def disc_loss_map(d_params: ParamSet, hr: Tensor, sr: Tensor, mask: np.ndarray,
                  clamp: bool = False,
                  condition_mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, DiscLossRegions]:
    """Per-location adversarial loss terms plus region means.

    Each logits cell contributes h(1 - D(hr|M)) + h(1 + D(sr|M)); region
    means split the logits grid by the nearest-downsampled blur mask, and
    the map is nearest-upsampled back to image size for visualization.
    `condition_mask` feeds the discriminator in place of `mask` (for
    probing the condition) while region splits keep following `mask`.
    """
    if hr.shape != sr.shape:
        raise InvalidArgumentError(f"hr {hr.shape} and sr {sr.shape} shapes differ")
    n, _, h, w = hr.shape
    if n != 1:
        raise InvalidArgumentError("loss maps are per-sample; pass a single image")
    mask = np.asarray(mask)
    if mask.shape != (h, w):
        raise InvalidArgumentError(f"mask shape {mask.shape} does not match image ({h},{w})")
    feed = mask if condition_mask is None else np.asarray(condition_mask)
    if feed.shape != (h, w):
        raise InvalidArgumentError(f"condition mask shape {feed.shape} does not match image ({h},{w})")

    conditional = d_params["disc.in.w"].shape[1] == 4
    mask_t = Tensor(feed.astype(np.float32).reshape(1, 1, h, w)) if conditional else None
    real = discriminator_forward(d_params, hr.detach(), mask_t).data[0, 0]
    fake = discriminator_forward(d_params, sr.detach(), mask_t).data[0, 0]
    term_real = 1.0 - real
    term_fake = 1.0 + fake
    if clamp:
        term_real = np.maximum(term_real, 0.0)
        term_fake = np.maximum(term_fake, 0.0)
    loss = (term_real + term_fake).astype(np.float64)

    grid = _downsample_mask_nearest(mask, *loss.shape)
    blur_cells = grid == 0
    focus_cells = grid == 1
    regions = DiscLossRegions(
        blur=float(loss[blur_cells].mean()) if blur_cells.any() else None,
        focus=float(loss[focus_cells].mean()) if focus_cells.any() else None,
        all=float(loss.mean()),
        blur_fraction=float(blur_cells.mean()),
    )
    full = np.repeat(np.repeat(loss, h // loss.shape[0], axis=0), w // loss.shape[1], axis=1)
    return full, regions

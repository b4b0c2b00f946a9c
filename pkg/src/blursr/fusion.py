"""Periodic cross-branch weight fusion.

Every k iterations the two branch weight vectors are pulled toward each
other by a symmetric interpolation whose ratio adapts to their cosine
similarity; at inference the branches are merged half-half into a single
model. Interpolating with lambda > 0.5 contracts the branch difference by
a factor (2*lambda - 1) while preserving the coordinatewise sum, so the
half-half merge is invariant under fusion events themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import checkpoint as cp
from .checkpoint import ParamSet
from .errors import InvalidArgumentError

__all__ = [
    "FusionConfig",
    "FusionLog",
    "adaptive_lambda",
    "cross_interpolate",
    "final_fuse",
    "should_fuse",
]

SCOPES = ("generator_only", "generator_and_discriminator")


@dataclass(frozen=True)
class FusionConfig:
    lambda0: float = 0.99
    k: int = 20
    scope: str = "generator_only"

    def validate(self) -> None:
        if not 0.0 <= self.lambda0 <= 1.0:
            raise InvalidArgumentError(f"lambda0 must lie in [0,1], got {self.lambda0}")
        if self.k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {self.k}")
        if self.scope not in SCOPES:
            raise InvalidArgumentError(f"scope must be one of {SCOPES}, got {self.scope!r}")


@dataclass
class FusionLog:
    iteration: int
    lam: float
    cos_before: float
    cos_after: float
    diff_norm_before: float
    diff_norm_after: float


def adaptive_lambda(w_general: ParamSet, w_blur: ParamSet, lambda0: float) -> float:
    """lambda0 + (1 - lambda0) * cos(Wg, Wb) / 2.

    The half-scaled cosine keeps lambda inside
    [(3*lambda0 - 1)/2, (1 + lambda0)/2].
    """
    cos = cp.cosine_similarity(w_general, w_blur)
    return lambda0 + (1.0 - lambda0) * cos / 2.0


def _diff_norm(a: ParamSet, b: ParamSet) -> float:
    d = cp.flatten(a).astype(np.float64) - cp.flatten(b).astype(np.float64)
    return float(np.sqrt(np.dot(d, d)))


def _safe_cos(a: ParamSet, b: ParamSet) -> float:
    try:
        return cp.cosine_similarity(a, b)
    except Exception:
        return float("nan")


def _paired_interpolation(a: np.ndarray, b: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """(lam*a + (1-lam)*b, lam*b + (1-lam)*a) via half-sum and half-difference.

    Writing the pair as h +- c with h = a/2 + b/2 and c = (2*lam-1)*(a/2 - b/2)
    lets the far side be reconstructed as 2h - p. Adding the aligned-sign
    half first makes that subtraction exact (Sterbenz) whenever the
    contracted difference does not dominate the mean, so a later half-half
    fuse of the pair reproduces h bit-for-bit.
    """
    h = a * np.float32(0.5) + b * np.float32(0.5)
    d = a * np.float32(0.5) - b * np.float32(0.5)
    c = np.float32(2.0 * lam - 1.0) * d
    c_aligned = np.abs(c) * np.where(np.signbit(h), np.float32(-1.0), np.float32(1.0))
    p = h + c_aligned
    q = np.float32(2.0) * h - p
    same_sign = (c >= 0) == (c_aligned >= 0)
    return np.where(same_sign, p, q), np.where(same_sign, q, p)


def cross_interpolate(w_general: ParamSet, w_blur: ParamSet, lam: float,
                      iteration: int = 0) -> tuple[ParamSet, ParamSet, FusionLog]:
    """Symmetric pair of interpolations; returns (Wg', Wb', log entry)."""
    if not w_general.aligned_with(w_blur):
        raise InvalidArgumentError("cross_interpolate requires aligned ParamSets")
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f"lambda must lie in [0,1], got {lam}")
    cos_before = _safe_cos(w_general, w_blur)
    diff_before = _diff_norm(w_general, w_blur)
    meta = {
        "interp.lambda": repr(float(lam)),
        "interp.parent_a": cp.checksum(w_general),
        "interp.parent_b": cp.checksum(w_blur),
    }
    new_g = ParamSet(metadata={**w_general.metadata, **meta})
    new_b = ParamSet(metadata={**w_blur.metadata, **meta})
    for name, tg in w_general.items():
        ga, gb = _paired_interpolation(tg.data, w_blur[name].data, lam)
        new_g.add(name, cp.Tensor(ga))
        new_b.add(name, cp.Tensor(gb))
    log = FusionLog(
        iteration=iteration,
        lam=float(lam),
        cos_before=cos_before,
        cos_after=_safe_cos(new_g, new_b),
        diff_norm_before=diff_before,
        diff_norm_after=_diff_norm(new_g, new_b),
    )
    return new_g, new_b, log


def final_fuse(w_general: ParamSet, w_blur: ParamSet) -> ParamSet:
    """Half-half merge into the single inference model.

    Computed as a/2 + b/2 per coordinate, which is bit-exactly symmetric
    in its arguments.
    """
    if not w_general.aligned_with(w_blur):
        raise InvalidArgumentError("final_fuse requires aligned ParamSets")
    meta = dict(w_general.metadata)
    meta.update({
        "fused.parent_general": cp.checksum(w_general),
        "fused.parent_blur": cp.checksum(w_blur),
    })
    out = ParamSet(metadata=meta)
    half = np.float32(0.5)
    for name, tg in w_general.items():
        tb = w_blur[name]
        out.add(name, cp.Tensor(tg.data * half + tb.data * half))
    return out


def should_fuse(iteration: int, k: int) -> bool:
    """Fusion fires after the optimizer step of every k-th iteration."""
    if iteration < 1:
        raise InvalidArgumentError(f"iteration must be >= 1, got {iteration}")
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    return iteration % k == 0

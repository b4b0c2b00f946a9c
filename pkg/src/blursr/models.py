"""Tiny x4 SR generator and patch discriminators.

Generator: conv head, residual blocks, two nearest-upsample+conv x2 stages,
conv tail, plus a global nearest-x4 skip of the input. The blur-branch
discriminator takes the binary blur map as a fourth input channel; the
general-branch discriminator is the same stack without it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .checkpoint import ParamSet
from .errors import InvalidArgumentError

SCALE = 4

__all__ = [
    "GeneratorConfig",
    "DiscriminatorConfig",
    "build_generator",
    "build_discriminator",
    "generator_forward",
    "discriminator_forward",
    "nearest_upscale",
]


@dataclass(frozen=True)
class GeneratorConfig:
    base_channels: int = 16
    n_residual_blocks: int = 4
    scale: int = SCALE
    slope: float = 0.2

    def validate(self) -> None:
        if self.scale != SCALE:
            raise InvalidArgumentError(f"scale is fixed at {SCALE}, got {self.scale}")
        if self.base_channels < 4:
            raise InvalidArgumentError("base_channels must be >= 4")
        if self.n_residual_blocks < 1:
            raise InvalidArgumentError("need at least one residual block")


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 3  # 3 unconditional, 4 conditional (image + blur map)
    base_channels: int = 16
    n_downsamples: int = 2
    slope: float = 0.2

    def validate(self) -> None:
        if self.in_channels not in (3, 4):
            raise InvalidArgumentError("in_channels must be 3 (unconditional) or 4 (conditional)")
        if self.n_downsamples < 1:
            raise InvalidArgumentError("need at least one downsample stage")

    @property
    def conditional(self) -> bool:
        return self.in_channels == 4


def _he_kernel(rng: np.random.Generator, cout: int, cin: int, kh: int, kw: int) -> np.ndarray:
    std = np.sqrt(2.0 / (cin * kh * kw))
    return (rng.standard_normal((cout, cin, kh, kw)) * std).astype(np.float32)


def _add_conv(ps: ParamSet, rng, name: str, cout: int, cin: int, k: int, zero: bool = False) -> None:
    weight = np.zeros((cout, cin, k, k), dtype=np.float32) if zero else _he_kernel(rng, cout, cin, k, k)
    ps.add(f"{name}.w", Tensor(weight))
    ps.add(f"{name}.b", Tensor(np.zeros((1, cout, 1, 1), dtype=np.float32)))


def build_generator(config: GeneratorConfig, seed: int, zero_tail: bool = False) -> ParamSet:
    """Seeded He-init generator weights; biases start at zero.

    With zero_tail the last conv is fully zeroed, so the network reduces to
    its nearest-x4 skip path.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    ps = ParamSet(metadata={
        "kind": "generator",
        "gen.base_channels": str(config.base_channels),
        "gen.n_residual_blocks": str(config.n_residual_blocks),
        "gen.scale": str(config.scale),
        "gen.slope": repr(config.slope),
        "init.seed": str(seed),
    })
    c = config.base_channels
    _add_conv(ps, rng, "gen.head", c, 3, 3)
    for i in range(config.n_residual_blocks):
        _add_conv(ps, rng, f"gen.block{i:02d}.c1", c, c, 3)
        _add_conv(ps, rng, f"gen.block{i:02d}.c2", c, c, 3)
    _add_conv(ps, rng, "gen.up1", c, c, 3)
    _add_conv(ps, rng, "gen.up2", c, c, 3)
    _add_conv(ps, rng, "gen.tail", 3, c, 3, zero=zero_tail)
    return ps


def build_discriminator(config: DiscriminatorConfig, seed: int) -> ParamSet:
    config.validate()
    rng = np.random.default_rng(seed)
    ps = ParamSet(metadata={
        "kind": "discriminator",
        "disc.in_channels": str(config.in_channels),
        "disc.base_channels": str(config.base_channels),
        "disc.n_downsamples": str(config.n_downsamples),
        "disc.slope": repr(config.slope),
        "init.seed": str(seed),
    })
    c = config.base_channels
    _add_conv(ps, rng, "disc.in", c, config.in_channels, 3)
    for i in range(config.n_downsamples):
        _add_conv(ps, rng, f"disc.down{i}", c * 2, c, 4)
        c *= 2
    _add_conv(ps, rng, "disc.out", 1, c, 3)
    return ps


def _conv(ps: ParamSet, name: str, x: Tensor, stride: int = 1, padding: int = 1) -> Tensor:
    return ag.conv2d(x, ps[f"{name}.w"], ps[f"{name}.b"], stride=stride, padding=padding)


def generator_config_of(params: ParamSet) -> GeneratorConfig:
    m = params.metadata
    return GeneratorConfig(
        base_channels=int(m.get("gen.base_channels", params["gen.head.w"].shape[0])),
        n_residual_blocks=int(m.get("gen.n_residual_blocks", sum(1 for n in params.names() if n.endswith(".c1.w")))),
        slope=float(m.get("gen.slope", 0.2)),
    )


def nearest_upscale(x: Tensor, factor: int = SCALE) -> Tensor:
    return ag.resize_nearest(x, factor, "up")


def generator_forward(params: ParamSet, lr: Tensor) -> Tensor:
    """x4 super-resolution forward pass: (N,3,h,w) -> (N,3,4h,4w)."""
    n, c, h, w = lr.shape
    if c != 3:
        raise InvalidArgumentError(f"generator expects 3 input channels, got {c}")
    if h < 4 or w < 4:
        raise InvalidArgumentError(f"input spatial extents must be >= 4, got ({h},{w})")
    cfg = generator_config_of(params)
    slope = cfg.slope
    x = _conv(params, "gen.head", lr)
    for i in range(cfg.n_residual_blocks):
        t = _conv(params, f"gen.block{i:02d}.c1", x)
        t = ag.leaky_relu(t, slope)
        t = _conv(params, f"gen.block{i:02d}.c2", t)
        x = ag.add(x, t)
    x = ag.leaky_relu(_conv(params, "gen.up1", ag.resize_nearest(x, 2, "up")), slope)
    x = ag.leaky_relu(_conv(params, "gen.up2", ag.resize_nearest(x, 2, "up")), slope)
    x = _conv(params, "gen.tail", x)
    return ag.add(x, nearest_upscale(lr, SCALE))


def discriminator_config_of(params: ParamSet) -> DiscriminatorConfig:
    in_ch = params["disc.in.w"].shape[1]
    m = params.metadata
    return DiscriminatorConfig(
        in_channels=in_ch,
        base_channels=int(m.get("disc.base_channels", params["disc.in.w"].shape[0])),
        n_downsamples=int(m.get("disc.n_downsamples", sum(1 for n in params.names() if n.startswith("disc.down") and n.endswith(".w")))),
        slope=float(m.get("disc.slope", 0.2)),
    )


def discriminator_forward(params: ParamSet, image: Tensor, mask: Tensor | None = None) -> Tensor:
    """Patch logits map (N,1,H/2^d,W/2^d); conditional variants take the blur map."""
    cfg = discriminator_config_of(params)
    n, c, h, w = image.shape
    if c != 3:
        raise InvalidArgumentError(f"discriminator expects 3 image channels, got {c}")
    if cfg.conditional:
        if mask is None:
            raise InvalidArgumentError("conditional discriminator requires a blur map")
        if mask.shape != (n, 1, h, w):
            raise InvalidArgumentError(f"blur map shape {mask.shape} does not match image ({n},1,{h},{w})")
        x = ag.concat_channels(image, mask)
    else:
        if mask is not None:
            raise InvalidArgumentError("unconditional discriminator does not accept a blur map")
        x = image
    x = ag.leaky_relu(_conv(params, "disc.in", x), cfg.slope)
    for i in range(cfg.n_downsamples):
        x = ag.leaky_relu(_conv(params, f"disc.down{i}", x, stride=2, padding=1), cfg.slope)
    return _conv(params, "disc.out", x)

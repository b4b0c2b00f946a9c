"""Run configuration: INI-style sections mapped onto the module configs.

Unknown sections or keys are rejected outright; every run writes its
resolved configuration next to its outputs so results stay attributable.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .degrade import DegradationConfig
from .errors import InvalidArgumentError
from .fusion import FusionConfig
from .models import DiscriminatorConfig, GeneratorConfig
from .train import TrainConfig

_SCHEMA: dict[str, set[str]] = {
    "data": {"manifest", "holdout_manifest"},
    "generator": {"base_channels", "n_residual_blocks", "slope"},
    "discriminator": {"base_channels", "n_downsamples", "slope"},
    "train": {"lr", "beta1", "beta2", "batch_size", "hr_patch", "total_iters",
              "adv_weight", "l1_weight", "clamp_hinge", "seed",
              "checkpoint_interval", "holdout_every"},
    "fusion": {"enabled", "lambda0", "k", "scope"},
    "degradation": {"kernel_size", "sigma_min", "sigma_max", "anisotropic",
                    "theta_min", "theta_max", "noise_min", "noise_max",
                    "dct_quant", "dct_quant_step", "seed"},
    "eval": {"seed"},
}

__all__ = ["RunConfig", "load_run_config", "write_resolved_config"]


@dataclass
class RunConfig:
    manifest: Optional[Path]
    holdout_manifest: Optional[Path]
    train: TrainConfig
    generator: GeneratorConfig
    discriminator: DiscriminatorConfig
    degradation: DegradationConfig
    fusion: Optional[FusionConfig]
    checkpoint_interval: int
    holdout_every: int
    eval_seed: int


def _validate_keys(parser: configparser.ConfigParser, path) -> None:
    for section in parser.sections():
        if section not in _SCHEMA:
            raise InvalidArgumentError(f"{path}: unknown config section [{section}]")
        unknown = set(parser[section]) - _SCHEMA[section]
        if unknown:
            raise InvalidArgumentError(
                f"{path}: unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise InvalidArgumentError(f"{path}: {e}") from e
    _validate_keys(parser, path)

    def get(section, key, cast, default):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                if cast is bool:
                    return parser.getboolean(section, key)
                return cast(raw)
            except ValueError as e:
                raise InvalidArgumentError(f"{path}: [{section}] {key}={raw!r}: {e}") from e
        return default

    train = TrainConfig(
        lr=get("train", "lr", float, 1e-4),
        betas=(get("train", "beta1", float, 0.9), get("train", "beta2", float, 0.99)),
        batch_size=get("train", "batch_size", int, 8),
        hr_patch=get("train", "hr_patch", int, 64),
        total_iters=get("train", "total_iters", int, 1000),
        adv_weight=get("train", "adv_weight", float, 0.05),
        l1_weight=get("train", "l1_weight", float, 1.0),
        clamp_hinge=get("train", "clamp_hinge", bool, True),
        seed=get("train", "seed", int, 0),
    )
    train.validate()
    generator = GeneratorConfig(
        base_channels=get("generator", "base_channels", int, 16),
        n_residual_blocks=get("generator", "n_residual_blocks", int, 4),
        slope=get("generator", "slope", float, 0.2),
    )
    generator.validate()
    discriminator = DiscriminatorConfig(
        base_channels=get("discriminator", "base_channels", int, 16),
        n_downsamples=get("discriminator", "n_downsamples", int, 2),
        slope=get("discriminator", "slope", float, 0.2),
    )
    degradation = DegradationConfig(
        kernel_size=get("degradation", "kernel_size", int, 7),
        sigma_range=(get("degradation", "sigma_min", float, 0.2),
                     get("degradation", "sigma_max", float, 3.0)),
        anisotropic=get("degradation", "anisotropic", bool, True),
        theta_range=(get("degradation", "theta_min", float, 0.0),
                     get("degradation", "theta_max", float, math.pi)),
        noise_range=(get("degradation", "noise_min", float, 0.0),
                     get("degradation", "noise_max", float, 10.0 / 255.0)),
        dct_quant=get("degradation", "dct_quant", bool, False),
        dct_quant_step=get("degradation", "dct_quant_step", float, 0.02),
        seed=get("degradation", "seed", int, 0),
    )
    degradation.validate()
    fusion = None
    if get("fusion", "enabled", bool, True):
        fusion = FusionConfig(
            lambda0=get("fusion", "lambda0", float, 0.99),
            k=get("fusion", "k", int, 20),
            scope=get("fusion", "scope", str, "generator_only"),
        )
        fusion.validate()

    manifest = get("data", "manifest", str, None)
    holdout = get("data", "holdout_manifest", str, None)
    return RunConfig(
        manifest=(path.parent / manifest).resolve() if manifest else None,
        holdout_manifest=(path.parent / holdout).resolve() if holdout else None,
        train=train,
        generator=generator,
        discriminator=discriminator,
        degradation=degradation,
        fusion=fusion,
        checkpoint_interval=get("train", "checkpoint_interval", int, 0),
        holdout_every=get("train", "holdout_every", int, 100),
        eval_seed=get("eval", "seed", int, 97),
    )


def write_resolved_config(cfg: RunConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["data"] = {}
    if cfg.manifest:
        parser["data"]["manifest"] = str(cfg.manifest)
    if cfg.holdout_manifest:
        parser["data"]["holdout_manifest"] = str(cfg.holdout_manifest)
    parser["generator"] = {
        "base_channels": str(cfg.generator.base_channels),
        "n_residual_blocks": str(cfg.generator.n_residual_blocks),
        "slope": repr(cfg.generator.slope),
    }
    parser["discriminator"] = {
        "base_channels": str(cfg.discriminator.base_channels),
        "n_downsamples": str(cfg.discriminator.n_downsamples),
        "slope": repr(cfg.discriminator.slope),
    }
    t = cfg.train
    parser["train"] = {
        "lr": repr(t.lr), "beta1": repr(t.betas[0]), "beta2": repr(t.betas[1]),
        "batch_size": str(t.batch_size), "hr_patch": str(t.hr_patch),
        "total_iters": str(t.total_iters), "adv_weight": repr(t.adv_weight),
        "l1_weight": repr(t.l1_weight), "clamp_hinge": str(t.clamp_hinge),
        "seed": str(t.seed), "checkpoint_interval": str(cfg.checkpoint_interval),
        "holdout_every": str(cfg.holdout_every),
    }
    if cfg.fusion:
        parser["fusion"] = {"enabled": "true", "lambda0": repr(cfg.fusion.lambda0),
                            "k": str(cfg.fusion.k), "scope": cfg.fusion.scope}
    else:
        parser["fusion"] = {"enabled": "false"}
    d = cfg.degradation
    parser["degradation"] = {
        "kernel_size": str(d.kernel_size),
        "sigma_min": repr(d.sigma_range[0]), "sigma_max": repr(d.sigma_range[1]),
        "anisotropic": str(d.anisotropic),
        "theta_min": repr(d.theta_range[0]), "theta_max": repr(d.theta_range[1]),
        "noise_min": repr(d.noise_range[0]), "noise_max": repr(d.noise_range[1]),
        "dct_quant": str(d.dct_quant), "dct_quant_step": repr(d.dct_quant_step),
        "seed": str(d.seed),
    }
    parser["eval"] = {"seed": str(cfg.eval_seed)}
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)

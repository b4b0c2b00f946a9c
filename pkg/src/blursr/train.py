"""Dual-branch adversarial trainer.

Two branches with shared architecture train independently: the general
branch on sharp data under the standard unconditional hinge objective,
the blur branch on blurred data under a blur-map-conditional variant
that concatenates the binary map to the discriminator input. Batches
route equal amounts of data to each branch, and an optional fusion hook
cross-interpolates branch weights on its own schedule.

The printed form of the conditional objective,

    mean over logits of (1 - D(hr|M)) + (1 + D(sr|M)),

is unbounded below, so the default applies the standard hinge clamp
max(0, .) to both terms; clamp=False evaluates the literal form.
"""

from __future__ import annotations

import collections
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import autograd as ag
from . import checkpoint as cp
from . import fusion as fu
from .autograd import Tensor
from .checkpoint import ParamSet
from .dataset import DatasetManifest, load_image, load_mask, sample_patch
from .degrade import DegradationConfig, degrade
from .errors import InvalidArgumentError, NumericError
from .models import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    discriminator_forward,
    generator_forward,
)

__all__ = [
    "TrainConfig",
    "BranchState",
    "TrainingSet",
    "LossRecord",
    "TrainResult",
    "adversarial_d_loss_from_logits",
    "conditional_d_loss",
    "unconditional_d_loss",
    "generator_loss",
    "AdamState",
    "init_adam",
    "adam_step",
    "train_step",
    "run_dual_branch",
    "split_branches",
    "write_loss_csv",
    "write_fusion_csv",
    "write_holdout_csv",
]


@dataclass
class TrainConfig:
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.99)
    batch_size: int = 8
    hr_patch: int = 64
    total_iters: int = 1000
    adv_weight: float = 0.05
    l1_weight: float = 1.0
    clamp_hinge: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0:
            raise InvalidArgumentError(f"lr must be positive, got {self.lr}")
        if self.adv_weight < 0 or self.l1_weight < 0:
            raise InvalidArgumentError("loss weights must be non-negative")
        if self.hr_patch % 4:
            raise InvalidArgumentError(f"hr_patch must be divisible by 4, got {self.hr_patch}")
        if self.batch_size < 1 or self.total_iters < 0:
            raise InvalidArgumentError("batch_size must be >= 1 and total_iters >= 0")


# ---------------------------------------------------------------------------
# losses


def adversarial_d_loss_from_logits(real_logits: Tensor, fake_logits: Tensor, clamp: bool = True) -> Tensor:
    """Discriminator objective on raw logits maps.

    mean of [h(1 - real) + h(1 + fake)] with h = max(0,.) when clamp else
    the identity (the literal printed form).
    """
    one_minus_real = ag.add_scalar(ag.scale(real_logits, -1.0), 1.0)
    one_plus_fake = ag.add_scalar(fake_logits, 1.0)
    if clamp:
        one_minus_real = ag.leaky_relu(one_minus_real, 0.0)
        one_plus_fake = ag.leaky_relu(one_plus_fake, 0.0)
    return ag.reduce_mean(ag.add(one_minus_real, one_plus_fake))


def conditional_d_loss(d_params: ParamSet, hr: Tensor, sr: Tensor, mask_hr: Tensor,
                       clamp: bool = True) -> Tensor:
    """Blur-conditional discriminator loss; sr is detached internally."""
    if hr.shape != sr.shape:
        raise InvalidArgumentError(f"hr {hr.shape} and sr {sr.shape} shapes differ")
    real = discriminator_forward(d_params, hr, mask_hr)
    fake = discriminator_forward(d_params, sr.detach(), mask_hr)
    return adversarial_d_loss_from_logits(real, fake, clamp)


def unconditional_d_loss(d_params: ParamSet, hr: Tensor, sr: Tensor, clamp: bool = True) -> Tensor:
    if hr.shape != sr.shape:
        raise InvalidArgumentError(f"hr {hr.shape} and sr {sr.shape} shapes differ")
    real = discriminator_forward(d_params, hr)
    fake = discriminator_forward(d_params, sr.detach())
    return adversarial_d_loss_from_logits(real, fake, clamp)


def generator_loss(g_out: Tensor, hr: Tensor, d_params: ParamSet, mask: Optional[Tensor] = None,
                   l1_weight: float = 1.0, adv_weight: float = 0.05) -> tuple[Tensor, float, float]:
    """L1 reconstruction plus the non-saturating hinge partner -mean D(.).

    Returns (total, l1 term, adversarial term) with the terms as floats.
    """
    if g_out.shape != hr.shape:
        raise InvalidArgumentError(f"generator output {g_out.shape} and hr {hr.shape} shapes differ")
    l1 = ag.reduce_mean(ag.absolute(ag.sub(g_out, hr)))
    adv = ag.scale(ag.reduce_mean(discriminator_forward(d_params, g_out, mask)), -1.0)
    total = ag.add(ag.scale(l1, l1_weight), ag.scale(adv, adv_weight))
    return total, l1.item(), adv.item()


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam(params: ParamSet) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(t.data) for name, t in params.items()},
        v={name: np.zeros_like(t.data) for name, t in params.items()},
    )


def adam_step(params: ParamSet, grads: dict[str, np.ndarray], state: AdamState, t: int,
              lr: float, betas: tuple[float, float] = (0.9, 0.99), eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, applied in place.

    Raises NumericError before touching any state if a gradient is
    non-finite, so a skipped step leaves params and moments untouched.
    """
    if t < 1:
        raise InvalidArgumentError(f"step counter must be >= 1, got {t}")
    b1, b2 = betas
    for name in params.names():
        g = grads[name]
        if g.shape != params[name].data.shape:
            raise InvalidArgumentError(f"gradient shape mismatch for {name!r}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name!r}")
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, tensor in params.items():
        g = grads[name].astype(np.float32, copy=False)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        tensor.assign_(tensor.data - np.float32(lr) * m_hat / (np.sqrt(v_hat) + eps))


# ---------------------------------------------------------------------------
# branch state and single training step


@dataclass
class BranchState:
    name: str
    generator: ParamSet
    discriminator: ParamSet
    gen_adam: AdamState
    disc_adam: AdamState
    t: int = 0

    @property
    def conditional(self) -> bool:
        return self.discriminator["disc.in.w"].shape[1] == 4


def make_branch(name: str, gen_config: GeneratorConfig, disc_config: DiscriminatorConfig,
                seed: int) -> BranchState:
    gen = build_generator(gen_config, seed)
    disc = build_discriminator(disc_config, seed)
    gen.set_requires_grad(True)
    disc.set_requires_grad(True)
    return BranchState(name=name, generator=gen, discriminator=disc,
                       gen_adam=init_adam(gen), disc_adam=init_adam(disc))


@dataclass
class LossRecord:
    iteration: int
    branch: str
    d_loss: float
    g_l1: float
    g_adv: float
    skipped: bool = False


def _collect_grads(params: ParamSet) -> dict[str, np.ndarray]:
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in params.items()}


def train_step(branch: BranchState, batch: tuple[Tensor, Tensor, Optional[Tensor]],
               config: TrainConfig) -> LossRecord:
    """One discriminator update followed by one generator update."""
    lr_imgs, hr_imgs, masks = batch
    if branch.conditional and masks is None:
        raise InvalidArgumentError(f"branch {branch.name!r} is conditional and requires masks")
    if not branch.conditional and masks is not None:
        raise InvalidArgumentError(f"branch {branch.name!r} is unconditional and takes no masks")

    gen, disc = branch.generator, branch.discriminator
    step = branch.t + 1
    skipped = False

    sr = generator_forward(gen, lr_imgs)

    disc.zero_grad()
    if branch.conditional:
        d_loss = conditional_d_loss(disc, hr_imgs, sr, masks, clamp=config.clamp_hinge)
    else:
        d_loss = unconditional_d_loss(disc, hr_imgs, sr, clamp=config.clamp_hinge)
    d_loss.backward()
    try:
        adam_step(disc, _collect_grads(disc), branch.disc_adam, step, config.lr, config.betas)
    except NumericError:
        skipped = True

    gen.zero_grad()
    disc.set_requires_grad(False)
    try:
        total, l1_val, adv_val = generator_loss(
            sr, hr_imgs, disc, masks, l1_weight=config.l1_weight, adv_weight=config.adv_weight)
        total.backward()
        try:
            adam_step(gen, _collect_grads(gen), branch.gen_adam, step, config.lr, config.betas)
        except NumericError:
            skipped = True
    finally:
        disc.set_requires_grad(True)

    branch.t = step
    return LossRecord(iteration=step, branch=branch.name, d_loss=d_loss.item(),
                      g_l1=l1_val, g_adv=adv_val, skipped=skipped)


# ---------------------------------------------------------------------------
# data plumbing


class TrainingSet:
    """Decoded samples held in memory: HWC float images plus HW masks."""

    def __init__(self, images: list[np.ndarray], masks: list[np.ndarray], ids: Optional[list[str]] = None):
        if len(images) != len(masks):
            raise InvalidArgumentError("images and masks counts differ")
        self.images = images
        self.masks = masks
        self.ids = ids or [str(i) for i in range(len(images))]

    def __len__(self) -> int:
        return len(self.images)

    @classmethod
    def from_samples(cls, manifest: DatasetManifest, samples) -> "TrainingSet":
        images, masks, ids = [], [], []
        for s in samples:
            images.append(load_image(manifest.hr_file(s)))
            masks.append(load_mask(manifest.mask_file(s)))
            ids.append(s.id)
        return cls(images, masks, ids)


def split_branches(manifest: DatasetManifest) -> tuple[TrainingSet, TrainingSet]:
    """General (blur_type none) vs blur samples, rejected ones excluded."""
    usable = manifest.training_samples()
    general = [s for s in usable if s.blur_type == "none"]
    blur = [s for s in usable if s.blur_type != "none"]
    if not general or not blur:
        raise InvalidArgumentError("need at least one general and one blur sample")
    return TrainingSet.from_samples(manifest, general), TrainingSet.from_samples(manifest, blur)


class _EpochSampler:
    """Reshuffled epochs; exhaustion re-permutes, never errors."""

    def __init__(self, n: int, rng: np.random.Generator):
        if n < 1:
            raise InvalidArgumentError("empty dataset")
        self.n = n
        self.rng = rng
        self._queue: collections.deque[int] = collections.deque()

    def take(self, count: int) -> list[int]:
        out = []
        while len(out) < count:
            if not self._queue:
                self._queue.extend(int(i) for i in self.rng.permutation(self.n))
            out.append(self._queue.popleft())
        return out


def _assemble_batch(data: TrainingSet, indices: list[int], patch: int, rng: np.random.Generator,
                    deg_config: DegradationConfig, deg_rng: np.random.Generator,
                    with_masks: bool) -> tuple[Tensor, Tensor, Optional[Tensor]]:
    hr_list, mask_list = [], []
    for idx in indices:
        hr_p, mask_p = sample_patch(data.images[idx], data.masks[idx], patch, rng)
        hr_list.append(hr_p.transpose(2, 0, 1))
        mask_list.append(mask_p[None].astype(np.float32))
    hr = Tensor(np.stack(hr_list).astype(np.float32))
    lr = degrade(hr, deg_config, deg_rng)
    masks = Tensor(np.stack(mask_list)) if with_masks else None
    return lr, hr, masks


# ---------------------------------------------------------------------------
# the dual-branch loop


@dataclass
class HoldoutRecord:
    iteration: int
    l1: float


@dataclass
class TrainResult:
    w_general: ParamSet
    w_blur: ParamSet
    general_state: BranchState
    blur_state: BranchState
    loss_records: list[LossRecord]
    fusion_logs: list[fu.FusionLog]
    holdout_records: list[HoldoutRecord]
    routing: list[str]
    wall_seconds: float


def _holdout_batch(holdout: TrainingSet, patch: int, deg_config: DegradationConfig,
                   seed: int) -> tuple[Tensor, Tensor]:
    hr_list = []
    for img in holdout.images:
        h, w = img.shape[:2]
        oy = ((h - patch) // 2) // 4 * 4
        ox = ((w - patch) // 2) // 4 * 4
        hr_list.append(img[oy : oy + patch, ox : ox + patch].transpose(2, 0, 1))
    hr = Tensor(np.stack(hr_list).astype(np.float32))
    lr = degrade(hr, deg_config, np.random.default_rng(seed))
    return lr, hr


def _fused_holdout_l1(general: BranchState, blur: BranchState, lr: Tensor, hr: Tensor) -> float:
    fused = fu.final_fuse(general.generator, blur.generator)
    fused.set_requires_grad(False)
    out = generator_forward(fused, lr)
    return float(np.abs(out.data - hr.data).mean())


def run_dual_branch(
    general_cfg: TrainConfig,
    blur_cfg: TrainConfig,
    general_data: TrainingSet,
    blur_data: TrainingSet,
    fusion: Optional[fu.FusionConfig] = None,
    *,
    gen_config: GeneratorConfig = GeneratorConfig(),
    disc_config: DiscriminatorConfig = DiscriminatorConfig(),
    degradation: Optional[DegradationConfig] = None,
    holdout: Optional[TrainingSet] = None,
    holdout_every: int = 100,
    checkpoint_dir=None,
    checkpoint_interval: int = 0,
    progress: Optional[Callable[[int], None]] = None,
) -> TrainResult:
    """Interleaved training of both branches with optional periodic fusion.

    Model initialization is seeded from general_cfg.seed for both branches
    (shared starting point); each branch draws its data order, crops and
    degradations from its own seeded streams. Iteration count comes from
    general_cfg.total_iters.
    """
    general_cfg.validate()
    blur_cfg.validate()
    if fusion is not None:
        fusion.validate()
    if len(general_data) == 0 or len(blur_data) == 0:
        raise InvalidArgumentError("both branch datasets must be non-empty")
    deg = degradation or DegradationConfig()

    general = make_branch("general", gen_config, DiscriminatorConfig(
        in_channels=3, base_channels=disc_config.base_channels,
        n_downsamples=disc_config.n_downsamples, slope=disc_config.slope), seed=general_cfg.seed)
    blur = make_branch("blur", gen_config, DiscriminatorConfig(
        in_channels=4, base_channels=disc_config.base_channels,
        n_downsamples=disc_config.n_downsamples, slope=disc_config.slope), seed=general_cfg.seed)

    def streams(cfg: TrainConfig, tag: str) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
        root = np.random.SeedSequence((cfg.seed, zlib.crc32(tag.encode("utf-8"))))
        order, patch, degr = root.spawn(3)
        return (np.random.default_rng(order), np.random.default_rng(patch), np.random.default_rng(degr))

    g_order, g_patch, g_deg = streams(general_cfg, "general")
    b_order, b_patch, b_deg = streams(blur_cfg, "blur")
    g_sampler = _EpochSampler(len(general_data), g_order)
    b_sampler = _EpochSampler(len(blur_data), b_order)

    hold_pair = None
    if holdout is not None:
        hold_pair = _holdout_batch(holdout, general_cfg.hr_patch, deg, seed=general_cfg.seed + 7919)

    loss_records: list[LossRecord] = []
    fusion_logs: list[fu.FusionLog] = []
    holdout_records: list[HoldoutRecord] = []
    routing: list[str] = []
    total_iters = general_cfg.total_iters
    started = time.monotonic()

    for t in range(1, total_iters + 1):
        # equal-mix routing: strict one-for-one alternation
        for _ in range(max(general_cfg.batch_size, blur_cfg.batch_size)):
            routing.append("general")
            routing.append("blur")

        g_batch = _assemble_batch(general_data, g_sampler.take(general_cfg.batch_size),
                                  general_cfg.hr_patch, g_patch, deg, g_deg, with_masks=False)
        loss_records.append(train_step(general, g_batch, general_cfg))

        b_batch = _assemble_batch(blur_data, b_sampler.take(blur_cfg.batch_size),
                                  blur_cfg.hr_patch, b_patch, deg, b_deg, with_masks=True)
        loss_records.append(train_step(blur, b_batch, blur_cfg))

        if fusion is not None and fu.should_fuse(t, fusion.k):
            lam = fu.adaptive_lambda(general.generator, blur.generator, fusion.lambda0)
            new_g, new_b, log = fu.cross_interpolate(general.generator, blur.generator, lam, iteration=t)
            for name, tensor in general.generator.items():
                tensor.assign_(new_g[name].data)
            for name, tensor in blur.generator.items():
                tensor.assign_(new_b[name].data)
            if fusion.scope == "generator_and_discriminator":
                if not general.discriminator.aligned_with(blur.discriminator):
                    raise InvalidArgumentError(
                        "discriminator fusion requires aligned discriminators; the conditional "
                        "blur discriminator has an extra input channel")
                d_lam = fu.adaptive_lambda(general.discriminator, blur.discriminator, fusion.lambda0)
                nd_g, nd_b, _ = fu.cross_interpolate(general.discriminator, blur.discriminator, d_lam, iteration=t)
                for name, tensor in general.discriminator.items():
                    tensor.assign_(nd_g[name].data)
                for name, tensor in blur.discriminator.items():
                    tensor.assign_(nd_b[name].data)
            fusion_logs.append(log)

        if hold_pair is not None and (t <= 100 or t % holdout_every == 0 or t == total_iters):
            holdout_records.append(HoldoutRecord(iteration=t, l1=_fused_holdout_l1(general, blur, *hold_pair)))

        if checkpoint_dir is not None and checkpoint_interval and t % checkpoint_interval == 0:
            _save_branch_checkpoints(checkpoint_dir, general, blur, t)
        if progress is not None:
            progress(t)

    for branch in (general, blur):
        branch.generator.metadata["train.iterations"] = str(branch.t)
        branch.generator.metadata["train.branch"] = branch.name
    if checkpoint_dir is not None:
        _save_branch_checkpoints(checkpoint_dir, general, blur, None)

    return TrainResult(
        w_general=general.generator,
        w_blur=blur.generator,
        general_state=general,
        blur_state=blur,
        loss_records=loss_records,
        fusion_logs=fusion_logs,
        holdout_records=holdout_records,
        routing=routing,
        wall_seconds=time.monotonic() - started,
    )


def _save_branch_checkpoints(out_dir, general: BranchState, blur: BranchState, t: Optional[int]) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = "final" if t is None else f"{t:06d}"
    cp.save(general.generator, out_dir / f"general_gen_{suffix}.ckpt")
    cp.save(general.discriminator, out_dir / f"general_disc_{suffix}.ckpt")
    cp.save(blur.generator, out_dir / f"blur_gen_{suffix}.ckpt")
    cp.save(blur.discriminator, out_dir / f"blur_disc_{suffix}.ckpt")


# ---------------------------------------------------------------------------
# delimited log output


def write_loss_csv(records: list[LossRecord], path) -> None:
    lines = ["iteration,branch,d_loss,g_l1,g_adv"]
    for r in records:
        lines.append(f"{r.iteration},{r.branch},{r.d_loss:.8g},{r.g_l1:.8g},{r.g_adv:.8g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_fusion_csv(logs: list[fu.FusionLog], path) -> None:
    lines = ["iteration,lambda,cos_before,cos_after,diff_norm_before,diff_norm_after"]
    for f in logs:
        lines.append(
            f"{f.iteration},{f.lam:.10g},{f.cos_before:.10g},{f.cos_after:.10g},"
            f"{f.diff_norm_before:.10g},{f.diff_norm_after:.10g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_holdout_csv(records: list[HoldoutRecord], path) -> None:
    lines = ["iteration,holdout_l1"]
    for r in records:
        lines.append(f"{r.iteration},{r.l1:.8g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

import numpy as np
import pytest

import blursr.autograd as ag
import blursr.checkpoint as cp
from blursr import models
from blursr.autograd import Tensor
from blursr.errors import InvalidArgumentError


def gen_cfg(**kw):
    return models.GeneratorConfig(**kw)


class TestBuildGenerator:
    def test_same_seed_bit_identical(self):
        a = models.build_generator(gen_cfg(), seed=7)
        b = models.build_generator(gen_cfg(), seed=7)
        assert cp.flatten(a).tobytes() == cp.flatten(b).tobytes()

    def test_different_seeds_differ(self):
        a = models.build_generator(gen_cfg(), seed=7)
        b = models.build_generator(gen_cfg(), seed=8)
        assert cp.flatten(a).tobytes() != cp.flatten(b).tobytes()

    def test_parameter_count_closed_form(self):
        # hand count for 16 channels, 4 blocks, 3x3 convs:
        # head 3->16 + per-block 2x(16->16) + two upsample convs + tail 16->3,
        # each conv contributing cout*cin*9 weights and cout biases
        c = 16
        conv = lambda cin, cout: cout * cin * 9 + cout
        expected = conv(3, c) + 4 * 2 * conv(c, c) + 2 * conv(c, c) + conv(c, 3)
        ps = models.build_generator(gen_cfg(base_channels=16, n_residual_blocks=4), seed=0)
        assert ps.total_parameters() == expected == 24083


class TestGeneratorForward:
    def test_shape_contract(self):
        ps = models.build_generator(gen_cfg(base_channels=8, n_residual_blocks=2), seed=0)
        out = models.generator_forward(ps, ag.zeros((1, 3, 8, 8)))
        assert out.shape == (1, 3, 32, 32)

    def test_shape_contract_across_extents(self, rng):
        ps = models.build_generator(gen_cfg(base_channels=4, n_residual_blocks=1), seed=0)
        for h, w in [(4, 4), (5, 7), (16, 9), (64, 64)]:
            lr = ag.tensor(rng.random((1, 3, h, w), dtype=np.float32))
            assert models.generator_forward(ps, lr).shape == (1, 3, 4 * h, 4 * w)

    def test_zero_tail_reduces_to_nearest_upscale(self, rng):
        ps = models.build_generator(gen_cfg(base_channels=8, n_residual_blocks=2), seed=0, zero_tail=True)
        lr = ag.tensor(rng.random((2, 3, 6, 6), dtype=np.float32))
        out = models.generator_forward(ps, lr)
        np.testing.assert_array_equal(out.data, models.nearest_upscale(lr, 4).data)

    def test_channel_mismatch_rejected(self, rng):
        ps = models.build_generator(gen_cfg(base_channels=4, n_residual_blocks=1), seed=0)
        with pytest.raises(InvalidArgumentError):
            models.generator_forward(ps, ag.tensor(rng.random((1, 1, 8, 8), dtype=np.float32)))

    def test_forward_determinism(self, rng):
        ps = models.build_generator(gen_cfg(base_channels=4, n_residual_blocks=1), seed=3)
        lr = ag.tensor(rng.random((1, 3, 8, 8), dtype=np.float32))
        a = models.generator_forward(ps, lr).data.tobytes()
        b = models.generator_forward(ps, lr).data.tobytes()
        assert a == b

    def test_weight_gradient_matches_finite_difference(self, rng):
        cfg = gen_cfg(base_channels=4, n_residual_blocks=1)
        ps = models.build_generator(cfg, seed=1)
        lr_data = rng.random((1, 3, 4, 4), dtype=np.float32)

        ps.set_requires_grad(True)
        loss = ag.reduce_mean(models.generator_forward(ps, ag.tensor(lr_data)))
        loss.backward()
        analytic = ps["gen.block00.c1.w"].grad

        # float64 twin of the whole model for noise-free difference quotients
        def loss64(perturbed: np.ndarray) -> float:
            ps64 = cp.ParamSet(metadata=ps.metadata)
            for name, t in ps.items():
                data = perturbed if name == "gen.block00.c1.w" else t.data
                ps64.add(name, Tensor(np.asarray(data, dtype=np.float64), dtype=np.float64))
            out = models.generator_forward(ps64, Tensor(lr_data.astype(np.float64), dtype=np.float64))
            return ag.reduce_mean(out).item()

        base = ps["gen.block00.c1.w"].data.astype(np.float64)
        coords = [tuple(rng.integers(0, s) for s in base.shape) for _ in range(8)]
        h = 1e-3
        for idx in coords:
            plus, minus = base.copy(), base.copy()
            plus[idx] += h
            minus[idx] -= h
            numeric = (loss64(plus) - loss64(minus)) / (2 * h)
            a_val = float(analytic[idx])
            assert abs(a_val - numeric) / max(1e-6, abs(a_val) + abs(numeric)) < 1e-3


class TestDiscriminator:
    def test_logits_shape(self, rng):
        ps = models.build_discriminator(models.DiscriminatorConfig(in_channels=3, base_channels=8, n_downsamples=2), seed=0)
        img = ag.tensor(rng.random((1, 3, 64, 64), dtype=np.float32))
        assert models.discriminator_forward(ps, img).shape == (1, 1, 16, 16)

    def test_first_layer_channel_counts(self):
        uncond = models.build_discriminator(models.DiscriminatorConfig(in_channels=3), seed=0)
        cond = models.build_discriminator(models.DiscriminatorConfig(in_channels=4), seed=0)
        assert uncond["disc.in.w"].shape[1] == 3
        assert cond["disc.in.w"].shape[1] == 4

    def test_mask_flip_changes_logits(self, rng):
        ps = models.build_discriminator(models.DiscriminatorConfig(in_channels=4, base_channels=8), seed=0)
        img = ag.tensor(rng.random((1, 3, 32, 32), dtype=np.float32))
        ones = ag.full((1, 1, 32, 32), 1.0)
        zeros_mask = ag.zeros((1, 1, 32, 32))
        delta = np.abs(models.discriminator_forward(ps, img, ones).data
                       - models.discriminator_forward(ps, img, zeros_mask).data)
        assert delta.max() > 0

    def test_mask_jacobian_nonzero_at_init(self, rng):
        # finite-difference probe: the condition channel must be consumed
        ps = models.build_discriminator(models.DiscriminatorConfig(in_channels=4, base_channels=8), seed=5)
        img = rng.random((1, 3, 16, 16)).astype(np.float32)
        mask = (rng.random((1, 1, 16, 16)) > 0.5).astype(np.float32)
        h = 1e-2
        base = ag.reduce_mean(models.discriminator_forward(ps, ag.tensor(img), ag.tensor(mask))).item()
        bumped = mask.copy()
        bumped[0, 0, 5, 5] += h
        shifted = ag.reduce_mean(models.discriminator_forward(ps, ag.tensor(img), ag.tensor(bumped))).item()
        assert abs(shifted - base) / h > 1e-6

    def test_mask_presence_contract(self, rng):
        img = ag.tensor(rng.random((1, 3, 16, 16), dtype=np.float32))
        mask = ag.full((1, 1, 16, 16), 1.0)
        uncond = models.build_discriminator(models.DiscriminatorConfig(in_channels=3, base_channels=8), seed=0)
        cond = models.build_discriminator(models.DiscriminatorConfig(in_channels=4, base_channels=8), seed=0)
        with pytest.raises(InvalidArgumentError):
            models.discriminator_forward(uncond, img, mask)
        with pytest.raises(InvalidArgumentError):
            models.discriminator_forward(cond, img, None)

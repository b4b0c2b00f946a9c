"""Acceptance suite: one pass/fail line per criterion.

Criteria 5-7 share a set of seeded 2,000-iteration dual-branch runs on a
generated 64-image synthetic corpus (128x128 HR, half-image defocus
masks). The toy model config is desk-scale (8-channel generator with 2
residual blocks, 8-channel discriminators, batch 4, HR patch 32) with the
stated training constants: Adam lr 1e-4, betas (0.9, 0.99), equal-mix
batching, fusion every k=20 iterations with lambda0=0.99.
"""

import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

import blursr.autograd as ag
import blursr.checkpoint as cp
import blursr.fusion as fu
import blursr.train as tr
from blursr import dataset as ds
from blursr import figures as fig
from blursr import metrics as mx
from blursr import models
from blursr.autograd import Tensor
from blursr.degrade import DegradationConfig, degrade, rng_for_sample
from blursr.service import create_app

TOTAL_ITERS = 2000
TOY_GEN = models.GeneratorConfig(base_channels=8, n_residual_blocks=2)
TOY_DISC = models.DiscriminatorConfig(base_channels=8, n_downsamples=2)


def toy_train_config(seed):
    return tr.TrainConfig(lr=1e-4, betas=(0.9, 0.99), batch_size=4, hr_patch=32,
                          total_iters=TOTAL_ITERS, adv_weight=0.05, l1_weight=1.0,
                          clamp_hinge=True, seed=seed)


def criterion(n, desc, ok):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {desc}")
    assert ok, f"criterion {n} failed: {desc}"


@pytest.fixture(scope="module")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_toyset")
    train_path, hold_path = ds.make_toy_dataset(root, n_general=32, n_blur=32,
                                                size=128, seed=0, holdout=8)
    manifest = ds.load_manifest(train_path)
    general, blur = tr.split_branches(manifest)
    hold_manifest = ds.load_manifest(hold_path)
    holdout = tr.TrainingSet.from_samples(hold_manifest, hold_manifest.samples)
    return general, blur, holdout


@pytest.fixture(scope="module")
def toy_runs(toy_corpus):
    general, blur, holdout = toy_corpus

    def run(seed, with_fusion, with_holdout=False):
        return tr.run_dual_branch(
            toy_train_config(seed), toy_train_config(seed), general, blur,
            fu.FusionConfig(lambda0=0.99, k=20) if with_fusion else None,
            gen_config=TOY_GEN, disc_config=TOY_DISC,
            holdout=holdout if with_holdout else None,
        )

    main = run(seed=0, with_fusion=True, with_holdout=True)
    rerun = run(seed=0, with_fusion=True, with_holdout=True)
    cosines = {}
    fusion_on_logs = {0: main.fusion_logs}
    for seed in (0, 1, 2):
        on = main if seed == 0 else run(seed, with_fusion=True)
        off = run(seed, with_fusion=False)
        if seed != 0:
            fusion_on_logs[seed] = on.fusion_logs
        cosines[seed] = (
            cp.cosine_similarity(on.w_general, on.w_blur),
            cp.cosine_similarity(off.w_general, off.w_blur),
        )
    return {"main": main, "rerun": rerun, "cosines": cosines, "fusion_on_logs": fusion_on_logs}


def test_criterion_1_gradient_suite():
    started = time.monotonic()
    results = ag.run_grad_check_suite(seeds=5)
    elapsed = time.monotonic() - started
    worst = max(results.values())
    criterion(1, f"grad_check worst rel error {worst:.2e} over {len(results)} ops x 5 seeds, "
                 f"runtime {elapsed:.1f}s < 60s",
              worst < 1e-3 and elapsed < 60.0)


def _random_pair(rng, correlated):
    a, b = cp.ParamSet(), cp.ParamSet()
    for i in range(int(rng.integers(2, 5))):
        shape = tuple(int(rng.integers(1, 5)) for _ in range(4))
        if correlated:
            base = rng.standard_normal(shape).astype(np.float32)
            base += np.sign(base) * 0.05
            drift = float(rng.uniform(0.002, 0.02))
            a.add(f"p{i}", Tensor(base + (drift * rng.standard_normal(shape)).astype(np.float32)))
            b.add(f"p{i}", Tensor(base + (drift * rng.standard_normal(shape)).astype(np.float32)))
        else:
            a.add(f"p{i}", Tensor(rng.standard_normal(shape).astype(np.float32)))
            b.add(f"p{i}", Tensor(rng.standard_normal(shape).astype(np.float32)))
    return a, b


def test_criterion_2_fusion_algebra():
    failures = []
    # (a)-(c) on arbitrary random pairs
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        a, b = _random_pair(rng, correlated=False)
        lam = fu.adaptive_lambda(a, b, 0.99)
        if not 0.985 <= lam <= 0.995:
            failures.append(f"pair {seed}: lambda {lam} out of bounds")
        new_a, new_b, log = fu.cross_interpolate(a, b, lam)
        sum_err = np.abs((cp.flatten(new_a) + cp.flatten(new_b)) - (cp.flatten(a) + cp.flatten(b))).max()
        if sum_err > 1e-6:
            failures.append(f"pair {seed}: sum preservation error {sum_err:.2e}")
        expected = abs(2 * lam - 1) * log.diff_norm_before
        if abs(log.diff_norm_after - expected) > 1e-5 * max(expected, 1e-12):
            failures.append(f"pair {seed}: contraction {log.diff_norm_after} != {expected}")
    # (d) bit-level fuse invariance on branch-drift pairs (the fusion regime);
    # f32 cannot carry the pair mean once the difference dominates it, so the
    # domain precondition is asserted alongside
    for seed in range(50):
        rng = np.random.default_rng(2000 + seed)
        a, b = _random_pair(rng, correlated=True)
        half_sum = (cp.flatten(a).astype(np.float64) + cp.flatten(b).astype(np.float64)) / 2
        half_diff = (cp.flatten(a).astype(np.float64) - cp.flatten(b).astype(np.float64)) / 2
        if not (np.abs(half_diff) <= 3 * np.abs(half_sum)).all():
            failures.append(f"pair {seed}: drift exceeded the representable-mean domain")
            continue
        baseline = cp.flatten(fu.final_fuse(a, b)).tobytes()
        for _ in range(4):
            lam = fu.adaptive_lambda(a, b, 0.99)
            a, b, _ = fu.cross_interpolate(a, b, lam)
        if cp.flatten(fu.final_fuse(a, b)).tobytes() != baseline:
            failures.append(f"pair {seed}: fuse not bit-invariant")
    criterion(2, "fusion algebra on 50+50 random pairs (sum preservation, contraction, "
                 "lambda bounds, bit-level fuse invariance)" + ("; " + "; ".join(failures[:3]) if failures else ""),
              not failures)


def test_criterion_3_conditional_loss_matches_brute_force():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(300 + seed)
        c, h, w = (int(rng.integers(1, 4)) for _ in range(3))
        real = (3 * rng.standard_normal((1, c, h, w))).astype(np.float32)
        fake = (3 * rng.standard_normal((1, c, h, w))).astype(np.float32)
        total = 0.0
        for ci in range(c):
            for hi in range(h):
                for wi in range(w):
                    total += (1.0 - float(real[0, ci, hi, wi])) + (1.0 + float(fake[0, ci, hi, wi]))
        expected = total / (w * h * c)
        got = tr.adversarial_d_loss_from_logits(Tensor(real), Tensor(fake), clamp=False).item()
        worst = max(worst, abs(got - expected))
    criterion(3, f"unclamped conditional loss vs scalar triple-loop oracle, max |delta| {worst:.2e}",
              worst < 1e-6)


def test_criterion_4_partition_and_filter_rules():
    mapping = {f: ds.size_category(f) for f in (0.44, 0.45, 0.50, 0.55, 0.56)}
    expected = {0.44: "small", 0.45: "medium", 0.50: "medium", 0.55: "medium", 0.56: "large"}

    def mask_with(h, w, fraction):
        m = np.ones((h, w), dtype=np.uint8)
        m.reshape(-1)[: round(fraction * h * w)] = 0
        return m

    ok = mapping == expected
    accept, _ = ds.filter_sample(mask_with(600, 600, 0.5), "blur_specific")
    reject_dominant, reason_dom = ds.filter_sample(mask_with(600, 600, 0.85), "blur_specific")
    reject_sparse, reason_sparse = ds.filter_sample(mask_with(600, 600, 0.03), "general_sr")
    accept_sparse_ok, _ = ds.filter_sample(mask_with(600, 600, 0.05), "general_sr")
    ok = ok and accept and not reject_dominant and reason_dom == "blur>80%"
    ok = ok and not reject_sparse and reason_sparse == "blur<5%" and accept_sparse_ok
    criterion(4, f"size categories {mapping} and filter rules (>80% and <5% rejected)", ok)


def test_criterion_5_toy_training_behavior(toy_runs):
    main, rerun = toy_runs["main"], toy_runs["rerun"]
    by_iter = {h.iteration: h.l1 for h in main.holdout_records}
    early = float(np.mean([by_iter[i] for i in range(1, 101)]))
    final = by_iter[TOTAL_ITERS]
    drop_ok = final <= 0.7 * early
    time_ok = main.wall_seconds < 900
    identical = (
        cp.flatten(main.w_general).tobytes() == cp.flatten(rerun.w_general).tobytes()
        and cp.flatten(main.w_blur).tobytes() == cp.flatten(rerun.w_blur).tobytes()
        and [(r.iteration, r.branch, r.d_loss, r.g_l1, r.g_adv) for r in main.loss_records]
        == [(r.iteration, r.branch, r.d_loss, r.g_l1, r.g_adv) for r in rerun.loss_records]
    )
    criterion(5, f"2000-iter toy run: {main.wall_seconds:.0f}s (<900s), held-out L1 "
                 f"{final:.4f} vs early avg {early:.4f} ({100 * (1 - final / early):.0f}% drop, need >=30%), "
                 f"seeded rerun bit-identical={identical}",
              drop_ok and time_ok and identical)


def test_criterion_6_conditional_discriminator_consumes_mask(toy_runs, toy_corpus, tmp_path):
    _, _, holdout = toy_corpus
    main = toy_runs["main"]
    fused = fu.final_fuse(main.w_general, main.w_blur)
    fused.set_requires_grad(False)
    d_params = main.blur_state.discriminator
    d_params.set_requires_grad(False)
    deg = DegradationConfig()

    deltas = []
    rendered = False
    for idx in range(len(holdout)):
        mask = holdout.masks[idx]
        if (mask == 0).sum() == 0:
            continue
        hr = Tensor(holdout.images[idx].transpose(2, 0, 1)[None].astype(np.float32))
        lr = degrade(hr, deg, rng_for_sample(123, f"acc6-{idx}"))
        sr_img = np.clip(models.generator_forward(fused, lr).data, 0.0, 1.0).astype(np.float32)
        sr = Tensor(sr_img)
        loss_map, true_regions = mx.disc_loss_map(d_params, hr, sr, mask)
        _, flipped_regions = mx.disc_loss_map(d_params, hr, sr, mask, condition_mask=1 - mask)
        deltas.append(abs(true_regions.blur - flipped_regions.blur))
        if not rendered:
            assert np.isfinite(loss_map).all()
            fig.render_loss_map(loss_map, tmp_path / "loss_map.png")
            rendered = (tmp_path / "loss_map.png").exists()
    mean_delta = float(np.mean(deltas))
    criterion(6, f"blur-region disc loss shifts by {mean_delta:.4f} (> 1e-3) when the mask "
                 f"condition is inverted; loss map rendered NaN-free={rendered}",
              mean_delta > 1e-3 and rendered)


def test_criterion_7_fusion_keeps_branches_close(toy_runs):
    contraction_ok = all(
        f.diff_norm_after < f.diff_norm_before
        for logs in toy_runs["fusion_on_logs"].values()
        for f in logs
    )
    n_events = sum(len(v) for v in toy_runs["fusion_on_logs"].values())
    wins = sum(1 for on, off in toy_runs["cosines"].values() if off < on)
    criterion(7, f"diff norm contracted at {n_events}/{n_events} fusion events; the fusion-enabled "
                 f"run ended with higher branch cosine on {wins}/3 seeds (majority needed)",
              contraction_ok and wins >= 2)


def test_criterion_8_metric_oracles(rng):
    psnr_err = abs(mx.psnr(np.zeros((8, 8)), np.full((8, 8), 0.5)) - 6.0206)
    ssim_worst = 0.0
    from test_metrics import brute_force_gmsd, brute_force_single_window_ssim

    for seed in range(5):
        r = np.random.default_rng(seed)
        a = r.random((11, 11))
        b = np.clip(a + 0.1 * r.standard_normal((11, 11)), 0, 1)
        ssim_worst = max(ssim_worst, abs(mx.ssim(a, b) - brute_force_single_window_ssim(a, b)))
    a4 = np.array([[0.0, 0.2, 0.4, 0.6], [0.1, 0.3, 0.5, 0.7],
                   [0.9, 0.8, 0.2, 0.1], [0.4, 0.4, 0.4, 0.4]])
    b4 = np.array([[0.0, 0.1, 0.5, 0.6], [0.2, 0.3, 0.4, 0.7],
                   [0.8, 0.8, 0.3, 0.0], [0.5, 0.4, 0.3, 0.4]])
    gmsd_err = abs(mx.gmsd(a4, b4) - brute_force_gmsd(a4, b4))

    d = models.build_discriminator(models.DiscriminatorConfig(in_channels=4, base_channels=8), seed=3)
    hr = Tensor(rng.random((1, 3, 32, 32), dtype=np.float32))
    sr = Tensor(rng.random((1, 3, 32, 32), dtype=np.float32))
    mask = np.ones((32, 32), dtype=np.uint8)
    mask[:, :12] = 0
    _, regions = mx.disc_loss_map(d, hr, sr, mask)
    recomb_err = abs(regions.all - (regions.blur_fraction * regions.blur
                                    + (1 - regions.blur_fraction) * regions.focus))
    criterion(8, f"metric oracles: psnr err {psnr_err:.2e} dB (<1e-3), ssim err {ssim_worst:.2e} "
                 f"(<1e-6), gmsd err {gmsd_err:.2e} (<1e-6), recombination err {recomb_err:.2e} (<1e-6)",
              psnr_err < 1e-3 and ssim_worst < 1e-6 and gmsd_err < 1e-6 and recomb_err < 1e-6)


def test_criterion_9_checkpoint_round_trip(tmp_path):
    ok = True
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ps = cp.ParamSet(metadata={"seed": str(seed), "note": "round trip"})
        ps.add("edge.empty", Tensor(np.zeros((0, int(rng.integers(1, 3)), 1, 1), dtype=np.float32)))
        ps.add("edge.single", Tensor(rng.standard_normal((1, 1, 1, 1)).astype(np.float32)))
        for i in range(int(rng.integers(0, 4))):
            shape = tuple(int(rng.integers(1, 5)) for _ in range(4))
            ps.add(f"t{i}", Tensor(rng.standard_normal(shape).astype(np.float32)))
        path = tmp_path / f"rt{seed}.ckpt"
        cp.save(ps, path)
        loaded = cp.load(path)
        same = (
            loaded.names() == ps.names()
            and loaded.metadata == ps.metadata
            and all(loaded[n].data.tobytes() == t.data.tobytes()
                    and loaded[n].shape == t.shape for n, t in ps.items())
        )
        cp.save(loaded, tmp_path / "resave.ckpt")
        same = same and (tmp_path / "resave.ckpt").read_bytes() == path.read_bytes()
        ok = ok and same
    criterion(9, "100 random ParamSets round-trip byte-exact incl. zero-length and "
                 "1-element tensors", ok)


def test_criterion_10_curation_api_headless(tmp_path):
    train_path, _ = ds.make_toy_dataset(tmp_path, n_general=2, n_blur=2, size=32,
                                        seed=31, holdout=1)
    client = TestClient(create_app(train_path))

    mask = np.zeros((32, 32), dtype=np.uint8)
    mask[:16] = 255
    buf = io.BytesIO()
    Image.fromarray(mask, mode="L").save(buf, format="PNG")
    payload = buf.getvalue()
    put = client.put("/api/samples/blur000/mask", content=payload)
    round_trip = put.status_code == 200 and client.get("/api/samples/blur000/mask").content == payload

    gray = io.BytesIO()
    Image.fromarray(np.full((32, 32), 128, dtype=np.uint8), mode="L").save(gray, format="PNG")
    non_binary_rejected = client.put("/api/samples/blur000/mask", content=gray.getvalue()).status_code == 422

    client.patch("/api/samples/gen000/labels", json={"intensity": "heavy"})
    stats = client.get("/api/stats").json()
    manifest = ds.load_manifest(train_path)
    recount_state: dict = {}
    recount_type: dict = {}
    for s in manifest.samples:
        recount_state[s.review_state] = recount_state.get(s.review_state, 0) + 1
        recount_type[s.blur_type] = recount_type.get(s.blur_type, 0) + 1
    stats_ok = (stats["by_review_state"] == recount_state
                and stats["by_blur_type"] == recount_type
                and stats["total"] == len(manifest.samples))
    criterion(10, f"curation API: PUT/GET mask byte-exact={round_trip}, non-binary mask "
                  f"422={non_binary_rejected}, stats equal fresh recount={stats_ok}",
              round_trip and non_binary_rejected and stats_ok)

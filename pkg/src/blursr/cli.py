"""Command-line entry points for every pipeline stage."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as cp
from . import dataset as ds
from . import figures as fig
from . import fusion as fu
from . import report as rp
from . import train as tr
from .config import load_run_config, write_resolved_config
from .degrade import DegradationConfig, degrade, rng_for_sample
from .errors import DegenerateInputError, FormatError, InvalidArgumentError, NumericError
from .metrics import disc_loss_map

EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _load_deg_config(args) -> DegradationConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config).degradation
    return DegradationConfig()


def cmd_toyset(args) -> int:
    train, hold = ds.make_toy_dataset(args.out, n_general=args.general, n_blur=args.blur,
                                      size=args.size, seed=args.seed, holdout=args.holdout)
    print(f"wrote {train} and {hold}")
    return 0


def cmd_degrade(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    deg = _load_deg_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s in manifest.samples:
        hr = ds.load_image(manifest.hr_file(s))
        h, w = hr.shape[:2]
        hr = hr[: h - h % 4, : w - w % 4]
        t = tr.Tensor(hr.transpose(2, 0, 1)[None].astype(np.float32))
        lr = degrade(t, deg, rng_for_sample(deg.seed, s.id))
        ds.save_image(out / f"{s.id}_lr.png", lr.data[0].transpose(1, 2, 0))
    print(f"degraded {len(manifest.samples)} samples into {out}")
    return 0


def cmd_estimate(args) -> int:
    manifest = ds.load_manifest(args.manifest, check_files=False)
    updated = 0
    for s in manifest.samples:
        if s.review_state == "human_verified" and not args.all:
            continue
        img = ds.load_image(manifest.hr_file(s))
        window = min(args.window, min(img.shape[:2]))
        mask = ds.estimate_blur_map(img, window=window, threshold=args.threshold)
        ds.atomic_write_bytes(manifest.mask_file(s), ds.encode_mask_png(mask))
        s.review_state = "auto"
        s.revision += 1
        updated += 1
    ds.save_manifest(manifest, args.manifest)
    print(f"estimated {updated} blur maps (review_state=auto)")
    return 0


def cmd_partition(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["id,blur_type,intensity,fraction,size_category"]
    fractions = []
    for s in manifest.samples:
        mask = ds.load_mask(manifest.mask_file(s))
        fraction = ds.blur_area_fraction(mask)
        fractions.append(fraction)
        lines.append(f"{s.id},{s.blur_type},{s.intensity},{fraction:.6f},{ds.size_category(fraction)}")
    (out / "partition.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    stats_lines = ["grouping,group,mean_gradient"]
    for grouping in ("intensity", "size"):
        stats = ds.region_gradient_stats(manifest, grouping)
        for group, value in sorted(stats.items()):
            stats_lines.append(f"{grouping},{group},{value:.6f}")
        if stats:
            fig.plot_group_bars(stats, out / f"gradient_by_{grouping}.png",
                                title=f"blur-region gradient by {grouping}",
                                ylabel="mean Sobel magnitude")
    (out / "gradient_stats.csv").write_text("\n".join(stats_lines) + "\n", encoding="utf-8")
    fig.plot_size_histogram(fractions, out / "size_histogram.png")
    print(f"partitioned {len(manifest.samples)} samples into {out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if cfg.manifest is None:
        raise InvalidArgumentError("config [data] manifest is required for train")
    manifest = ds.load_manifest(cfg.manifest)
    general, blur = tr.split_branches(manifest)
    holdout = None
    if cfg.holdout_manifest:
        hold_manifest = ds.load_manifest(cfg.holdout_manifest)
        holdout = tr.TrainingSet.from_samples(hold_manifest, hold_manifest.samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out / "resolved_config.ini")

    result = tr.run_dual_branch(
        cfg.train, cfg.train, general, blur, cfg.fusion,
        gen_config=cfg.generator, disc_config=cfg.discriminator,
        degradation=cfg.degradation, holdout=holdout, holdout_every=cfg.holdout_every,
        checkpoint_dir=out, checkpoint_interval=cfg.checkpoint_interval,
    )
    tr.write_loss_csv(result.loss_records, out / "loss.csv")
    fig.plot_training_curves(result.loss_records, out / "training_curves.png")
    if result.fusion_logs:
        tr.write_fusion_csv(result.fusion_logs, out / "fusion.csv")
        fig.plot_fusion_distance(result.fusion_logs, out / "fusion_distance.png")
    if result.holdout_records:
        tr.write_holdout_csv(result.holdout_records, out / "holdout.csv")
        fig.plot_holdout_curve(result.holdout_records, out / "holdout_l1.png")
    fused = fu.final_fuse(result.w_general, result.w_blur)
    cp.save(fused, out / "fused_gen.ckpt")
    print(f"trained {cfg.train.total_iters} iterations in {result.wall_seconds:.1f}s; outputs in {out}")
    return 0


def cmd_fuse(args) -> int:
    fused = fu.final_fuse(cp.load(args.general), cp.load(args.blur))
    cp.save(fused, args.out)
    print(f"fused checkpoint written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    if not args.baseline and not args.model:
        raise InvalidArgumentError("eval needs --model CKPT or --baseline")
    model = None if args.baseline else cp.load(args.model)
    deg = _load_deg_config(args)
    eval_seed = load_run_config(args.config).eval_seed if args.config else 97
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = rp.eval_report(model, manifest, deg, eval_seed=eval_seed)
    rp.write_report_csv(result, out / "report.csv")
    rp.write_aggregate_csv(result, out / "aggregate.csv")
    for metric in rp.METRICS:
        fig.plot_metric_by_category(result.aggregate(), metric, out / f"{metric}_by_category.png")
    if args.disc:
        d_params = cp.load(args.disc)
        for s in manifest.samples[: args.loss_maps]:
            hr = ds.load_image(manifest.hr_file(s))
            mask = ds.load_mask(manifest.mask_file(s))
            h, w = hr.shape[:2]
            hr, mask = hr[: h - h % 4, : w - w % 4], mask[: h - h % 4, : w - w % 4]
            hr_t = tr.Tensor(hr.transpose(2, 0, 1)[None].astype(np.float32))
            lr = degrade(hr_t, deg, rng_for_sample(eval_seed, s.id))
            sr = rp._super_resolve(model, lr)
            sr_t = tr.Tensor(sr.transpose(2, 0, 1)[None].astype(np.float32))
            loss_map, _ = disc_loss_map(d_params, hr_t, sr_t, mask)
            fig.render_loss_map(loss_map, out / f"loss_map_{s.id}.png")
    print(f"evaluated {len(manifest.samples)} samples into {out}")
    return 0


def cmd_inspect(args) -> int:
    params = cp.load(args.ckpt)
    print(f"{args.ckpt}: {len(params)} tensors, {params.total_parameters()} parameters")
    for name, t in params.items():
        l2 = float(np.sqrt(np.sum(t.data.astype(np.float64) ** 2)))
        print(f"  {name}  shape={tuple(t.shape)}  l2={l2:.6g}")
    if params.metadata:
        print("metadata:")
        for key in sorted(params.metadata):
            print(f"  {key} = {params.metadata[key]}")
    return 0


def cmd_gradcheck(args) -> int:
    from .autograd import run_grad_check_suite

    failed = False
    for name, worst in run_grad_check_suite(seeds=args.seeds).items():
        status = "ok" if worst < 1e-3 else "FAIL"
        if worst >= 1e-3:
            failed = True
        print(f"{name:<14} max rel error {worst:.3e}  {status}")
    return 1 if failed else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = int(os.environ.get("BLURSR_PORT", args.port))
    ui_dir = args.ui
    if ui_dir is None and Path("frontend/dist").is_dir():
        ui_dir = "frontend/dist"
    app = create_app(args.manifest, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blursr",
                                     description="blur-preserving super-resolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toyset", help="generate a synthetic toy dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--general", type=int, default=32)
    p.add_argument("--blur", type=int, default=32)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=int, default=8)
    p.set_defaults(fn=cmd_toyset)

    p = sub.add_parser("degrade", help="synthesize LR images for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("estimate", help="estimate blur maps (review_state=auto)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--all", action="store_true", help="also overwrite human-verified masks")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("partition", help="size categories and gradient stats")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_partition)

    p = sub.add_parser("train", help="run dual-branch training")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("fuse", help="half-half merge of two generator checkpoints")
    p.add_argument("--general", required=True)
    p.add_argument("--blur", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("eval", help="region-split metric report")
    p.add_argument("--model")
    p.add_argument("--baseline", action="store_true", help="nearest-x4 baseline instead of a model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--disc", help="discriminator checkpoint for loss maps")
    p.add_argument("--loss-maps", type=int, default=4)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("inspect", help="print checkpoint names, shapes, norms")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("gradcheck", help="finite-difference verification suite")
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("serve", help="start the curation HTTP service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--port", type=int, default=8639)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", help="directory with the built UI bundle")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InvalidArgumentError, FormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, DegenerateInputError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Exit codes: 0 on success, 1 on input errors (missing or malformed files, bad
values), 2 on contract violations detected during computation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .errors import ContractViolationError, InvalidInputError, OccmaskError
from .geometry import Intrinsics, RigidTransform
from .losses import (
    DEPTH_SAMPLING,
    LossConfig,
    compute_view_terms,
    depth_pyramid,
    occlusion_mask,
    photometric_loss,
    total_loss,
)
from .metrics import evaluate_pairs, format_table
from .synthetic import Scene, mask_agreement, render, render_triplet, zbuffer_occlusion_oracle
from .warp import reconstruct

FRAMES = {"prev": 0, "next": 1}

# compare-losses panel names, in figure order
PANELS = (
    "01_target.png",
    "02_reconstruction_prev.png",
    "03_reconstruction_next.png",
    "04_pe_prev.png",
    "05_pe_next.png",
    "06_occlusion_prev.png",
    "07_occlusion_next.png",
    "08_loss_min_reprojection.png",
    "09_loss_nonoccluded_min.png",
    "10_loss_nonoccluded_average.png",
    "11_absdiff_nonoccluded_min.png",
    "12_absdiff_nonoccluded_average.png",
    "13_selection_min_reprojection.png",
    "14_selection_nonoccluded_min.png",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed_range(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo_i, hi_i = int(lo), int(hi)
        else:
            lo_i = hi_i = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or A..B, got {text!r}") from None
    if hi_i < lo_i:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return list(range(lo_i, hi_i + 1))


def cmd_render_scene(args) -> int:
    scene = Scene.load(args.scene)
    k = fileio.load_intrinsics(args.camera)
    pose = fileio.load_transform(args.pose) if args.pose else RigidTransform.identity()
    out = render(scene, k, pose, args.width, args.height)
    fileio.write_png(f"{args.out_prefix}_image.png", out.image)
    fileio.write_pfm(f"{args.out_prefix}_depth.pfm", out.depth)
    return 0


def cmd_reconstruct(args) -> int:
    frames, depth = fileio.TripletManifest.load(args.manifest).load_frames()
    src = frames.sources[FRAMES[args.frame]]
    rec, grid = reconstruct(src.image, depth, frames.intrinsics, src.transform)
    fileio.write_png(f"{args.out_prefix}_reconstruction.png", rec)
    fileio.write_pfm(f"{args.out_prefix}_u.pfm", grid.u)
    fileio.write_pfm(f"{args.out_prefix}_v.pfm", grid.v)
    fileio.write_pfm(f"{args.out_prefix}_z_proj.pfm", grid.z_proj)
    return 0


def cmd_occlusion_mask(args) -> int:
    frames, depth = fileio.TripletManifest.load(args.manifest).load_frames()
    src = frames.sources[FRAMES[args.frame]]
    _, grid = reconstruct(src.image, depth, frames.intrinsics, src.transform)
    omega = occlusion_mask(grid, src.depth, args.tolerance, args.sampling)
    fileio.write_mask_png(args.out, omega)
    return 0


def cmd_compare_losses(args) -> int:
    frames, depth = fileio.TripletManifest.load(args.manifest).load_frames()
    config = LossConfig.load(args.config) if args.config else LossConfig()
    terms = compute_view_terms(frames, depth, config.alpha, config.tolerance, args.sampling)
    lp_min, sel_min, _ = photometric_loss("min_reprojection", terms)
    lp_nomin, sel_nomin, _ = photometric_loss("nonoccluded_min", terms)
    lp_noavg, _, _ = photometric_loss("nonoccluded_average", terms)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panels = iter(PANELS)
    fileio.write_png(out / next(panels), frames.target)
    for rec in terms.reconstructions:
        fileio.write_png(out / next(panels), np.clip(rec, 0.0, 1.0))
    for pe in terms.reprojection_errors:
        fileio.write_colormap_png(out / next(panels), pe)
    for omega in terms.occlusion_masks:
        fileio.write_mask_png(out / next(panels), omega)
    for lp in (lp_min, lp_nomin, lp_noavg):
        fileio.write_colormap_png(out / next(panels), lp)
    for lp in (lp_nomin, lp_noavg):
        fileio.write_colormap_png(out / next(panels), np.abs(lp - lp_min))
    for sel in (sel_min, sel_nomin):
        fileio.write_mask_png(out / next(panels), sel)

    pyramid = depth_pyramid(depth, config.scales)
    totals = {}
    for kind in ("min_reprojection", "nonoccluded_min", "nonoccluded_average"):
        cfg = LossConfig(config.lambda_smoothness, config.alpha, config.tolerance, config.scales, kind)
        totals[kind], _ = total_loss(frames, pyramid, cfg, args.sampling)
    for kind, value in totals.items():
        print(f"{kind:<22s} {value:.6f}")
    return 0


def cmd_oracle_check(args) -> int:
    k = fileio.load_intrinsics(args.camera) if args.camera else None
    results = []
    for seed in args.seeds:
        tr = render_triplet(seed, args.width, args.height, k)
        entry = {"seed": seed}
        for name, src, t in zip(("previous", "next"), tr.sources, tr.transforms):
            _, grid = reconstruct(src.image, tr.target.depth, tr.intrinsics, t)
            omega = occlusion_mask(grid, src.depth, args.tolerance, args.sampling)
            oracle = zbuffer_occlusion_oracle(
                tr.scene, tr.intrinsics, tr.target.pose, src.pose, args.width, args.height, tr.target.depth
            )
            agreement, compared = mask_agreement(omega, oracle, band=1)
            entry[name] = {"agreement": agreement, "compared_pixels": compared}
        entry["agreement"] = min(entry["previous"]["agreement"], entry["next"]["agreement"])
        results.append(entry)
        print(f"seed {seed:4d}  agreement {entry['agreement']:.5f}")
    report = {
        "tolerance": args.tolerance,
        "sampling": args.sampling,
        "width": args.width,
        "height": args.height,
        "boundary_band_px": 1,
        "seeds": results,
        "min_agreement": min(r["agreement"] for r in results),
    }
    if args.report:
        fileio.save_json(args.report, report)
    print(f"min agreement {report['min_agreement']:.5f} over {len(results)} seeds")
    return 0


def cmd_eval_depth(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    gt_files = sorted(gt_dir.glob("*.pfm"))
    if not gt_files:
        raise InvalidInputError(f"no .pfm files in {gt_dir}")
    pairs = []
    for gt_path in gt_files:
        pred_path = pred_dir / gt_path.name
        if not pred_path.is_file():
            raise InvalidInputError(f"missing prediction {pred_path}")
        pairs.append((fileio.read_pfm(pred_path).astype(np.float64), fileio.read_pfm(gt_path).astype(np.float64)))
    metrics = evaluate_pairs(pairs, median_scale=args.median_scale, cap=args.cap)
    print(format_table(metrics))
    if args.json:
        fileio.save_json(args.json, metrics.to_dict())
    return 0


def cmd_synth_triplet(args) -> int:
    k = fileio.load_intrinsics(args.camera) if args.camera else Intrinsics.kitti_like(args.width, args.height)
    tr = render_triplet(args.seed, args.width, args.height, k, moving_object=args.moving_object)
    out = Path(args.out_dir)
    manifest = fileio.write_triplet(
        out,
        tr.target.image,
        tr.previous.image,
        tr.next.image,
        tr.target.depth,
        tr.previous.depth,
        tr.next.depth,
        tr.intrinsics,
        tr.to_previous,
        tr.to_next,
    )
    (out / "scene.json").write_text(tr.scene.to_json() + "\n")
    print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="occmask", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("render-scene", help="ray-cast a scene JSON to an image and depth map")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", required=True, help="intrinsics JSON")
    p.add_argument("--pose", help="camera-to-world transform JSON (default identity)")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=192)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_render_scene)

    for name, func, helptext in (
        ("reconstruct", cmd_reconstruct, "warp an adjacent frame into the target view"),
        ("occlusion-mask", cmd_occlusion_mask, "depth-based occlusion mask for one adjacent frame"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--manifest", required=True)
        p.add_argument("--frame", choices=sorted(FRAMES), required=True)
        if name == "reconstruct":
            p.add_argument("--out-prefix", required=True)
        else:
            p.add_argument("--tolerance", type=float, default=0.3)
            p.add_argument("--sampling", choices=DEPTH_SAMPLING, default="bilinear")
            p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("compare-losses", help="write the 14 loss-comparison panels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="loss config JSON")
    p.add_argument("--sampling", choices=DEPTH_SAMPLING, default="bilinear")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compare_losses)

    p = sub.add_parser("oracle-check", help="compare occlusion masks with the z-buffer oracle")
    p.add_argument("--seeds", type=_seed_range, default=_seed_range("0..49"), help="N or A..B (inclusive)")
    p.add_argument("--tolerance", type=float, default=0.3)
    p.add_argument("--sampling", choices=DEPTH_SAMPLING, default="bilinear")
    p.add_argument("--camera", help="intrinsics JSON (default KITTI-like for the resolution)")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=192)
    p.add_argument("--report")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("eval-depth", help="depth metrics over matching PFM files")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--median-scale", action="store_true")
    p.add_argument("--cap", type=float, default=80.0)
    p.add_argument("--json", help="also write the metrics as JSON")
    p.set_defaults(func=cmd_eval_depth)

    p = sub.add_parser("synth-triplet", help="render a seeded synthetic triplet with a manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=192)
    p.add_argument("--camera", help="intrinsics JSON (default KITTI-like for the resolution)")
    p.add_argument("--moving-object", action="store_true", help="displace one object in the next frame")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth_triplet)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ContractViolationError as exc:
        print(f"occmask: contract violation: {exc}", file=sys.stderr)
        return 2
    except (OccmaskError, OSError, json.JSONDecodeError) as exc:
        print(f"occmask: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

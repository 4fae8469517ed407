"""Command-line pipeline: generate, simulate, traveltime, image, evaluate, export-png."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import eikonal
from .backproject import backproject_cgli, backproject_tof, normalize_minmax
from .dataset import DatasetConfig, SceneFile, generate_dataset
from .errors import FormatError, LimbscanError
from .fdtd import freespace_calibrate, simulate_scan
from .grid import image_grid
from .metrics import MaskPair, bce_loss, f1_score, iou_score, roc_curve, threshold_at_pfa
from .raster import (
    load_raster,
    load_sinogram,
    load_velocity_map,
    save_raster,
    save_sinogram,
    to_u8,
)

_EXIT_CODES = {"geometry": 3, "simulation": 4, "shape": 5, "data": 6,
               "format": 7, "internal": 1}


def _cmd_generate(args) -> int:
    config = DatasetConfig.load(args.config) if args.config else DatasetConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.samples is not None:
        config.n_samples = args.samples
    manifest, stats = generate_dataset(config, args.out_dir)
    print(f"manifest: {manifest.path}")
    print(f"samples: {len(manifest.samples)}  simulated traces: {stats.n_simulated}  "
          f"skipped: {stats.n_skipped}  failed: {stats.n_failed}")
    return 0


def _cmd_simulate(args) -> int:
    scene = SceneFile.load(args.scene)
    if args.freespace:
        scene.kind = "freespace"
        scene.scene_id = scene.scene_id + "_freespace" if scene.scene_id else "freespace"
    sino = simulate_scan(scene.tissue_map(), scene.array, scene.waveform,
                         scene.sim, scene_id=scene.scene_id)
    if args.calibrate:
        sino = freespace_calibrate(sino, load_sinogram(args.calibrate))
    save_sinogram(args.out, sino)
    print(f"wrote {args.out} ({sino.n_elements} traces x {sino.data.shape[1]} samples)")
    return 0


def _cmd_traveltime(args) -> int:
    vmap = load_velocity_map(args.vmap)
    try:
        x, y = (float(v) for v in args.source.split(","))
    except ValueError as exc:
        raise FormatError(f"--source expects 'x,y' in meters, got {args.source!r}") from exc
    tt = eikonal.solve_travel_time(vmap, (x, y))
    save_raster(args.out, tt.times.astype(np.float32), tt.grid,
                {"stage": "traveltime", "source": [x, y]})
    print(f"wrote {args.out}")
    return 0


def _cmd_image(args) -> int:
    sino = load_sinogram(args.sino)
    grid = image_grid()
    if args.method == "tof":
        img = backproject_tof(sino, sino.geometry, args.eps, grid)
    else:
        if not args.vmap:
            raise FormatError("--method cgli requires --vmap")
        vmap = load_velocity_map(args.vmap)
        ttmaps = eikonal.solve_all_elements(vmap, sino.geometry)
        img = backproject_cgli(sino, ttmaps, grid)
    if args.normalize:
        img = normalize_minmax(img)
    save_raster(args.out, img.pixels.astype(np.float32), img.grid,
                {"stage": "image", "method": args.method, "eps": args.eps,
                 "normalization": img.normalization})
    print(f"wrote {args.out}")
    return 0


def _paired_masks(pred_dir: Path, truth_dir: Path) -> list[MaskPair]:
    preds = sorted(p for p in pred_dir.glob("*.lsr"))
    if not preds:
        raise FormatError(f"no .lsr rasters in {pred_dir}")
    pairs = []
    for p in preds:
        t = truth_dir / p.name
        if not t.exists():
            raise FormatError(f"missing truth raster for {p.name}")
        prob = load_raster(p).array.astype(float)
        truth = load_raster(t).array
        truth = (truth > 0).astype(np.uint8)
        pairs.append(MaskPair(prob=np.clip(prob, 0.0, 1.0), truth=truth))
    return pairs


def _cmd_evaluate(args) -> int:
    pairs = _paired_masks(Path(args.pred_dir), Path(args.truth_dir))
    curve = roc_curve(pairs)
    op = threshold_at_pfa(curve, args.pfa)
    pred = [(p.prob > op.threshold).astype(np.uint8) for p in pairs]
    truth = [p.truth for p in pairs]
    f1 = f1_score(pred, truth)
    iou = iou_score(pred, truth)
    bce = bce_loss(pairs)
    lines = [
        f"samples: {len(pairs)}",
        f"target_pfa: {args.pfa:g}",
        f"threshold: {op.threshold:.6f}",
        f"achieved_pfa: {op.pfa:.6g}",
        f"P_D: {op.pd:.4f}",
        f"F1: {f1:.4f}",
        f"IoU: {iou:.4f}",
        f"BCE: {bce:.4f}",
    ]
    report = "\n".join(lines)
    print(report)
    if args.report:
        Path(args.report).write_text(report + "\n")
    if args.roc:
        with open(args.roc, "w") as fh:
            fh.write("threshold,pfa,pd\n")
            for t, fa, pd in zip(curve.thresholds, curve.pfa, curve.pd):
                fh.write(f"{t:.9g},{fa:.9g},{pd:.9g}\n")
    return 0


def _cmd_export_png(args) -> int:
    from PIL import Image

    rd = load_raster(args.input)
    arr = rd.array.astype(float)
    if arr.dtype != np.uint8:
        lo, hi = float(arr.min()), float(arr.max())
        arr = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    u8 = to_u8(arr)
    Image.fromarray(np.flipud(u8), mode="L").save(args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="limbscan",
        description="Microwave limb-imaging pipeline: phantoms, FDTD scans, "
                    "travel times, backprojection, detection metrics.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic dataset")
    g.add_argument("--config", help="dataset config JSON (defaults when omitted)")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--seed", type=int, help="override the config seed")
    g.add_argument("--samples", type=int, help="override the sample count")
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("simulate", help="run one scan from a scene file")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--freespace", action="store_true",
                   help="simulate the empty-scene variant of the scene file")
    s.add_argument("--calibrate", help="free-space sinogram to subtract")
    s.set_defaults(func=_cmd_simulate)

    t = sub.add_parser("traveltime", help="eikonal travel-time map from a velocity map")
    t.add_argument("--vmap", required=True)
    t.add_argument("--source", required=True, metavar="X,Y")
    t.add_argument("--out", required=True)
    t.set_defaults(func=_cmd_traveltime)

    i = sub.add_parser("image", help="backproject a sinogram")
    i.add_argument("--sino", required=True)
    i.add_argument("--method", choices=("tof", "cgli"), required=True)
    i.add_argument("--eps", type=float, default=1.0,
                   help="effective permittivity for the ToF method")
    i.add_argument("--vmap", help="velocity map raster (cgli)")
    i.add_argument("--normalize", action="store_true", help="min/max scale the output")
    i.add_argument("--out", required=True)
    i.set_defaults(func=_cmd_image)

    e = sub.add_parser("evaluate", help="pixel-pooled detection metrics")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--truth-dir", required=True)
    e.add_argument("--pfa", type=float, default=1e-3)
    e.add_argument("--report", help="write the text report here")
    e.add_argument("--roc", help="write the ROC table (CSV) here")
    e.set_defaults(func=_cmd_evaluate)

    x = sub.add_parser("export-png", help="8-bit grayscale preview of a raster")
    x.add_argument("--in", required=True, dest="input", metavar="RASTER")
    x.add_argument("--out", required=True)
    x.set_defaults(func=_cmd_export_png)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LimbscanError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return _EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())

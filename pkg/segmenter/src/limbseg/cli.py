"""limbseg command line: train on a dataset manifest, predict on rasters."""

from __future__ import annotations

import argparse
import sys

from .model import SegmenterConfig


def _cmd_train(args) -> int:
    from .train import train

    cfg = SegmenterConfig(epochs=args.epochs, batch_size=args.batch_size,
                          learning_rate=args.lr, seed=args.seed,
                          pretrained=not args.no_pretrained,
                          augment=not args.no_augment)
    best = train(args.manifest, args.image_key, args.out, cfg)
    print(f"best val loss {best['val_loss']:.4f} at epoch {best['epoch']}")
    return 0


def _cmd_predict(args) -> int:
    from .predict import predict_file

    predict_file(args.checkpoint, args.input, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="limbseg",
                                 description="U-Net fluid segmenter for LSR1 images")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train")
    t.add_argument("--manifest", required=True)
    t.add_argument("--image-key", default="cgli",
                   help="which image method to train on (cgli, tof_eps1, ...)")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-pretrained", action="store_true")
    t.add_argument("--no-augment", action="store_true")
    t.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", required=True, dest="input", metavar="RASTER")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

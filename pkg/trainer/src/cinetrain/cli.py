"""Trainer CLI: `cinetrain --data DIR --out weights.pnpd [config flags]`.

Reads every CPLX image in --data, trains per the flags, and writes the
weight file plus its manifest and loss trace.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cplx import read_image
from .data import TrainConfig
from .export import export_weights
from .train import TrainingError, train


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cinetrain", description=__doc__)
    ap.add_argument("--data", required=True, help="directory of CPLX training images")
    ap.add_argument("--out", required=True, help="output PNPD weight file")
    ap.add_argument("--patch", default="55,55,15", help="patch extents x,y,t")
    ap.add_argument("--stride", default=None, help="stride x,y,t (default: patch)")
    ap.add_argument("--snr-db", type=float, default=26.0)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sn-power-iters", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    files = sorted(Path(args.data).glob("*.cplx"))
    if not files:
        print(f"error: no .cplx files under {args.data}", file=sys.stderr)
        return 3
    images = [read_image(f) for f in files]
    cfg = TrainConfig(
        patch_size=tuple(int(v) for v in args.patch.split(",")),
        stride=tuple(int(v) for v in args.stride.split(",")) if args.stride else None,
        noise_snr_db=args.snr_db,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        sn_power_iters=args.sn_power_iters,
    )
    try:
        net, info = train(images, cfg)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    export_weights(net, args.out, info)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

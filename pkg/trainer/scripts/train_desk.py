#!/usr/bin/env python3
"""Desk-scale training run.

Generates a corpus of dynamic phantoms through the reconstruction
toolkit's CLI (the training-data interface), trains the denoiser at desk
scale, and writes the weight file plus sidecars into the repository's
weights/ directory.

Usage: python train_desk.py [--out DIR] [--epochs N] [--seed S]
"""

import argparse
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import torch

from cinetrain.cplx import read_image
from cinetrain.data import TrainConfig
from cinetrain.export import export_weights
from cinetrain.train import train

REPO_ROOT = Path(__file__).resolve().parents[2]

# phantom corpus: (seed, n_ellipses, motion_amplitude)
CORPUS = [
    (0, 6, 0.15), (1, 5, 0.10), (2, 7, 0.20), (3, 4, 0.15), (4, 8, 0.25),
    (5, 6, 0.12), (6, 5, 0.18), (7, 7, 0.10), (8, 6, 0.22), (9, 4, 0.08),
]


def generate_corpus(data_dir: Path) -> list:
    images = []
    for seed, n_ell, motion in CORPUS:
        path = data_dir / f"phantom_{seed:03d}.cplx"
        cmd = [
            "pnpcine", "phantom", "--nx", "64", "--ny", "64", "--nt", "16",
            "--n-ellipses", str(n_ell), "--motion", str(motion),
            "--seed", str(seed), "--out", str(path),
        ]
        subprocess.run(cmd, check=True, capture_output=True)
        images.append(read_image(path))
    return images


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(REPO_ROOT / "weights"))
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    torch.set_num_threads(torch.get_num_threads())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as td:
        images = generate_corpus(Path(td))
    print(f"corpus: {len(images)} phantoms of shape {images[0].shape}")

    cfg = TrainConfig(
        patch_size=(24, 24, 8),  # desk scale; full scale uses (55, 55, 15)
        stride=(20, 20, 8),
        noise_snr_db=26.0,
        batch_size=4,
        learning_rate=1e-4,
        epochs=args.epochs,
        seed=args.seed,
        sn_power_iters=1,
    )
    t0 = time.time()
    net, info = train(images, cfg)
    print(f"training took {time.time() - t0:.0f}s")

    weight_path = out_dir / "cine_denoiser_desk.pnpd"
    export_weights(net, weight_path, info)
    print(f"wrote {weight_path} (+ manifest, loss trace)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""PNPD weight-file writer plus manifest and loss-trace sidecars.

Container layout (little-endian, version 1), as consumed by the runtime:

    magic b"PNPD", u32 version, u32 header length, JSON header
    per layer: u32 out_ch, in_ch, kt, ky, kx; f64 declared norm;
               f32 kernel (out, in, kt, ky, kx) C-order; f32 bias
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .model import CineDenoiser

PNPD_MAGIC = b"PNPD"
PNPD_VERSION = 1


def export_weights(net: CineDenoiser, path, info: dict, residual_mode: bool = True) -> None:
    path = Path(path)
    channels = [net.convs[0].in_channels] + [c.out_channels for c in net.convs]
    cfg = info.get("config", {})
    header = json.dumps(
        {
            "residual_mode": residual_mode,
            "channels": channels,
            "metadata": {
                "arch": "cine3d-5x64" if channels == [2, 64, 64, 64, 64, 2] else "custom",
                "train_snr_db": cfg.get("noise_snr_db"),
                "patch_size": list(cfg.get("patch_size", ())),
                "epochs": cfg.get("epochs"),
                "config_hash": info.get("config_hash"),
                "version": "1",
            },
        },
        sort_keys=True,
    ).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(PNPD_MAGIC)
        fh.write(struct.pack("<II", PNPD_VERSION, len(header)))
        fh.write(header)
        for conv in net.convs:
            w = conv.weight.detach().cpu().numpy().astype("<f4")
            b = conv.bias.detach().cpu().numpy().astype("<f4")
            out_ch, in_ch = w.shape[0], w.shape[1]
            fh.write(struct.pack("<IIIII", out_ch, in_ch, 3, 3, 3))
            fh.write(struct.pack("<d", 1.0))  # every layer is normalized to <= 1
            fh.write(w.tobytes(order="C"))
            fh.write(b.tobytes(order="C"))

    manifest = path.with_suffix(path.suffix + ".manifest.txt")
    lines = [
        f"weight_file: {path.name}",
        f"config_hash: {info.get('config_hash')}",
        f"n_patches: {info.get('n_patches')}",
        "spectral_norms: " + " ".join(f"{s:.8f}" for s in info.get("spectral_norms", [])),
        "normalization: unit peak magnitude per source image",
    ]
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")

    trace = path.with_suffix(path.suffix + ".loss.json")
    trace.write_text(
        json.dumps({"mse_per_epoch": info.get("loss_trace", [])}, indent=2) + "\n",
        encoding="utf-8",
    )


def denoise_patch(net: CineDenoiser, patch: np.ndarray) -> np.ndarray:
    """Trainer-side inference on one complex (t, y, x) patch."""
    with torch.no_grad():
        x = torch.from_numpy(
            np.stack([patch.real, patch.imag])[None].astype(np.float32)
        )
        out = net.denoise(x)[0].numpy()
    return (out[0] + 1j * out[1]).astype(np.complex64)


def import_weights(path) -> tuple:
    """Read a PNPD file back into a CineDenoiser (for parity checks)."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != PNPD_MAGIC:
            raise ValueError(f"{path}: not a PNPD file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != PNPD_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        channels = header["channels"]
        net = CineDenoiser(tuple(channels))
        for conv in net.convs:
            out_ch, in_ch, kt, ky, kx = struct.unpack("<IIIII", fh.read(20))
            struct.unpack("<d", fh.read(8))
            n_k = out_ch * in_ch * kt * ky * kx
            w = np.frombuffer(fh.read(4 * n_k), dtype="<f4").reshape(out_ch, in_ch, kt, ky, kx)
            b = np.frombuffer(fh.read(4 * out_ch), dtype="<f4")
            conv.weight.data = torch.from_numpy(w.copy())
            conv.bias.data = torch.from_numpy(b.copy())
    return net, bool(header["residual_mode"])

"""Runtime for the spatiotemporal CNN denoiser.

The network is a chain of 3x3x3 3-D convolution layers (correlation
convention, zero-padded, stride 1) with ReLU between layers and none
after the last; complex images ride through as two real channels
(real, imag). In residual mode the network predicts the noise:
output = input - net(input).

Weight container ("PNPD" format, little-endian, version 1):

    bytes 0..3   magic b"PNPD"
    u32          format version
    u32          length of the UTF-8 JSON header
    bytes        JSON header: residual_mode, channels, metadata dict
    per layer:
        u32 out_ch, u32 in_ch, u32 kt, u32 ky, u32 kx   (kt=ky=kx=3)
        f64 declared_spectral_norm
        f32 kernel[out_ch*in_ch*kt*ky*kx]  (C-order out,in,kt,ky,kx)
        f32 bias[out_ch]

Kernels are stored and held as float32 (so save/load round-trips are
bitwise); inference accumulates in a configurable dtype, float32 by
default. Spectral-norm certification runs the periodic-boundary operator
in float64 via power iteration with a fixed-seed start vector; the
zero-pad inference operator is slightly different, which makes the
certified bound conservative.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .core import ComplexImage
from .errors import CertificationError, DenoiserError, DimensionError, FormatError

__all__ = [
    "ConvLayer3D",
    "DenoiserNet",
    "save_weights",
    "load_weights",
    "denoise_cnn",
    "denoise_array",
    "spectral_norm_estimate",
    "lipschitz_bound",
    "certify_net",
]

MAGIC = b"PNPD"
FORMAT_VERSION = 1

# canonical certification domain shared with the trainer
CERT_SHAPE = (8, 8, 8)
CERT_POWER_ITERS = 100
CERT_TOL = 1e-3


@dataclass(frozen=True)
class ConvLayer3D:
    """One 3-D convolution layer: float32 kernel (out, in, 3, 3, 3),
    float32 bias (out,), and the spectral norm its producer certifies."""

    kernel: np.ndarray
    bias: np.ndarray
    declared_spectral_norm: float = 1.0

    def __post_init__(self):
        k = np.ascontiguousarray(self.kernel, dtype=np.float32)
        if k.ndim != 5 or k.shape[2:] != (3, 3, 3):
            raise DimensionError(f"kernel must be (out, in, 3, 3, 3), got {k.shape}")
        b = np.ascontiguousarray(self.bias, dtype=np.float32)
        if b.shape != (k.shape[0],):
            raise DimensionError(f"bias must be ({k.shape[0]},), got {b.shape}")
        if not np.isfinite(k).all() or not np.isfinite(b).all():
            raise DimensionError("layer tensors contain non-finite entries")
        if not self.declared_spectral_norm > 0:
            raise DimensionError("declared_spectral_norm must be positive")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)

    @property
    def out_ch(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_ch(self) -> int:
        return self.kernel.shape[1]


@dataclass(frozen=True)
class DenoiserNet:
    """Chain of ConvLayer3D with ReLU after every layer except the last.

    The shipped cine denoiser has five layers with channel plan
    2-64-64-64-64-2; smaller chains are accepted for analysis and tests,
    but denoise_cnn requires 2 input and 2 output channels (real, imag).
    """

    layers: tuple
    residual_mode: bool = True
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("network needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.in_ch != prev.out_ch:
                raise DimensionError(
                    f"channel chain broken: layer out_ch {prev.out_ch} feeds in_ch {nxt.in_ch}"
                )

    @property
    def channels(self) -> list[int]:
        return [self.layers[0].in_ch] + [lay.out_ch for lay in self.layers]


def save_weights(net: DenoiserNet, path) -> None:
    """Serialize a net to the PNPD container (bitwise round-trip)."""
    header = json.dumps(
        {
            "residual_mode": bool(net.residual_mode),
            "channels": net.channels,
            "metadata": net.metadata,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for lay in net.layers:
            fh.write(struct.pack("<IIIII", lay.out_ch, lay.in_ch, 3, 3, 3))
            fh.write(struct.pack("<d", float(lay.declared_spectral_norm)))
            fh.write(lay.kernel.astype("<f4").tobytes(order="C"))
            fh.write(lay.bias.astype("<f4").tobytes(order="C"))


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated weight file while reading {what}")
    return buf


def load_weights(
    path,
    certify: bool = True,
    cert_shape: tuple = CERT_SHAPE,
    power_iters: int = CERT_POWER_ITERS,
    tol: float = CERT_TOL,
) -> DenoiserNet:
    """Load and validate a PNPD weight file.

    Validation covers magic/version, structural consistency, the
    2-channel complex I/O contract, and (unless ``certify=False``)
    spectral-norm certification of every layer against its declared norm.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise FormatError(f"{path}: bad magic, not a PNPD weight file")
        version, hlen = struct.unpack("<II", _read_exact(fh, 8, "version/header length"))
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        try:
            header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: unreadable JSON header: {exc}") from exc
        channels = header.get("channels")
        if not isinstance(channels, list) or len(channels) < 2:
            raise FormatError(f"{path}: header lacks a valid channel plan")

        layers = []
        for li in range(len(channels) - 1):
            out_ch, in_ch, kt, ky, kx = struct.unpack(
                "<IIIII", _read_exact(fh, 20, f"layer {li} dims")
            )
            if (kt, ky, kx) != (3, 3, 3):
                raise FormatError(f"{path}: layer {li} kernel extent {(kt, ky, kx)} != (3, 3, 3)")
            if in_ch != channels[li] or out_ch != channels[li + 1]:
                raise FormatError(f"{path}: layer {li} channels disagree with header plan")
            (declared,) = struct.unpack("<d", _read_exact(fh, 8, f"layer {li} norm"))
            n_k = out_ch * in_ch * 27
            kernel = np.frombuffer(
                _read_exact(fh, 4 * n_k, f"layer {li} kernel"), dtype="<f4"
            ).reshape(out_ch, in_ch, 3, 3, 3)
            bias = np.frombuffer(_read_exact(fh, 4 * out_ch, f"layer {li} bias"), dtype="<f4")
            layers.append(ConvLayer3D(kernel, bias, declared))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after the last layer")

    net = DenoiserNet(
        tuple(layers),
        residual_mode=bool(header.get("residual_mode", True)),
        metadata=header.get("metadata", {}),
    )
    if net.layers[0].in_ch != 2 or net.layers[-1].out_ch != 2:
        raise FormatError(f"{path}: network must map 2 channels to 2 channels")
    if certify:
        certify_net(net, cert_shape, power_iters, tol)
    return net


def certify_net(
    net: DenoiserNet,
    input_shape: tuple = CERT_SHAPE,
    power_iters: int = CERT_POWER_ITERS,
    tol: float = CERT_TOL,
) -> list[float]:
    """Estimate every layer's spectral norm; raise if any exceeds its
    declared value by more than the relative tolerance."""
    estimates = []
    for li, lay in enumerate(net.layers):
        est = spectral_norm_estimate(lay, input_shape, power_iters)
        estimates.append(est)
        if est > lay.declared_spectral_norm * (1.0 + tol):
            raise CertificationError(
                f"layer {li}: estimated spectral norm {est:.6f} exceeds declared "
                f"{lay.declared_spectral_norm:.6f} (tol {tol:g})"
            )
    return estimates


def _embed_kernel_fft(kernel: np.ndarray, shape: tuple) -> np.ndarray:
    """FFT of the periodic (circulant) embedding of a correlation kernel."""
    out_ch, in_ch = kernel.shape[:2]
    emb = np.zeros((out_ch, in_ch) + tuple(shape), dtype=np.float64)
    for kt in range(3):
        for ky in range(3):
            for kx in range(3):
                it = (-(kt - 1)) % shape[0]
                iy = (-(ky - 1)) % shape[1]
                ix = (-(kx - 1)) % shape[2]
                emb[:, :, it, iy, ix] += kernel[:, :, kt, ky, kx]
    return np.fft.fftn(emb, axes=(-3, -2, -1))


def spectral_norm_estimate(layer: ConvLayer3D, input_shape: tuple = CERT_SHAPE,
                           power_iters: int = CERT_POWER_ITERS) -> float:
    """Largest singular value of the bias-free periodic convolution operator
    on the given grid, by power iteration on W^T W from a fixed-seed start
    vector. The estimate is monotone nondecreasing in power_iters and never
    exceeds the true norm.
    """
    if power_iters < 1:
        raise DimensionError("power_iters must be >= 1")
    shape = tuple(int(s) for s in input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise DimensionError(f"input_shape must be a 3-D grid, got {input_shape}")
    khat = _embed_kernel_fft(np.asarray(layer.kernel, dtype=np.float64), shape)
    out_ch, in_ch = layer.out_ch, layer.in_ch
    nfreq = int(np.prod(shape))
    # W^T W is block-diagonal over frequency: precompute the (in, in) blocks
    kf = khat.reshape(out_ch, in_ch, nfreq).transpose(2, 0, 1)
    gram = np.conj(kf.transpose(0, 2, 1)) @ kf  # (F, in, in)

    def wtw(v):
        vhat = np.fft.fftn(v, axes=(-3, -2, -1)).reshape(in_ch, nfreq).T[:, :, None]
        what = (gram @ vhat)[:, :, 0].T.reshape((in_ch,) + shape)
        return np.fft.ifftn(what, axes=(-3, -2, -1)).real

    rng = np.random.default_rng(0)
    v = rng.standard_normal((in_ch,) + shape)
    v /= np.linalg.norm(v)
    sigma2 = 0.0
    for _ in range(power_iters):
        w = wtw(v)
        sigma2_new = float(np.vdot(v, w).real)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return 0.0
        v = w / wn
        # the Rayleigh sequence is nondecreasing; stop once it stabilizes
        # (freezing early keeps the estimate monotone in power_iters)
        converged = sigma2_new - sigma2 <= 1e-14 * max(sigma2_new, 1e-300)
        sigma2 = sigma2_new
        if converged:
            break
    return float(np.sqrt(max(sigma2, 0.0)))


def lipschitz_bound(net: DenoiserNet, input_shape: tuple | None = None,
                    power_iters: int = CERT_POWER_ITERS) -> float:
    """Product of per-layer spectral norms (ReLU is 1-Lipschitz); declared
    norms when input_shape is None, fresh estimates otherwise. For a
    residual net the bound on g = I - net is 1 + product."""
    if input_shape is None:
        prod = float(np.prod([lay.declared_spectral_norm for lay in net.layers]))
    else:
        prod = float(
            np.prod([spectral_norm_estimate(lay, input_shape, power_iters) for lay in net.layers])
        )
    return 1.0 + prod if net.residual_mode else prod


def _conv3d_zero(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded 3-D correlation over (ch, nt, ny, nx), output same size."""
    in_ch, nt, ny, nx = x.shape
    out_ch = kernel.shape[0]
    xp = np.zeros((in_ch, nt + 2, ny + 2, nx + 2), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, 1:-1] = x
    acc = np.zeros((out_ch, nt * ny * nx), dtype=x.dtype)
    for kt in range(3):
        for ky in range(3):
            for kx in range(3):
                view = xp[:, kt : kt + nt, ky : ky + ny, kx : kx + nx].reshape(in_ch, -1)
                acc += kernel[:, :, kt, ky, kx] @ view
    out = acc.reshape(out_ch, nt, ny, nx)
    out += bias[:, None, None, None]
    return out


def _net_apply(net: DenoiserNet, channels: np.ndarray) -> np.ndarray:
    """Run the layer chain on a (ch, nt, ny, nx) real array."""
    h = channels
    last = len(net.layers) - 1
    for li, lay in enumerate(net.layers):
        k = np.asarray(lay.kernel, dtype=h.dtype)
        b = np.asarray(lay.bias, dtype=h.dtype)
        h = _conv3d_zero(h, k, b)
        if li != last:
            np.maximum(h, 0.0, out=h)
    return h


def _axis_tiles(n: int, tile: int, overlap: int):
    """Tile starts/extents and linear blend weights along one axis.

    Tiles are laid at stride ``tile`` and extended by ``overlap`` on each
    side; weights ramp linearly across the doubled overlap zone so they
    sum to one everywhere.
    """
    if tile >= n:
        return [(0, n, np.ones(n))]
    starts = list(range(0, n, tile))
    out = []
    for s in starts:
        core_end = min(s + tile, n)
        lo = max(s - overlap, 0)
        hi = min(core_end + overlap, n)
        idx = np.arange(lo, hi, dtype=np.float64)
        w = np.ones(hi - lo)
        if s > 0:  # ramp up over [s - overlap, s + overlap)
            w = np.minimum(w, (idx - (s - overlap) + 0.5) / (2 * overlap))
        if core_end < n:  # ramp down over [core_end - overlap, core_end + overlap)
            w = np.minimum(w, ((core_end + overlap) - idx - 0.5) / (2 * overlap))
        out.append((lo, hi, np.clip(w, 0.0, 1.0)))
    return out


def denoise_array(
    net: DenoiserNet,
    z: np.ndarray,
    compute_dtype=np.float32,
    tile: tuple | None = None,
    tile_overlap: int = 8,
) -> np.ndarray:
    """Denoise a complex (nt, ny, nx) array; see denoise_cnn."""
    if z.ndim != 3 or min(z.shape) < 3:
        raise DimensionError(f"input must be (nt, ny, nx) with every extent >= 3, got {z.shape}")
    if net.layers[0].in_ch != 2 or net.layers[-1].out_ch != 2:
        raise DenoiserError(
            f"denoiser needs a 2->2 channel net, got {net.channels[0]}->{net.channels[-1]}"
        )

    if tile is not None:
        acc = np.zeros(z.shape, dtype=np.complex128)
        wsum = np.zeros(z.shape, dtype=np.float64)
        axes = [_axis_tiles(n, t, tile_overlap) for n, t in zip(z.shape, tile)]
        for t0, t1, wt in axes[0]:
            for y0, y1, wy in axes[1]:
                for x0, x1, wx in axes[2]:
                    block = denoise_array(net, z[t0:t1, y0:y1, x0:x1], compute_dtype)
                    w = wt[:, None, None] * wy[None, :, None] * wx[None, None, :]
                    acc[t0:t1, y0:y1, x0:x1] += w * block
                    wsum[t0:t1, y0:y1, x0:x1] += w
        return acc / wsum

    channels = np.stack([z.real, z.imag]).astype(compute_dtype)
    out = _net_apply(net, channels).astype(np.float64)
    result = out[0] + 1j * out[1]
    if net.residual_mode:
        result = z - result
    return result


def denoise_cnn(
    net: DenoiserNet,
    z: ComplexImage,
    compute_dtype=np.float32,
    tile: tuple | None = None,
    tile_overlap: int = 8,
) -> ComplexImage:
    """Apply the CNN denoiser to a complex image.

    The image rides through the net as two real channels. With
    ``residual_mode`` the net output is subtracted from the input (noise
    prediction); otherwise it is the output. ``tile`` activates overlapped
    tiling with linear blending for inputs too large to process whole.
    """
    return ComplexImage(denoise_array(net, z.data, compute_dtype, tile, tile_overlap))

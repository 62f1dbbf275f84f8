import numpy as np
import pytest

from pnpcine import io as cio
from pnpcine.core import ComplexImage, MultiCoilKSpace
from pnpcine.errors import FormatError
from pnpcine.sampling import MaskSpec, generate_mask

from conftest import random_complex


def test_image_roundtrip_32bit_stable(tmp_path):
    img = ComplexImage(random_complex((3, 6, 4), seed=1))
    p = tmp_path / "a.cplx"
    cio.write_cplx(p, img)
    back = cio.read_image(p)
    assert back.shape == img.shape
    # stored at float32 precision
    assert np.abs(back.data - img.data).max() <= 1e-6 * np.abs(img.data).max()
    # second write of the read-back data is bitwise identical
    p2 = tmp_path / "b.cplx"
    cio.write_cplx(p2, back)
    assert p.read_bytes()[: 4 + 8 + 12] == p2.read_bytes()[: 4 + 8 + 12]
    back2 = cio.read_image(p2)
    assert np.array_equal(back.data, back2.data)


def test_kspace_roundtrip(tmp_path):
    k = MultiCoilKSpace(random_complex((2, 3, 4, 4), seed=2))
    p = tmp_path / "k.cplx"
    cio.write_cplx(p, k)
    back = cio.read_kspace(p)
    assert back.shape == k.shape


def test_mask_roundtrip(tmp_path):
    mask = generate_mask(MaskSpec(nkx=16, nky=32, nt=4, R=4.0, calib_lines=4, seed=3))
    p = tmp_path / "m.cplx"
    cio.write_mask(p, mask)
    back = cio.read_mask(p)
    assert np.array_equal(back.kept, mask.kept)
    assert back.r_nominal == pytest.approx(mask.r_nominal)


def test_bad_magic_and_truncation(tmp_path):
    img = ComplexImage(random_complex((2, 4, 4), seed=4))
    p = tmp_path / "x.cplx"
    cio.write_cplx(p, img)
    blob = p.read_bytes()
    (tmp_path / "bad.cplx").write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(FormatError):
        cio.read_cplx(tmp_path / "bad.cplx")
    (tmp_path / "cut.cplx").write_bytes(blob[:-7])
    with pytest.raises(FormatError):
        cio.read_cplx(tmp_path / "cut.cplx")
    (tmp_path / "long.cplx").write_bytes(blob + b"\x01")
    with pytest.raises(FormatError):
        cio.read_cplx(tmp_path / "long.cplx")


def test_read_image_requires_3d(tmp_path):
    p = tmp_path / "k.cplx"
    cio.write_cplx(p, random_complex((2, 2, 4, 4), seed=5))
    with pytest.raises(FormatError):
        cio.read_image(p)


def test_pngs_written_and_deterministic(tmp_path):
    img = ComplexImage(random_complex((4, 8, 8), seed=6))
    ref = ComplexImage(random_complex((4, 8, 8), seed=7))
    a, b = tmp_path / "m1.png", tmp_path / "m2.png"
    cio.magnitude_png(a, img)
    cio.magnitude_png(b, img)
    assert a.read_bytes() == b.read_bytes()
    cio.error_png(tmp_path / "e.png", ref, img, amplification=5.0)
    cio.temporal_profile_png(tmp_path / "t.png", img)
    mask = generate_mask(MaskSpec(nkx=16, nky=16, nt=4, R=2.0, calib_lines=2, seed=1))
    cio.mask_png(tmp_path / "mask.png", mask)
    for name in ("e.png", "t.png", "mask.png"):
        assert (tmp_path / name).stat().st_size > 0


def test_error_png_amplifies():
    # 5x amplification saturates a 20% error to u8 255
    from PIL import Image

    ref = ComplexImage(np.ones((1, 4, 4), dtype=complex))
    est = ComplexImage(np.full((1, 4, 4), 0.8, dtype=complex))
    import tempfile, os

    with tempfile.TemporaryDirectory() as td:
        p = os.path.join(td, "e.png")
        cio.error_png(p, ref, est)
        px = np.asarray(Image.open(p))
        assert px.max() == 255

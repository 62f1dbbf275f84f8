import numpy as np
import pytest

from pnpcine.core import ComplexImage
from pnpcine.operators import SenseModel, sense_forward
from pnpcine.phantom import PhantomSpec, add_noise, generate_cine_phantom, generate_coil_maps
from pnpcine.sampling import MaskSpec, generate_mask


def random_complex(shape, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_image(shape, seed=0) -> ComplexImage:
    return ComplexImage(random_complex(shape, seed))


@pytest.fixture(scope="session")
def standard_problem():
    """The 32x32x8, nc=4, R=4, 26 dB problem used across solver tests.

    Returns (reference, noisy, model, kspace) with ground-truth maps.
    """
    reference = generate_cine_phantom(PhantomSpec(nx=32, ny=32, nt=8, seed=1))
    maps = generate_coil_maps(4, 32, 32, seed=2)
    mask = generate_mask(MaskSpec(nkx=32, nky=32, nt=8, R=4.0, calib_lines=4, seed=3))
    model = SenseModel(maps, mask)
    noisy = add_noise(reference, 26.0, seed=5)
    k = sense_forward(noisy, model)
    return reference, noisy, model, k


@pytest.fixture(scope="session")
def full_problem():
    """Fully sampled, noiseless 16x16x4 problem with nc=2 true maps."""
    reference = generate_cine_phantom(PhantomSpec(nx=16, ny=16, nt=4, seed=7))
    maps = generate_coil_maps(2, 16, 16, seed=8)
    mask = generate_mask(MaskSpec(nkx=16, nky=16, nt=4, R=1.0, calib_lines=0, seed=9))
    model = SenseModel(maps, mask)
    k = sense_forward(reference, model)
    return reference, model, k

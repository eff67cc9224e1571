import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from hyperbench import HsiCube, validate_cube


def make_lowrank_scene(
    height: int = 64,
    width: int = 64,
    bands: int = 31,
    endmembers: int = 5,
    seed: int = 1234,
    wl_range: tuple[float, float] = (400.0, 1000.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic scene: smooth abundance maps mixing smooth endmember spectra.

    Spectra are exactly rank-``endmembers`` and bounded away from zero, and
    the abundance fields are spatially smooth, which keeps boundary effects
    and spectral-angle floors small.
    """
    rng = np.random.default_rng(seed)
    wl = np.linspace(wl_range[0], wl_range[1], bands)
    span = wl_range[1] - wl_range[0]
    centers = rng.uniform(wl_range[0] + 0.05 * span, wl_range[1] - 0.05 * span, size=endmembers)
    widths = rng.uniform(0.1 * span, 160.0 / 600.0 * span, size=endmembers)
    spectra = 0.25 + 0.75 * np.exp(
        -((wl[None, :] - centers[:, None]) ** 2) / (2.0 * widths[:, None] ** 2)
    )
    fields = np.stack(
        [gaussian_filter(rng.normal(size=(height, width)), 8.0, mode="wrap") for _ in range(endmembers)]
    )
    fields /= fields.std(axis=(1, 2), keepdims=True)
    logits = np.exp(2.5 * fields)
    abundances = logits / logits.sum(axis=0)
    scene = np.einsum("khw,kc->hwc", abundances, spectra)
    return scene, wl


@pytest.fixture
def lowrank_cube() -> HsiCube:
    scene, wl = make_lowrank_scene()
    return validate_cube(scene, wl)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def random_cube(rng, shape=(8, 8, 5), low=0.05, high=0.95, wavelengths=None) -> HsiCube:
    return validate_cube(rng.uniform(low, high, shape), wavelengths)

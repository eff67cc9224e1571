"""Synthetic observation generation: blur, area downsampling, seeded noise.

The LR hyperspectral observation is blur -> block-mean downsample -> noise;
the HR multispectral observation is spectral projection -> noise. Noise
streams are counter-based and derived from (seed, stream_tag), so generation
order and worker count can never change the result.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .core import DegradationConfig, HsiCube, PsfKernel, SrfMatrix, ValidationError
from .psf import blur, make_kernel
from .srf import apply_srf


@dataclass(frozen=True)
class ObservationPair:
    """The two degraded observations plus the cropped reference they came from."""

    lr_hsi: HsiCube
    hr_msi: HsiCube
    gt: HsiCube
    realized_lr_snr_db: float | None = None
    realized_msi_snr_db: float | None = None

    def __post_init__(self) -> None:
        if self.lr_hsi.bands != self.gt.bands:
            raise ValidationError("lr_hsi band count must match ground truth")
        h, w = self.lr_hsi.height, self.lr_hsi.width
        H, W = self.gt.height, self.gt.width
        if H % h or W % w or H // h != W // w:
            raise ValidationError(
                f"ground truth {H}x{W} is not an integer multiple of lr_hsi {h}x{w}"
            )
        if (self.hr_msi.height, self.hr_msi.width) != (H, W):
            raise ValidationError("hr_msi spatial dims must match ground truth")

    @property
    def factor(self) -> int:
        return self.gt.height // self.lr_hsi.height


def crop_to_factor(cube: HsiCube, factor: int) -> HsiCube:
    """Drop bottom/right remainder rows/cols so both dims divide ``factor``."""
    if factor < 1:
        raise ValidationError(f"factor must be >= 1 (got {factor})")
    if factor > min(cube.height, cube.width):
        raise ValidationError(
            f"factor {factor} exceeds image dimensions ({cube.height}, {cube.width})"
        )
    nh = cube.height - cube.height % factor
    nw = cube.width - cube.width % factor
    if (nh, nw) == (cube.height, cube.width):
        return cube
    return HsiCube(np.ascontiguousarray(cube.data[:nh, :nw, :]), cube.wavelengths)


def downsample_area(cube: HsiCube, factor: int) -> HsiCube:
    """Reduce each band by the exact arithmetic mean of f x f pixel blocks."""
    if factor < 1:
        raise ValidationError(f"factor must be >= 1 (got {factor})")
    if factor == 1:
        return cube
    h, w, b = cube.shape
    if h % factor or w % factor:
        raise ValidationError(
            f"dimensions ({h}, {w}) not divisible by factor {factor}; crop first"
        )
    blocks = cube.data.reshape(h // factor, factor, w // factor, factor, b)
    return HsiCube(blocks.mean(axis=(1, 3)), cube.wavelengths)


def _noise_stream(seed: int, stream_tag: str) -> np.random.Generator:
    digest = hashlib.blake2b(
        f"{seed}:{stream_tag}".encode("utf-8"), digest_size=16
    ).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))


def add_awgn(
    cube: HsiCube, snr_db: float, seed: int, stream_tag: str
) -> tuple[HsiCube, float]:
    """Add zero-mean white Gaussian noise at the requested SNR.

    Noise variance is ``P_signal / 10^(snr_db/10)`` with signal power taken as
    the mean of squared values over the whole cube. Returns the noisy cube and
    the realized SNR measured from the actual noise draw.
    """
    if not math.isfinite(snr_db):
        raise ValidationError(f"snr_db must be finite (got {snr_db})")
    p_signal = float(np.mean(cube.data**2))
    if p_signal <= 0.0:
        raise ValidationError("cannot set an SNR for an all-zero cube")
    sigma = math.sqrt(p_signal / 10.0 ** (snr_db / 10.0))
    noise = _noise_stream(seed, stream_tag).standard_normal(cube.shape) * sigma
    realized = 10.0 * math.log10(p_signal / float(np.mean(noise**2)))
    return HsiCube(cube.data + noise, cube.wavelengths), realized


def generate_pair(
    gt: HsiCube,
    config: DegradationConfig,
    srf: SrfMatrix,
    kernel: PsfKernel | None = None,
) -> ObservationPair:
    """Produce the LR-HSI / HR-MSI observation pair for one configuration.

    ``gt`` is expected to be normalized already (values in [0, 1]); it is
    cropped so the downsampling factor divides both spatial dimensions, and
    the cropped reference is returned in the pair. ``kernel`` may be passed
    to reuse a cached kernel; it must match ``config.psf``.
    """
    if srf.hsi_bands != gt.bands:
        raise ValidationError(
            f"SRF expects {srf.hsi_bands} source bands but ground truth has {gt.bands}"
        )
    if kernel is None:
        kernel = make_kernel(config.psf)
    gt_c = crop_to_factor(gt, config.factor)
    lr = downsample_area(blur(gt_c, kernel), config.factor)
    realized_lr = None
    if config.lr_snr_db is not None:
        lr, realized_lr = add_awgn(lr, config.lr_snr_db, config.seed, "lr")
    msi = apply_srf(gt_c, srf)
    realized_msi = None
    if config.msi_snr_db is not None:
        msi, realized_msi = add_awgn(msi, config.msi_snr_db, config.seed, "msi")
    return ObservationPair(lr, msi, gt_c, realized_lr, realized_msi)

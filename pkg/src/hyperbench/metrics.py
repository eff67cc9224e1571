"""Reconstruction-quality metrics.

All six metrics are computed in float64 from global (whole-band or
whole-pixel) statistics; variances and covariances use population
normalization. SSIM and UIQI here are the global per-band forms, not
sliding-window variants.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .core import PSNR_INF, HsiCube, MetricReport, ValidationError

log = logging.getLogger(__name__)

#: Stabilizers for the spectral-angle quotient: added to the norm product,
#: and the arccos argument is capped at 1 - SAM_DELTA.
SAM_EPSILON = 1e-8
SAM_DELTA = 1e-9


def _check_shapes(x: HsiCube, xhat: HsiCube, metric: str) -> None:
    if x.shape != xhat.shape:
        raise ValidationError(f"{metric}: shape mismatch {x.shape} vs {xhat.shape}")


def rmse(x: HsiCube, xhat: HsiCube) -> float:
    """Root mean squared error over all height x width x bands entries."""
    _check_shapes(x, xhat, "rmse")
    return float(np.sqrt(np.mean((xhat.data - x.data) ** 2)))


def psnr(x: HsiCube, xhat: HsiCube, max_value: float = 1.0) -> float:
    """Peak SNR in dB; +inf sentinel for a perfect reconstruction."""
    _check_shapes(x, xhat, "psnr")
    if max_value <= 0:
        raise ValidationError(f"psnr: max_value must be positive (got {max_value})")
    err = rmse(x, xhat)
    if err == 0.0:
        return PSNR_INF
    return 20.0 * math.log10(max_value / err)


def _band_stats(x: HsiCube, xhat: HsiCube):
    # Variances and the covariance share one centered computation so that
    # identical bands score exactly 1 (no cancellation mismatch).
    a = x.data.reshape(-1, x.bands)
    b = xhat.data.reshape(-1, x.bands)
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    da = a - mu_a
    db = b - mu_b
    var_a = (da * da).mean(axis=0)
    var_b = (db * db).mean(axis=0)
    cov = (da * db).mean(axis=0)
    return mu_a, mu_b, var_a, var_b, cov


def ssim(x: HsiCube, xhat: HsiCube, max_value: float = 1.0) -> float:
    """Band-averaged structural similarity from global per-band statistics."""
    _check_shapes(x, xhat, "ssim")
    c1 = (0.01 * max_value) ** 2
    c2 = (0.03 * max_value) ** 2
    mu_a, mu_b, var_a, var_b, cov = _band_stats(x, xhat)
    scores = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(np.clip(scores, -1.0, 1.0).mean())


def uiqi(x: HsiCube, xhat: HsiCube) -> float:
    """Band-averaged universal image quality index (global statistics)."""
    _check_shapes(x, xhat, "uiqi")
    mu_a, mu_b, var_a, var_b, cov = _band_stats(x, xhat)
    num = 4.0 * cov * mu_a * mu_b
    den = (var_a + var_b) * (mu_a**2 + mu_b**2)
    scores = np.empty(x.bands)
    for k in range(x.bands):
        if den[k] == 0.0:
            # Limit rule for degenerate bands: equal content scores 1, else 0.
            equal = np.array_equal(x.data[:, :, k], xhat.data[:, :, k])
            scores[k] = 1.0 if equal else 0.0
            log.warning("uiqi: degenerate band %d (zero denominator); scored %s", k, scores[k])
        else:
            scores[k] = num[k] / den[k]
    return float(np.clip(scores, -1.0, 1.0).mean())


def ergas(x: HsiCube, xhat: HsiCube, factor: int) -> float:
    """Dimensionless global relative error, scaled by the resolution ratio."""
    _check_shapes(x, xhat, "ergas")
    if factor < 1:
        raise ValidationError(f"ergas: factor must be >= 1 (got {factor})")
    mu = x.data.reshape(-1, x.bands).mean(axis=0)
    mu2 = mu**2
    # squared means that underflow to zero are as undefined as exact zeros
    if (mu2 == 0.0).any():
        k = int(np.argmin(mu2 != 0.0))
        raise ValidationError(f"ERGAS undefined for zero-mean band {k}")
    mse_k = ((xhat.data - x.data) ** 2).reshape(-1, x.bands).mean(axis=0)
    return float(100.0 / factor * np.sqrt(np.mean(mse_k / mu2)))


def sam(x: HsiCube, xhat: HsiCube) -> float:
    """Mean per-pixel spectral angle in degrees.

    The cosine is computed as <a, b> / (||a|| ||b|| + epsilon) and capped at
    1 - delta before arccos, so identical spectra score slightly above zero.
    """
    _check_shapes(x, xhat, "sam")
    a = x.data.reshape(-1, x.bands)
    b = xhat.data.reshape(-1, x.bands)
    dots = np.einsum("ij,ij->i", a, b)
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    ratio = dots / (norms + SAM_EPSILON)
    # The lower clip only absorbs float rounding past -1; the upper cap is
    # the documented stabilizer.
    angles = np.degrees(np.arccos(np.clip(ratio, -1.0, 1.0 - SAM_DELTA)))
    return float(angles.mean())


def evaluate_all(
    x: HsiCube, xhat: HsiCube, factor: int, max_value: float = 1.0
) -> MetricReport:
    """Compute all six metrics; failures carry the failing metric's name."""
    return MetricReport(
        rmse=rmse(x, xhat),
        psnr_db=psnr(x, xhat, max_value),
        ssim=ssim(x, xhat, max_value),
        uiqi=uiqi(x, xhat),
        ergas=ergas(x, xhat, factor),
        sam_deg=sam(x, xhat),
    )

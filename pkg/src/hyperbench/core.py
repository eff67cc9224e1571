"""Shared data types for the fusion benchmark pipeline.

Everything downstream (degradation, methods, metrics, logging) passes these
types around. All of them are immutable after construction: array payloads
are marked read-only so instances can be shared freely across worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Mapping

import numpy as np

if TYPE_CHECKING:
    from .psf import PsfSpec

#: Sentinel for PSNR of a perfect reconstruction; serialized as "inf" in logs.
PSNR_INF = math.inf

KERNEL_SUM_TOL = 1e-6
SRF_ROW_SUM_TOL = 1e-6


class HyperbenchError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(HyperbenchError):
    """A domain-type invariant or operation precondition was violated."""


class FormatError(HyperbenchError):
    """An on-disk artifact could not be parsed or has inconsistent contents."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    """Mark a freshly computed float64 C-order array as read-only."""
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class HsiCube:
    """A radiance cube indexed (row, col, band) with optional band centers.

    Construct with arrays you own (they are frozen in place); route untrusted
    input through :func:`validate_cube`, which copies and checks invariants.
    """

    data: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _freeze(self.data))
        if self.wavelengths is not None:
            object.__setattr__(self, "wavelengths", _freeze(self.wavelengths))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def validate_cube(
    candidate: np.ndarray, wavelengths: np.ndarray | list[float] | None = None
) -> HsiCube:
    """Validate a raw array (plus optional band centers) into an ``HsiCube``.

    Raises:
        ValidationError: naming the first violated invariant.
    """
    data = np.array(candidate, dtype=np.float64, order="C", copy=True)
    if data.ndim != 3:
        raise ValidationError(f"cube must be 3-D (got {data.ndim}-D)")
    if min(data.shape) <= 0:
        raise ValidationError(f"cube dimensions must be positive (got {data.shape})")
    finite = np.isfinite(data)
    if not finite.all():
        r, c, b = np.argwhere(~finite)[0]
        raise ValidationError(f"non-finite entry at ({r}, {c}, {b})")
    wl = None
    if wavelengths is not None:
        wl = np.array(wavelengths, dtype=np.float64).ravel()
        if wl.size != data.shape[2]:
            raise ValidationError(
                f"wavelength count {wl.size} does not match band count {data.shape[2]}"
            )
        if not np.isfinite(wl).all():
            raise ValidationError("wavelengths must be finite")
        if not np.all(np.diff(wl) > 0):
            raise ValidationError("wavelengths not strictly increasing")
    return HsiCube(data, wl)


@dataclass(frozen=True)
class PsfKernel:
    """A 2-D blur kernel with provenance and a unit-sum guarantee."""

    weights: np.ndarray
    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        w = _freeze(self.weights)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "params", dict(self.params))
        if w.ndim != 2:
            raise ValidationError("kernel weights must be 2-D")
        if any(s < 1 or s % 2 == 0 for s in w.shape):
            raise ValidationError(f"kernel side lengths must be odd and >= 1 (got {w.shape})")
        if abs(float(w.sum()) - 1.0) > KERNEL_SUM_TOL:
            raise ValidationError(f"kernel weights must sum to 1 (got {w.sum()!r})")
        if self.family == "delta" and not (w.shape == (1, 1) and w[0, 0] == 1.0):
            raise ValidationError("delta kernel must be exactly [[1.0]]")


@dataclass(frozen=True)
class SrfMatrix:
    """Row-stochastic spectral projection from C source bands to c sensor bands."""

    weights: np.ndarray
    sensor: str
    source_wavelengths: np.ndarray

    def __post_init__(self) -> None:
        w = _freeze(self.weights)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "source_wavelengths", _freeze(self.source_wavelengths))
        if w.ndim != 2:
            raise ValidationError("SRF weights must be 2-D")
        if self.source_wavelengths.size != w.shape[1]:
            raise ValidationError("source_wavelengths length must match SRF column count")
        if (w < 0).any():
            raise ValidationError("SRF weights must be non-negative")
        row_sums = w.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > SRF_ROW_SUM_TOL:
            k = int(np.abs(row_sums - 1.0).argmax())
            raise ValidationError(f"SRF row {k} does not sum to 1 (got {row_sums[k]!r})")
        if not (w > 0).any(axis=1).all():
            k = int(np.argmin((w > 0).any(axis=1)))
            raise ValidationError(f"SRF row {k} has no positive entry")

    @property
    def msi_bands(self) -> int:
        return self.weights.shape[0]

    @property
    def hsi_bands(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class DegradationConfig:
    """One fully specified experiment point.

    ``lr_snr_db``/``msi_snr_db`` of ``None`` mean the corresponding noise
    stage is skipped entirely.
    """

    psf: "PsfSpec"
    srf: str
    factor: int
    lr_snr_db: float | None
    msi_snr_db: float | None
    seed: int
    clip_percentiles: tuple[float, float] = (1.0, 99.0)

    def __post_init__(self) -> None:
        if int(self.factor) != self.factor or self.factor < 1:
            raise ValidationError(f"downsampling factor must be a positive integer (got {self.factor})")
        object.__setattr__(self, "factor", int(self.factor))
        for name in ("lr_snr_db", "msi_snr_db"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValidationError(f"{name} must be finite or none")
        if not (0 <= self.seed < 2**64):
            raise ValidationError("seed must fit in an unsigned 64-bit integer")
        lo, hi = self.clip_percentiles
        if not (0.0 <= lo < hi <= 100.0):
            raise ValidationError(
                f"clip percentiles must satisfy 0 <= lo < hi <= 100 (got {lo}, {hi})"
            )


@dataclass(frozen=True)
class MetricReport:
    """The six reconstruction-quality scores for one run."""

    rmse: float
    psnr_db: float
    ssim: float
    uiqi: float
    ergas: float
    sam_deg: float

    def __post_init__(self) -> None:
        if self.rmse < 0:
            raise ValidationError("rmse must be non-negative")
        if (self.rmse == 0.0) != math.isinf(self.psnr_db):
            raise ValidationError("psnr must be the +inf sentinel exactly when rmse is 0")
        for name in ("ssim", "uiqi"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [-1, 1] (got {v!r})")
        if not 0.0 <= self.sam_deg <= 180.0:
            raise ValidationError(f"sam_deg must lie in [0, 180] (got {self.sam_deg!r})")
        if self.ergas < 0:
            raise ValidationError("ergas must be non-negative")


class RunStatus(str, Enum):
    OK = "ok"
    METHOD_ERROR = "method_error"
    TIMEOUT = "timeout"
    METRIC_ERROR = "metric_error"
    DATASET_ERROR = "dataset_error"


@dataclass(frozen=True)
class ExperimentRecord:
    """One logged run: configuration context, method identity, scores, timing."""

    config: DegradationConfig
    dataset_id: str
    method_id: str
    status: RunStatus
    metrics: MetricReport | None
    wall_time_s: float
    run_index: int = 0

    def __post_init__(self) -> None:
        if (self.status == RunStatus.OK) != (self.metrics is not None):
            raise ValidationError("metrics must be present exactly when status is ok")
        if self.wall_time_s < 0:
            raise ValidationError("wall_time_s must be non-negative")

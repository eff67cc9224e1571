"""Reconstruction-method execution: builtins and the external workdir protocol.

External methods are separate processes. The runner materializes the run's
inputs into a fresh working directory (lr_hsi.npy, hr_msi.npy, srf.npy,
psf.npy, meta.json), invokes the method command with that directory as its
single trailing argument, and reads back recon.npy of shape (H, W, C). Exit
code 0 means success; anything else is recorded as a method failure without
aborting the surrounding sweep.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DegradationConfig,
    HsiCube,
    HyperbenchError,
    PsfKernel,
    RunStatus,
    SrfMatrix,
    ValidationError,
)
from .degrade import ObservationPair, downsample_area
from .io import read_cube
from .psf import blur

PROTOCOL_VERSION = "hb-proto-1"
WORKDIR_FILES = ("lr_hsi.npy", "hr_msi.npy", "srf.npy", "psf.npy", "meta.json")

BUILTIN_KINDS = ("builtin_upsample", "builtin_regression")
_RIDGE_SCALE = 1e-6
_STDERR_TAIL = 2000


@dataclass(frozen=True)
class MethodSpec:
    """Identity and invocation contract for one reconstruction method."""

    method_id: str
    kind: str
    command: tuple[str, ...] = ()
    timeout_s: float = 3600.0

    def __post_init__(self) -> None:
        if self.kind not in BUILTIN_KINDS + ("external",):
            raise ValidationError(f"unknown method kind {self.kind!r}")
        object.__setattr__(self, "command", tuple(self.command))
        if self.kind == "external" and not self.command:
            raise ValidationError("external methods need a non-empty command")
        if self.timeout_s <= 0:
            raise ValidationError("timeout_s must be positive")


class MethodError(HyperbenchError):
    """A method invocation failed; carries the status to log for the run."""

    def __init__(self, status: RunStatus, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


def bilinear_upsample(data: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear upsample of an (h, w, bands) array by an integer factor.

    Output pixel centers map to input coordinate (i + 0.5) / factor - 0.5,
    clamped at the borders.
    """
    if factor == 1:
        return data
    h, w = data.shape[:2]

    def axis_coords(n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coord = np.clip((np.arange(n_in * factor) + 0.5) / factor - 0.5, 0, n_in - 1)
        lo = np.floor(coord).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, coord - lo

    r0, r1, tr = axis_coords(h)
    c0, c1, tc = axis_coords(w)
    rows = data[r0] * (1.0 - tr)[:, None, None] + data[r1] * tr[:, None, None]
    return rows[:, c0] * (1.0 - tc)[None, :, None] + rows[:, c1] * tc[None, :, None]


def builtin_upsample(pair: ObservationPair, factor: int) -> HsiCube:
    """Baseline: bilinear upsampling of the LR-HSI, ignoring the MSI."""
    return HsiCube(bilinear_upsample(pair.lr_hsi.data, factor), pair.lr_hsi.wavelengths)


def builtin_regression(
    pair: ObservationPair, srf: SrfMatrix, kernel: PsfKernel, factor: int
) -> HsiCube:
    """Baseline: per-pixel affine spectral regression from MSI to HSI bands.

    The HR-MSI is pushed through the same blur + block-mean used for the
    LR-HSI, giving co-registered LR training pairs; a ridge-regularized
    least-squares map from (msi bands + 1) to hsi bands is then applied at
    full resolution and clamped to [0, 1].
    """
    lr_msi = downsample_area(blur(pair.hr_msi, kernel), factor)
    c = lr_msi.bands
    a = np.column_stack([lr_msi.data.reshape(-1, c), np.ones(lr_msi.height * lr_msi.width)])
    b = pair.lr_hsi.data.reshape(-1, pair.lr_hsi.bands)
    gram = a.T @ a
    lam = _RIDGE_SCALE * np.trace(gram) / (c + 1)
    coeffs = np.linalg.solve(gram + lam * np.eye(c + 1), a.T @ b)
    full = np.column_stack(
        [pair.hr_msi.data.reshape(-1, c), np.ones(pair.hr_msi.height * pair.hr_msi.width)]
    )
    recon = np.clip(full @ coeffs, 0.0, 1.0)
    shape = (pair.hr_msi.height, pair.hr_msi.width, pair.lr_hsi.bands)
    return HsiCube(recon.reshape(shape), pair.lr_hsi.wavelengths)


def write_workdir(
    pair: ObservationPair,
    srf: SrfMatrix,
    kernel: PsfKernel,
    config: DegradationConfig,
    workdir: Path,
) -> None:
    """Materialize the protocol inputs (float32 tensors + meta.json)."""
    np.save(workdir / "lr_hsi.npy", pair.lr_hsi.data.astype(np.float32))
    np.save(workdir / "hr_msi.npy", pair.hr_msi.data.astype(np.float32))
    np.save(workdir / "srf.npy", srf.weights.astype(np.float32))
    np.save(workdir / "psf.npy", kernel.weights.astype(np.float32))
    wavelengths = pair.gt.wavelengths
    meta = {
        "protocol": PROTOCOL_VERSION,
        "factor": config.factor,
        "lr_snr_db": config.lr_snr_db,
        "msi_snr_db": config.msi_snr_db,
        "seed": config.seed,
        "height": pair.gt.height,
        "width": pair.gt.width,
        "hsi_bands": pair.gt.bands,
        "msi_bands": pair.hr_msi.bands,
        "wavelengths_nm": None if wavelengths is None else [float(v) for v in wavelengths],
        "psf_family": kernel.family,
    }
    (workdir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")


def run_method(
    spec: MethodSpec,
    pair: ObservationPair,
    srf: SrfMatrix,
    kernel: PsfKernel,
    config: DegradationConfig,
    workdir: str | Path,
) -> HsiCube:
    """Execute one method on one observation pair and return its reconstruction.

    Raises:
        MethodError: nonzero exit, timeout, or missing/mis-shaped recon.npy.
    """
    if spec.kind == "builtin_upsample":
        return builtin_upsample(pair, config.factor)
    if spec.kind == "builtin_regression":
        return builtin_regression(pair, srf, kernel, config.factor)

    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if any(workdir.iterdir()):
        raise ValidationError(f"method workdir {workdir} is not empty")
    write_workdir(pair, srf, kernel, config, workdir)
    argv = list(spec.command) + [str(workdir)]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=spec.timeout_s)
    except subprocess.TimeoutExpired:
        raise MethodError(
            RunStatus.TIMEOUT, f"{spec.method_id}: timed out after {spec.timeout_s}s"
        ) from None
    except OSError as exc:
        raise MethodError(RunStatus.METHOD_ERROR, f"{spec.method_id}: cannot exec: {exc}") from exc
    if proc.returncode != 0:
        tail = proc.stderr.decode("utf-8", errors="replace")[-_STDERR_TAIL:]
        raise MethodError(
            RunStatus.METHOD_ERROR,
            f"{spec.method_id}: exit code {proc.returncode}; stderr tail:\n{tail}",
        )
    recon_path = workdir / "recon.npy"
    if not recon_path.exists():
        raise MethodError(RunStatus.METHOD_ERROR, f"{spec.method_id}: no recon.npy produced")
    try:
        recon = read_cube(recon_path)
    except HyperbenchError as exc:
        raise MethodError(RunStatus.METHOD_ERROR, f"{spec.method_id}: bad recon.npy: {exc}") from exc
    expected = (pair.gt.height, pair.gt.width, pair.gt.bands)
    if recon.shape != expected:
        raise MethodError(
            RunStatus.METHOD_ERROR,
            f"{spec.method_id}: recon shape {recon.shape} != expected {expected}",
        )
    return recon

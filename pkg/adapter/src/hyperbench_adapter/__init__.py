"""SDK for reconstruction methods driven by the hyperbench workdir protocol.

The benchmark runner materializes each run into a working directory holding
``lr_hsi.npy``, ``hr_msi.npy``, ``srf.npy``, ``psf.npy``, and ``meta.json``,
then invokes the method command with that directory as its last argument.
A method built on this SDK does::

    ctx = load_context(sys.argv[1])
    recon = my_method(ctx.lr_hsi, ctx.hr_msi, ctx.srf, ctx.psf, ctx.meta)
    save_recon(sys.argv[1], recon)

``load_context`` validates and exposes the inputs; it performs no other
computation. Reconstructions are written as float32 (the protocol tensor
dtype), so float64 input is cast with the usual precision loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROTOCOL_VERSION = "hb-proto-1"
PROTOCOL_FILES = ("lr_hsi.npy", "hr_msi.npy", "srf.npy", "psf.npy", "meta.json")

__all__ = ["MethodContext", "ProtocolError", "load_context", "save_recon", "PROTOCOL_VERSION"]


class ProtocolError(ValueError):
    """The working directory does not satisfy the exchange protocol."""


@dataclass(frozen=True)
class MethodContext:
    """In-memory view of one run's inputs."""

    lr_hsi: np.ndarray
    hr_msi: np.ndarray
    srf: np.ndarray
    psf: np.ndarray
    meta: dict

    @property
    def factor(self) -> int:
        return int(self.meta["factor"])

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return (int(self.meta["height"]), int(self.meta["width"]), int(self.meta["hsi_bands"]))


def _expected_shapes(meta: dict) -> dict[str, tuple[int, ...]]:
    height, width = int(meta["height"]), int(meta["width"])
    factor = int(meta["factor"])
    hsi_bands, msi_bands = int(meta["hsi_bands"]), int(meta["msi_bands"])
    return {
        "lr_hsi.npy": (height // factor, width // factor, hsi_bands),
        "hr_msi.npy": (height, width, msi_bands),
        "srf.npy": (msi_bands, hsi_bands),
    }


def load_context(workdir: str | Path) -> MethodContext:
    """Read and validate a runner-produced working directory.

    Raises:
        FileNotFoundError: a protocol file is missing (named in the message).
        ProtocolError: unknown protocol version or inconsistent shapes.
    """
    workdir = Path(workdir)
    for name in PROTOCOL_FILES:
        if not (workdir / name).exists():
            raise FileNotFoundError(f"missing protocol file: {workdir / name}")
    meta = json.loads((workdir / "meta.json").read_text(encoding="utf-8"))
    version = meta.get("protocol")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version!r} (expected {PROTOCOL_VERSION!r})")
    arrays = {name: np.load(workdir / name) for name in PROTOCOL_FILES[:4]}
    for name, expected in _expected_shapes(meta).items():
        if arrays[name].shape != expected:
            raise ProtocolError(f"{name} has shape {arrays[name].shape}, expected {expected}")
    psf = arrays["psf.npy"]
    if psf.ndim != 2 or psf.shape[0] != psf.shape[1] or psf.shape[0] % 2 == 0:
        raise ProtocolError(f"psf.npy must be a square odd-sided kernel (got {psf.shape})")
    wavelengths = meta.get("wavelengths_nm")
    if wavelengths is not None and len(wavelengths) != int(meta["hsi_bands"]):
        raise ProtocolError("wavelengths_nm length disagrees with hsi_bands")
    return MethodContext(
        lr_hsi=arrays["lr_hsi.npy"],
        hr_msi=arrays["hr_msi.npy"],
        srf=arrays["srf.npy"],
        psf=arrays["psf.npy"],
        meta=meta,
    )


def save_recon(workdir: str | Path, recon: np.ndarray) -> None:
    """Write ``recon.npy`` in the shape and dtype the runner expects.

    Raises:
        ProtocolError: non-3-D input, non-floating dtype, or a shape that
            disagrees with the workdir's meta.json.
    """
    workdir = Path(workdir)
    recon = np.asarray(recon)
    if recon.ndim != 3:
        raise ProtocolError(f"reconstruction must be 3-D (got {recon.ndim}-D)")
    if not np.issubdtype(recon.dtype, np.floating):
        raise ProtocolError(f"reconstruction dtype must be floating (got {recon.dtype})")
    meta_path = workdir / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        expected = (int(meta["height"]), int(meta["width"]), int(meta["hsi_bands"]))
        if recon.shape != expected:
            raise ProtocolError(f"reconstruction shape {recon.shape} != expected {expected}")
    np.save(workdir / "recon.npy", recon.astype(np.float32, copy=False))

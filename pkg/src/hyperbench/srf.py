"""Sensor spectral-response ingestion and band projection.

The four shipped sensor curve sets (ikonos-3, ikonos-4, worldview2-8,
worldview3-16) live under ``hyperbench/assets`` and can be overridden with
the ``HYPERBENCH_ASSETS`` environment variable.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import FormatError, HsiCube, SrfMatrix, ValidationError

SHIPPED_SENSORS = ("ikonos-3", "ikonos-4", "worldview2-8", "worldview3-16")


@dataclass(frozen=True)
class SrfCurve:
    """One band's sampled response: (wavelength_nm, response) pairs."""

    name: str
    wavelengths_nm: np.ndarray
    response: np.ndarray


@dataclass(frozen=True)
class SrfCurveSet:
    sensor: str
    bands: tuple[SrfCurve, ...]


def assets_dir() -> Path:
    override = os.environ.get("HYPERBENCH_ASSETS")
    if override:
        return Path(override)
    return Path(resources.files("hyperbench") / "assets")


def resolve_srf_source(sensor_or_path: str) -> Path:
    """Map a shipped sensor id or a filesystem path to a curve CSV."""
    if sensor_or_path in SHIPPED_SENSORS:
        return assets_dir() / f"{sensor_or_path}.csv"
    return Path(sensor_or_path)


def load_srf_curves(path: str | Path) -> SrfCurveSet:
    """Parse a sensor curve CSV (header ``wavelength_nm,<band1>,...``).

    Raises:
        FormatError: on malformed content, with the offending line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read SRF file {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows or len(rows[0]) < 2 or rows[0][0] != "wavelength_nm":
        raise FormatError(f"{path}: line 1: expected header 'wavelength_nm,<band1>,...'")
    band_names = rows[0][1:]
    n_bands = len(band_names)
    wavelengths: list[float] = []
    responses: list[list[float]] = [[] for _ in range(n_bands)]
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != n_bands + 1:
            raise FormatError(f"{path}: line {line_no}: expected {n_bands + 1} fields, got {len(row)}")
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise FormatError(f"{path}: line {line_no}: {exc}") from exc
        if wavelengths and values[0] <= wavelengths[-1]:
            raise FormatError(f"{path}: line {line_no}: wavelengths not strictly increasing")
        for k, v in enumerate(values[1:]):
            if v < 0:
                raise FormatError(
                    f"{path}: line {line_no}: negative response {v} in band {band_names[k]!r}"
                )
        wavelengths.append(values[0])
        for k in range(n_bands):
            responses[k].append(values[k + 1])
    if len(wavelengths) < 2:
        raise FormatError(f"{path}: needs at least 2 wavelength samples")
    wl = np.asarray(wavelengths)
    curves = []
    for k, name in enumerate(band_names):
        resp = np.asarray(responses[k])
        if not (resp > 0).any():
            raise FormatError(f"{path}: band {name!r} has no positive response sample")
        curves.append(SrfCurve(name, wl, resp))
    return SrfCurveSet(path.stem, tuple(curves))


def load_sensor(sensor_or_path: str) -> SrfCurveSet:
    return load_srf_curves(resolve_srf_source(sensor_or_path))


def build_srf_matrix(curves: SrfCurveSet, hsi_wavelengths: np.ndarray) -> SrfMatrix:
    """Sample each band curve at the cube's band centers and row-normalize.

    Sampling is linear in wavelength and zero outside a curve's support.

    Raises:
        ValidationError: when a band has no response anywhere on the cube's
            wavelength grid.
    """
    wl = np.asarray(hsi_wavelengths, dtype=np.float64).ravel()
    if wl.size < 2:
        raise ValidationError("need at least 2 hyperspectral band centers")
    if not np.all(np.diff(wl) > 0):
        raise ValidationError("hsi wavelengths not strictly increasing")
    weights = np.zeros((len(curves.bands), wl.size))
    for k, curve in enumerate(curves.bands):
        sampled = np.interp(wl, curve.wavelengths_nm, curve.response, left=0.0, right=0.0)
        total = sampled.sum()
        if total <= 0:
            raise ValidationError(f"band {k} has no spectral overlap with the cube wavelengths")
        weights[k] = sampled / total
    return SrfMatrix(weights, curves.sensor, wl)


def apply_srf(cube: HsiCube, srf: SrfMatrix) -> HsiCube:
    """Project each pixel spectrum through the SRF matrix."""
    if cube.bands != srf.hsi_bands:
        raise ValidationError(
            f"cube has {cube.bands} bands but SRF expects {srf.hsi_bands}"
        )
    out = np.tensordot(cube.data, srf.weights, axes=([2], [1]))
    return HsiCube(out)

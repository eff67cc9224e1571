"""Blur-kernel library: ten parametric families plus band-wise convolution.

Kernel entry (i, j) is evaluated at continuous pixel offsets
``(di, dj) = (i - size // 2, j - size // 2)``. Every kernel is normalized to
unit sum; the three sign-indefinite families (sinc, hermite, gabor) carry a
positivity guard so that normalization stays well-posed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import ndimage, special

from .core import HsiCube, PsfKernel, ValidationError

FAMILIES = (
    "gaussian",
    "kolmogorov",
    "airy",
    "moffat",
    "sinc",
    "lorentzian_sq",
    "hermite",
    "parabolic",
    "gabor",
    "delta",
)

#: Per-family parameter defaults. Parabolic's radius defaults to half the
#: resolved kernel side, so it is filled in at build time.
_DEFAULTS: dict[str, dict[str, float]] = {
    "gaussian": {"sigma": 1.7},
    "kolmogorov": {"fc": 0.35},
    "airy": {"s": 2.5},
    "moffat": {"alpha": 2.0, "beta": 2.5},
    "sinc": {"s": 2.0},
    "lorentzian_sq": {"gamma": 1.5},
    "hermite": {"sigma": 1.7},
    "parabolic": {},
    "gabor": {"sigma": 2.0, "lambda": 4.0, "gamma": 0.5, "theta": 30.0},
    "delta": {},
}

#: Parameters that must be strictly positive.
_POSITIVE = {
    "sigma", "fc", "s", "alpha", "beta", "gamma", "a", "lambda",
}

_DEFAULT_SIZE = 13
_MAX_GAUSSIAN_SIZE = 31
_HERMITE_MODULATION = 0.25
#: Raw kernel sums below this are rejected as non-normalizable.
_MIN_RAW_SUM = 1e-3
_SIGN_INDEFINITE = {"sinc", "hermite", "gabor"}


@dataclass(frozen=True)
class PsfSpec:
    """Declarative kernel request: family, optional side length, parameters."""

    family: str
    size: int | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown PSF family {self.family!r}")
        object.__setattr__(self, "params", dict(self.params))
        allowed = set(_DEFAULTS[self.family])
        if self.family == "parabolic":
            allowed.add("a")
        for name, value in self.params.items():
            if name not in allowed:
                raise ValidationError(f"unknown parameter {name!r} for PSF family {self.family!r}")
            if not math.isfinite(value):
                raise ValidationError(f"parameter {name!r} must be finite")
            if name in _POSITIVE and value <= 0:
                raise ValidationError(f"parameter {name!r} must be strictly positive (got {value})")
        if self.family == "delta":
            object.__setattr__(self, "size", 1)
        elif self.size is not None:
            if self.size < 1 or self.size % 2 == 0:
                raise ValidationError(f"kernel size must be odd and >= 1 (got {self.size})")

    def resolved(self) -> "PsfSpec":
        """Return a copy with size and all parameters made explicit."""
        return PsfSpec(self.family, self.resolved_size(), self.resolved_params())

    def resolved_size(self) -> int:
        if self.family == "delta":
            return 1
        if self.size is not None:
            return self.size
        if self.family == "gaussian":
            sigma = self.params.get("sigma", _DEFAULTS["gaussian"]["sigma"])
            return min(2 * math.ceil(3 * sigma) + 1, _MAX_GAUSSIAN_SIZE)
        return _DEFAULT_SIZE

    def resolved_params(self) -> dict[str, float]:
        params = dict(_DEFAULTS[self.family])
        params.update(self.params)
        if self.family == "parabolic" and "a" not in params:
            params["a"] = self.resolved_size() / 2.0
        return params


def _offsets(size: int) -> tuple[np.ndarray, np.ndarray]:
    d = np.arange(size, dtype=np.float64) - size // 2
    return np.meshgrid(d, d, indexing="ij")


def _gaussian(di, dj, p):
    return np.exp(-(di**2 + dj**2) / (2.0 * p["sigma"] ** 2))


def _airy(di, dj, p):
    # Squared jinc: [2 J1(x)/x]^2 with x = pi * rho / s, value 1 at rho = 0.
    x = np.pi * np.hypot(di, dj) / p["s"]
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = (2.0 * special.j1(x[nz]) / x[nz]) ** 2
    return out


def _moffat(di, dj, p):
    rho2 = di**2 + dj**2
    return (1.0 + rho2 / p["alpha"] ** 2) ** (-p["beta"])


def _sinc(di, dj, p):
    return np.sinc(di / p["s"]) * np.sinc(dj / p["s"])


def _lorentzian_sq(di, dj, p):
    rho2 = di**2 + dj**2
    return (1.0 / (1.0 + rho2 / p["gamma"] ** 2)) ** 2


def _hermite(di, dj, p):
    sigma = p["sigma"]

    def h2(t):
        return 4.0 * t**2 - 2.0

    envelope = np.exp(-(di**2 + dj**2) / (2.0 * sigma**2))
    return (1.0 + _HERMITE_MODULATION * h2(di / sigma) * h2(dj / sigma)) * envelope


def _parabolic(di, dj, p):
    rho2 = di**2 + dj**2
    return np.maximum(0.0, 1.0 - rho2 / p["a"] ** 2)


def _gabor(di, dj, p):
    theta = math.radians(p["theta"])
    u = di * math.cos(theta) + dj * math.sin(theta)
    v = -di * math.sin(theta) + dj * math.cos(theta)
    envelope = np.exp(-(u**2 + p["gamma"] ** 2 * v**2) / (2.0 * p["sigma"] ** 2))
    return envelope * np.cos(2.0 * np.pi * u / p["lambda"])


def _kolmogorov(size: int, p: dict[str, float]) -> np.ndarray:
    # Long-exposure turbulence transfer function exp(-3.44 (f/fc)^(5/3)),
    # inverted on an oversampled frequency grid and center-cropped. An odd
    # grid keeps the sampled frequencies symmetric, so the crop is symmetric
    # up to FFT rounding.
    n = max(129, 4 * size + 1)
    if n % 2 == 0:
        n += 1
    f = np.fft.fftfreq(n)
    fx, fy = np.meshgrid(f, f, indexing="ij")
    rho = np.hypot(fx, fy)
    otf = np.exp(-3.44 * (rho / p["fc"]) ** (5.0 / 3.0))
    psf = np.fft.fftshift(np.fft.ifft2(otf)).real
    c, r = n // 2, size // 2
    return np.clip(psf[c - r : c + r + 1, c - r : c + r + 1], 0.0, None)


_GRID_FORMS = {
    "gaussian": _gaussian,
    "airy": _airy,
    "moffat": _moffat,
    "sinc": _sinc,
    "lorentzian_sq": _lorentzian_sq,
    "hermite": _hermite,
    "parabolic": _parabolic,
    "gabor": _gabor,
}


def make_kernel(spec: PsfSpec) -> PsfKernel:
    """Build the normalized kernel described by ``spec``.

    Raises:
        ValidationError: on invalid parameters, or when a sign-indefinite
            family's raw sum is too close to zero to normalize.
    """
    size = spec.resolved_size()
    params = spec.resolved_params()
    if spec.family == "delta":
        return PsfKernel(np.array([[1.0]]), "delta", {"size": 1})
    if spec.family == "kolmogorov":
        raw = _kolmogorov(size, params)
    else:
        di, dj = _offsets(size)
        raw = _GRID_FORMS[spec.family](di, dj, params)
    total = float(raw.sum())
    if spec.family in _SIGN_INDEFINITE and total < _MIN_RAW_SUM:
        raise ValidationError(
            f"non-normalizable kernel: {spec.family} raw sum {total:.3e} is below {_MIN_RAW_SUM}"
        )
    if total <= 0:
        raise ValidationError(f"non-normalizable kernel: {spec.family} raw sum {total:.3e}")
    return PsfKernel(raw / total, spec.family, {"size": size, **params})


def blur(cube: HsiCube, kernel: PsfKernel) -> HsiCube:
    """Convolve every band with the kernel, mirror-padded at the boundary.

    Padding reflects about the edge sample without repeating it. The delta
    kernel returns the input unchanged.
    """
    k = kernel.weights
    if max(k.shape) > min(cube.height, cube.width):
        raise ValidationError(
            f"kernel {k.shape} larger than image ({cube.height}, {cube.width})"
        )
    if k.shape == (1, 1):
        return cube
    out = np.empty_like(cube.data)
    for b in range(cube.bands):
        ndimage.convolve(cube.data[:, :, b], k, output=out[:, :, b], mode="mirror")
    return HsiCube(out, cube.wavelengths)

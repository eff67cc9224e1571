"""Ground-truth construction: percentile clipping and affine rescale to [0, 1]."""

from __future__ import annotations

import numpy as np

from .core import HsiCube, ValidationError


def build_ground_truth(raw: HsiCube, p_l: float = 1.0, p_u: float = 99.0) -> HsiCube:
    """Normalize a raw cube into the reference used for scoring.

    Clips the cube to its global ``p_l``/``p_u`` percentile values and maps
    that range affinely onto [0, 1]. Percentiles are taken over the flattened
    cube (all pixels and bands jointly) using sorted order statistics with
    linear interpolation between adjacent ranks.

    Raises:
        ValidationError: on out-of-order percentiles, or when the two
            percentile values coincide ("degenerate dynamic range").
    """
    if not (0.0 <= p_l < p_u <= 100.0):
        raise ValidationError(f"percentiles must satisfy 0 <= p_l < p_u <= 100 (got {p_l}, {p_u})")
    lo, hi = np.percentile(raw.data, [p_l, p_u], method="linear")
    if not hi > lo:
        raise ValidationError("degenerate dynamic range")
    scaled = (np.clip(raw.data, lo, hi) - lo) / (hi - lo)
    return HsiCube(scaled, raw.wavelengths)

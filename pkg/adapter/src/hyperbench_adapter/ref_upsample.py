"""Reference method: bilinear upsampling of the LR-HSI.

Exists to prove the exchange protocol end to end; its output is expected to
agree with the benchmark's in-process bilinear baseline. Sampling uses the
half-pixel convention: output pixel i reads input coordinate
(i + 0.5) / factor - 0.5, clamped at the borders.
"""

from __future__ import annotations

import sys

import numpy as np

from . import load_context, save_recon


def bilinear_upsample(data: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return np.asarray(data, dtype=np.float64)
    src = np.asarray(data, dtype=np.float64)
    h, w, bands = src.shape
    out = np.empty((h * factor, w * factor, bands))
    row_pos = np.clip((np.arange(h * factor) + 0.5) / factor - 0.5, 0.0, h - 1.0)
    col_pos = np.clip((np.arange(w * factor) + 0.5) / factor - 0.5, 0.0, w - 1.0)
    r_lo = np.floor(row_pos).astype(int)
    c_lo = np.floor(col_pos).astype(int)
    r_hi = np.minimum(r_lo + 1, h - 1)
    c_hi = np.minimum(c_lo + 1, w - 1)
    r_t = (row_pos - r_lo)[:, None, None]
    c_t = (col_pos - c_lo)[None, :, None]
    top = src[r_lo][:, c_lo] * (1.0 - c_t) + src[r_lo][:, c_hi] * c_t
    bottom = src[r_hi][:, c_lo] * (1.0 - c_t) + src[r_hi][:, c_hi] * c_t
    out[:] = top * (1.0 - r_t) + bottom * r_t
    return out


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: hyperbench-ref-upsample <workdir>", file=sys.stderr)
        return 2
    try:
        ctx = load_context(argv[0])
        recon = bilinear_upsample(ctx.lr_hsi, ctx.factor)
        save_recon(argv[0], recon)
    except Exception as exc:  # a failed method must exit nonzero, never hang
        print(f"hyperbench-ref-upsample: {exc}", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

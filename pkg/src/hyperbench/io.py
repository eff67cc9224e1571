"""On-disk formats: cube files, wavelength sidecars, and result logs.

Native cube format: one UTF-8 JSON header line, then the raw little-endian
payload in (row, col, band) order, then optional float64 wavelengths.
``read_cube`` additionally understands 3-D NPY v1.0 tensors (C-order,
little-endian f32/f64) and uncompressed MATLAB v5 files holding a single 3-D
real double array, both interpreted as (row, col, band).

Result logs are a CSV with a fixed column order plus a JSONL mirror holding
the same values; PSNR of a perfect reconstruction is serialized as "inf".
"""

from __future__ import annotations

import ast
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import (
    ExperimentRecord,
    FormatError,
    HsiCube,
    MetricReport,
    RunStatus,
    validate_cube,
)

CUBE_MAGIC = "HBCUBE1"
_DTYPES = {"f32": "<f4", "f64": "<f8"}

CSV_COLUMNS = (
    "dataset_id",
    "method_id",
    "psf_family",
    "psf_params",
    "srf_sensor",
    "factor",
    "lr_snr_db",
    "msi_snr_db",
    "seed",
    "clip_lo",
    "clip_hi",
    "status",
    "rmse",
    "psnr_db",
    "ssim",
    "uiqi",
    "ergas",
    "sam_deg",
    "wall_time_s",
    "run_index",
)

_METRIC_FIELDS = ("rmse", "psnr_db", "ssim", "uiqi", "ergas", "sam_deg")


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_cube(cube: HsiCube, path: str | Path, dtype: str = "f64") -> None:
    """Write a cube in the native format; the write is atomic (tmp + rename)."""
    if dtype not in _DTYPES:
        raise FormatError(f"unsupported dtype {dtype!r} (use 'f32' or 'f64')")
    header = {
        "magic": CUBE_MAGIC,
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "dtype": dtype,
        "has_wavelengths": cube.wavelengths is not None,
    }
    parts = [json.dumps(header, separators=(",", ":")).encode("utf-8"), b"\n"]
    parts.append(np.ascontiguousarray(cube.data, dtype=_DTYPES[dtype]).tobytes())
    if cube.wavelengths is not None:
        parts.append(np.ascontiguousarray(cube.wavelengths, dtype="<f8").tobytes())
    _atomic_write(Path(path), b"".join(parts))


def _read_native(blob: bytes, path: Path) -> HsiCube:
    newline = blob.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad header: {exc}") from exc
    if header.get("magic") != CUBE_MAGIC:
        raise FormatError(f"{path}: bad magic {header.get('magic')!r}")
    dtype = header.get("dtype")
    if dtype not in _DTYPES:
        raise FormatError(f"{path}: unsupported dtype {dtype!r}")
    h, w, b = (int(header[k]) for k in ("height", "width", "bands"))
    if min(h, w, b) <= 0:
        raise FormatError(f"{path}: dimensions must be positive")
    payload = blob[newline + 1 :]
    itemsize = np.dtype(_DTYPES[dtype]).itemsize
    expected = h * w * b * itemsize + (b * 8 if header.get("has_wavelengths") else 0)
    if len(payload) != expected:
        raise FormatError(f"{path}: payload length mismatch (expected {expected} bytes, got {len(payload)})")
    data = np.frombuffer(payload[: h * w * b * itemsize], dtype=_DTYPES[dtype]).reshape(h, w, b)
    wl = None
    if header.get("has_wavelengths"):
        wl = np.frombuffer(payload[h * w * b * itemsize :], dtype="<f8")
    return validate_cube(data, wl)


def _read_npy(blob: bytes, path: Path) -> HsiCube:
    if len(blob) < 10:
        raise FormatError(f"{path}: truncated NPY header")
    major, minor = blob[6], blob[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"{path}: unsupported NPY version {major}.{minor} (only 1.0)")
    hlen = int.from_bytes(blob[8:10], "little")
    try:
        meta = ast.literal_eval(blob[10 : 10 + hlen].decode("latin1").strip())
    except (SyntaxError, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: bad NPY header: {exc}") from exc
    descr = meta.get("descr")
    if descr not in ("<f4", "<f8"):
        raise FormatError(f"{path}: unsupported dtype {descr!r} (need little-endian f32/f64)")
    if meta.get("fortran_order"):
        raise FormatError(f"{path}: Fortran-order NPY not supported (C-order required)")
    shape = meta.get("shape")
    if not isinstance(shape, tuple) or len(shape) != 3:
        raise FormatError(f"{path}: cube must be 3-D (got shape {shape})")
    payload = blob[10 + hlen :]
    expected = int(np.prod(shape)) * np.dtype(descr).itemsize
    if len(payload) != expected:
        raise FormatError(f"{path}: payload length mismatch (expected {expected} bytes, got {len(payload)})")
    return validate_cube(np.frombuffer(payload, dtype=descr).reshape(shape))


def _read_mat(path: Path) -> HsiCube:
    from scipy.io import loadmat

    try:
        contents = loadmat(str(path))
    except (ValueError, NotImplementedError, OSError) as exc:
        raise FormatError(f"{path}: cannot parse MATLAB file: {exc}") from exc
    candidates = {
        name: arr
        for name, arr in contents.items()
        if not name.startswith("__")
        and isinstance(arr, np.ndarray)
        and arr.ndim == 3
        and np.issubdtype(arr.dtype, np.floating)
    }
    if not candidates:
        raise FormatError(f"{path}: no 3-D real double array found")
    if len(candidates) > 1:
        raise FormatError(
            f"{path}: multiple 3-D arrays found ({sorted(candidates)}); expected exactly one"
        )
    return validate_cube(next(iter(candidates.values())))


def read_cube(path: str | Path) -> HsiCube:
    """Read a cube from the native format, a 3-D NPY v1.0 file, or a MAT v5 file."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if blob[:1] == b"{":
        return _read_native(blob, path)
    if blob[:6] == b"\x93NUMPY":
        return _read_npy(blob, path)
    if len(blob) >= 128 and blob[126:128] in (b"IM", b"MI"):
        return _read_mat(path)
    raise FormatError(f"{path}: unknown cube file format")


def read_wavelengths(path: str | Path) -> np.ndarray:
    """Read a wavelength sidecar: one nm value per line, '#' comments allowed."""
    values = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        try:
            values.append(float(stripped))
        except ValueError as exc:
            raise FormatError(f"{path}: line {line_no}: {exc}") from exc
    if not values:
        raise FormatError(f"{path}: no wavelength values found")
    return np.asarray(values, dtype=np.float64)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def record_fields(record: ExperimentRecord) -> dict:
    """Flatten a record into the logged field set (Python values, not strings)."""
    cfg = record.config
    psf = cfg.psf.resolved()
    fields: dict = {
        "dataset_id": record.dataset_id,
        "method_id": record.method_id,
        "psf_family": psf.family,
        "psf_params": json.dumps({"size": psf.size, **psf.params}, sort_keys=True),
        "srf_sensor": cfg.srf,
        "factor": cfg.factor,
        "lr_snr_db": cfg.lr_snr_db,
        "msi_snr_db": cfg.msi_snr_db,
        "seed": cfg.seed,
        "clip_lo": cfg.clip_percentiles[0],
        "clip_hi": cfg.clip_percentiles[1],
        "status": record.status.value,
    }
    for name in _METRIC_FIELDS:
        fields[name] = getattr(record.metrics, name) if record.metrics else None
    fields["wall_time_s"] = record.wall_time_s
    fields["run_index"] = record.run_index
    return fields


def _csv_escape(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _jsonl_value(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def append_record(record: ExperimentRecord, path: str | Path) -> None:
    """Append one row to the CSV log and mirror it to the sibling JSONL file.

    The header is written once; appending to a log with a different header
    fails rather than silently mixing schemas.
    """
    path = Path(path)
    fields = record_fields(record)
    header = ",".join(CSV_COLUMNS)
    row = ",".join(_csv_escape(_format_value(fields[c])) for c in CSV_COLUMNS)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists() and path.stat().st_size > 0:
        with path.open("r", encoding="utf-8", newline="") as fh:
            existing = fh.readline().rstrip("\r\n")
        if existing != header:
            raise FormatError(f"{path}: existing log header differs from the current schema")
        text = row + "\n"
    else:
        text = header + "\n" + row + "\n"
    with path.open("a", encoding="utf-8", newline="") as fh:
        fh.write(text)
    jsonl = {c: _jsonl_value(fields[c]) for c in CSV_COLUMNS}
    with path.with_suffix(".jsonl").open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(jsonl, sort_keys=False) + "\n")


def read_log(path: str | Path) -> list[dict[str, str]]:
    """Read a results CSV back as a list of raw string-valued rows."""
    import csv as _csv

    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = _csv.DictReader(fh)
        rows = list(reader)
    return rows


def metrics_from_fields(fields: dict) -> MetricReport | None:
    """Rebuild a MetricReport from flattened fields (None when status != ok)."""
    if fields.get("status") != RunStatus.OK.value:
        return None
    values = {}
    for name in _METRIC_FIELDS:
        raw = fields[name]
        values[name] = math.inf if raw == "inf" else float(raw)
    return MetricReport(**values)

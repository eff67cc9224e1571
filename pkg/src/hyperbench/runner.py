"""Experiment orchestration: grid expansion, parallel execution, aggregation.

A grid is the cross product of datasets, methods, and PSFs against the four
degradation axes (SRF, factor, LR SNR, MSI SNR). The degradation axes combine
either as a full Cartesian product or zipped into operating points (equal
lengths advance together; length-1 axes broadcast). Every expanded run gets a
seed derived by hashing its full configuration against the base seed, so
replays and worker counts can never change logged values.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as hbio
from .core import (
    DegradationConfig,
    ExperimentRecord,
    FormatError,
    HsiCube,
    HyperbenchError,
    MetricReport,
    RunStatus,
    ValidationError,
    validate_cube,
)
from .degrade import generate_pair
from .groundtruth import build_ground_truth
from .metrics import evaluate_all
from .methods import MethodError, MethodSpec, run_method
from .psf import FAMILIES, PsfSpec, make_kernel
from .srf import build_srf_matrix, load_sensor

log = logging.getLogger(__name__)

LOG_BASENAME = "results.csv"
_ZIPPED_AXES = ("srfs", "factors", "lr_snrs_db", "msi_snrs_db")


@dataclass(frozen=True)
class DatasetRef:
    dataset_id: str
    cube_path: str
    wavelengths_path: str | None = None


@dataclass(frozen=True)
class GridSpec:
    """Declarative sweep: axis value lists plus pairing mode and base seed."""

    datasets: tuple[DatasetRef, ...]
    psfs: tuple[PsfSpec, ...]
    srfs: tuple[str, ...]
    factors: tuple[int, ...]
    lr_snrs_db: tuple[float | None, ...]
    msi_snrs_db: tuple[float | None, ...]
    methods: tuple[MethodSpec, ...]
    base_seed: int
    pairing: str = "cartesian"


@dataclass(frozen=True)
class ExpandedRun:
    run_index: int
    dataset_id: str
    method: MethodSpec
    config: DegradationConfig
    srf_id: str


def derive_run_seed(
    base_seed: int,
    dataset_id: str,
    psf: PsfSpec,
    srf: str,
    factor: int,
    lr_snr_db: float | None,
    msi_snr_db: float | None,
) -> int:
    """Stable 64-bit per-run seed from the degradation coordinates."""
    resolved = psf.resolved()
    canonical = json.dumps(
        {
            "base": base_seed,
            "dataset": dataset_id,
            "psf": {"family": resolved.family, "size": resolved.size, "params": resolved.params},
            "srf": srf,
            "factor": factor,
            "lr_snr_db": lr_snr_db,
            "msi_snr_db": msi_snr_db,
        },
        sort_keys=True,
    )
    digest = hashlib.blake2b(canonical.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _validate_grid(spec: GridSpec) -> None:
    for name in ("datasets", "psfs", "srfs", "factors", "lr_snrs_db", "msi_snrs_db", "methods"):
        if not getattr(spec, name):
            raise ValidationError(f"grid spec list {name!r} must be non-empty")
    if spec.pairing not in ("cartesian", "zipped"):
        raise ValidationError(f"unknown pairing mode {spec.pairing!r}")
    if not (0 <= spec.base_seed < 2**64):
        raise ValidationError("base_seed must fit in an unsigned 64-bit integer")
    for factor in spec.factors:
        if int(factor) != factor or factor < 1:
            raise ValidationError(f"factors must be positive integers (got {factor})")


def _degradation_points(spec: GridSpec) -> list[tuple[str, int, float | None, float | None]]:
    axes = {name: tuple(getattr(spec, name)) for name in _ZIPPED_AXES}
    if spec.pairing == "cartesian":
        return [
            (srf, int(factor), lr, msi)
            for srf in axes["srfs"]
            for factor in axes["factors"]
            for lr in axes["lr_snrs_db"]
            for msi in axes["msi_snrs_db"]
        ]
    length = max(len(v) for v in axes.values())
    for name, values in axes.items():
        if len(values) not in (1, length):
            raise ValidationError(
                f"zipped pairing: axis {name!r} has length {len(values)}, expected 1 or {length}"
            )
    expanded = {
        name: values * length if len(values) == 1 else values for name, values in axes.items()
    }
    return [
        (
            expanded["srfs"][i],
            int(expanded["factors"][i]),
            expanded["lr_snrs_db"][i],
            expanded["msi_snrs_db"][i],
        )
        for i in range(length)
    ]


def expand_grid(spec: GridSpec) -> list[ExpandedRun]:
    """Expand a grid into its ordered run list.

    Order is deterministic and lexicographic over (dataset, method, psf,
    degradation point); in cartesian mode the degradation point itself orders
    lexicographically over (srf, factor, lr_snr, msi_snr).
    """
    _validate_grid(spec)
    points = _degradation_points(spec)
    runs: list[ExpandedRun] = []
    index = 0
    for dataset in spec.datasets:
        for method in spec.methods:
            for psf in spec.psfs:
                resolved = psf.resolved()
                for srf_id, factor, lr, msi in points:
                    seed = derive_run_seed(
                        spec.base_seed, dataset.dataset_id, resolved, srf_id, factor, lr, msi
                    )
                    config = DegradationConfig(
                        psf=resolved,
                        srf=srf_id,
                        factor=factor,
                        lr_snr_db=lr,
                        msi_snr_db=msi,
                        seed=seed,
                    )
                    runs.append(ExpandedRun(index, dataset.dataset_id, method, config, srf_id))
                    index += 1
    return runs


class _PipelineCache:
    """Thread-safe memo for datasets, kernels, and SRF matrices."""

    def __init__(self, datasets: dict[str, DatasetRef]):
        self._datasets = datasets
        self._lock = threading.Lock()
        self._gt: dict = {}
        self._kernels: dict = {}
        self._srfs: dict = {}

    def _load_gt(self, dataset_id: str, clip: tuple[float, float]) -> HsiCube:
        ref = self._datasets[dataset_id]
        cube = hbio.read_cube(ref.cube_path)
        if ref.wavelengths_path:
            cube = validate_cube(cube.data, hbio.read_wavelengths(ref.wavelengths_path))
        return build_ground_truth(cube, *clip)

    def ground_truth(self, dataset_id: str, clip: tuple[float, float]) -> HsiCube:
        key = (dataset_id, clip)
        with self._lock:
            if key not in self._gt:
                try:
                    self._gt[key] = ("ok", self._load_gt(dataset_id, clip))
                except HyperbenchError as exc:
                    self._gt[key] = ("error", str(exc))
            kind, value = self._gt[key]
        if kind == "error":
            raise ValidationError(value)
        return value

    def kernel(self, psf: PsfSpec):
        key = (psf.family, psf.size, tuple(sorted(psf.params.items())))
        with self._lock:
            if key not in self._kernels:
                self._kernels[key] = make_kernel(psf)
            return self._kernels[key]

    def srf_matrix(self, srf_id: str, gt: HsiCube, dataset_id: str):
        key = (srf_id, dataset_id)
        with self._lock:
            if key not in self._srfs:
                if gt.wavelengths is None:
                    raise ValidationError(
                        f"dataset {dataset_id!r} has no wavelength metadata; "
                        "provide a wavelengths sidecar"
                    )
                self._srfs[key] = build_srf_matrix(load_sensor(srf_id), gt.wavelengths)
            return self._srfs[key]


def _execute_run(run: ExpandedRun, cache: _PipelineCache, work_root: Path) -> ExperimentRecord:
    def failed(status: RunStatus, wall: float, detail: str) -> ExperimentRecord:
        log.warning("run %d (%s/%s): %s: %s", run.run_index, run.dataset_id,
                     run.method.method_id, status.value, detail)
        return ExperimentRecord(
            config=run.config,
            dataset_id=run.dataset_id,
            method_id=run.method.method_id,
            status=status,
            metrics=None,
            wall_time_s=wall,
            run_index=run.run_index,
        )

    try:
        gt = cache.ground_truth(run.dataset_id, run.config.clip_percentiles)
        kernel = cache.kernel(run.config.psf)
        srf = cache.srf_matrix(run.srf_id, gt, run.dataset_id)
        pair = generate_pair(gt, run.config, srf, kernel)
    except HyperbenchError as exc:
        return failed(RunStatus.DATASET_ERROR, 0.0, str(exc))

    workdir = work_root / f"run{run.run_index:06d}"
    start = time.perf_counter()
    try:
        recon = run_method(run.method, pair, srf, kernel, run.config, workdir)
    except MethodError as exc:
        return failed(exc.status, time.perf_counter() - start, exc.detail)
    wall = time.perf_counter() - start

    try:
        report = evaluate_all(pair.gt, recon, run.config.factor)
    except HyperbenchError as exc:
        return failed(RunStatus.METRIC_ERROR, wall, str(exc))
    shutil.rmtree(workdir, ignore_errors=True)
    return ExperimentRecord(
        config=run.config,
        dataset_id=run.dataset_id,
        method_id=run.method.method_id,
        status=RunStatus.OK,
        metrics=report,
        wall_time_s=wall,
        run_index=run.run_index,
    )


def run_grid(spec: GridSpec, out_dir: str | Path, workers: int = 1) -> dict[str, int]:
    """Execute every expanded run, log each to ``results.csv``, return status counts.

    Rows are appended in completion order; the ``run_index`` column recovers
    expansion order. Method failures produce non-ok rows and never abort the
    sweep; an unreadable dataset fails only that dataset's rows.
    """
    if workers < 1:
        raise ValidationError(f"workers must be >= 1 (got {workers})")
    runs = expand_grid(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / LOG_BASENAME
    work_root = out_dir / "work"
    cache = _PipelineCache({d.dataset_id: d for d in spec.datasets})
    counts: dict[str, int] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_execute_run, run, cache, work_root) for run in runs]
        for future in as_completed(futures):
            record = future.result()
            hbio.append_record(record, log_path)
            counts[record.status.value] = counts.get(record.status.value, 0) + 1
    shutil.rmtree(work_root, ignore_errors=True)
    return counts


def run_single(
    dataset_path: str | Path,
    method: MethodSpec,
    config: DegradationConfig,
    srf_id: str,
    out_dir: str | Path,
    dataset_id: str | None = None,
    wavelengths_path: str | Path | None = None,
    log_path: str | Path | None = None,
) -> ExperimentRecord:
    """Run one configuration end to end, log it, and return the record.

    Dataset problems raise before anything is logged; method and metric
    failures are logged as non-ok records.
    """
    dataset_path = Path(dataset_path)
    if dataset_id is None:
        dataset_id = dataset_path.stem
    cube = hbio.read_cube(dataset_path)
    if wavelengths_path:
        cube = validate_cube(cube.data, hbio.read_wavelengths(wavelengths_path))
    gt = build_ground_truth(cube, *config.clip_percentiles)
    if gt.wavelengths is None:
        raise ValidationError(
            f"dataset {dataset_id!r} has no wavelength metadata; provide a wavelengths sidecar"
        )
    kernel = make_kernel(config.psf)
    srf = build_srf_matrix(load_sensor(srf_id), gt.wavelengths)
    pair = generate_pair(gt, config, srf, kernel)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workdir = out_dir / "work" / "single"
    if workdir.exists():
        shutil.rmtree(workdir)
    status = RunStatus.OK
    report: MetricReport | None = None
    start = time.perf_counter()
    try:
        recon = run_method(method, pair, srf, kernel, config, workdir)
        wall = time.perf_counter() - start
        try:
            report = evaluate_all(pair.gt, recon, config.factor)
        except HyperbenchError as exc:
            status = RunStatus.METRIC_ERROR
            log.warning("metric failure: %s", exc)
    except MethodError as exc:
        wall = time.perf_counter() - start
        status = exc.status
        log.warning("method failure: %s", exc.detail)
    record = ExperimentRecord(
        config=config,
        dataset_id=dataset_id,
        method_id=method.method_id,
        status=status,
        metrics=report,
        wall_time_s=wall,
        run_index=0,
    )
    hbio.append_record(record, Path(log_path) if log_path else out_dir / LOG_BASENAME)
    shutil.rmtree(out_dir / "work" / "single", ignore_errors=True)
    return record


#: The seven (srf, factor, lr_snr) operating points of the canned sweep, with
#: the MSI SNR held at 40 dB: the factor-4 anchor at 35 dB, the four-band
#: ladder at factor 8 and 30 dB, then factors 16 and 32 at 25 and 20 dB.
STUDY70_SRFS = (
    "ikonos-4",
    "ikonos-3",
    "ikonos-4",
    "worldview2-8",
    "worldview3-16",
    "ikonos-4",
    "ikonos-4",
)
STUDY70_FACTORS = (4, 8, 8, 8, 8, 16, 32)
STUDY70_LR_SNRS = (35.0, 30.0, 30.0, 30.0, 30.0, 25.0, 20.0)


def canned_study_spec(base_seed: int = 1) -> GridSpec:
    """The shipped 70-point sweep: ten default PSFs x seven operating points.

    Datasets and methods are intentionally empty; fill them in before running.
    """
    return GridSpec(
        datasets=(),
        psfs=tuple(PsfSpec(family) for family in FAMILIES),
        srfs=STUDY70_SRFS,
        factors=STUDY70_FACTORS,
        lr_snrs_db=STUDY70_LR_SNRS,
        msi_snrs_db=(40.0,),
        methods=(),
        base_seed=base_seed,
        pairing="zipped",
    )


# --- grid config files -----------------------------------------------------


def save_grid_spec(spec: GridSpec, path: str | Path) -> None:
    """Write a grid spec as the documented JSON schema."""
    doc = {
        "datasets": [
            {"id": d.dataset_id, "cube": d.cube_path, "wavelengths": d.wavelengths_path}
            for d in spec.datasets
        ],
        "psfs": [
            {"family": p.family, "size": p.size, "params": dict(p.params)} for p in spec.psfs
        ],
        "srfs": list(spec.srfs),
        "factors": list(spec.factors),
        "lr_snrs_db": list(spec.lr_snrs_db),
        "msi_snrs_db": list(spec.msi_snrs_db),
        "methods": [
            {
                "method_id": m.method_id,
                "kind": m.kind,
                "command": list(m.command),
                "timeout_s": m.timeout_s,
            }
            for m in spec.methods
        ],
        "base_seed": spec.base_seed,
        "pairing": spec.pairing,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_grid_spec(path: str | Path) -> GridSpec:
    """Parse a grid config file written in the documented JSON schema."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read grid file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    try:
        datasets = tuple(
            DatasetRef(d["id"], d["cube"], d.get("wavelengths")) for d in doc["datasets"]
        )
        psfs = tuple(
            PsfSpec(p["family"], p.get("size"), p.get("params") or {}) for p in doc["psfs"]
        )
        methods = tuple(
            MethodSpec(
                m["method_id"],
                m["kind"],
                tuple(m.get("command") or ()),
                float(m.get("timeout_s", 3600.0)),
            )
            for m in doc["methods"]
        )
        spec = GridSpec(
            datasets=datasets,
            psfs=psfs,
            srfs=tuple(doc["srfs"]),
            factors=tuple(int(f) for f in doc["factors"]),
            lr_snrs_db=tuple(None if v is None else float(v) for v in doc["lr_snrs_db"]),
            msi_snrs_db=tuple(None if v is None else float(v) for v in doc["msi_snrs_db"]),
            methods=methods,
            base_seed=int(doc["base_seed"]),
            pairing=doc.get("pairing", "cartesian"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad grid schema: {exc!r}") from exc
    return spec


# --- aggregation ------------------------------------------------------------

AGGREGATABLE = ("rmse", "psnr_db", "ssim", "uiqi", "ergas", "sam_deg", "wall_time_s")


@dataclass(frozen=True)
class AggregateRow:
    group: tuple[str, ...]
    metric: str
    mean: float | None
    std: float | None
    count: int
    inf_count: int = 0


def aggregate(
    log_path: str | Path, group_by: list[str], metrics: list[str]
) -> list[AggregateRow]:
    """Per-group mean/std/count over the ok rows of a results log.

    Standard deviation is the population form. "inf" PSNR rows are excluded
    from mean/std and surfaced through ``inf_count`` instead.
    """
    for col in group_by:
        if col not in hbio.CSV_COLUMNS:
            raise ValidationError(f"unknown group-by column {col!r}")
    for metric in metrics:
        if metric not in AGGREGATABLE:
            raise ValidationError(f"unknown metric column {metric!r}")
    rows = [r for r in hbio.read_log(log_path) if r.get("status") == RunStatus.OK.value]
    groups: dict[tuple[str, ...], list[dict[str, str]]] = {}
    for row in rows:
        key = tuple(row[c] for c in group_by)
        groups.setdefault(key, []).append(row)
    out: list[AggregateRow] = []
    for key in sorted(groups):
        for metric in metrics:
            values = []
            inf_count = 0
            for row in groups[key]:
                cell = row[metric]
                if cell == "inf":
                    inf_count += 1
                else:
                    values.append(float(cell))
            if values:
                arr = np.asarray(values)
                mean, std = float(arr.mean()), float(arr.std())
            else:
                mean = std = None
            out.append(AggregateRow(key, metric, mean, std, len(values), inf_count))
    return out

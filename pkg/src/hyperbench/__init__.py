"""Reproducible synthetic experimentation for hyperspectral/multispectral fusion.

The pipeline: normalize a reference cube, degrade it into an LR-HSI / HR-MSI
observation pair under configurable blur / spectral-projection / downsampling
/ noise operators, run reconstruction methods (in-process baselines or
external commands speaking the workdir protocol), score with six standard
metrics, and log every run with its full configuration.
"""

from .core import (
    DegradationConfig,
    ExperimentRecord,
    FormatError,
    HsiCube,
    HyperbenchError,
    MetricReport,
    PSNR_INF,
    PsfKernel,
    RunStatus,
    SrfMatrix,
    ValidationError,
    validate_cube,
)
from .degrade import ObservationPair, add_awgn, crop_to_factor, downsample_area, generate_pair
from .groundtruth import build_ground_truth
from .io import append_record, read_cube, read_log, read_wavelengths, write_cube
from .metrics import ergas, evaluate_all, psnr, rmse, sam, ssim, uiqi
from .methods import MethodError, MethodSpec, builtin_regression, builtin_upsample, run_method
from .psf import FAMILIES, PsfSpec, blur, make_kernel
from .runner import (
    AggregateRow,
    DatasetRef,
    ExpandedRun,
    GridSpec,
    aggregate,
    canned_study_spec,
    expand_grid,
    load_grid_spec,
    run_grid,
    run_single,
    save_grid_spec,
)
from .srf import SrfCurve, SrfCurveSet, apply_srf, build_srf_matrix, load_sensor, load_srf_curves

__version__ = "1.0.0"

"""Command-line interface.

Subcommands: degrade (write one observation pair), run (one full experiment),
sweep (a grid config file), eval (score a reconstruction file), aggregate
(summarize a results log). Exit codes: 0 success, 1 pipeline error, 2 usage
error, 3 method failure.
"""

from __future__ import annotations

import argparse
import json
import math
import shlex
import sys
from pathlib import Path

from . import io as hbio
from .core import (
    DegradationConfig,
    ExperimentRecord,
    FormatError,
    HyperbenchError,
    RunStatus,
    ValidationError,
    validate_cube,
)
from .degrade import generate_pair
from .groundtruth import build_ground_truth
from .metrics import evaluate_all
from .methods import BUILTIN_KINDS, MethodSpec
from .psf import FAMILIES, PsfSpec
from .runner import AGGREGATABLE, aggregate, load_grid_spec, run_grid, run_single
from .srf import build_srf_matrix, load_sensor

EXIT_OK = 0
EXIT_PIPELINE = 1
EXIT_USAGE = 2
EXIT_METHOD = 3

_METRIC_ORDER = ("rmse", "psnr_db", "ssim", "uiqi", "ergas", "sam_deg")


class UsageError(HyperbenchError):
    pass


def _parse_snr(text: str | None) -> float | None:
    if text is None or text.lower() == "none":
        return None
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"bad SNR value {text!r} (number or 'none')") from None


def _parse_psf_params(pairs: list[str]) -> dict[str, float]:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--psf-param expects k=v (got {pair!r})")
        key, value = pair.split("=", 1)
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--psf-param {key}: {value!r} is not a number") from None
    return params


def _parse_clip(text: str | None) -> tuple[float, float]:
    if text is None:
        return (1.0, 99.0)
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"--clip expects lo,hi (got {text!r})")
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError:
        raise UsageError(f"--clip expects numbers (got {text!r})") from None


def _config_from_args(args) -> DegradationConfig:
    try:
        psf = PsfSpec(args.psf, args.psf_size, _parse_psf_params(args.psf_param))
        return DegradationConfig(
            psf=psf.resolved(),
            srf=args.srf,
            factor=args.factor,
            lr_snr_db=_parse_snr(args.lr_snr),
            msi_snr_db=_parse_snr(args.msi_snr),
            seed=args.seed,
            clip_percentiles=_parse_clip(args.clip),
        )
    except ValidationError as exc:
        raise UsageError(str(exc)) from exc


def _load_input_cube(args):
    cube = hbio.read_cube(args.input)
    if args.wavelengths:
        cube = validate_cube(cube.data, hbio.read_wavelengths(args.wavelengths))
    return cube


def _method_from_args(args) -> MethodSpec:
    name = args.method
    if name in BUILTIN_KINDS:
        return MethodSpec(method_id=name, kind=name)
    if name.startswith("exec:"):
        command = shlex.split(name[len("exec:") :])
        if not command:
            raise UsageError("exec: method needs a command")
        return MethodSpec(method_id=name, kind="external", command=tuple(command),
                          timeout_s=args.timeout)
    raise UsageError(
        f"unknown method {name!r} (use {', '.join(BUILTIN_KINDS)}, or exec:<command>)"
    )


def _fmt17(value: float) -> str:
    return format(value, ".17g")


def _metrics_json(report) -> str:
    parts = []
    for name in _METRIC_ORDER:
        value = getattr(report, name)
        rendered = '"inf"' if math.isinf(value) else _fmt17(value)
        parts.append(f'"{name}": {rendered}')
    return "{" + ", ".join(parts) + "}"


def _print_metrics_table(report) -> None:
    for name in _METRIC_ORDER:
        value = getattr(report, name)
        print(f"{name:<10} {'inf' if math.isinf(value) else _fmt17(value)}")


def cmd_degrade(args) -> int:
    config = _config_from_args(args)
    cube = _load_input_cube(args)
    gt = build_ground_truth(cube, *config.clip_percentiles)
    if gt.wavelengths is None:
        raise HyperbenchError(
            "input cube has no wavelength metadata; pass --wavelengths"
        )
    srf = build_srf_matrix(load_sensor(config.srf), gt.wavelengths)
    pair = generate_pair(gt, config, srf)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hbio.write_cube(pair.gt, out_dir / "gt.hbc")
    hbio.write_cube(pair.lr_hsi, out_dir / "lr_hsi.hbc")
    hbio.write_cube(pair.hr_msi, out_dir / "hr_msi.hbc")
    manifest = {
        "psf_family": config.psf.family,
        "psf_params": {"size": config.psf.size, **config.psf.params},
        "srf": config.srf,
        "factor": config.factor,
        "lr_snr_db": config.lr_snr_db,
        "msi_snr_db": config.msi_snr_db,
        "seed": config.seed,
        "clip_percentiles": list(config.clip_percentiles),
        "realized_lr_snr_db": pair.realized_lr_snr_db,
        "realized_msi_snr_db": pair.realized_msi_snr_db,
        "outputs": {"gt": "gt.hbc", "lr_hsi": "lr_hsi.hbc", "hr_msi": "hr_msi.hbc"},
        "shapes": {"gt": pair.gt.shape, "lr_hsi": pair.lr_hsi.shape, "hr_msi": pair.hr_msi.shape},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    print(f"wrote gt/lr_hsi/hr_msi + manifest.json to {out_dir}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _config_from_args(args)
    method = _method_from_args(args)
    log_path = Path(args.log)
    record: ExperimentRecord = run_single(
        args.input,
        method,
        config,
        config.srf,
        log_path.parent if str(log_path.parent) else Path("."),
        wavelengths_path=args.wavelengths,
        log_path=log_path,
    )
    if record.status == RunStatus.OK:
        _print_metrics_table(record.metrics)
        return EXIT_OK
    print(f"run failed with status {record.status.value}", file=sys.stderr)
    if record.status in (RunStatus.METHOD_ERROR, RunStatus.TIMEOUT):
        return EXIT_METHOD
    return EXIT_PIPELINE


def cmd_sweep(args) -> int:
    try:
        spec = load_grid_spec(args.grid)
        if not spec.methods:
            raise UsageError("grid file lists no methods")
        if not spec.datasets:
            raise UsageError("grid file lists no datasets")
        counts = run_grid(spec, args.out_dir, workers=args.workers)
    except (UsageError, ValidationError, FormatError) as exc:
        raise UsageError(str(exc)) from exc
    total = sum(counts.values())
    summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
    print(f"{total} runs: {summary}")
    print(f"log: {Path(args.out_dir) / 'results.csv'}")
    if counts.get(RunStatus.DATASET_ERROR.value):
        return EXIT_PIPELINE
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = hbio.read_cube(args.gt)
    recon = hbio.read_cube(args.recon)
    report = evaluate_all(gt, recon, args.factor, args.max)
    if args.json:
        print(_metrics_json(report))
    else:
        _print_metrics_table(report)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    group_by = [c for c in args.group_by.split(",") if c] if args.group_by else []
    metrics = [m for m in args.metrics.split(",") if m]
    try:
        rows = aggregate(args.log, group_by, metrics)
    except ValidationError as exc:
        raise UsageError(str(exc)) from exc
    header = group_by + ["metric", "mean", "std", "count", "inf_count"]
    lines = [header]
    for row in rows:
        mean = "" if row.mean is None else _fmt17(row.mean)
        std = "" if row.std is None else _fmt17(row.std)
        lines.append(list(row.group) + [row.metric, mean, std, str(row.count), str(row.inf_count)])
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    for line in lines:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip())
    if args.csv_out:
        out = Path(args.csv_out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(
            "\n".join(",".join(line) for line in lines) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def _add_degradation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="cube file (native/.npy/.mat)")
    parser.add_argument("--wavelengths", help="wavelength sidecar (one nm per line)")
    parser.add_argument("--psf", required=True, choices=FAMILIES, help="PSF family")
    parser.add_argument("--psf-param", action="append", default=[], metavar="K=V",
                        help="PSF parameter override (repeatable)")
    parser.add_argument("--psf-size", type=int, help="odd kernel side length")
    parser.add_argument("--srf", required=True, help="sensor id or curve CSV path")
    parser.add_argument("--factor", required=True, type=int, help="spatial downsampling factor")
    parser.add_argument("--lr-snr", help="LR-HSI SNR in dB, or 'none'")
    parser.add_argument("--msi-snr", help="HR-MSI SNR in dB, or 'none'")
    parser.add_argument("--seed", required=True, type=int, help="base noise seed")
    parser.add_argument("--clip", help="normalization percentiles lo,hi (default 1,99)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperbench",
        description="Synthetic degradation, benchmarking, and scoring for "
        "hyperspectral/multispectral fusion methods.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="write gt/lr_hsi/hr_msi cubes + manifest")
    _add_degradation_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("run", help="run one method on one configuration and log it")
    _add_degradation_flags(p)
    p.add_argument("--method", required=True,
                   help="builtin_upsample | builtin_regression | exec:<command>")
    p.add_argument("--timeout", type=float, default=3600.0, help="method timeout (s)")
    p.add_argument("--log", required=True, help="results CSV path (sibling JSONL mirrored)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid config file")
    p.add_argument("--grid", required=True, help="grid config JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score a reconstruction against a ground-truth cube")
    p.add_argument("--gt", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--factor", required=True, type=int)
    p.add_argument("--max", type=float, default=1.0, help="peak value for PSNR/SSIM")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("aggregate", help="summarize a results log")
    p.add_argument("--log", required=True)
    p.add_argument("--group-by", default="", help="comma-separated log columns")
    p.add_argument("--metrics", required=True, help=f"comma-separated from {AGGREGATABLE}")
    p.add_argument("--csv-out", help="also write the table as CSV")
    p.set_defaults(func=cmd_aggregate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HyperbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

import numpy as np
import pytest

from hyperbench import (
    DatasetRef,
    GridSpec,
    MethodSpec,
    ValidationError,
    aggregate,
    canned_study_spec,
    expand_grid,
    load_grid_spec,
    read_log,
    run_grid,
    run_single,
    save_grid_spec,
)
from hyperbench.core import DegradationConfig
from hyperbench.psf import PsfSpec
from hyperbench.runner import derive_run_seed
from conftest import make_lowrank_scene

UPSAMPLE = MethodSpec("bilinear", "builtin_upsample")
REGRESSION = MethodSpec("spectral_fit", "builtin_regression")


def small_grid(datasets, methods=(UPSAMPLE,), **overrides) -> GridSpec:
    base = dict(
        datasets=tuple(datasets),
        psfs=(PsfSpec("delta"), PsfSpec("gaussian", size=5)),
        srfs=("ikonos-4",),
        factors=(2,),
        lr_snrs_db=(30.0,),
        msi_snrs_db=(None,),
        methods=tuple(methods),
        base_seed=77,
        pairing="cartesian",
    )
    base.update(overrides)
    return GridSpec(**base)


@pytest.fixture
def scene_dataset(tmp_path):
    scene, wl = make_lowrank_scene(height=32, width=32, bands=16, seed=5)
    cube_path = tmp_path / "scene.npy"
    np.save(cube_path, scene.astype(np.float32))
    wl_path = tmp_path / "scene_wl.txt"
    wl_path.write_text("\n".join(str(v) for v in wl))
    return DatasetRef("scene", str(cube_path), str(wl_path))


# --- expansion ----------------------------------------------------------------


def test_cartesian_expansion_order_and_count():
    spec = small_grid(
        [DatasetRef("a", "a.npy"), DatasetRef("b", "b.npy")],
        methods=(UPSAMPLE, REGRESSION),
        factors=(2, 4),
        lr_snrs_db=(30.0, None),
    )
    runs = expand_grid(spec)
    assert len(runs) == 2 * 2 * 2 * 1 * 2 * 2 * 1
    assert [r.run_index for r in runs] == list(range(len(runs)))
    assert runs[0].dataset_id == "a" and runs[-1].dataset_id == "b"
    # lexicographic: lr_snr advances fastest, then factor
    assert [r.config.lr_snr_db for r in runs[:4]] == [30.0, None, 30.0, None]
    assert [r.config.factor for r in runs[:4]] == [2, 2, 4, 4]
    assert expand_grid(spec) == runs  # stable across calls


def test_single_point_grid():
    spec = small_grid([DatasetRef("a", "a.npy")], psfs=(PsfSpec("delta"),))
    assert len(expand_grid(spec)) == 1


def test_zipped_expansion_advances_axes_together():
    spec = small_grid(
        [DatasetRef("a", "a.npy")],
        pairing="zipped",
        srfs=("ikonos-3", "ikonos-4", "worldview2-8"),
        factors=(4, 8, 16),
        lr_snrs_db=(35.0, 30.0, 25.0),
        msi_snrs_db=(40.0,),
    )
    runs = expand_grid(spec)
    assert len(runs) == 2 * 3  # 2 psfs x 3 zipped points
    points = [(r.srf_id, r.config.factor, r.config.lr_snr_db, r.config.msi_snr_db)
              for r in runs[:3]]
    assert points == [
        ("ikonos-3", 4, 35.0, 40.0),
        ("ikonos-4", 8, 30.0, 40.0),
        ("worldview2-8", 16, 25.0, 40.0),
    ]


def test_zipped_length_mismatch_rejected():
    spec = small_grid(
        [DatasetRef("a", "a.npy")],
        pairing="zipped",
        srfs=("ikonos-3", "ikonos-4"),
        factors=(4, 8, 16),
    )
    with pytest.raises(ValidationError, match="zipped"):
        expand_grid(spec)


def test_empty_axis_rejected():
    spec = small_grid([DatasetRef("a", "a.npy")], srfs=())
    with pytest.raises(ValidationError, match="non-empty"):
        expand_grid(spec)


def test_seeds_distinct_across_points_and_stable():
    spec = small_grid(
        [DatasetRef("a", "a.npy"), DatasetRef("b", "b.npy")],
        factors=(2, 4, 8),
        lr_snrs_db=(30.0, 20.0),
    )
    runs = expand_grid(spec)
    seeds = {r.config.seed for r in runs}
    assert len(seeds) == len(runs)
    replay = expand_grid(spec)
    assert [r.config.seed for r in replay] == [r.config.seed for r in runs]


def test_seed_shared_across_methods_not_datasets():
    s1 = derive_run_seed(7, "scene", PsfSpec("delta"), "ikonos-4", 4, 35.0, 40.0)
    s2 = derive_run_seed(7, "scene", PsfSpec("delta"), "ikonos-4", 4, 35.0, 40.0)
    s3 = derive_run_seed(7, "other", PsfSpec("delta"), "ikonos-4", 4, 35.0, 40.0)
    assert s1 == s2 != s3


# --- canned study ---------------------------------------------------------------


def test_canned_study_is_seventy_runs_per_dataset_method():
    spec = canned_study_spec()
    filled = GridSpec(
        datasets=(DatasetRef("scene", "scene.npy"),),
        psfs=spec.psfs,
        srfs=spec.srfs,
        factors=spec.factors,
        lr_snrs_db=spec.lr_snrs_db,
        msi_snrs_db=spec.msi_snrs_db,
        methods=(UPSAMPLE,),
        base_seed=spec.base_seed,
        pairing=spec.pairing,
    )
    assert len(expand_grid(filled)) == 70


def test_canned_study_schedules():
    spec = canned_study_spec()
    assert spec.factors == (4, 8, 8, 8, 8, 16, 32)
    assert spec.lr_snrs_db == (35.0, 30.0, 30.0, 30.0, 30.0, 25.0, 20.0)
    assert spec.srfs == (
        "ikonos-4", "ikonos-3", "ikonos-4", "worldview2-8", "worldview3-16",
        "ikonos-4", "ikonos-4",
    )
    assert spec.msi_snrs_db == (40.0,)
    assert len(spec.psfs) == 10


# --- run_grid / run_single -------------------------------------------------------


def test_run_grid_all_ok(scene_dataset, tmp_path):
    spec = small_grid([scene_dataset])
    out = tmp_path / "out"
    counts = run_grid(spec, out, workers=1)
    assert counts == {"ok": 2}
    rows = read_log(out / "results.csv")
    assert len(rows) == 2
    assert {r["status"] for r in rows} == {"ok"}
    assert {r["run_index"] for r in rows} == {"0", "1"}


def test_run_grid_isolates_method_failures(scene_dataset, tmp_path):
    failing = MethodSpec("broken", "external", ("false",))
    spec = small_grid([scene_dataset], methods=(UPSAMPLE, failing))
    counts = run_grid(spec, tmp_path / "out", workers=2)
    assert counts == {"ok": 2, "method_error": 2}
    rows = read_log(tmp_path / "out" / "results.csv")
    assert len(rows) == 4  # row count equals expansion count despite failures


def test_run_grid_unreadable_dataset_fails_only_that_dataset(scene_dataset, tmp_path):
    missing = DatasetRef("missing", str(tmp_path / "nope.npy"))
    spec = small_grid([scene_dataset, missing])
    counts = run_grid(spec, tmp_path / "out", workers=1)
    assert counts == {"ok": 2, "dataset_error": 2}
    rows = read_log(tmp_path / "out" / "results.csv")
    assert len(rows) == 4
    bad = [r for r in rows if r["dataset_id"] == "missing"]
    assert all(r["status"] == "dataset_error" for r in bad)


def test_run_grid_replay_is_identical(scene_dataset, tmp_path):
    spec = small_grid([scene_dataset], methods=(REGRESSION,))
    run_grid(spec, tmp_path / "a", workers=1)
    run_grid(spec, tmp_path / "b", workers=3)
    metric_cols = ("rmse", "psnr_db", "ssim", "uiqi", "ergas", "sam_deg")

    def metric_view(path):
        rows = sorted(read_log(path / "results.csv"), key=lambda r: int(r["run_index"]))
        return [[r[c] for c in metric_cols] for r in rows]

    assert metric_view(tmp_path / "a") == metric_view(tmp_path / "b")


def test_run_single_identity_scores_inf(scene_dataset, tmp_path):
    config = DegradationConfig(
        psf=PsfSpec("delta"), srf="ikonos-4", factor=1, lr_snr_db=None,
        msi_snr_db=None, seed=3,
    )
    record = run_single(
        scene_dataset.cube_path, UPSAMPLE, config, "ikonos-4", tmp_path / "out",
        wavelengths_path=scene_dataset.wavelengths_path,
    )
    assert record.status.value == "ok"
    assert record.metrics.rmse == 0.0
    rows = read_log(tmp_path / "out" / "results.csv")
    assert rows[0]["psnr_db"] == "inf"


def test_run_single_missing_dataset_logs_nothing(tmp_path):
    config = DegradationConfig(
        psf=PsfSpec("delta"), srf="ikonos-4", factor=1, lr_snr_db=None,
        msi_snr_db=None, seed=3,
    )
    with pytest.raises(Exception):
        run_single(tmp_path / "missing.npy", UPSAMPLE, config, "ikonos-4", tmp_path / "out")
    assert not (tmp_path / "out" / "results.csv").exists()


def test_canned_study_runs_end_to_end_and_aggregates(tmp_path):
    # the SWIR sensor needs the wavelength grid to be dense enough that every
    # narrow band catches at least one cube band center
    scene, wl = make_lowrank_scene(height=48, width=48, bands=150, seed=77,
                                   wl_range=(400.0, 2400.0))
    cube_path = tmp_path / "scene.npy"
    np.save(cube_path, scene.astype(np.float32))
    wl_path = tmp_path / "wl.txt"
    wl_path.write_text("\n".join(str(v) for v in wl))
    canned = canned_study_spec()
    spec = GridSpec(
        datasets=(DatasetRef("scene", str(cube_path), str(wl_path)),),
        psfs=canned.psfs,
        srfs=canned.srfs,
        factors=canned.factors,
        lr_snrs_db=canned.lr_snrs_db,
        msi_snrs_db=canned.msi_snrs_db,
        methods=(UPSAMPLE,),
        base_seed=canned.base_seed,
        pairing=canned.pairing,
    )
    counts = run_grid(spec, tmp_path / "out", workers=4)
    assert counts == {"ok": 70}
    table = aggregate(tmp_path / "out" / "results.csv", ["psf_family"], ["psnr_db"])
    assert len(table) == 10
    assert all(row.count + row.inf_count == 7 for row in table)


# --- grid config files ------------------------------------------------------------


def test_grid_spec_roundtrip(tmp_path, scene_dataset):
    spec = small_grid([scene_dataset], methods=(UPSAMPLE, MethodSpec("x", "external", ("run", "me"), 60.0)))
    path = tmp_path / "grid.json"
    save_grid_spec(spec, path)
    assert load_grid_spec(path) == spec


def test_shipped_study70_matches_canned_spec():
    from hyperbench.srf import assets_dir

    shipped = load_grid_spec(assets_dir() / "study70.json")
    assert shipped == canned_study_spec()


# --- aggregation -------------------------------------------------------------------


def test_aggregate_means_match_hand_computation(tmp_path, scene_dataset):
    spec = small_grid([scene_dataset], methods=(UPSAMPLE, REGRESSION))
    out = tmp_path / "out"
    run_grid(spec, out, workers=1)
    rows = read_log(out / "results.csv")
    by_method = {}
    for row in rows:
        by_method.setdefault(row["method_id"], []).append(float(row["sam_deg"]))
    table = aggregate(out / "results.csv", ["method_id"], ["sam_deg"])
    assert len(table) == 2
    for agg_row in table:
        values = by_method[agg_row.group[0]]
        assert agg_row.count == len(values)
        assert agg_row.mean == pytest.approx(sum(values) / len(values), rel=1e-12)
        pop_std = (sum((v - agg_row.mean) ** 2 for v in values) / len(values)) ** 0.5
        assert agg_row.std == pytest.approx(pop_std, rel=1e-12)


def test_aggregate_excludes_inf_with_separate_count(tmp_path, scene_dataset):
    config = DegradationConfig(
        psf=PsfSpec("delta"), srf="ikonos-4", factor=1, lr_snr_db=None,
        msi_snr_db=None, seed=3,
    )
    run_single(scene_dataset.cube_path, UPSAMPLE, config, "ikonos-4", tmp_path / "out",
               wavelengths_path=scene_dataset.wavelengths_path)
    table = aggregate(tmp_path / "out" / "results.csv", [], ["psnr_db"])
    assert table[0].count == 0 and table[0].inf_count == 1
    assert table[0].mean is None


def test_aggregate_empty_group_by_is_global(tmp_path, scene_dataset):
    spec = small_grid([scene_dataset])
    run_grid(spec, tmp_path / "out", workers=1)
    table = aggregate(tmp_path / "out" / "results.csv", [], ["rmse", "psnr_db"])
    assert [row.metric for row in table] == ["rmse", "psnr_db"]
    assert table[0].group == ()


def test_aggregate_unknown_column(tmp_path, scene_dataset):
    spec = small_grid([scene_dataset])
    run_grid(spec, tmp_path / "out", workers=1)
    with pytest.raises(ValidationError, match="unknown group-by column"):
        aggregate(tmp_path / "out" / "results.csv", ["nope"], ["rmse"])
    with pytest.raises(ValidationError, match="unknown metric column"):
        aggregate(tmp_path / "out" / "results.csv", [], ["nope"])

import numpy as np
import pytest

from hyperbench import (
    FormatError,
    SrfMatrix,
    ValidationError,
    apply_srf,
    build_srf_matrix,
    load_sensor,
    load_srf_curves,
    validate_cube,
)
from hyperbench.srf import SHIPPED_SENSORS, SrfCurve, SrfCurveSet
from conftest import random_cube
from oracles import srf_project_oracle


def write_csv(tmp_path, text, name="curves.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_three_band_file(tmp_path):
    path = write_csv(
        tmp_path,
        "wavelength_nm,b1,b2,b3\n400,1,0,0\n500,0,1,0\n600,0,0,1\n",
    )
    curves = load_srf_curves(path)
    assert curves.sensor == "curves"
    assert len(curves.bands) == 3
    assert list(curves.bands[1].response) == [0.0, 1.0, 0.0]


def test_negative_response_names_line(tmp_path):
    path = write_csv(tmp_path, "wavelength_nm,b1\n400,0.5\n500,-0.1\n")
    with pytest.raises(FormatError, match="line 3"):
        load_srf_curves(path)


def test_non_monotone_wavelengths_rejected(tmp_path):
    path = write_csv(tmp_path, "wavelength_nm,b1\n500,0.5\n400,0.5\n")
    with pytest.raises(FormatError, match="strictly increasing"):
        load_srf_curves(path)


def test_parse_error_names_line(tmp_path):
    path = write_csv(tmp_path, "wavelength_nm,b1\n400,0.5\nnotanumber,0.5\n")
    with pytest.raises(FormatError, match="line 3"):
        load_srf_curves(path)


def test_all_zero_band_rejected(tmp_path):
    path = write_csv(tmp_path, "wavelength_nm,b1,b2\n400,1,0\n500,1,0\n")
    with pytest.raises(FormatError, match="b2"):
        load_srf_curves(path)


@pytest.mark.parametrize("sensor,bands", [
    ("ikonos-3", 3), ("ikonos-4", 4), ("worldview2-8", 8), ("worldview3-16", 16),
])
def test_shipped_assets_load(sensor, bands):
    curves = load_sensor(sensor)
    assert len(curves.bands) == bands
    for curve in curves.bands:
        assert (curve.response >= 0).all()
        assert (np.diff(curve.wavelengths_nm) > 0).all()


def test_ikonos4_covers_visible_and_nir():
    curves = load_sensor("ikonos-4")
    supports = [
        curve.wavelengths_nm[curve.response > 0] for curve in curves.bands
    ]
    assert supports[0].min() < 470  # blue
    assert supports[-1].max() > 800  # NIR


def test_assets_env_override(tmp_path, monkeypatch):
    write_csv(tmp_path, "wavelength_nm,b1\n400,1\n500,1\n", name="ikonos-3.csv")
    monkeypatch.setenv("HYPERBENCH_ASSETS", str(tmp_path))
    curves = load_sensor("ikonos-3")
    assert len(curves.bands) == 1


def uniform_curveset(lo=400.0, hi=700.0):
    wl = np.array([lo, hi])
    return SrfCurveSet("flat", (SrfCurve("b1", wl, np.array([1.0, 1.0])),))


def test_uniform_curve_gives_uniform_weights():
    srf = build_srf_matrix(uniform_curveset(), np.array([450.0, 550.0, 650.0]))
    np.testing.assert_allclose(srf.weights, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-12)


def test_disjoint_support_raises():
    curves = SrfCurveSet(
        "narrow",
        (SrfCurve("b1", np.array([400.0, 500.0]), np.array([1.0, 1.0])),),
    )
    with pytest.raises(ValidationError, match="no spectral overlap"):
        build_srf_matrix(curves, np.array([600.0, 700.0]))


def test_triangular_curve_interpolates_linearly():
    curves = SrfCurveSet(
        "tri",
        (SrfCurve("b1", np.array([500.0, 550.0, 600.0]), np.array([0.0, 1.0, 0.0])),),
    )
    srf = build_srf_matrix(curves, np.array([500.0, 550.0, 600.0]))
    np.testing.assert_allclose(srf.weights, [[0.0, 1.0, 0.0]], atol=1e-12)
    srf_mid = build_srf_matrix(curves, np.array([510.0, 550.0, 590.0]))
    np.testing.assert_allclose(srf_mid.weights, [[0.2 / 1.4, 1.0 / 1.4, 0.2 / 1.4]], atol=1e-12)


def test_row_normalization_is_scale_invariant():
    wl = np.array([450.0, 550.0, 650.0])
    base = build_srf_matrix(uniform_curveset(), wl)
    scaled_set = SrfCurveSet(
        "flat", (SrfCurve("b1", np.array([400.0, 700.0]), np.array([7.5, 7.5])),)
    )
    scaled = build_srf_matrix(scaled_set, wl)
    np.testing.assert_allclose(base.weights, scaled.weights, atol=1e-15)


def test_apply_srf_constant_cube():
    cube = validate_cube(np.full((4, 4, 3), 0.42))
    srf = build_srf_matrix(uniform_curveset(), np.array([450.0, 550.0, 650.0]))
    out = apply_srf(cube, srf)
    np.testing.assert_allclose(out.data, 0.42, atol=1e-12)


def test_apply_srf_mean_example():
    cube = validate_cube(np.array([0.2, 0.4, 0.6]).reshape(1, 1, 3))
    srf = SrfMatrix(np.full((1, 3), 1 / 3), "mean", np.array([1.0, 2.0, 3.0]))
    out = apply_srf(cube, srf)
    assert out.data[0, 0, 0] == pytest.approx(0.4, abs=1e-15)


def test_apply_srf_matches_per_pixel_oracle(rng):
    cube = random_cube(rng, (4, 4, 5))
    weights = rng.uniform(0.0, 1.0, (2, 5))
    weights /= weights.sum(axis=1, keepdims=True)
    srf = SrfMatrix(weights, "rand", np.linspace(400, 800, 5))
    out = apply_srf(cube, srf)
    np.testing.assert_allclose(out.data, srf_project_oracle(cube.data, weights), atol=1e-12)
    assert out.data.min() >= cube.data.min() - 1e-12
    assert out.data.max() <= cube.data.max() + 1e-12


def test_apply_srf_identity_recovery(rng):
    cube = random_cube(rng, (3, 3, 4))
    srf = SrfMatrix(np.eye(4), "identity", np.linspace(400, 700, 4))
    out = apply_srf(cube, srf)
    assert np.array_equal(out.data, cube.data)


def test_apply_srf_band_mismatch(rng):
    cube = random_cube(rng, (3, 3, 4))
    srf = SrfMatrix(np.full((1, 3), 1 / 3), "mean", np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ValidationError, match="bands"):
        apply_srf(cube, srf)


def test_all_shipped_sensors_build_against_wide_grid():
    wl = np.linspace(400.0, 2400.0, 200)
    for sensor in SHIPPED_SENSORS:
        srf = build_srf_matrix(load_sensor(sensor), wl)
        np.testing.assert_allclose(srf.weights.sum(axis=1), 1.0, atol=1e-9)

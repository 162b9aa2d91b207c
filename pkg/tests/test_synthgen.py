import numpy as np
import pytest

from aquaspec.core import ParameterKind, wavelength_index
from aquaspec.harness import RunSpec, fit_pipeline, r_squared, split_indices, SplitConfig
from aquaspec.ingest import (ReferenceLog, build_sample_table, parse_reference_file,
                             parse_spectra_file, write_reference_file, write_spectra_file)
from aquaspec.preprocess import select_bands
from aquaspec.synthgen import (DEFAULT_RANGES, GenConfig, SceneParams, baseline,
                               forward_spectrum, generate_dataset, generate_records,
                               noiseless_reflectance)

QUIET = GenConfig(noise_sd=0.0)
WL = QUIET.grid.wavelengths()


def at(spectrum, nm):
    return spectrum.reflectance[wavelength_index(spectrum.grid, nm)]


def test_zero_scene_is_baseline():
    s = forward_spectrum(SceneParams(), QUIET)
    np.testing.assert_array_equal(s.reflectance, baseline(WL))


def test_cdom_darkens_blue():
    vals = [at(forward_spectrum(SceneParams(chlorophyll_a=20, cdom=c), QUIET), 470)
            for c in np.linspace(0, 13, 14)]
    assert np.all(np.diff(vals) < 0)


def test_chlorophyll_signature():
    spectra = [forward_spectrum(SceneParams(chlorophyll_a=c, turbidity=1), QUIET)
               for c in np.linspace(0, 120, 13)]
    assert np.all(np.diff([at(s, 670) for s in spectra]) < 0)
    assert np.all(np.diff([at(s, 702) for s in spectra]) > 0)


def test_scene_params_validation():
    with pytest.raises(ValueError):
        SceneParams(cdom=-1)
    with pytest.raises(ValueError):
        SceneParams(turbidity=np.nan)
    with pytest.raises(ValueError):
        GenConfig(noise_sd=-0.1)


@pytest.mark.parametrize("field", ["chlorophyll_a", "green_algae", "diatoms", "cdom",
                                   "turbidity"])
def test_continuity_and_monotone_responses(field):
    base = dict(chlorophyll_a=40, green_algae=20, diatoms=20, cdom=8, turbidity=1.5)
    h = 1e-6
    lo = noiseless_reflectance(SceneParams(**base), WL)
    hi = noiseless_reflectance(SceneParams(**{**base, field: base[field] + h}), WL)
    slope = (hi - lo) / h
    assert np.all(np.isfinite(slope)) and np.all(np.abs(slope) < 1)
    if field == "turbidity":
        assert np.all(slope >= 0)
    if field == "cdom":
        assert slope[wavelength_index(QUIET.grid, 470)] <= 0


def test_clipping_inactive_on_default_ranges():
    corners = [dict(zip([k.key for k in ParameterKind], c)) for c in np.array(np.meshgrid(
        *[DEFAULT_RANGES[k] for k in ParameterKind])).reshape(5, -1).T]
    for corner in corners:
        r = noiseless_reflectance(SceneParams(**corner), WL)
        assert r.min() > 0 and r.max() < 1


def test_dataset_deterministic_and_in_range():
    cfg = GenConfig(seed=5)
    a = generate_dataset(1163, cfg)
    b = generate_dataset(1163, cfg)
    for kind in ParameterKind:
        assert a[kind].features.tobytes() == b[kind].features.tobytes()
        assert a[kind].target.tobytes() == b[kind].target.tobytes()
        lo, hi = DEFAULT_RANGES[kind]
        assert a[kind].target.min() >= lo and a[kind].target.max() <= hi
        assert a[kind].parameter is kind and a[kind].unit == kind.unit
    X = a[ParameterKind.CDOM].features
    assert X.min() >= 0 and X.max() <= 1
    assert all(np.shares_memory(a[k].features, X) or np.array_equal(a[k].features, X)
               for k in ParameterKind)
    assert not np.array_equal(generate_dataset(20, GenConfig(seed=6))[ParameterKind.CDOM].target,
                              a[ParameterKind.CDOM].target[:20])


def test_noise_scale():
    p = SceneParams(chlorophyll_a=30, cdom=6, turbidity=1)
    clean = noiseless_reflectance(p, WL)
    devs = np.array([forward_spectrum(p, GenConfig(seed=s)).reflectance - clean
                     for s in range(400)])
    np.testing.assert_allclose(devs.std(axis=0) / baseline(WL), 0.02, rtol=0.2)


def test_noiseless_svr_recovers_chlorophyll():
    table = select_bands(generate_dataset(200, QUIET)[ParameterKind.CHLOROPHYLL_A], 470, 910)
    train, test = split_indices(table.target, SplitConfig(train_fraction=0.6, seed=0))
    pipe = fit_pipeline(table.features[train], table.target[train],
                        RunSpec("svm", "raw"), {"C": 100.0, "gamma_scale": 0.1, "epsilon": 0.01})
    r2 = r_squared(table.target[test], pipe.predict(table.features[test]))
    assert r2 >= 0.99


def test_csv_round_trip_through_ingest(tmp_path):
    params, records = generate_records(25, GenConfig(seed=3))
    write_spectra_file(tmp_path / "spectra.csv", records)
    times = np.array([t for t, _ in records])
    log_ = ReferenceLog(times, np.array([p.turbidity for p in params]), ParameterKind.TURBIDITY)
    write_reference_file(tmp_path / "ref.csv", log_)
    table = build_sample_table(parse_spectra_file(tmp_path / "spectra.csv"),
                               parse_reference_file(tmp_path / "ref.csv",
                                                    ParameterKind.TURBIDITY))
    direct = generate_dataset(25, GenConfig(seed=3))[ParameterKind.TURBIDITY]
    assert np.array_equal(table.features, direct.features)
    assert np.array_equal(table.target, direct.target)
    assert table.feature_grid == direct.feature_grid

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzbeam.channel import AOA_AZ, PATHLOSS, PHASE, TOA, sample_scenario
from thzbeam.dataset import Dataset
from thzbeam.estimator import (REPORT_ROWS, EstimatorArchitecture, EstimatorModel, FactorNormalizer,
                               absolute_errors, error_report, evaluate_estimator, format_input, periodic_mask,
                               train_estimator)
from thzbeam.nn import OptimizerConfig

from conftest import small_scenario

FAST_OPT = OptimizerConfig("sgd_momentum", 1e-2, 0.8, 0.1, 80)
TINY = EstimatorArchitecture((4, 8), num_paths=2)


@pytest.fixture(scope="module")
def ds():
    return Dataset.from_samples(sample_scenario(small_scenario(num_users=60)))


def test_format_input_planes():
    h = np.array([[1 + 1j, -2.0], [0.0, -1j]])
    x = format_input(h)
    assert x.shape == (2, 2, 2)
    np.testing.assert_allclose(x[..., 0], [[math.sqrt(2), 2], [0, 1]])
    np.testing.assert_allclose(x[..., 1], [[math.pi / 4, -math.pi], [0, -math.pi / 2]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_format_input_is_lossless(seed):
    r = np.random.default_rng(seed)
    h = r.standard_normal((5, 3)) + 1j * r.standard_normal((5, 3))
    x = format_input(h)
    np.testing.assert_allclose(x[..., 0] * np.exp(1j * x[..., 1]), h, atol=1e-12)


def test_normalizer_standardizes_plain_columns(rng):
    x = rng.normal(3.0, 2.0, (500, 2))
    norm = FactorNormalizer.fit(x)
    z = norm.apply(x)
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(norm.invert(z), x, atol=1e-12)


def test_normalizer_centres_periodic_columns_on_the_circular_mean():
    x = np.array([[math.pi - 0.1], [-math.pi + 0.1], [math.pi - 0.2], [-math.pi + 0.2]])
    norm = FactorNormalizer.fit(x, np.array([True]))
    assert abs(abs(norm.mean[0]) - math.pi) < 1e-9
    assert norm.scale[0] == pytest.approx(math.sqrt((0.01 + 0.01 + 0.04 + 0.04) / 4))


def test_normalizer_warns_on_constant_column():
    with pytest.warns(UserWarning, match="zero-variance"):
        norm = FactorNormalizer.fit(np.ones((5, 1)))
    assert norm.scale[0] == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_normalizer_round_trip_with_periodic_columns(seed):
    r = np.random.default_rng(seed)
    x = np.column_stack([r.uniform(-math.pi, math.pi, 50), r.normal(0, 5, 50)])
    norm = FactorNormalizer.fit(x, np.array([True, False]))
    np.testing.assert_allclose(norm.invert(norm.apply(x)), x, atol=1e-9)


def test_periodic_mask_marks_phase_and_azimuths():
    m = periodic_mask(2).reshape(2, 7)
    assert m[:, [2, 3, 5]].all() and m.sum() == 6


def test_angle_errors_wrap_around():
    pred = np.zeros((1, 1, 7))
    true = np.zeros((1, 1, 7))
    pred[0, 0, AOA_AZ] = math.radians(-179)
    true[0, 0, AOA_AZ] = math.radians(179)
    assert absolute_errors(pred, true)[0, 0, AOA_AZ] == pytest.approx(2.0)


def test_perfect_prediction_reports_zero(ds):
    rep = error_report(ds.thz_factors, ds.thz_factors)
    assert [r[0] for r in rep.rows] == [n for n, _ in REPORT_ROWS]
    assert all(m == 0 and s == 0 for _, m, s in rep.rows)


def test_report_excludes_padded_paths_and_averages_per_path():
    true = np.zeros((2, 2, 7))
    true[:, 0, PATHLOSS] = 1.0
    true[0, 1, PATHLOSS] = 0.5
    true[:, :, TOA] = [[1.0, 2.0], [3.0, 0.0]]
    pred = true.copy()
    pred[:, :, TOA] += [[1.0, 4.0], [3.0, 100.0]]   # the padded entry must be ignored
    toa = error_report(pred, true).as_dict()["ToA (s)"]
    # path 0 mean error 2, path 1 mean error 4
    assert toa == (pytest.approx(3.0), pytest.approx(1.0))


def test_report_is_invariant_to_sample_order(ds, rng):
    noisy = ds.thz_factors + rng.normal(0, 0.01, ds.thz_factors.shape)
    perm = rng.permutation(len(ds))
    a, b = error_report(noisy, ds.thz_factors), error_report(noisy[perm], ds.thz_factors[perm])
    for (_, m1, s1), (_, m2, s2) in zip(a.rows, b.rows):
        assert m1 == pytest.approx(m2, rel=1e-12) and s1 == pytest.approx(s2, rel=1e-12, abs=1e-300)


def test_report_formats():
    rep = error_report(np.zeros((1, 1, 7)), np.zeros((1, 1, 7)))
    assert rep.to_csv().splitlines()[0] == "factor,mean,std"
    assert "Pathloss" in rep.to_text()


def test_training_is_deterministic(ds):
    a, ta = train_estimator(ds, None, TINY, FAST_OPT, epochs=3, batch_size=16, seed=5)
    b, tb = train_estimator(ds, None, TINY, FAST_OPT, epochs=3, batch_size=16, seed=5)
    assert [e["train_loss"] for e in ta] == [e["train_loss"] for e in tb]
    np.testing.assert_array_equal(a.predict(ds.h_sub6), b.predict(ds.h_sub6))


def test_trace_records_learning_rate_decay(ds):
    small = ds.subset(np.arange(8))
    _, trace = train_estimator(small, None, TINY, OptimizerConfig("sgd_momentum", 1e-3, 0.8, 0.1, 2),
                               epochs=5, batch_size=8)
    assert [e["lr"] for e in trace] == pytest.approx([1e-3, 1e-3, 1e-4, 1e-4, 1e-5])


def test_predictions_respect_factor_ranges(ds):
    model, _ = train_estimator(ds, None, TINY, FAST_OPT, epochs=2, batch_size=16)
    pred = model.predict(ds.h_sub6)
    assert pred.shape == ds.thz_factors.shape
    assert (pred[..., PATHLOSS] >= 0).all() and (pred[..., TOA] >= 0).all()
    assert (np.abs(pred[..., PHASE]) <= math.pi).all()


def test_model_save_load_round_trip(ds, tmp_path):
    model, _ = train_estimator(ds, None, TINY, FAST_OPT, epochs=1, batch_size=16)
    model.save(tmp_path / "e.thznn")
    back = EstimatorModel.load(tmp_path / "e.thznn")
    np.testing.assert_array_equal(model.predict(ds.h_sub6), back.predict(ds.h_sub6))
    assert back.arch == model.arch


def test_evaluate_returns_model_and_blind_reports(ds):
    model, _ = train_estimator(ds, None, TINY, FAST_OPT, epochs=1, batch_size=16)
    rep, blind, pred = evaluate_estimator(model, ds)
    assert len(rep.rows) == len(blind.rows) == 7 and pred.shape == ds.thz_factors.shape
    assert all(m > 0 for _, m, _ in blind.rows)

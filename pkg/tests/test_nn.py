import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzbeam import kernels
from thzbeam.errors import DomainError, ShapeError
from thzbeam.nn import (Conv2D, Dense, Dropout, GlobalAvgPool, InstanceNorm, MaxPool2D, OptimizerConfig, ReLU,
                        Sequential, ZeroPad2D, cross_entropy_loss, gradient_check, load_weights, mse_loss,
                        optimizer_step, save_weights, softmax)


def _projection_loss(shape, seed=0):
    r = np.random.default_rng(seed).standard_normal(shape)
    return lambda out: (float(np.sum(out * r)), r.copy())


# -- forward semantics ---------------------------------------------------------

def test_one_by_one_identity_conv_returns_input(rng):
    conv = Conv2D(3, 3, (1, 1), rng)
    conv.params[0][...] = np.eye(3).reshape(1, 1, 3, 3)
    conv.params[1][...] = 0
    x = rng.standard_normal((2, 4, 5, 3))
    np.testing.assert_allclose(conv.forward(x), x, atol=1e-15)


def test_all_ones_two_by_two_conv_sums_windows():
    conv = Conv2D(1, 1, (2, 2))
    conv.params[0][...] = 1
    conv.params[1][...] = 0
    out = conv.forward(np.ones((1, 3, 3, 1)))
    np.testing.assert_allclose(out, np.full((1, 2, 2, 1), 4.0))


def test_conv_matches_direct_loop(rng):
    conv = Conv2D(2, 3, (2, 3), rng)
    x = rng.standard_normal((2, 4, 5, 2))
    w, b = conv.params
    expected = np.zeros((2, 3, 3, 3))
    for s in range(2):
        for r in range(3):
            for q in range(3):
                for o in range(3):
                    expected[s, r, q, o] = np.sum(x[s, r:r + 2, q:q + 3, :] * w[:, :, :, o]) + b[o]
    np.testing.assert_allclose(conv.forward(x), expected, atol=1e-12)


def test_maxpool_picks_window_maximum():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
    assert MaxPool2D((2, 2)).forward(x).item() == 4.0


def test_instance_norm_constant_input_gives_shift():
    norm = InstanceNorm(2)
    norm.params[1][...] = [0.7, -0.3]
    out = norm.forward(np.full((3, 4, 4, 2), 5.0))
    np.testing.assert_allclose(out[..., 0], 0.7)
    np.testing.assert_allclose(out[..., 1], -0.3)


def test_instance_norm_on_standardized_input_is_near_identity(rng):
    x = rng.standard_normal((2, 8, 8, 3))
    x = (x - x.mean(axis=(1, 2), keepdims=True)) / x.std(axis=(1, 2), keepdims=True)
    np.testing.assert_allclose(InstanceNorm(3).forward(x), x, atol=1e-4)


def test_relu_and_global_pool():
    assert ReLU().forward(np.array([-1.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]
    x = np.arange(8.0).reshape(1, 2, 2, 2)
    np.testing.assert_allclose(GlobalAvgPool().forward(x), [[3.0, 4.0]])


def test_zero_pad_appends_trailing_rows_and_columns():
    out = ZeroPad2D(1, 2).forward(np.ones((1, 2, 2, 1)))
    assert out.shape == (1, 3, 4, 1)
    assert out.sum() == 4 and out[0, :2, :2, 0].all()


def test_dropout_is_identity_at_inference_and_unbiased_in_training():
    x = np.ones((100_000,))
    d = Dropout(0.2, np.random.default_rng(5))
    np.testing.assert_array_equal(d.forward(x, training=False), x)
    out = d.forward(x, training=True)
    assert out.mean() == pytest.approx(1.0, rel=0.01)
    assert set(np.unique(out)) <= {0.0, 1.25}


def test_dense_layer_initializations_have_expected_bounds(rng):
    he = Dense(50, 40, rng)
    assert np.abs(he.params[0]).max() <= math.sqrt(6 / 50)
    gl = Dense(50, 40, rng, init="glorot")
    assert np.abs(gl.params[0]).max() <= math.sqrt(6 / 90)
    assert not he.params[1].any()


# -- losses ----------------------------------------------------------------------

def test_softmax_of_equal_logits_is_uniform():
    np.testing.assert_allclose(softmax(np.zeros((2, 5))), 0.2)


@settings(max_examples=50)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=10), st.floats(-100, 100))
def test_softmax_sums_to_one_and_ignores_shifts(logits, shift):
    z = np.array([logits])
    p = softmax(z)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(softmax(z + shift), p, atol=1e-12)


def test_mse_of_identical_arrays_is_zero(rng):
    x = rng.standard_normal((3, 4))
    loss, grad = mse_loss(x, x.copy())
    assert loss == 0.0 and not grad.any()
    with pytest.raises(ShapeError):
        mse_loss(x, x[:2])


def test_cross_entropy_vanishes_for_confident_correct_logits():
    logits = np.array([[50.0, 0.0, 0.0]])
    assert cross_entropy_loss(logits, [0])[0] < 1e-20


def test_cross_entropy_matches_direct_formula(rng):
    logits = rng.standard_normal((6, 4))
    labels = rng.integers(0, 4, 6)
    expected = np.mean([-math.log(math.exp(l[y]) / np.exp(l).sum()) for l, y in zip(logits, labels)])
    assert cross_entropy_loss(logits, labels)[0] == pytest.approx(expected, rel=1e-12)
    with pytest.raises(DomainError):
        cross_entropy_loss(logits, np.full(6, 4))


# -- gradient checks ---------------------------------------------------------------

def test_dense_gradient_matches_finite_differences_tightly(rng):
    net = Sequential([Dense(5, 3, rng)])
    x = rng.standard_normal((4, 5))
    assert gradient_check(net, x, _projection_loss((4, 3))) < 1e-9


@pytest.mark.parametrize("backend", kernels.available_backends())
@pytest.mark.parametrize("make, shape", [
    (lambda r: Conv2D(2, 3, (2, 2), r), (2, 4, 5, 2)),
    (lambda r: MaxPool2D((2, 2)), (2, 4, 6, 2)),
    (lambda r: MaxPool2D((1, 2)), (2, 3, 4, 2)),
    (lambda r: InstanceNorm(3), (2, 4, 3, 3)),
    (lambda r: ReLU(), (3, 7)),
    (lambda r: GlobalAvgPool(), (2, 3, 4, 2)),
    (lambda r: ZeroPad2D(1, 1), (2, 3, 3, 2)),
    (lambda r: Dropout(0.5, r), (3, 5)),
    (lambda r: Dense(6, 4, r, init="glorot"), (3, 6)),
])
def test_layer_gradients_match_finite_differences(make, shape, backend, rng):
    previous = kernels.use_backend(backend)
    try:
        layer = make(rng)
        if isinstance(layer, InstanceNorm):
            layer.params[0][...] = rng.uniform(0.5, 1.5, 3)
            layer.params[1][...] = rng.standard_normal(3)
        x = rng.standard_normal(shape)
        out_shape = layer.forward(x).shape
        assert gradient_check(Sequential([layer]), x, _projection_loss(out_shape)) < 1e-5
    finally:
        kernels.use_backend(previous)


def test_small_estimator_network_passes_gradient_check(rng):
    from thzbeam.estimator import EstimatorArchitecture, build_estimator_network
    net = build_estimator_network((8, 4, 2), EstimatorArchitecture((3, 4), num_paths=2), rng)
    x = rng.standard_normal((2, 8, 4, 2))
    target = rng.standard_normal((2, 14))
    assert gradient_check(net, x, lambda out: mse_loss(out, target)) < 1e-5


def test_small_classifier_network_passes_gradient_check(rng):
    from thzbeam.predictor import PredictorArchitecture, build_predictor_network
    net = build_predictor_network(6, 5, PredictorArchitecture((8, 8)), rng)
    x = rng.standard_normal((4, 6))
    labels = np.array([0, 3, 4, 1])
    assert gradient_check(net, x, lambda out: cross_entropy_loss(out, labels)) < 1e-5


# -- optimizers -------------------------------------------------------------------

def test_zero_gradient_leaves_parameters_unchanged():
    for kind in ("sgd_momentum", "adam"):
        p = [np.array([1.0, -2.0])]
        optimizer_step(p, [np.zeros(2)], OptimizerConfig(kind, 0.1), 0)
        np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_sgd_momentum_two_steps_by_hand():
    cfg = OptimizerConfig("sgd_momentum", 0.1, 0.8)
    p = [np.array([1.0])]
    state = optimizer_step(p, [np.array([2.0])], cfg, 0)
    assert p[0][0] == pytest.approx(0.8)          # v = -0.2
    optimizer_step(p, [np.array([1.0])], cfg, 0, state)
    assert p[0][0] == pytest.approx(0.8 - 0.26)   # v = 0.8 * -0.2 - 0.1


def test_adam_first_step_moves_by_learning_rate():
    cfg = OptimizerConfig("adam", 0.01)
    p = [np.array([1.0, 1.0])]
    optimizer_step(p, [np.array([3.0, -0.5])], cfg, 0)
    # bias-corrected m/sqrt(v) = sign(g) on the first step
    np.testing.assert_allclose(p[0], [1.0 - 0.01, 1.0 + 0.01], rtol=1e-6)


def test_step_decay_schedule():
    cfg = OptimizerConfig("sgd_momentum", 1e-3, 0.8, 0.1, 80)
    assert cfg.lr_at(0) == 1e-3 and cfg.lr_at(79) == 1e-3
    assert cfg.lr_at(80) == pytest.approx(1e-4, rel=1e-12)
    assert cfg.lr_at(160) == pytest.approx(1e-5, rel=1e-12)


def test_optimizer_config_reports_problems():
    assert len(OptimizerConfig("rmsprop", -1.0, 1.5, 0.0, 0).problems()) == 5


# -- serialization ---------------------------------------------------------------

def test_weight_file_round_trip_is_exact(tmp_path, rng):
    from thzbeam.estimator import EstimatorArchitecture, build_estimator_network
    net = build_estimator_network((8, 4, 2), EstimatorArchitecture((3, 5), num_paths=2), rng)
    path = tmp_path / "w.thznn"
    save_weights(path, net, {"note": "x"})
    loaded, meta = load_weights(path)
    assert meta == {"note": "x"}
    x = rng.standard_normal((3, 8, 4, 2))
    np.testing.assert_array_equal(net.forward(x), loaded.forward(x))
    assert [type(l) for l in net.layers] == [type(l) for l in loaded.layers]


def test_weight_file_rejects_garbage(tmp_path):
    from thzbeam.errors import ThzBeamError
    path = tmp_path / "bad.thznn"
    path.write_bytes(b"not a weight file")
    with pytest.raises(ThzBeamError):
        load_weights(path)


# -- backends ---------------------------------------------------------------------

@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled kernels not built")
@pytest.mark.parametrize("shape, kernel", [((3, 7, 5, 2), (2, 2)), ((2, 6, 6, 4), (3, 2)), ((1, 4, 1, 3), (2, 1))])
def test_compiled_and_python_kernels_agree(shape, kernel, rng):
    from thzbeam import _kernels_py as py
    x = rng.standard_normal(shape)
    w = rng.standard_normal(kernel + (shape[3], 5))
    b = rng.standard_normal(5)
    g = rng.standard_normal((shape[0], shape[1] - kernel[0] + 1, shape[2] - kernel[1] + 1, 5))
    previous = kernels.use_backend("compiled")
    try:
        out_c = kernels.conv2d_forward(x, w, b)
        back_c = kernels.conv2d_backward(x, w, g)
        pool_c = kernels.maxpool2d_forward(x[:, : shape[1] // 2 * 2, : shape[2] // 2 * 2], 2, 2) \
            if shape[2] >= 2 else None
    finally:
        kernels.use_backend(previous)
    np.testing.assert_allclose(out_c, py.conv2d_forward(x, w, b), atol=1e-12)
    for a, e in zip(back_c, py.conv2d_backward(x, w, g)):
        np.testing.assert_allclose(a, e, atol=1e-12)
    if pool_c is not None:
        xp = np.ascontiguousarray(x[:, : shape[1] // 2 * 2, : shape[2] // 2 * 2])
        out_p, idx_p = py.maxpool2d_forward(xp, 2, 2)
        np.testing.assert_array_equal(pool_c[0], out_p)
        np.testing.assert_array_equal(pool_c[1], idx_p)


def test_unknown_backend_is_rejected():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_sampled_gradient_check_agrees_with_full_check(rng):
    from thzbeam.predictor import PredictorArchitecture, build_predictor_network
    net = build_predictor_network(6, 5, PredictorArchitecture((16, 16)), rng)
    x = rng.standard_normal((3, 6))
    loss = lambda out: cross_entropy_loss(out, np.array([0, 1, 4]))  # noqa: E731
    full = gradient_check(net, x, loss)
    sampled = gradient_check(net, x, loss, max_entries=20)
    assert sampled <= full + 1e-12 and sampled < 1e-5

import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdsnet.core import (
    NumericError,
    ShapeError,
    Tensor,
    apply_op,
    bce_loss,
    concat,
    conv3d,
    fully_connected,
    grad_check,
    matmul,
    maxpool3d,
    no_grad,
    relu,
    sigmoid,
    softmax,
    tanh,
)
from sdsnet.core.ops import conv3d_output_shape, pool_output_size

from sdsnet.gradsuite import OP_CASES, check_op

from reference import central_difference, conv3d_loops, fc_loops, maxpool3d_loops


def param(rng, *shape, scale=1.0):
    return Tensor(rng.uniform(-scale, scale, shape), requires_grad=True)


# -- conv3d ------------------------------------------------------------------
def test_conv3d_full_first_layer_shape():
    x = Tensor(np.zeros((1, 100, 110, 110), dtype=np.float32))
    k = Tensor(np.zeros((16, 1, 3, 3, 3), dtype=np.float32))
    b = Tensor(np.zeros(16, dtype=np.float32))
    assert conv3d(x, k, b, temporal_pad=1).shape == (16, 100, 108, 108)


def test_conv3d_zero_input_gives_bias():
    rng = np.random.default_rng(1)
    x = Tensor(np.zeros((2, 5, 6, 6)))
    k = Tensor(rng.normal(size=(3, 2, 3, 3, 3)))
    b = Tensor(np.array([0.5, -1.0, 2.0]))
    out = conv3d(x, k, b, temporal_pad=1).data
    for c in range(3):
        assert np.all(out[c] == b.data[c])


def test_conv3d_matches_loop_reference():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 4, 5, 5))
    k = rng.normal(size=(3, 2, 3, 3, 3))
    b = rng.normal(size=3)
    got = conv3d(Tensor(x), Tensor(k), Tensor(b), temporal_pad=1).data
    np.testing.assert_allclose(got, conv3d_loops(x, k, b, 1), rtol=0, atol=1e-10)


def test_conv3d_batched_equals_per_sample():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 2, 4, 6, 5))
    k = Tensor(rng.normal(size=(4, 2, 3, 3, 2)))
    b = Tensor(rng.normal(size=4))
    batched = conv3d(Tensor(x), k, b, temporal_pad=1).data
    for i in range(3):
        np.testing.assert_allclose(batched[i], conv3d(Tensor(x[i]), k, b, temporal_pad=1).data, atol=1e-12)


def test_conv3d_errors():
    x = Tensor(np.zeros((2, 4, 5, 5)))
    with pytest.raises(ShapeError):
        conv3d(x, Tensor(np.zeros((3, 1, 3, 3, 3))), None)
    with pytest.raises(ShapeError):
        conv3d(x, Tensor(np.zeros((3, 2, 3, 6, 3))), None)
    bad = np.zeros((2, 4, 5, 5))
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        conv3d(Tensor(bad), Tensor(np.zeros((3, 2, 3, 3, 3))), None)


@settings(max_examples=40, deadline=None)
@given(
    c=st.integers(1, 3),
    t=st.integers(1, 7),
    h=st.integers(3, 8),
    w=st.integers(3, 8),
    kt=st.integers(1, 3),
    kh=st.integers(1, 3),
    kw=st.integers(1, 3),
    pad=st.integers(0, 1),
)
def test_conv3d_shape_formula(c, t, h, w, kt, kh, kw, pad):
    if kt > t + 2 * pad:
        return
    out = conv3d(Tensor(np.ones((c, t, h, w))), Tensor(np.ones((2, c, kt, kh, kw))), None, temporal_pad=pad)
    assert out.shape == (2, t + 2 * pad - kt + 1, h - kh + 1, w - kw + 1)
    assert out.shape[1:] == conv3d_output_shape((t, h, w), (kt, kh, kw), pad)


def test_conv3d_strided_matches_subsampled_unit_stride():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(2, 3, 9, 9)))
    k = Tensor(rng.normal(size=(2, 2, 1, 3, 3)))
    full = conv3d(x, k, None).data
    strided = conv3d(x, k, None, stride=(1, 2, 2)).data
    np.testing.assert_allclose(strided, full[:, :, ::2, ::2], atol=1e-12)


# -- maxpool3d ---------------------------------------------------------------
@pytest.mark.parametrize(
    "shape, rounding, expected",
    [
        ((16, 100, 108, 108), ("floor",) * 3, (16, 50, 54, 54)),
        ((64, 25, 26, 26), ("ceil", "floor", "floor"), (64, 13, 13, 13)),
        ((128, 13, 10, 10), ("floor",) * 3, (128, 6, 5, 5)),
    ],
)
def test_maxpool_full_preset_shapes(shape, rounding, expected):
    assert maxpool3d(Tensor(np.zeros(shape, dtype=np.float32)), rounding).shape == expected


def test_maxpool_matches_loop_reference_with_grad_routing():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 5, 4, 7))
    rounding = ("ceil", "floor", "ceil")
    ref, arg = maxpool3d_loops(x, rounding)
    xt = Tensor(x, requires_grad=True)
    out = maxpool3d(xt, rounding)
    np.testing.assert_allclose(out.data, ref, atol=1e-12)
    g = rng.normal(size=ref.shape)
    out.backward(g)
    expected = np.zeros_like(x)
    for idx in np.ndindex(ref.shape):
        ta, hi, wj = arg[idx]
        if ta < x.shape[1] and hi < x.shape[2] and wj < x.shape[3]:
            expected[idx[0], ta, hi, wj] += g[idx]
    np.testing.assert_allclose(xt.grad, expected, atol=1e-12)


def test_maxpool_constant_input_routes_to_first_cell():
    x = Tensor(np.full((1, 4, 4, 4), 3.0), requires_grad=True)
    out = maxpool3d(x)
    assert np.all(out.data == 3.0)
    out.backward(np.ones(out.shape))
    # one cell per window, the (0,0,0) corner of each window
    assert x.grad.sum() == out.size
    assert np.all(x.grad[:, ::2, ::2, ::2] == 1.0)


def test_maxpool_empty_axis_is_error():
    with pytest.raises(ShapeError):
        maxpool3d(Tensor(np.zeros((1, 1, 4, 4))), "floor")


@settings(max_examples=50, deadline=None)
@given(
    t=st.integers(1, 9),
    h=st.integers(1, 9),
    w=st.integers(1, 9),
    modes=st.tuples(*[st.sampled_from(["floor", "ceil"])] * 3),
)
def test_maxpool_shape_formula(t, h, w, modes):
    sizes = [pool_output_size(n, m) for n, m in zip((t, h, w), modes)]
    if 0 in sizes:
        with pytest.raises(ShapeError):
            maxpool3d(Tensor(np.zeros((1, t, h, w))), modes)
        return
    expect = [n // 2 if m == "floor" else math.ceil(n / 2) for n, m in zip((t, h, w), modes)]
    assert maxpool3d(Tensor(np.zeros((1, t, h, w))), modes).shape == tuple([1] + expect)


# -- fully connected, activations, concat -------------------------------------
def test_fc_identity():
    x = Tensor(np.arange(5.0))
    out = fully_connected(x, Tensor(np.eye(5)), Tensor(np.zeros(5)))
    np.testing.assert_array_equal(out.data, x.data)


def test_fusion_fc_dims_and_loop_reference():
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(size=2660).astype(np.float32))
    w = Tensor(np.zeros((1024, 2660), dtype=np.float32))
    assert fully_connected(x, w, Tensor(np.zeros(1024, dtype=np.float32))).shape == (1024,)
    xs, ws, bs = rng.normal(size=4), rng.normal(size=(3, 4)), rng.normal(size=3)
    np.testing.assert_allclose(fully_connected(Tensor(xs), Tensor(ws), Tensor(bs)).data, fc_loops(xs, ws, bs), atol=1e-12)


def test_activation_values():
    assert sigmoid(Tensor(0.0)).item() == 0.5
    np.testing.assert_array_equal(relu(Tensor([-3.0, 3.0])).data, [0.0, 3.0])
    np.testing.assert_allclose(softmax(Tensor(np.ones(4))).data, [0.25] * 4)
    assert tanh(Tensor(0.0)).item() == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_sums_to_one_sigmoid_open_interval(vals):
    s = softmax(Tensor(np.array(vals))).data
    assert abs(s.sum() - 1.0) < 1e-12
    p = sigmoid(Tensor(np.clip(np.array(vals), -30, 30))).data
    assert np.all((p > 0) & (p < 1))


def test_concat_dims_and_split_identity():
    rng = np.random.default_rng(7)
    parts = [Tensor(rng.normal(size=n), requires_grad=True) for n in (128, 4, 1)]
    q = concat(parts)
    assert q.shape == (133,)
    assert concat([q] * 20).shape == (2660,)
    np.testing.assert_array_equal(concat(parts[:1]).data, parts[0].data)
    g = rng.normal(size=133)
    q.backward(g)
    np.testing.assert_array_equal(np.concatenate([p.grad for p in parts]), g)
    np.testing.assert_array_equal(np.concatenate([p.data for p in parts]), q.data)
    with pytest.raises(ShapeError):
        concat([])


# -- loss --------------------------------------------------------------------
def test_bce_values():
    assert bce_loss(Tensor(1 - 1e-7), 1).item() == pytest.approx(0.0, abs=1e-6)
    assert bce_loss(Tensor(0.5), 1).item() == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss(Tensor(0.9), 0).item() == pytest.approx(-math.log(0.1), abs=1e-12)
    assert bce_loss(Tensor(0.0), 0).item() >= 0
    with pytest.raises(ValueError):
        bce_loss(Tensor(0.3), 2)


# -- backward ----------------------------------------------------------------
def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == 6.0


def test_backward_accumulates_and_detached_has_no_grad():
    x = Tensor(2.0, requires_grad=True)
    d = Tensor(5.0)
    (x * d).backward()
    (x * d).backward()
    assert x.grad == 10.0
    assert d.grad is None
    y = x.detach()
    (y * 2.0).backward()
    assert y.grad is None


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def _fd_check(fn, *arrays, tol=1e-4):
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    fn(*tensors).backward()
    for t, a in zip(tensors, arrays):
        num = central_difference(lambda: fn(*[Tensor(b) for b in arrays]).item(), a)
        err = np.abs(t.grad - num) / np.maximum(np.maximum(np.abs(t.grad), np.abs(num)), 1e-8)
        assert err.max() < tol, err.max()


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_central_differences(name):
    fn, shapes = OP_CASES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    _fd_check(fn, *[rng.uniform(-1, 1, s) for s in shapes])


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_suite_case_passes_grad_check(name):
    result = check_op(name)
    assert result.passed and result.max_rel_error < 1e-4, result.lines


def test_gradients_bit_identical_across_runs():
    def run():
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(2, 1, 4, 6, 6)))
        k = param(rng, 3, 1, 3, 3, 3)
        w = param(rng, 2, 3 * 2 * 2 * 2)
        h = maxpool3d(relu(conv3d(x, k, None, temporal_pad=1)))
        out = fully_connected(h.reshape(2, -1), w, None)
        (out * out).sum().backward()
        return k.grad.copy(), w.grad.copy()

    a, b = run(), run()
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


# -- grad_check --------------------------------------------------------------
def test_grad_check_conv_relu_fc_chain():
    rng = np.random.default_rng(12)
    x = Tensor(rng.uniform(-1, 1, (1, 4, 6, 6)))
    params = {
        "k": param(rng, 2, 1, 3, 3, 3),
        "kb": param(rng, 2),
        "w": param(rng, 3, 2 * 4 * 4 * 4),
        "b": param(rng, 3),
    }

    def loss():
        h = relu(conv3d(x, params["k"], params["kb"], temporal_pad=1))
        return (fully_connected(h.reshape(-1), params["w"], params["b"]) ** 2).sum()

    report = grad_check(loss, params)
    assert report.passed, report.lines()


def test_grad_check_linear_op_is_near_exact():
    rng = np.random.default_rng(13)
    w = param(rng, 4)
    x = Tensor(rng.normal(size=4))
    report = grad_check(lambda: (w * x).sum(), {"w": w})
    assert report.max_rel_error < 1e-8


def test_grad_check_flags_corrupted_backward():
    w = Tensor(np.array([0.3, -0.7, 1.1]), requires_grad=True)

    def broken_square(t):
        return apply_op(t.data**2, (t,), lambda g: (g * 3.0 * t.data,), "broken_square")

    report = grad_check(lambda: broken_square(w).sum(), {"w": w})
    assert not report.passed
    assert report.failures[0].name == "w"

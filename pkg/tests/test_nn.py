from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acoustic_kd.nn import Adam, BatchNorm, Conv1d, Conv2d, Dense, InputNorm, Module, as_tensor, backward, parameter
from acoustic_kd.nn import functional as F
from gradsuite import GRAD_CASES, LAYER_CASES, layer_gradcheck, op_gradcheck
from oracles import gradcheck, naive_conv1d, naive_conv2d, naive_maxpool1d

TOL = 1e-4


def _rng(seed=0):
    return np.random.default_rng(seed)


# ------------------------------------------------------------ forward oracles


@pytest.mark.parametrize("k,stride,padding", [(1, 1, 0), (3, 1, 1), (5, 2, 2), (4, 3, 0)])
def test_conv1d_matches_loops(k, stride, padding):
    r = _rng(k)
    x, w, b = r.standard_normal((2, 13, 3)), r.standard_normal((k, 3, 4)), r.standard_normal(4)
    got = F.conv1d(as_tensor(x), as_tensor(w), as_tensor(b), stride, padding).data
    np.testing.assert_allclose(got, naive_conv1d(x, w, b, stride, padding), atol=1e-12)


def test_conv1d_per_tap_path_matches(monkeypatch):
    r = _rng(1)
    x, w = r.standard_normal((2, 40, 3)), r.standard_normal((7, 3, 2))
    ref = naive_conv1d(x, w, None, 2, 3)
    monkeypatch.setattr(F, "_IM2COL_LIMIT", 0)
    np.testing.assert_allclose(F.conv1d(as_tensor(x), as_tensor(w), None, 2, 3).data, ref, atol=1e-12)


@pytest.mark.parametrize("k,stride,padding", [(1, 1, 0), (3, 1, 1), (5, 1, 2), (3, 2, 1)])
def test_conv2d_matches_loops(k, stride, padding):
    r = _rng(k + stride)
    x, w, b = r.standard_normal((2, 7, 9, 3)), r.standard_normal((k, k, 3, 2)), r.standard_normal(2)
    got = F.conv2d(as_tensor(x), as_tensor(w), as_tensor(b), stride, padding).data
    np.testing.assert_allclose(got, naive_conv2d(x, w, b, stride, padding), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 9), st.integers(1, 5), st.integers(0, 4))
def test_conv1d_output_length(length, k, stride, padding):
    lp = length + 2 * padding
    x = as_tensor(np.zeros((1, length, 1)))
    w = as_tensor(np.zeros((k, 1, 1)))
    if k > lp:
        with pytest.raises(ValueError):
            F.conv1d(x, w, None, stride, padding)
    else:
        assert F.conv1d(x, w, None, stride, padding).shape == (1, (lp - k) // stride + 1, 1)


@pytest.mark.parametrize("window,stride,padding", [(2, 2, 0), (3, 2, 1), (5, 5, 0), (2, 1, "same"), (4, 4, "same")])
def test_maxpool1d_matches_loops(window, stride, padding):
    x = _rng(window).standard_normal((2, 17, 3))
    got = F.maxpool1d(as_tensor(x), window, stride, padding).data
    lo, hi = F._pool_pads(17, window, stride, padding)
    np.testing.assert_array_equal(got, naive_maxpool1d(x, window, stride, lo, hi))


def test_maxpool_same_length():
    for n in range(1, 20):
        y = F.maxpool1d(as_tensor(np.zeros((1, n, 1))), 2, 2, "same")
        assert y.shape[1] == -(-n // 2)
    y = F.maxpool2d(as_tensor(np.zeros((1, 36, 48, 1))), 2, 1, "same")
    assert y.shape == (1, 36, 48, 1)


def test_maxpool_tie_gradient_to_first():
    x = parameter(np.ones((1, 4, 1)))
    g = backward(F.maxpool1d(x, 2).sum(), {"x": x})["x"]
    np.testing.assert_array_equal(g.ravel(), [1, 0, 1, 0])
    x2 = parameter(np.ones((1, 2, 2, 1)))
    g2 = backward(F.maxpool2d(x2, 2).sum(), {"x": x2})["x"]
    np.testing.assert_array_equal(g2.ravel(), [1, 0, 0, 0])


def test_maxpool2d_values():
    x = np.arange(16.0).reshape(1, 4, 4, 1)
    np.testing.assert_array_equal(F.maxpool2d(as_tensor(x), 2).data.ravel(), [5, 7, 13, 15])


def test_batchnorm_train_statistics():
    x = _rng(0).standard_normal((6, 5, 3)) * 3 + 2
    rm, rv = np.zeros(3), np.ones(3)
    y = F.batchnorm(as_tensor(x), as_tensor(np.ones(3)), as_tensor(np.zeros(3)), rm, rv, True).data
    np.testing.assert_allclose(y.mean(axis=(0, 1)), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(0, 1)), x.var(axis=(0, 1)) / (x.var(axis=(0, 1)) + 1e-5), rtol=1e-9)
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 1)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 1)))


def test_batchnorm_eval_uses_running():
    x = _rng(0).standard_normal((1, 4, 2))
    rm, rv = np.array([1.0, -1.0]), np.array([4.0, 0.25])
    y = F.batchnorm(as_tensor(x), as_tensor(np.full(2, 2.0)), as_tensor(np.full(2, 0.5)), rm, rv, False).data
    np.testing.assert_allclose(y, 2.0 * (x - rm) / np.sqrt(rv + 1e-5) + 0.5)


def test_batchnorm_train_needs_two():
    with pytest.raises(ValueError):
        F.batchnorm(as_tensor(np.zeros((1, 3))), as_tensor(np.ones(3)), as_tensor(np.zeros(3)),
                     np.zeros(3), np.ones(3), True)


def test_softmax_rows_and_temperature():
    z = _rng(0).standard_normal((5, 7)) * 4
    for t in (0.5, 1, 2, 5):
        p = F.softmax_t(as_tensor(z), t).data
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.array_equal(p.argmax(axis=1), z.argmax(axis=1))
    np.testing.assert_allclose(F.softmax_t(as_tensor(z), 2.0).data, F.softmax_t(as_tensor(z / 2), 1.0).data)
    with pytest.raises(ValueError):
        F.softmax_t(as_tensor(z), 0.0)


def test_softmax_large_logits_stable():
    p = F.softmax_t(as_tensor(np.array([[1000.0, 0.0, -1000.0]]))).data
    assert np.isfinite(p).all() and p[0, 0] == pytest.approx(1.0)


def test_cross_entropy_value_and_validation():
    p = np.array([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]])
    t = np.array([[1.0, 0, 0], [0, 0.5, 0.5]])
    want = -(np.log(0.7) + 0.5 * np.log(0.1) + 0.5 * np.log(0.8)) / 2
    assert float(F.cross_entropy(t, as_tensor(p)).data) == pytest.approx(want, abs=1e-15)
    with pytest.raises(ValueError):
        F.cross_entropy(np.array([[0.5, 0.6, -0.1]]), as_tensor(p[:1]))
    with pytest.raises(ValueError):
        F.cross_entropy(t[:, :2], as_tensor(p))
    with pytest.raises(ValueError):
        F.cross_entropy(t, as_tensor(p * 2))


def test_cross_entropy_log_floor():
    p = np.array([[1.0, 0.0]])
    loss = F.cross_entropy(np.array([[0.0, 1.0]]), as_tensor(p))
    assert float(loss.data) == pytest.approx(-np.log(1e-12))


# -------------------------------------------------------- gradient checks

@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gradients_finite_difference(name):
    assert op_gradcheck(name) < TOL


@pytest.mark.parametrize("name", sorted(LAYER_CASES))
def test_layer_gradients_finite_difference(name):
    assert layer_gradcheck(name) < TOL


def test_cross_entropy_gradient():
    r = _rng(3)
    t = r.dirichlet(np.ones(5), size=4)
    assert gradcheck(lambda z: F.cross_entropy(t, F.softmax_t(z, 2.0)).reshape(1), [r.standard_normal((4, 5))]) < TOL


def test_conv1d_im2col_and_tap_gradients_agree(monkeypatch):
    r = _rng(5)
    x, w = r.standard_normal((2, 15, 3)), r.standard_normal((4, 3, 2))

    def grads():
        xt, wt = parameter(x), parameter(w)
        return backward(F.conv1d(xt, wt, None, 3, 1).sum(), {"x": xt, "w": wt})

    a = grads()
    monkeypatch.setattr(F, "_IM2COL_LIMIT", 0)
    b = grads()
    for k in a:
        np.testing.assert_allclose(a[k], b[k], atol=1e-12)


def test_backward_shared_node_accumulates():
    x = parameter(np.array([1.0, 2.0, 3.0]))
    y = x * x + x
    g = backward(y.sum(), {"x": x})["x"]
    np.testing.assert_allclose(g, 2 * x.data + 1)


def test_backward_unused_param_is_zero():
    a, b = parameter(np.ones(3)), parameter(np.ones((2, 2)))
    g = backward((a * 2.0).sum(), {"a": a, "b": b})
    assert np.array_equal(g["b"], np.zeros((2, 2)))


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        backward(parameter(np.ones(3)) * 1.0)


def test_backward_gradient_dtype_follows_parameter():
    w = parameter(np.ones((3, 2), np.float32))
    loss = F.cross_entropy(np.array([[1.0, 0.0]]), F.softmax_t(F.linear(as_tensor(np.ones((1, 3), np.float32)), w)))
    assert backward(loss, {"w": w})["w"].dtype == np.float32


# --------------------------------------------------------------- modules


class _Tiny(Module):
    def __init__(self, rng):
        super().__init__()
        self.conv = Conv1d(2, 3, 3, rng, padding=1)
        self.bn = BatchNorm(3)
        self.fc = Dense(3, 2, rng)

    def forward(self, x):
        return self.fc(F.mean(F.relu(self.bn(self.conv(x))), axis=1))


def test_module_registration_and_state_roundtrip():
    m = _Tiny(_rng(0))
    names = list(m.parameters())
    assert names == ["conv.weight", "conv.bias", "bn.gamma", "bn.beta", "fc.weight", "fc.bias"]
    assert m.parameter_count() == 3 * 2 * 3 + 3 + 3 + 3 + 3 * 2 + 2
    assert set(m.state_dict()) == set(names) | {"bn.running_mean", "bn.running_var"}
    x = as_tensor(_rng(1).standard_normal((4, 6, 2)))
    m(x)  # updates running stats
    m.eval()
    ref = m(x).data
    other = _Tiny(_rng(9))
    other.load_state_dict(m.state_dict())
    other.eval()
    np.testing.assert_array_equal(other(x).data, ref)
    with pytest.raises((KeyError, ValueError)):
        other.load_state_dict({"conv.weight": np.zeros(1)})


def test_kaiming_bounds_and_zero_bias():
    c = Conv1d(4, 8, 5, _rng(0))
    bound = np.sqrt(6 / 20)
    assert np.abs(c.weight.data).max() <= bound and np.abs(c.weight.data).max() > 0.8 * bound
    assert not c.bias.data.any()
    d = Conv2d(3, 2, 5, _rng(0), bias=False)
    assert d.bias is None and d.weight.shape == (5, 5, 3, 2)
    bn = BatchNorm(4)
    assert np.array_equal(bn.gamma.data, np.ones(4)) and not bn.beta.data.any()


def test_input_norm_fit():
    x = _rng(0).standard_normal((50, 7, 3)) * np.array([1.0, 5.0, 0.1]) + np.array([3.0, -2.0, 0.0])
    n = InputNorm(3)
    np.testing.assert_array_equal(n(as_tensor(x)).data, x)
    n.fit(x)
    y = n(as_tensor(x)).data
    np.testing.assert_allclose(y.mean(axis=(0, 1)), 0, atol=1e-12)
    np.testing.assert_allclose(y.std(axis=(0, 1)), 1, atol=1e-12)
    assert "shift" in n.state_dict() and not n.parameters()


def test_astype_float32():
    m = _Tiny(_rng(0)).astype(np.float32)
    assert all(p.dtype == np.float32 for p in m.parameters().values())


# ----------------------------------------------------------------- adam


def test_adam_first_step_is_lr_sign():
    p = parameter(np.array([1.0, -2.0, 3.0]))
    opt = Adam({"p": p}, lr=0.1)
    opt.step({"p": np.array([0.5, -3.0, 0.0])})
    np.testing.assert_allclose(p.data, [0.9, -1.9, 3.0], atol=1e-7)
    assert opt.state.step == 1


def test_adam_matches_reference_recurrence():
    r = _rng(0)
    p = parameter(r.standard_normal(4))
    ref = p.data.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    opt = Adam({"p": p}, lr=0.01)
    for t in range(1, 6):
        g = r.standard_normal(4)
        opt.step({"p": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-12)


def test_adam_minimises_quadratic():
    p = parameter(np.array([5.0, -3.0]))
    opt = Adam({"p": p}, lr=0.1)
    for _ in range(500):
        opt.step({"p": 2 * p.data})
    assert np.abs(p.data).max() < 1e-2


def test_adam_shape_mismatch():
    p = parameter(np.zeros(3))
    with pytest.raises(ValueError):
        Adam({"p": p}).step({"p": np.zeros(4)})

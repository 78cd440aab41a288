import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advrom.errors import ArgumentError, NumericError, RomIOError, StateError
from advrom.nn import (LSTM, BatchNorm, Dense, Dropout, LeakyReLU, Nadam, NadamState, ParamGroup,
                       Sequential, Sigmoid, Tanh, batchnorm_forward, bce_grad, bce_loss,
                       check_gradients, dense_forward, dropout_forward, gradient_check,
                       leaky_relu, load_checkpoint, lstm_step, mse_grad, mse_loss, nadam_step,
                       save_checkpoint)
from advrom.nn.network import recalibrate_batchnorm


# dense / activations --------------------------------------------------------

def test_dense_hand_example():
    layer = Dense(2, 2)
    layer.params["W"][:] = [[1.0, 2.0], [3.0, 4.0]]
    layer.params["b"][:] = [1.0, 1.0]
    np.testing.assert_array_equal(dense_forward(layer, np.array([1.0, 1.0])), [4.0, 8.0])


def test_dense_identity_and_shape_error():
    layer = Dense(3, 3)
    layer.params["W"][:] = np.eye(3)
    x = np.random.default_rng(0).standard_normal((4, 3))
    np.testing.assert_array_equal(layer.forward(x), x)
    with pytest.raises(ArgumentError):
        layer.forward(np.zeros((4, 2)))


def test_glorot_init_bounds():
    layer = Dense(30, 20, np.random.default_rng(0))
    limit = np.sqrt(6.0 / 50)
    assert np.all(np.abs(layer.params["W"]) <= limit)
    assert np.all(layer.params["b"] == 0)


def test_leaky_relu_values():
    np.testing.assert_allclose(leaky_relu(np.array([2.0, -1.0, 0.0])), [2.0, -0.3, 0.0])
    assert LeakyReLU().slope == 0.3


def test_sigmoid_is_stable_for_large_logits():
    y = Sigmoid().forward(np.array([[-800.0], [0.0], [800.0]]))
    assert np.all(np.isfinite(y))
    np.testing.assert_allclose(y[:, 0], [0.0, 0.5, 1.0])


def test_backward_before_forward_is_state_error():
    with pytest.raises(StateError):
        Dense(2, 2).backward(np.ones((1, 2)))
    with pytest.raises(StateError):
        LSTM(2, 3).backward(np.ones((1, 3)))


# batch norm -----------------------------------------------------------------

def test_batchnorm_hand_example():
    bn = BatchNorm(1, eps=0.0)
    np.testing.assert_allclose(batchnorm_forward(bn, np.array([[1.0], [3.0]]), "train"),
                               [[-1.0], [1.0]])


def test_batchnorm_normalized_input_and_constant_column():
    x = np.array([[-1.0, 5.0], [1.0, 5.0]])
    y = BatchNorm(2).forward(x, train=True)
    np.testing.assert_allclose(y[:, 0], x[:, 0], atol=1e-5)
    np.testing.assert_array_equal(y[:, 1], 0.0)


def test_batchnorm_requires_batch_of_two_in_train_mode():
    with pytest.raises(ArgumentError):
        BatchNorm(3).forward(np.ones((1, 3)), train=True)
    BatchNorm(3).forward(np.ones((1, 3)), train=False)


def test_batchnorm_running_update_and_freeze():
    bn = BatchNorm(1, momentum=0.9)
    x = np.array([[2.0], [4.0]])
    bn.forward(x, train=True, update_stats=False)
    assert bn.buffers["running_mean"][0] == 0.0
    bn.forward(x, train=True)
    np.testing.assert_allclose(bn.buffers["running_mean"], [0.3])
    np.testing.assert_allclose(bn.buffers["running_var"], [0.9 + 0.1 * 1.0])
    y = bn.forward(np.array([[0.3]]), train=False)
    np.testing.assert_allclose(y, [[0.0]], atol=1e-12)


def test_bias_before_batchnorm_has_zero_gradient():
    rng = np.random.default_rng(2)
    net = Sequential([Dense(3, 4, rng), BatchNorm(4), Dense(4, 1, rng)])
    x = rng.standard_normal((6, 3))
    y = net.forward(x, train=True)
    net.zero_grad()
    net.backward(np.ones_like(y))
    assert np.max(np.abs(net.layers[0].grads["b"])) < 1e-12


def test_recalibration_sets_population_statistics():
    rng = np.random.default_rng(0)
    net = Sequential([Dense(2, 3, rng), BatchNorm(3), Tanh()])
    x = rng.standard_normal((50, 2)) * 4 + 1
    recalibrate_batchnorm(net, x)
    h = net.layers[0].forward(x)
    np.testing.assert_allclose(net.layers[1].buffers["running_mean"], h.mean(axis=0))
    np.testing.assert_allclose(net.layers[1].buffers["running_var"], h.var(axis=0))


# dropout --------------------------------------------------------------------

def test_dropout_identity_cases():
    x = np.random.default_rng(0).standard_normal((3, 4))
    assert np.array_equal(dropout_forward(x, 0.0, "train", np.random.default_rng(1)), x)
    assert np.array_equal(dropout_forward(x, 0.5, "infer"), x)


def test_dropout_statistics():
    x = np.ones(100_000)
    y = dropout_forward(x, 0.5, "train", np.random.default_rng(0))
    assert abs(np.mean(y != 0) - 0.5) < 0.01
    assert abs(y.mean() - 1.0) < 0.02


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_rate_range(rate):
    with pytest.raises(ArgumentError):
        Dropout(rate)


def test_dropout_train_needs_rng():
    with pytest.raises(ArgumentError):
        Dropout(0.5).forward(np.ones(3), train=True)


# LSTM -----------------------------------------------------------------------

def test_lstm_zero_fixed_point():
    layer = LSTM(2, 3, forget_bias=0.0)
    h, c = lstm_step(layer, np.zeros(2), np.zeros(3), np.zeros(3))
    assert np.all(h == 0) and np.all(c == 0)


def test_lstm_hand_gate_evaluation():
    layer = LSTM(1, 1, forget_bias=0.0)
    h, c = lstm_step(layer, np.zeros(1), np.zeros(1), np.ones(1))
    np.testing.assert_allclose(c, [0.5])
    np.testing.assert_allclose(h, [0.5 * np.tanh(0.5)])
    assert abs(h[0] - 0.231) < 1e-3


def test_lstm_forget_bias_and_shapes():
    layer = LSTM(3, 4, np.random.default_rng(0))
    np.testing.assert_array_equal(layer.gate("forget")[1], 1.0)
    for g in ("input", "output", "candidate"):
        np.testing.assert_array_equal(layer.gate(g)[1], 0.0)
    with pytest.raises(ArgumentError):
        lstm_step(layer, np.zeros(2), np.zeros(4), np.zeros(4))
    out = layer.forward(np.zeros((5, 7, 3)))
    assert out.shape == (5, 4)
    seq = LSTM(3, 4, np.random.default_rng(0), return_sequences=True).forward(np.zeros((5, 7, 3)))
    assert seq.shape == (5, 7, 4)


def test_lstm_sequence_matches_repeated_steps():
    rng = np.random.default_rng(3)
    layer = LSTM(2, 3, rng)
    xs = rng.standard_normal((4, 6, 2))
    h = c = np.zeros((4, 3))
    for t in range(6):
        h, c = lstm_step(layer, xs[:, t], h, c)
    np.testing.assert_allclose(layer.forward(xs), h, atol=1e-14)


# losses ---------------------------------------------------------------------

def test_bce_values():
    assert abs(bce_loss(np.array([0.5]), 1.0) - np.log(2)) < 1e-12
    assert abs(bce_loss(np.array([0.9]), 1.0) - 0.105361) < 1e-6
    assert bce_loss(np.array([1.0 - 1e-7]), 1.0) < 1e-6
    assert np.isfinite(bce_loss(np.array([0.0, 1.0]), np.array([1.0, 0.0])))


def test_bce_gradient_is_zero_inside_clamp():
    assert bce_grad(np.array([0.0]), 1.0)[0] == 0.0
    assert bce_grad(np.array([0.3]), 1.0)[0] < 0


def test_mse_values_and_errors():
    assert mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert mse_loss(np.zeros(2), np.ones(2)) == 1.0
    assert mse_loss(np.array([1.0, 2.0]), np.array([3.0, 5.0])) == 6.5
    with pytest.raises(ArgumentError):
        mse_loss(np.zeros(2), np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.integers(0, 1000))
def test_mse_symmetric_non_negative(a, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).standard_normal(a.shape)
    assert mse_loss(a, b) == mse_loss(b, a) >= 0


def test_hand_gradient_of_scalar_mse():
    layer = Dense(1, 1)
    layer.params["W"][:] = 2.0
    y = layer.forward(np.array([[3.0]]))
    layer.backward(mse_grad(y, np.array([[5.0]])))
    assert layer.grads["W"][0, 0] == pytest.approx(6.0)
    assert layer.grads["b"][0] == pytest.approx(2.0)


def test_gradient_at_minimum_is_zero():
    rng = np.random.default_rng(0)
    net = Sequential([Dense(2, 3, rng), Tanh(), Dense(3, 1, rng)])
    x = rng.standard_normal((4, 2))
    y = net.forward(x)
    net.zero_grad()
    net.backward(mse_grad(y, y.copy()))
    assert not ParamGroup({"n": net}).grad_flat().any()


# gradient checks (the randomized sweep is acceptance criterion 1) -----------

@pytest.mark.parametrize("seed", range(5))
def test_gradient_check_lstm_with_batchnorm_head(seed):
    rng = np.random.default_rng(seed)
    net = Sequential([LSTM(3, 5, rng), BatchNorm(5), Dropout(0.5), Dense(5, 3, rng)])
    x = rng.standard_normal((6, 4, 3))
    y = rng.standard_normal((6, 3))
    assert gradient_check(net, x, "mse", y, train=True, seed=seed) < 1e-3
    assert gradient_check(net, x, "mse", y, train=False) < 1e-4


def test_check_gradients_detects_a_wrong_backward():
    rng = np.random.default_rng(0)
    net = Sequential([Dense(2, 2, rng)])
    x, y = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    group = ParamGroup({"n": net})

    def closure(backward):
        out = net.forward(x)
        if backward:
            net.backward(2.0 * mse_grad(out, y))
        return mse_loss(out, y)

    assert check_gradients(group, closure) > 0.3


# Nadam ----------------------------------------------------------------------

def _nadam_oracle(theta, g, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """One step from a fresh state, evaluated term by term."""
    t = 1
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    m_hat = m / (1 - b1 ** (t + 1))
    g_hat = g / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    return theta - lr * (b1 * m_hat + (1 - b1) * g_hat) / (np.sqrt(v_hat) + eps)


def test_nadam_scalar_oracle():
    new, state = nadam_step(np.array([1.0]), np.array([1.0]), NadamState.zeros(1))
    assert state.t == 1
    assert new[0] == pytest.approx(_nadam_oracle(1.0, 1.0), abs=1e-15)
    assert new[0] == pytest.approx(0.998526316, abs=1e-9)


def test_nadam_two_steps_against_unrolled_recurrence():
    theta, g1, g2 = np.array([0.5, -2.0]), np.array([0.3, -1.0]), np.array([-0.1, 0.4])
    state = NadamState.zeros(2, lr=0.01)
    p1, state = nadam_step(theta, g1, state)
    p2, state = nadam_step(p1, g2, state)
    b1, b2 = 0.9, 0.999
    m = 0.1 * g1
    v = 0.001 * g1 ** 2
    m = b1 * m + 0.1 * g2
    v = b2 * v + 0.001 * g2 ** 2
    look = b1 * m / (1 - b1 ** 3) + 0.1 * g2 / (1 - b1 ** 2)
    expected = p1 - 0.01 * look / (np.sqrt(v / (1 - b2 ** 2)) + 1e-8)
    np.testing.assert_allclose(p2, expected, rtol=1e-14)


def test_nadam_defaults_and_zero_gradient_identity():
    s = NadamState.zeros(3)
    assert (s.lr, s.beta1, s.beta2) == (1e-3, 0.9, 0.999)
    theta = np.array([1.0, -2.0, 3.0])
    new, s = nadam_step(theta, np.zeros(3), s)
    assert np.array_equal(new, theta) and not s.m.any() and not s.v.any()


def test_nadam_non_finite_gradient_names_block():
    rng = np.random.default_rng(0)
    group = ParamGroup({"enc": Sequential([Dense(2, 2, rng)]),
                        "dec": Sequential([Dense(2, 2, rng)])})
    opt = Nadam(group)
    grads = np.zeros(group.size)
    grads[-1] = np.nan
    with pytest.raises(NumericError, match="dec"):
        nadam_step(group.get_flat(), grads, opt.state, group.block_names(), group.block_sizes())


def test_nadam_reduces_a_quadratic():
    rng = np.random.default_rng(0)
    net = Sequential([Dense(3, 1, rng)])
    x = rng.standard_normal((32, 3))
    y = x @ np.array([[1.0], [-2.0], [0.5]])
    opt = Nadam(ParamGroup({"n": net}), lr=0.05)
    losses = []
    for _ in range(200):
        opt.group.zero_grad()
        out = net.forward(x)
        losses.append(mse_loss(out, y))
        net.backward(mse_grad(out, y))
        opt.step()
    assert losses[-1] < 1e-3 * losses[0]


# checkpoints ----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    net = Sequential([LSTM(2, 3, rng), BatchNorm(3), Dropout(0.5), Dense(3, 2, rng), Sigmoid()])
    net.layers[1].buffers["running_mean"][:] = [1.0, 2.0, 3.0]
    state = NadamState.zeros(4)
    state.t = 7
    path = tmp_path / "c.romnn"
    save_checkpoint(path, {"g": net}, {"note": "x"}, {"opt": state})
    nets, extra, opts = load_checkpoint(path)
    x = rng.standard_normal((5, 4, 2))
    np.testing.assert_array_equal(nets["g"].forward(x), net.forward(x))
    assert extra == {"note": "x"} and opts["opt"].t == 7
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(RomIOError):
        load_checkpoint(path)

import numpy as np
import pytest

from pinncert.autodiff import ACTIVATIONS, Dual, Tape, UsageError
from pinncert.network import (Network, ShapeError, bind_network, flatten_params,
                              forward, forward_on_tape, init_network,
                              input_jacobian, load_network, parameter_gradient,
                              save_network, set_params)


def reference_forward(net, x):
    """Independent straightforward per-neuron re-implementation."""
    act = {
        "tanh": np.tanh,
        "sigmoid": lambda v: 1 / (1 + np.exp(-v)),
    }[net.activation]
    h = list(x)
    n_layers = len(net.weights)
    for k in range(n_layers):
        out = []
        for i in range(net.layer_dims[k + 1]):
            s = net.biases[k][i]
            for j in range(net.layer_dims[k]):
                s += net.weights[k][i][j] * h[j]
            out.append(s)
        h = [act(v) for v in out] if k < n_layers - 1 else out
    return np.array(h)


def test_zero_network_maps_to_zero():
    net = init_network([2, 3, 2], seed=0)
    for w in net.weights:
        w[:] = 0.0
    assert np.all(forward(net, [1.7, -2.2]) == 0.0)


def test_single_layer_identity():
    net = Network([1, 1], [np.array([[1.0]])], [np.zeros(1)])
    assert forward(net, [3.0])[0] == 3.0


def test_forward_matches_independent_reimplementation():
    net = init_network([1, 4, 4, 1], seed=11)
    for x in (0.5, -1.2, 2.0):
        np.testing.assert_allclose(forward(net, [x]), reference_forward(net, [x]),
                                   rtol=1e-14)


def test_forward_rejects_wrong_width():
    net = init_network([2, 3, 1], seed=0)
    with pytest.raises(ShapeError):
        forward(net, [1.0, 2.0, 3.0])


def test_forward_deterministic():
    net = init_network([1, 4, 1], seed=5)
    a = forward(net, [0.3])
    b = forward(net, [0.3])
    assert np.array_equal(a, b)


def test_seeded_init_reproducible():
    a = init_network([2, 8, 2], seed=42)
    b = init_network([2, 8, 2], seed=42)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))
    c = init_network([2, 8, 2], seed=43)
    assert not all(np.array_equal(x, y) for x, y in zip(a.weights, c.weights))


def test_affine_jacobian_equals_weight_matrix():
    w = np.array([[1.5, -2.0], [0.5, 3.0]])
    net = Network([2, 2], [w.copy()], [np.array([0.3, -0.1])])
    np.testing.assert_array_equal(input_jacobian(net, np.zeros(2)), w)


def test_scalar_tanh_derivative_at_zero():
    net = Network([1, 1, 1], [np.array([[1.0]]), np.array([[1.0]])],
                  [np.zeros(1), np.zeros(1)])
    assert input_jacobian(net, np.zeros(1))[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_input_jacobian_matches_central_differences():
    net = init_network([1, 4, 4, 1], seed=7)
    x = np.array([0.37])
    h = 1e-5
    fd = (forward(net, x + h) - forward(net, x - h)) / (2 * h)
    jac = input_jacobian(net, x)
    assert jac[0, 0] == pytest.approx(fd[0], rel=1e-6)


def test_parameter_gradient_hand_case():
    # loss = (forward(x) - y)^2, linear net w=2, b=0, x=1, y=0: d/dw = 4
    net = Network([1, 1], [np.array([[2.0]])], [np.zeros(1)])
    tape = Tape()
    out = forward_on_tape(tape, net, np.array([[1.0]]))
    loss = ((out - 0.0) ** 2).sum()
    grad = parameter_gradient(net, loss)
    assert grad[0] == pytest.approx(4.0)
    assert grad[1] == pytest.approx(4.0)  # d/db = 2*(2-0)*1


def test_zero_loss_zero_gradient():
    net = Network([1, 1], [np.array([[2.0]])], [np.zeros(1)])
    tape = Tape()
    out = forward_on_tape(tape, net, np.array([[1.0]]))
    loss = ((out - 2.0) ** 2).sum()
    grad = parameter_gradient(net, loss)
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)


def _fd_parameter_gradient(net, x, y, h=1e-6):
    theta0 = flatten_params(net)
    fd = np.empty_like(theta0)
    for i in range(len(theta0)):
        for sign, store in ((+1, 0), (-1, 1)):
            theta = theta0.copy()
            theta[i] += sign * h
            set_params(net, theta)
            val = float(np.sum((forward(net, x) - y) ** 2))
            if sign > 0:
                up = val
            else:
                down = val
        fd[i] = (up - down) / (2 * h)
    set_params(net, theta0)
    return fd


def test_parameter_gradient_matches_finite_differences():
    net = init_network([1, 4, 1], seed=2)
    x, y = np.array([0.8]), np.array([0.5])
    tape = Tape()
    out = forward_on_tape(tape, net, x[None, :])
    loss = ((out - y) ** 2).sum()
    grad = parameter_gradient(net, loss)
    fd = _fd_parameter_gradient(net, x, y)
    scale = np.maximum(np.abs(fd), 1e-8)
    assert np.max(np.abs(grad - fd) / scale) <= 1e-6


def test_forward_reverse_consistency_per_parameter():
    # reverse-mode dL/dtheta equals forward-mode dL/dtheta, parameter by parameter
    net = init_network([1, 3, 1], seed=9)   # 10 parameters
    x = np.array([0.4])
    tape = Tape()
    out = forward_on_tape(tape, net, x[None, :])
    loss = (out ** 2).sum()
    grad = parameter_gradient(net, loss)
    idx = 0
    for k in range(len(net.weights)):
        for arr_name in ("weights", "biases"):
            arr = getattr(net, arr_name)[k]
            for flat_i in range(arr.size):
                seed_w = [np.zeros_like(w) for w in net.weights]
                seed_b = [np.zeros_like(b) for b in net.biases]
                seed_arr = (seed_w if arr_name == "weights" else seed_b)[k]
                seed_arr.flat[flat_i] = 1.0
                dual_w = [Dual(w, sw) for w, sw in zip(net.weights, seed_w)]
                dual_b = [Dual(b, sb) for b, sb in zip(net.biases, seed_b)]
                from pinncert.network import _forward_any
                out_d = _forward_any(dual_w, dual_b, net.activation, x[None, :])
                fwd = float(np.sum(2 * out_d.value * out_d.derivative))
                assert abs(grad[idx] - fwd) <= 1e-10
                idx += 1


def test_gradient_on_unrecorded_scalar_raises():
    net = init_network([1, 2, 1], seed=0)
    with pytest.raises(UsageError):
        parameter_gradient(net, 1.0)
    tape = Tape()
    loss = tape.var(1.0)
    with pytest.raises(UsageError):
        parameter_gradient(net, loss)   # net never bound on this tape


@pytest.mark.parametrize("activation", sorted(ACTIVATIONS))
def test_serialization_round_trip_bit_exact(tmp_path, activation):
    net = init_network([2, 5, 3], activation=activation, seed=13,
                       meta={"inputs": ["t", "x0"]})
    path = tmp_path / "net.json"
    save_network(net, path)
    loaded = load_network(path)
    assert loaded.layer_dims == net.layer_dims
    assert loaded.activation == net.activation
    assert loaded.meta == net.meta
    for a, b in zip(loaded.weights, net.weights):
        assert np.array_equal(a, b)
    for a, b in zip(loaded.biases, net.biases):
        assert np.array_equal(a, b)

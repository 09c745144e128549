import numpy as np
import pytest

from irsnoma.checks import randomize_biases, random_sample
from irsnoma.neural import (MAGIC, QNet, backward, clone_into_target, grad_check, load_checkpoint,
                            save_checkpoint, sgd_step, td_loss)


def _set_streams(net, V, A):
    """Zero trunk output path with fixed value / advantage biases."""
    for p in net.params:
        p[...] = 0.0
    g = net.parameter_groups()
    g["value"][1][...] = V
    g["advantage"][1][...] = A
    return net


def test_uniform_advantage_gives_value():
    net = _set_streams(QNet(2, (4,), (3,), rng=0), 1.0, [1.0, 1.0, 1.0])
    assert net.forward(np.ones(2)).tolist() == [1.0, 1.0, 1.0]


def test_mean_subtraction():
    net = _set_streams(QNet(2, (4,), (3,), rng=0), 0.0, [3.0, 0.0, 0.0])
    assert net.forward(np.ones(2)).tolist() == [2.0, -1.0, -1.0]


def test_centering_per_branch():
    rng = np.random.default_rng(0)
    net = randomize_biases(QNet(4, (16, 16), (3, 5, 2), rng=1), rng)
    X = rng.normal(size=(1000, 4))
    Q, V = net.forward(X), net.value(X)
    for s in net.slices:
        assert np.max(np.abs((Q[:, s] - V[:, None]).mean(axis=1))) < 1e-12


def test_forward_rejects_bad_input():
    net = QNet(3, (4,), (2,), rng=0)
    with pytest.raises(ValueError):
        net.forward([1.0, np.nan, 0.0])
    with pytest.raises(ValueError):
        net.forward([1.0, 2.0])


def test_forward_is_pure():
    net = QNet(3, (8,), (2, 3), rng=0)
    x = np.arange(3.0)
    assert np.array_equal(net.forward(x), net.forward(x))


def test_zero_td_zero_gradients():
    net = QNet(3, (8, 8), (3,), rng=0)
    X = np.random.default_rng(1).normal(size=(5, 3))
    a = np.array([[0], [2], [1], [0], [2]])
    W = net.forward(X)[np.arange(5), a[:, 0]]
    for g in backward(net, X, a, W):
        assert not np.any(g)


def test_single_linear_layer_closed_form():
    rng = np.random.default_rng(2)
    net = QNet(4, (), (3,), dueling=False, rng=0)
    net.params[1][...] = rng.normal(size=3)
    x = rng.normal(size=4)
    a, W = 1, 0.7
    Q = net.forward(x)
    gW, gb = backward(net, x[None], [[a]], [W])
    wantW = np.zeros((4, 3))
    wantW[:, a] = -(W - Q[a]) * x
    wantb = np.zeros(3)
    wantb[a] = -(W - Q[a])
    assert np.array_equal(gW, wantW)
    assert np.array_equal(gb, wantb)


def test_gradcheck_linear():
    rng = np.random.default_rng(3)
    net = QNet(5, (), (4,), dueling=False, rng=0)
    assert grad_check(net, random_sample(net, rng)) < 1e-8


def test_gradcheck_thousand_params():
    rng = np.random.default_rng(4)
    net = randomize_biases(QNet(6, (24, 24), (4, 4, 3), rng=5), rng)
    assert net.n_params > 1000
    assert grad_check(net, random_sample(net, rng)) < 1e-4


def test_gradcheck_catches_corruption():
    rng = np.random.default_rng(5)
    net = randomize_biases(QNet(3, (6,), (3,), rng=0), rng)
    sample = random_sample(net, rng)
    grads = backward(net, *sample)
    grads[0] = grads[0] * 1.5
    assert grad_check(net, sample, grads=grads) > 1e-2


def test_sgd_step_noop_cases():
    net = QNet(3, (8,), (2,), rng=0)
    before = [p.copy() for p in net.params]
    sgd_step(net, [np.ones_like(p) for p in net.params], 0.0)
    sgd_step(net, [np.zeros_like(p) for p in net.params], 0.1)
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params))


def test_sgd_step_reduces_loss():
    rng = np.random.default_rng(6)
    net = QNet(3, (8,), (2,), rng=0)
    X, a, W = random_sample(net, rng, batch=8)
    l0, _ = td_loss(net, X, a, W)
    sgd_step(net, backward(net, X, a, W), 1e-2)
    assert td_loss(net, X, a, W)[0] < l0


def test_loss_nonincreasing_over_fifty_steps():
    rng = np.random.default_rng(7)
    net = QNet(4, (16, 16), (3, 2), rng=1)
    X, a, W = random_sample(net, rng, batch=16)
    losses = []
    for _ in range(50):
        losses.append(td_loss(net, X, a, W)[0])
        sgd_step(net, backward(net, X, a, W), 1e-3)
    assert all(b <= a_ for a_, b in zip(losses, losses[1:]))


def test_clone_is_independent():
    rng = np.random.default_rng(8)
    online = QNet(3, (8,), (3,), rng=0)
    target = clone_into_target(online)
    X = rng.normal(size=(100, 3))
    assert np.array_equal(online.forward(X), target.forward(X))
    before = target.forward(X)
    sgd_step(online, backward(online, *random_sample(online, rng)), 0.1)
    assert np.array_equal(target.forward(X), before)
    assert not np.array_equal(online.forward(X), before)
    again = clone_into_target(target)
    assert np.array_equal(clone_into_target(again).forward(X), before)


def test_checkpoint_roundtrip(tmp_path):
    net = randomize_biases(QNet(5, (7, 3), (2, 4), dueling=True, rng=0), np.random.default_rng(0))
    blob = net.to_bytes()
    assert blob.startswith(MAGIC)
    path = tmp_path / "net.bin"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.to_bytes() == blob
    assert (back.in_dim, back.hidden, back.branch_sizes, back.dueling) == (5, (7, 3), (2, 4), True)
    with pytest.raises(ValueError):
        QNet.from_bytes(b"garbage!" + blob[8:])


def test_backward_needs_forward():
    with pytest.raises(RuntimeError):
        QNet(2, (3,), (2,), rng=0).backward(np.zeros(2))

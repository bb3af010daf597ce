import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtvec.nn import (
    CHECKPOINT_MAGIC,
    AdamState,
    DimensionError,
    DuelingCritic,
    MlpParams,
    critic_action_gradient,
    critic_backward,
    critic_forward,
    dueling_q,
    init_critic,
    init_mlp,
    load_arrays,
    mlp_backward,
    mlp_forward,
    mlp_from_arrays,
    mlp_to_arrays,
    optimizer_step,
    save_arrays,
    soft_update,
)


def const_net(in_dim, value):
    return MlpParams([np.zeros((in_dim, 1))], [np.array([float(value)])])


# ---------------------------------------------------------------- forward


def test_forward_examples():
    z = MlpParams([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    np.testing.assert_array_equal(mlp_forward(z, [1.0, -2.0, 3.0])[0], [0.0, 0.0])
    net = MlpParams([np.array([[2.0]])], [np.array([1.0])])
    np.testing.assert_array_equal(mlp_forward(net, [3.0])[0], [7.0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3))
def test_sigmoid_head_stays_inside_unit_interval(x):
    net = init_mlp([3, 8, 2], "sigmoid", np.random.default_rng(0))
    y, _ = mlp_forward(net, x)
    assert np.all((y > 0) & (y < 1))


def test_forward_batch_matches_rows():
    net = init_mlp([4, 6, 3], "sigmoid", np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(5, 4))
    batch, _ = mlp_forward(net, x)
    for row, out in zip(x, batch):
        np.testing.assert_allclose(mlp_forward(net, row)[0], out, rtol=1e-13)


def test_dimension_errors():
    net = init_mlp([3, 2], "identity", np.random.default_rng(0))
    with pytest.raises(DimensionError):
        mlp_forward(net, np.zeros(4))
    with pytest.raises(DimensionError):
        MlpParams([np.zeros((3, 2)), np.zeros((3, 1))], [np.zeros(2), np.zeros(1)])
    with pytest.raises(ValueError):
        MlpParams([np.zeros((1, 1))], [np.zeros(1)], "tanh")
    with pytest.raises(DimensionError):
        net.assign(init_mlp([3, 4], "identity", np.random.default_rng(0)))


# --------------------------------------------------------------- backward


def numeric_grad(f, arr, h=1e-5):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-6, np.abs(a) + np.abs(b)))


@pytest.mark.parametrize("output", ["identity", "sigmoid"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backward_matches_finite_differences(output, seed):
    rng = np.random.default_rng(seed)
    net = init_mlp([4, 7, 5, 3], output, rng)
    x = rng.normal(size=(6, 4))
    gy = rng.normal(size=(6, 3))

    def loss():
        return float(np.sum(mlp_forward(net, x)[0] * gy))

    _, cache = mlp_forward(net, x)
    grads, gin = mlp_backward(net, cache, gy)
    for arr, g in zip(net.arrays(), grads):
        assert rel_err(numeric_grad(loss, arr), g) < 1e-4
    assert rel_err(numeric_grad(loss, x), gin) < 1e-4


def test_backward_zero_and_scaled_gradients():
    rng = np.random.default_rng(4)
    net = init_mlp([3, 5, 2], "sigmoid", rng)
    x = rng.normal(size=(4, 3))
    _, cache = mlp_forward(net, x)
    zero, _ = mlp_backward(net, cache, np.zeros((4, 2)))
    assert all(np.all(g == 0) for g in zero)
    gy = rng.normal(size=(4, 2))
    one, _ = mlp_backward(net, cache, gy)
    three, _ = mlp_backward(net, cache, 3 * gy)
    for a, b in zip(one, three):
        np.testing.assert_allclose(3 * a, b, rtol=1e-12, atol=1e-15)


# -------------------------------------------------------------------- adam


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, -2.0])]
    st_ = AdamState.for_params(p, lr=0.1)
    optimizer_step(st_, p, [np.zeros(2)])
    np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_adam_minimizes_square():
    x = [np.array([1.0])]
    st_ = AdamState.for_params(x, lr=0.01)
    trace = []
    for _ in range(300):
        optimizer_step(st_, x, [2 * x[0]])
        trace.append(abs(x[0][0]))
    # Adam moves by about lr per step until it reaches the minimum
    assert all(b < a for a, b in zip(trace[:50], trace[1:51]))
    assert trace[-1] < 0.05


def test_adam_first_step_is_lr_sized():
    x = [np.array([1.0])]
    st_ = AdamState.for_params(x, lr=0.01)
    optimizer_step(st_, x, [np.array([123.0])])
    assert x[0][0] == pytest.approx(0.99, abs=1e-9)


def test_adam_deterministic_and_checks_shapes():
    a, b = [np.ones(3)], [np.ones(3)]
    sa, sb = AdamState.for_params(a, lr=0.1), AdamState.for_params(b, lr=0.1)
    g = [np.array([0.3, -1.0, 2.0])]
    for _ in range(5):
        optimizer_step(sa, a, g)
        optimizer_step(sb, b, g)
    np.testing.assert_array_equal(a[0], b[0])
    with pytest.raises(DimensionError):
        optimizer_step(sa, a, [np.ones(2)])


def test_soft_update():
    t = MlpParams([np.zeros((1, 1))], [np.zeros(1)])
    s = MlpParams([np.ones((1, 1))], [np.full(1, 2.0)])
    soft_update(t, s, 1.0)
    assert t.weights[0][0, 0] == 1.0 and t.biases[0][0] == 2.0
    t = MlpParams([np.zeros((1, 1))], [np.zeros(1)])
    soft_update(t, s, 0.001)
    assert t.weights[0][0, 0] == pytest.approx(0.001)


# ----------------------------------------------------------------- dueling


def test_constant_advantage_gives_value():
    crit = DuelingCritic(const_net(2 + 1 + 0 + 2, 0.7), const_net(2 + 2, -1.5))
    q = dueling_q(crit, [0.1, 0.2], [0.5], [], [0.5, 0.5], 4, np.random.default_rng(0))
    assert q == -1.5


def test_dueling_hand_value():
    # A(o, a) = a on a 1-d action; V = 0; random actions with mean 0.2
    w = np.zeros((1 + 1 + 2, 1))
    w[1, 0] = 1.0
    adv = MlpParams([w], [np.zeros(1)])
    crit = DuelingCritic(adv, const_net(1 + 2, 0.0))
    q, _ = critic_forward(crit, [9.0], [0.5], np.zeros(0), [0.5, 0.5], np.array([[0.1], [0.3]]))
    assert q[0] == pytest.approx(0.3)


@given(st.floats(-100, 100))
def test_dueling_shift_invariance(c):
    rng = np.random.default_rng(3)
    crit = init_critic(3, 2, 4, (8,), rng)
    obs, act, oth, w = rng.uniform(size=3), rng.uniform(size=2), rng.uniform(size=4), [0.3, 0.7]
    ra = rng.uniform(size=(5, 2))
    q0, _ = critic_forward(crit, obs, act, oth, w, ra)
    crit.advantage.biases[-1] += c
    q1, _ = critic_forward(crit, obs, act, oth, w, ra)
    assert q1[0] == pytest.approx(q0[0], abs=1e-9)


def test_dueling_needs_random_actions():
    crit = init_critic(2, 1, 0, (4,), np.random.default_rng(0))
    with pytest.raises(ValueError):
        critic_forward(crit, [0.0, 0.0], [0.5], np.zeros(0), [0.5, 0.5])
    with pytest.raises(ValueError):
        critic_forward(crit, [0.0, 0.0], [0.5], np.zeros(0), [0.5, 0.5], np.zeros((0, 1)))


def test_monolithic_critic_is_plain_net():
    rng = np.random.default_rng(0)
    crit = init_critic(3, 2, 1, (6,), rng, dueling=False)
    assert not crit.dueling and crit.value is None
    x = rng.uniform(size=3 + 2 + 1 + 2)
    q, _ = critic_forward(crit, x[:3], x[3:5], x[5:6], x[6:])
    assert q[0] == pytest.approx(mlp_forward(crit.advantage, x)[0][0])


@pytest.mark.parametrize("dueling", [True, False])
def test_critic_backward_matches_finite_differences(dueling):
    rng = np.random.default_rng(5)
    crit = init_critic(3, 2, 4, (6, 5), rng, dueling=dueling)
    B = 4
    obs, act, oth = rng.normal(size=(B, 3)), rng.uniform(size=(B, 2)), rng.uniform(size=(B, 4))
    w = rng.uniform(size=(B, 2))
    ra = rng.uniform(size=(3, 2)) if dueling else None
    gq = rng.normal(size=B)

    def loss():
        return float(np.dot(critic_forward(crit, obs, act, oth, w, ra)[0], gq))

    _, cache = critic_forward(crit, obs, act, oth, w, ra)
    grads, dq_da = critic_backward(crit, cache, gq)
    for arr, g in zip(crit.arrays(), grads):
        assert rel_err(numeric_grad(loss, arr), g) < 1e-4
    assert rel_err(numeric_grad(loss, act), dq_da) < 1e-4


def test_action_gradient_matches_backward():
    rng = np.random.default_rng(6)
    crit = init_critic(3, 2, 1, (6,), rng)
    obs, act, oth, w = rng.normal(size=(4, 3)), rng.uniform(size=(4, 2)), rng.uniform(size=(4, 1)), rng.uniform(size=(4, 2))
    ra = rng.uniform(size=(3, 2))
    _, cache = critic_forward(crit, obs, act, oth, w, ra)
    _, dq_da = critic_backward(crit, cache, np.ones(4))
    adv, grad = critic_action_gradient(crit, obs, act, oth, w)
    np.testing.assert_allclose(grad, dq_da, rtol=1e-12)
    assert adv.shape == (4,)


def test_critic_copy_and_assign():
    a = init_critic(2, 1, 0, (4,), np.random.default_rng(0))
    b = init_critic(2, 1, 0, (4,), np.random.default_rng(1))
    c = a.copy()
    c.advantage.weights[0][0, 0] += 1.0
    assert a.advantage.weights[0][0, 0] != c.advantage.weights[0][0, 0]
    b.assign(a)
    for x, y in zip(a.arrays(), b.arrays()):
        np.testing.assert_array_equal(x, y)


# ------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    net = init_mlp([5, 4, 3], "sigmoid", np.random.default_rng(0))
    arrays = mlp_to_arrays("policy", net)
    arrays["scalar"] = np.array(2.5)
    path = tmp_path / "c.bin"
    save_arrays(path, arrays, {"mode": "mamo"})
    raw = path.read_bytes()
    assert raw.startswith(CHECKPOINT_MAGIC)
    back, meta = load_arrays(path)
    assert meta == {"mode": "mamo"}
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])
    again = mlp_from_arrays("policy", back, "sigmoid")
    x = np.linspace(0, 1, 5)
    np.testing.assert_array_equal(mlp_forward(again, x)[0], mlp_forward(net, x)[0])


def test_checkpoint_rejects_corruption(tmp_path):
    path = tmp_path / "c.bin"
    save_arrays(path, {"a": np.ones(3)})
    good = path.read_bytes()
    path.write_bytes(b"XXXXXXXX" + good[8:])
    with pytest.raises(ValueError):
        load_arrays(path)
    path.write_bytes(good[:-8])
    with pytest.raises(ValueError):
        load_arrays(path)
    path.write_bytes(good + b"\0")
    with pytest.raises(ValueError):
        load_arrays(path)
    with pytest.raises(KeyError):
        mlp_from_arrays("missing", {"a": np.ones(3)}, "identity")

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeris.numcore import (
    Adam, EarlyStopping, GradTape, SeededRng, ShapeError, Tensor, gradcheck, tensor as T,
)


def param(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


# forward semantics

def test_matmul_identity():
    A = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(T.matmul(Tensor(np.eye(3)), Tensor(A)).data, A)


def test_softmax_uniform_and_sums_to_one():
    assert np.allclose(T.softmax(Tensor(np.zeros(3))).data, 1 / 3)
    x = SeededRng(0).normal(size=(4, 7)) * 10
    assert np.allclose(T.softmax(Tensor(x)).data.sum(axis=-1), 1.0, atol=1e-12)


def test_softmax_permutation_equivariant():
    x = SeededRng(1).normal(size=6)
    perm = SeededRng(2).permutation(6)
    assert np.allclose(T.softmax(Tensor(x[perm])).data, T.softmax(Tensor(x)).data[perm], atol=1e-15)


def test_activations_at_zero():
    z = Tensor(np.zeros(1))
    assert T.sigmoid(z).data[0] == 0.5 and T.tanh(z).data[0] == 0.0
    assert T.relu(z).data[0] == 0.0 and T.silu(z).data[0] == 0.0


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
        T.add(Tensor(np.ones(2)), Tensor(np.ones(3)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_values_rejected():
    with pytest.raises(FloatingPointError):
        T.div(Tensor(np.ones(1)), Tensor(np.zeros(1)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_finite_checks_can_be_suspended():
    with T.finite_checks(False):
        out = T.exp(Tensor(np.array([1e4])))
    assert np.isinf(out.data[0])


# backward

def test_grad_of_sum_of_squares():
    x = param([1.0, -2.0, 3.0])
    with GradTape() as tape:
        loss = T.reduce_sum(T.square(x))
    assert np.array_equal(tape.gradient(loss, [x])[0], 2 * x.data)


def test_unused_parameter_gets_zero():
    x, y = param([1.0, 2.0]), param([5.0])
    with GradTape() as tape:
        loss = T.reduce_sum(T.mul(x, x))
    assert np.array_equal(tape.gradient(loss, [y])[0], [0.0])


def test_non_scalar_loss_rejected():
    x = param([1.0, 2.0])
    with GradTape() as tape:
        out = T.mul(x, x)
    with pytest.raises(ShapeError):
        tape.gradient(out, [x])


def test_shared_node_accumulates():
    x = param([3.0])
    with GradTape() as tape:
        y = T.mul(x, x)
        loss = T.reduce_sum(T.add(y, y))
    assert tape.gradient(loss, [x])[0][0] == pytest.approx(12.0)


OPS = {
    "matmul": lambda a, b: T.matmul(a, b),
    "add-broadcast": lambda a, b: T.add(a, T.getitem(b, (slice(None), 0))),
    "mul": lambda a, b: T.mul(a, T.transpose(b)),
    "div": lambda a, b: T.div(a, T.add(T.square(T.transpose(b)), 1.0)),
    "sigmoid": lambda a, b: T.sigmoid(a),
    "tanh": lambda a, b: T.tanh(a),
    "silu": lambda a, b: T.silu(a),
    "exp": lambda a, b: T.exp(a),
    "sqrt": lambda a, b: T.sqrt(T.add(T.square(a), 1.0)),
    "softmax": lambda a, b: T.softmax(a, axis=-1),
    "concat": lambda a, b: T.concat([a, T.transpose(b)], axis=0),
    "stack": lambda a, b: T.stack([a, T.transpose(b)], axis=1),
    "slice": lambda a, b: T.getitem(a, (slice(None), [0, 2, 2])),
    "reshape": lambda a, b: T.reshape(a, (3, 2)),
    "reduce-mean": lambda a, b: T.reduce_mean(a, axis=0, keepdims=True),
    "reduce-max": lambda a, b: T.reduce_max(a, axis=-1),
    "layer-norm": lambda a, b: T.layer_norm(a, T.add(b[0], 1.0), b[1]),
    "unstack": lambda a, b: T.mul(T.unstack(a, axis=1)[1], T.unstack(b, axis=0)[0][:2]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    rng = SeededRng(11)
    a = param(rng.uniform(-1, 1, size=(2, 3)))
    b = param(rng.uniform(-1, 1, size=(3, 2)))
    if name == "layer-norm":
        b = param(rng.uniform(-1, 1, size=(2, 3)))
    R = rng.normal(size=OPS[name](a, b).shape)
    fn = lambda: T.reduce_sum(T.mul(OPS[name](a, b), Tensor(R)))  # noqa: E731
    assert gradcheck(fn, [a, b]) < 1e-4


def test_conv_and_pool_gradients():
    rng = SeededRng(12)
    x = param(rng.uniform(-1, 1, size=(2, 9, 3)))
    w = param(rng.uniform(-1, 1, size=(3, 3, 4)))
    bias = param(rng.uniform(-1, 1, size=4))
    R = Tensor(rng.normal(size=(2, 3, 4)))
    fn = lambda: T.reduce_sum(T.mul(T.maxpool1d(T.conv1d(x, w, bias), 2), R))  # noqa: E731
    assert gradcheck(fn, [x, w, bias]) < 1e-4


# optimizer and early stopping

def test_adam_zero_gradient_leaves_params():
    p = param([1.0, 2.0])
    Adam([p]).step([np.zeros(2)])
    assert np.array_equal(p.data, [1.0, 2.0])


def test_adam_first_step_is_lr_sign():
    p = param([0.0, 0.0, 0.0])
    g = np.array([3.0, -0.5, 1e-3])
    Adam([p], learning_rate=0.01).step([g])
    # m_hat = g, v_hat = g^2 after bias correction
    expected = -0.01 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p.data, expected, rtol=1e-12)
    assert np.allclose(np.abs(p.data), 0.01, rtol=1e-4)


def test_adam_symmetry():
    a, b = param([1.0]), param([1.0])
    opt = Adam([a, b])
    for g in ([0.5], [-0.2], [0.1]):
        opt.step([np.array(g), np.array(g)])
    assert a.data[0] == b.data[0]


def test_early_stopping_never_stops_on_decrease():
    es = EarlyStopping(patience=2)
    assert not any(es.update(1.0 / (k + 1)) for k in range(50))


def test_early_stopping_counts_and_restores():
    p = param([0.0])
    es = EarlyStopping(patience=3)
    stops = []
    for epoch, loss in enumerate([1.0, 1.1, 1.1, 1.1], start=1):
        p.data[0] = epoch
        stops.append(es.update(loss, [p]))
    assert stops == [False, False, False, True]
    es.restore([p])
    assert p.data[0] == 1.0 and es.best_epoch == 1


def test_early_stopping_min_delta_boundary():
    es = EarlyStopping(patience=1, min_delta=0.25)
    es.update(1.0)
    assert es.update(0.75)  # exactly min_delta better: no improvement
    es2 = EarlyStopping(patience=1, min_delta=0.25)
    es2.update(1.0)
    assert not es2.update(0.7)


def test_early_stopping_rejects_zero_patience():
    with pytest.raises(ValueError):
        EarlyStopping(patience=0)


# rng

def test_rng_reproducible_and_streams_independent():
    a, b = SeededRng(42), SeededRng(42)
    assert np.array_equal(a.normal(size=5), b.normal(size=5))
    assert not np.array_equal(SeededRng(42).spawn(0).normal(size=5), SeededRng(42).spawn(1).normal(size=5))
    assert not np.array_equal(SeededRng(42).normal(size=5), SeededRng(42).spawn(0).normal(size=5))


def test_child_stream_ignores_parent_consumption():
    a = SeededRng(5)
    a.normal(size=100)
    assert np.array_equal(a.spawn(3).uniform(size=4), SeededRng(5).spawn(3).uniform(size=4))


def test_rng_is_philox_keyed_by_seed():
    ref = np.random.Generator(np.random.Philox(key=9)).uniform(size=3)
    assert np.array_equal(SeededRng(9).uniform(size=3), ref)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6))
def test_matmul_gradient_property(n, m):
    rng = SeededRng(n * 10 + m)
    a = param(rng.uniform(-1, 1, size=(n, m)))
    b = param(rng.uniform(-1, 1, size=(m, n)))
    with GradTape() as tape:
        loss = T.reduce_sum(T.matmul(a, b))
    ga, gb = tape.gradient(loss, [a, b])
    assert np.allclose(ga, np.ones((n, n)) @ b.data.T)
    assert np.allclose(gb, a.data.T @ np.ones((n, n)))

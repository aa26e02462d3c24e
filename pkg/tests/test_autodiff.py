import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aneuflow.autodiff import (
    MLP,
    Adam,
    AdamState,
    NonFiniteError,
    ShapeError,
    Tensor,
    adam_step,
    backward,
    concat,
    exp,
    finite_checks,
    gelu,
    grad_check,
    load_params,
    matmul,
    mean,
    reduce_sum,
    relu,
    reshape,
    save_params,
    scale,
    slice_,
    softmax,
    take,
    tanh,
    transpose,
)

SEEDS = range(10)
TOL = 1e-5


def _away_from_zero(rng, shape):
    x = rng.standard_normal(shape)
    return np.sign(x) * (0.1 + np.abs(x))


def _w(rng, shape):
    return Tensor(rng.standard_normal(shape))


# each entry: name -> (input shapes, f(*tensors, rng_weights) -> scalar)
OPS = {
    "matmul": ([(3, 4), (4, 2)], lambda a, b, w: (matmul(a, b) * w((3, 2))).sum()),
    "matmul_batched": ([(2, 3, 4), (4, 5)], lambda a, b, w: (matmul(a, b) * w((2, 3, 5))).sum()),
    "add": ([(3, 4), (4,)], lambda a, b, w: ((a + b) * w((3, 4))).sum()),
    "sub": ([(3, 1), (1, 4)], lambda a, b, w: ((a - b) * w((3, 4))).sum()),
    "mul": ([(2, 3), (2, 3)], lambda a, b, w: ((a * b) * w((2, 3))).sum()),
    "scale": ([(5,)], lambda a, w: (scale(a, -2.5) * w((5,))).sum()),
    "relu": ([(4, 4)], lambda a, w: (relu(a) * w((4, 4))).sum()),
    "tanh": ([(4, 4)], lambda a, w: (tanh(a) * w((4, 4))).sum()),
    "gelu": ([(4, 4)], lambda a, w: (gelu(a) * w((4, 4))).sum()),
    "exp": ([(6,)], lambda a, w: (exp(a) * w((6,))).sum()),
    "softmax": ([(3, 5)], lambda a, w: (softmax(a, axis=-1) * w((3, 5))).sum()),
    "softmax_axis0": ([(3, 5)], lambda a, w: (softmax(a, axis=0) * w((3, 5))).sum()),
    "reduce_sum": ([(3, 4)], lambda a, w: (reduce_sum(a, axis=1) * w((3,))).sum()),
    "mean": ([(3, 4)], lambda a, w: (mean(a, axis=0, keepdims=True) * w((1, 4))).sum()),
    "reshape": ([(2, 6)], lambda a, w: (reshape(a, (3, 4)) * w((3, 4))).sum()),
    "transpose": ([(2, 3, 4)], lambda a, w: (transpose(a, (2, 0, 1)) * w((4, 2, 3))).sum()),
    "slice": ([(5, 4)], lambda a, w: (slice_(a, (slice(1, 4), slice(None, None, 2))) * w((3, 2))).sum()),
    "slice_repeat": ([(5,)], lambda a, w: (slice_(a, np.array([0, 2, 2, 4])) * w((4,))).sum()),
    "take": ([(4, 3)], lambda a, w: (take(a, [3, 0, 0, 1], axis=0) * w((4, 3))).sum()),
    "concat": ([(2, 3), (4, 3)], lambda a, b, w: (concat([a, b], axis=0) * w((6, 3))).sum()),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    shapes, fn = OPS[name]
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        xs = [_away_from_zero(rng, s) for s in shapes]
        assert all(x.size <= 64 for x in xs)
        wrng = np.random.default_rng(1000 + seed)
        weights = {}

        def w(shape):
            # same weights on every call within one seed
            if shape not in weights:
                weights[shape] = _w(wrng, shape)
            return weights[shape]

        worst = max(worst, grad_check(lambda *t: fn(*t, w), xs))
    assert worst <= TOL


def test_core_examples():
    A = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(matmul(Tensor(np.eye(3)), Tensor(A)).data, A)
    s = softmax(Tensor(np.random.default_rng(0).standard_normal((6, 9)) * 30))
    assert np.all(np.abs(s.data.sum(axis=1) - 1) <= 1e-12)
    assert reduce_sum(Tensor(np.ones((2, 3)))).item() == 6.0


def test_backward_examples():
    x = Tensor(3.0, requires_grad=True)
    backward(x * x)
    assert x.grad == 6.0
    A = Tensor(np.random.default_rng(1).standard_normal((3, 4)), requires_grad=True)
    xv = np.array([1.0, -2.0, 0.5, 3.0])
    backward(reduce_sum(matmul(A, Tensor(xv.reshape(4, 1)))))
    assert np.allclose(A.grad, np.outer(np.ones(3), xv))
    y = Tensor(2.0, requires_grad=True)
    d = y.detach()
    z = Tensor(1.0, requires_grad=True)
    backward(d * z)
    assert y.grad is None and z.grad == 2.0


def test_shared_subexpression_accumulates():
    x = Tensor(1.5, requires_grad=True)
    u = x * x          # shared
    f = u * u + scale(u, 3.0) + x
    backward(f)
    # f = x^4 + 3x^2 + x -> 4x^3 + 6x + 1
    assert x.grad == pytest.approx(4 * 1.5**3 + 6 * 1.5 + 1, rel=1e-14)


def test_tape_visits_once_and_frees():
    x = Tensor(np.ones(3), requires_grad=True)
    u = tanh(x)
    f = reduce_sum(u * u + u)
    tape = backward(f, retain_graph=True)
    ids = [n.id for n in tape.nodes]
    assert len(ids) == len(set(ids))
    pos = {n.id: i for i, n in enumerate(tape.nodes)}
    for n in tape.nodes:
        for p in n._parents:
            if p.id in pos:
                assert pos[p.id] < pos[n.id]
    tape.free()
    assert f._parents == ()


def test_errors():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(4))
    with pytest.raises(ShapeError):
        backward(Tensor(np.ones(3), requires_grad=True) * 2.0)
    with np.errstate(over="ignore"):
        with finite_checks():
            with pytest.raises(NonFiniteError):
                exp(Tensor([1000.0]))
        assert np.isinf(exp(Tensor([1000.0])).data[0])


def test_grad_check_examples():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((5, 5))
    quad = lambda x: reduce_sum(reshape(x, (1, 5)) @ Tensor(A) @ reshape(x, (5, 1)))
    assert grad_check(quad, rng.standard_normal(5)) <= 1e-7
    mlp = MLP(3, 6, 2, 1, np.random.default_rng(0), activation="tanh")
    params = mlp.parameters()

    def f(*ts):
        x = Tensor(rng_in)
        h = tanh(matmul(x, ts[0]) + ts[1])
        h = tanh(matmul(h, ts[2]) + ts[3])
        return reduce_sum(matmul(h, ts[4]) + ts[5])

    rng_in = rng.standard_normal((4, 3))
    assert grad_check(f, [p.data.copy() for p in params]) <= 1e-5
    assert grad_check(lambda x: reduce_sum(Tensor(np.ones(3))), np.ones(3)) == 0.0


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_softmax_shift_invariance(seed, c):
    x = np.random.default_rng(seed).standard_normal((4, 7)) * 5
    a = softmax(Tensor(x)).data
    b = softmax(Tensor(x + c)).data
    assert np.max(np.abs(a - b)) <= 1e-12
    assert np.all(np.abs(a.sum(axis=-1) - 1) <= 1e-12)


def test_adam_examples():
    p = [np.array([1.0, -2.0])]
    new, st_ = adam_step(p, [np.zeros(2)], AdamState(), lr=1e-3)
    assert np.array_equal(new[0], p[0]) and st_.t == 1
    new, _ = adam_step([np.array(0.0)], [np.array(1.0)], AdamState(), lr=1e-4)
    assert new[0] == pytest.approx(-1e-4 / (1 + 1e-8), rel=1e-12)


def _train(seed):
    rng = np.random.default_rng(seed)
    mlp = MLP(2, 8, 2, 1, rng)
    x = Tensor(rng.standard_normal((16, 2)))
    y = Tensor(rng.standard_normal((16, 1)))
    opt = Adam(mlp.parameters(), lr=1e-2)
    hist = []
    for _ in range(20):
        opt.zero_grad()
        d = mlp(x) - y
        loss = reduce_sum(d * d)
        backward(loss)
        opt.step()
        hist.append(loss.item())
    return hist, mlp.state_dict()


def test_adam_determinism():
    h1, s1 = _train(4)
    h2, s2 = _train(4)
    assert h1 == h2
    assert all(s1[k].tobytes() == s2[k].tobytes() for k in s1)
    assert h1[-1] < h1[0]


def test_param_checkpoint_roundtrip(tmp_path):
    _, state = _train(1)
    save_params(state, tmp_path / "model.f64")
    back = load_params(tmp_path / "model.f64")
    assert list(back) == list(state)
    assert all(back[k].tobytes() == state[k].tobytes() for k in state)
    mlp = MLP(2, 8, 2, 1, np.random.default_rng(99))
    mlp.load_state_dict(back)
    assert all(np.array_equal(a, b) for a, b in zip(mlp.state_dict().values(), state.values()))

"""Engine tests: frozen closed-form values, finite-difference gradient checks,
and the shape/finiteness preconditions."""

import math

import numpy as np
import pytest

from langblend import autodiff as ad
from langblend.errors import IllegalStateError, InvalidArgumentError

# math.log(3.0): softmax([0, ln 3]) == [1/4, 3/4] and
# cross_entropy([[0, ln 3]], [1]) == ln(4/3), both exact in closed form.
LN3 = math.log(3.0)
LN_4_3 = math.log(4.0 / 3.0)  # 0.2876820724517809


def test_softmax_frozen_values():
    p = ad.softmax([0.0, LN3])
    assert p.dtype == np.float64
    np.testing.assert_allclose(p, [0.25, 0.75], rtol=0, atol=1e-12)
    q = ad.softmax([0.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(q, [0.25] * 4, rtol=0, atol=1e-15)


def test_softmax_normalizes_and_orders():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 257))
        v = rng.normal(scale=rng.uniform(0.1, 30.0), size=n)
        p = ad.softmax(v)
        assert abs(p.sum() - 1.0) < 1e-9
        assert (p > 0).all()
        assert int(np.argmax(p)) == int(np.argmax(v))


def test_softmax_shift_invariance():
    rng = np.random.default_rng(8)
    for _ in range(100):
        v = rng.normal(size=int(rng.integers(2, 64)))
        np.testing.assert_allclose(ad.softmax(v), ad.softmax(v + 123.456), atol=1e-12)


def test_softmax_slice_renormalization():
    # Renormalizing a slice of softmax(v) equals softmax of the sliced logits.
    rng = np.random.default_rng(9)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        v = rng.normal(scale=5.0, size=n)
        k = int(rng.integers(1, n))
        keep = rng.choice(n, size=k, replace=False)
        p = ad.softmax(v)
        sliced = p[keep] / p[keep].sum()
        np.testing.assert_allclose(sliced, ad.softmax(v[keep]), rtol=0, atol=1e-9)


def test_softmax_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        ad.softmax([])
    with pytest.raises(InvalidArgumentError):
        ad.softmax([1.0, float("nan")])
    with pytest.raises(InvalidArgumentError):
        ad.softmax([1.0, float("inf")])


def test_cross_entropy_frozen_value():
    logits = ad.Tensor(np.array([[0.0, LN3]], dtype=np.float64), requires_grad=True)
    loss = ad.cross_entropy(logits, np.array([1]))
    assert loss.data.shape == ()
    assert abs(float(loss.data) - LN_4_3) < 1e-12


def test_cross_entropy_confident_prediction_near_zero():
    logits = ad.Tensor(np.array([[20.0, 0.0, 0.0]], dtype=np.float64))
    loss = ad.cross_entropy(logits, np.array([0]))
    assert 0.0 <= float(loss.data) < 1e-3


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    logits = ad.Tensor(np.array([[0.0, LN3]], dtype=np.float64), requires_grad=True)
    loss = ad.cross_entropy(logits, np.array([1]))
    ad.backward(loss)
    np.testing.assert_allclose(logits.grad, [[0.25, -0.25]], atol=1e-12)


def test_cross_entropy_rejects_out_of_range_targets():
    logits = ad.Tensor(np.zeros((2, 3)))
    with pytest.raises(InvalidArgumentError):
        ad.cross_entropy(logits, np.array([0, 3]))
    with pytest.raises(InvalidArgumentError):
        ad.cross_entropy(logits, np.array([-1, 0]))


def test_mse_frozen_value_and_gradient():
    a = ad.Tensor(np.array([1.0, 2.0, 3.0], dtype=np.float64), requires_grad=True)
    b = ad.Tensor(np.array([0.0, 2.0, 5.0], dtype=np.float64))
    loss = ad.mse_loss(a, b)
    assert abs(float(loss.data) - 5.0 / 3.0) < 1e-12
    ad.backward(loss)
    np.testing.assert_allclose(a.grad, [2.0 / 3.0, 0.0, -4.0 / 3.0], atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        ad.mse_loss(a, ad.Tensor(np.zeros(4)))


def test_shape_mismatches_rejected():
    a = ad.Tensor(np.zeros((2, 3)))
    b = ad.Tensor(np.zeros((3, 2)))
    for op in (ad.add, ad.sub, ad.mul):
        with pytest.raises(InvalidArgumentError):
            op(a, b)
    with pytest.raises(InvalidArgumentError):
        ad.matmul(a, ad.Tensor(np.zeros((2, 2))))
    with pytest.raises(InvalidArgumentError):
        ad.add_rows(a, ad.Tensor(np.zeros(2)))


def test_non_finite_inputs_rejected():
    with pytest.raises(InvalidArgumentError):
        ad.Tensor(np.array([1.0, float("nan")]))


def test_backward_requires_scalar():
    t = ad.Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(InvalidArgumentError):
        ad.backward(t)


def test_quadratic_gradient_identity():
    # loss = 0.5 * sum(w^2)  ->  dloss/dw == w, for random w.
    rng = np.random.default_rng(11)
    for _ in range(20):
        w = ad.Parameter(rng.normal(size=int(rng.integers(1, 30))).astype(np.float64))
        loss = ad.scale(ad.sum_all(ad.mul(w, w)), 0.5)
        ad.backward(loss)
        np.testing.assert_allclose(w.grad, w.data, rtol=1e-12, atol=0)


def test_gradients_accumulate_until_zeroed():
    w = ad.Parameter(np.array([2.0], dtype=np.float64))
    for _ in range(2):
        ad.backward(ad.sum_all(ad.mul(w, w)))
    np.testing.assert_allclose(w.grad, [8.0])  # 4.0 twice
    ad.zero_grads([w])
    np.testing.assert_allclose(w.grad, [0.0])


def test_no_grad_blocks_recording():
    w = ad.Parameter(np.ones(3, dtype=np.float64))
    with ad.no_grad():
        out = ad.sum_all(ad.mul(w, w))
    assert not out.requires_grad
    with pytest.raises(IllegalStateError):
        ad.backward(out)


def test_frozen_parameter_gets_no_gradient():
    w = ad.Parameter(np.ones(3, dtype=np.float64), trainable=False)
    u = ad.Parameter(np.ones(3, dtype=np.float64))
    loss = ad.sum_all(ad.add(ad.mul(w, w), u))
    ad.backward(loss)
    assert w.grad is None
    np.testing.assert_allclose(u.grad, np.ones(3))


def numeric_grad(fn, params, eps=1e-6):
    """Central-difference gradient of a scalar-valued fn(list of Parameters)."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(fn().data)
            flat[i] = orig - eps
            lo = float(fn().data)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / denom


def _random_graph(rng):
    """A small random composite: affine -> nonlinearity -> attention-ish mix -> loss."""
    m, k, n = (int(rng.integers(2, 5)) for _ in range(3))
    x = ad.Parameter(rng.normal(size=(m, k)))
    w = ad.Parameter(rng.normal(size=(k, n)))
    b = ad.Parameter(rng.normal(size=n))
    v = ad.Parameter(rng.normal(size=(m, n)))
    tgt = np.asarray(rng.integers(0, k, size=m))
    nonlin = [ad.tanh, ad.gelu, ad.relu][int(rng.integers(0, 3))]

    def fn():
        h = ad.add_rows(ad.matmul(x, w), b)
        h = nonlin(h)
        att = ad.row_softmax(ad.matmul(h, ad.transpose(v)))
        mixed = ad.matmul(att, v)
        ce = ad.cross_entropy(ad.matmul(mixed, ad.transpose(w)), tgt)
        reg = ad.scale(ad.mse_loss(h, v), 0.1)
        return ad.add(ce, reg)

    return fn, [x, w, b, v]


def test_gradcheck_random_graphs():
    rng = np.random.default_rng(1234)
    for _ in range(20):
        fn, params = _random_graph(rng)
        loss = fn()
        ad.backward(loss)
        numeric = numeric_grad(fn, params)
        for p, ng in zip(params, numeric):
            assert p.grad is not None
            assert rel_err(p.grad, ng) < 1e-4


def test_gradcheck_gather_concat_slice():
    rng = np.random.default_rng(99)
    for _ in range(10):
        table = ad.Parameter(rng.normal(size=(6, 4)))
        vec = ad.Parameter(rng.normal(size=4))
        idx = np.asarray(rng.integers(0, 6, size=5))

        def fn():
            rows = ad.gather(table, idx)
            stack = ad.concat_rows([rows, vec])
            mid = ad.slice_rows(stack, 1, 5)
            return ad.sum_all(ad.mul(mid, mid))

        loss = fn()
        ad.backward(loss)
        numeric = numeric_grad(fn, [table, vec])
        assert rel_err(table.grad, numeric[0]) < 1e-4
        assert rel_err(vec.grad, numeric[1]) < 1e-4


def test_gather_repeated_indices_accumulate():
    table = ad.Parameter(np.eye(3, dtype=np.float64))
    out = ad.gather(table, np.array([1, 1, 1]))
    ad.backward(ad.sum_all(out))
    np.testing.assert_allclose(table.grad[1], [3.0, 3.0, 3.0])
    np.testing.assert_allclose(table.grad[0], [0.0, 0.0, 0.0])


def test_dropout_zero_rate_identity_and_scaling():
    rng = np.random.default_rng(5)
    x = ad.Tensor(np.ones((4, 4)))
    assert ad.dropout(x, 0.0, rng) is x
    y = ad.dropout(x, 0.5, np.random.default_rng(5))
    vals = np.unique(y.data)
    assert set(vals.tolist()) <= {0.0, 2.0}


def test_determinism_same_seed_same_graph():
    def run():
        rng = np.random.default_rng(42)
        w = ad.Parameter(rng.normal(size=(3, 3)).astype(np.float32))
        x = ad.Tensor(rng.normal(size=(2, 3)).astype(np.float32))
        loss = ad.cross_entropy(ad.matmul(x, ad.transpose(w)), np.array([0, 1]))
        ad.backward(loss)
        return loss.data.copy(), w.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1.tobytes() == l2.tobytes()
    assert g1.tobytes() == g2.tobytes()

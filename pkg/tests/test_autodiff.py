"""Tape engine: op semantics, shape errors, gradient checks per kind."""
import numpy as np
import pytest

from liverec import autodiff as ad
from liverec.autodiff import FORWARD_OPS, ShapeError, Tape, Tensor, backward, forward_op

from oracles import fd_max_rel_error

FD_TOL = 1e-4


def test_sigmoid_at_zero():
    assert forward_op("sigmoid", np.zeros(1)).data[0] == 0.5


def test_softmax_shift_invariance():
    for c in (-3.0, 0.0, 17.5):
        out = ad.softmax(np.full(3, c)).data
        np.testing.assert_allclose(out, np.full(3, 1 / 3), atol=1e-15)


def test_multiply_elementwise_values():
    out = ad.multiply_elementwise(np.array([1.0, 2, 3]), np.array([4.0, 5, 6]))
    np.testing.assert_array_equal(out.data, [4.0, 10.0, 18.0])


def test_dot_linear_gradient():
    t = Tape()
    w = t.watch(np.array([1.0, -2.0, 0.5]))
    x = np.array([4.0, 5.0, 6.0])
    g = backward(t, ad.dot(w, x))
    np.testing.assert_array_equal(g[w.node_id], x)


def test_sigmoid_gradient_at_zero():
    t = Tape()
    s = t.watch(np.zeros(()))
    g = backward(t, ad.sigmoid(s))
    assert g[s.node_id] == pytest.approx(0.25)


def test_fanout_accumulates_both_paths():
    # f(x) = x*x built as multiply(x, x): df/dx = 2x from two contributions
    t = Tape()
    x = t.watch(np.array(3.0))
    g = backward(t, ad.multiply_elementwise(x, x))
    assert g[x.node_id] == pytest.approx(6.0)


def test_untouched_leaf_gets_zero():
    t = Tape()
    x = t.watch(np.array([1.0, 2.0]))
    unused = t.watch(np.array([[3.0, 4.0]]))
    g = backward(t, ad.reduce_sum(x))
    np.testing.assert_array_equal(g[unused.node_id], np.zeros((1, 2)))


def test_backward_rejects_nonscalar_root():
    t = Tape()
    x = t.watch(np.ones(3))
    with pytest.raises(ValueError, match="scalar"):
        backward(t, ad.multiply_elementwise(x, 2.0))


def test_backward_rejects_untracked_root():
    t = Tape()
    t.watch(np.ones(3))
    with pytest.raises(ValueError, match="tracked"):
        backward(t, Tensor(np.zeros(())))


def test_shape_errors_name_kind_and_shapes():
    with pytest.raises(ShapeError) as info:
        ad.matmul(np.ones((2, 3)), np.ones(4))
    assert info.value.kind == "matmul"
    assert info.value.shapes == ((2, 3), (4,))
    with pytest.raises(ShapeError):
        ad.dot(np.ones(3), np.ones(4))
    with pytest.raises(ShapeError):
        ad.add(np.ones(3), np.ones(4))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown op kind"):
        forward_op("convolve", np.ones(3))


def test_softmax_normalization_property():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = rng.uniform(-50, 50, size=rng.integers(1, 12))
        out = ad.softmax(x).data
        assert np.all(out >= 0)
        assert abs(out.sum() - 1.0) <= 1e-12


def test_outputs_finite_on_finite_inputs():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.uniform(-700, 700, size=6)
        for fn in (ad.sigmoid, ad.tanh, ad.softmax, ad.relu):
            assert np.all(np.isfinite(fn(x).data))


def test_dropout_mask_semantics():
    rng = np.random.default_rng(2)
    keep = 0.5
    x = rng.normal(size=10000)
    mask = (rng.random(10000) < keep) / keep
    out = ad.dropout_mask_apply(x, mask).data
    zeroed = out == 0.0
    assert 0.45 < zeroed.mean() < 0.55
    np.testing.assert_allclose(out[~zeroed], x[~zeroed] / keep)
    # eval mode is the identity: the model simply skips the op
    np.testing.assert_array_equal(ad.dropout_mask_apply(x, np.ones(10000)).data, x)


def test_tape_topological_order_invariant():
    t = Tape()
    x = t.watch(np.ones(3))
    y = ad.multiply_elementwise(ad.add(x, 1.0), x)
    ad.reduce_sum(y)
    for nid, (_, ids, _) in enumerate(t.nodes):
        for i in ids:
            assert i is None or i < nid


def test_concat_lifts_scalars():
    t = Tape()
    a = t.watch(np.array(2.0))
    b = t.watch(np.array([3.0, 4.0]))
    out = ad.concat([a, b])
    np.testing.assert_array_equal(out.data, [2.0, 3.0, 4.0])
    g = backward(t, ad.reduce_sum(ad.multiply_elementwise(out, np.array([1.0, 10.0, 100.0]))))
    assert g[a.node_id] == pytest.approx(1.0)
    np.testing.assert_array_equal(g[b.node_id], [10.0, 100.0])


def test_embedding_lookup_scatters_gradient():
    t = Tape()
    table = t.watch(np.arange(12.0).reshape(4, 3))
    idx = np.array([1, 1, 3])
    out = ad.embedding_lookup(table, idx)
    g = backward(t, ad.reduce_sum(out))
    expected = np.zeros((4, 3))
    expected[1] = 2.0
    expected[3] = 1.0
    np.testing.assert_array_equal(g[table.node_id], expected)
    with pytest.raises(IndexError):
        ad.embedding_lookup(table.data, np.array([4]))


# ---------------------------------------------------------------------------
# finite-difference suite, 100 random instances per op kind


def _vec(rng, lo=1, hi=9):
    return rng.normal(size=rng.integers(lo, hi))


def _cotangent_sum(out, rng):
    return ad.reduce_sum(ad.multiply_elementwise(out, rng.normal(size=out.shape)))


def _sampler(kind, rng):
    """Return (build(arrays) -> scalar Tensor, arrays) for one random instance."""
    if kind == "add" or kind == "multiply_elementwise":
        fn = FORWARD_OPS[kind]
        mode = rng.integers(3)
        if mode == 0:  # same shape
            shape = tuple(rng.integers(1, 5, size=rng.integers(1, 3)))
            arrays = [rng.normal(size=shape), rng.normal(size=shape)]
        elif mode == 1:  # scalar against tensor
            arrays = [rng.normal(size=()), rng.normal(size=rng.integers(1, 6))]
        else:  # outer (M,1) x (1,N)
            arrays = [rng.normal(size=(rng.integers(1, 5), 1)), rng.normal(size=(1, rng.integers(1, 5)))]
        return (lambda xs: _cotangent_sum(fn(xs[0], xs[1]), np.random.default_rng(7))), arrays
    if kind == "matmul":
        m, n, p = rng.integers(1, 5, size=3)
        case = rng.integers(3)
        if case == 0:
            arrays = [rng.normal(size=(m, n)), rng.normal(size=n)]
        elif case == 1:
            arrays = [rng.normal(size=(m, n)), rng.normal(size=(n, p))]
        else:
            arrays = [rng.normal(size=n), rng.normal(size=(n, p))]
        return (lambda xs: _cotangent_sum(ad.matmul(xs[0], xs[1]), np.random.default_rng(7))), arrays
    if kind == "concat":
        k = rng.integers(1, 4)
        arrays = [rng.normal(size=rng.integers(1, 5)) for _ in range(k)]
        return (lambda xs: _cotangent_sum(ad.concat(xs), np.random.default_rng(7))), arrays
    if kind == "sum":
        if rng.integers(2):
            arrays = [rng.normal(size=(rng.integers(1, 5), rng.integers(1, 5)))]
            return (lambda xs: _cotangent_sum(ad.reduce_sum(xs[0], axis=0), np.random.default_rng(7))), arrays
        arrays = [rng.normal(size=tuple(rng.integers(1, 5, size=rng.integers(1, 3))))]
        return (lambda xs: ad.reduce_sum(xs[0])), arrays
    if kind in ("sigmoid", "tanh", "softmax"):
        fn = FORWARD_OPS[kind]
        arrays = [rng.uniform(-3, 3, size=rng.integers(1, 8))]
        return (lambda xs: _cotangent_sum(fn(xs[0]), np.random.default_rng(7))), arrays
    if kind == "relu":
        x = rng.normal(size=rng.integers(1, 8))
        x[np.abs(x) < 0.05] = 0.5  # keep away from the kink
        return (lambda xs: _cotangent_sum(ad.relu(xs[0]), np.random.default_rng(7))), [x]
    if kind == "dot":
        n = rng.integers(1, 8)
        arrays = [rng.normal(size=n), rng.normal(size=n)]
        return (lambda xs: ad.dot(xs[0], xs[1])), arrays
    if kind == "log":
        arrays = [rng.uniform(0.1, 5.0, size=rng.integers(1, 8))]
        return (lambda xs: _cotangent_sum(ad.log(xs[0]), np.random.default_rng(7))), arrays
    if kind == "clamp":
        x = rng.uniform(-2, 2, size=rng.integers(1, 8))
        x[np.abs(np.abs(x) - 1.0) < 0.05] = 0.0  # keep away from the clamp edges
        return (lambda xs: _cotangent_sum(ad.clamp(xs[0], -1.0, 1.0), np.random.default_rng(7))), [x]
    if kind == "embedding_lookup":
        v, d = rng.integers(2, 6), rng.integers(1, 5)
        idx = rng.integers(0, v, size=rng.integers(1, 6))
        table = rng.normal(size=(v, d))
        return (lambda xs: _cotangent_sum(ad.embedding_lookup(xs[0], idx), np.random.default_rng(7))), [table]
    if kind == "dropout_mask_apply":
        n = rng.integers(1, 10)
        keep = 0.5
        mask = (rng.random(n) < keep) / keep
        x = rng.normal(size=n)
        return (lambda xs: _cotangent_sum(ad.dropout_mask_apply(xs[0], mask), np.random.default_rng(7))), [x]
    if kind == "reshape":
        m, n = rng.integers(1, 5, size=2)
        x = rng.normal(size=m * n)
        return (lambda xs: _cotangent_sum(ad.reshape(xs[0], (m, n)), np.random.default_rng(7))), [x]
    if kind == "transpose":
        x = rng.normal(size=(rng.integers(1, 5), rng.integers(1, 5)))
        return (lambda xs: _cotangent_sum(ad.transpose(xs[0]), np.random.default_rng(7))), [x]
    raise AssertionError(f"no sampler for {kind}")


@pytest.mark.parametrize("kind", sorted(FORWARD_OPS))
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(hash(kind) % (2**32))
    for _ in range(100):
        build, arrays = _sampler(kind, rng)
        assert fd_max_rel_error(build, arrays) <= FD_TOL

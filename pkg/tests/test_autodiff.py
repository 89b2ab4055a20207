import numpy as np
import pytest

from nightNeRF import autodiff as ad
from nightNeRF.errors import ConfigurationError, GradientError


def make_store(rng, **shapes):
    store = ad.ParameterStore()
    for name, shape in shapes.items():
        store.add(name, rng.normal(size=shape))
    return store


def test_grad_check_dense_chain(rng):
    store = make_store(rng, w=(3, 4), b=(4,))
    x = rng.normal(size=(5, 3))

    def fn(p):
        h = ad.add(ad.matmul(x, p['w']), p['b'])
        return ad.reduce_mean(ad.add(ad.square(ad.sin(h)), ad.softplus(h)))

    assert ad.grad_check(fn, store) < 1e-5


def test_grad_check_elementwise_ops(rng):
    store = make_store(rng, a=(4, 3), b=(4, 3))

    def fn(p):
        a, b = p['a'], p['b']
        pos = ad.add(ad.square(a), 0.5)
        terms = [
            ad.sigmoid(a), ad.exp(ad.mul(a, 0.3)), ad.log(pos), ad.sqrt(pos),
            ad.div(b, pos), ad.cos(b), ad.mul(a, b), ad.sub(a, b)]
        return ad.reduce_sum(ad.concat(terms, axis=-1))

    assert ad.grad_check(fn, store) < 1e-5


def test_grad_check_structural_ops(rng):
    store = make_store(rng, a=(5, 3), b=(5, 3))
    cond = rng.uniform(size=(5, 3)) > 0.5

    def fn(p):
        a, b = p['a'], p['b']
        c = ad.cross(a, b)
        n = ad.normalize(ad.add(a, 3.0))
        s = ad.softmax(b, axis=-1)
        w = ad.where(cond, a, ad.mul(b, 2.0))
        g = ad.take(a, [0, 0, 3], axis=0)
        cs = ad.cumsum_exclusive(ad.square(b), axis=-1)
        sl = ad.getitem(b, (slice(1, 4), slice(None)))
        return ad.add(
            ad.reduce_sum(ad.mul(c, n)),
            ad.add(ad.reduce_sum(ad.mul(s, w)),
                   ad.add(ad.reduce_sum(ad.square(g)),
                          ad.add(ad.reduce_mean(cs), ad.reduce_sum(ad.sin(sl))))))

    assert ad.grad_check(fn, store) < 1e-5


def test_grad_check_single_precision(rng):
    store = ad.ParameterStore()
    store.add('w', rng.normal(size=(3, 4)).astype(np.float32))
    store.add('b', rng.normal(size=4).astype(np.float32))
    x = rng.normal(size=(5, 3)).astype(np.float32)
    y = rng.uniform(size=(5, 4)).astype(np.float32)

    def fn(p):
        h = ad.sigmoid(ad.add(ad.matmul(x, p['w']), p['b']))
        return ad.reduce_mean(ad.square(ad.sub(h, y)))

    tape = ad.Tape()
    grads = tape.backward(fn(tape.bind(store)))
    assert all(g.dtype == np.float32 for g in grads.values())
    assert ad.grad_check(fn, store, eps=1e-2, floor=1e-2) < 1e-3


def test_backward_is_linear(rng):
    store = make_store(rng, w=(3, 2), b=(2,))
    x = rng.normal(size=(4, 3))
    alpha, beta = 0.7, -2.5

    def f(p):
        return ad.reduce_sum(ad.sin(ad.matmul(x, p['w'])))

    def g(p):
        return ad.reduce_mean(ad.square(ad.add(ad.matmul(x, p['w']), p['b'])))

    def gradient(fn):
        tape = ad.Tape()
        return tape.backward(fn(tape.bind(store)))

    grad_f, grad_g = gradient(f), gradient(g)
    combined = gradient(lambda p: ad.add(ad.mul(f(p), alpha), ad.mul(g(p), beta)))
    for name in ('w', 'b'):
        np.testing.assert_allclose(
            combined[name], alpha * grad_f[name] + beta * grad_g[name], rtol=1e-12, atol=1e-14)


def test_backward_needs_scalar(rng):
    store = make_store(rng, w=(3,))
    tape = ad.Tape()
    params = tape.bind(store)
    with pytest.raises(GradientError):
        tape.backward(ad.mul(params['w'], 2.0))


def test_backward_rejects_foreign_loss(rng):
    store = make_store(rng, w=(3,))
    tape, other = ad.Tape(), ad.Tape()
    loss = ad.reduce_sum(other.bind(store)['w'])
    with pytest.raises(GradientError):
        tape.backward(loss)
    with pytest.raises(GradientError):
        tape.backward(np.array(1.0))


def test_non_trainable_blocks_get_no_gradient(rng):
    store = make_store(rng, w=(3,))
    store.add('frozen', np.ones(3), trainable=False)
    tape = ad.Tape()
    params = tape.bind(store)
    assert isinstance(params['frozen'], np.ndarray)
    grads = tape.backward(ad.reduce_sum(ad.mul(params['w'], params['frozen'])))
    assert set(grads) == {'w'}
    np.testing.assert_array_equal(grads['w'], np.ones(3))


def test_unused_block_gets_zeros(rng):
    store = make_store(rng, w=(3,), unused=(2, 2))
    tape = ad.Tape()
    params = tape.bind(store)
    grads = tape.backward(ad.reduce_sum(params['w']))
    np.testing.assert_array_equal(grads['unused'], np.zeros((2, 2)))


def test_plain_arrays_without_tape():
    out = ad.add(np.ones(2), 1.0)
    assert isinstance(out, np.ndarray)
    np.testing.assert_array_equal(ad.softmax(np.zeros(4)), np.full(4, 0.25))


def test_disabled_tape_records_nothing(rng):
    store = make_store(rng, w=(3,))
    tape = ad.Tape(enabled=False)
    params = tape.bind(store)
    ad.reduce_sum(ad.square(params['w']))
    assert len(tape) == 0


def test_take_accumulates_repeated_indices():
    store = ad.ParameterStore()
    store.add('a', np.array([1.0, 2.0, 3.0]))
    tape = ad.Tape()
    params = tape.bind(store)
    grads = tape.backward(ad.reduce_sum(ad.take(params['a'], [0, 0, 1])))
    np.testing.assert_array_equal(grads['a'], [2.0, 1.0, 0.0])


def test_cumsum_exclusive_values():
    np.testing.assert_array_equal(
        ad.cumsum_exclusive(np.array([[1.0, 2.0, 3.0]])), [[0.0, 1.0, 3.0]])


def test_detach_cuts_gradient():
    store = ad.ParameterStore()
    store.add('p', np.array([1.5, -2.0]))
    tape = ad.Tape()
    p = tape.bind(store)['p']
    grads = tape.backward(ad.reduce_sum(ad.mul(p, ad.detach(p))))
    np.testing.assert_array_equal(grads['p'], [1.5, -2.0])


def test_reduce_mean_over_several_axes(rng):
    x = rng.normal(size=(2, 3, 4))
    np.testing.assert_allclose(ad.reduce_mean(x, axis=(0, 2)), x.mean(axis=(0, 2)))


def test_matmul_shape_mismatch():
    with pytest.raises(ConfigurationError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_duplicate_block():
    store = ad.ParameterStore()
    store.add('w', np.zeros(2))
    with pytest.raises(ConfigurationError):
        store.add('w', np.ones(2))


def test_store_copy_is_independent(rng):
    store = make_store(rng, w=(2, 2))
    copy = store.copy()
    copy.blocks['w'][0, 0] += 1.0
    assert store.blocks['w'][0, 0] != copy.blocks['w'][0, 0]
    assert store.count() == 4

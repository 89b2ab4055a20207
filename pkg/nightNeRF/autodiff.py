# ------------------------------------------------------------------------------
# Copyright (c) 2024 The nightNeRF developers

# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.

# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
# ------------------------------------------------------------------------------


"""
Reverse-mode differentiation on numpy arrays.

Every differentiable operation takes numpy arrays or `Var` objects. As soon as
one input is a `Var` bound to an enabled `Tape`, the operation appends a
`TapeRecord` to that tape and returns a `Var`; with plain arrays only it
returns a plain array and records nothing. The same model code therefore runs
both for training (on a tape) and for rendering (without one).
"""

import numpy as np
from scipy.special import expit

from traits.api import HasTraits, Dict, Str, Bool, Instance, Property

from .errors import ConfigurationError, GradientError


class TapeRecord:
    """ One primitive operation: input slots, output slot and its adjoint. """

    __slots__ = ('op', 'inputs', 'output', 'backward')

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward

    def __repr__(self):
        return 'TapeRecord(%s, %s -> %d)' % (self.op, self.inputs, self.output)


class Var:
    """ A value living in a slot of a `Tape`. """

    __slots__ = ('value', 'slot', 'tape')

    # Make numpy defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value, slot, tape):
        self.value = value
        self.slot = slot
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return 'Var(slot=%d, shape=%s)' % (self.slot, self.value.shape)


class Tape:
    """
    Topologically ordered list of the primitive operations of one forward pass.

    Slots are handed out in increasing order, so every slot is written exactly
    once and records can only refer to earlier slots.
    """

    def __init__(self, enabled=True):
        self.enabled = enabled
        self.records = []
        self._n_slots = 0
        # leaf slot -> parameter block name
        self.leaves = {}
        self._trainable = {}
        self._shapes = {}

    def __len__(self):
        return len(self.records)

    def _new_slot(self):
        slot = self._n_slots
        self._n_slots += 1
        return slot

    def variable(self, value):
        """ Register a leaf that is not a parameter block. """
        return Var(np.asarray(value), self._new_slot(), self)

    def param(self, store, name):
        """ Bind one parameter block of `store` as a leaf of this tape. """
        var = self.variable(store.blocks[name])
        self.leaves[var.slot] = name
        self._trainable[name] = store.trainable[name]
        self._shapes[name] = (var.value.shape, var.value.dtype)
        return var

    def bind(self, store):
        """
        Bind all blocks of `store`.

        Non-trainable blocks are handed out as plain arrays, so no gradient
        can reach them.
        """
        params = {}
        for name, value in store.blocks.items():
            if store.trainable[name]:
                params[name] = self.param(store, name)
            else:
                params[name] = value
        return params

    def record(self, op, inputs, value, backward):
        slot = self._new_slot()
        in_slots = tuple(x.slot if isinstance(x, Var) else None for x in inputs)
        self.records.append(TapeRecord(op, in_slots, slot, backward))
        return Var(value, slot, self)

    def backward(self, loss):
        """
        Gradients of the scalar `loss` with respect to every bound trainable
        block.

        Returns
        -------
        grads : dict
            Block name -> gradient array of the block's shape. Blocks without
            a path to `loss` receive zeros.
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise GradientError('The loss was not recorded on this tape.')
        if loss.value.size != 1:
            raise GradientError(
                'backward needs a scalar loss, got shape %s.' % (loss.value.shape,))

        adjoints = {loss.slot: np.ones_like(loss.value)}
        for rec in reversed(self.records):
            g = adjoints.pop(rec.output, None)
            if g is None:
                continue
            in_grads = rec.backward(g)
            for slot, in_grad in zip(rec.inputs, in_grads):
                if slot is None or in_grad is None:
                    continue
                if slot in adjoints:
                    adjoints[slot] = adjoints[slot] + in_grad
                else:
                    adjoints[slot] = in_grad

        grads = {}
        for slot, name in self.leaves.items():
            if not self._trainable[name]:
                continue
            g = adjoints.get(slot)
            if name in grads:
                if g is not None:
                    grads[name] = grads[name] + g
            else:
                grads[name] = g
        for name, g in grads.items():
            if g is None:
                shape, dtype = self._shapes[name]
                grads[name] = np.zeros(shape, dtype)
        return grads


def backward(tape, loss):
    """ Functional form of `Tape.backward`. """
    return tape.backward(loss)


# ------------------------------------------------------------------------------
# PARAMETERS
# ------------------------------------------------------------------------------


class ParameterStore(HasTraits):
    """ Named parameter blocks with a trainable flag each. """

    blocks = Dict(Str, Instance(np.ndarray))

    trainable = Dict(Str, Bool)

    n_parameters = Property

    def _get_n_parameters(self):
        return sum(block.size for block in self.blocks.values())

    def add(self, name, value, trainable=True):
        if name in self.blocks:
            raise ConfigurationError('Parameter block %s exists already.' % name)
        self.blocks[name] = np.array(value)
        self.trainable[name] = trainable

    def __getitem__(self, name):
        return self.blocks[name]

    def __contains__(self, name):
        return name in self.blocks

    def names(self, prefix=''):
        return [name for name in self.blocks if name.startswith(prefix)]

    def count(self, prefix=''):
        """ Number of scalars in all blocks whose name starts with `prefix`. """
        return sum(self.blocks[name].size for name in self.names(prefix))

    def astype(self, dtype):
        for name in self.blocks:
            self.blocks[name] = self.blocks[name].astype(dtype)

    def copy(self):
        new = ParameterStore()
        for name, value in self.blocks.items():
            new.add(name, value.copy(), self.trainable[name])
        return new

    def as_dict(self):
        """ Block metadata, without the values. """
        return {
            name: {
                'shape': list(value.shape),
                'trainable': self.trainable[name]}
            for name, value in self.blocks.items()}


# ------------------------------------------------------------------------------
# PRIMITIVES
# ------------------------------------------------------------------------------


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var) and x.tape.enabled:
            return x.tape
    return None


def value_of(x):
    """ The numpy value behind a `Var`, or `x` itself. """
    return x.value if isinstance(x, Var) else x


def _apply(op, inputs, value, backward):
    tape = _tape_of(*inputs)
    if tape is None:
        return value
    return tape.record(op, inputs, value, backward)


def _unbroadcast(g, shape):
    """ Sum `g` down to `shape`, undoing numpy broadcasting. """
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def detach(x):
    """ Forward value of `x` with the gradient path cut. """
    return np.array(value_of(x))


def add(a, b):
    va, vb = value_of(a), value_of(b)
    sa, sb = np.shape(va), np.shape(vb)
    return _apply(
        'add', (a, b), va + vb,
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    va, vb = value_of(a), value_of(b)
    sa, sb = np.shape(va), np.shape(vb)
    return _apply(
        'sub', (a, b), va - vb,
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    va, vb = value_of(a), value_of(b)
    sa, sb = np.shape(va), np.shape(vb)
    return _apply(
        'mul', (a, b), va * vb,
        lambda g: (_unbroadcast(g * vb, sa), _unbroadcast(g * va, sb)))


def div(a, b):
    va, vb = value_of(a), value_of(b)
    sa, sb = np.shape(va), np.shape(vb)
    out = va / vb
    return _apply(
        'div', (a, b), out,
        lambda g: (_unbroadcast(g / vb, sa), _unbroadcast(-g * out / vb, sb)))


def neg(a):
    return _apply('neg', (a,), -value_of(a), lambda g: (-g,))


def matmul(a, b):
    """ Product of two 2D arrays. """
    va, vb = value_of(a), value_of(b)
    if va.ndim != 2 or vb.ndim != 2 or va.shape[1] != vb.shape[0]:
        raise ConfigurationError(
            'Cannot multiply shapes %s and %s.' % (va.shape, vb.shape))
    return _apply(
        'matmul', (a, b), va @ vb,
        lambda g: (g @ vb.T, va.T @ g))


def exp(a):
    out = np.exp(value_of(a))
    return _apply('exp', (a,), out, lambda g: (g * out,))


def log(a):
    va = value_of(a)
    return _apply('log', (a,), np.log(va), lambda g: (g / va,))


def sqrt(a):
    out = np.sqrt(value_of(a))
    return _apply('sqrt', (a,), out, lambda g: (0.5 * g / out,))


def square(a):
    va = value_of(a)
    return _apply('square', (a,), va * va, lambda g: (2.0 * g * va,))


def absolute(a):
    va = value_of(a)
    return _apply('abs', (a,), np.abs(va), lambda g: (g * np.sign(va),))


def sin(a):
    va = value_of(a)
    return _apply('sin', (a,), np.sin(va), lambda g: (g * np.cos(va),))


def cos(a):
    va = value_of(a)
    return _apply('cos', (a,), np.cos(va), lambda g: (-g * np.sin(va),))


def relu(a):
    va = value_of(a)
    return _apply('relu', (a,), np.maximum(va, 0), lambda g: (g * (va > 0),))


def sigmoid(a):
    out = expit(value_of(a))
    return _apply('sigmoid', (a,), out, lambda g: (g * out * (1 - out),))


def softplus(a):
    va = value_of(a)
    return _apply(
        'softplus', (a,), np.logaddexp(0, va), lambda g: (g * expit(va),))


def identity(a):
    return a


def elementwise(a, fn, dfn, op='elementwise'):
    """ Custom elementwise primitive with value `fn` and derivative `dfn`. """
    va = value_of(a)
    return _apply(op, (a,), fn(va), lambda g: (g * dfn(va),))


def reduce_sum(a, axis=None, keepdims=False):
    va = value_of(a)
    shape = va.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _apply('sum', (a,), np.sum(va, axis=axis, keepdims=keepdims), backward)


def reduce_mean(a, axis=None, keepdims=False):
    va = value_of(a)
    if axis is None:
        n = va.size
    else:
        n = int(np.prod([va.shape[i] for i in np.atleast_1d(axis)]))
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def cumsum_exclusive(a, axis=-1):
    """ Cumulative sum along `axis` that starts at 0 and leaves out the last term. """
    va = value_of(a)
    inclusive = np.cumsum(va, axis=axis)
    out = inclusive - va

    def backward(g):
        # Adjoint of an exclusive prefix sum is an exclusive suffix sum
        suffix = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
        return (suffix - g,)

    return _apply('cumsum', (a,), out, backward)


def reshape(a, shape):
    va = value_of(a)
    old = va.shape
    return _apply(
        'reshape', (a,), va.reshape(shape), lambda g: (g.reshape(old),))


def concat(xs, axis=-1):
    values = [value_of(x) for x in xs]
    axis_ = axis % values[0].ndim
    bounds = np.cumsum([v.shape[axis_] for v in values])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis_))

    return _apply('concat', tuple(xs), np.concatenate(values, axis=axis_), backward)


def getitem(a, key):
    """ Basic (slice) indexing. """
    va = value_of(a)

    def backward(g):
        out = np.zeros_like(va)
        out[key] = g
        return (out,)

    return _apply('getitem', (a,), va[key], backward)


def take(a, indices, axis=0):
    """ Gather along `axis`; repeated indices accumulate their gradients. """
    va = value_of(a)
    indices = np.asarray(indices)

    def backward(g):
        out = np.zeros_like(va)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (out,)

    return _apply('take', (a,), np.take(va, indices, axis=axis), backward)


def where(cond, a, b):
    va, vb = value_of(a), value_of(b)
    sa, sb = np.shape(va), np.shape(vb)
    cond = np.asarray(cond, dtype=bool)
    return _apply(
        'where', (a, b), np.where(cond, va, vb),
        lambda g: (_unbroadcast(np.where(cond, g, 0), sa),
                   _unbroadcast(np.where(cond, 0, g), sb)))


def softmax(a, axis=-1):
    va = value_of(a)
    shifted = np.exp(va - np.max(va, axis=axis, keepdims=True))
    out = shifted / np.sum(shifted, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _apply('softmax', (a,), out, backward)


def cross(a, b):
    """ Cross product along the last axis (length 3). """
    va, vb = value_of(a), value_of(b)
    sa, sb = np.shape(va), np.shape(vb)
    return _apply(
        'cross', (a, b), np.cross(va, vb),
        lambda g: (_unbroadcast(np.cross(vb, g), sa),
                   _unbroadcast(np.cross(g, va), sb)))


def dot(a, b, keepdims=True):
    """ Inner product along the last axis. """
    return reduce_sum(mul(a, b), axis=-1, keepdims=keepdims)


def normalize(a):
    """ Scale vectors along the last axis to unit length. """
    return div(a, sqrt(dot(a, a)))


# ------------------------------------------------------------------------------
# GRADIENT CHECK
# ------------------------------------------------------------------------------


def grad_check(fn, store, eps=1e-6, n_samples=None, seed=0, floor=1e-12):
    """
    Compare reverse-mode gradients of `fn` against central differences.

    Parameters
    ----------
    fn : callable
        Maps a dict of parameter blocks (`Var` objects or arrays) to a scalar.
        Must be deterministic.
    store : ParameterStore
    eps : float > 0
        Finite difference step.
    n_samples : int or None
        Number of coordinates to check per block. None checks all of them.
    seed : int
        Seed for picking the coordinates.
    floor : float > 0
        Gradients smaller than this are compared absolutely. Raise it for
        single precision, where tiny gradients drown in roundoff.

    Returns
    -------
    error : float
        max |analytic - numeric| / max(floor, |analytic| + |numeric|)
    """
    if not eps > 0:
        raise ValueError('eps must be positive, got %r' % eps)
    tape = Tape()
    grads = tape.backward(fn(tape.bind(store)))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, analytic in grads.items():
        block = store.blocks[name]
        flat = block.reshape(-1)
        coords = np.arange(flat.size)
        if n_samples is not None and n_samples < flat.size:
            coords = rng.choice(flat.size, size=n_samples, replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            x_plus = float(flat[idx])
            f_plus = float(np.sum(value_of(fn(store.blocks))))
            flat[idx] = orig - eps
            x_minus = float(flat[idx])
            f_minus = float(np.sum(value_of(fn(store.blocks))))
            flat[idx] = orig
            # the stored step, which differs from 2 eps after rounding
            numeric = (f_plus - f_minus) / (x_plus - x_minus)
            a = float(analytic.reshape(-1)[idx])
            error = abs(a - numeric) / max(floor, abs(a) + abs(numeric))
            worst = max(worst, error)
    return worst

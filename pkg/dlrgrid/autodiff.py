"""Reverse-mode automatic differentiation over dense float64 matrices.

A :class:`Tape` records a Wengert list: every primitive appends
``(output, name, inputs, attrs)`` and stores its forward value. ``backward`` walks
the list in exact reverse order and applies each primitive's vector-Jacobian
product, summing gradients that flow into shared nodes.
"""
import json
import logging
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.special import expit

from dlrgrid import constants
from dlrgrid.exceptions import CheckpointVersionError, NonFiniteGradient, NonScalarLoss, ShapeMismatch
from dlrgrid.schema import ValidationError

logger = logging.getLogger(__name__)

Primitive = namedtuple('Primitive', ['forward', 'vjp', 'check'])

PRIMITIVES = {}


def defprimitive(name, forward, vjp, check=None):
    PRIMITIVES[name] = Primitive(forward, vjp, check)


class Param:
    __slots__ = ('name', '_values', 'trainable')

    def __init__(self, name, values, trainable=True):
        self.name = name
        self._values = np.array(values, dtype=np.float64)
        self.trainable = trainable

    @property
    def shape(self):
        return self._values.shape

    @property
    def values(self):
        return self._values

    @values.setter
    def values(self, new_values):
        new_values = np.asarray(new_values, dtype=np.float64)
        if new_values.shape != self._values.shape:
            raise ShapeMismatch(f'assignment to {self.name}', self._values.shape, new_values.shape)
        self._values = new_values.copy()

    @property
    def size(self):
        return self._values.size

    def __repr__(self):
        return f'Param({self.name!r}, shape={self.shape}, trainable={self.trainable})'


class Node:
    __slots__ = ('tape', 'index')

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.values[self.index]

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f'Node({self.index}, shape={self.shape})'


class Tape:
    def __init__(self):
        self.values = []
        self.records = []
        self.requires_grad = []
        self.param_nodes = {}
        self.pinball_residuals = []

    def _push(self, value, requires_grad):
        self.values.append(value)
        self.requires_grad.append(requires_grad)
        return Node(self, len(self.values) - 1)

    def constant(self, value):
        if not sparse.issparse(value):
            value = np.asarray(value, dtype=np.float64)
        return self._push(value, False)

    def param(self, param: Param):
        """Node for a parameter; watching the same parameter twice returns the same node."""
        node = self.param_nodes.get(param.name)
        if node is None:
            node = self._push(param.values, param.trainable)
            self.param_nodes[param.name] = node
        return node

    def lift(self, x):
        if isinstance(x, Node):
            if x.tape is not self:
                raise ValueError('Node belongs to another tape')
            return x
        return self.constant(x)

    def apply(self, name, *inputs, **attrs):
        primitive = PRIMITIVES[name]
        nodes = [self.lift(x) for x in inputs]
        values = [n.value for n in nodes]
        if primitive.check is not None:
            primitive.check(*values, **attrs)
        out = primitive.forward(*values, **attrs)
        node = self._push(out, any(self.requires_grad[n.index] for n in nodes))
        self.records.append((node.index, name, tuple(n.index for n in nodes), attrs))
        if name == 'pinball_elem':
            self.pinball_residuals.append(values[0] - values[1])
        return node

    def backward(self, loss, params=()):
        """Gradients of a scalar loss for every watched trainable parameter.

        Parameters listed in ``params`` but never watched (or not reachable from the
        loss) receive exact zeros.
        """
        loss_value = loss.value
        if np.ndim(loss_value) != 0 and np.size(loss_value) != 1:
            raise NonScalarLoss(np.shape(loss_value))

        grads = [None] * len(self.values)
        grads[loss.index] = np.ones_like(loss_value, dtype=np.float64)

        for out_index, name, input_indices, attrs in reversed(self.records):
            g = grads[out_index]
            if g is None or not self.requires_grad[out_index]:
                continue
            input_values = [self.values[i] for i in input_indices]
            input_grads = PRIMITIVES[name].vjp(g, self.values[out_index], *input_values, **attrs)
            for i, ig in zip(input_indices, input_grads):
                if ig is None or not self.requires_grad[i]:
                    continue
                grads[i] = ig if grads[i] is None else grads[i] + ig

        result = {}
        for name, node in self.param_nodes.items():
            g = grads[node.index]
            result[name] = np.zeros_like(node.value) if g is None else np.asarray(g, dtype=np.float64)
        for p in params:
            if p.trainable and p.name not in result:
                result[p.name] = np.zeros_like(p.values)
        return result


def backward(tape: Tape, loss: Node, params=()):
    return tape.backward(loss, params)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise ValueError('At least one operand must be a tape node')


# Shape checks

def _check_matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch('matmul', a.shape, b.shape)


def _check_sparse_dense(s, b):
    if not sparse.issparse(s):
        raise TypeError('sparse_dense_matmul expects the sparse operand first')
    if sparse.issparse(b) or b.ndim != 2 or s.shape[1] != b.shape[0]:
        raise ShapeMismatch('sparse_dense_matmul', s.shape, np.shape(b))


def _check_same(name):
    def check(a, b, **attrs):
        if np.shape(a) != np.shape(b):
            raise ShapeMismatch(name, np.shape(a), np.shape(b))
    return check


def _check_row_broadcast(a, b):
    if a.ndim != 2 or b.size != a.shape[1] or b.ndim > 2 or (b.ndim == 2 and b.shape[0] != 1):
        raise ShapeMismatch('row_broadcast_add', a.shape, b.shape)


def _check_concat(*xs):
    for x in xs:
        if x.ndim != 2 or xs[0].ndim != 2 or x.shape[0] != xs[0].shape[0]:
            raise ShapeMismatch('concat_columns', xs[0].shape, x.shape)


def _check_pinball(pred, target, levels):
    if np.shape(pred) != np.shape(target):
        raise ShapeMismatch('pinball_elem', np.shape(pred), np.shape(target))
    try:
        np.broadcast_shapes(np.shape(pred), np.shape(levels))
    except ValueError:
        raise ShapeMismatch('pinball_elem', np.shape(pred), np.shape(levels))


# Vector-Jacobian products

def _split_columns(g, out, *xs):
    bounds = np.cumsum([x.shape[1] for x in xs])[:-1]
    return tuple(np.split(g, bounds, axis=1))


def _slice_rows_vjp(g, out, a, rows):
    full = np.zeros_like(a)
    np.add.at(full, rows, g)
    return (full,)


def _pinball_forward(pred, target, levels):
    diff = target - pred
    return np.where(pred <= target, levels * diff, (1.0 - levels) * (-diff))


def _pinball_vjp(g, out, pred, target, levels):
    slope = np.where(pred < target, -levels, np.where(pred > target, 1.0 - levels, 0.0))
    slope = np.broadcast_to(slope, np.shape(pred))
    return (g * slope, -g * slope)


defprimitive('matmul', lambda a, b: a @ b,
             lambda g, out, a, b: (g @ b.T, a.T @ g), _check_matmul)
defprimitive('sparse_dense_matmul', lambda s, b: np.asarray(s @ b),
             lambda g, out, s, b: (None, np.asarray(s.T @ g)), _check_sparse_dense)
defprimitive('add', lambda a, b: a + b,
             lambda g, out, a, b: (g, g), _check_same('add'))
defprimitive('row_broadcast_add', lambda a, b: a + b.reshape(1, -1),
             lambda g, out, a, b: (g, g.sum(axis=0).reshape(b.shape)), _check_row_broadcast)
defprimitive('sigmoid', lambda a: expit(a),
             lambda g, out, a: (g * out * (1.0 - out),))
defprimitive('tanh', lambda a: np.tanh(a),
             lambda g, out, a: (g * (1.0 - out * out),))
defprimitive('hadamard', lambda a, b: a * b,
             lambda g, out, a, b: (g * b, g * a), _check_same('hadamard'))
defprimitive('concat_columns', lambda *xs: np.hstack(xs), _split_columns, _check_concat)
defprimitive('slice_rows', lambda a, rows: a[rows], _slice_rows_vjp)
defprimitive('scalar_scale', lambda a, scale: a * scale,
             lambda g, out, a, scale: (g * scale,))
defprimitive('sum', lambda a: np.asarray(a.sum()),
             lambda g, out, a: (np.full_like(a, g),))
defprimitive('mean', lambda a: np.asarray(a.mean()),
             lambda g, out, a: (np.full_like(a, g / a.size),))
defprimitive('pinball_elem', _pinball_forward, _pinball_vjp, _check_pinball)


def matmul(a, b):
    return _tape_of(a, b).apply('matmul', a, b)


def sparse_dense_matmul(s, b):
    return _tape_of(s, b).apply('sparse_dense_matmul', s, b)


def add(a, b):
    return _tape_of(a, b).apply('add', a, b)


def row_broadcast_add(a, b):
    return _tape_of(a, b).apply('row_broadcast_add', a, b)


def sigmoid(a):
    return a.tape.apply('sigmoid', a)


def tanh(a):
    return a.tape.apply('tanh', a)


def hadamard(a, b):
    return _tape_of(a, b).apply('hadamard', a, b)


def concat_columns(*xs):
    return _tape_of(*xs).apply('concat_columns', *xs)


def slice_rows(a, rows):
    return a.tape.apply('slice_rows', a, rows=np.asarray(rows) if not isinstance(rows, slice) else rows)


def scalar_scale(a, scale):
    return a.tape.apply('scalar_scale', a, scale=float(scale))


def sum(a):
    return a.tape.apply('sum', a)


def mean(a):
    return a.tape.apply('mean', a)


def pinball_elem(pred, target, levels):
    return _tape_of(pred, target).apply('pinball_elem', pred, target, levels=np.asarray(levels, dtype=np.float64))


ABSOLUTE_FALLBACK = 1e-8


def relative_error(analytic, numeric):
    """Relative error, or the absolute error when both magnitudes are below ``ABSOLUTE_FALLBACK``."""
    scale = max(abs(analytic), abs(numeric))
    if scale < ABSOLUTE_FALLBACK:
        return abs(analytic - numeric)
    return abs(analytic - numeric) / scale


def grad_check(f, params, epsilon=1e-5):
    """Worst relative error between tape gradients and central differences.

    ``f(tape)`` must build a scalar loss node from ``tape.param(p)`` for ``p`` in
    ``params``. Coordinates whose perturbation moves a pinball residual across, or
    within ``10 * epsilon`` of, its kink are skipped.
    """
    if not 0 < epsilon <= 1e-2:
        raise ValidationError(f'Invalid grad_check epsilon {epsilon}. It must lie in (0, 1e-2]')

    tape = Tape()
    analytic = tape.backward(f(tape), params)

    def evaluate():
        t = Tape()
        value = float(f(t).value)
        return value, t.pinball_residuals

    worst = 0.0
    for p in params:
        if not p.trainable:
            continue
        flat = p.values.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + epsilon
            f_plus, r_plus = evaluate()
            flat[index] = original - epsilon
            f_minus, r_minus = evaluate()
            flat[index] = original
            if _near_kink(r_plus, r_minus, epsilon):
                continue
            numeric = (f_plus - f_minus) / (2 * epsilon)
            worst = max(worst, relative_error(analytic[p.name].reshape(-1)[index], numeric))
    return worst


def _near_kink(r_plus, r_minus, epsilon):
    for a, b in zip(r_plus, r_minus):
        changed = a != b
        if not np.any(changed):
            continue
        if np.any(np.sign(a[changed]) != np.sign(b[changed])):
            return True
        if min(np.abs(a[changed]).min(), np.abs(b[changed]).min()) < 10 * epsilon:
            return True
    return False


@dataclass
class AdamState:
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adamw_step(params, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, weight_decay=1e-4, eps=1e-8):
    """One AdamW update in place; weight decay is decoupled from the moment estimates."""
    trainable = [p for p in params if p.trainable]
    for p in trainable:
        if not np.all(np.isfinite(grads[p.name])):
            raise NonFiniteGradient(p.name)

    state.step += 1
    t = state.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for p in trainable:
        g = grads[p.name]
        m = state.first_moment.get(p.name)
        v = state.second_moment.get(p.name)
        if m is None:
            m = np.zeros_like(p.values)
            v = np.zeros_like(p.values)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.first_moment[p.name] = m
        state.second_moment[p.name] = v
        update = (m / correction1) / (np.sqrt(v / correction2) + eps)
        p.values = p.values - lr * weight_decay * p.values - lr * update
    return params, state


def save_params(path, params, meta=None):
    document = {
        'format': constants.checkpoint_format,
        'version': constants.checkpoint_version,
        'params': [
            {
                'name': p.name,
                'shape': list(p.shape),
                'trainable': p.trainable,
                'values': p.values.reshape(-1).tolist(),
            } for p in params
        ],
        'meta': meta or {},
    }
    Path(path).write_text(json.dumps(document))
    logger.info("Saved %d parameters to %s", len(params), path)


def load_params(path):
    document = json.loads(Path(path).read_text())
    if document.get('format') != constants.checkpoint_format:
        raise ValidationError(f'Invalid checkpoint {path}. Unknown format "{document.get("format")}"')
    if document.get('version') != constants.checkpoint_version:
        raise CheckpointVersionError(document.get('version'), constants.checkpoint_version)
    params = [
        Param(item['name'], np.asarray(item['values'], dtype=np.float64).reshape(item['shape']),
              item.get('trainable', True))
        for item in document['params']
    ]
    return params, document.get('meta', {})

"""Dense float64 tensors with reverse-mode differentiation.

Every operation on a tensor that requires a gradient records its parents and a
closure mapping the output gradient to the parents' gradients. ``backward``
walks that record in reverse topological order. Recording is confined to the
thread that builds the graph.
"""
import threading
from contextlib import contextmanager

import numpy as np

from mgt.exceptions import GradientException, ShapeMismatchException

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, 'enabled', True)


@contextmanager
def no_grad():
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    def __repr__(self):
        name = f' {self.name}' if self.name else ''
        return f'Tensor{name}(shape={self.shape}, requires_grad={self.requires_grad})'

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        backward(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce_max(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _record(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn

    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad


def _topological_order(root: Tensor) -> list:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue

        if id(node) in visited:
            continue

        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    return order


def backward(loss: Tensor):
    """Accumulate ∂loss/∂leaf into ``grad`` of every recorded leaf tensor."""
    if loss.size != 1:
        raise GradientException(f'backward needs a scalar loss, got shape {loss.shape}', 'loss')

    if not loss.requires_grad:
        raise GradientException('loss was not produced by recorded operations', 'loss')

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue

        if node._backward is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue

        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue

            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _record(
        out, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _record(
        a.data ** exponent, (a,),
        lambda g: (g * exponent * a.data ** (exponent - 1),),
    )


def exp(a) -> Tensor:
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a) -> Tensor:
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    out = np.empty_like(a.data)
    positive = a.data >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-a.data[positive]))
    exp_x = np.exp(a.data[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    """log(1 + eᵃ) evaluated without overflow."""
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _record(out, (a,), lambda g: (g * sigmoid(Tensor(x)).data,))


def xlogx(a) -> Tensor:
    """x·ln x with the continuous extension 0·ln 0 = 0."""
    x = a.data
    positive = x > 0
    safe = np.where(positive, x, 1.0)
    out = np.where(positive, x * np.log(safe), 0.0)
    return _record(out, (a,), lambda g: (g * np.where(positive, np.log(safe) + 1.0, 0.0),))


def frobenius_norm(a) -> Tensor:
    norm = np.sqrt(np.sum(a.data ** 2))

    def grad_fn(g):
        if norm == 0.0:
            return (np.zeros_like(a.data),)
        return (g * a.data / norm,)

    return _record(norm, (a,), grad_fn)


def softmax(a, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _record(
        out, (a,),
        lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),),
    )


# reductions and shape

def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(out, (a,), grad_fn)


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return reduce_sum(a, axis, keepdims) * (1.0 / count)


def reduce_max(a, axis=None, keepdims=False) -> Tensor:
    out = a.data.max(axis=axis, keepdims=True)
    mask = (a.data == out).astype(np.float64)
    mask /= mask.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (mask * g,)

    result = out if keepdims else (out.reshape(()) if axis is None else np.squeeze(out, axis=axis))
    return _record(result, (a,), grad_fn)


def reshape(a, shape) -> Tensor:
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = np.argsort(axes)
    return _record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(tensor) for tensor in tensors]
    sizes = [tensor.shape[axis] for tensor in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _record(
        np.concatenate([tensor.data for tensor in tensors], axis=axis), tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def getitem(a, index) -> Tensor:
    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _record(a.data[index], (a,), grad_fn)


def take_rows(a, index: np.ndarray) -> Tensor:
    """Gather rows ``a[index]``; the adjoint of ``scatter_rows``."""
    index = np.asarray(index, dtype=np.int64)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _record(a.data[index], (a,), grad_fn)


def scatter_rows(a, index: np.ndarray, rows: int) -> Tensor:
    """``out[index[k]] += a[k]`` into ``rows`` zero-initialized rows."""
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((rows,) + a.shape[1:])
    np.add.at(out, index, a.data)
    return _record(out, (a,), lambda g: (g[index],))


# contractions

def _parse_subscripts(subscripts: str, operands: int):
    if '->' not in subscripts:
        raise ShapeMismatchException('einsum needs explicit output subscripts', subscripts)

    inputs, output = subscripts.replace(' ', '').split('->')
    inputs = inputs.split(',')
    if len(inputs) != operands:
        raise ShapeMismatchException(f'{len(inputs)} subscripts for {operands} operands', subscripts)

    for term in inputs:
        if len(set(term)) != len(term):
            raise ShapeMismatchException('repeated index within one operand; contract with a delta instead', subscripts)

    return inputs, output


def einsum(subscripts: str, *operands) -> Tensor:
    """Explicit-mode Einstein summation with distinct indices per operand."""
    operands = [as_tensor(operand) for operand in operands]
    inputs, output = _parse_subscripts(subscripts, len(operands))
    try:
        out = np.einsum(subscripts, *[operand.data for operand in operands])
    except ValueError as error:
        raise ShapeMismatchException(str(error), subscripts) from error

    def grad_fn(g):
        grads = []
        for k, operand in enumerate(operands):
            if not operand.requires_grad:
                grads.append(None)
                continue

            others = [(term, operands[j].data) for j, term in enumerate(inputs) if j != k]
            available = set(output).union(*[set(term) for term, _ in others])
            target = ''.join(letter for letter in inputs[k] if letter in available)
            expression = ','.join([output] + [term for term, _ in others]) + '->' + target
            partial = np.einsum(expression, g, *[data for _, data in others])
            for axis, letter in enumerate(inputs[k]):
                if letter not in available:
                    partial = np.expand_dims(partial, axis)

            grads.append(np.broadcast_to(partial, operand.shape).copy())

        return tuple(grads)

    return _record(out, operands, grad_fn)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchException(f'cannot multiply {a.shape} by {b.shape}', 'matmul')

    return _record(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))

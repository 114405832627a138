"""Neural building blocks over ``mgt.autograd`` tensors.

Weights follow the ``W ∈ R^{out×in}`` convention, so an affine map is
``x Wᵀ + b``. Every block registers its parameters in a ``ParamStore`` under a
dotted name prefix at construction time.
"""
import math
from dataclasses import dataclass

import numpy as np

from mgt import autograd as ag
from mgt.autograd import Tensor
from mgt.exceptions import ConfigException, ShapeMismatchException
from mgt.params import ParamStore

GATE_EPSILON = 1e-6
NORM_EPSILON = 1e-5
NORM_MOMENTUM = 0.1


@dataclass
class Mode:
    """Forward-pass mode: ``train`` enables dropout and batch statistics."""
    train: bool = False
    rng: np.random.Generator | None = None


def _check_width(x: Tensor, width: int, location: str):
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeMismatchException(f'expected (rows, {width}), got {x.shape}', location)


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = ag.einsum('ni,oi->no', x, weight)
    return out if bias is None else out + bias


class Linear:
    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, bias: bool = True):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = store.weight(f'{name}.weight', out_dim, in_dim)
        self.bias = store.constant(f'{name}.bias', (out_dim,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        _check_width(x, self.in_dim, self.name)
        return affine(x, self.weight, self.bias)


class FeedForward:
    """Linear → ReLU → dropout → Linear."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden_dim: int, out_dim: int,
                 dropout_rate: float = 0.0):
        self.first = Linear(store, f'{name}.0', in_dim, hidden_dim)
        self.second = Linear(store, f'{name}.1', hidden_dim, out_dim)
        self.dropout_rate = dropout_rate

    def __call__(self, x: Tensor, mode: Mode = Mode()) -> Tensor:
        hidden = dropout(ag.relu(self.first(x)), self.dropout_rate, mode)
        return self.second(hidden)


def dropout(x: Tensor, rate: float, mode: Mode) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ConfigException(f'dropout rate must lie in [0, 1), got {rate}', 'rate')

    if not mode.train or rate == 0.0:
        return x

    if mode.rng is None:
        raise ConfigException('train-mode dropout needs a seeded generator', 'mode.rng')

    keep = (mode.rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * keep


def self_attention(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor,
                   attention_dropout: float = 0.0, mode: Mode = Mode(), weights_out: list | None = None) -> Tensor:
    """H = softmax(Q Kᵀ / √d_o) V with Q = X W_qᵀ, K = X W_kᵀ, V = X W_vᵀ."""
    if not (wq.shape == wk.shape == wv.shape) or wq.ndim != 2:
        raise ShapeMismatchException(f'projections {wq.shape}, {wk.shape}, {wv.shape} differ', 'self_attention')

    _check_width(x, wq.shape[1], 'self_attention')
    d_out = wq.shape[0]
    queries = affine(x, wq)
    keys = affine(x, wk)
    values = affine(x, wv)
    logits = ag.einsum('id,jd->ij', queries, keys) * (1.0 / math.sqrt(d_out))
    weights = ag.softmax(logits, axis=-1)
    if weights_out is not None:
        weights_out.append(weights.data)

    weights = dropout(weights, attention_dropout, mode)
    return ag.einsum('ij,jd->id', weights, values)


def multi_head_attention(x: Tensor, heads, output: Linear,
                         attention_dropout: float = 0.0, mode: Mode = Mode()) -> Tensor:
    """``heads`` is a sequence of ``(wq, wk, wv)``; outputs are concatenated, then mapped."""
    if not heads:
        raise ShapeMismatchException('at least one head is required', 'heads')

    outputs = [self_attention(x, wq, wk, wv, attention_dropout, mode) for wq, wk, wv in heads]
    concatenated = outputs[0] if len(outputs) == 1 else ag.concat(outputs, axis=1)
    return output(concatenated)


class MultiHeadAttention:
    def __init__(self, store: ParamStore, name: str, dim: int, heads: int, attention_dropout: float = 0.0):
        if heads < 1 or dim % heads:
            raise ConfigException(f'width {dim} is not divisible into {heads} heads', f'{name}.heads')

        head_dim = dim // heads
        self.heads = [
            tuple(store.weight(f'{name}.head{index}.{role}', head_dim, dim) for role in ('wq', 'wk', 'wv'))
            for index in range(heads)
        ]
        self.output = Linear(store, f'{name}.out', head_dim * heads, dim)
        self.attention_dropout = attention_dropout

    def __call__(self, x: Tensor, mode: Mode = Mode()) -> Tensor:
        return multi_head_attention(x, self.heads, self.output, self.attention_dropout, mode)


class GatedMPNNLayer:
    """Edge-gated graph convolution.

    For a directed edge j→i with features e_ij::

        e'_ij = W₁x_i + W₂x_j + W₃e_ij
        η_ij  = sigmoid(e'_ij)
        x'_i  = relu(U x_i + Σ_j η_ij ⊙ V x_j / (Σ_j η_ij + ε))
    """

    def __init__(self, store: ParamStore, name: str, dim: int):
        self.dim = dim
        self.name = name
        self.u = Linear(store, f'{name}.u', dim, dim)
        self.v = Linear(store, f'{name}.v', dim, dim)
        self.w_dst = Linear(store, f'{name}.w1', dim, dim)
        self.w_src = Linear(store, f'{name}.w2', dim, dim)
        self.w_edge = Linear(store, f'{name}.w3', dim, dim)

    def __call__(self, x: Tensor, e: Tensor, src: np.ndarray, dst: np.ndarray):
        return gated_mpnn_layer(x, e, src, dst, self)


def gated_mpnn_layer(x: Tensor, e: Tensor, src: np.ndarray, dst: np.ndarray, layer: GatedMPNNLayer):
    n = x.shape[0]
    _check_width(x, layer.dim, f'{layer.name} nodes')
    _check_width(e, layer.dim, f'{layer.name} edges')
    if e.shape[0] != len(src) or len(src) != len(dst):
        raise ShapeMismatchException(f'{e.shape[0]} edge rows for {len(src)} edges', layer.name)

    x_dst = ag.take_rows(x, dst)
    x_src = ag.take_rows(x, src)
    e_new = layer.w_dst(x_dst) + layer.w_src(x_src) + layer.w_edge(e)
    gates = ag.sigmoid(e_new)
    messages = ag.scatter_rows(gates * layer.v(x_src), dst, n)
    normalizer = ag.scatter_rows(gates, dst, n) + GATE_EPSILON
    x_new = ag.relu(layer.u(x) + messages / normalizer)
    return x_new, e_new


class BatchNorm:
    def __init__(self, store: ParamStore, name: str, dim: int):
        self.name = name
        self.dim = dim
        self.gamma = store.constant(f'{name}.gamma', (dim,), 1.0)
        self.beta = store.constant(f'{name}.beta', (dim,), 0.0)
        self.running_mean = store.buffer(f'{name}.running_mean', np.zeros(dim))
        self.running_var = store.buffer(f'{name}.running_var', np.ones(dim))

    def __call__(self, x: Tensor, mode: Mode = Mode()) -> Tensor:
        return batchnorm(x, self, mode)


def batchnorm(x: Tensor, norm: BatchNorm, mode: Mode) -> Tensor:
    """Per-feature normalization; running statistics use the biased batch variance."""
    _check_width(x, norm.dim, norm.name)
    if x.shape[0] == 0:
        raise ShapeMismatchException('batchnorm of zero rows', norm.name)

    if mode.train:
        mean = x.mean(axis=0, keepdims=True)
        centered = x - mean
        variance = (centered * centered).mean(axis=0, keepdims=True)
        normalized = centered * (variance + NORM_EPSILON) ** -0.5
        norm.running_mean *= 1.0 - NORM_MOMENTUM
        norm.running_mean += NORM_MOMENTUM * mean.data[0]
        norm.running_var *= 1.0 - NORM_MOMENTUM
        norm.running_var += NORM_MOMENTUM * variance.data[0]
    else:
        scale = 1.0 / np.sqrt(norm.running_var + NORM_EPSILON)
        normalized = (x - norm.running_mean) * scale

    return normalized * norm.gamma + norm.beta

"""Permutation-equivariant tensor operations and the wavelet encoder.

A node-order-``a`` tensor has ``a`` leading dimensions of size n; a trailing
channel dimension, when present, is never permuted or contracted.
"""
import string
from dataclasses import dataclass

import numpy as np

from mgt import autograd as ag
from mgt.autograd import Tensor
from mgt.exceptions import ConfigException, ShapeMismatchException, TensorDimensionException
from mgt.layers import Linear
from mgt.params import ParamStore
from mgt.spectral import WaveletTensor

PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
ACTIVATIONS = {
    'relu': ag.relu,
    'identity': lambda x: x,
}


@dataclass
class SecondOrderTensor:
    """n×n×c tensor: a second-order node tensor with c channels."""
    data: Tensor

    def __post_init__(self):
        self.data = ag.as_tensor(self.data)
        shape = self.data.shape
        if len(shape) != 3 or shape[0] != shape[1]:
            raise ShapeMismatchException(f'expected n×n×c, got {shape}', 'SecondOrderTensor')

        if not np.all(np.isfinite(self.data.data)):
            raise ShapeMismatchException('non-finite entries', 'SecondOrderTensor')

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def delta(n: int, order: int) -> np.ndarray:
    """Generalized Kronecker delta: 1 where all ``order`` indices coincide."""
    out = np.zeros((n,) * order)
    out[(np.arange(n),) * order] = 1.0
    return out


def tensor_product(a, b) -> Tensor:
    """``C[i..., j...] = A[i...] · B[j...]``"""
    a, b = ag.as_tensor(a), ag.as_tensor(b)
    letters = string.ascii_letters
    if a.ndim + b.ndim > len(letters):
        raise TensorDimensionException(f'order {a.ndim + b.ndim} is too large', 'tensor_product')

    left = letters[:a.ndim]
    right = letters[a.ndim:a.ndim + b.ndim]
    return ag.einsum(f'{left},{right}->{left}{right}', a, b)


def contract(a, dims, channels: bool = False) -> Tensor:
    """Sum over equal values of the indices named in ``dims``.

    With two or more dims this is the generalized trace; with a single dim it
    is the plain sum along that dimension.
    """
    a = ag.as_tensor(a)
    node_order = a.ndim - (1 if channels else 0)
    dims = tuple(dims)
    if not dims or len(set(dims)) != len(dims):
        raise TensorDimensionException(f'dimensions {dims} must be distinct and non-empty', 'dims')

    for dim in dims:
        if not isinstance(dim, (int, np.integer)) or not 0 <= dim < node_order:
            raise TensorDimensionException(f'dimension {dim} is not a node dimension of order {node_order}', 'dims')

    sizes = {a.shape[dim] for dim in dims}
    if len(sizes) != 1:
        raise TensorDimensionException(f'contracted dimensions have different sizes {sorted(sizes)}', 'dims')

    letters = string.ascii_letters[:a.ndim]
    contracted = ''.join(letters[dim] for dim in sorted(dims))
    kept = ''.join(letter for index, letter in enumerate(letters) if index not in dims)
    return ag.einsum(f'{letters},{contracted}->{kept}', a, delta(sizes.pop(), len(dims)))


def pair_contractions(adjacency, h: Tensor) -> list:
    """The six contractions of ``A ⊗ H`` over pairs of its four node dimensions.

    Indices are ``A[a,b] H[c,d,k]``; each result keeps the two remaining node
    dimensions in their original order.
    """
    adjacency = ag.as_tensor(adjacency)
    identity = np.eye(h.shape[0])
    trace_a = ag.einsum('ab,ab->', adjacency, identity)
    trace_h = ag.einsum('cdk,cd->k', h, identity)
    return [
        h * trace_a,                                 # {0,1}
        ag.einsum('ab,adk->bdk', adjacency, h),      # {0,2}
        ag.einsum('ab,cak->bck', adjacency, h),      # {0,3}
        ag.einsum('ab,bdk->adk', adjacency, h),      # {1,2}
        ag.einsum('ab,cbk->ack', adjacency, h),      # {1,3}
        ag.einsum('ab,k->abk', adjacency, trace_h),  # {2,3}
    ]


class EquivariantLayerParams:
    """Channel-mixing map 𝓦 (6c → c′) followed by the nonlinearity γ."""

    def __init__(self, store: ParamStore, name: str, in_channels: int, out_channels: int,
                 activation: str = 'relu'):
        if activation not in ACTIVATIONS:
            raise ConfigException(f'unknown activation "{activation}"', f'{name}.activation')

        self.in_channels = in_channels
        self.out_channels = out_channels
        self.activation = activation
        self.weight = store.weight(f'{name}.weight', out_channels, len(PAIRS) * in_channels)
        self.bias = store.constant(f'{name}.bias', (out_channels,))


def second_order_mp_layer(adjacency, h: SecondOrderTensor, params: EquivariantLayerParams) -> SecondOrderTensor:
    adjacency = ag.as_tensor(adjacency)
    if adjacency.shape != (h.n, h.n):
        raise ShapeMismatchException(f'adjacency {adjacency.shape} for n={h.n}', 'A')

    if h.channels != params.in_channels:
        raise ShapeMismatchException(f'{h.channels} channels for a layer expecting {params.in_channels}', 'H')

    stacked = ag.concat(pair_contractions(adjacency, h.data), axis=2)
    mixed = ag.einsum('ijc,oc->ijo', stacked, params.weight) + params.bias
    return SecondOrderTensor(ACTIVATIONS[params.activation](mixed))


def promote_node_features(features) -> SecondOrderTensor:
    """Node features as self-loop channels of an n×n×d tensor."""
    features = ag.as_tensor(features)
    return SecondOrderTensor(ag.einsum('id,ij->ijd', features, np.eye(features.shape[0])))


def dense_edge_features(n: int, src, dst, features) -> SecondOrderTensor:
    """Edge features at ``[src, dst]`` of an n×n×d tensor, zero off the edges."""
    features = np.asarray(features, dtype=np.float64)
    dense = np.zeros((n, n, features.shape[1]))
    dense[np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)] = features
    return SecondOrderTensor(dense)


def stack_channels(*tensors: SecondOrderTensor) -> SecondOrderTensor:
    return SecondOrderTensor(ag.concat([tensor.data for tensor in tensors], axis=2))


def reduce_to_first_order(h: SecondOrderTensor) -> Tensor:
    """Row-sum, column-sum and diagonal of every channel, concatenated: n×3c."""
    return ag.concat([
        contract(h.data, (1,), channels=True),
        contract(h.data, (0,), channels=True),
        ag.einsum('ijc,ij->ic', h.data, np.eye(h.n)),
    ], axis=1)


class WaveletEncoder:
    """T second-order layers on the n×n×k wavelet tensor, reduced to n×k.

    ``extra_channels`` promoted node and edge channels may follow the k
    wavelet channels; the first layer maps all of them back to k.
    """

    def __init__(self, store: ParamStore, name: str, scales: int, layers: int = 1, activation: str = 'relu',
                 extra_channels: int = 0):
        self.name = name
        self.scales = scales
        self.in_channels = scales + extra_channels
        self.layers = [
            EquivariantLayerParams(store, f'{name}.layer{index}', self.in_channels if index == 0 else scales, scales,
                                   activation)
            for index in range(layers)
        ]
        reduced = scales if layers else self.in_channels
        self.reduction = Linear(store, f'{name}.reduce', 3 * reduced, scales)

    def __call__(self, wavelets, adjacency) -> Tensor:
        return encode_wavelets(wavelets, adjacency, self)


def encode_wavelets(wavelets, adjacency, encoder: WaveletEncoder) -> Tensor:
    if isinstance(wavelets, WaveletTensor):
        wavelets = wavelets.channels_last()

    h = SecondOrderTensor(wavelets)
    if h.channels != encoder.in_channels:
        raise ShapeMismatchException(f'{h.channels} input channels for an encoder of {encoder.in_channels}',
                                     encoder.name)

    for layer in encoder.layers:
        h = second_order_mp_layer(adjacency, h, layer)

    return encoder.reduction(reduce_to_first_order(h))

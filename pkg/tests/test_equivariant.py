import itertools

import numpy as np
import pytest
from pytest import raises

from mgt import autograd as ag
from mgt.autograd import Tensor
from mgt.equivariant import (
    EquivariantLayerParams,
    SecondOrderTensor,
    WaveletEncoder,
    contract,
    delta,
    encode_wavelets,
    pair_contractions,
    dense_edge_features,
    promote_node_features,
    reduce_to_first_order,
    second_order_mp_layer,
    stack_channels,
    tensor_product,
)
from mgt.exceptions import ConfigException, ShapeMismatchException, TensorDimensionException
from mgt.graph import Permutation, random_permutation
from mgt.params import ParamStore
from mgt.spectral import wavelet_tensor
from tests.utils import check_gradients, path_graph, random_graph


def brute_force_contract(a: np.ndarray, dims, channels=False) -> np.ndarray:
    """Loops over every index of ``a``; ``dims`` collapse into one shared index."""
    kept = [axis for axis in range(a.ndim) if axis not in dims]
    out = np.zeros([a.shape[axis] for axis in kept])
    for index in itertools.product(*[range(size) for size in a.shape]):
        if len({index[axis] for axis in dims}) == 1:
            out[tuple(index[axis] for axis in kept)] += a[index]

    return out


def permutation_pairs(count=50, max_n=8, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, max_n + 1))
        yield rng, n, random_permutation(n, rng)


class TestTensorProduct:
    def test_vectors(self):
        assert tensor_product([1.0, 2.0], [3.0, 4.0]).data.tolist() == [[3.0, 4.0], [6.0, 8.0]]

    def test_zero_tensor(self):
        a = np.random.default_rng(0).standard_normal((3, 3))
        assert not np.any(tensor_product(a, np.zeros((2, 2))).data)

    def test_identity_with_scalar_vector(self):
        out = tensor_product([[1.0, 0.0], [0.0, 1.0]], [5.0]).data
        assert out.shape == (2, 2, 1)
        assert out[:, :, 0].tolist() == [[5.0, 0.0], [0.0, 5.0]]

    def test_equivariant(self):
        for rng, n, sigma in permutation_pairs():
            a = rng.standard_normal((n, n))
            b = rng.standard_normal(n)
            permuted = tensor_product(sigma.apply_orders(a, 2), sigma.apply_rows(b)).data
            np.testing.assert_allclose(permuted, sigma.apply_orders(tensor_product(a, b).data, 3), atol=1e-9)


class TestContract:
    def test_trace(self):
        assert contract([[1.0, 2.0], [3.0, 4.0]], (0, 1)).item() == 5.0

    def test_identity_trace(self):
        assert contract(np.eye(6), (0, 1)).item() == 6.0

    def test_channel_diagonal(self):
        t = np.random.default_rng(1).standard_normal((4, 4, 3))
        expected = sum(t[i, i] for i in range(4))
        np.testing.assert_allclose(contract(t, (0, 1), channels=True).data, expected, atol=1e-14)

    @pytest.mark.parametrize('order', [2, 3, 4])
    def test_matches_brute_force(self, order):
        rng = np.random.default_rng(order)
        for n in range(1, 5):
            a = rng.integers(-5, 6, size=(n,) * order).astype(np.float64)
            for size in range(1, order + 1):
                for dims in itertools.combinations(range(order), size):
                    np.testing.assert_array_equal(contract(a, dims).data, brute_force_contract(a, dims))

    def test_channel_dimension_is_not_contractible(self):
        with raises(TensorDimensionException):
            contract(np.zeros((3, 3, 2)), (1, 2), channels=True)

    def test_duplicate_dimensions(self):
        with raises(TensorDimensionException):
            contract(np.zeros((3, 3)), (0, 0))

    def test_out_of_range(self):
        with raises(TensorDimensionException):
            contract(np.zeros((3, 3)), (0, 2))

    def test_equivariant(self):
        for rng, n, sigma in permutation_pairs():
            a = rng.standard_normal((n, n, n))
            for dims in ((0, 1), (0, 2), (1, 2), (0, 1, 2)):
                kept = 3 - len(dims)
                permuted = contract(sigma.apply_orders(a, 3), dims).data
                np.testing.assert_allclose(permuted, sigma.apply_orders(contract(a, dims).data, kept), atol=1e-9)

    def test_delta(self):
        d = delta(3, 3)
        assert d.sum() == 3.0
        assert d[1, 1, 1] == 1.0
        assert d[0, 1, 1] == 0.0


class TestSecondOrderTensor:
    def test_rejects_non_square(self):
        with raises(ShapeMismatchException):
            SecondOrderTensor(np.zeros((2, 3, 1)))

    def test_rejects_non_finite(self):
        with raises(ShapeMismatchException):
            SecondOrderTensor(np.full((2, 2, 1), np.nan))

    def test_promote_node_features(self):
        features = np.array([[1.0, 2.0], [3.0, 4.0]])
        promoted = promote_node_features(features)
        assert promoted.channels == 2
        assert promoted.data.data[:, :, 1].tolist() == [[2.0, 0.0], [0.0, 4.0]]

    def test_stack_channels(self):
        a = SecondOrderTensor(np.ones((3, 3, 2)))
        b = SecondOrderTensor(np.zeros((3, 3, 1)))
        assert stack_channels(a, b).channels == 3

    def test_dense_edge_features(self):
        dense = dense_edge_features(3, [0, 1], [1, 2], [[1.0, 2.0], [3.0, 4.0]])
        assert dense.channels == 2
        assert dense.data.data[:, :, 1].tolist() == [[0.0, 2.0, 0.0], [0.0, 0.0, 4.0], [0.0, 0.0, 0.0]]

    def test_dense_edge_features_without_edges(self):
        dense = dense_edge_features(2, [], [], np.zeros((0, 1)))
        assert dense.data.shape == (2, 2, 1)
        assert not np.any(dense.data.data)


def layer(in_channels, out_channels, activation='relu', seed=0):
    return EquivariantLayerParams(ParamStore(np.random.default_rng(seed)), 'layer', in_channels, out_channels,
                                  activation)


class TestSecondOrderLayer:
    def test_single_node(self):
        params = layer(1, 1, 'identity')
        params.weight.data[...] = 1.0
        a, h = 0.7, -1.3
        out = second_order_mp_layer([[a]], SecondOrderTensor([[[h]]]), params)
        assert out.data.item() == pytest.approx(6 * a * h, abs=1e-15)

    def test_channel_count(self):
        params = layer(3, 4)
        assert params.weight.shape == (4, 18)
        rng = np.random.default_rng(0)
        stacked = pair_contractions(rng.standard_normal((5, 5)), Tensor(rng.standard_normal((5, 5, 3))))
        assert len(stacked) == 6
        assert sum(part.shape[2] for part in stacked) == 18
        out = second_order_mp_layer(rng.standard_normal((5, 5)), SecondOrderTensor(rng.standard_normal((5, 5, 3))),
                                    params)
        assert out.channels == 4

    def test_pair_contractions_match_brute_force(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((3, 3))
        h = rng.standard_normal((3, 3, 2))
        product = np.einsum('ab,cdk->abcdk', a, h)
        for (first, second), part in zip(itertools.combinations(range(4), 2), pair_contractions(a, Tensor(h))):
            expected = brute_force_contract(product, (first, second))
            np.testing.assert_allclose(part.data, expected, atol=1e-12)

    def test_equivariant(self):
        params = layer(2, 3)
        for rng, n, sigma in permutation_pairs(max_n=5):
            a = rng.standard_normal((n, n))
            h = rng.standard_normal((n, n, 2))
            permuted = second_order_mp_layer(sigma.apply_square(a), SecondOrderTensor(sigma.apply_orders(h, 2)),
                                             params)
            expected = sigma.apply_orders(second_order_mp_layer(a, SecondOrderTensor(h), params).data.data, 2)
            np.testing.assert_allclose(permuted.data.data, expected, atol=1e-10)

    def test_shape_mismatch(self):
        with raises(ShapeMismatchException):
            second_order_mp_layer(np.zeros((3, 3)), SecondOrderTensor(np.zeros((4, 4, 1))), layer(1, 1))

        with raises(ShapeMismatchException):
            second_order_mp_layer(np.zeros((3, 3)), SecondOrderTensor(np.zeros((3, 3, 2))), layer(1, 1))

    def test_unknown_activation(self):
        with raises(ConfigException):
            layer(1, 1, 'tanh')


class TestReduceToFirstOrder:
    def test_matches_loops(self):
        t = np.random.default_rng(12).standard_normal((4, 4, 3))
        reduced = reduce_to_first_order(SecondOrderTensor(t)).data
        assert reduced.shape == (4, 9)
        for i in range(4):
            for c in range(3):
                assert reduced[i, c] == pytest.approx(sum(t[i, j, c] for j in range(4)), abs=1e-12)
                assert reduced[i, 3 + c] == pytest.approx(sum(t[j, i, c] for j in range(4)), abs=1e-12)
                assert reduced[i, 6 + c] == pytest.approx(t[i, i, c], abs=1e-12)

    def test_single_node(self):
        reduced = reduce_to_first_order(SecondOrderTensor([[[2.0, -1.0]]])).data
        assert reduced.tolist() == [[2.0, -1.0, 2.0, -1.0, 2.0, -1.0]]

    def test_gradient(self):
        h = ag.parameter(np.random.default_rng(13).standard_normal((3, 3, 2)))
        weights = np.random.default_rng(14).standard_normal((3, 6))

        def loss():
            return (reduce_to_first_order(SecondOrderTensor(h)) * weights).sum()

        assert check_gradients(loss, {'h': h})['h'] < 1e-6


class TestEncodeWavelets:
    def test_identity_slice_without_layers(self):
        encoder = WaveletEncoder(ParamStore(), 'wavelets', scales=1, layers=0)
        tensor = wavelet_tensor(path_graph(3), [0.0])
        reduced = reduce_to_first_order(SecondOrderTensor(tensor.channels_last()))
        np.testing.assert_allclose(reduced.data, np.ones((3, 3)), atol=1e-10)

        # select the diagonal variant
        encoder.reduction.weight.data[...] = [[0.0, 0.0, 1.0]]
        out = encode_wavelets(tensor, path_graph(3).adjacency, encoder)
        np.testing.assert_allclose(out.data, np.ones((3, 1)), atol=1e-10)

    def test_output_shape(self):
        g = random_graph(np.random.default_rng(0), 6)
        encoder = WaveletEncoder(ParamStore(), 'wavelets', scales=5, layers=2)
        assert encode_wavelets(wavelet_tensor(g), g.adjacency, encoder).shape == (6, 5)

    def test_extra_channels(self):
        g = random_graph(np.random.default_rng(15), 5)
        store = ParamStore(np.random.default_rng(16))
        encoder = WaveletEncoder(store, 'wavelets', scales=2, layers=1, extra_channels=3)
        assert encoder.in_channels == 5
        assert encoder.layers[0].weight.shape == (2, 30)
        assert encoder.reduction.weight.shape == (2, 6)
        stacked = stack_channels(
            SecondOrderTensor(wavelet_tensor(g, [1.0, 2.0]).channels_last()),
            promote_node_features(g.node_features),
            dense_edge_features(g.n, *g.edge_index()),
        )
        assert encode_wavelets(stacked.data, g.adjacency, encoder).shape == (5, 2)

        with raises(ShapeMismatchException):
            encode_wavelets(wavelet_tensor(g, [1.0, 2.0]), g.adjacency, encoder)

    def test_extra_channels_without_layers(self):
        encoder = WaveletEncoder(ParamStore(), 'wavelets', scales=2, layers=0, extra_channels=1)
        assert encoder.reduction.weight.shape == (2, 9)

    def test_scale_count_mismatch(self):
        g = path_graph(3)
        encoder = WaveletEncoder(ParamStore(), 'wavelets', scales=2)
        with raises(ShapeMismatchException):
            encode_wavelets(wavelet_tensor(g, [1.0, 2.0, 3.0]), g.adjacency, encoder)

    def test_equivariant(self):
        encoder = WaveletEncoder(ParamStore(np.random.default_rng(5)), 'wavelets', scales=3, layers=1)
        rng = np.random.default_rng(6)
        for _ in range(50):
            g = random_graph(rng, int(rng.integers(2, 9)))
            sigma = random_permutation(g.n, rng)
            wavelets = wavelet_tensor(g, [1.0, 2.0, 3.0]).channels_last()
            original = encode_wavelets(wavelets, g.adjacency, encoder).data
            permuted = encode_wavelets(sigma.apply_orders(wavelets, 2), sigma.apply_square(g.adjacency), encoder).data
            np.testing.assert_allclose(permuted, sigma.apply_rows(original), atol=1e-9)

    def test_gradients(self):
        store = ParamStore(np.random.default_rng(7))
        encoder = WaveletEncoder(store, 'wavelets', scales=2, layers=2)
        g = random_graph(np.random.default_rng(8), 5, connected=True)
        wavelets = wavelet_tensor(g, [1.0, 3.0]).channels_last()
        projection = np.random.default_rng(9).standard_normal((5, 2))

        def loss():
            return (encode_wavelets(wavelets, g.adjacency, encoder) * projection).sum()

        errors = check_gradients(loss, store.params)
        assert max(errors.values()) < 1e-4

    def test_identity_permutation_is_noop(self):
        g = random_graph(np.random.default_rng(10), 4)
        encoder = WaveletEncoder(ParamStore(), 'wavelets', scales=5)
        wavelets = wavelet_tensor(g).channels_last()
        sigma = Permutation.identity(4)
        np.testing.assert_allclose(
            encode_wavelets(sigma.apply_orders(wavelets, 2), g.adjacency, encoder).data,
            encode_wavelets(wavelets, g.adjacency, encoder).data,
            atol=1e-12,
        )


class TestAutogradThroughContract:
    def test_contract_gradient(self):
        rng = np.random.default_rng(11)
        a = ag.parameter(rng.standard_normal((3, 3, 3)))
        projection = rng.standard_normal(3)

        def loss():
            return (contract(a, (0, 2)) * projection).sum()

        assert check_gradients(loss, {'a': a})['a'] < 1e-4

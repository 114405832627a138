"""Graph data model, the graph-document format and node relabeling.

A graph document is a UTF-8 JSON object::

    {"nodes": [[f64, ...], ...],
     "edges": [{"src": u, "dst": u, "feat": [f64, ...]}, ...],
     "target": [f64, ...]}

Node order in a document is authoritative: no canonicalization is performed.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from io import TextIOWrapper

import numpy as np

from mgt.exceptions import (
    DuplicateEdgeException,
    FeatureWidthException,
    GraphDocumentException,
    NodeIndexException,
    PermutationException,
    SelfLoopException,
)

logger = logging.getLogger(__name__)

INDEX_LIMIT = np.iinfo(np.int64).max


def _frozen(array, dtype=np.float64):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected node/edge-attributed graph.

    ``edges`` holds every unordered pair exactly once with ``src < dst``;
    ``edge_features[k]`` belongs to ``edges[k]`` in both orientations.
    """
    adjacency: np.ndarray
    node_features: np.ndarray
    edges: np.ndarray
    edge_features: np.ndarray
    positional: np.ndarray | None = None
    target: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @classmethod
    def from_edges(cls, node_features, edges, edge_features=None, positional=None, target=None):
        node_features = np.array(node_features, dtype=np.float64)
        if node_features.ndim != 2:
            raise FeatureWidthException('node features must be a list of equal-width vectors', 'nodes')

        n = node_features.shape[0]
        try:
            edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        except OverflowError as error:
            raise NodeIndexException('node index does not fit a 64-bit integer', 'edges') from error
        if edge_features is None:
            edge_features = np.zeros((edges.shape[0], 0))

        edge_features = np.array(edge_features, dtype=np.float64)
        if edge_features.ndim != 2 or edge_features.shape[0] != edges.shape[0]:
            raise FeatureWidthException('edge features must match the edge list', 'edges')

        adjacency = np.zeros((n, n))
        ordered = np.empty_like(edges)
        seen = {}
        for index, (src, dst) in enumerate(edges):
            location = f'edges[{index}]'
            if not (0 <= src < n and 0 <= dst < n):
                raise NodeIndexException(f'node index out of range 0..{n - 1}', location)

            if src == dst:
                raise SelfLoopException(f'self-loop on node {src}', location)

            pair = (min(src, dst), max(src, dst))
            if pair in seen:
                raise DuplicateEdgeException(f'edge {pair} already given at edges[{seen[pair]}]', location)

            seen[pair] = index
            ordered[index] = pair
            adjacency[src, dst] = adjacency[dst, src] = 1.0

        if positional is not None:
            positional = np.array(positional, dtype=np.float64)
            if positional.ndim != 2 or positional.shape[0] != n:
                raise FeatureWidthException('positional rows must match the node count', 'positional')

            positional = _frozen(positional)

        return cls(
            adjacency=_frozen(adjacency),
            node_features=_frozen(node_features),
            edges=_frozen(ordered, np.int64),
            edge_features=_frozen(edge_features),
            positional=positional,
            target=None if target is None else _frozen(target),
        )

    def edge_index(self):
        """Both orientations of every edge: ``(src, dst, features)``."""
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        features = np.concatenate([self.edge_features, self.edge_features], axis=0)
        return src, dst, features

    def is_connected(self) -> bool:
        if self.n == 0:
            return False

        reached = {0}
        frontier = [0]
        while frontier:
            node = frontier.pop()
            for neighbour in np.flatnonzero(self.adjacency[node]):
                if neighbour not in reached:
                    reached.add(int(neighbour))
                    frontier.append(int(neighbour))

        return len(reached) == self.n

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return all(same(getattr(self, name), getattr(other, name)) for name in (
            'adjacency', 'node_features', 'edges', 'edge_features', 'positional', 'target',
        ))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on ``0..n-1``; ``mapping[i]`` is the new label of node ``i``."""
    mapping: np.ndarray
    inverse_mapping: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mapping = np.array(self.mapping, dtype=np.int64).reshape(-1)
        n = mapping.shape[0]
        if not np.array_equal(np.sort(mapping), np.arange(n)):
            raise PermutationException(f'mapping is not a bijection on 0..{n - 1}', 'mapping')

        inverse = np.empty_like(mapping)
        inverse[mapping] = np.arange(n)
        mapping.setflags(write=False)
        inverse.setflags(write=False)
        object.__setattr__(self, 'mapping', mapping)
        object.__setattr__(self, 'inverse_mapping', inverse)

    @property
    def n(self) -> int:
        return self.mapping.shape[0]

    @classmethod
    def identity(cls, n: int):
        return cls(np.arange(n))

    def inverse(self):
        return Permutation(self.inverse_mapping)

    def apply_rows(self, array: np.ndarray) -> np.ndarray:
        """``[σ·Z]_{i,...} = Z_{σ⁻¹(i),...}``"""
        return np.asarray(array)[self.inverse_mapping]

    def apply_square(self, array: np.ndarray) -> np.ndarray:
        """``[σ·A]_{i,j,...} = A_{σ⁻¹(i),σ⁻¹(j),...}``"""
        return np.asarray(array)[self.inverse_mapping][:, self.inverse_mapping]

    def apply_orders(self, array: np.ndarray, orders: int) -> np.ndarray:
        """Acts on the leading ``orders`` node dimensions, the rest are channels."""
        array = np.asarray(array)
        for axis in range(orders):
            array = np.take(array, self.inverse_mapping, axis=axis)

        return np.ascontiguousarray(array)


def random_permutation(n: int, rng: np.random.Generator) -> Permutation:
    return Permutation(rng.permutation(n))


def apply_permutation(g: Graph, sigma: Permutation) -> Graph:
    if sigma.n != g.n:
        raise PermutationException(f'permutation of length {sigma.n} for a graph with {g.n} nodes', 'sigma')

    edges = np.sort(sigma.mapping[g.edges], axis=1)
    return Graph(
        adjacency=_frozen(sigma.apply_square(g.adjacency)),
        node_features=_frozen(sigma.apply_rows(g.node_features)),
        edges=_frozen(edges, np.int64),
        edge_features=g.edge_features,
        positional=None if g.positional is None else _frozen(sigma.apply_rows(g.positional)),
        target=g.target,
    )


def normalized_laplacian(g: Graph) -> np.ndarray:
    """``I - D^{-1/2} A D^{-1/2}``; isolated nodes get an all-zero row."""
    degrees = g.degrees
    connected = degrees > 0
    inv_sqrt = np.zeros_like(degrees)
    inv_sqrt[connected] = 1.0 / np.sqrt(degrees[connected])
    laplacian = -np.outer(inv_sqrt, inv_sqrt) * g.adjacency
    laplacian[np.diag_indices(g.n)] = connected.astype(np.float64)
    return laplacian


def _number_list(value, location):
    if not isinstance(value, list):
        raise GraphDocumentException('expected a list of numbers', location)

    numbers = []
    for index, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise GraphDocumentException('expected a number', f'{location}[{index}]')

        try:
            number = float(item)
        except OverflowError:
            number = math.inf

        if not math.isfinite(number):
            raise GraphDocumentException('expected a finite number', f'{location}[{index}]')

        numbers.append(number)

    return numbers


def _index(value, location):
    if isinstance(value, bool) or not isinstance(value, int):
        raise GraphDocumentException('expected an integer node index', location)

    if not -INDEX_LIMIT <= value <= INDEX_LIMIT:
        raise NodeIndexException(f'node index {value} is out of range', location)

    return value


def _uniform_rows(rows, location):
    widths = {len(row) for row in rows}
    if len(widths) > 1:
        first = len(rows[0])
        for index, row in enumerate(rows):
            if len(row) != first:
                raise FeatureWidthException(f'width {len(row)} differs from {first}', f'{location}[{index}]')

    return rows


def parse_document(document: dict) -> Graph:
    if not isinstance(document, dict):
        raise GraphDocumentException('document must be a JSON object', '$')

    unknown = set(document) - {'nodes', 'edges', 'target', 'positional'}
    if unknown:
        raise GraphDocumentException(f'unknown keys {sorted(unknown)}', '$')

    if 'nodes' not in document:
        raise GraphDocumentException('missing "nodes"', '$')

    raw_nodes = document['nodes']
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise GraphDocumentException('"nodes" must be a non-empty list', 'nodes')

    nodes = _uniform_rows([_number_list(row, f'nodes[{i}]') for i, row in enumerate(raw_nodes)], 'nodes')

    raw_edges = document.get('edges', [])
    if not isinstance(raw_edges, list):
        raise GraphDocumentException('"edges" must be a list', 'edges')

    edges = []
    features = []
    for index, edge in enumerate(raw_edges):
        location = f'edges[{index}]'
        if not isinstance(edge, dict) or 'src' not in edge or 'dst' not in edge:
            raise GraphDocumentException('edge must be an object with "src" and "dst"', location)

        edges.append((_index(edge['src'], f'{location}.src'), _index(edge['dst'], f'{location}.dst')))
        features.append(_number_list(edge.get('feat', []), f'{location}.feat'))

    edge_width = 0
    if features:
        _uniform_rows(features, 'edges')
        edge_width = len(features[0])

    positional = None
    if 'positional' in document:
        raw = document['positional']
        if not isinstance(raw, list):
            raise GraphDocumentException('"positional" must be a list of vectors', 'positional')

        positional = _uniform_rows([_number_list(row, f'positional[{i}]') for i, row in enumerate(raw)], 'positional')
        logger.warning('document supplies positional vectors; they are kept but never used as encodings')

    target = None
    if 'target' in document:
        target = _number_list(document['target'], 'target')

    return Graph.from_edges(
        node_features=nodes,
        edges=edges,
        edge_features=np.array(features, dtype=np.float64).reshape(len(edges), edge_width),
        positional=positional,
        target=target,
    )


def load_graph(document: bytes | str | TextIOWrapper) -> Graph:
    if isinstance(document, TextIOWrapper):
        document = document.read()

    if isinstance(document, bytes):
        try:
            document = document.decode('utf-8')
        except UnicodeDecodeError as error:
            raise GraphDocumentException(f'not UTF-8 ({error.reason})', f'byte {error.start}') from error

    try:
        parsed = json.loads(document)
    except json.JSONDecodeError as error:
        location = f'line {error.lineno} column {error.colno}'
        raise GraphDocumentException(f'malformed JSON ({error.msg})', location) from error

    return parse_document(parsed)


def graph_document(g: Graph, target=None) -> dict:
    target = g.target if target is None else target
    document = {
        'nodes': g.node_features.tolist(),
        'edges': [
            {'src': int(src), 'dst': int(dst), 'feat': feat}
            for (src, dst), feat in zip(g.edges.tolist(), g.edge_features.tolist())
        ],
    }
    if target is not None:
        document['target'] = np.asarray(target, dtype=np.float64).tolist()

    if g.positional is not None:
        document['positional'] = g.positional.tolist()

    return document


def dump_graph(g: Graph, target=None) -> bytes:
    return json.dumps(graph_document(g, target)).encode('utf-8')

"""Datasets of graph documents and the synthetic motif-chain generator.

On disk a dataset is a directory::

    index.json          {"version": 1, "graphs": ["graph_0000.json", ...],
                         "splits": {"train": [0, ...], "val": [...], "test": [...]}}
    graph_0000.json     one graph document per graph, with its "target"
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mgt.exceptions import DatasetException, GraphDocumentException, MGTException
from mgt.graph import Graph, dump_graph, load_graph

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')
INDEX_FILE = 'index.json'
INDEX_VERSION = 1

# local edges of each motif; the last node of a copy bridges to node 0 of the next copy
MOTIFS = {
    'triangle': (3, ((0, 1), (1, 2), (0, 2))),
    'square': (4, ((0, 1), (1, 2), (2, 3), (0, 3))),
    'clique4': (4, ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))),
}
MOTIF_EDGE = (1.0, 0.0)
BRIDGE_EDGE = (0.0, 1.0)


@dataclass(eq=False)
class Dataset:
    graphs: list
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_dataset(self)

    def __len__(self):
        return len(self.graphs)

    @property
    def node_width(self) -> int:
        return self.graphs[0].node_features.shape[1]

    @property
    def edge_width(self) -> int:
        return self.graphs[0].edge_features.shape[1]

    @property
    def target_width(self) -> int:
        return self.graphs[0].target.shape[0]

    def indices(self, split: str) -> list:
        if split not in SPLITS:
            raise DatasetException(f'unknown split "{split}"', 'split')

        return list(self.splits.get(split, []))

    def split(self, split: str) -> list:
        return [self.graphs[index] for index in self.indices(split)]

    def targets(self, split: str) -> np.ndarray:
        return np.array([graph.target for graph in self.split(split)]).reshape(-1, self.target_width)


def validate_dataset(dataset: Dataset):
    if not dataset.graphs:
        raise DatasetException('a dataset needs at least one graph', 'graphs')

    first = dataset.graphs[0]
    for index, graph in enumerate(dataset.graphs):
        location = f'graphs[{index}]'
        if graph.target is None:
            raise DatasetException('graph has no target', location)

        if graph.target.shape != first.target.shape:
            raise DatasetException(f'target width {graph.target.shape[0]} differs from {first.target.shape[0]}',
                                   location)

        if graph.node_features.shape[1] != first.node_features.shape[1]:
            raise DatasetException('node feature width differs from the first graph', location)

        if graph.edge_features.shape[1] != first.edge_features.shape[1]:
            raise DatasetException('edge feature width differs from the first graph', location)

    seen = {}
    for name, indices in dataset.splits.items():
        if name not in SPLITS:
            raise DatasetException(f'unknown split "{name}"', f'splits.{name}')

        for index in indices:
            if isinstance(index, bool) or not isinstance(index, (int, np.integer)):
                raise DatasetException(f'graph index {index!r} is not an integer', f'splits.{name}')

            if not 0 <= index < len(dataset.graphs):
                raise DatasetException(f'graph index {index!r} out of range', f'splits.{name}')

            if index in seen:
                raise DatasetException(f'graph {index} is in both "{seen[index]}" and "{name}"', f'splits.{name}')

            seen[index] = name


def save_dataset(dataset: Dataset, directory: Path | str):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for index, graph in enumerate(dataset.graphs):
        name = f'graph_{index:04d}.json'
        (directory / name).write_bytes(dump_graph(graph))
        names.append(name)

    index = {
        'version': INDEX_VERSION,
        'graphs': names,
        'splits': {name: [int(i) for i in dataset.indices(name)] for name in SPLITS},
    }
    (directory / INDEX_FILE).write_text(json.dumps(index, indent=2, sort_keys=True), encoding='utf-8')
    logger.info('wrote %d graphs to %s', len(names), directory)


def load_dataset(directory: Path | str) -> Dataset:
    directory = Path(directory)
    index_path = directory / INDEX_FILE
    try:
        index = json.loads(index_path.read_text(encoding='utf-8'))
    except OSError as error:
        raise DatasetException(f'cannot read index ({error.strerror})', str(index_path)) from error
    except json.JSONDecodeError as error:
        raise DatasetException(f'malformed index ({error.msg})', str(index_path)) from error

    if not isinstance(index, dict) or index.get('version') != INDEX_VERSION:
        raise DatasetException('unsupported dataset index', str(index_path))

    graphs = []
    for name in index.get('graphs', []):
        path = directory / name
        try:
            graphs.append(load_graph(path.read_bytes()))
        except OSError as error:
            raise DatasetException(f'cannot read graph ({error.strerror})', str(path)) from error
        except GraphDocumentException as error:
            raise DatasetException(str(error), str(path)) from error

    try:
        return Dataset(graphs=graphs, splits={name: list(v) for name, v in index.get('splits', {}).items()})
    except MGTException as error:
        raise DatasetException(str(error), str(index_path)) from error


def motif_chain(motif: str, repeats: int) -> tuple:
    """Edges and edge kinds of ``repeats`` motif copies joined into a chain.

    Copy i bridges to copy i+1. With three or more copies the last also
    bridges back to the first, closing a ring: r >= 3 copies carry r bridges,
    one or two copies carry r - 1.
    """
    if motif not in MOTIFS:
        raise DatasetException(f'unknown motif "{motif}"', 'motif')

    if repeats < 1:
        raise DatasetException(f'at least one repeat is required, got {repeats}', 'repeats')

    size, local = MOTIFS[motif]
    edges = []
    kinds = []
    for copy in range(repeats):
        offset = copy * size
        edges.extend((offset + u, offset + v) for u, v in local)
        kinds.extend([MOTIF_EDGE] * len(local))

    bridges = [(copy * size + size - 1, (copy + 1) * size) for copy in range(repeats - 1)]
    if repeats >= 3:
        bridges.append(((repeats - 1) * size + size - 1, 0))

    edges.extend(bridges)
    kinds.extend([BRIDGE_EDGE] * len(bridges))
    return size * repeats, edges, kinds


def motif_target(motif: str, repeats: int) -> float:
    """``r + 0.1 · edge_count(motif)``"""
    return repeats + 0.1 * len(MOTIFS[motif][1])


def motif_graph(motif: str, repeats: int, rng: np.random.Generator, noise: float = 0.0) -> Graph:
    n, edges, kinds = motif_chain(motif, repeats)
    degrees = np.zeros(n)
    for u, v in edges:
        degrees[u] += 1
        degrees[v] += 1

    features = np.stack([np.ones(n), degrees], axis=1)
    if noise > 0:
        features = features + noise * rng.standard_normal(features.shape)

    return Graph.from_edges(
        node_features=features,
        edges=edges,
        edge_features=np.array(kinds, dtype=np.float64),
        target=[motif_target(motif, repeats)],
    )


def split_indices(count: int, rng: np.random.Generator, fractions=(0.8, 0.1, 0.1)) -> dict:
    order = [int(i) for i in rng.permutation(count)]
    train = max(1, int(round(fractions[0] * count)))
    val = min(count - train, int(round(fractions[1] * count)))
    return {
        'train': sorted(order[:train]),
        'val': sorted(order[train:train + val]),
        'test': sorted(order[train + val:]),
    }


def generate_motif_dataset(seed: int, count: int, motif: str = 'triangle', repeats=(1, 4),
                           noise: float = 0.0) -> Dataset:
    """Chains of ``r`` motif copies with ``r`` drawn uniformly from the inclusive ``repeats`` range.

    Chains of three or more copies are closed into rings (see ``motif_chain``).
    """
    if count < 1:
        raise DatasetException(f'count must be at least 1, got {count}', 'count')

    low, high = repeats
    if not 1 <= low <= high:
        raise DatasetException(f'invalid repeats range {low},{high}', 'repeats')

    if noise < 0:
        raise DatasetException(f'noise must be non-negative, got {noise}', 'noise')

    if motif not in MOTIFS:
        raise DatasetException(f'unknown motif "{motif}"', 'motif')

    rng = np.random.default_rng(seed)
    graphs = [motif_graph(motif, int(rng.integers(low, high + 1)), rng, noise) for _ in range(count)]
    dataset = Dataset(graphs=graphs, splits=split_indices(count, rng))
    logger.info('generated %d %s chains (repeats %d..%d, seed %d)', count, motif, low, high, seed)
    return dataset

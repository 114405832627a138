"""The multiresolution graph transformer.

Forward pass for one graph::

    positional encoding ─┐
    node embedding ──────┴─ concat ─ GPS layers ─ learn to cluster ─ coarsen
        ─ substructure transformer ─ readout ─ prediction

Graphs are processed one at a time; nothing is padded or batched across
graphs.
"""
import logging
from dataclasses import dataclass

import numpy as np

from mgt import autograd as ag
from mgt.autograd import Tensor
from mgt.config import MGTConfig
from mgt.equivariant import (
    SecondOrderTensor,
    WaveletEncoder,
    dense_edge_features,
    encode_wavelets,
    promote_node_features,
    stack_channels,
)
from mgt.exceptions import ConfigException, ShapeMismatchException
from mgt.graph import Graph
from mgt.layers import BatchNorm, FeedForward, GatedMPNNLayer, Linear, Mode, MultiHeadAttention
from mgt.optim import Adam
from mgt.params import ParamStore
from mgt.spectral import lappe, rwpe, wavelet_tensor

logger = logging.getLogger(__name__)

ASSIGNMENT_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class GraphInputs:
    """Per-graph constants, computed once and reused every epoch."""
    graph: Graph
    adjacency: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edge_features: np.ndarray
    # n×n×c wavelet channels for wavepe, n×p raw features for rwpe/lappe, None otherwise
    positional: np.ndarray | None

    @property
    def n(self) -> int:
        return self.graph.n


def _padded_lappe(g: Graph, width: int) -> np.ndarray:
    available = min(width, g.n - 1)
    features = np.zeros((g.n, width))
    if available >= 1:
        features[:, :available] = lappe(g, available)

    return features


def wavelet_inputs(g: Graph, cfg: MGTConfig) -> np.ndarray:
    """n×n×k wavelets, followed by promoted node and dense edge channels when ``cfg.wavelet_features``."""
    wavelets = SecondOrderTensor(wavelet_tensor(g, cfg.scales).channels_last())
    if not cfg.wavelet_features:
        return wavelets.data.data

    if (g.node_features.shape[1], g.edge_features.shape[1]) != (cfg.node_features, cfg.edge_features):
        raise ShapeMismatchException(
            f'feature widths ({g.node_features.shape[1]}, {g.edge_features.shape[1]}) for a wavelet encoder '
            f'built for ({cfg.node_features}, {cfg.edge_features})', 'wavelets',
        )

    src, dst, features = g.edge_index()
    stacked = stack_channels(
        wavelets,
        promote_node_features(g.node_features),
        dense_edge_features(g.n, src, dst, features),
    )
    return stacked.data.data


def prepare_inputs(g: Graph, cfg: MGTConfig) -> GraphInputs:
    if g.node_features.shape[1] != cfg.node_features:
        raise ShapeMismatchException(f'{g.node_features.shape[1]} node features, model expects {cfg.node_features}',
                                     'nodes')

    if g.edge_features.shape[1] != cfg.edge_features:
        raise ShapeMismatchException(f'{g.edge_features.shape[1]} edge features, model expects {cfg.edge_features}',
                                     'edges')

    if cfg.positional == 'wavepe':
        positional = wavelet_inputs(g, cfg)
    elif cfg.positional == 'rwpe':
        positional = rwpe(g, cfg.walk_steps)
    elif cfg.positional == 'lappe':
        positional = _padded_lappe(g, cfg.laplacian_dim)
    else:
        positional = None

    src, dst, edge_features = g.edge_index()
    return GraphInputs(
        graph=g,
        adjacency=g.adjacency,
        src=src,
        dst=dst,
        edge_features=edge_features,
        positional=positional,
    )


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    """Row-stochastic soft assignment of nodes to clusters."""
    matrix: Tensor

    def __post_init__(self):
        s = self.matrix.data
        if s.ndim != 2:
            raise ShapeMismatchException(f'expected n×C, got {s.shape}', 'S')

        if np.any(s < 0) or np.any(s > 1) or np.any(np.abs(s.sum(axis=1) - 1.0) > ASSIGNMENT_TOLERANCE):
            raise ShapeMismatchException('rows must be probability vectors', 'S')

    @property
    def clusters(self) -> int:
        return self.matrix.shape[1]

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.matrix.data, axis=1)


@dataclass(frozen=True, eq=False)
class MGTOutput:
    prediction: Tensor
    graph_embedding: Tensor
    substructure_embeddings: Tensor
    assignment: ClusterAssignment
    atom_embeddings: Tensor


@dataclass(frozen=True, eq=False)
class LossBreakdown:
    total: Tensor
    l1: Tensor
    link: Tensor
    entropy: Tensor

    def values(self) -> dict:
        return {
            'total': self.total.item(),
            'l1': self.l1.item(),
            'link': self.link.item(),
            'entropy': self.entropy.item(),
        }


class GPSLayer:
    def __init__(self, store: ParamStore, name: str, dim: int, heads: int, dropout: float = 0.0,
                 attention_dropout: float = 0.0):
        self.mpnn = GatedMPNNLayer(store, f'{name}.mpnn', dim)
        self.attention = MultiHeadAttention(store, f'{name}.attn', dim, heads, attention_dropout)
        self.ffn = FeedForward(store, f'{name}.ffn', dim, 2 * dim, dim, dropout)

    def __call__(self, x, e, inputs: GraphInputs, mode: Mode = Mode()):
        return gps_layer(x, e, inputs, self, mode)


def gps_layer(x: Tensor, e: Tensor, inputs: GraphInputs, layer: GPSLayer, mode: Mode = Mode()):
    """Local gated message passing and global attention, summed and fused by a feed-forward map."""
    x_local, e_new = layer.mpnn(x, e, inputs.src, inputs.dst)
    x_global = layer.attention(x, mode)
    return layer.ffn(x_local + x_global, mode), e_new


class GatedStack:
    """Gated layers, each followed by batchnorm and a rectifier; all layer outputs are concatenated."""

    def __init__(self, store: ParamStore, name: str, dim: int, out_dim: int, layers: int = 2,
                 dropout: float = 0.0):
        self.layers = [
            (GatedMPNNLayer(store, f'{name}.{index}.mpnn', dim), BatchNorm(store, f'{name}.{index}.norm', dim))
            for index in range(layers)
        ]
        self.ffn = FeedForward(store, f'{name}.ffn', layers * dim, dim, out_dim, dropout)

    def __call__(self, x: Tensor, e: Tensor, inputs: GraphInputs, mode: Mode = Mode()) -> Tensor:
        outputs = []
        for mpnn, norm in self.layers:
            x, e = mpnn(x, e, inputs.src, inputs.dst)
            x = ag.relu(norm(x, mode))
            outputs.append(x)

        return self.ffn(outputs[0] if len(outputs) == 1 else ag.concat(outputs, axis=1), mode)


class ClusterNetwork:
    def __init__(self, store: ParamStore, name: str, dim: int, clusters: int, dropout: float = 0.0):
        self.embedding = GatedStack(store, f'{name}.embed', dim, dim, dropout=dropout)
        self.assignment = GatedStack(store, f'{name}.assign', dim, clusters, dropout=dropout)


def learn_to_cluster(x: Tensor, e: Tensor, inputs: GraphInputs, network: ClusterNetwork, mode: Mode = Mode()):
    """Node embeddings ``Z`` and the soft assignment ``S = softmax(MPNN_c(X))`` by rows."""
    z = network.embedding(x, e, inputs, mode)
    logits = network.assignment(x, e, inputs, mode)
    return z, ClusterAssignment(ag.softmax(logits, axis=1))


def coarsen(z: Tensor, s) -> Tensor:
    """``X_s = Sᵀ Z``"""
    s = s.matrix if isinstance(s, ClusterAssignment) else ag.as_tensor(s)
    z = ag.as_tensor(z)
    if s.ndim != 2 or z.ndim != 2 or s.shape[0] != z.shape[0]:
        raise ShapeMismatchException(f'cannot pool {z.shape} with an assignment of {s.shape}', 'coarsen')

    return ag.einsum('nc,nd->cd', s, z)


class SubstructureBlock:
    def __init__(self, store: ParamStore, name: str, dim: int, heads: int, dropout: float = 0.0,
                 attention_dropout: float = 0.0):
        self.attention = MultiHeadAttention(store, f'{name}.attn', dim, heads, attention_dropout)
        self.attention_norm = BatchNorm(store, f'{name}.norm1', dim)
        self.ffn = FeedForward(store, f'{name}.ffn', dim, 2 * dim, dim, dropout)
        self.ffn_norm = BatchNorm(store, f'{name}.norm2', dim)

    def __call__(self, h: Tensor, mode: Mode = Mode()) -> Tensor:
        h = self.attention_norm(self.attention(h, mode) + h, mode)
        return self.ffn_norm(self.ffn(h, mode) + h, mode)


class SubstructureEncoder:
    def __init__(self, store: ParamStore, name: str, dim: int, heads: int, layers: int, dropout: float = 0.0,
                 attention_dropout: float = 0.0):
        self.dim = dim
        self.blocks = [
            SubstructureBlock(store, f'{name}.{index}', dim, heads, dropout, attention_dropout)
            for index in range(layers)
        ]
        self.skip = FeedForward(store, f'{name}.skip', 2 * dim, dim, dim, dropout)

    def __call__(self, x_s: Tensor, mode: Mode = Mode()) -> Tensor:
        return substructure_encoder(x_s, self, mode)


def substructure_encoder(x_s: Tensor, encoder: SubstructureEncoder, mode: Mode = Mode()) -> Tensor:
    """Post-norm transformer blocks over clusters, then the long-range skip ``FFN(H⁰ ‖ H^L)``."""
    if x_s.ndim != 2 or x_s.shape[1] != encoder.dim or x_s.shape[0] < 1:
        raise ShapeMismatchException(f'expected (C, {encoder.dim}) with C >= 1, got {x_s.shape}', 'X_s')

    h = x_s
    for block in encoder.blocks:
        h = block(h, mode)

    return encoder.skip(ag.concat([x_s, h], axis=1), mode)


def aggregate(h_s: Tensor, zeta: str) -> Tensor:
    if zeta == 'sum':
        return h_s.sum(axis=0)
    if zeta == 'mean':
        return h_s.mean(axis=0)
    if zeta == 'max':
        return h_s.max(axis=0)

    raise ConfigException(f'unknown readout "{zeta}"', 'readout')


def readout(h_s: Tensor, zeta: str, head: FeedForward, mode: Mode = Mode()):
    """``(z, ŷ)`` with ``z = ζ(H_s)`` over rows and ``ŷ = FFN(z)``."""
    z = aggregate(h_s, zeta)
    prediction = head(z.reshape(1, -1), mode).reshape(-1)
    return z, prediction


class MGT:
    """All parameters of the model, registered in ``store`` in a fixed order."""

    def __init__(self, cfg: MGTConfig, store: ParamStore | None = None):
        self.cfg = cfg
        self.store = ParamStore() if store is None else store
        store = self.store
        width = cfg.width

        self.node_embedding = Linear(store, 'embed.node', cfg.node_features, cfg.embed_dim)
        self.edge_embedding = Linear(store, 'embed.edge', cfg.edge_features, width)
        self.wavelets = None
        self.positional = None
        if cfg.positional == 'wavepe':
            extra = cfg.node_features + cfg.edge_features if cfg.wavelet_features else 0
            self.wavelets = WaveletEncoder(store, 'wavelets', len(cfg.scales), cfg.wavelet_layers, extra_channels=extra)

        if cfg.positional != 'none':
            self.positional = Linear(store, 'positional', cfg.positional_inputs, cfg.positional_dim)

        self.gps = [
            GPSLayer(store, f'gps.{index}', width, cfg.heads, cfg.dropout, cfg.attention_dropout)
            for index in range(cfg.atom_layers)
        ]
        self.clustering = ClusterNetwork(store, 'cluster', width, cfg.clusters, cfg.dropout)
        self.substructures = SubstructureEncoder(
            store, 'substructure', width, cfg.heads, cfg.substructure_layers, cfg.dropout, cfg.attention_dropout,
        )
        self.head = FeedForward(store, 'head', width, width, cfg.outputs, cfg.dropout)
        logger.debug('model built with %d parameters', store.count())

    def freeze_wavelets(self):
        self.store.freeze('wavelets.')

    def __call__(self, g, mode: Mode = Mode()) -> MGTOutput:
        return mgt_forward(g, self, mode)


def build_positional(inputs: GraphInputs, model: MGT, mode: Mode = Mode()) -> Tensor | None:
    """n×d_p positional channels, or ``None`` when positional encodings are disabled."""
    cfg = model.cfg
    if cfg.positional == 'none':
        return None

    if cfg.positional not in ('wavepe', 'rwpe', 'lappe'):
        raise ConfigException(f'unknown positional encoding "{cfg.positional}"', 'positional')

    if inputs.positional is None:
        raise ShapeMismatchException(f'inputs were prepared without {cfg.positional} features', 'positional')

    raw = inputs.positional
    if cfg.positional == 'wavepe':
        raw = encode_wavelets(raw, inputs.adjacency, model.wavelets)

    return model.positional(ag.as_tensor(raw))


def embed_nodes(inputs: GraphInputs, model: MGT, mode: Mode = Mode()) -> Tensor:
    """``X⁰ := concat(X⁰, P)``"""
    x = model.node_embedding(ag.as_tensor(inputs.graph.node_features))
    positional = build_positional(inputs, model, mode)
    return x if positional is None else ag.concat([x, positional], axis=1)


def mgt_forward(g, model: MGT, mode: Mode = Mode()) -> MGTOutput:
    inputs = g if isinstance(g, GraphInputs) else prepare_inputs(g, model.cfg)
    x = embed_nodes(inputs, model, mode)
    e = model.edge_embedding(ag.as_tensor(inputs.edge_features))
    for layer in model.gps:
        x, e = layer(x, e, inputs, mode)

    z, assignment = learn_to_cluster(x, e, inputs, model.clustering, mode)
    h_s = substructure_encoder(coarsen(z, assignment), model.substructures, mode)
    graph_embedding, prediction = readout(h_s, model.cfg.readout, model.head, mode)
    return MGTOutput(
        prediction=prediction,
        graph_embedding=graph_embedding,
        substructure_embeddings=h_s,
        assignment=assignment,
        atom_embeddings=x,
    )


def link_loss(adjacency, s: Tensor) -> Tensor:
    """``‖A − S Sᵀ‖_F``"""
    return ag.frobenius_norm(ag.as_tensor(adjacency) - ag.einsum('ic,jc->ij', s, s))


def entropy_loss(s: Tensor) -> Tensor:
    """Mean row entropy of S in nats."""
    return -ag.xlogx(s).sum(axis=1).mean()


def task_loss(prediction: Tensor, target: np.ndarray, task: str) -> Tensor:
    if task == 'regression':
        error = prediction - target
        return (error * error).mean()

    if task == 'multilabel':
        if not np.all((target == 0) | (target == 1)):
            raise ConfigException('multilabel targets must be 0 or 1', 'target')

        # binary cross-entropy with logits
        return (ag.softplus(prediction) - prediction * target).mean()

    raise ConfigException(f'unknown task "{task}"', 'task')


def mgt_loss(out: MGTOutput, target, adjacency, cfg: MGTConfig) -> LossBreakdown:
    """``L = L1 + λ1·‖A − S Sᵀ‖_F + λ2·mean_i H(S_i)``"""
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.shape != out.prediction.shape:
        raise ShapeMismatchException(f'target of width {target.shape[0]} for {out.prediction.shape[0]} outputs',
                                     'target')

    s = out.assignment.matrix
    l1 = task_loss(out.prediction, target, cfg.task)
    link = link_loss(adjacency, s)
    entropy = entropy_loss(s)
    total = l1 + link * cfg.lambda_link + entropy * cfg.lambda_entropy
    return LossBreakdown(total=total, l1=l1, link=link, entropy=entropy)


def fit_assignment(adjacency, clusters: int, lambda_link: float = 1.0, lambda_entropy: float = 0.1,
                   steps: int = 500, lr: float = 0.01, seed: int = 0):
    """Optimize a free assignment ``S = softmax(logits)`` against the link and entropy terms alone.

    Logits start as small Gaussian noise, so S starts near uniform.
    Returns the final assignment and the per-step objective values.
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if clusters < 1:
        raise ConfigException(f'at least one cluster is required, got {clusters}', 'clusters')

    rng = np.random.default_rng(seed)
    store = ParamStore(rng)
    logits = store.tensor('logits', 0.01 * rng.standard_normal((adjacency.shape[0], clusters)))
    optimizer = Adam(store, lr=lr)
    history = []
    for _ in range(steps):
        store.zero_grad()
        s = ag.softmax(logits, axis=1)
        loss = link_loss(adjacency, s) * lambda_link + entropy_loss(s) * lambda_entropy
        loss.backward()
        optimizer.step()
        history.append(loss.item())

    with ag.no_grad():
        assignment = ClusterAssignment(ag.softmax(logits, axis=1))

    return assignment, history

"""Training loop, evaluation and export of embeddings and cluster assignments."""
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mgt import autograd as ag
from mgt.checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from mgt.config import TrainConfig, config_hash
from mgt.data import Dataset, load_dataset
from mgt.equivariant import encode_wavelets
from mgt.exceptions import ConfigException, DatasetException, NonFiniteLossException
from mgt.graph import Graph
from mgt.layers import Mode
from mgt.metrics import metric_ap, metric_mae
from mgt.model import MGT, mgt_forward, mgt_loss, prepare_inputs, wavelet_inputs
from mgt.optim import Adam
from mgt.params import ParamStore

logger = logging.getLogger(__name__)

LOG_HEADER = ('epoch', 'total', 'l1', 'link', 'entropy', 'val_metric')


@dataclass(frozen=True)
class TargetScaler:
    """Affine standardization of targets; identity unless fitted."""
    mean: tuple = ()
    std: tuple = ()

    @classmethod
    def fit(cls, targets: np.ndarray):
        std = targets.std(axis=0)
        std[std == 0] = 1.0
        return cls(mean=tuple(targets.mean(axis=0).tolist()), std=tuple(std.tolist()))

    @classmethod
    def from_stats(cls, stats: dict | None):
        return cls() if not stats else cls(mean=tuple(stats['mean']), std=tuple(stats['std']))

    def stats(self) -> dict | None:
        return {'mean': list(self.mean), 'std': list(self.std)} if self.mean else None

    def transform(self, target: np.ndarray) -> np.ndarray:
        return (target - np.array(self.mean)) / np.array(self.std) if self.mean else target

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * np.array(self.std) + np.array(self.mean) if self.mean else values


@dataclass
class TrainResult:
    checkpoint: Path
    log: Path
    best_epoch: int
    best_metric: float
    history: list = field(default_factory=list)


def seed_streams(seed: int):
    """Independent generators for initialization, dropout and shuffling."""
    init, dropout, shuffle = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(dropout), np.random.default_rng(shuffle)


def predict(model: MGT, inputs: list, scaler: TargetScaler = TargetScaler()) -> np.ndarray:
    with ag.no_grad():
        rows = [mgt_forward(item, model, Mode()).prediction.data for item in inputs]

    return scaler.inverse(np.array(rows).reshape(len(inputs), model.cfg.outputs))


def score(model: MGT, inputs: list, targets: np.ndarray, scaler: TargetScaler = TargetScaler()) -> float:
    predictions = predict(model, inputs, scaler)
    if model.cfg.task == 'multilabel':
        return metric_ap(predictions, targets)

    return metric_mae(predictions, targets)


def _improved(value: float, best: float | None, task: str) -> bool:
    if best is None:
        return True

    return value > best if task == 'multilabel' else value < best


def _check_finite(losses, epoch: int, index: int):
    values = losses.values()
    if all(math.isfinite(value) for value in values.values()):
        return

    logger.warning('non-finite loss at epoch %d, graph %d: %s', epoch, index, values)
    raise NonFiniteLossException(f'loss components {values}', f'epoch {epoch} graph {index}')


def train(cfg: TrainConfig, dataset: Dataset | None = None) -> TrainResult:
    """Minimize the composite objective with Adam; keep the checkpoint of the best validation epoch."""
    dataset = load_dataset(cfg.data) if dataset is None else dataset
    model_cfg = cfg.model.with_inputs(dataset.node_width, dataset.edge_width)
    if model_cfg.outputs != dataset.target_width:
        raise ConfigException(f'{model_cfg.outputs} outputs for targets of width {dataset.target_width}',
                              'config.model.outputs')

    train_indices = dataset.indices('train')
    if not train_indices:
        raise DatasetException('the train split is empty', 'splits.train')

    val_split = 'val' if dataset.indices('val') else 'train'
    val_indices = dataset.indices(val_split)
    val_targets = np.array([dataset.graphs[index].target for index in val_indices])
    if model_cfg.task == 'multilabel' and not np.any(val_targets == 1):
        raise DatasetException('no graph in the validation split has a positive label', f'splits.{val_split}')

    init_rng, dropout_rng, shuffle_rng = seed_streams(cfg.seed)
    model = MGT(model_cfg, ParamStore(init_rng))
    if cfg.freeze_wavelets:
        model.freeze_wavelets()

    optimizer = Adam(model.store, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    scaler = TargetScaler.fit(dataset.targets('train')) if cfg.normalize_targets else TargetScaler()
    inputs = {index: prepare_inputs(dataset.graphs[index], model_cfg) for index in set(train_indices + val_indices)}
    digest = config_hash(cfg)
    mode = Mode(train=True, rng=dropout_rng)

    checkpoint_path = Path(cfg.checkpoint)
    log_path = Path(cfg.log)
    for path in (checkpoint_path, log_path):
        path.parent.mkdir(parents=True, exist_ok=True)

    logger.info('training %d parameters on %d graphs for %d epochs', model.store.count(), len(train_indices),
                cfg.epochs)
    result = TrainResult(checkpoint=checkpoint_path, log=log_path, best_epoch=0, best_metric=math.nan)
    best = None
    with open(log_path, 'w', newline='', encoding='utf-8') as log_file:
        writer = csv.writer(log_file, lineterminator='\n')
        writer.writerow(LOG_HEADER)
        for epoch in range(1, cfg.epochs + 1):
            order = [train_indices[i] for i in shuffle_rng.permutation(len(train_indices))]
            sums = dict.fromkeys(('total', 'l1', 'link', 'entropy'), 0.0)
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                model.store.zero_grad()
                for index in batch:
                    graph = dataset.graphs[index]
                    out = mgt_forward(inputs[index], model, mode)
                    losses = mgt_loss(out, scaler.transform(graph.target), graph.adjacency, model_cfg)
                    _check_finite(losses, epoch, index)
                    # batch gradients are averaged
                    (losses.total * (1.0 / len(batch))).backward()
                    for name, value in losses.values().items():
                        sums[name] += value

                optimizer.step()

            means = {name: value / len(order) for name, value in sums.items()}
            val_metric = score(model, [inputs[index] for index in val_indices], val_targets, scaler)
            writer.writerow([epoch, means['total'], means['l1'], means['link'], means['entropy'], val_metric])
            result.history.append({'epoch': epoch, **means, 'val_metric': val_metric})
            logger.info('epoch %d: total %.6f l1 %.6f link %.6f entropy %.6f val %.6f', epoch, means['total'],
                        means['l1'], means['link'], means['entropy'], val_metric)

            if _improved(val_metric, best, model_cfg.task):
                best = val_metric
                result.best_epoch = epoch
                result.best_metric = val_metric
                save_checkpoint(checkpoint_path, model, digest, cfg.seed, scaler.stats())

    logger.info('best validation metric %.6f at epoch %d', result.best_metric, result.best_epoch)
    return result


def _resolve(checkpoint: Checkpoint | Path | str) -> Checkpoint:
    return checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)


def _check_dataset(checkpoint: Checkpoint, dataset: Dataset):
    cfg = checkpoint.config
    if (dataset.node_width, dataset.edge_width) != (cfg.node_features, cfg.edge_features):
        raise ConfigException(
            f'dataset widths ({dataset.node_width}, {dataset.edge_width}) do not match the checkpoint '
            f'({cfg.node_features}, {cfg.edge_features})', 'dataset',
        )

    if dataset.target_width != cfg.outputs:
        raise ConfigException(f'targets of width {dataset.target_width} for {cfg.outputs} outputs', 'dataset')


def evaluate(checkpoint: Checkpoint | Path | str, dataset: Dataset | Path | str, split: str = 'test') -> dict:
    checkpoint = _resolve(checkpoint)
    dataset = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    _check_dataset(checkpoint, dataset)
    indices = dataset.indices(split)
    if not indices:
        raise DatasetException(f'split "{split}" is empty', f'splits.{split}')

    model = restore_model(checkpoint)
    scaler = TargetScaler.from_stats(checkpoint.target_stats)
    inputs = [prepare_inputs(dataset.graphs[index], model.cfg) for index in indices]
    targets = dataset.targets(split)
    report = {
        'split': split,
        'count': len(indices),
        'metric': 'ap' if model.cfg.task == 'multilabel' else 'mae',
        'value': score(model, inputs, targets, scaler),
        'seed': checkpoint.seed,
        'config_hash': checkpoint.config_hash,
    }
    if model.cfg.task == 'regression' and dataset.indices('train'):
        baseline = np.broadcast_to(dataset.targets('train').mean(axis=0), targets.shape)
        report['baseline_mae'] = metric_mae(baseline, targets)

    return report


def export_clusters(checkpoint: Checkpoint | Path | str, graph: Graph) -> dict:
    """Soft assignment S and the hard label of every node."""
    model = restore_model(_resolve(checkpoint))
    with ag.no_grad():
        assignment = mgt_forward(prepare_inputs(graph, model.cfg), model, Mode()).assignment

    return {
        'n': graph.n,
        'clusters': assignment.clusters,
        'S': assignment.matrix.data.tolist(),
        'labels': [int(label) for label in assignment.hard_labels],
    }


def export_wavelet_encoding(checkpoint: Checkpoint | Path | str, graph: Graph) -> dict:
    """Rows of the trained wavelet encoder for one graph, before the positional projection."""
    model = restore_model(_resolve(checkpoint))
    if model.wavelets is None:
        raise ConfigException(f'checkpoint uses "{model.cfg.positional}" positional encodings, not wavepe',
                              'checkpoint')

    with ag.no_grad():
        rows = encode_wavelets(wavelet_inputs(graph, model.cfg), graph.adjacency, model.wavelets).data

    return {'scales': list(model.cfg.scales), 'rows': rows}


def embed(checkpoint: Checkpoint | Path | str, dataset: Dataset | Path | str) -> str:
    """Graph embeddings z as CSV: ``graph,split,z0,z1,...``."""
    checkpoint = _resolve(checkpoint)
    dataset = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    _check_dataset(checkpoint, dataset)
    model = restore_model(checkpoint)
    membership = {index: name for name in ('train', 'val', 'test') for index in dataset.indices(name)}

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['graph', 'split'] + [f'z{i}' for i in range(model.cfg.width)])
    with ag.no_grad():
        for index, graph in enumerate(dataset.graphs):
            z = mgt_forward(prepare_inputs(graph, model.cfg), model, Mode()).graph_embedding.data
            writer.writerow([index, membership.get(index, '')] + z.tolist())

    return buffer.getvalue()

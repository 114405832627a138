import numpy as np

from mgt.exceptions import MetricException, ShapeMismatchException


def _as_columns(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return values[:, None] if values.ndim == 1 else values


def metric_mae(pred, target) -> float:
    pred, target = _as_columns(pred), _as_columns(target)
    if pred.shape != target.shape:
        raise ShapeMismatchException(f'predictions {pred.shape} against targets {target.shape}', 'pred')

    if pred.size == 0:
        raise MetricException('mean absolute error of nothing', 'pred')

    return float(np.mean(np.abs(pred - target)))


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """AP of one class: mean precision@k over the ranks k holding a positive.

    Scores are ranked in descending order, equal scores by ascending index.
    """
    order = np.argsort(-scores, kind='stable')
    hits = labels[order] > 0
    ranks = np.arange(1, len(order) + 1)
    precision = np.cumsum(hits) / ranks
    return float(precision[hits].sum() / hits.sum())


def metric_ap(scores, labels) -> float:
    """Macro average of per-class AP over the classes with at least one positive."""
    scores, labels = _as_columns(scores), _as_columns(labels)
    if scores.shape != labels.shape:
        raise ShapeMismatchException(f'scores {scores.shape} against labels {labels.shape}', 'scores')

    if not np.all((labels == 0) | (labels == 1)):
        raise MetricException('labels must be 0 or 1', 'labels')

    values = [
        average_precision(scores[:, column], labels[:, column])
        for column in range(labels.shape[1])
        if labels[:, column].any()
    ]
    if not values:
        raise MetricException('no class has a positive label', 'labels')

    return float(np.mean(values))

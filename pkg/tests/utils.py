import numpy as np

from mgt.graph import Graph


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4, node_width: int = 2, edge_width: int = 1,
                 connected: bool = False) -> Graph:
    """Erdős–Rényi graph; ``connected`` adds a random spanning path first."""
    pairs = set()
    if connected:
        order = rng.permutation(n)
        pairs.update(tuple(sorted((int(a), int(b)))) for a, b in zip(order[:-1], order[1:]))

    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                pairs.add((i, j))

    edges = sorted(pairs)
    return Graph.from_edges(
        node_features=rng.standard_normal((n, node_width)),
        edges=edges,
        edge_features=rng.standard_normal((len(edges), edge_width)),
        target=[float(rng.standard_normal())],
    )


def path_graph(n: int) -> Graph:
    return Graph.from_edges(np.ones((n, 1)), [(i, i + 1) for i in range(n - 1)])


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(np.ones((n, 1)), [(i, j) for i in range(n) for j in range(i + 1, n)])


def numeric_gradient(loss, tensor, step: float = 1e-5, entries=None) -> np.ndarray:
    """Central differences of ``loss()`` with respect to ``tensor.data``.

    Only ``entries`` (flat indices) are perturbed when given; the rest stay zero.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    grad_flat = grad.reshape(-1)
    for index in range(flat.size) if entries is None else entries:
        original = flat[index]
        flat[index] = original + step
        plus = loss()
        flat[index] = original - step
        minus = loss()
        flat[index] = original
        grad_flat[index] = (plus - minus) / (2.0 * step)

    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale < 1e-10:
        return 0.0

    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(loss_tensor, params: dict, step: float = 1e-5, max_entries: int | None = None,
                    rng: np.random.Generator | None = None) -> dict:
    """Relative error of the recorded gradient against central differences, per parameter.

    ``loss_tensor`` builds the scalar loss as a tensor from the current
    parameter values.
    """
    for tensor in params.values():
        tensor.grad = None

    loss_tensor().backward()
    rng = np.random.default_rng(0) if rng is None else rng
    errors = {}
    for name, tensor in params.items():
        analytic = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad.copy()
        entries = None
        if max_entries is not None and tensor.size > max_entries:
            entries = rng.choice(tensor.size, size=max_entries, replace=False)

        numeric = numeric_gradient(lambda: loss_tensor().item(), tensor, step, entries)
        if entries is not None:
            mask = np.zeros(tensor.size, dtype=bool)
            mask[entries] = True
            analytic = analytic.reshape(-1)[mask]
            numeric = numeric.reshape(-1)[mask]

        errors[name] = relative_error(analytic, numeric)

    return errors

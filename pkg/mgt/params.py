"""Named parameter storage with deterministic creation order."""
from collections import OrderedDict

import numpy as np

from mgt.autograd import Tensor, parameter
from mgt.exceptions import CheckpointException, ConfigException, ShapeMismatchException


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class ParamStore:
    """Trainable tensors and non-trainable buffers, iterated in creation order.

    ``state`` holds per-parameter optimizer slots keyed by parameter name.
    Parameters whose name starts with a frozen prefix are skipped by
    ``trainable()``.
    """

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = np.random.default_rng(0) if rng is None else rng
        self.params = OrderedDict()
        self.buffers = OrderedDict()
        self.state = {}
        self.frozen_prefixes = set()

    def __len__(self):
        return len(self.params)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def _check_new(self, name: str):
        if name in self.params or name in self.buffers:
            raise ConfigException(f'name "{name}" registered twice', name)

    def weight(self, name: str, fan_out: int, fan_in: int) -> Tensor:
        self._check_new(name)
        tensor = parameter(glorot_uniform(self.rng, fan_out, fan_in), name=name)
        self.params[name] = tensor
        return tensor

    def constant(self, name: str, shape, value: float = 0.0) -> Tensor:
        self._check_new(name)
        tensor = parameter(np.full(shape, value, dtype=np.float64), name=name)
        self.params[name] = tensor
        return tensor

    def tensor(self, name: str, value: np.ndarray) -> Tensor:
        self._check_new(name)
        tensor = parameter(value, name=name)
        self.params[name] = tensor
        return tensor

    def buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self._check_new(name)
        self.buffers[name] = np.array(value, dtype=np.float64)
        return self.buffers[name]

    def freeze(self, prefix: str):
        self.frozen_prefixes.add(prefix)

    def is_frozen(self, name: str) -> bool:
        return any(name.startswith(prefix) for prefix in self.frozen_prefixes)

    def trainable(self):
        for name, tensor in self.params.items():
            if not self.is_frozen(name):
                yield name, tensor

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.grad = None

    def grads(self) -> dict:
        """Current gradients, zeros where a parameter received none."""
        return {
            name: np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad
            for name, tensor in self.params.items()
        }

    def count(self) -> int:
        return sum(tensor.size for tensor in self.params.values())

    def arrays(self):
        """``(name, array)`` pairs: parameters first, then buffers."""
        for name, tensor in self.params.items():
            yield name, tensor.data

        for name, value in self.buffers.items():
            yield name, value

    def load_arrays(self, arrays: dict):
        expected = [name for name, _ in self.arrays()]
        missing = [name for name in expected if name not in arrays]
        unknown = [name for name in arrays if name not in expected]
        if missing or unknown:
            raise CheckpointException(f'missing {missing}, unexpected {unknown}', 'params')

        for name, value in arrays.items():
            target = self.params[name].data if name in self.params else self.buffers[name]
            if target.shape != value.shape:
                raise ShapeMismatchException(f'{value.shape} does not match {target.shape}', f'param {name}')

            target[...] = value
